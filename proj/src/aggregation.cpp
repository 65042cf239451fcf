#include "normkit/aggregation.hpp"

#include "normkit/errors.hpp"

#include <algorithm>

namespace normkit {

std::string_view to_string(Strategy s) {
    switch (s) {
    case Strategy::PoE:
        return "poe";
    case Strategy::MoE:
        return "moe";
    case Strategy::gPoE:
        return "gpoe";
    case Strategy::MoPoE:
        return "mopoe";
    }
    return "?";
}

Strategy parse_strategy(std::string_view name) {
    for (Strategy s : kAllStrategies) {
        if (to_string(s) == name) {
            return s;
        }
    }
    throw ArgumentError("unknown aggregation strategy '" + std::string(name) + "'");
}

std::vector<Subset> powerset_subsets(std::size_t n_modalities, bool include_empty) {
    if (n_modalities == 0) {
        throw ArgumentError("powerset_subsets: need at least one modality");
    }
    if (n_modalities > 20) {
        throw ArgumentError("powerset_subsets: too many modalities");
    }
    std::vector<Subset> out;
    const std::size_t total = std::size_t{1} << n_modalities;
    out.reserve(total);
    for (std::size_t mask = include_empty ? 0 : 1; mask < total; ++mask) {
        Subset s;
        for (std::size_t i = 0; i < n_modalities; ++i) {
            if (mask & (std::size_t{1} << i)) {
                s.push_back(i);
            }
        }
        out.push_back(std::move(s));
    }
    std::stable_sort(out.begin(), out.end(), [](const Subset& a, const Subset& b) {
        if (a.size() != b.size()) {
            return a.size() < b.size();
        }
        return a < b;
    });
    return out;
}

AggregationPlan make_plan(std::size_t n_modalities, Strategy strategy, const AggregationOptions& opts) {
    if (n_modalities == 0) {
        throw ArgumentError("aggregate: need at least one unimodal posterior");
    }
    AggregationPlan plan;
    plan.strategy = strategy;
    Subset all(n_modalities);
    for (std::size_t i = 0; i < n_modalities; ++i) {
        all[i] = i;
    }
    switch (strategy) {
    case Strategy::PoE:
        plan.components.push_back({all, true, 1.0});
        break;
    case Strategy::gPoE:
        plan.components.push_back({all, true, 1.0 / static_cast<double>(n_modalities)});
        break;
    case Strategy::MoE:
        plan.mixture = true;
        for (std::size_t i = 0; i < n_modalities; ++i) {
            plan.components.push_back({{i}, false, 1.0});
        }
        break;
    case Strategy::MoPoE:
        plan.mixture = true;
        for (auto& s : powerset_subsets(n_modalities, opts.mopoe_include_empty)) {
            const bool prior = s.empty();
            plan.components.push_back({std::move(s), prior, 1.0});
        }
        break;
    }
    const double w = 1.0 / static_cast<double>(plan.components.size());
    plan.weights.assign(plan.components.size(), w);
    return plan;
}

std::vector<DiagonalGaussian> evaluate_components(const AggregationPlan& plan,
                                                  std::span<const DiagonalGaussian> unimodal) {
    if (unimodal.empty()) {
        throw ArgumentError("aggregate: need at least one unimodal posterior");
    }
    const std::size_t d = unimodal.front().dim();
    for (const auto& u : unimodal) {
        if (u.dim() != d) {
            throw DimensionError("aggregate: unimodal posteriors differ in latent dimension");
        }
    }
    std::vector<DiagonalGaussian> comps;
    comps.reserve(plan.components.size());
    std::vector<DiagonalGaussian> chosen;
    for (const auto& c : plan.components) {
        chosen.clear();
        for (std::size_t e : c.experts) {
            if (e >= unimodal.size()) {
                throw DimensionError("aggregate: plan references a missing modality");
            }
            chosen.push_back(unimodal[e]);
        }
        comps.push_back(product_of_gaussians(chosen, c.include_prior, c.precision_scale, d));
    }
    return comps;
}

JointPosterior aggregate(std::span<const DiagonalGaussian> unimodal, Strategy strategy,
                         const AggregationOptions& opts) {
    const auto plan = make_plan(unimodal.size(), strategy, opts);
    auto comps = evaluate_components(plan, unimodal);
    JointPosterior jp{DiagonalGaussian{}, std::nullopt};
    if (!plan.mixture) {
        jp.form = std::move(comps.front());
        return jp;
    }
    jp.form = GaussianMixture(std::move(comps), plan.weights);
    if (strategy == Strategy::MoPoE) {
        std::vector<Subset> idx;
        for (const auto& c : plan.components) {
            idx.push_back(c.experts);
        }
        jp.subset_index = std::move(idx);
    }
    return jp;
}

double kl_term(const JointPosterior& jp) {
    return jp.is_mixture() ? kl_mixture_bound(jp.mixture()) : kl_to_standard_normal(jp.single());
}

std::string_view to_string(LatentMode m) { return m == LatentMode::Mean ? "mean" : "sample"; }

LatentMode parse_latent_mode(std::string_view name) {
    if (name == "mean") {
        return LatentMode::Mean;
    }
    if (name == "sample") {
        return LatentMode::Sample;
    }
    throw ArgumentError("unknown deviation mode '" + std::string(name) + "'");
}

Vector joint_latent_point(const JointPosterior& jp, LatentMode mode, RngStream& rng) {
    if (jp.is_mixture()) {
        return mode == LatentMode::Mean ? mixture_mean(jp.mixture()) : mixture_sample(jp.mixture(), rng);
    }
    return mode == LatentMode::Mean ? jp.single().mean : reparameterize(jp.single(), rng);
}

} // namespace normkit
