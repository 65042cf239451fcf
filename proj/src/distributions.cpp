#include "normkit/distributions.hpp"

#include "normkit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace normkit {

DiagonalGaussian::DiagonalGaussian(Vector m, Vector v) : mean(std::move(m)), variance(std::move(v)) {
    if (mean.size() != variance.size()) {
        throw DimensionError("DiagonalGaussian: mean and variance lengths differ");
    }
    for (std::size_t i = 0; i < mean.size(); ++i) {
        if (!std::isfinite(mean[i])) {
            throw NumericError("DiagonalGaussian: non-finite mean at " + std::to_string(i));
        }
        if (!(variance[i] > 0.0) || !std::isfinite(variance[i])) {
            throw NumericError("DiagonalGaussian: variance must be positive and finite at " +
                               std::to_string(i));
        }
    }
}

DiagonalGaussian DiagonalGaussian::standard(std::size_t dim) {
    return {Vector(dim, 0.0), Vector(dim, 1.0)};
}

DiagonalGaussian DiagonalGaussian::from_log_variance(Vector mean, std::span<const double> log_variance) {
    Vector var(log_variance.size());
    for (std::size_t i = 0; i < var.size(); ++i) {
        var[i] = std::exp(std::clamp(log_variance[i], -kLogVarClamp, kLogVarClamp));
    }
    return {std::move(mean), std::move(var)};
}

GaussianMixture::GaussianMixture(std::vector<DiagonalGaussian> comps, Vector w)
    : components(std::move(comps)), weights(std::move(w)) {
    if (components.empty()) {
        throw ArgumentError("GaussianMixture: no components");
    }
    if (components.size() != weights.size()) {
        throw DimensionError("GaussianMixture: weight count differs from component count");
    }
    const std::size_t d = components.front().dim();
    for (const auto& c : components) {
        if (c.dim() != d) {
            throw DimensionError("GaussianMixture: components differ in dimension");
        }
    }
    double total = 0.0;
    for (double x : weights) {
        if (!(x >= 0.0)) {
            throw ArgumentError("GaussianMixture: negative weight");
        }
        total += x;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw ArgumentError("GaussianMixture: weights do not sum to 1");
    }
}

GaussianMixture GaussianMixture::uniform(std::vector<DiagonalGaussian> comps) {
    const double w = 1.0 / static_cast<double>(comps.size());
    Vector weights(comps.size(), w);
    return {std::move(comps), std::move(weights)};
}

double kl_to_standard_normal(const DiagonalGaussian& g) {
    double kl = 0.0;
    for (std::size_t i = 0; i < g.dim(); ++i) {
        const double v = g.variance[i];
        kl += v + g.mean[i] * g.mean[i] - 1.0 - std::log(v);
    }
    return 0.5 * kl;
}

Vector reparameterize(const DiagonalGaussian& g, RngStream& rng) {
    Vector eps(g.dim());
    for (double& e : eps) {
        e = rng.normal();
    }
    return reparameterize(g, eps);
}

Vector reparameterize(const DiagonalGaussian& g, std::span<const double> eps) {
    if (eps.size() != g.dim()) {
        throw DimensionError("reparameterize: noise length differs from dimension");
    }
    Vector z(g.dim());
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = g.mean[i] + std::sqrt(g.variance[i]) * eps[i];
    }
    return z;
}

DiagonalGaussian product_of_gaussians(std::span<const DiagonalGaussian> experts, bool include_prior,
                                      double precision_scale, std::size_t prior_dim) {
    if (experts.empty() && !include_prior) {
        throw ArgumentError("product_of_gaussians: no experts and no prior");
    }
    if (!(precision_scale > 0.0)) {
        throw ArgumentError("product_of_gaussians: precision scale must be positive");
    }
    if (experts.empty()) {
        if (prior_dim == 0) {
            throw ArgumentError("product_of_gaussians: prior-only product needs a dimension");
        }
        return DiagonalGaussian::standard(prior_dim);
    }
    const std::size_t d = experts.front().dim();
    for (const auto& e : experts) {
        if (e.dim() != d) {
            throw DimensionError("product_of_gaussians: experts differ in dimension");
        }
    }
    if (experts.size() == 1 && !include_prior && precision_scale == 1.0) {
        return experts.front();
    }
    Vector mean(d), var(d);
    for (std::size_t i = 0; i < d; ++i) {
        double precision = include_prior ? 1.0 : 0.0;
        double weighted = 0.0;
        for (const auto& e : experts) {
            const double p = precision_scale / e.variance[i];
            precision += p;
            weighted += p * e.mean[i];
        }
        var[i] = 1.0 / precision;
        mean[i] = weighted * var[i];
    }
    return {std::move(mean), std::move(var)};
}

Vector mixture_mean(const GaussianMixture& m) {
    Vector mean(m.dim(), 0.0);
    for (std::size_t k = 0; k < m.components.size(); ++k) {
        for (std::size_t i = 0; i < mean.size(); ++i) {
            mean[i] += m.weights[k] * m.components[k].mean[i];
        }
    }
    return mean;
}

Vector mixture_sample(const GaussianMixture& m, RngStream& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t pick = m.components.size() - 1;
    for (std::size_t k = 0; k < m.components.size(); ++k) {
        acc += m.weights[k];
        if (u < acc) {
            pick = k;
            break;
        }
    }
    return reparameterize(m.components[pick], rng);
}

double kl_mixture_bound(const GaussianMixture& m) {
    double kl = 0.0;
    for (std::size_t k = 0; k < m.components.size(); ++k) {
        kl += m.weights[k] * kl_to_standard_normal(m.components[k]);
    }
    return kl;
}

double log_density(const DiagonalGaussian& g, std::span<const double> x) {
    if (x.size() != g.dim()) {
        throw DimensionError("log_density: length mismatch");
    }
    double lp = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = x[i] - g.mean[i];
        lp += -0.5 * (std::log(2.0 * std::numbers::pi * g.variance[i]) + r * r / g.variance[i]);
    }
    return lp;
}

double log_density(const GaussianMixture& m, std::span<const double> x) {
    std::vector<double> terms(m.components.size());
    double hi = -INFINITY;
    for (std::size_t k = 0; k < terms.size(); ++k) {
        terms[k] = std::log(m.weights[k]) + log_density(m.components[k], x);
        hi = std::max(hi, terms[k]);
    }
    double s = 0.0;
    for (double t : terms) {
        s += std::exp(t - hi);
    }
    return hi + std::log(s);
}

} // namespace normkit
