#pragma once

#include "normkit/distributions.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace normkit {

enum class Strategy { PoE, MoE, gPoE, MoPoE };

// "poe", "moe", "gpoe", "mopoe"
std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);
inline constexpr Strategy kAllStrategies[] = {Strategy::PoE, Strategy::MoE, Strategy::gPoE,
                                              Strategy::MoPoE};

// 0-based modality indices.
using Subset = std::vector<std::size_t>;

// All subsets of {0..n-1}, ordered by size then lexicographically.
std::vector<Subset> powerset_subsets(std::size_t n_modalities, bool include_empty);

struct AggregationOptions {
    // MoPoE: keep the empty subset as a prior component (weight 1/2^N).
    bool mopoe_include_empty = true;
};

// One mixture component (or the single posterior) expressed as a product over
// a subset of the unimodal experts.
struct ComponentPlan {
    Subset experts;
    bool include_prior = false;
    double precision_scale = 1.0;
};

// Structure of the joint posterior, independent of the expert values. The
// model's backward pass walks the same plan that `aggregate` evaluates.
struct AggregationPlan {
    Strategy strategy = Strategy::MoPoE;
    bool mixture = false;
    std::vector<ComponentPlan> components;
    Vector weights;
};

AggregationPlan make_plan(std::size_t n_modalities, Strategy strategy,
                          const AggregationOptions& opts = {});

struct JointPosterior {
    std::variant<DiagonalGaussian, GaussianMixture> form;
    // Present only for MoPoE: the modality subset behind each component.
    std::optional<std::vector<Subset>> subset_index;

    bool is_mixture() const { return std::holds_alternative<GaussianMixture>(form); }
    const DiagonalGaussian& single() const { return std::get<DiagonalGaussian>(form); }
    const GaussianMixture& mixture() const { return std::get<GaussianMixture>(form); }
};

std::vector<DiagonalGaussian> evaluate_components(const AggregationPlan& plan,
                                                  std::span<const DiagonalGaussian> unimodal);

JointPosterior aggregate(std::span<const DiagonalGaussian> unimodal, Strategy strategy,
                         const AggregationOptions& opts = {});

// KL term used in the objective: exact KL for a single Gaussian, the convexity
// bound for a mixture.
double kl_term(const JointPosterior& jp);

enum class LatentMode { Mean, Sample };
std::string_view to_string(LatentMode m);
LatentMode parse_latent_mode(std::string_view name);

Vector joint_latent_point(const JointPosterior& jp, LatentMode mode, RngStream& rng);

} // namespace normkit
