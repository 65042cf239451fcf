#pragma once

#include "normkit/matrix.hpp"
#include "normkit/rng.hpp"

#include <span>
#include <vector>

namespace normkit {

inline constexpr double kLogVarClamp = 20.0;

// Gaussian with diagonal covariance.
struct DiagonalGaussian {
    Vector mean;
    Vector variance;

    DiagonalGaussian() = default;
    DiagonalGaussian(Vector mean, Vector variance);

    static DiagonalGaussian standard(std::size_t dim);
    // variance = exp(clamp(log_variance, -20, 20))
    static DiagonalGaussian from_log_variance(Vector mean, std::span<const double> log_variance);

    std::size_t dim() const { return mean.size(); }
};

// Uniform-or-weighted mixture of equal-dimension diagonal Gaussians.
struct GaussianMixture {
    std::vector<DiagonalGaussian> components;
    Vector weights;

    GaussianMixture() = default;
    GaussianMixture(std::vector<DiagonalGaussian> components, Vector weights);
    static GaussianMixture uniform(std::vector<DiagonalGaussian> components);

    std::size_t dim() const { return components.front().dim(); }
};

// KL(g || N(0, I)) = 1/2 sum(var + mean^2 - 1 - ln var)
double kl_to_standard_normal(const DiagonalGaussian& g);

// mean + sqrt(var) * eps with eps drawn from rng.
Vector reparameterize(const DiagonalGaussian& g, RngStream& rng);
Vector reparameterize(const DiagonalGaussian& g, std::span<const double> eps);

// Precision-weighted product of experts, optionally times the N(0, I) prior.
// `precision_scale` multiplies every expert precision (1/N for gPoE).
// With no experts the result is the prior itself, of dimension `prior_dim`.
DiagonalGaussian product_of_gaussians(std::span<const DiagonalGaussian> experts,
                                      bool include_prior, double precision_scale = 1.0,
                                      std::size_t prior_dim = 0);

Vector mixture_mean(const GaussianMixture& m);
// Picks component k with probability w_k, then reparameterizes.
Vector mixture_sample(const GaussianMixture& m, RngStream& rng);

// sum_k w_k KL(component_k || N(0, I)); upper bound on the mixture KL.
double kl_mixture_bound(const GaussianMixture& m);

// Log density of a diagonal Gaussian / mixture at x.
double log_density(const DiagonalGaussian& g, std::span<const double> x);
double log_density(const GaussianMixture& m, std::span<const double> x);

} // namespace normkit
