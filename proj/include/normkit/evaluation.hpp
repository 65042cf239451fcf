#pragma once

#include "normkit/cohort.hpp"
#include "normkit/deviation.hpp"
#include "normkit/matrix.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

namespace normkit {

struct MvnModel;

struct LikelihoodRatio {
    double value = 0.0;
    double disease_fraction = 0.0;
    double holdout_fraction = 0.0;
    // Holdout had no outliers; 0.5 / N_holdout was used as its fraction.
    bool corrected = false;
};

// Positive likelihood ratio: outlier fraction among disease subjects over the
// outlier fraction among holdout controls.
LikelihoodRatio likelihood_ratio(const std::vector<bool>& disease_flags, const std::vector<bool>& holdout_flags);

// (mean_a - mean_b) / pooled sd.
double cohens_d(std::span<const double> a, std::span<const double> b);

// Benjamini-Hochberg step-up; mask in input order.
std::vector<bool> bh_fdr(std::span<const double> pvals, double q);

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
};
// Two-sided Welch (unequal variance) t-test.
WelchResult welch_test(std::span<const double> a, std::span<const double> b);

struct RegressionResult {
    double slope = 0.0;
    double intercept = 0.0;
    Vector covariate_coefs;
    double slope_se = 0.0;
    double slope_t = 0.0;
    double slope_p = 1.0;
    // Pearson correlation of covariate-adjusted y and x.
    double r = 0.0;
    std::size_t n = 0;
};

// OLS of y on [1, x, covariates]; DegenerateError on a singular design.
RegressionResult adjusted_regression(std::span<const double> y, std::span<const double> x, const Matrix& covariates);

// Dimensions (0-based, ascending) whose mean |Z| over rows exceeds threshold.
std::vector<std::size_t> select_significant_dims(const Matrix& z_latent, double threshold = 1.96);

struct EffectMap {
    Stage stage = Stage::Stage1; // compared against training controls
    std::vector<std::size_t> modality; // per region (0-based)
    std::vector<std::size_t> region;   // region index within its modality (0-based)
    Vector cohens_d;                   // stage minus control
    Vector p_value;                    // Welch, control vs stage
    std::vector<bool> significant;     // survived BH-FDR
};

// Feature-space deviations of the selectively decoded reconstructions:
// latents are masked to `selected` with covariates zeroed, squared errors are
// z-scored against training controls, and each region is tested control vs
// stage with Welch + BH-FDR at q.
std::vector<EffectMap> effect_maps(const MvnModel& model, const Cohort& cohort, const Matrix& latents,
                                   const std::vector<std::size_t>& selected, double q = 0.05);

// Z_mf matrix of the selective reconstructions for every row.
Matrix selective_feature_zscores(const MvnModel& model, const Cohort& cohort, const Matrix& latents,
                                 const std::vector<std::size_t>& selected);

struct StageStats {
    Stage stage = Stage::Control;
    std::size_t n = 0;
    double mean_d_latent = 0.0;
    double median_d_latent = 0.0;
    double mean_d_feature = 0.0;
    double median_d_feature = 0.0;
    // min, q1, median, q3, max
    std::array<double, 5> box_latent{};
    std::array<double, 5> box_feature{};
};

struct PairwiseTest {
    Stage a = Stage::Control;
    Stage b = Stage::Control;
    WelchResult latent;
    WelchResult feature;
};

struct GroupSummary {
    std::vector<StageStats> stages;
    std::vector<PairwiseTest> pairs;
};

// Per-stage summaries in the given order and all pairwise Welch tests.
GroupSummary group_summary(const DeviationReport& report, const std::vector<Stage>& order);

// Linear-interpolation quantile (type 7) of unsorted data.
double quantile(std::vector<double> v, double p);

void write_group_summary(const GroupSummary& g, const std::filesystem::path& stages_path,
                         const std::filesystem::path& pairs_path);
void write_effect_maps(const std::vector<EffectMap>& maps, const std::filesystem::path& path);

} // namespace normkit
