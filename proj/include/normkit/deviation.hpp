#pragma once

#include "normkit/aggregation.hpp"
#include "normkit/cohort.hpp"
#include "normkit/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace normkit {

struct MvnModel;

// Healthy-cohort reference statistics for latent points and reconstruction errors.
struct ControlStats {
    Vector latent_mean;
    Matrix latent_cov;
    Matrix latent_chol;
    Vector latent_dim_mean;
    Vector latent_dim_std;
    Vector feature_err_mean;
    Matrix feature_err_cov;
    Matrix feature_err_chol;
    Vector feature_region_mean;
    Vector feature_region_std;
};

struct CovarianceOptions {
    // Added as ridge * (trace / dim) * I.
    double ridge = 1e-6;
    // Feature-space covariance is shrunk toward its diagonal with this weight.
    double feature_shrinkage = 0.1;
};

// Sample mean and covariance (n-1) of a data matrix; no regularization.
std::pair<Vector, Matrix> sample_mean_cov(const Matrix& x);
// Column mean and std (n-1).
std::pair<Vector, Vector> column_mean_std(const Matrix& x);

// Needs at least dim + 2 rows in each matrix. Columns with zero spread are
// kept (their std is 0) so zscores() can name them later.
ControlStats fit_control_stats(const Matrix& latents, const Matrix& errors, const CovarianceOptions& opts = {});

// sqrt((v - mean)^T cov^{-1} (v - mean)) through a Cholesky factor.
double mahalanobis(std::span<const double> v, std::span<const double> mean, const Matrix& cov);
double mahalanobis_chol(std::span<const double> v, std::span<const double> mean, const Matrix& chol);

// (value - mean) / std elementwise; DegenerateError names a zero-std index.
Vector zscores(std::span<const double> values, std::span<const double> mean, std::span<const double> std);

// Upper tail of chi-square(dof) evaluated at d^2.
double p_value_chi2(double d, std::size_t dof);

struct SubjectDeviation {
    std::string subject_id;
    Stage stage = Stage::Control;
    double d_latent = 0.0;
    double p_latent = 1.0;
    bool outlier_latent = false;
    double d_feature = 0.0;
    double p_feature = 1.0;
    bool outlier_feature = false;
    Vector z_latent;
    Vector z_feature;
};

using DeviationReport = std::vector<SubjectDeviation>;

// Scores precomputed latents / errors (row-aligned with `cohort`).
DeviationReport score_points(const Cohort& cohort, const Matrix& latents, const Matrix& errors,
                             const ControlStats& stats, double alpha);

struct ScoreOptions {
    double alpha = 0.001;
    LatentMode mode = LatentMode::Mean;
    std::uint64_t seed = 0;
};

DeviationReport score_cohort(const MvnModel& model, const Cohort& cohort, const ControlStats& stats,
                             const ScoreOptions& opts = {});

// Fits control stats on the training-control rows of `cohort`, then scores
// every row.
struct NormativeFit {
    ControlStats stats;
    DeviationReport report;
    Matrix latents;
    Matrix errors;
};
NormativeFit fit_and_score(const MvnModel& model, const Cohort& cohort, const ScoreOptions& opts = {},
                           const CovarianceOptions& cov = {});

// subject_id,stage,D_ml,p_latent,outlier_latent,D_mf,p_feature,outlier_feature,Z_ml_1..,Z_mf_1..
void write_report(const DeviationReport& report, const std::filesystem::path& path);

} // namespace normkit
