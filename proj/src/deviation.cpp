#include "normkit/deviation.hpp"

#include "normkit/errors.hpp"
#include "normkit/model.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <fstream>

namespace normkit {

std::pair<Vector, Matrix> sample_mean_cov(const Matrix& x) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    if (n < 2) {
        throw InsufficientDataError("covariance needs at least two rows");
    }
    Vector mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < d; ++c) {
            mean[c] += x(i, c);
        }
    }
    for (double& v : mean) {
        v /= static_cast<double>(n);
    }
    Matrix centered = x;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < d; ++c) {
            centered(i, c) -= mean[c];
        }
    }
    Matrix cov = matmul_tn(centered, centered);
    for (double& v : cov.data()) {
        v /= static_cast<double>(n - 1);
    }
    return {std::move(mean), std::move(cov)};
}

std::pair<Vector, Vector> column_mean_std(const Matrix& x) {
    const std::size_t n = x.rows();
    if (n < 2) {
        throw InsufficientDataError("column std needs at least two rows");
    }
    Vector mean(x.cols(), 0.0), sd(x.cols(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < x.cols(); ++c) {
            mean[c] += x(i, c);
        }
    }
    for (double& v : mean) {
        v /= static_cast<double>(n);
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < x.cols(); ++c) {
            const double dlt = x(i, c) - mean[c];
            sd[c] += dlt * dlt;
        }
    }
    for (double& v : sd) {
        v = std::sqrt(v / static_cast<double>(n - 1));
    }
    return {std::move(mean), std::move(sd)};
}

namespace {

Matrix regularize(Matrix cov, double shrink, double ridge) {
    const std::size_t d = cov.rows();
    if (shrink > 0.0) {
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                if (i != j) {
                    cov(i, j) *= 1.0 - shrink;
                }
            }
        }
    }
    double trace = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        trace += cov(i, i);
    }
    const double add = ridge * trace / static_cast<double>(d);
    for (std::size_t i = 0; i < d; ++i) {
        cov(i, i) += add;
    }
    return cov;
}

} // namespace

ControlStats fit_control_stats(const Matrix& latents, const Matrix& errors, const CovarianceOptions& opts) {
    if (!(opts.ridge >= 0.0) || !(opts.feature_shrinkage >= 0.0 && opts.feature_shrinkage <= 1.0)) {
        throw ArgumentError("fit_control_stats: ridge must be >= 0 and shrinkage in [0, 1]");
    }
    if (latents.rows() < latents.cols() + 2) {
        throw InsufficientDataError("fit_control_stats: " + std::to_string(latents.rows()) +
                                    " control rows for latent dimension " + std::to_string(latents.cols()));
    }
    if (errors.rows() < errors.cols() + 2) {
        throw InsufficientDataError("fit_control_stats: " + std::to_string(errors.rows()) +
                                    " control rows for " + std::to_string(errors.cols()) + " regions");
    }
    ControlStats s;
    auto [lm, lc] = sample_mean_cov(latents);
    s.latent_mean = std::move(lm);
    s.latent_cov = regularize(std::move(lc), 0.0, opts.ridge);
    auto [fm, fc] = sample_mean_cov(errors);
    s.feature_err_mean = std::move(fm);
    s.feature_err_cov = regularize(std::move(fc), opts.feature_shrinkage, opts.ridge);
    std::tie(s.latent_dim_mean, s.latent_dim_std) = column_mean_std(latents);
    std::tie(s.feature_region_mean, s.feature_region_std) = column_mean_std(errors);
    try {
        s.latent_chol = cholesky(s.latent_cov);
    } catch (const NumericError& e) {
        throw NumericError(std::string("latent covariance: ") + e.what());
    }
    try {
        s.feature_err_chol = cholesky(s.feature_err_cov);
    } catch (const NumericError& e) {
        throw NumericError(std::string("feature-error covariance: ") + e.what());
    }
    return s;
}

double mahalanobis_chol(std::span<const double> v, std::span<const double> mean, const Matrix& chol) {
    if (v.size() != mean.size() || v.size() != chol.rows()) {
        throw DimensionError("mahalanobis: length mismatch");
    }
    Vector diff(v.size());
    for (std::size_t i = 0; i < diff.size(); ++i) {
        diff[i] = v[i] - mean[i];
    }
    const Vector y = forward_substitute(chol, diff);
    return std::sqrt(dot(y, y));
}

double mahalanobis(std::span<const double> v, std::span<const double> mean, const Matrix& cov) {
    return mahalanobis_chol(v, mean, cholesky(cov));
}

Vector zscores(std::span<const double> values, std::span<const double> mean, std::span<const double> std) {
    if (values.size() != mean.size() || values.size() != std.size()) {
        throw DimensionError("zscores: length mismatch");
    }
    Vector z(values.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (!(std[i] > 0.0)) {
            throw DegenerateError("zscores: zero std at index " + std::to_string(i));
        }
        z[i] = (values[i] - mean[i]) / std[i];
    }
    return z;
}

double p_value_chi2(double d, std::size_t dof) {
    if (dof == 0) {
        throw ArgumentError("p_value_chi2: dof must be >= 1");
    }
    if (!(d >= 0.0)) {
        throw ArgumentError("p_value_chi2: distance must be non-negative");
    }
    if (d == 0.0) {
        return 1.0;
    }
    // floor keeps p strictly positive when the tail underflows
    return std::max(boost::math::gamma_q(0.5 * static_cast<double>(dof), 0.5 * d * d),
                    std::numeric_limits<double>::min());
}

DeviationReport score_points(const Cohort& cohort, const Matrix& latents, const Matrix& errors,
                             const ControlStats& stats, double alpha) {
    if (latents.rows() != cohort.size() || errors.rows() != cohort.size()) {
        throw DimensionError("score_points: rows not aligned with cohort");
    }
    DeviationReport out;
    out.reserve(cohort.size());
    for (std::size_t j = 0; j < cohort.size(); ++j) {
        SubjectDeviation s;
        s.subject_id = cohort.subject_ids[j];
        s.stage = cohort.stages[j];
        s.d_latent = mahalanobis_chol(latents.row(j), stats.latent_mean, stats.latent_chol);
        s.p_latent = p_value_chi2(s.d_latent, latents.cols());
        s.outlier_latent = s.p_latent < alpha;
        s.d_feature = mahalanobis_chol(errors.row(j), stats.feature_err_mean, stats.feature_err_chol);
        s.p_feature = p_value_chi2(s.d_feature, errors.cols());
        s.outlier_feature = s.p_feature < alpha;
        s.z_latent = zscores(latents.row(j), stats.latent_dim_mean, stats.latent_dim_std);
        s.z_feature = zscores(errors.row(j), stats.feature_region_mean, stats.feature_region_std);
        out.push_back(std::move(s));
    }
    return out;
}

DeviationReport score_cohort(const MvnModel& model, const Cohort& cohort, const ControlStats& stats,
                             const ScoreOptions& opts) {
    const auto inf = infer(model, cohort, opts.mode, opts.seed);
    return score_points(cohort, inf.latents, inf.errors, stats, opts.alpha);
}

NormativeFit fit_and_score(const MvnModel& model, const Cohort& cohort, const ScoreOptions& opts,
                           const CovarianceOptions& cov) {
    auto inf = infer(model, cohort, opts.mode, opts.seed);
    const auto controls = cohort.rows_with(Stage::Control);
    NormativeFit fit;
    fit.stats = fit_control_stats(take_rows(inf.latents, controls), take_rows(inf.errors, controls), cov);
    fit.report = score_points(cohort, inf.latents, inf.errors, fit.stats, opts.alpha);
    fit.latents = std::move(inf.latents);
    fit.errors = std::move(inf.errors);
    return fit;
}

void write_report(const DeviationReport& report, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw DataError("cannot write report " + path.string());
    }
    os << "subject_id,stage,D_ml,p_latent,outlier_latent,D_mf,p_feature,outlier_feature";
    const std::size_t d = report.empty() ? 0 : report.front().z_latent.size();
    const std::size_t r = report.empty() ? 0 : report.front().z_feature.size();
    for (std::size_t i = 1; i <= d; ++i) {
        os << ",Z_ml_" << i;
    }
    for (std::size_t i = 1; i <= r; ++i) {
        os << ",Z_mf_" << i;
    }
    os << '\n';
    char buf[40];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    };
    for (const auto& s : report) {
        os << s.subject_id << ',' << to_string(s.stage) << ',' << num(s.d_latent) << ',' << num(s.p_latent) << ','
           << (s.outlier_latent ? 1 : 0) << ',' << num(s.d_feature) << ',' << num(s.p_feature) << ','
           << (s.outlier_feature ? 1 : 0);
        for (double z : s.z_latent) {
            os << ',' << num(z);
        }
        for (double z : s.z_feature) {
            os << ',' << num(z);
        }
        os << '\n';
    }
}

} // namespace normkit
