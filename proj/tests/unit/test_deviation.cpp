#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"

#include "normkit/deviation.hpp"
#include "normkit/errors.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

using namespace normkit;

namespace {

Matrix gaussian_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
    RngStream r(seed, "rows");
    Matrix m(n, d);
    for (double& v : m.data()) {
        v = r.normal();
    }
    return m;
}

double chi2_tail_oracle(double d2, double dof) {
    boost::math::quadrature::exp_sinh<double> tail;
    const double half = 0.5 * dof;
    return tail.integrate(
        [&](double t) {
            const double x = d2 + t;
            return std::exp(-half * std::log(2.0) - std::lgamma(half) + (half - 1.0) * std::log(x) - 0.5 * x);
        },
        0.0, std::numeric_limits<double>::infinity());
}

} // namespace

TEST_CASE("control stats on standard normal data") {
    const auto x = gaussian_rows(100000, 2, 1);
    const auto s = fit_control_stats(x, x, {0.0, 0.0});
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(std::abs(s.latent_mean[i]) < 0.02);
        for (std::size_t j = 0; j < 2; ++j) {
            CHECK(std::abs(s.latent_cov(i, j) - (i == j ? 1.0 : 0.0)) < 0.02);
        }
    }
}

TEST_CASE("ridge adds a scaled identity") {
    const double a = std::sqrt(1.5);
    const Matrix x{{a, 0}, {-a, 0}, {0, a}, {0, -a}};
    const auto s = fit_control_stats(x, x, {0.01, 0.0});
    CHECK(s.latent_cov(0, 0) == doctest::Approx(1.01).epsilon(1e-12));
    CHECK(s.latent_cov(1, 1) == doctest::Approx(1.01).epsilon(1e-12));
    CHECK(s.latent_cov(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("feature shrinkage scales off-diagonal terms") {
    const auto x = gaussian_rows(50, 3, 2);
    const auto raw = sample_mean_cov(x).second;
    const auto s = fit_control_stats(x, x, {0.0, 0.25});
    CHECK(s.feature_err_cov(0, 1) == doctest::Approx(0.75 * raw(0, 1)).epsilon(1e-14));
    CHECK(s.feature_err_cov(2, 2) == doctest::Approx(raw(2, 2)).epsilon(1e-14));
    CHECK(s.latent_cov(0, 1) == doctest::Approx(raw(0, 1)).epsilon(1e-14));
}

TEST_CASE("constant columns") {
    auto x = gaussian_rows(20, 3, 3);
    for (std::size_t i = 0; i < 20; ++i) {
        x(i, 1) = 4.0;
    }
    const auto s = fit_control_stats(x, x);
    CHECK(s.latent_dim_std[1] == 0.0);
    CHECK(s.latent_cov(0, 1) == 0.0);
    CHECK(s.latent_cov(1, 1) > 0.0);
    CHECK_THROWS_AS(zscores(x.row(0), s.latent_dim_mean, s.latent_dim_std), DegenerateError);
    const Matrix flat(10, 2, 1.0);
    CHECK_THROWS_AS(fit_control_stats(flat, flat), NumericError);
}

TEST_CASE("control stats argument errors") {
    const auto x = gaussian_rows(4, 3, 1);
    CHECK_THROWS_AS(fit_control_stats(x, gaussian_rows(10, 2, 1)), InsufficientDataError);
    const auto y = gaussian_rows(10, 2, 1);
    CHECK_THROWS_AS(fit_control_stats(y, y, {-1.0, 0.1}), ArgumentError);
    CHECK_THROWS_AS(fit_control_stats(y, y, {1e-6, 1.5}), ArgumentError);
}

TEST_CASE("mahalanobis hand cases") {
    const Vector mu{0.5, -1.0};
    CHECK(mahalanobis(mu, mu, Matrix::identity(2)) == 0.0);
    CHECK(mahalanobis(Vector{1.5, -1.0}, mu, Matrix::identity(2)) == doctest::Approx(1.0));
    CHECK(mahalanobis(Vector{2.0, 0.0}, Vector{0.0, 0.0}, Matrix{{4, 0}, {0, 1}}) == doctest::Approx(1.0));
    CHECK_THROWS_AS(mahalanobis(Vector{1.0}, mu, Matrix::identity(2)), DimensionError);
    CHECK_THROWS_AS(mahalanobis(mu, mu, Matrix{{1, 2}, {2, 1}}), NumericError);
}

TEST_CASE("zscores") {
    const Vector mean{1.0, 2.0}, sd{0.5, 2.0};
    CHECK(zscores(mean, mean, sd) == Vector{0.0, 0.0});
    CHECK(zscores(Vector{2.0, 6.0}, mean, sd) == Vector{2.0, 2.0});
    const auto x = gaussian_rows(30, 3, 4);
    const auto [m, s] = column_mean_std(x);
    Matrix z(30, 3);
    for (std::size_t i = 0; i < 30; ++i) {
        const auto zi = zscores(x.row(i), m, s);
        std::copy(zi.begin(), zi.end(), z.row(i).begin());
    }
    const auto [zm, zs] = column_mean_std(z);
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(std::abs(zm[c]) < 1e-10);
        CHECK(std::abs(zs[c] - 1.0) < 1e-10);
    }
}

TEST_CASE("chi-square p-values") {
    CHECK(p_value_chi2(0.0, 3) == 1.0);
    CHECK(p_value_chi2(1.959964, 1) == doctest::Approx(0.05).epsilon(1e-6));
    CHECK(p_value_chi2(std::sqrt(29.588), 10) == doctest::Approx(0.001).epsilon(1e-3));
    for (auto [d, dof] : {std::pair{1.959964, 1}, {std::sqrt(29.588), 10}, {3.0, 5}, {0.7, 2}}) {
        CHECK(std::abs(p_value_chi2(d, dof) - chi2_tail_oracle(d * d, dof)) < 1e-10);
    }
    CHECK(p_value_chi2(1e3, 2) > 0.0);
    CHECK_THROWS_AS(p_value_chi2(1.0, 0), ArgumentError);
    CHECK_THROWS_AS(p_value_chi2(-1.0, 2), ArgumentError);
}

TEST_CASE("scoring standard normal controls") {
    const std::size_t n = 4000;
    const auto c = helpers::toy_cohort(n, {1}, 1);
    const auto lat = gaussian_rows(n, 10, 5);
    const auto err = gaussian_rows(n, 4, 6);
    const auto stats = fit_control_stats(lat, err);
    const auto rep = score_points(c, lat, err, stats, 0.001);
    std::vector<double> d2;
    for (const auto& s : rep) {
        d2.push_back(s.d_latent * s.d_latent);
        CHECK(s.outlier_latent == (s.p_latent < 0.001));
        CHECK(s.outlier_feature == (s.p_feature < 0.001));
    }
    std::nth_element(d2.begin(), d2.begin() + n / 2, d2.end());
    // chi-square(10) median
    CHECK(std::abs(d2[n / 2] - 9.34182) < 0.4);
}

TEST_CASE("scoring centre and shifted points") {
    const auto c = helpers::toy_cohort(3, {1}, 1);
    const Vector mean{0.0, 0.0};
    ControlStats s;
    s.latent_mean = mean;
    s.latent_cov = Matrix::identity(2);
    s.latent_chol = Matrix::identity(2);
    s.latent_dim_mean = mean;
    s.latent_dim_std = {1.0, 1.0};
    s.feature_err_mean = {0.0};
    s.feature_err_cov = Matrix::identity(1);
    s.feature_err_chol = Matrix::identity(1);
    s.feature_region_mean = {0.0};
    s.feature_region_std = {1.0};
    const Matrix lat{{0.0, 0.0}, {5.0, 0.0}, {0.0, -6.0}};
    const Matrix err(3, 1);
    const auto rep = score_points(c, lat, err, s, 0.001);
    CHECK(rep[0].d_latent == 0.0);
    CHECK_FALSE(rep[0].outlier_latent);
    CHECK(rep[1].d_latent >= 5.0);
    CHECK(rep[1].outlier_latent);
    CHECK(rep[2].z_latent == Vector{0.0, -6.0});
    CHECK_THROWS_AS(score_points(c, Matrix(2, 2), err, s, 0.001), DimensionError);
}

TEST_CASE("fit_and_score fits on controls only") {
    auto c = helpers::toy_cohort(40, {5, 4}, 2);
    for (std::size_t j = 30; j < 40; ++j) {
        c.stages[j] = Stage::Stage2;
        for (double& v : c.features[0].row(j)) {
            v += 3.0;
        }
    }
    const auto m = init_model(helpers::small_config(Strategy::MoPoE), 1);
    const auto fit = fit_and_score(m, c);
    REQUIRE(fit.report.size() == 40);
    const auto ctrl = take_rows(fit.latents, c.rows_with(Stage::Control));
    const auto [mean, cov] = sample_mean_cov(ctrl);
    for (std::size_t i = 0; i < mean.size(); ++i) {
        CHECK(fit.stats.latent_mean[i] == doctest::Approx(mean[i]).epsilon(1e-14));
    }
    // training-control z-scores are self-normalized
    Matrix z(30, 3);
    for (std::size_t j = 0; j < 30; ++j) {
        std::copy(fit.report[j].z_latent.begin(), fit.report[j].z_latent.end(), z.row(j).begin());
    }
    const auto [zm, zs] = column_mean_std(z);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(std::abs(zm[i]) < 1e-10);
        CHECK(std::abs(zs[i] - 1.0) < 1e-10);
    }
    auto few = helpers::toy_cohort(4, {5, 4}, 2);
    CHECK_THROWS_AS(fit_and_score(m, few), InsufficientDataError);
}

TEST_CASE("report table layout") {
    const auto c = helpers::toy_cohort(12, {5, 4}, 2);
    const auto m = init_model(helpers::small_config(Strategy::PoE), 1);
    const auto fit = fit_and_score(m, c);
    const auto path = std::filesystem::temp_directory_path() / "normkit_report_test.csv";
    write_report(fit.report, path);
    std::ifstream is(path);
    std::string header;
    std::getline(is, header);
    CHECK(header.rfind("subject_id,stage,D_ml,p_latent,outlier_latent,D_mf,p_feature,outlier_feature,Z_ml_1", 0) == 0);
    CHECK(header.find("Z_mf_9") != std::string::npos);
    std::size_t lines = 0;
    for (std::string l; std::getline(is, l);) {
        ++lines;
    }
    CHECK(lines == 12);
    std::filesystem::remove(path);
}
