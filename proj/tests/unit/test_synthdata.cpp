#include "doctest.h"

#include "normkit/deviation.hpp"
#include "normkit/errors.hpp"
#include "normkit/evaluation.hpp"
#include "normkit/synthdata.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

using namespace normkit;
namespace fs = std::filesystem;

namespace {

SynthSpec small_spec(std::uint64_t seed) {
    ReferenceShape shape;
    shape.regions = {10, 8};
    shape.affected_count = {3, 2};
    auto s = reference_spec(seed, shape);
    s.n_controls = 40;
    s.n_holdout = 6;
    s.n_per_stage = {5, 5, 5};
    return s;
}

fs::path temp_file(const char* name) { return fs::temp_directory_path() / name; }

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    os << text;
}

} // namespace

TEST_CASE("onehot covariates") {
    const auto v = onehot_covariates(72, Sex::Male);
    CHECK(v.size() == kCovariateDim);
    CHECK(v == Vector{0, 0, 0, 1, 0, 0, 0, 1});
    CHECK(onehot_covariates(40, Sex::Female)[0] == 1.0);
    CHECK(onehot_covariates(100, Sex::Female)[5] == 1.0);
    CHECK(onehot_covariates(79.999, Sex::Female)[3] == 1.0);
    for (double age = 40.0; age <= 100.0; age += 0.37) {
        const auto c = onehot_covariates(age, age > 70 ? Sex::Male : Sex::Female);
        CHECK(std::accumulate(c.begin(), c.end(), 0.0) == 2.0);
    }
    CHECK_THROWS_AS(onehot_covariates(39.9, Sex::Male), ArgumentError);
    CHECK_THROWS_AS(onehot_covariates(100.1, Sex::Male), ArgumentError);
}

TEST_CASE("reference spec shape") {
    const auto s = reference_spec(42);
    CHECK(s.loadings.size() == 2);
    CHECK(s.loadings[0].rows() == 6);
    CHECK(s.loadings[0].cols() == 90);
    CHECK(s.affected_regions[0].size() == 20);
    CHECK(s.affected_regions[1].size() == 30);
    // abnormal dims load only on affected regions
    for (std::size_t m = 0; m < 2; ++m) {
        for (std::size_t r = 0; r < 90; ++r) {
            const auto& a = s.affected_regions[m];
            if (std::find(a.begin(), a.end(), r) == a.end()) {
                for (std::size_t d : s.abnormal_dims) {
                    CHECK(s.loadings[m](d, r) == 0.0);
                }
            }
        }
    }
    validate_spec(s);
}

TEST_CASE("spec validation") {
    auto s = small_spec(1);
    s.stage_shifts = {2.0, 1.0, 3.0};
    CHECK_THROWS_AS(validate_spec(s), ArgumentError);
    s = small_spec(1);
    s.abnormal_dims = {9};
    CHECK_THROWS_AS(validate_spec(s), ArgumentError);
    s = small_spec(1);
    s.n_per_stage = {1, 2};
    CHECK_THROWS_AS(validate_spec(s), ArgumentError);
    s = small_spec(1);
    s.affected_regions[0].push_back(99);
    CHECK_THROWS_AS(validate_spec(s), ArgumentError);
}

TEST_CASE("generate is deterministic and labelled") {
    const auto a = generate(small_spec(3)), b = generate(small_spec(3));
    CHECK(a == b);
    CHECK(a.size() == 40 + 6 + 15);
    CHECK(a.subject_ids.front() == "sub-0001");
    CHECK(a.rows_with(Stage::Holdout).size() == 6);
    CHECK(a.rows_where(is_disease).size() == 15);
    CHECK(generate(small_spec(4)) != a);
    for (double c : a.cognition) {
        CHECK(c >= 0.0);
        CHECK(c <= 70.0);
    }
}

TEST_CASE("degenerate generator copies the latent") {
    SynthSpec s;
    s.n_controls = 20;
    s.n_holdout = 0;
    s.n_per_stage = {0, 0, 0};
    s.true_latent_dim = 1;
    s.loadings = {Matrix(1, 4, 1.0)};
    s.noise_std = 0.0;
    s.abnormal_dims = {0};
    s.affected_regions = {{}};
    s.age_effect = {Vector(4, 0.0)};
    s.sex_effect = {Vector(4, 0.0)};
    const auto c = generate(s);
    for (std::size_t j = 0; j < c.size(); ++j) {
        for (std::size_t r = 1; r < 4; ++r) {
            CHECK(c.features[0](j, r) == c.features[0](j, 0));
        }
    }
}

TEST_CASE("region variance matches the loading model") {
    auto s = small_spec(7);
    s.n_controls = 100000;
    s.n_holdout = 0;
    s.n_per_stage = {0, 0, 0};
    for (auto& v : s.age_effect) std::fill(v.begin(), v.end(), 0.0);
    for (auto& v : s.sex_effect) std::fill(v.begin(), v.end(), 0.0);
    const auto c = generate(s);
    const auto [mean, sd] = column_mean_std(c.features[1]);
    for (std::size_t r = 0; r < 8; ++r) {
        double expected = s.noise_std * s.noise_std;
        for (std::size_t q = 0; q < s.true_latent_dim; ++q) {
            expected += s.loadings[1](q, r) * s.loadings[1](q, r);
        }
        CHECK(std::abs(sd[r] * sd[r] / expected - 1.0) < 0.03);
    }
}

TEST_CASE("covariate effects are recoverable") {
    auto s = small_spec(8);
    s.n_controls = 10000;
    s.n_holdout = 0;
    s.n_per_stage = {0, 0, 0};
    const auto c = generate(s);
    Vector age_units(c.size()), sex_sign(c.size());
    Matrix age_col(c.size(), 1), sex_col(c.size(), 1);
    for (std::size_t j = 0; j < c.size(); ++j) {
        age_units[j] = age_col(j, 0) = (c.ages[j] - 70.0) / 10.0;
        sex_sign[j] = sex_col(j, 0) = c.sexes[j] == Sex::Male ? 1.0 : -1.0;
    }
    for (std::size_t r : {0, 5, 9}) {
        const Vector y = c.features[0].col(r);
        const auto ra = adjusted_regression(y, age_units, sex_col);
        CHECK(std::abs(ra.slope - s.age_effect[0][r]) < 2.0 * ra.slope_se);
        const auto rs = adjusted_regression(y, sex_sign, age_col);
        CHECK(std::abs(rs.slope - s.sex_effect[0][r]) < 2.0 * rs.slope_se);
    }
}

TEST_CASE("zero stage shifts give a null disease cohort") {
    auto s = reference_spec(9);
    s.stage_shifts = {0.0, 0.0, 0.0};
    const auto c = generate(s);
    const auto ctrl = c.rows_with(Stage::Control), dis = c.rows_where(is_disease);
    std::size_t low = 0, total = 0;
    for (std::size_t m = 0; m < 2; ++m) {
        for (std::size_t r = 0; r < c.features[m].cols(); ++r) {
            Vector a, b;
            for (std::size_t j : ctrl) a.push_back(c.features[m](j, r));
            for (std::size_t j : dis) b.push_back(c.features[m](j, r));
            low += welch_test(a, b).p < 0.05;
            ++total;
        }
    }
    CHECK(double(low) / double(total) < 0.12);
}

TEST_CASE("true stage distance grows with the shift") {
    const auto s = reference_spec(10);
    // population covariance of the concatenated features, covariates ignored
    const std::size_t R = 180;
    Matrix l(s.true_latent_dim, R);
    for (std::size_t q = 0; q < s.true_latent_dim; ++q) {
        for (std::size_t r = 0; r < 90; ++r) {
            l(q, r) = s.loadings[0](q, r);
            l(q, 90 + r) = s.loadings[1](q, r);
        }
    }
    Matrix cov = matmul_tn(l, l);
    for (std::size_t i = 0; i < R; ++i) {
        cov(i, i) += s.noise_std * s.noise_std;
    }
    const Matrix chol = cholesky(cov);
    double prev = 0.0;
    for (double shift : s.stage_shifts) {
        Vector mu(R, 0.0);
        for (std::size_t d : s.abnormal_dims) {
            for (std::size_t r = 0; r < R; ++r) {
                mu[r] += shift * l(d, r);
            }
        }
        const double dist = mahalanobis_chol(mu, Vector(R, 0.0), chol);
        CHECK(dist > prev);
        prev = dist;
    }
}

TEST_CASE("normalization uses control statistics") {
    const auto raw = generate(small_spec(11));
    const auto [norm, ns] = normalize_by_controls(raw);
    const auto ctrl = raw.rows_with(Stage::Control);
    for (std::size_t m = 0; m < 2; ++m) {
        const auto [mean, sd] = column_mean_std(take_rows(norm.features[m], ctrl));
        for (std::size_t r = 0; r < mean.size(); ++r) {
            CHECK(std::abs(mean[r]) < 1e-10);
            CHECK(std::abs(sd[r] - 1.0) < 1e-10);
        }
    }
    const std::size_t j = raw.rows_with(Stage::Stage3).front();
    CHECK(norm.features[0](j, 2) ==
          doctest::Approx((raw.features[0](j, 2) - ns.mean[0][2]) / ns.std[0][2]).epsilon(1e-14));
    CHECK(apply_normalization(raw, ns) == norm);

    // re-normalizing recomputes control statistics, so the means stay at zero
    const auto [again, ns2] = normalize_by_controls(norm);
    for (double v : ns2.mean[1]) {
        CHECK(std::abs(v) < 1e-10);
    }
    CHECK(again.features[1].rows() == norm.features[1].rows());
}

TEST_CASE("normalization errors") {
    auto raw = generate(small_spec(12));
    for (std::size_t j = 0; j < raw.size(); ++j) {
        raw.features[1](j, 3) = 2.0;
    }
    CHECK_THROWS_AS(normalize_by_controls(raw), DegenerateError);
    auto few = subset_rows(raw, {raw.rows_with(Stage::Holdout)});
    CHECK_THROWS_AS(normalize_by_controls(few), InsufficientDataError);
}

TEST_CASE("cohort file round trip") {
    const auto c = generate(small_spec(13));
    const auto p = temp_file("normkit_cohort_rt.csv");
    write_cohort(c, p);
    CHECK(read_cohort(p) == c);
    std::ifstream is(p);
    std::string header;
    std::getline(is, header);
    CHECK(header.rfind("subject_id,stage,age,sex,cog,m1_r001,", 0) == 0);
    CHECK(header.find("m2_r008") != std::string::npos);
    fs::remove(p);
}

TEST_CASE("cohort file errors") {
    const auto p = temp_file("normkit_cohort_bad.csv");
    write_text(p, "subject_id,stage,age,sex,cog,m1_r001\n");
    const auto empty = read_cohort(p);
    CHECK(empty.size() == 0);
    CHECK(empty.n_modalities() == 1);

    write_text(p, "subject_id,stage,age,sex,cog,m1_r001\ns1,control,60,F,3,0.5\ns2,cdr2,61,M,3,0.1\n");
    try {
        read_cohort(p);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
        CHECK(std::string(e.what()).find("cdr2") != std::string::npos);
    }
    write_text(p, "subject_id,stage,age,sex,cog,m1_r001\ns1,control,60,F,3\n");
    CHECK_THROWS_AS(read_cohort(p), ParseError);
    write_text(p, "id,stage\n");
    CHECK_THROWS_AS(read_cohort(p), ParseError);
    write_text(p, "subject_id,stage,age,sex,cog,m1_r001\ns1,control,60,X,3,0.5\n");
    CHECK_THROWS_AS(read_cohort(p), ParseError);
    write_text(p, "subject_id,stage,age,sex,cog,m1_r001\ns1,control,sixty,F,3,0.5\n");
    CHECK_THROWS_AS(read_cohort(p), ParseError);
    fs::remove(p);
    CHECK_THROWS_AS(read_cohort(p), DataError);
}

TEST_CASE("modality views") {
    const auto c = generate(small_spec(14));
    const auto one = select_modalities(c, {1});
    CHECK(one.n_modalities() == 1);
    CHECK(one.features[0] == c.features[1]);
    CHECK_THROWS_AS(select_modalities(c, {2}), ArgumentError);
    const auto cat = concat_modalities(c);
    CHECK(cat.features[0] == hconcat(c.features[0], c.features[1]));
    CHECK(c.total_regions() == 18);
}
