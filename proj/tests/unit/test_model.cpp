#include "doctest.h"
#include "helpers.hpp"

#include "normkit/errors.hpp"
#include "normkit/model.hpp"

#include <cmath>
#include <filesystem>

using namespace normkit;
using helpers::small_config;
using helpers::toy_cohort;
using helpers::zero_params;

namespace {

double leaky(double x) { return x > 0.0 ? x : 0.01 * x; }

Vector cov_of(double age, Sex s) { return onehot_covariates(age, s); }

} // namespace

TEST_CASE("init_model shapes and determinism") {
    const auto mc = small_config(Strategy::MoPoE);
    const auto a = init_model(mc, 3), b = init_model(mc, 3), c = init_model(mc, 4);
    CHECK(a.params == b.params);
    CHECK(a.params != c.params);
    CHECK(a.params.at("m0.enc.0.W").rows() == 5 + kCovariateDim);
    CHECK(a.params.at("m0.enc.0.W").cols() == 4);
    CHECK(a.params.at("m1.enc.1.W").cols() == 2);
    CHECK(a.params.at("m1.dec.0.W").rows() == 3 + kCovariateDim);
    CHECK(a.params.at("m1.dec.0.W").cols() == 2);
    CHECK(a.params.at("m1.dec.out.W").cols() == 4);
    const double limit = std::sqrt(6.0 / (13.0 + 4.0));
    for (double w : a.params.at("m0.enc.0.W").data()) {
        CHECK(std::abs(w) <= limit);
    }
    CHECK(a.params.at("m0.enc.0.b") == Matrix(1, 4));
    validate_model(a);
}

TEST_CASE("validate_model catches corrupt params") {
    auto m = init_model(small_config(Strategy::PoE), 1);
    m.params.erase("m0.enc.mu.b");
    CHECK_THROWS_AS(validate_model(m), DataError);
    auto n = init_model(small_config(Strategy::PoE), 1);
    n.params.at("m0.dec.out.W") = Matrix(2, 2);
    CHECK_THROWS_AS(validate_model(n), DataError);
}

TEST_CASE("zero network encodes to the standard normal and decodes to zero") {
    auto m = init_model(small_config(Strategy::PoE), 1);
    zero_params(m);
    const Vector x(5, 0.7);
    const auto g = encode(m, 0, x, cov_of(60, Sex::Male));
    CHECK(g.mean == Vector(3, 0.0));
    CHECK(g.variance == Vector(3, 1.0));
    CHECK(decode(m, 1, Vector(3, 2.0), cov_of(60, Sex::Male)) == Vector(4, 0.0));
}

TEST_CASE("encode and decode match a hand forward pass") {
    ModelConfig mc;
    mc.latent_dim = 1;
    mc.modalities = {{"t", 3, {2}}};
    auto m = init_model(mc, 5);
    const Vector x{0.5, -1.0, 2.0};
    const Vector cov = cov_of(72, Sex::Female);
    Vector in = x;
    in.insert(in.end(), cov.begin(), cov.end());
    const auto& w0 = m.params.at("m0.enc.0.W");
    m.params.at("m0.enc.0.b") = Matrix{{0.1, -0.2}};
    m.params.at("m0.enc.mu.b") = Matrix{{0.3}};
    m.params.at("m0.enc.lv.b") = Matrix{{-0.4}};
    double h[2];
    for (int j = 0; j < 2; ++j) {
        double s = m.params.at("m0.enc.0.b")(0, j);
        for (std::size_t i = 0; i < in.size(); ++i) {
            s += in[i] * w0(i, j);
        }
        h[j] = leaky(s);
    }
    const auto& wm = m.params.at("m0.enc.mu.W");
    const auto& wl = m.params.at("m0.enc.lv.W");
    const double mu = 0.3 + h[0] * wm(0, 0) + h[1] * wm(1, 0);
    const double lv = -0.4 + h[0] * wl(0, 0) + h[1] * wl(1, 0);
    const auto g = encode(m, 0, x, cov);
    CHECK(g.mean[0] == doctest::Approx(mu).epsilon(1e-14));
    CHECK(g.variance[0] == doctest::Approx(std::exp(lv)).epsilon(1e-14));
    CHECK(encode(m, 0, x, cov).mean == g.mean);

    const Vector z{0.8};
    Vector dz = z;
    dz.insert(dz.end(), cov.begin(), cov.end());
    const auto& d0 = m.params.at("m0.dec.0.W");
    const auto& dout = m.params.at("m0.dec.out.W");
    double dh[2];
    for (int j = 0; j < 2; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < dz.size(); ++i) {
            s += dz[i] * d0(i, j);
        }
        dh[j] = leaky(s);
    }
    const auto out = decode(m, 0, z, cov);
    for (int k = 0; k < 3; ++k) {
        CHECK(out[k] == doctest::Approx(dh[0] * dout(0, k) + dh[1] * dout(1, k)).epsilon(1e-14));
    }
    CHECK(decode(m, 0, z, cov) == out);
}

TEST_CASE("encode argument errors") {
    const auto m = init_model(small_config(Strategy::PoE), 1);
    CHECK_THROWS_AS(encode(m, 0, Vector(4, 0.0), cov_of(60, Sex::Male)), DimensionError);
    CHECK_THROWS_AS(encode(m, 5, Vector(5, 0.0), cov_of(60, Sex::Male)), ArgumentError);
    CHECK_THROWS_AS(decode(m, 0, Vector(2, 0.0), cov_of(60, Sex::Male)), DimensionError);
}

TEST_CASE("elbo closed-form cases") {
    auto m = init_model(small_config(Strategy::MoE), 1);
    zero_params(m);
    const auto c = toy_cohort(4, {5, 4}, 1);
    std::vector<Matrix> zeros = {Matrix(4, 5), Matrix(4, 4)};
    RngStream r(1, "noise");
    const auto noise = draw_noise(m, 4, r);
    CHECK(elbo_loss(m, zeros, c.covariates, noise).terms.total == 0.0);

    for (std::size_t k = 0; k < 2; ++k) {
        m.params.at("m" + std::to_string(k) + ".enc.mu.b").fill(1.0);
    }
    // decoder is zero, so reconstruction stays perfect whatever z is
    const auto res = elbo_loss(m, zeros, c.covariates, noise);
    CHECK(res.terms.kl == doctest::Approx(3 * 0.5).epsilon(1e-14));
    CHECK(res.terms.total == doctest::Approx(1.5).epsilon(1e-14));
}

TEST_CASE("elbo matches recomputation from primitives") {
    for (Strategy s : kAllStrategies) {
        CAPTURE(to_string(s));
        const auto m = init_model(small_config(s), 11);
        const auto c = toy_cohort(4, {5, 4}, 2);
        RngStream r(4, "noise");
        const auto noise = draw_noise(m, 4, r);
        const auto res = elbo_loss(m, c.features, c.covariates, noise, false);

        const auto plan = make_plan(2, s, m.config.aggregation);
        double total = 0.0, kl = 0.0;
        Vector recon(2, 0.0);
        for (std::size_t j = 0; j < 4; ++j) {
            std::vector<DiagonalGaussian> uni;
            for (std::size_t k = 0; k < 2; ++k) {
                uni.push_back(encode(m, k, c.features[k].row(j), c.covariates.row(j)));
            }
            const auto jp = aggregate(uni, s, m.config.aggregation);
            const double klj = kl_term(jp);
            const auto comps = evaluate_components(plan, uni);
            const auto z = reparameterize(comps[noise.component[j]], noise.eps.row(j));
            double rj = 0.0;
            for (std::size_t k = 0; k < 2; ++k) {
                const auto xh = decode(m, k, z, c.covariates.row(j));
                for (std::size_t i = 0; i < xh.size(); ++i) {
                    const double e = c.features[k](j, i) - xh[i];
                    recon[k] += e * e / 4.0;
                    rj += e * e;
                }
            }
            kl += klj / 4.0;
            total += (rj + klj) / 4.0;
        }
        CHECK(res.terms.total == doctest::Approx(total).epsilon(1e-12));
        CHECK(res.terms.kl == doctest::Approx(kl).epsilon(1e-12));
        CHECK(res.terms.reconstruction[0] == doctest::Approx(recon[0]).epsilon(1e-12));
        CHECK(res.terms.reconstruction[1] == doctest::Approx(recon[1]).epsilon(1e-12));
    }
}

TEST_CASE("elbo gradients pass finite differences for every strategy") {
    for (Strategy s : kAllStrategies) {
        CAPTURE(to_string(s));
        const auto mc = small_config(s);
        // no leaky-relu pre-activation within h of zero for this seed
        const auto m = init_model(mc, 22);
        const auto c = toy_cohort(5, {5, 4}, 3);
        RngStream r(6, "noise");
        const auto noise = draw_noise(m, 5, r);
        const auto res = elbo_loss(m, c.features, c.covariates, noise);
        auto f = [&](const ParamSet& p) {
            return elbo_loss(MvnModel{mc, p}, c.features, c.covariates, noise, false).terms.total;
        };
        const auto rep = grad_check(f, res.grads, m.params, 1e-5, 1e-4);
        CAPTURE(rep.max_rel_error);
        CAPTURE(rep.worst_block);
        CAPTURE(rep.worst_analytic);
        CAPTURE(rep.worst_numeric);
        CHECK(rep.pass);
        CHECK(rep.checked == parameter_count(m.params));
    }
}

TEST_CASE("elbo argument errors") {
    const auto m = init_model(small_config(Strategy::PoE), 1);
    const auto c = toy_cohort(4, {5, 4}, 1);
    RngStream r(1, "n");
    const auto noise = draw_noise(m, 4, r);
    CHECK_THROWS_AS(elbo_loss(m, {c.features[0]}, c.covariates, noise), DimensionError);
    const auto short_noise = draw_noise(m, 3, r);
    CHECK_THROWS_AS(elbo_loss(m, c.features, c.covariates, short_noise), DimensionError);
}

TEST_CASE("train with zero epochs is a no-op") {
    const auto m = init_model(small_config(Strategy::MoPoE), 1);
    const auto res = train(m, toy_cohort(10, {5, 4}, 1), {0, 1e-3, 4, 1});
    CHECK(res.trace.empty());
    CHECK(res.model.params == m.params);
}

TEST_CASE("train is deterministic and reduces loss at a usable rate") {
    const auto m = init_model(small_config(Strategy::MoPoE), 1);
    const auto c = toy_cohort(40, {5, 4}, 5);
    const TrainConfig tc{60, 1e-2, 8, 9};
    const auto a = train(m, c, tc), b = train(m, c, tc);
    REQUIRE(a.trace.size() == 60);
    for (std::size_t e = 0; e < a.trace.size(); ++e) {
        CHECK(a.trace[e].total == b.trace[e].total);
        CHECK(a.trace[e].kl >= 0.0);
        CHECK(std::isfinite(a.trace[e].total));
    }
    CHECK(a.model.params == b.model.params);
    CHECK(a.trace.back().total < a.trace.front().total);
}

TEST_CASE("train argument errors") {
    const auto m = init_model(small_config(Strategy::MoPoE), 1);
    CHECK_THROWS_AS(train(m, toy_cohort(0, {5, 4}, 1), {}), ArgumentError);
    CHECK_THROWS_AS(train(m, toy_cohort(5, {5, 4}, 1), {1, 1e-3, 0, 1}), ArgumentError);
    CHECK_THROWS_AS(train(m, toy_cohort(5, {5}, 1), {1, 1e-3, 2, 1}), DimensionError);
}

TEST_CASE("divergent training raises with the epoch") {
    const auto m = init_model(small_config(Strategy::PoE), 1);
    auto c = toy_cohort(8, {5, 4}, 1);
    for (double& v : c.features[0].data()) {
        v *= 1e200;
    }
    CHECK_THROWS_AS(train(m, c, {2, 1e-3, 4, 1}), NumericError);
}

TEST_CASE("reconstruction errors") {
    auto m = init_model(small_config(Strategy::PoE), 1);
    zero_params(m);
    auto c = toy_cohort(3, {5, 4}, 1);
    for (auto& f : c.features) {
        f.fill(0.0);
    }
    CHECK(reconstruction_errors(m, c, LatentMode::Mean, 1) == Matrix(3, 9));
    for (auto& f : c.features) {
        f.fill(-1.0);
    }
    CHECK(reconstruction_errors(m, c, LatentMode::Mean, 1) == Matrix(3, 9, 1.0));

    const auto trained = init_model(small_config(Strategy::MoPoE), 2);
    const auto t = toy_cohort(3, {5, 4}, 3);
    const auto inf = infer(trained, t, LatentMode::Mean, 1);
    for (std::size_t j = 0; j < 3; ++j) {
        const auto x0 = decode(trained, 0, inf.latents.row(j), t.covariates.row(j));
        const double e = t.features[0](j, 2) - x0[2];
        CHECK(inf.errors(j, 2) == doctest::Approx(e * e).epsilon(1e-14));
    }
}

TEST_CASE("inference modes") {
    const auto m = init_model(small_config(Strategy::MoPoE), 2);
    const auto c = toy_cohort(6, {5, 4}, 3);
    const auto a = infer(m, c, LatentMode::Sample, 4), b = infer(m, c, LatentMode::Sample, 4);
    CHECK(a.latents == b.latents);
    // per-subject streams: a subset reproduces the same draws
    const std::vector<std::size_t> rows = {4, 1};
    const auto sub = infer(m, subset_rows(c, rows), LatentMode::Sample, 4);
    CHECK(Vector(sub.latents.row(0).begin(), sub.latents.row(0).end()) ==
          Vector(a.latents.row(4).begin(), a.latents.row(4).end()));
    const auto mean = infer(m, c, LatentMode::Mean, 4);
    const std::vector<Vector> x = {Vector(c.features[0].row(2).begin(), c.features[0].row(2).end()),
                                   Vector(c.features[1].row(2).begin(), c.features[1].row(2).end())};
    const auto jp = joint_posterior(m, x, c.covariates.row(2));
    const auto mu = mixture_mean(jp.mixture());
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(mean.latents(2, i) == doctest::Approx(mu[i]).epsilon(1e-14));
    }
}

TEST_CASE("decode selected dims") {
    ModelConfig mc = small_config(Strategy::MoPoE, 10);
    const auto m = init_model(mc, 8);
    Vector z(10);
    for (std::size_t i = 0; i < 10; ++i) {
        z[i] = 0.3 * double(i) - 1.0;
    }
    const Vector zero_cov(kCovariateDim, 0.0);
    std::vector<std::size_t> all(10);
    for (std::size_t i = 0; i < 10; ++i) {
        all[i] = i;
    }
    const auto full = decode_selected_dims(m, z, all);
    CHECK(full[0] == decode(m, 0, z, zero_cov));
    CHECK(full[1] == decode(m, 1, z, zero_cov));
    const auto none = decode_selected_dims(m, z, {});
    CHECK(none[0] == decode(m, 0, Vector(10, 0.0), zero_cov));
    // dims 4, 5 and 7 counted from one
    Vector masked(10, 0.0);
    for (std::size_t i : {3, 4, 6}) {
        masked[i] = z[i];
    }
    const auto some = decode_selected_dims(m, z, {3, 4, 6});
    CHECK(some[0] == decode(m, 0, masked, zero_cov));
    CHECK(some[1] == decode(m, 1, masked, zero_cov));
    CHECK_THROWS_AS(decode_selected_dims(m, z, {10}), ArgumentError);
}

TEST_CASE("single-modality PoE is a conditional VAE with prior") {
    ModelConfig mc;
    mc.latent_dim = 2;
    mc.strategy = Strategy::PoE;
    mc.modalities = {{"a", 5, {4}}};
    const auto m = init_model(mc, 3);
    const auto c = toy_cohort(3, {5}, 4);
    const auto g = encode(m, 0, c.features[0].row(1), c.covariates.row(1));
    const std::vector<Vector> x = {Vector(c.features[0].row(1).begin(), c.features[0].row(1).end())};
    const auto jp = joint_posterior(m, x, c.covariates.row(1));
    for (std::size_t i = 0; i < 2; ++i) {
        const double prec = 1.0 / g.variance[i] + 1.0;
        CHECK(jp.single().variance[i] == doctest::Approx(1.0 / prec).epsilon(1e-14));
        CHECK(jp.single().mean[i] == doctest::Approx(g.mean[i] / g.variance[i] / prec).epsilon(1e-14));
    }
}

TEST_CASE("concatenated baseline is a plain single modality") {
    const auto c = toy_cohort(6, {5, 4}, 6);
    const auto cat = concat_modalities(c);
    REQUIRE(cat.n_modalities() == 1);
    CHECK(cat.features[0].cols() == 9);
    ModelConfig mc;
    mc.latent_dim = 2;
    mc.strategy = Strategy::PoE;
    mc.modalities = {{"concat", 9, {4}}};
    const auto m = init_model(mc, 2);
    RngStream r(1, "n");
    const auto noise = draw_noise(m, 6, r);
    const auto a = elbo_loss(m, cat.features, cat.covariates, noise, false);
    const auto b = elbo_loss(m, {hconcat(c.features[0], c.features[1])}, c.covariates, noise, false);
    CHECK(a.terms.total == b.terms.total);
}

TEST_CASE("checkpoint round trip") {
    const auto path = std::filesystem::temp_directory_path() / "normkit_test_model.ckpt";
    auto mc = small_config(Strategy::gPoE);
    mc.aggregation.mopoe_include_empty = false;
    const auto m = init_model(mc, 12);
    const ParamSet extras = {{"norm.m0.mean", Matrix{{1.0 / 3.0, -2.5e-300}}}};
    save_checkpoint(path, m, extras);
    const auto cp = load_checkpoint(path);
    CHECK(cp.model.params == m.params);
    CHECK(cp.extras == extras);
    CHECK(cp.model.config.latent_dim == 3);
    CHECK(cp.model.config.strategy == Strategy::gPoE);
    CHECK_FALSE(cp.model.config.aggregation.mopoe_include_empty);
    CHECK(cp.model.config.modalities[1].hidden_dims == std::vector<std::size_t>{3, 2});

    {
        std::FILE* f = std::fopen(path.c_str(), "w");
        std::fputs("normkit-checkpoint 1\nlatent_dim x\n", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_checkpoint(path), ParseError);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
}
