#include "normkit/model.hpp"

#include "normkit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

namespace normkit {

std::size_t ModelConfig::total_regions() const {
    std::size_t n = 0;
    for (const auto& m : modalities) {
        n += m.input_dim;
    }
    return n;
}

namespace {

std::string prefix(std::size_t modality, const char* part) {
    return "m" + std::to_string(modality) + "." + part + ".";
}

struct LayerNames {
    std::string w;
    std::string b;
};

LayerNames layer(const std::string& pre, const std::string& id) { return {pre + id + ".W", pre + id + ".b"}; }

std::vector<LayerNames> encoder_hidden(std::size_t m, const ModalityConfig& mc) {
    std::vector<LayerNames> out;
    for (std::size_t l = 0; l < mc.hidden_dims.size(); ++l) {
        out.push_back(layer(prefix(m, "enc"), std::to_string(l)));
    }
    return out;
}

std::vector<LayerNames> decoder_hidden(std::size_t m, const ModalityConfig& mc) {
    std::vector<LayerNames> out;
    for (std::size_t l = 0; l < mc.hidden_dims.size(); ++l) {
        out.push_back(layer(prefix(m, "dec"), std::to_string(l)));
    }
    return out;
}

struct BlockShape {
    std::string name;
    std::size_t rows;
    std::size_t cols;
};

std::vector<BlockShape> expected_blocks(const ModelConfig& cfg) {
    std::vector<BlockShape> out;
    auto add = [&](const LayerNames& n, std::size_t in, std::size_t outw) {
        out.push_back({n.w, in, outw});
        out.push_back({n.b, 1, outw});
    };
    for (std::size_t m = 0; m < cfg.modalities.size(); ++m) {
        const auto& mc = cfg.modalities[m];
        std::size_t in = mc.input_dim + cfg.covariate_dim;
        const auto enc = encoder_hidden(m, mc);
        for (std::size_t l = 0; l < enc.size(); ++l) {
            add(enc[l], in, mc.hidden_dims[l]);
            in = mc.hidden_dims[l];
        }
        add(layer(prefix(m, "enc"), "mu"), in, cfg.latent_dim);
        add(layer(prefix(m, "enc"), "lv"), in, cfg.latent_dim);

        in = cfg.latent_dim + cfg.covariate_dim;
        const auto dec = decoder_hidden(m, mc);
        for (std::size_t l = 0; l < dec.size(); ++l) {
            const std::size_t width = mc.hidden_dims[mc.hidden_dims.size() - 1 - l];
            add(dec[l], in, width);
            in = width;
        }
        add(layer(prefix(m, "dec"), "out"), in, mc.input_dim);
    }
    return out;
}

double leaky(double a) { return a > 0.0 ? a : kLeakySlope * a; }
double leaky_grad(double a) { return a > 0.0 ? 1.0 : kLeakySlope; }

// x * W + b
Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
    Matrix out = matmul(x, w);
    const auto bias = b.row(0);
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            r[j] += bias[j];
        }
    }
    return out;
}

Matrix apply_leaky(const Matrix& pre) {
    Matrix out = pre;
    for (double& v : out.data()) {
        v = leaky(v);
    }
    return out;
}

// Accumulates the gradient of a dense layer and returns d(input).
Matrix affine_backward(const Matrix& input, const Matrix& w, const Matrix& d_out, Matrix& dw, Matrix& db) {
    Matrix gw = matmul_tn(input, d_out);
    for (std::size_t i = 0; i < gw.size(); ++i) {
        dw.data()[i] += gw.data()[i];
    }
    for (std::size_t i = 0; i < d_out.rows(); ++i) {
        const auto r = d_out.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            db(0, j) += r[j];
        }
    }
    return matmul_nt(d_out, w);
}

struct MlpCache {
    std::vector<Matrix> inputs; // input to every hidden layer
    std::vector<Matrix> pre;    // pre-activation of every hidden layer
    Matrix last;                // final hidden activation
};

MlpCache mlp_forward(const ParamSet& p, const std::vector<LayerNames>& names, Matrix x) {
    MlpCache c;
    for (const auto& n : names) {
        Matrix pre = affine(x, p.at(n.w), p.at(n.b));
        c.inputs.push_back(std::move(x));
        x = apply_leaky(pre);
        c.pre.push_back(std::move(pre));
    }
    c.last = std::move(x);
    return c;
}

Matrix mlp_backward(const ParamSet& p, const std::vector<LayerNames>& names, const MlpCache& c, Matrix d_last,
                    ParamSet& grads) {
    for (std::size_t l = names.size(); l-- > 0;) {
        const Matrix& pre = c.pre[l];
        for (std::size_t i = 0; i < d_last.size(); ++i) {
            d_last.data()[i] *= leaky_grad(pre.data()[i]);
        }
        d_last = affine_backward(c.inputs[l], p.at(names[l].w), d_last, grads.at(names[l].w),
                                 grads.at(names[l].b));
    }
    return d_last;
}

void check_finite(const Matrix& m, const std::string& what) {
    if (!m.all_finite()) {
        throw NumericError(what + ": non-finite activation");
    }
}

struct EncoderPass {
    MlpCache hidden;
    Matrix mean;
    Matrix log_variance;
};

const ModalityConfig& modality_at(const MvnModel& model, std::size_t m) {
    if (m >= model.config.modalities.size()) {
        throw ArgumentError("modality index " + std::to_string(m) + " out of range");
    }
    return model.config.modalities[m];
}

EncoderPass encoder_forward(const MvnModel& model, std::size_t m, const Matrix& x, const Matrix& cov) {
    const auto& mc = modality_at(model, m);
    if (x.cols() != mc.input_dim) {
        throw DimensionError("encode: modality " + std::to_string(m) + " expects " +
                             std::to_string(mc.input_dim) + " features, got " + std::to_string(x.cols()));
    }
    if (cov.cols() != model.config.covariate_dim || cov.rows() != x.rows()) {
        throw DimensionError("encode: covariate shape mismatch");
    }
    EncoderPass e;
    e.hidden = mlp_forward(model.params, encoder_hidden(m, mc), hconcat(x, cov));
    const auto mu = layer(prefix(m, "enc"), "mu");
    const auto lv = layer(prefix(m, "enc"), "lv");
    e.mean = affine(e.hidden.last, model.params.at(mu.w), model.params.at(mu.b));
    e.log_variance = affine(e.hidden.last, model.params.at(lv.w), model.params.at(lv.b));
    check_finite(e.mean, "encode");
    check_finite(e.log_variance, "encode");
    return e;
}

struct DecoderPass {
    MlpCache hidden;
    Matrix out;
};

DecoderPass decoder_forward(const MvnModel& model, std::size_t m, const Matrix& z, const Matrix& cov) {
    const auto& mc = modality_at(model, m);
    if (z.cols() != model.config.latent_dim) {
        throw DimensionError("decode: latent length " + std::to_string(z.cols()) + " != " +
                             std::to_string(model.config.latent_dim));
    }
    if (cov.cols() != model.config.covariate_dim || cov.rows() != z.rows()) {
        throw DimensionError("decode: covariate shape mismatch");
    }
    DecoderPass d;
    d.hidden = mlp_forward(model.params, decoder_hidden(m, mc), hconcat(z, cov));
    const auto out = layer(prefix(m, "dec"), "out");
    d.out = affine(d.hidden.last, model.params.at(out.w), model.params.at(out.b));
    check_finite(d.out, "decode");
    return d;
}

Matrix row_matrix(std::span<const double> v) { return Matrix(1, v.size(), Vector(v.begin(), v.end())); }

} // namespace

MvnModel init_model(const ModelConfig& config, std::uint64_t seed) {
    if (config.modalities.empty()) {
        throw ArgumentError("model needs at least one modality");
    }
    if (config.latent_dim == 0) {
        throw ArgumentError("latent_dim must be positive");
    }
    for (const auto& mc : config.modalities) {
        if (mc.input_dim == 0 || mc.hidden_dims.empty() ||
            std::find(mc.hidden_dims.begin(), mc.hidden_dims.end(), 0) != mc.hidden_dims.end()) {
            throw ArgumentError("modality '" + mc.name + "' needs input_dim >= 1 and non-empty hidden_dims");
        }
    }
    MvnModel model{config, {}};
    for (const auto& b : expected_blocks(config)) {
        Matrix m(b.rows, b.cols);
        if (b.name.ends_with(".W")) {
            const double limit = std::sqrt(6.0 / static_cast<double>(b.rows + b.cols));
            RngStream rng(seed, "init/" + b.name);
            for (double& v : m.data()) {
                v = (2.0 * rng.uniform() - 1.0) * limit;
            }
        }
        model.params.emplace(b.name, std::move(m));
    }
    return model;
}

void validate_model(const MvnModel& model) {
    const auto blocks = expected_blocks(model.config);
    if (blocks.size() != model.params.size()) {
        throw ArgumentError("model parameters do not match configuration (block count)");
    }
    for (const auto& b : blocks) {
        auto it = model.params.find(b.name);
        if (it == model.params.end()) {
            throw ArgumentError("model parameters missing block '" + b.name + "'");
        }
        if (it->second.rows() != b.rows || it->second.cols() != b.cols) {
            throw ArgumentError("model block '" + b.name + "' has the wrong shape");
        }
    }
}

EncoderOutput encode_batch(const MvnModel& model, std::size_t modality, const Matrix& x, const Matrix& cov) {
    auto e = encoder_forward(model, modality, x, cov);
    return {std::move(e.mean), std::move(e.log_variance)};
}

Matrix decode_batch(const MvnModel& model, std::size_t modality, const Matrix& z, const Matrix& cov) {
    return decoder_forward(model, modality, z, cov).out;
}

DiagonalGaussian encode(const MvnModel& model, std::size_t modality, std::span<const double> x,
                        std::span<const double> cov) {
    auto e = encoder_forward(model, modality, row_matrix(x), row_matrix(cov));
    return DiagonalGaussian::from_log_variance(e.mean.data(), e.log_variance.data());
}

Vector decode(const MvnModel& model, std::size_t modality, std::span<const double> z,
              std::span<const double> cov) {
    return decoder_forward(model, modality, row_matrix(z), row_matrix(cov)).out.data();
}

ElboNoise draw_noise(const MvnModel& model, std::size_t batch_size, RngStream& rng) {
    const auto plan = make_plan(model.config.modalities.size(), model.config.strategy, model.config.aggregation);
    ElboNoise n;
    n.component.resize(batch_size);
    n.eps = Matrix(batch_size, model.config.latent_dim);
    for (std::size_t b = 0; b < batch_size; ++b) {
        n.component[b] = plan.components.size() == 1 ? 0 : rng.below(plan.components.size());
        for (double& e : n.eps.row(b)) {
            e = rng.normal();
        }
    }
    return n;
}

ElboResult elbo_loss(const MvnModel& model, const std::vector<Matrix>& batch_x, const Matrix& batch_cov,
                     const ElboNoise& noise, bool with_grad) {
    const auto& cfg = model.config;
    const std::size_t n_mod = cfg.modalities.size();
    const std::size_t d = cfg.latent_dim;
    if (batch_x.size() != n_mod) {
        throw DimensionError("elbo_loss: expected one feature batch per modality");
    }
    const std::size_t batch = batch_cov.rows();
    if (batch == 0) {
        throw ArgumentError("elbo_loss: empty batch");
    }
    for (const auto& x : batch_x) {
        if (x.rows() != batch) {
            throw DimensionError("elbo_loss: modality batches are not row-aligned");
        }
    }
    if (noise.component.size() != batch || noise.eps.rows() != batch || noise.eps.cols() != d) {
        throw DimensionError("elbo_loss: noise does not match batch");
    }
    const auto plan = make_plan(n_mod, cfg.strategy, cfg.aggregation);
    const double inv_b = 1.0 / static_cast<double>(batch);

    std::vector<EncoderPass> enc;
    std::vector<Matrix> var(n_mod);
    for (std::size_t m = 0; m < n_mod; ++m) {
        enc.push_back(encoder_forward(model, m, batch_x[m], batch_cov));
        var[m] = enc[m].log_variance;
        for (double& v : var[m].data()) {
            v = std::exp(std::clamp(v, -kLogVarClamp, kLogVarClamp));
        }
    }

    // Components per subject, stored as (K x d) mean/variance per subject.
    const std::size_t n_comp = plan.components.size();
    std::vector<Matrix> comp_mean(batch, Matrix(n_comp, d));
    std::vector<Matrix> comp_var(batch, Matrix(n_comp, d));
    Matrix z(batch, d);
    double kl_sum = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t k = 0; k < n_comp; ++k) {
            const auto& c = plan.components[k];
            const bool copy = c.experts.size() == 1 && !c.include_prior && c.precision_scale == 1.0;
            for (std::size_t i = 0; i < d; ++i) {
                double mean, v;
                if (copy) {
                    mean = enc[c.experts[0]].mean(b, i);
                    v = var[c.experts[0]](b, i);
                } else {
                    double precision = c.include_prior ? 1.0 : 0.0;
                    double weighted = 0.0;
                    for (std::size_t e : c.experts) {
                        const double p = c.precision_scale / var[e](b, i);
                        precision += p;
                        weighted += p * enc[e].mean(b, i);
                    }
                    v = 1.0 / precision;
                    mean = weighted * v;
                }
                comp_mean[b](k, i) = mean;
                comp_var[b](k, i) = v;
                kl_sum += plan.weights[k] * 0.5 * (v + mean * mean - 1.0 - std::log(v));
            }
        }
        const std::size_t k = noise.component[b];
        if (k >= n_comp) {
            throw DimensionError("elbo_loss: noise selects a missing component");
        }
        for (std::size_t i = 0; i < d; ++i) {
            z(b, i) = comp_mean[b](k, i) + std::sqrt(comp_var[b](k, i)) * noise.eps(b, i);
        }
    }

    ElboResult result;
    result.terms.reconstruction.assign(n_mod, 0.0);
    std::vector<DecoderPass> dec;
    for (std::size_t m = 0; m < n_mod; ++m) {
        dec.push_back(decoder_forward(model, m, z, batch_cov));
        double sq = 0.0;
        const auto& out = dec[m].out.data();
        const auto& x = batch_x[m].data();
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double r = out[i] - x[i];
            sq += r * r;
        }
        result.terms.reconstruction[m] = sq * inv_b;
        if (!std::isfinite(result.terms.reconstruction[m])) {
            throw NumericError("elbo_loss: non-finite reconstruction term for modality " + std::to_string(m));
        }
    }
    result.terms.kl = kl_sum * inv_b;
    if (!std::isfinite(result.terms.kl)) {
        throw NumericError("elbo_loss: non-finite KL term");
    }
    result.terms.total = std::accumulate(result.terms.reconstruction.begin(), result.terms.reconstruction.end(),
                                         result.terms.kl);
    if (!with_grad) {
        return result;
    }

    ParamSet grads = zeros_like(model.params);
    Matrix dz(batch, d);
    for (std::size_t m = 0; m < n_mod; ++m) {
        const auto& mc = cfg.modalities[m];
        Matrix d_out = dec[m].out;
        for (std::size_t i = 0; i < d_out.size(); ++i) {
            d_out.data()[i] = 2.0 * inv_b * (d_out.data()[i] - batch_x[m].data()[i]);
        }
        const auto out = layer(prefix(m, "dec"), "out");
        Matrix d_hidden =
            affine_backward(dec[m].hidden.last, model.params.at(out.w), d_out, grads.at(out.w), grads.at(out.b));
        const Matrix d_in = mlp_backward(model.params, decoder_hidden(m, mc), dec[m].hidden, std::move(d_hidden), grads);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t i = 0; i < d; ++i) {
                dz(b, i) += d_in(b, i);
            }
        }
    }

    std::vector<Matrix> d_mean(n_mod, Matrix(batch, d));
    std::vector<Matrix> d_var(n_mod, Matrix(batch, d));
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t chosen = noise.component[b];
        for (std::size_t k = 0; k < n_comp; ++k) {
            const auto& c = plan.components[k];
            const double w = plan.weights[k] * inv_b;
            for (std::size_t i = 0; i < d; ++i) {
                const double mean = comp_mean[b](k, i);
                const double v = comp_var[b](k, i);
                double gm = w * mean;
                double gv = w * 0.5 * (1.0 - 1.0 / v);
                if (k == chosen) {
                    gm += dz(b, i);
                    gv += dz(b, i) * noise.eps(b, i) / (2.0 * std::sqrt(v));
                }
                // d/d(expert) of the precision-weighted product
                for (std::size_t e : c.experts) {
                    const double ve = var[e](b, i);
                    const double s = c.precision_scale;
                    d_mean[e](b, i) += gm * s * v / ve;
                    d_var[e](b, i) += gv * s * v * v / (ve * ve) + gm * s * v * (mean - enc[e].mean(b, i)) / (ve * ve);
                }
            }
        }
    }

    for (std::size_t m = 0; m < n_mod; ++m) {
        const auto& mc = cfg.modalities[m];
        Matrix d_lv(batch, d);
        for (std::size_t i = 0; i < d_lv.size(); ++i) {
            const double lv = enc[m].log_variance.data()[i];
            const bool inside = lv > -kLogVarClamp && lv < kLogVarClamp;
            d_lv.data()[i] = inside ? d_var[m].data()[i] * var[m].data()[i] : 0.0;
        }
        const auto mu = layer(prefix(m, "enc"), "mu");
        const auto lv = layer(prefix(m, "enc"), "lv");
        Matrix d_hidden = affine_backward(enc[m].hidden.last, model.params.at(mu.w), d_mean[m], grads.at(mu.w),
                                          grads.at(mu.b));
        const Matrix d_hidden_lv = affine_backward(enc[m].hidden.last, model.params.at(lv.w), d_lv,
                                                   grads.at(lv.w), grads.at(lv.b));
        for (std::size_t i = 0; i < d_hidden.size(); ++i) {
            d_hidden.data()[i] += d_hidden_lv.data()[i];
        }
        mlp_backward(model.params, encoder_hidden(m, mc), enc[m].hidden, std::move(d_hidden), grads);
    }
    result.grads = std::move(grads);
    return result;
}

ElboResult elbo_loss(const MvnModel& model, const std::vector<Matrix>& batch_x, const Matrix& batch_cov,
                     RngStream& rng, bool with_grad) {
    const auto noise = draw_noise(model, batch_cov.rows(), rng);
    return elbo_loss(model, batch_x, batch_cov, noise, with_grad);
}

TrainResult train(MvnModel model, const Cohort& cohort, const TrainConfig& cfg) {
    validate_model(model);
    if (cohort.size() == 0) {
        throw ArgumentError("train: empty cohort");
    }
    if (cfg.batch_size == 0 || !(cfg.lr > 0.0)) {
        throw ArgumentError("train: batch_size and lr must be positive");
    }
    if (cohort.n_modalities() != model.config.modalities.size()) {
        throw DimensionError("train: cohort modality count differs from model");
    }
    TrainResult result{std::move(model), {}};
    auto& m = result.model;
    AdamState adam = make_adam_state(m.params, cfg.lr);
    RngStream noise_rng(cfg.seed, "train/noise");
    const RngStream shuffle_root(cfg.seed, "train/shuffle");
    const std::size_t n = cohort.size();
    std::vector<std::size_t> order(n);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        RngStream shuffle = shuffle_root.substream("epoch" + std::to_string(epoch));
        for (std::size_t i = n; i > 1; --i) {
            std::swap(order[i - 1], order[shuffle.below(i)]);
        }
        EpochLoss acc;
        acc.reconstruction.assign(m.config.modalities.size(), 0.0);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            std::span<const std::size_t> rows(order.data() + start, stop - start);
            std::vector<Matrix> xb;
            for (const auto& f : cohort.features) {
                xb.push_back(take_rows(f, rows));
            }
            const Matrix cb = take_rows(cohort.covariates, rows);
            ElboResult r;
            try {
                r = elbo_loss(m, xb, cb, noise_rng, true);
                adam_update(adam, m.params, r.grads);
            } catch (const NumericError& e) {
                throw TrainingError(e.what(), epoch);
            }
            const double share = static_cast<double>(rows.size()) / static_cast<double>(n);
            acc.total += share * r.terms.total;
            acc.kl += share * r.terms.kl;
            for (std::size_t k = 0; k < acc.reconstruction.size(); ++k) {
                acc.reconstruction[k] += share * r.terms.reconstruction[k];
            }
        }
        if (!std::isfinite(acc.total)) {
            throw TrainingError("non-finite epoch loss", epoch);
        }
        result.trace.push_back(std::move(acc));
    }
    return result;
}

JointPosterior joint_posterior(const MvnModel& model, const std::vector<Vector>& x, std::span<const double> cov) {
    if (x.size() != model.config.modalities.size()) {
        throw DimensionError("joint_posterior: expected one feature vector per modality");
    }
    std::vector<DiagonalGaussian> uni;
    for (std::size_t m = 0; m < x.size(); ++m) {
        uni.push_back(encode(model, m, x[m], cov));
    }
    return aggregate(uni, model.config.strategy, model.config.aggregation);
}

Inference infer(const MvnModel& model, const Cohort& cohort, LatentMode mode, std::uint64_t seed) {
    validate_model(model);
    const auto& cfg = model.config;
    if (cohort.n_modalities() != cfg.modalities.size()) {
        throw DimensionError("infer: cohort modality count differs from model");
    }
    const std::size_t n = cohort.size();
    const std::size_t d = cfg.latent_dim;
    Inference out{Matrix(n, d), Matrix(n, cfg.total_regions())};
    if (n == 0) {
        return out;
    }
    std::vector<EncoderOutput> enc;
    for (std::size_t m = 0; m < cfg.modalities.size(); ++m) {
        enc.push_back(encode_batch(model, m, cohort.features[m], cohort.covariates));
    }
    const RngStream root(seed, "infer");
    std::vector<DiagonalGaussian> uni(cfg.modalities.size());
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t m = 0; m < uni.size(); ++m) {
            uni[m] = DiagonalGaussian::from_log_variance(Vector(enc[m].mean.row(j).begin(), enc[m].mean.row(j).end()),
                                                        enc[m].log_variance.row(j));
        }
        const auto jp = aggregate(uni, cfg.strategy, cfg.aggregation);
        RngStream rng = root.substream(cohort.subject_ids[j]);
        const auto z = joint_latent_point(jp, mode, rng);
        std::copy(z.begin(), z.end(), out.latents.row(j).begin());
    }
    std::size_t offset = 0;
    for (std::size_t m = 0; m < cfg.modalities.size(); ++m) {
        const Matrix recon = decode_batch(model, m, out.latents, cohort.covariates);
        const Matrix& x = cohort.features[m];
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t r = 0; r < x.cols(); ++r) {
                const double diff = x(j, r) - recon(j, r);
                out.errors(j, offset + r) = diff * diff;
            }
        }
        offset += x.cols();
    }
    return out;
}

Matrix reconstruction_errors(const MvnModel& model, const Cohort& cohort, LatentMode mode, std::uint64_t seed) {
    return infer(model, cohort, mode, seed).errors;
}

std::vector<Vector> decode_selected_dims(const MvnModel& model, std::span<const double> z,
                                         const std::vector<std::size_t>& selected) {
    const std::size_t d = model.config.latent_dim;
    if (z.size() != d) {
        throw DimensionError("decode_selected_dims: latent length mismatch");
    }
    Vector masked(d, 0.0);
    for (std::size_t s : selected) {
        if (s >= d) {
            throw ArgumentError("decode_selected_dims: dimension " + std::to_string(s) + " out of range");
        }
        masked[s] = z[s];
    }
    const Vector cov(model.config.covariate_dim, 0.0);
    std::vector<Vector> out;
    for (std::size_t m = 0; m < model.config.modalities.size(); ++m) {
        out.push_back(decode(model, m, masked, cov));
    }
    return out;
}

namespace {

constexpr const char* kCheckpointMagic = "normkit-checkpoint";
constexpr int kCheckpointVersion = 1;

void write_blocks(std::ostream& os, const char* section, const ParamSet& blocks) {
    os << section << ' ' << blocks.size() << '\n';
    char buf[40];
    for (const auto& [name, m] : blocks) {
        os << "block " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
        for (std::size_t r = 0; r < m.rows(); ++r) {
            for (std::size_t c = 0; c < m.cols(); ++c) {
                std::snprintf(buf, sizeof buf, "%a", m(r, c));
                os << (c ? " " : "") << buf;
            }
            os << '\n';
        }
    }
}

class LineReader {
public:
    explicit LineReader(std::istream& is) : is_(is) {}

    std::istringstream next() {
        std::string line;
        if (!std::getline(is_, line)) {
            throw ParseError("unexpected end of checkpoint", line_ + 1);
        }
        ++line_;
        return std::istringstream(line);
    }
    std::size_t line() const { return line_; }

private:
    std::istream& is_;
    std::size_t line_ = 0;
};

std::string expect_key(LineReader& in, std::istringstream& ls, const char* key) {
    std::string k;
    ls >> k;
    if (k != key) {
        throw ParseError(std::string("expected '") + key + "', found '" + k + "'", in.line());
    }
    std::string rest;
    std::getline(ls >> std::ws, rest);
    return rest;
}

ParamSet read_blocks(LineReader& in, const char* section) {
    auto header = in.next();
    const std::size_t count = std::stoul(expect_key(in, header, section));
    ParamSet out;
    for (std::size_t i = 0; i < count; ++i) {
        auto ls = in.next();
        std::string tag, name;
        std::size_t rows = 0, cols = 0;
        ls >> tag >> name >> rows >> cols;
        if (tag != "block" || !ls) {
            throw ParseError("malformed block header", in.line());
        }
        Matrix m(rows, cols);
        for (std::size_t r = 0; r < rows; ++r) {
            auto row = in.next();
            std::string tok;
            for (std::size_t c = 0; c < cols; ++c) {
                if (!(row >> tok)) {
                    throw ParseError("block '" + name + "' row too short", in.line());
                }
                char* end = nullptr;
                m(r, c) = std::strtod(tok.c_str(), &end);
                if (end == tok.c_str() || *end != '\0') {
                    throw ParseError("bad number '" + tok + "'", in.line());
                }
            }
        }
        if (!out.emplace(name, std::move(m)).second) {
            throw ParseError("duplicate block '" + name + "'", in.line());
        }
    }
    return out;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const MvnModel& model, const ParamSet& extras) {
    validate_model(model);
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw DataError("cannot write checkpoint " + path.string());
    }
    const auto& c = model.config;
    os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    os << "latent_dim " << c.latent_dim << '\n';
    os << "covariate_dim " << c.covariate_dim << '\n';
    os << "strategy " << to_string(c.strategy) << '\n';
    os << "mopoe_include_empty " << (c.aggregation.mopoe_include_empty ? 1 : 0) << '\n';
    os << "modalities " << c.modalities.size() << '\n';
    for (const auto& m : c.modalities) {
        os << "modality " << m.name << ' ' << m.input_dim << ' ';
        for (std::size_t i = 0; i < m.hidden_dims.size(); ++i) {
            os << (i ? "," : "") << m.hidden_dims[i];
        }
        os << '\n';
    }
    write_blocks(os, "params", model.params);
    write_blocks(os, "extras", extras);
    os << "end\n";
    if (!os) {
        throw DataError("failed writing checkpoint " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DataError("cannot open checkpoint " + path.string());
    }
    LineReader in(is);
    Checkpoint cp;
    auto& c = cp.model.config;
    try {
        auto l = in.next();
        const auto version = expect_key(in, l, kCheckpointMagic);
        if (version != std::to_string(kCheckpointVersion)) {
            throw ParseError("unsupported checkpoint version " + version, in.line());
        }
        l = in.next();
        c.latent_dim = std::stoul(expect_key(in, l, "latent_dim"));
        l = in.next();
        c.covariate_dim = std::stoul(expect_key(in, l, "covariate_dim"));
        l = in.next();
        c.strategy = parse_strategy(expect_key(in, l, "strategy"));
        l = in.next();
        c.aggregation.mopoe_include_empty = expect_key(in, l, "mopoe_include_empty") == "1";
        l = in.next();
        const std::size_t n_mod = std::stoul(expect_key(in, l, "modalities"));
        for (std::size_t i = 0; i < n_mod; ++i) {
            l = in.next();
            std::istringstream fields(expect_key(in, l, "modality"));
            ModalityConfig mc;
            std::string hidden;
            fields >> mc.name >> mc.input_dim >> hidden;
            mc.hidden_dims.clear();
            std::istringstream hs(hidden);
            for (std::string tok; std::getline(hs, tok, ',');) {
                mc.hidden_dims.push_back(std::stoul(tok));
            }
            c.modalities.push_back(std::move(mc));
        }
        cp.model.params = read_blocks(in, "params");
        cp.extras = read_blocks(in, "extras");
        l = in.next();
        expect_key(in, l, "end");
    } catch (const std::invalid_argument&) {
        throw ParseError("malformed number in checkpoint", in.line());
    } catch (const std::out_of_range&) {
        throw ParseError("number out of range in checkpoint", in.line());
    }
    validate_model(cp.model);
    return cp;
}

} // namespace normkit
