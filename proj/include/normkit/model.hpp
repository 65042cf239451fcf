#pragma once

#include "normkit/aggregation.hpp"
#include "normkit/cohort.hpp"
#include "normkit/params.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace normkit {

struct ModalityConfig {
    std::string name;
    std::size_t input_dim = 90;
    // Encoder hidden widths; the decoder uses them in reverse.
    std::vector<std::size_t> hidden_dims{64, 32};
};

struct ModelConfig {
    std::vector<ModalityConfig> modalities;
    std::size_t latent_dim = 10;
    std::size_t covariate_dim = kCovariateDim;
    Strategy strategy = Strategy::MoPoE;
    AggregationOptions aggregation;

    std::size_t total_regions() const;
};

inline constexpr double kLeakySlope = 0.01;

// Per-modality encoders q(z|x_m, c) and decoders p(x_m|z, c), fully connected
// with leaky-rectifier hidden layers. Weight blocks are stored (in x out) and
// named "m<k>.enc.<layer>.W" / ".b", "m<k>.enc.mu.*", "m<k>.enc.lv.*",
// "m<k>.dec.<layer>.*" and "m<k>.dec.out.*".
struct MvnModel {
    ModelConfig config;
    ParamSet params;
};

// Glorot-uniform weights keyed per block from (seed, "init/<block>"); zero biases.
MvnModel init_model(const ModelConfig& config, std::uint64_t seed);
// Throws ArgumentError if params are missing or misshaped for config.
void validate_model(const MvnModel& model);

// Batched forward passes. X is (B x input_dim), C is (B x covariate_dim).
struct EncoderOutput {
    Matrix mean;
    Matrix log_variance;
};
EncoderOutput encode_batch(const MvnModel& model, std::size_t modality, const Matrix& x, const Matrix& cov);
Matrix decode_batch(const MvnModel& model, std::size_t modality, const Matrix& z, const Matrix& cov);

DiagonalGaussian encode(const MvnModel& model, std::size_t modality, std::span<const double> x,
                        std::span<const double> cov);
Vector decode(const MvnModel& model, std::size_t modality, std::span<const double> z,
              std::span<const double> cov);

// Frozen sampling noise for one batch: which mixture component each subject
// reconstructs from, and the standard-normal draw used to reparameterize.
struct ElboNoise {
    std::vector<std::size_t> component;
    Matrix eps;
};
ElboNoise draw_noise(const MvnModel& model, std::size_t batch_size, RngStream& rng);

struct ElboTerms {
    double total = 0.0;
    Vector reconstruction; // per modality, batch mean
    double kl = 0.0;       // batch mean
};

struct ElboResult {
    ElboTerms terms;
    ParamSet grads;
};

// Negative ELBO per subject, averaged over the batch: summed squared
// reconstruction error across modalities and features plus the KL term
// (exact for single posteriors, convexity bound for mixtures).
ElboResult elbo_loss(const MvnModel& model, const std::vector<Matrix>& batch_x, const Matrix& batch_cov,
                     const ElboNoise& noise, bool with_grad = true);
ElboResult elbo_loss(const MvnModel& model, const std::vector<Matrix>& batch_x, const Matrix& batch_cov,
                     RngStream& rng, bool with_grad = true);

struct TrainConfig {
    std::size_t epochs = 500;
    double lr = 1e-5;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
};

struct EpochLoss {
    double total = 0.0;
    Vector reconstruction;
    double kl = 0.0;
};
using LossTrace = std::vector<EpochLoss>;

struct TrainResult {
    MvnModel model;
    LossTrace trace;
};

// Mini-batch Adam over all rows of `cohort`; the caller passes controls only.
TrainResult train(MvnModel model, const Cohort& cohort, const TrainConfig& cfg);

// Joint latent points (n x latent_dim) and squared reconstruction errors
// (n x total_regions, modalities concatenated) for every row of `cohort`.
struct Inference {
    Matrix latents;
    Matrix errors;
};
Inference infer(const MvnModel& model, const Cohort& cohort, LatentMode mode, std::uint64_t seed);

JointPosterior joint_posterior(const MvnModel& model, const std::vector<Vector>& x,
                               std::span<const double> cov);

Matrix reconstruction_errors(const MvnModel& model, const Cohort& cohort, LatentMode mode,
                             std::uint64_t seed);

// Decode with latent coordinates outside `selected` (0-based) and all
// covariates set to zero; one reconstruction per modality.
std::vector<Vector> decode_selected_dims(const MvnModel& model, std::span<const double> z,
                                         const std::vector<std::size_t>& selected);

// Versioned text checkpoint. Values are written as hexadecimal floats so a
// save/load round trip is bit-exact. `extras` carries auxiliary named blocks.
void save_checkpoint(const std::filesystem::path& path, const MvnModel& model,
                     const ParamSet& extras = {});
struct Checkpoint {
    MvnModel model;
    ParamSet extras;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace normkit
