#pragma once

#include "normkit/cohort.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace normkit {

// Latent-factor generator for a control/holdout/staged-disease cohort. Every
// region is t * loading + covariate effects + noise, where t ~ N(0, I_k);
// disease stages add `stage_shifts[s]` to each abnormal latent dimension, and
// abnormal dimensions load only onto `affected_regions`.
struct SynthSpec {
    std::size_t n_controls = 248;
    std::size_t n_holdout = 48;
    std::vector<std::size_t> n_per_stage{60, 60, 60};
    std::size_t true_latent_dim = 6;
    std::vector<Matrix> loadings;       // per modality, (k x regions)
    double noise_std = 0.5;
    std::vector<std::size_t> abnormal_dims{0, 1, 2};
    std::vector<double> stage_shifts{1.0, 2.0, 3.0};
    std::vector<std::vector<std::size_t>> affected_regions; // per modality, 0-based
    std::vector<Vector> age_effect;     // per modality, per region, per decade from age 70
    std::vector<Vector> sex_effect;     // per modality, per region, male minus female / 2
    double cognition_base = 8.0;
    double cognition_slope = 2.0;
    double cognition_noise = 4.0;
    double age_min = 55.0;
    double age_max = 90.0;
    std::uint64_t seed = 0;
};

struct ReferenceShape {
    std::vector<std::size_t> regions{90, 90};
    std::vector<std::size_t> affected_count{20, 30};
    std::size_t true_latent_dim = 6;
    std::vector<std::size_t> abnormal_dims{0, 1, 2};
    double load_scale = 0.6;
    double abnormal_load_scale = 0.6;
    double covariate_scale = 0.2;
};

// Default desk-scale spec with loadings, affected regions and covariate
// effects drawn from `seed`.
SynthSpec reference_spec(std::uint64_t seed, const ReferenceShape& shape = {});

// Throws ArgumentError on an inconsistent spec.
void validate_spec(const SynthSpec& spec);

Cohort generate(const SynthSpec& spec);

struct NormStats {
    std::vector<Vector> mean; // per modality, per region
    std::vector<Vector> std;
};

// z-scores every region with the mean and std (n-1) of the control rows.
std::pair<Cohort, NormStats> normalize_by_controls(const Cohort& cohort);
Cohort apply_normalization(const Cohort& cohort, const NormStats& stats);

// Comma-separated file: subject_id,stage,age,sex,cog,m1_r001..m1_rNNN,m2_r001..
void write_cohort(const Cohort& cohort, const std::filesystem::path& path);
Cohort read_cohort(const std::filesystem::path& path);

} // namespace normkit
