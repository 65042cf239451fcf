#pragma once

#include "normkit/aggregation.hpp"
#include "normkit/deviation.hpp"
#include "normkit/evaluation.hpp"
#include "normkit/model.hpp"
#include "normkit/synthdata.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace normkit {

// Everything a run needs, loaded from flat key=value text. Keys set
// explicitly (file or flags) are remembered so a checkpoint can be checked
// against them.
struct RunConfig {
    std::filesystem::path out = ".";
    std::filesystem::path cohort;     // default <out>/cohort.csv
    std::filesystem::path model;      // default <out>/model.ckpt
    std::uint64_t seed = 0;

    std::size_t epochs = 500;
    double lr = 1e-5;
    std::size_t batch_size = 64;
    Strategy strategy = Strategy::MoPoE;
    std::size_t latent_dim = 10;
    std::vector<std::size_t> latent_dims{5, 10, 15, 20};
    std::vector<std::size_t> hidden_dims{64, 32};
    bool mopoe_include_empty = true;

    double alpha = 0.001;
    double fdr_q = 0.05;
    double z_threshold = 1.96;
    LatentMode mode = LatentMode::Mean;
    double ridge = 1e-6;
    double feature_shrinkage = 0.1;

    // generator
    std::size_t n_controls = 248;
    std::size_t n_holdout = 48;
    std::vector<std::size_t> n_per_stage{60, 60, 60};
    std::vector<double> stage_shifts{1.0, 2.0, 3.0};
    double noise_std = 0.5;

    std::set<std::string> explicit_keys;

    std::filesystem::path cohort_path() const;
    std::filesystem::path model_path() const;
    // Canonical "key=value" lines, sorted by key.
    std::vector<std::string> echo() const;
};

// Applies one key=value pair; ConfigError on unknown keys or bad values.
void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
// Parses a config file (`#` comments, blank lines ignored).
RunConfig load_run_config(const std::filesystem::path& path);
void validate_run_config(const RunConfig& cfg);

SynthSpec synth_spec_from(const RunConfig& cfg);
ModelConfig model_config_from(const RunConfig& cfg, const Cohort& cohort);

// SHA-256 hex digest of a file's bytes.
std::string file_digest(const std::filesystem::path& path);

struct RunResult {
    std::vector<std::filesystem::path> outputs;
    std::filesystem::path manifest;
};

// generate | train | evaluate | compare | interpret. Every output written by
// a failing run is removed before the exception propagates.
RunResult run_command(const std::string& name, const RunConfig& cfg);

// Exit code for an exception escaping run_command: 2 config, 3 data, 4 numeric.
int exit_code_for(const std::exception& e);

// The seven model rows of the comparison grid.
struct CompareRow {
    std::string label;
    Strategy strategy;
    // empty: all modalities; otherwise the kept modality indices
    std::vector<std::size_t> modalities;
    bool concat = false;
};
std::vector<CompareRow> compare_rows();

struct CompareCell {
    std::string row;
    std::size_t latent_dim = 0;
    LikelihoodRatio latent;
    LikelihoodRatio feature;
    std::string feature_space; // "joint" or "single-modality"
};

// Trains and scores one grid cell on a raw (unnormalized) cohort.
CompareCell run_compare_cell(const CompareRow& row, std::size_t latent_dim, const Cohort& raw, const RunConfig& cfg);

// Likelihood ratios of a scored report: disease stages vs holdout.
std::pair<LikelihoodRatio, LikelihoodRatio> report_likelihood_ratios(const DeviationReport& report);

} // namespace normkit
