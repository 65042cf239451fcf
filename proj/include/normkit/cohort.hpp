#pragma once

#include "normkit/matrix.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace normkit {

enum class Stage { Control, Holdout, Stage1, Stage2, Stage3 };
enum class Sex { Female, Male };

// "control", "holdout", "stage1", "stage2", "stage3"
std::string_view to_string(Stage s);
Stage parse_stage(std::string_view name);
inline constexpr Stage kAllStages[] = {Stage::Control, Stage::Holdout, Stage::Stage1, Stage::Stage2,
                                       Stage::Stage3};
inline bool is_disease(Stage s) { return s == Stage::Stage1 || s == Stage::Stage2 || s == Stage::Stage3; }

// Row-aligned subject table: one feature matrix per modality (columns are
// regions) plus the covariate one-hot matrix derived from age and sex.
struct Cohort {
    std::vector<std::string> subject_ids;
    std::vector<Stage> stages;
    Vector ages;
    std::vector<Sex> sexes;
    Vector cognition;
    std::vector<Matrix> features;
    Matrix covariates;

    std::size_t size() const { return subject_ids.size(); }
    std::size_t n_modalities() const { return features.size(); }
    std::size_t total_regions() const;
    // Row indices whose stage matches.
    std::vector<std::size_t> rows_with(Stage s) const;
    std::vector<std::size_t> rows_where(bool (*pred)(Stage)) const;

    friend bool operator==(const Cohort&, const Cohort&) = default;
};

inline constexpr std::size_t kCovariateDim = 8;

// Decade bins [40,50) ... [90,100] then female/male; length 8, two ones.
Vector onehot_covariates(double age, Sex sex);
Matrix covariate_matrix(const Vector& ages, const std::vector<Sex>& sexes);

Cohort subset_rows(const Cohort& c, const std::vector<std::size_t>& rows);
// Keep only the listed modalities (unimodal baselines).
Cohort select_modalities(const Cohort& c, const std::vector<std::size_t>& modalities);
// Merge every modality into one wide modality (concatenated baseline).
Cohort concat_modalities(const Cohort& c);

} // namespace normkit
