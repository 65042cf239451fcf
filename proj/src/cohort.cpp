#include "normkit/cohort.hpp"

#include "normkit/errors.hpp"

#include <cmath>

namespace normkit {

std::string_view to_string(Stage s) {
    switch (s) {
    case Stage::Control:
        return "control";
    case Stage::Holdout:
        return "holdout";
    case Stage::Stage1:
        return "stage1";
    case Stage::Stage2:
        return "stage2";
    case Stage::Stage3:
        return "stage3";
    }
    return "?";
}

Stage parse_stage(std::string_view name) {
    for (Stage s : kAllStages) {
        if (to_string(s) == name) {
            return s;
        }
    }
    throw ArgumentError("unknown stage label '" + std::string(name) + "'");
}

std::size_t Cohort::total_regions() const {
    std::size_t n = 0;
    for (const auto& f : features) {
        n += f.cols();
    }
    return n;
}

std::vector<std::size_t> Cohort::rows_with(Stage s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (stages[i] == s) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<std::size_t> Cohort::rows_where(bool (*pred)(Stage)) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (pred(stages[i])) {
            out.push_back(i);
        }
    }
    return out;
}

Vector onehot_covariates(double age, Sex sex) {
    if (!(age >= 40.0 && age <= 100.0)) {
        throw ArgumentError("age " + std::to_string(age) + " outside [40, 100]");
    }
    Vector v(kCovariateDim, 0.0);
    // 100 falls into the last decade bin
    const auto bin = std::min<std::size_t>(static_cast<std::size_t>(std::floor((age - 40.0) / 10.0)), 5);
    v[bin] = 1.0;
    v[sex == Sex::Female ? 6 : 7] = 1.0;
    return v;
}

Matrix covariate_matrix(const Vector& ages, const std::vector<Sex>& sexes) {
    if (ages.size() != sexes.size()) {
        throw DimensionError("covariate_matrix: age and sex lengths differ");
    }
    Matrix m(ages.size(), kCovariateDim);
    for (std::size_t i = 0; i < ages.size(); ++i) {
        const auto v = onehot_covariates(ages[i], sexes[i]);
        std::copy(v.begin(), v.end(), m.row(i).begin());
    }
    return m;
}

Cohort subset_rows(const Cohort& c, const std::vector<std::size_t>& rows) {
    Cohort out;
    for (std::size_t r : rows) {
        if (r >= c.size()) {
            throw DimensionError("subset_rows: row index out of range");
        }
        out.subject_ids.push_back(c.subject_ids[r]);
        out.stages.push_back(c.stages[r]);
        out.ages.push_back(c.ages[r]);
        out.sexes.push_back(c.sexes[r]);
        out.cognition.push_back(c.cognition[r]);
    }
    for (const auto& f : c.features) {
        out.features.push_back(take_rows(f, rows));
    }
    out.covariates = take_rows(c.covariates, rows);
    return out;
}

Cohort select_modalities(const Cohort& c, const std::vector<std::size_t>& modalities) {
    Cohort out = c;
    out.features.clear();
    for (std::size_t m : modalities) {
        if (m >= c.n_modalities()) {
            throw ArgumentError("select_modalities: modality index out of range");
        }
        out.features.push_back(c.features[m]);
    }
    return out;
}

Cohort concat_modalities(const Cohort& c) {
    Cohort out = c;
    out.features.clear();
    if (c.features.empty()) {
        return out;
    }
    Matrix merged = c.features.front();
    for (std::size_t m = 1; m < c.features.size(); ++m) {
        merged = hconcat(merged, c.features[m]);
    }
    out.features.push_back(std::move(merged));
    return out;
}

} // namespace normkit
