#include "normkit/synthdata.hpp"

#include "normkit/errors.hpp"
#include "normkit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

namespace normkit {

SynthSpec reference_spec(std::uint64_t seed, const ReferenceShape& shape) {
    SynthSpec s;
    s.seed = seed;
    s.true_latent_dim = shape.true_latent_dim;
    s.abnormal_dims = shape.abnormal_dims;
    const std::size_t k = s.true_latent_dim;
    for (std::size_t m = 0; m < shape.regions.size(); ++m) {
        const std::size_t regions = shape.regions[m];
        RngStream pick(seed, "spec/affected/m" + std::to_string(m));
        std::vector<std::size_t> all(regions);
        std::iota(all.begin(), all.end(), std::size_t{0});
        for (std::size_t i = regions; i > 1; --i) {
            std::swap(all[i - 1], all[pick.below(i)]);
        }
        std::vector<std::size_t> affected(all.begin(),
                                          all.begin() + static_cast<std::ptrdiff_t>(shape.affected_count.at(m)));
        std::sort(affected.begin(), affected.end());

        RngStream load(seed, "spec/loading/m" + std::to_string(m));
        Matrix l(k, regions);
        for (std::size_t t = 0; t < k; ++t) {
            const bool abnormal =
                std::find(s.abnormal_dims.begin(), s.abnormal_dims.end(), t) != s.abnormal_dims.end();
            for (std::size_t r = 0; r < regions; ++r) {
                const double draw = load.normal() * (abnormal ? shape.abnormal_load_scale : shape.load_scale);
                const bool on = !abnormal || std::binary_search(affected.begin(), affected.end(), r);
                l(t, r) = on ? draw : 0.0;
            }
        }
        RngStream cov(seed, "spec/covariates/m" + std::to_string(m));
        Vector age(regions), sex(regions);
        for (std::size_t r = 0; r < regions; ++r) {
            age[r] = cov.normal() * shape.covariate_scale;
            sex[r] = cov.normal() * shape.covariate_scale;
        }
        s.loadings.push_back(std::move(l));
        s.affected_regions.push_back(std::move(affected));
        s.age_effect.push_back(std::move(age));
        s.sex_effect.push_back(std::move(sex));
    }
    return s;
}

void validate_spec(const SynthSpec& s) {
    const std::size_t n_mod = s.loadings.size();
    if (n_mod == 0) {
        throw ArgumentError("synth spec: no modalities");
    }
    if (s.true_latent_dim == 0) {
        throw ArgumentError("synth spec: true_latent_dim must be positive");
    }
    if (s.affected_regions.size() != n_mod || s.age_effect.size() != n_mod || s.sex_effect.size() != n_mod) {
        throw ArgumentError("synth spec: per-modality fields disagree on modality count");
    }
    for (std::size_t m = 0; m < n_mod; ++m) {
        const auto& l = s.loadings[m];
        if (l.rows() != s.true_latent_dim || l.cols() == 0) {
            throw ArgumentError("synth spec: loading matrix must be (true_latent_dim x regions)");
        }
        if (s.age_effect[m].size() != l.cols() || s.sex_effect[m].size() != l.cols()) {
            throw ArgumentError("synth spec: covariate effect length differs from region count");
        }
        for (std::size_t r : s.affected_regions[m]) {
            if (r >= l.cols()) {
                throw ArgumentError("synth spec: affected region out of range");
            }
        }
    }
    if (s.stage_shifts.size() != 3 || s.n_per_stage.size() != 3) {
        throw ArgumentError("synth spec: exactly three disease stages expected");
    }
    for (std::size_t i = 1; i < s.stage_shifts.size(); ++i) {
        if (s.stage_shifts[i] < s.stage_shifts[i - 1]) {
            throw ArgumentError("synth spec: stage_shifts must be non-decreasing");
        }
    }
    const bool any_shift = std::any_of(s.stage_shifts.begin(), s.stage_shifts.end(), [](double x) { return x != 0.0; });
    if (any_shift && s.abnormal_dims.empty()) {
        throw ArgumentError("synth spec: abnormal_dims empty while stage shifts are non-zero");
    }
    for (std::size_t d : s.abnormal_dims) {
        if (d >= s.true_latent_dim) {
            throw ArgumentError("synth spec: abnormal dimension out of range");
        }
    }
    if (!(s.noise_std >= 0.0)) {
        throw ArgumentError("synth spec: noise_std must be non-negative");
    }
    if (!(s.age_min >= 40.0 && s.age_max <= 100.0 && s.age_min < s.age_max)) {
        throw ArgumentError("synth spec: age range must lie inside [40, 100]");
    }
}

Cohort generate(const SynthSpec& spec) {
    validate_spec(spec);
    const std::size_t n_mod = spec.loadings.size();
    const std::size_t k = spec.true_latent_dim;

    std::vector<std::pair<Stage, double>> plan;
    plan.insert(plan.end(), spec.n_controls, {Stage::Control, 0.0});
    plan.insert(plan.end(), spec.n_holdout, {Stage::Holdout, 0.0});
    const Stage disease[] = {Stage::Stage1, Stage::Stage2, Stage::Stage3};
    for (std::size_t s = 0; s < 3; ++s) {
        plan.insert(plan.end(), spec.n_per_stage[s], {disease[s], spec.stage_shifts[s]});
    }

    const std::size_t n = plan.size();
    Cohort c;
    for (std::size_t m = 0; m < n_mod; ++m) {
        c.features.emplace_back(n, spec.loadings[m].cols());
    }
    Vector t(k);
    char id[32];
    for (std::size_t j = 0; j < n; ++j) {
        std::snprintf(id, sizeof id, "sub-%04zu", j + 1);
        const auto [stage, shift] = plan[j];
        RngStream rng(spec.seed, std::string("subject/") + id);
        const double age = spec.age_min + (spec.age_max - spec.age_min) * rng.uniform();
        const Sex sex = rng.uniform() < 0.5 ? Sex::Female : Sex::Male;
        for (double& v : t) {
            v = rng.normal();
        }
        for (std::size_t d : spec.abnormal_dims) {
            t[d] += shift;
        }
        const double age_units = (age - 70.0) / 10.0;
        const double sex_sign = sex == Sex::Male ? 1.0 : -1.0;
        for (std::size_t m = 0; m < n_mod; ++m) {
            const auto& l = spec.loadings[m];
            auto row = c.features[m].row(j);
            for (std::size_t r = 0; r < l.cols(); ++r) {
                double v = spec.age_effect[m][r] * age_units + spec.sex_effect[m][r] * sex_sign;
                for (std::size_t q = 0; q < k; ++q) {
                    v += t[q] * l(q, r);
                }
                row[r] = v + spec.noise_std * rng.normal();
            }
        }
        const double injected = shift * static_cast<double>(spec.abnormal_dims.size());
        const double cog = spec.cognition_base + spec.cognition_slope * injected + spec.cognition_noise * rng.normal();

        c.subject_ids.emplace_back(id);
        c.stages.push_back(stage);
        c.ages.push_back(age);
        c.sexes.push_back(sex);
        c.cognition.push_back(std::clamp(cog, 0.0, 70.0));
    }
    c.covariates = covariate_matrix(c.ages, c.sexes);
    return c;
}

std::pair<Cohort, NormStats> normalize_by_controls(const Cohort& cohort) {
    const auto rows = cohort.rows_with(Stage::Control);
    if (rows.size() < 2) {
        throw InsufficientDataError("normalize_by_controls: need at least two training controls");
    }
    NormStats stats;
    const double n = static_cast<double>(rows.size());
    for (std::size_t m = 0; m < cohort.n_modalities(); ++m) {
        const Matrix& x = cohort.features[m];
        Vector mean(x.cols(), 0.0), sd(x.cols(), 0.0);
        for (std::size_t r : rows) {
            for (std::size_t c = 0; c < x.cols(); ++c) {
                mean[c] += x(r, c);
            }
        }
        for (double& v : mean) {
            v /= n;
        }
        for (std::size_t r : rows) {
            for (std::size_t c = 0; c < x.cols(); ++c) {
                const double dlt = x(r, c) - mean[c];
                sd[c] += dlt * dlt;
            }
        }
        for (std::size_t c = 0; c < x.cols(); ++c) {
            sd[c] = std::sqrt(sd[c] / (n - 1.0));
            if (!(sd[c] > 0.0)) {
                throw DegenerateError("normalize_by_controls: zero control std in modality " +
                                      std::to_string(m + 1) + " region " + std::to_string(c + 1));
            }
        }
        stats.mean.push_back(std::move(mean));
        stats.std.push_back(std::move(sd));
    }
    return {apply_normalization(cohort, stats), std::move(stats)};
}

Cohort apply_normalization(const Cohort& cohort, const NormStats& stats) {
    if (stats.mean.size() != cohort.n_modalities()) {
        throw DimensionError("apply_normalization: modality count mismatch");
    }
    Cohort out = cohort;
    for (std::size_t m = 0; m < out.n_modalities(); ++m) {
        Matrix& x = out.features[m];
        if (stats.mean[m].size() != x.cols() || stats.std[m].size() != x.cols()) {
            throw DimensionError("apply_normalization: region count mismatch");
        }
        for (std::size_t r = 0; r < x.rows(); ++r) {
            for (std::size_t c = 0; c < x.cols(); ++c) {
                x(r, c) = (x(r, c) - stats.mean[m][c]) / stats.std[m][c];
            }
        }
    }
    return out;
}

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
        out.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

double parse_double(const std::string& s, std::size_t line, const char* what) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
        throw ParseError(std::string("bad ") + what + " value '" + s + "'", line);
    }
    return v;
}

} // namespace

void write_cohort(const Cohort& cohort, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw DataError("cannot write cohort " + path.string());
    }
    os << "subject_id,stage,age,sex,cog";
    char buf[32];
    for (std::size_t m = 0; m < cohort.n_modalities(); ++m) {
        for (std::size_t r = 0; r < cohort.features[m].cols(); ++r) {
            std::snprintf(buf, sizeof buf, ",m%zu_r%03zu", m + 1, r + 1);
            os << buf;
        }
    }
    os << '\n';
    for (std::size_t j = 0; j < cohort.size(); ++j) {
        os << cohort.subject_ids[j] << ',' << to_string(cohort.stages[j]) << ',' << format_double(cohort.ages[j])
           << ',' << (cohort.sexes[j] == Sex::Female ? 'F' : 'M') << ',' << format_double(cohort.cognition[j]);
        for (const auto& f : cohort.features) {
            for (double v : f.row(j)) {
                os << ',' << format_double(v);
            }
        }
        os << '\n';
    }
    if (!os) {
        throw DataError("failed writing cohort " + path.string());
    }
}

Cohort read_cohort(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DataError("cannot open cohort " + path.string());
    }
    std::string line;
    if (!std::getline(is, line)) {
        throw ParseError("missing header", 1);
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    const auto header = split_commas(line);
    const char* fixed[] = {"subject_id", "stage", "age", "sex", "cog"};
    if (header.size() < 6) {
        throw ParseError("header needs subject_id,stage,age,sex,cog and feature columns", 1);
    }
    for (std::size_t i = 0; i < 5; ++i) {
        if (header[i] != fixed[i]) {
            throw ParseError("header column " + std::to_string(i + 1) + " should be '" + fixed[i] + "'", 1);
        }
    }
    // Feature columns must run m1_r001.., m2_r001.., in order.
    std::vector<std::size_t> regions;
    char expect[32];
    for (std::size_t i = 5; i < header.size(); ++i) {
        std::size_t m = regions.empty() ? 1 : regions.size();
        std::size_t r = regions.empty() ? 1 : regions.back() + 1;
        std::snprintf(expect, sizeof expect, "m%zu_r%03zu", m, r);
        if (!regions.empty() && header[i] == expect) {
            ++regions.back();
            continue;
        }
        std::snprintf(expect, sizeof expect, "m%zu_r%03zu", regions.size() + 1, std::size_t{1});
        if (header[i] != expect) {
            throw ParseError("unexpected feature column '" + header[i] + "'", 1);
        }
        regions.push_back(1);
    }

    Cohort c;
    std::vector<std::vector<double>> feats(regions.size());
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto f = split_commas(line);
        if (f.size() != header.size()) {
            throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                                 std::to_string(f.size()),
                             lineno);
        }
        if (f[0].empty()) {
            throw ParseError("empty subject_id", lineno);
        }
        c.subject_ids.push_back(f[0]);
        try {
            c.stages.push_back(parse_stage(f[1]));
        } catch (const ArgumentError&) {
            throw ParseError("unknown stage label '" + f[1] + "'", lineno);
        }
        const double age = parse_double(f[2], lineno, "age");
        if (!(age >= 40.0 && age <= 100.0)) {
            throw ParseError("age outside [40, 100]", lineno);
        }
        c.ages.push_back(age);
        if (f[3] == "F") {
            c.sexes.push_back(Sex::Female);
        } else if (f[3] == "M") {
            c.sexes.push_back(Sex::Male);
        } else {
            throw ParseError("sex must be F or M, found '" + f[3] + "'", lineno);
        }
        c.cognition.push_back(parse_double(f[4], lineno, "cog"));
        std::size_t col = 5;
        for (std::size_t m = 0; m < regions.size(); ++m) {
            for (std::size_t r = 0; r < regions[m]; ++r) {
                feats[m].push_back(parse_double(f[col++], lineno, "feature"));
            }
        }
    }
    for (std::size_t m = 0; m < regions.size(); ++m) {
        c.features.emplace_back(c.subject_ids.size(), regions[m], std::move(feats[m]));
    }
    c.covariates = covariate_matrix(c.ages, c.sexes);
    return c;
}

} // namespace normkit
