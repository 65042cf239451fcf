#include "normkit/pipeline.hpp"

#include "normkit/errors.hpp"
#include "normkit/evaluation.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace normkit {

namespace fs = std::filesystem;

fs::path RunConfig::cohort_path() const { return cohort.empty() ? out / "cohort.csv" : cohort; }
fs::path RunConfig::model_path() const { return model.empty() ? out / "model.ckpt" : model; }

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class T>
std::string join(const std::vector<T>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) {
            s += ',';
        }
        if constexpr (std::is_floating_point_v<T>) {
            s += fmt(v[i]);
        } else {
            s += std::to_string(v[i]);
        }
    }
    return s;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::size_t to_count(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    unsigned long long n = 0;
    try {
        n = std::stoull(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    }
    if (pos != v.size() || v.front() == '-') {
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    }
    return static_cast<std::size_t>(n);
}

double to_real(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    }
    if (pos != v.size() || !std::isfinite(x)) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    }
    return x;
}

template <class F>
auto to_list(const std::string& key, const std::string& v, F parse) {
    std::vector<decltype(parse(key, v))> out;
    std::istringstream ss(v);
    for (std::string tok; std::getline(ss, tok, ',');) {
        out.push_back(parse(key, trim(tok)));
    }
    if (out.empty()) {
        throw ConfigError("config key '" + key + "': empty list");
    }
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true") {
        return true;
    }
    if (v == "0" || v == "false") {
        return false;
    }
    throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

} // namespace

void apply_config_value(RunConfig& c, const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    if (v.empty()) {
        throw ConfigError("config key '" + key + "' has an empty value");
    }
    if (key == "out") {
        c.out = v;
    } else if (key == "cohort") {
        c.cohort = v;
    } else if (key == "model") {
        c.model = v;
    } else if (key == "seed") {
        c.seed = to_count(key, v);
    } else if (key == "epochs") {
        c.epochs = to_count(key, v);
    } else if (key == "lr") {
        c.lr = to_real(key, v);
    } else if (key == "batch_size") {
        c.batch_size = to_count(key, v);
    } else if (key == "strategy") {
        try {
            c.strategy = parse_strategy(v);
        } catch (const ArgumentError& e) {
            throw ConfigError(e.what());
        }
    } else if (key == "latent_dim") {
        c.latent_dim = to_count(key, v);
    } else if (key == "latent_dims") {
        c.latent_dims = to_list(key, v, to_count);
    } else if (key == "hidden_dims") {
        c.hidden_dims = to_list(key, v, to_count);
    } else if (key == "mopoe_include_empty") {
        c.mopoe_include_empty = to_bool(key, v);
    } else if (key == "alpha") {
        c.alpha = to_real(key, v);
    } else if (key == "fdr_q") {
        c.fdr_q = to_real(key, v);
    } else if (key == "z_threshold") {
        c.z_threshold = to_real(key, v);
    } else if (key == "mode") {
        try {
            c.mode = parse_latent_mode(v);
        } catch (const ArgumentError& e) {
            throw ConfigError(e.what());
        }
    } else if (key == "ridge") {
        c.ridge = to_real(key, v);
    } else if (key == "feature_shrinkage") {
        c.feature_shrinkage = to_real(key, v);
    } else if (key == "n_controls") {
        c.n_controls = to_count(key, v);
    } else if (key == "n_holdout") {
        c.n_holdout = to_count(key, v);
    } else if (key == "n_per_stage") {
        c.n_per_stage = to_list(key, v, to_count);
    } else if (key == "stage_shifts") {
        c.stage_shifts = to_list(key, v, to_real);
    } else if (key == "noise_std") {
        c.noise_std = to_real(key, v);
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
    c.explicit_keys.insert(key);
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw ConfigError("cannot open config " + path.string());
    }
    RunConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
        }
        try {
            apply_config_value(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return cfg;
}

void validate_run_config(const RunConfig& c) {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (!(c.lr > 0.0)) fail("lr must be positive");
    if (c.batch_size == 0) fail("batch_size must be positive");
    if (c.latent_dim == 0) fail("latent_dim must be positive");
    for (auto d : c.latent_dims) {
        if (d == 0) fail("latent_dims entries must be positive");
    }
    for (auto h : c.hidden_dims) {
        if (h == 0) fail("hidden_dims entries must be positive");
    }
    if (!(c.alpha > 0.0 && c.alpha <= 1.0)) fail("alpha must lie in (0, 1]");
    if (!(c.fdr_q > 0.0 && c.fdr_q < 1.0)) fail("fdr_q must lie in (0, 1)");
    if (!(c.z_threshold > 0.0)) fail("z_threshold must be positive");
    if (!(c.ridge >= 0.0)) fail("ridge must be non-negative");
    if (!(c.feature_shrinkage >= 0.0 && c.feature_shrinkage <= 1.0)) fail("feature_shrinkage must lie in [0, 1]");
    if (c.n_per_stage.size() != 3) fail("n_per_stage needs three entries");
    if (c.stage_shifts.size() != 3) fail("stage_shifts needs three entries");
    if (!std::is_sorted(c.stage_shifts.begin(), c.stage_shifts.end())) fail("stage_shifts must be non-decreasing");
    if (!(c.noise_std >= 0.0)) fail("noise_std must be non-negative");
}

std::vector<std::string> RunConfig::echo() const {
    std::vector<std::string> lines = {
        "alpha=" + fmt(alpha),
        "batch_size=" + std::to_string(batch_size),
        "cohort=" + cohort_path().generic_string(),
        "epochs=" + std::to_string(epochs),
        "fdr_q=" + fmt(fdr_q),
        "feature_shrinkage=" + fmt(feature_shrinkage),
        "hidden_dims=" + join(hidden_dims),
        "latent_dim=" + std::to_string(latent_dim),
        "latent_dims=" + join(latent_dims),
        "lr=" + fmt(lr),
        "mode=" + std::string(to_string(mode)),
        "model=" + model_path().generic_string(),
        "mopoe_include_empty=" + std::string(mopoe_include_empty ? "true" : "false"),
        "n_controls=" + std::to_string(n_controls),
        "n_holdout=" + std::to_string(n_holdout),
        "n_per_stage=" + join(n_per_stage),
        "noise_std=" + fmt(noise_std),
        "out=" + out.generic_string(),
        "ridge=" + fmt(ridge),
        "seed=" + std::to_string(seed),
        "stage_shifts=" + join(stage_shifts),
        "strategy=" + std::string(to_string(strategy)),
        "z_threshold=" + fmt(z_threshold),
    };
    return lines;
}

SynthSpec synth_spec_from(const RunConfig& cfg) {
    SynthSpec s = reference_spec(cfg.seed);
    s.n_controls = cfg.n_controls;
    s.n_holdout = cfg.n_holdout;
    s.n_per_stage = cfg.n_per_stage;
    s.stage_shifts = cfg.stage_shifts;
    s.noise_std = cfg.noise_std;
    return s;
}

ModelConfig model_config_from(const RunConfig& cfg, const Cohort& cohort) {
    ModelConfig mc;
    mc.latent_dim = cfg.latent_dim;
    mc.strategy = cfg.strategy;
    mc.aggregation.mopoe_include_empty = cfg.mopoe_include_empty;
    for (std::size_t m = 0; m < cohort.n_modalities(); ++m) {
        mc.modalities.push_back({"m" + std::to_string(m + 1), cohort.features[m].cols(), cfg.hidden_dims});
    }
    return mc;
}

namespace {

std::string sha256_hex(const std::function<void(EVP_MD_CTX*)>& feed) {
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    feed(ctx);
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::string hex;
    char h[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(h, sizeof h, "%02x", md[i]);
        hex += h;
    }
    return hex;
}

std::string text_digest(const std::string& text) {
    return sha256_hex([&](EVP_MD_CTX* ctx) { EVP_DigestUpdate(ctx, text.data(), text.size()); });
}

} // namespace

std::string file_digest(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DataError("cannot read " + path.string() + " for digest");
    }
    return sha256_hex([&](EVP_MD_CTX* ctx) {
        std::vector<char> buf(1 << 16);
        while (is) {
            is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
            EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(is.gcount()));
        }
    });
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) {
        return 2;
    }
    if (dynamic_cast<const DataError*>(&e)) {
        return 3;
    }
    if (dynamic_cast<const NumericError*>(&e)) {
        return 4;
    }
    return 1;
}

std::vector<CompareRow> compare_rows() {
    return {
        {"mopoe", Strategy::MoPoE, {}, false},     {"poe", Strategy::PoE, {}, false},
        {"moe", Strategy::MoE, {}, false},         {"gpoe", Strategy::gPoE, {}, false},
        {"mri-only", Strategy::PoE, {0}, false},   {"amyloid-only", Strategy::PoE, {1}, false},
        {"concat", Strategy::PoE, {}, true},
    };
}

std::pair<LikelihoodRatio, LikelihoodRatio> report_likelihood_ratios(const DeviationReport& report) {
    std::vector<bool> dl, df, hl, hf;
    for (const auto& r : report) {
        if (r.stage == Stage::Holdout) {
            hl.push_back(r.outlier_latent);
            hf.push_back(r.outlier_feature);
        } else if (is_disease(r.stage)) {
            dl.push_back(r.outlier_latent);
            df.push_back(r.outlier_feature);
        }
    }
    return {likelihood_ratio(dl, hl), likelihood_ratio(df, hf)};
}

namespace {

// Records written files; removes them unless commit() is called.
class OutputSet {
public:
    explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}
    OutputSet(const OutputSet&) = delete;
    OutputSet& operator=(const OutputSet&) = delete;
    ~OutputSet() {
        if (committed_) {
            return;
        }
        std::error_code ec;
        for (const auto& p : paths_) {
            fs::remove(p, ec);
        }
    }

    fs::path add(const fs::path& p) {
        paths_.push_back(p);
        return p;
    }
    fs::path file(const std::string& name) { return add(dir_ / name); }
    const std::vector<fs::path>& paths() const { return paths_; }
    void commit() { committed_ = true; }

private:
    fs::path dir_;
    std::vector<fs::path> paths_;
    bool committed_ = false;
};

void require_file(const fs::path& p, const char* what) {
    if (!fs::is_regular_file(p)) {
        throw DataError(std::string("missing ") + what + " file " + p.string());
    }
}

void write_manifest(const fs::path& path, const std::string& command, const RunConfig& cfg,
                    const std::vector<std::pair<std::string, fs::path>>& inputs, const std::vector<fs::path>& outputs) {
    std::ostringstream cfg_text;
    for (const auto& l : cfg.echo()) {
        cfg_text << l << '\n';
    }
    const std::string cfg_digest = text_digest(cfg_text.str());

    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw DataError("cannot write manifest " + path.string());
    }
    os << "command=" << command << '\n';
    os << "seed=" << cfg.seed << '\n';
    for (const auto& l : cfg.echo()) {
        os << "config." << l << '\n';
    }
    os << "config_sha256=" << cfg_digest << '\n';
    for (const auto& [name, p] : inputs) {
        os << "input." << name << "=" << p.filename().generic_string() << ":" << file_digest(p) << '\n';
    }
    for (const auto& p : outputs) {
        if (p == path) {
            continue;
        }
        os << "output." << p.filename().generic_string() << "=" << file_digest(p) << '\n';
    }
}

std::string norm_key(std::size_t m, const char* what) { return "norm.m" + std::to_string(m) + "." + what; }

ParamSet norm_extras(const NormStats& s) {
    ParamSet out;
    for (std::size_t m = 0; m < s.mean.size(); ++m) {
        out.emplace(norm_key(m, "mean"), Matrix(1, s.mean[m].size(), s.mean[m]));
        out.emplace(norm_key(m, "std"), Matrix(1, s.std[m].size(), s.std[m]));
    }
    return out;
}

NormStats norm_from_extras(const ParamSet& extras, std::size_t n_mod) {
    NormStats s;
    for (std::size_t m = 0; m < n_mod; ++m) {
        const auto mi = extras.find(norm_key(m, "mean"));
        const auto si = extras.find(norm_key(m, "std"));
        if (mi == extras.end() || si == extras.end()) {
            throw DataError("checkpoint lacks normalization statistics for modality " + std::to_string(m + 1));
        }
        s.mean.push_back(mi->second.data());
        s.std.push_back(si->second.data());
    }
    return s;
}

void check_checkpoint_matches(const RunConfig& cfg, const ModelConfig& mc) {
    auto mismatch = [](const std::string& key) {
        throw ConfigError("checkpoint/config mismatch on '" + key + "'");
    };
    if (cfg.explicit_keys.count("latent_dim") && cfg.latent_dim != mc.latent_dim) mismatch("latent_dim");
    if (cfg.explicit_keys.count("strategy") && cfg.strategy != mc.strategy) mismatch("strategy");
    if (cfg.explicit_keys.count("mopoe_include_empty") &&
        cfg.mopoe_include_empty != mc.aggregation.mopoe_include_empty) {
        mismatch("mopoe_include_empty");
    }
    if (cfg.explicit_keys.count("hidden_dims")) {
        for (const auto& m : mc.modalities) {
            if (m.hidden_dims != cfg.hidden_dims) mismatch("hidden_dims");
        }
    }
}

struct LoadedModel {
    MvnModel model;
    Cohort cohort; // normalized with the checkpoint's statistics
};

LoadedModel load_model_and_cohort(const RunConfig& cfg) {
    require_file(cfg.model_path(), "checkpoint");
    require_file(cfg.cohort_path(), "cohort");
    auto cp = load_checkpoint(cfg.model_path());
    check_checkpoint_matches(cfg, cp.model.config);
    const Cohort raw = read_cohort(cfg.cohort_path());
    if (raw.n_modalities() != cp.model.config.modalities.size()) {
        throw DataError("cohort has " + std::to_string(raw.n_modalities()) + " modalities, checkpoint expects " +
                        std::to_string(cp.model.config.modalities.size()));
    }
    const auto ns = norm_from_extras(cp.extras, raw.n_modalities());
    return {std::move(cp.model), apply_normalization(raw, ns)};
}

Matrix age_sex(const Cohort& c, const std::vector<std::size_t>& rows) {
    Matrix m(rows.size(), 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        m(i, 0) = c.ages[rows[i]];
        m(i, 1) = c.sexes[rows[i]] == Sex::Male ? 1.0 : 0.0;
    }
    return m;
}

ScoreOptions score_options(const RunConfig& cfg) { return {cfg.alpha, cfg.mode, cfg.seed}; }
CovarianceOptions cov_options(const RunConfig& cfg) { return {cfg.ridge, cfg.feature_shrinkage}; }

void cmd_generate(const RunConfig& cfg, OutputSet& outs, std::vector<std::pair<std::string, fs::path>>&) {
    const Cohort c = generate(synth_spec_from(cfg));
    write_cohort(c, outs.add(cfg.cohort_path()));
}

void cmd_train(const RunConfig& cfg, OutputSet& outs, std::vector<std::pair<std::string, fs::path>>& inputs) {
    require_file(cfg.cohort_path(), "cohort");
    inputs.emplace_back("cohort", cfg.cohort_path());
    const Cohort raw = read_cohort(cfg.cohort_path());
    auto [norm, ns] = normalize_by_controls(raw);
    const Cohort controls = subset_rows(norm, norm.rows_with(Stage::Control));
    MvnModel model = init_model(model_config_from(cfg, norm), cfg.seed);
    const auto result = train(std::move(model), controls, {cfg.epochs, cfg.lr, cfg.batch_size, cfg.seed});
    save_checkpoint(outs.add(cfg.model_path()), result.model, norm_extras(ns));

    std::ofstream os(outs.file("loss_trace.csv"), std::ios::binary);
    os << "epoch,total";
    for (std::size_t m = 0; m < result.model.config.modalities.size(); ++m) {
        os << ",recon_m" << m + 1;
    }
    os << ",kl\n";
    for (std::size_t e = 0; e < result.trace.size(); ++e) {
        const auto& t = result.trace[e];
        os << e + 1 << ',' << fmt(t.total);
        for (double r : t.reconstruction) {
            os << ',' << fmt(r);
        }
        os << ',' << fmt(t.kl) << '\n';
    }
}

void cmd_evaluate(const RunConfig& cfg, OutputSet& outs, std::vector<std::pair<std::string, fs::path>>& inputs) {
    auto [model, cohort] = load_model_and_cohort(cfg);
    inputs.emplace_back("cohort", cfg.cohort_path());
    inputs.emplace_back("model", cfg.model_path());
    const auto fit = fit_and_score(model, cohort, score_options(cfg), cov_options(cfg));
    write_report(fit.report, outs.file("deviation_report.csv"));

    std::vector<Stage> order;
    for (Stage s : kAllStages) {
        if (cohort.rows_with(s).size() >= 2) {
            order.push_back(s);
        }
    }
    if (order.size() >= 2) {
        const auto g = group_summary(fit.report, order);
        write_group_summary(g, outs.file("group_summary.csv"), outs.file("group_pairs.csv"));
    }

    if (!cohort.rows_with(Stage::Holdout).empty() && !cohort.rows_where(is_disease).empty()) {
        const auto [lat, feat] = report_likelihood_ratios(fit.report);
        std::ofstream os(outs.file("likelihood_ratio.csv"), std::ios::binary);
        os << "metric,disease_fraction,holdout_fraction,likelihood_ratio,corrected\n";
        os << "D_ml," << fmt(lat.disease_fraction) << ',' << fmt(lat.holdout_fraction) << ',' << fmt(lat.value)
           << ',' << lat.corrected << '\n';
        os << "D_mf," << fmt(feat.disease_fraction) << ',' << fmt(feat.holdout_fraction) << ',' << fmt(feat.value)
           << ',' << feat.corrected << '\n';
    }

    // regression over every subject not used for training
    std::vector<std::size_t> rows;
    for (std::size_t j = 0; j < cohort.size(); ++j) {
        if (cohort.stages[j] != Stage::Control) {
            rows.push_back(j);
        }
    }
    if (rows.size() > 4) {
        Vector y, x;
        for (std::size_t j : rows) {
            y.push_back(fit.report[j].d_latent);
            x.push_back(cohort.cognition[j]);
        }
        const auto r = adjusted_regression(y, x, age_sex(cohort, rows));
        {
            std::ofstream os(outs.file("regression.csv"), std::ios::binary);
            os << "response,predictor,n,slope,intercept,coef_age,coef_male,slope_se,slope_t,slope_p,pearson_r\n";
            os << "D_ml,cog," << r.n << ',' << fmt(r.slope) << ',' << fmt(r.intercept) << ','
               << fmt(r.covariate_coefs[0]) << ',' << fmt(r.covariate_coefs[1]) << ',' << fmt(r.slope_se) << ','
               << fmt(r.slope_t) << ',' << fmt(r.slope_p) << ',' << fmt(r.r) << '\n';
        }
        std::ofstream os(outs.file("regression_scatter.csv"), std::ios::binary);
        os << "subject_id,stage,age,sex,cog,D_ml\n";
        for (std::size_t j : rows) {
            os << cohort.subject_ids[j] << ',' << to_string(cohort.stages[j]) << ',' << fmt(cohort.ages[j]) << ','
               << (cohort.sexes[j] == Sex::Male ? 'M' : 'F') << ',' << fmt(cohort.cognition[j]) << ','
               << fmt(fit.report[j].d_latent) << '\n';
        }
    }
}

void cmd_compare(const RunConfig& cfg, OutputSet& outs, std::vector<std::pair<std::string, fs::path>>& inputs) {
    require_file(cfg.cohort_path(), "cohort");
    inputs.emplace_back("cohort", cfg.cohort_path());
    const Cohort raw = read_cohort(cfg.cohort_path());
    const auto rows = compare_rows();
    std::vector<CompareCell> cells;
    for (const auto& row : rows) {
        for (std::size_t d : cfg.latent_dims) {
            cells.push_back(run_compare_cell(row, d, raw, cfg));
        }
    }
    {
        std::ofstream os(outs.file("likelihood_ratio_cells.csv"), std::ios::binary);
        os << "model,latent_dim,metric,feature_space,disease_fraction,holdout_fraction,likelihood_ratio,corrected\n";
        for (const auto& c : cells) {
            for (int which = 0; which < 2; ++which) {
                const auto& lr = which == 0 ? c.latent : c.feature;
                os << c.row << ',' << c.latent_dim << ',' << (which == 0 ? "D_ml" : "D_mf") << ','
                   << (which == 0 ? "latent" : c.feature_space) << ',' << fmt(lr.disease_fraction) << ','
                   << fmt(lr.holdout_fraction) << ',' << fmt(lr.value) << ',' << lr.corrected << '\n';
            }
        }
    }
    std::ofstream os(outs.file("likelihood_ratio_grid.csv"), std::ios::binary);
    os << "model";
    for (const char* metric : {"D_ml", "D_mf"}) {
        for (std::size_t d : cfg.latent_dims) {
            os << ',' << metric << "_d" << d;
        }
    }
    os << ",feature_space\n";
    std::size_t i = 0;
    for (const auto& row : rows) {
        const std::size_t n = cfg.latent_dims.size();
        os << row.label;
        for (std::size_t k = 0; k < n; ++k) {
            os << ',' << fmt(cells[i + k].latent.value);
        }
        for (std::size_t k = 0; k < n; ++k) {
            os << ',' << fmt(cells[i + k].feature.value);
        }
        os << ',' << cells[i].feature_space << '\n';
        i += n;
    }
}

void cmd_interpret(const RunConfig& cfg, OutputSet& outs, std::vector<std::pair<std::string, fs::path>>& inputs) {
    auto [model, cohort] = load_model_and_cohort(cfg);
    inputs.emplace_back("cohort", cfg.cohort_path());
    inputs.emplace_back("model", cfg.model_path());
    const auto fit = fit_and_score(model, cohort, score_options(cfg), cov_options(cfg));
    const auto disease = cohort.rows_where(is_disease);
    if (disease.empty()) {
        throw InsufficientDataError("interpret: cohort has no disease subjects");
    }
    Matrix z(disease.size(), model.config.latent_dim);
    for (std::size_t i = 0; i < disease.size(); ++i) {
        const auto& zl = fit.report[disease[i]].z_latent;
        std::copy(zl.begin(), zl.end(), z.row(i).begin());
    }
    const auto selected = select_significant_dims(z, cfg.z_threshold);
    {
        std::ofstream os(outs.file("selected_dims.csv"), std::ios::binary);
        os << "dim,mean_abs_z,selected\n";
        for (std::size_t c = 0; c < z.cols(); ++c) {
            double s = 0.0;
            for (std::size_t r = 0; r < z.rows(); ++r) {
                s += std::abs(z(r, c));
            }
            const bool sel = std::find(selected.begin(), selected.end(), c) != selected.end();
            os << c + 1 << ',' << fmt(s / static_cast<double>(z.rows())) << ',' << (sel ? 1 : 0) << '\n';
        }
    }
    const auto maps = effect_maps(model, cohort, fit.latents, selected, cfg.fdr_q);
    write_effect_maps(maps, outs.file("effect_map.csv"));
}

} // namespace

CompareCell run_compare_cell(const CompareRow& row, std::size_t latent_dim, const Cohort& raw, const RunConfig& cfg) {
    Cohort variant = raw;
    std::string space = "joint";
    if (row.concat) {
        variant = concat_modalities(raw);
    } else if (!row.modalities.empty()) {
        variant = select_modalities(raw, row.modalities);
        space = "single-modality";
    }
    auto [norm, ns] = normalize_by_controls(variant);
    RunConfig cell_cfg = cfg;
    cell_cfg.strategy = row.strategy;
    cell_cfg.latent_dim = latent_dim;
    const std::uint64_t seed = hash_label(cfg.seed, "compare/" + row.label + "/d" + std::to_string(latent_dim));
    const Cohort controls = subset_rows(norm, norm.rows_with(Stage::Control));
    auto trained = train(init_model(model_config_from(cell_cfg, norm), seed), controls,
                         {cfg.epochs, cfg.lr, cfg.batch_size, seed});
    ScoreOptions so = score_options(cfg);
    so.seed = seed;
    const auto fit = fit_and_score(trained.model, norm, so, cov_options(cfg));
    const auto [lat, feat] = report_likelihood_ratios(fit.report);
    return {row.label, latent_dim, lat, feat, space};
}

RunResult run_command(const std::string& name, const RunConfig& cfg) {
    validate_run_config(cfg);
    using Handler = void (*)(const RunConfig&, OutputSet&, std::vector<std::pair<std::string, fs::path>>&);
    static const std::map<std::string, Handler> handlers = {
        {"generate", cmd_generate}, {"train", cmd_train},         {"evaluate", cmd_evaluate},
        {"compare", cmd_compare},   {"interpret", cmd_interpret},
    };
    const auto it = handlers.find(name);
    if (it == handlers.end()) {
        throw ConfigError("unknown command '" + name + "'");
    }
    std::error_code ec;
    fs::create_directories(cfg.out, ec);
    if (ec) {
        throw DataError("cannot create output directory " + cfg.out.string() + ": " + ec.message());
    }
    OutputSet outs(cfg.out);
    std::vector<std::pair<std::string, fs::path>> inputs;
    it->second(cfg, outs, inputs);
    const fs::path manifest = outs.file("manifest_" + name + ".txt");
    write_manifest(manifest, name, cfg, inputs, outs.paths());
    outs.commit();
    RunResult r;
    r.outputs = outs.paths();
    r.manifest = manifest;
    return r;
}

} // namespace normkit
