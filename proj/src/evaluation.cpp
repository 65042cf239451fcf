#include "normkit/evaluation.hpp"

#include "normkit/errors.hpp"
#include "normkit/model.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace normkit {

LikelihoodRatio likelihood_ratio(const std::vector<bool>& disease_flags, const std::vector<bool>& holdout_flags) {
    if (disease_flags.empty() || holdout_flags.empty()) {
        throw ArgumentError("likelihood_ratio: both cohorts must be non-empty");
    }
    auto fraction = [](const std::vector<bool>& f) {
        return static_cast<double>(std::count(f.begin(), f.end(), true)) / static_cast<double>(f.size());
    };
    LikelihoodRatio lr;
    lr.disease_fraction = fraction(disease_flags);
    lr.holdout_fraction = fraction(holdout_flags);
    double denom = lr.holdout_fraction;
    if (denom == 0.0) {
        denom = 0.5 / static_cast<double>(holdout_flags.size());
        lr.corrected = true;
    }
    lr.value = lr.disease_fraction / denom;
    return lr;
}

namespace {

double mean_of(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample variance (n-1).
double var_of(std::span<const double> v, double mean) {
    double s = 0.0;
    for (double x : v) {
        s += (x - mean) * (x - mean);
    }
    return s / static_cast<double>(v.size() - 1);
}

} // namespace

double cohens_d(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) {
        throw InsufficientDataError("cohens_d: each group needs at least two values");
    }
    const double ma = mean_of(a), mb = mean_of(b);
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double pooled = ((na - 1.0) * var_of(a, ma) + (nb - 1.0) * var_of(b, mb)) / (na + nb - 2.0);
    if (!(pooled > 0.0)) {
        throw DegenerateError("cohens_d: zero pooled variance");
    }
    return (ma - mb) / std::sqrt(pooled);
}

std::vector<bool> bh_fdr(std::span<const double> pvals, double q) {
    const std::size_t m = pvals.size();
    std::vector<bool> reject(m, false);
    if (m == 0) {
        return reject;
    }
    if (!(q > 0.0 && q < 1.0)) {
        throw ArgumentError("bh_fdr: q must lie in (0, 1)");
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pvals[a] < pvals[b]; });
    std::size_t k = 0;
    for (std::size_t rank = 1; rank <= m; ++rank) {
        if (pvals[order[rank - 1]] <= static_cast<double>(rank) * q / static_cast<double>(m)) {
            k = rank;
        }
    }
    for (std::size_t rank = 1; rank <= k; ++rank) {
        reject[order[rank - 1]] = true;
    }
    return reject;
}

WelchResult welch_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) {
        throw InsufficientDataError("welch_test: each group needs at least two values");
    }
    const double ma = mean_of(a), mb = mean_of(b);
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double sa = var_of(a, ma) / na, sb = var_of(b, mb) / nb;
    WelchResult r;
    const double se2 = sa + sb;
    if (!(se2 > 0.0)) {
        r.t = ma == mb ? 0.0 : std::copysign(INFINITY, ma - mb);
        r.df = na + nb - 2.0;
        r.p = ma == mb ? 1.0 : 0.0;
        return r;
    }
    r.t = (ma - mb) / std::sqrt(se2);
    r.df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    const boost::math::students_t dist(r.df);
    r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
    r.p = std::min(1.0, r.p);
    return r;
}

namespace {

// Least squares via the normal equations. Returns coefficients and the
// inverse of X^T X. Pivots below 1e-10 of their original diagonal mark the
// design as singular.
struct OlsFit {
    Vector beta;
    Matrix xtx_inv;
    Vector residuals;
};

OlsFit ols(const Matrix& design, std::span<const double> y) {
    const std::size_t n = design.rows();
    const std::size_t p = design.cols();
    const Matrix xtx = matmul_tn(design, design);
    Vector xty(p, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < p; ++c) {
            xty[c] += design(i, c) * y[i];
        }
    }
    // Cholesky with a relative pivot test
    Matrix l(p, p);
    for (std::size_t j = 0; j < p; ++j) {
        double diag = xtx(j, j);
        for (std::size_t k = 0; k < j; ++k) {
            diag -= l(j, k) * l(j, k);
        }
        if (!(diag > 1e-10 * xtx(j, j)) || !(xtx(j, j) > 0.0)) {
            throw DegenerateError("adjusted_regression: singular design (column " + std::to_string(j) + ")");
        }
        l(j, j) = std::sqrt(diag);
        for (std::size_t i = j + 1; i < p; ++i) {
            double s = xtx(i, j);
            for (std::size_t k = 0; k < j; ++k) {
                s -= l(i, k) * l(j, k);
            }
            l(i, j) = s / l(j, j);
        }
    }
    OlsFit fit;
    fit.beta = backward_substitute_t(l, forward_substitute(l, xty));
    fit.xtx_inv = Matrix(p, p);
    Vector e(p, 0.0);
    for (std::size_t c = 0; c < p; ++c) {
        std::fill(e.begin(), e.end(), 0.0);
        e[c] = 1.0;
        const Vector col = backward_substitute_t(l, forward_substitute(l, e));
        for (std::size_t r = 0; r < p; ++r) {
            fit.xtx_inv(r, c) = col[r];
        }
    }
    fit.residuals.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        fit.residuals[i] = y[i] - dot(design.row(i), fit.beta);
    }
    return fit;
}

Matrix design_matrix(std::span<const double> x, const Matrix& covariates) {
    const std::size_t n = covariates.rows();
    const std::size_t extra = x.empty() ? 0 : 1;
    Matrix d(n, 1 + extra + covariates.cols());
    for (std::size_t i = 0; i < n; ++i) {
        d(i, 0) = 1.0;
        if (extra) {
            d(i, 1) = x[i];
        }
        for (std::size_t c = 0; c < covariates.cols(); ++c) {
            d(i, 1 + extra + c) = covariates(i, c);
        }
    }
    return d;
}

double pearson(std::span<const double> a, std::span<const double> b) {
    const double ma = mean_of(a), mb = mean_of(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (!(saa > 0.0) || !(sbb > 0.0)) {
        throw DegenerateError("pearson: zero variance");
    }
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

} // namespace

RegressionResult adjusted_regression(std::span<const double> y, std::span<const double> x, const Matrix& covariates) {
    const std::size_t n = y.size();
    if (x.size() != n || covariates.rows() != n) {
        throw DimensionError("adjusted_regression: rows not aligned");
    }
    const std::size_t p = 2 + covariates.cols();
    if (n <= p) {
        throw InsufficientDataError("adjusted_regression: need more rows than coefficients");
    }
    const auto full = ols(design_matrix(x, covariates), y);
    RegressionResult r;
    r.n = n;
    r.intercept = full.beta[0];
    r.slope = full.beta[1];
    r.covariate_coefs.assign(full.beta.begin() + 2, full.beta.end());
    double rss = 0.0;
    for (double e : full.residuals) {
        rss += e * e;
    }
    const double dof = static_cast<double>(n - p);
    r.slope_se = std::sqrt(rss / dof * full.xtx_inv(1, 1));
    if (r.slope_se > 0.0) {
        r.slope_t = r.slope / r.slope_se;
        const boost::math::students_t dist(dof);
        r.slope_p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.slope_t))));
    } else {
        r.slope_t = r.slope == 0.0 ? 0.0 : std::copysign(INFINITY, r.slope);
        r.slope_p = r.slope == 0.0 ? 1.0 : 0.0;
    }
    const Matrix base = design_matrix({}, covariates);
    const auto ry = ols(base, y).residuals;
    const auto rx = ols(base, x).residuals;
    r.r = pearson(ry, rx);
    return r;
}

std::vector<std::size_t> select_significant_dims(const Matrix& z_latent, double threshold) {
    if (z_latent.rows() == 0 || z_latent.cols() == 0) {
        throw ArgumentError("select_significant_dims: empty matrix");
    }
    if (!(threshold > 0.0)) {
        throw ArgumentError("select_significant_dims: threshold must be positive");
    }
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < z_latent.cols(); ++c) {
        double s = 0.0;
        for (std::size_t r = 0; r < z_latent.rows(); ++r) {
            s += std::abs(z_latent(r, c));
        }
        if (s / static_cast<double>(z_latent.rows()) > threshold) {
            out.push_back(c);
        }
    }
    return out;
}

Matrix selective_feature_zscores(const MvnModel& model, const Cohort& cohort, const Matrix& latents,
                                 const std::vector<std::size_t>& selected) {
    if (latents.rows() != cohort.size()) {
        throw DimensionError("selective_feature_zscores: latents not aligned with cohort");
    }
    const std::size_t total = model.config.total_regions();
    Matrix errors(cohort.size(), total);
    for (std::size_t j = 0; j < cohort.size(); ++j) {
        const auto recon = decode_selected_dims(model, latents.row(j), selected);
        std::size_t offset = 0;
        for (std::size_t m = 0; m < recon.size(); ++m) {
            for (std::size_t r = 0; r < recon[m].size(); ++r) {
                const double diff = cohort.features[m](j, r) - recon[m][r];
                errors(j, offset + r) = diff * diff;
            }
            offset += recon[m].size();
        }
    }
    const auto controls = cohort.rows_with(Stage::Control);
    if (controls.size() < 2) {
        throw InsufficientDataError("effect maps need at least two training controls");
    }
    const auto [mean, sd] = column_mean_std(take_rows(errors, controls));
    Matrix z(cohort.size(), total);
    for (std::size_t j = 0; j < cohort.size(); ++j) {
        const auto zr = zscores(errors.row(j), mean, sd);
        std::copy(zr.begin(), zr.end(), z.row(j).begin());
    }
    return z;
}

std::vector<EffectMap> effect_maps(const MvnModel& model, const Cohort& cohort, const Matrix& latents,
                                   const std::vector<std::size_t>& selected, double q) {
    const Matrix z = selective_feature_zscores(model, cohort, latents, selected);
    const auto controls = cohort.rows_with(Stage::Control);
    std::vector<EffectMap> maps;
    for (Stage stage : {Stage::Stage1, Stage::Stage2, Stage::Stage3}) {
        const auto rows = cohort.rows_with(stage);
        if (rows.empty()) {
            continue;
        }
        if (rows.size() < 2) {
            throw InsufficientDataError("effect_maps: stage '" + std::string(to_string(stage)) +
                                        "' has fewer than two subjects");
        }
        EffectMap em;
        em.stage = stage;
        std::size_t col = 0;
        for (std::size_t m = 0; m < model.config.modalities.size(); ++m) {
            for (std::size_t r = 0; r < model.config.modalities[m].input_dim; ++r, ++col) {
                Vector a, b;
                for (std::size_t i : rows) {
                    a.push_back(z(i, col));
                }
                for (std::size_t i : controls) {
                    b.push_back(z(i, col));
                }
                em.modality.push_back(m);
                em.region.push_back(r);
                em.p_value.push_back(welch_test(a, b).p);
                double d = 0.0;
                try {
                    d = cohens_d(a, b);
                } catch (const DegenerateError&) {
                    d = 0.0;
                }
                em.cohens_d.push_back(d);
            }
        }
        em.significant = bh_fdr(em.p_value, q);
        maps.push_back(std::move(em));
    }
    return maps;
}

double quantile(std::vector<double> v, double p) {
    if (v.empty()) {
        throw InsufficientDataError("quantile of empty data");
    }
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

GroupSummary group_summary(const DeviationReport& report, const std::vector<Stage>& order) {
    if (order.size() < 2) {
        throw ArgumentError("group_summary: need at least two stages");
    }
    GroupSummary g;
    std::vector<Vector> lat(order.size()), feat(order.size());
    for (std::size_t s = 0; s < order.size(); ++s) {
        for (const auto& r : report) {
            if (r.stage == order[s]) {
                lat[s].push_back(r.d_latent);
                feat[s].push_back(r.d_feature);
            }
        }
        if (lat[s].empty()) {
            throw ArgumentError("group_summary: stage '" + std::string(to_string(order[s])) + "' is empty");
        }
        if (lat[s].size() < 2) {
            throw InsufficientDataError("group_summary: stage '" + std::string(to_string(order[s])) +
                                        "' has a single subject");
        }
        StageStats st;
        st.stage = order[s];
        st.n = lat[s].size();
        st.mean_d_latent = mean_of(lat[s]);
        st.mean_d_feature = mean_of(feat[s]);
        const double ps[] = {0.0, 0.25, 0.5, 0.75, 1.0};
        for (std::size_t i = 0; i < 5; ++i) {
            st.box_latent[i] = quantile(lat[s], ps[i]);
            st.box_feature[i] = quantile(feat[s], ps[i]);
        }
        st.median_d_latent = st.box_latent[2];
        st.median_d_feature = st.box_feature[2];
        g.stages.push_back(st);
    }
    for (std::size_t a = 0; a < order.size(); ++a) {
        for (std::size_t b = a + 1; b < order.size(); ++b) {
            g.pairs.push_back({order[a], order[b], welch_test(lat[a], lat[b]), welch_test(feat[a], feat[b])});
        }
    }
    return g;
}

namespace {

const char* num(double v, char (&buf)[40]) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void write_group_summary(const GroupSummary& g, const std::filesystem::path& stages_path,
                         const std::filesystem::path& pairs_path) {
    char buf[40];
    {
        std::ofstream os(stages_path, std::ios::binary);
        if (!os) {
            throw DataError("cannot write " + stages_path.string());
        }
        os << "stage,n,metric,mean,median,min,q1,q3,max\n";
        for (const auto& s : g.stages) {
            for (int which = 0; which < 2; ++which) {
                const auto& box = which == 0 ? s.box_latent : s.box_feature;
                os << to_string(s.stage) << ',' << s.n << ',' << (which == 0 ? "D_ml" : "D_mf") << ',';
                os << num(which == 0 ? s.mean_d_latent : s.mean_d_feature, buf) << ',';
                os << num(box[2], buf) << ',' << num(box[0], buf) << ',' << num(box[1], buf) << ',';
                os << num(box[3], buf) << ',' << num(box[4], buf) << '\n';
            }
        }
    }
    std::ofstream os(pairs_path, std::ios::binary);
    if (!os) {
        throw DataError("cannot write " + pairs_path.string());
    }
    os << "stage_a,stage_b,metric,t,df,p\n";
    for (const auto& p : g.pairs) {
        for (int which = 0; which < 2; ++which) {
            const auto& w = which == 0 ? p.latent : p.feature;
            os << to_string(p.a) << ',' << to_string(p.b) << ',' << (which == 0 ? "D_ml" : "D_mf") << ',';
            os << num(w.t, buf) << ',' << num(w.df, buf) << ',' << num(w.p, buf) << '\n';
        }
    }
}

void write_effect_maps(const std::vector<EffectMap>& maps, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw DataError("cannot write " + path.string());
    }
    char buf[40];
    os << "region,modality,stage_pair,cohens_d,p,significant\n";
    for (const auto& m : maps) {
        for (std::size_t i = 0; i < m.cohens_d.size(); ++i) {
            std::snprintf(buf, sizeof buf, "r%03zu", m.region[i] + 1);
            os << buf << ",m" << m.modality[i] + 1 << ",control-" << to_string(m.stage) << ',';
            // regions that did not survive FDR are left blank
            if (m.significant[i]) {
                os << num(m.cohens_d[i], buf);
            }
            os << ',' << num(m.p_value[i], buf) << ',' << (m.significant[i] ? 1 : 0) << '\n';
        }
    }
}

} // namespace normkit
