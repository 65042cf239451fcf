#include "normkit/params.hpp"

#include "normkit/errors.hpp"

#include <algorithm>
#include <cmath>

namespace normkit {

ParamSet zeros_like(const ParamSet& p) {
    ParamSet out;
    for (const auto& [name, m] : p) {
        out.emplace(name, Matrix(m.rows(), m.cols()));
    }
    return out;
}

bool same_shapes(const ParamSet& a, const ParamSet& b) {
    if (a.size() != b.size()) {
        return false;
    }
    for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
        if (ia->first != ib->first || ia->second.rows() != ib->second.rows() ||
            ia->second.cols() != ib->second.cols()) {
            return false;
        }
    }
    return true;
}

std::size_t parameter_count(const ParamSet& p) {
    std::size_t n = 0;
    for (const auto& [_, m] : p) {
        n += m.size();
    }
    return n;
}

AdamState make_adam_state(const ParamSet& params, double lr) {
    AdamState s;
    s.lr = lr;
    s.m = zeros_like(params);
    s.v = zeros_like(params);
    return s;
}

void adam_update(AdamState& state, ParamSet& params, const ParamSet& grads) {
    if (!same_shapes(params, grads)) {
        throw DimensionError("adam: gradient blocks do not mirror parameter blocks");
    }
    if (!same_shapes(params, state.m) || !same_shapes(params, state.v)) {
        throw DimensionError("adam: moment blocks do not mirror parameter blocks");
    }
    for (const auto& [name, g] : grads) {
        if (!g.all_finite()) {
            throw NumericError("adam: non-finite gradient in block '" + name + "'");
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (auto& [name, w] : params) {
        const auto& g = grads.at(name).data();
        auto& m = state.m.at(name).data();
        auto& v = state.v.at(name).data();
        auto& wd = w.data();
        for (std::size_t i = 0; i < wd.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            if (g[i] == 0.0) {
                continue;
            }
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            wd[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

std::pair<ParamSet, AdamState> adam_step(AdamState state, ParamSet params, const ParamSet& grads) {
    adam_update(state, params, grads);
    return {std::move(params), std::move(state)};
}

GradCheckReport grad_check(const std::function<double(const ParamSet&)>& loss,
                           const ParamSet& analytic, const ParamSet& params, double h,
                           double tol, double abs_floor) {
    if (!(h > 0.0)) {
        throw ArgumentError("grad_check: step h must be positive");
    }
    if (!same_shapes(params, analytic)) {
        throw DimensionError("grad_check: analytic gradient does not mirror parameters");
    }
    const double f0 = loss(params);
    const double f0_again = loss(params);
    if (f0 != f0_again) {
        throw ContractError("grad_check: loss function is not deterministic");
    }

    GradCheckReport report;
    ParamSet probe = params;
    for (auto& [name, block] : probe) {
        const auto& a = analytic.at(name).data();
        auto& w = block.data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double orig = w[i];
            w[i] = orig + h;
            const double fp = loss(probe);
            w[i] = orig - h;
            const double fm = loss(probe);
            w[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double denom = std::max({std::abs(a[i]), std::abs(numeric), abs_floor});
            const double rel = std::abs(a[i] - numeric) / denom;
            ++report.checked;
            if (!(rel <= report.max_rel_error)) {
                report.max_rel_error = rel;
                report.worst_block = name;
                report.worst_index = i;
                report.worst_analytic = a[i];
                report.worst_numeric = numeric;
            }
        }
    }
    report.pass = report.max_rel_error <= tol;
    return report;
}

} // namespace normkit
