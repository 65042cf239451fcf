#pragma once

#include "normkit/matrix.hpp"

#include <functional>
#include <map>
#include <string>

namespace normkit {

// Named parameter blocks. std::map keeps iteration order stable, which the
// optimizer, checkpoints and gradient checks all rely on.
using ParamSet = std::map<std::string, Matrix>;

// Zero-filled blocks with the same names and shapes.
ParamSet zeros_like(const ParamSet& p);
bool same_shapes(const ParamSet& a, const ParamSet& b);
std::size_t parameter_count(const ParamSet& p);

struct AdamState {
    std::size_t step = 0;
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    ParamSet m;
    ParamSet v;
};

AdamState make_adam_state(const ParamSet& params, double lr = 1e-5);

// In-place Adam update with bias correction. Moments advance for every entry;
// an entry whose gradient is exactly zero keeps its parameter value.
void adam_update(AdamState& state, ParamSet& params, const ParamSet& grads);

// Value-semantics form of adam_update.
std::pair<ParamSet, AdamState> adam_step(AdamState state, ParamSet params, const ParamSet& grads);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_block;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t checked = 0;
    bool pass = false;
};

// Compares `analytic` against central differences (f(w+h) - f(w-h)) / 2h of
// `loss` at `params`, coordinate by coordinate. Relative error per coordinate
// is |a - n| / max(|a|, |n|, abs_floor). Throws ContractError if two probes of
// `loss` at the same point disagree.
GradCheckReport grad_check(const std::function<double(const ParamSet&)>& loss,
                           const ParamSet& analytic, const ParamSet& params, double h,
                           double tol, double abs_floor = 1e-5);

} // namespace normkit
