#pragma once

#include "normkit/cohort.hpp"
#include "normkit/model.hpp"
#include "normkit/rng.hpp"

#include <cstdio>
#include <string>

namespace helpers {

// Small random cohort; every subject gets the given stage.
inline normkit::Cohort toy_cohort(std::size_t n, std::vector<std::size_t> regions, std::uint64_t seed,
                                  normkit::Stage stage = normkit::Stage::Control) {
    using namespace normkit;
    RngStream r(seed, "toy-cohort");
    Cohort c;
    for (std::size_t j = 0; j < n; ++j) {
        char id[32];
        std::snprintf(id, sizeof id, "t-%03zu", j);
        c.subject_ids.push_back(id);
        c.stages.push_back(stage);
        c.ages.push_back(45.0 + 50.0 * r.uniform());
        c.sexes.push_back(j % 2 ? Sex::Male : Sex::Female);
        c.cognition.push_back(10.0 * r.uniform());
    }
    for (std::size_t k : regions) {
        Matrix m(n, k);
        for (double& v : m.data()) {
            v = r.normal();
        }
        c.features.push_back(m);
    }
    c.covariates = covariate_matrix(c.ages, c.sexes);
    return c;
}

inline normkit::ModelConfig small_config(normkit::Strategy s, std::size_t d = 3) {
    normkit::ModelConfig mc;
    mc.latent_dim = d;
    mc.strategy = s;
    mc.modalities = {{"a", 5, {4}}, {"b", 4, {3, 2}}};
    return mc;
}

inline void zero_params(normkit::MvnModel& m) {
    for (auto& [name, block] : m.params) {
        block.fill(0.0);
    }
}

} // namespace helpers
