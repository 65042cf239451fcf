#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "normkit/aggregation.hpp"
#include "normkit/deviation.hpp"
#include "normkit/distributions.hpp"
#include "normkit/errors.hpp"
#include "normkit/evaluation.hpp"
#include "normkit/pipeline.hpp"
#include "normkit/synthdata.hpp"

namespace py = pybind11;
using namespace normkit;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
    if (a.ndim() != 2) {
        throw ArgumentError("expected a 2-d array");
    }
    const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
    return Matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const Matrix& m) {
    Array out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

py::list components(const JointPosterior& jp) {
    py::list out;
    if (jp.is_mixture()) {
        const auto& m = jp.mixture();
        for (std::size_t k = 0; k < m.components.size(); ++k) {
            out.append(py::make_tuple(m.weights[k], m.components[k]));
        }
    } else {
        out.append(py::make_tuple(1.0, jp.single()));
    }
    return out;
}

RunConfig make_config(const std::optional<std::filesystem::path>& path, const std::map<std::string, std::string>& overrides) {
    RunConfig cfg = path ? load_run_config(*path) : RunConfig{};
    for (const auto& [k, v] : overrides) {
        apply_config_value(cfg, k, v);
    }
    return cfg;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "normative modelling with multimodal VAEs";

    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", base.ptr());

    py::class_<DiagonalGaussian>(m, "DiagonalGaussian")
        .def(py::init<Vector, Vector>(), py::arg("mean"), py::arg("variance"))
        .def_static("standard", &DiagonalGaussian::standard)
        .def_readonly("mean", &DiagonalGaussian::mean)
        .def_readonly("variance", &DiagonalGaussian::variance)
        .def_property_readonly("dim", &DiagonalGaussian::dim)
        .def("__repr__", [](const DiagonalGaussian& g) {
            return "<DiagonalGaussian dim=" + std::to_string(g.dim()) + ">";
        });

    m.def("kl_to_standard_normal", &kl_to_standard_normal);
    m.def("product_of_gaussians",
          [](const std::vector<DiagonalGaussian>& e, bool prior, double scale) {
              return product_of_gaussians(e, prior, scale);
          },
          py::arg("experts"), py::arg("include_prior") = true, py::arg("precision_scale") = 1.0);
    m.def("kl_mixture_bound",
          [](const std::vector<DiagonalGaussian>& comps, std::optional<Vector> weights) {
              return kl_mixture_bound(weights ? GaussianMixture(comps, *weights) : GaussianMixture::uniform(comps));
          },
          py::arg("components"), py::arg("weights") = py::none());

    m.def("aggregate",
          [](const std::vector<DiagonalGaussian>& experts, const std::string& strategy, bool include_empty) {
              return components(aggregate(experts, parse_strategy(strategy), {include_empty}));
          },
          py::arg("experts"), py::arg("strategy") = "mopoe", py::arg("include_empty") = true,
          "list of (weight, DiagonalGaussian) pairs");
    m.def("kl_term",
          [](const std::vector<DiagonalGaussian>& experts, const std::string& strategy) {
              return kl_term(aggregate(experts, parse_strategy(strategy)));
          },
          py::arg("experts"), py::arg("strategy") = "mopoe");

    m.def("mahalanobis",
          [](const Vector& v, const Vector& mean, const Array& cov) { return mahalanobis(v, mean, to_matrix(cov)); },
          py::arg("v"), py::arg("mean"), py::arg("cov"));
    m.def("p_value_chi2", &p_value_chi2, py::arg("d"), py::arg("dof"));
    m.def("sample_mean_cov", [](const Array& x) {
        auto [mu, cov] = sample_mean_cov(to_matrix(x));
        return py::make_tuple(mu, to_array(cov));
    });

    m.def("bh_fdr", [](const Vector& p, double q) { return bh_fdr(p, q); }, py::arg("pvals"), py::arg("q") = 0.05);
    m.def("cohens_d", [](const Vector& a, const Vector& b) { return cohens_d(a, b); });
    m.def("welch_test", [](const Vector& a, const Vector& b) {
        const auto w = welch_test(a, b);
        return py::dict(py::arg("t") = w.t, py::arg("df") = w.df, py::arg("p") = w.p);
    });
    m.def("likelihood_ratio", [](const std::vector<bool>& disease, const std::vector<bool>& holdout) {
        const auto lr = likelihood_ratio(disease, holdout);
        return py::dict(py::arg("value") = lr.value, py::arg("disease_fraction") = lr.disease_fraction,
                        py::arg("holdout_fraction") = lr.holdout_fraction, py::arg("corrected") = lr.corrected);
    });
    m.def("adjusted_regression",
          [](const Vector& y, const Vector& x, std::optional<Array> cov) {
              const Matrix c = cov ? to_matrix(*cov) : Matrix(y.size(), 0);
              const auto r = adjusted_regression(y, x, c);
              return py::dict(py::arg("slope") = r.slope, py::arg("intercept") = r.intercept,
                              py::arg("covariate_coefs") = r.covariate_coefs, py::arg("slope_se") = r.slope_se,
                              py::arg("slope_t") = r.slope_t, py::arg("slope_p") = r.slope_p, py::arg("r") = r.r,
                              py::arg("n") = r.n);
          },
          py::arg("y"), py::arg("x"), py::arg("covariates") = py::none());

    m.def("generate_cohort",
          [](const std::filesystem::path& path, std::uint64_t seed) { write_cohort(generate(reference_spec(seed)), path); },
          py::arg("path"), py::arg("seed") = 0);

    m.def("config_echo",
          [](std::optional<std::filesystem::path> path, const std::map<std::string, std::string>& overrides) {
              return make_config(path, overrides).echo();
          },
          py::arg("config") = py::none(), py::arg("overrides") = std::map<std::string, std::string>{});
    m.def("run_command",
          [](const std::string& name, std::optional<std::filesystem::path> path,
             const std::map<std::string, std::string>& overrides) {
              RunResult r;
              {
                  py::gil_scoped_release release;
                  r = run_command(name, make_config(path, overrides));
              }
              return py::make_tuple(r.outputs, r.manifest);
          },
          py::arg("command"), py::arg("config") = py::none(),
          py::arg("overrides") = std::map<std::string, std::string>{},
          "run generate/train/evaluate/compare/interpret; returns (outputs, manifest)");
}
