#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include <json.hpp>

#include "amtl/env.hpp"
#include "amtl/error.hpp"
#include "amtl/eval.hpp"
#include "amtl/experiment.hpp"
#include "amtl/npy.hpp"
#include "amtl/sampler.hpp"
#include "amtl/solver.hpp"

namespace py = pybind11;
using namespace amtl;

namespace {

std::vector<SampleBatch> to_batches(const std::vector<std::pair<Matrix, Vector>> &data) {
  std::vector<SampleBatch> out;
  for (std::size_t m = 0; m < data.size(); ++m)
    out.emplace_back(static_cast<int>(m) + 1, data[m].first, data[m].second);
  return out;
}

SolverConfig solver_from_kwargs(const py::kwargs &kw) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto &item : kw)
    j[py::str(item.first).cast<std::string>()] = nlohmann::json::parse(
        py::module_::import("json").attr("dumps")(item.second).cast<std::string>());
  return config_from_json(j).solver;
}

py::dict report_dict(const SparsityReport &r) {
  py::dict d;
  d["s_star"] = r.s_star;
  d["argmin_gamma"] = r.argmin_gamma;
  d["support_size_at_argmin"] = r.support_size_at_argmin;
  d["degenerate"] = r.degenerate;
  return d;
}

} // namespace

PYBIND11_MODULE(_amtl, m) {
  m.doc() = "Active multi-task linear representation learning";
  m.attr("__version__") = AMTL_VERSION;

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<BudgetError>(m, "BudgetError", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::class_<GroundTruth>(m, "GroundTruth")
      .def_property_readonly("d", [](const GroundTruth &t) { return t.dims().d; })
      .def_property_readonly("K", [](const GroundTruth &t) { return t.dims().K; })
      .def_property_readonly("M", [](const GroundTruth &t) { return t.dims().M; })
      .def_property_readonly("B_star", &GroundTruth::B_star)
      .def_property_readonly("W_star", &GroundTruth::W_star)
      .def_property_readonly("w_target", &GroundTruth::w_target)
      .def_property_readonly("sigma", &GroundTruth::sigma)
      .def_property_readonly("head_norm_bound", &GroundTruth::head_norm_bound)
      .def_property_readonly("sigma_min_W", &GroundTruth::sigma_min_W);

  m.def(
      "make_sparse_example",
      [](int d, int K, int M, double sigma, std::uint64_t seed) {
        return make_sparse_example(ProblemDims::make(d, K, M), sigma, seed);
      },
      py::arg("d"), py::arg("K"), py::arg("M"), py::arg("sigma"), py::arg("seed") = 0);
  m.def(
      "make_random_environment",
      [](int d, int K, int M, double sigma, double head_scale, std::uint64_t seed) {
        return make_random_environment(ProblemDims::make(d, K, M), sigma, head_scale, seed);
      },
      py::arg("d"), py::arg("K"), py::arg("M"), py::arg("sigma"), py::arg("head_scale") = 1.0, py::arg("seed") = 0);
  m.def(
      "sample_task",
      [](const GroundTruth &t, int task, Index n, std::uint64_t seed, std::uint64_t epoch) {
        RngStream rng(seed, {static_cast<std::uint64_t>(task), epoch});
        const SampleBatch b = sample_task(t, task, n, rng);
        return std::make_pair(b.X, b.Y);
      },
      py::arg("truth"), py::arg("task"), py::arg("n"), py::arg("seed") = 0, py::arg("epoch") = 0,
      "Returns (X, Y) drawn from the (seed, task, epoch) stream.");

  m.def(
      "fit_joint_erm",
      [](const std::vector<std::pair<Matrix, Vector>> &tasks, int K, const py::kwargs &kw) {
        const auto batches = to_batches(tasks);
        if (batches.empty())
          throw ConfigError("fit_joint_erm: no tasks");
        const ProblemDims dims = ProblemDims::make(static_cast<int>(batches[0].X.cols()), K,
                                                   static_cast<int>(batches.size()));
        const LinearModel model = fit_joint_erm(batches, dims, solver_from_kwargs(kw));
        py::dict out;
        out["B_hat"] = model.B_hat;
        out["W_hat"] = model.W_hat;
        out["objective_trace"] = model.objective_trace;
        out["iterations"] = model.iterations;
        out["stop_reason"] = to_string(model.stop_reason);
        return out;
      },
      py::arg("tasks"), py::arg("K"), "tasks: list of (X, Y) pairs for source tasks 1..M; solver keys as kwargs.");
  m.def(
      "fit_target_head",
      [](const Matrix &B_hat, const Matrix &X, const Vector &Y) {
        return fit_target_head(B_hat, SampleBatch(0, X, Y));
      },
      py::arg("B_hat"), py::arg("X"), py::arg("Y"));
  m.def(
      "min_norm_combination",
      [](const Matrix &W, const Vector &w, std::optional<double> rcond) {
        const RelevanceVector nu = min_norm_combination(W, w, rcond);
        return std::make_pair(Vector(nu.values()), nu.degenerate());
      },
      py::arg("W"), py::arg("w"), py::arg("rcond") = py::none(), "Returns (nu, degenerate).");
  m.def("subspace_distance", &subspace_distance, py::arg("B1"), py::arg("B2"));

  m.def(
      "s_star",
      [](const Vector &nu, double N_total) {
        return report_dict(s_star(RelevanceVector(nu), N_total, static_cast<int>(nu.size())));
      },
      py::arg("nu"), py::arg("N_total"));
  m.def("source_bound_known", &source_bound_known, py::arg("K"), py::arg("d"), py::arg("M"), py::arg("delta"),
        py::arg("sigma"), py::arg("s_star"), py::arg("nu_norm2"), py::arg("epsilon"));
  m.def("source_bound_uniform", &source_bound_uniform, py::arg("K"), py::arg("d"), py::arg("M"), py::arg("delta"),
        py::arg("sigma"), py::arg("nu_norm2"), py::arg("epsilon"));
  m.def("beta_theory", &beta_theory, py::arg("K"), py::arg("R"), py::arg("M"), py::arg("d"), py::arg("N_total"),
        py::arg("epsilon"), py::arg("delta"), py::arg("sigma_lower"));

  m.def(
      "allocate_known",
      [](const Vector &nu, double N_total, double N_floor) {
        return allocate_known(RelevanceVector(nu), N_total, N_floor).n;
      },
      py::arg("nu"), py::arg("N_total"), py::arg("N_floor"));
  m.def(
      "allocate_active",
      [](const Vector &nu, double beta, double epsilon) {
        return allocate_active(RelevanceVector(nu), beta, epsilon).n;
      },
      py::arg("nu"), py::arg("beta"), py::arg("epsilon"));
  m.def(
      "allocate_uniform", [](std::int64_t N_total, int M) { return allocate_uniform(N_total, M).n; },
      py::arg("N_total"), py::arg("M"));

  m.def(
      "_resolve_config",
      [](const std::string &text) { return config_to_json(config_from_json(nlohmann::json::parse(text))).dump(); },
      py::arg("config_json"));
  m.def(
      "_run_experiment",
      [](const std::string &text) {
        const ExperimentConfig config = config_from_json(nlohmann::json::parse(text));
        ExperimentResult result;
        {
          py::gil_scoped_release release;
          result = run_experiment(config);
        }
        return summary_json(config, result, 0.0).dump();
      },
      py::arg("config_json"));
  m.def(
      "_run_and_write",
      [](const std::string &text) {
        ExperimentConfig config = config_from_json(nlohmann::json::parse(text));
        apply_environment_overrides(config);
        py::gil_scoped_release release;
        std::ostringstream log;
        const int code = run_and_write(config, log);
        return code;
      },
      py::arg("config_json"));

  m.def(
      "read_npy",
      [](const py::bytes &raw) {
        const std::string s = raw;
        const NpyArray a = parse_npy(std::span(reinterpret_cast<const std::uint8_t *>(s.data()), s.size()));
        py::object values = a.type() == NpyType::UInt8 ? py::cast(a.u8()) : py::cast(a.f64());
        return std::make_pair(a.shape, values);
      },
      py::arg("data"), "Returns (shape, flat values) from NPY bytes.");
  m.def(
      "write_npy",
      [](const std::vector<std::size_t> &shape, const std::vector<double> &values, bool as_uint8) {
        NpyArray a;
        a.shape = shape;
        if (as_uint8) {
          std::vector<std::uint8_t> v;
          for (double x : values) {
            if (x < 0 || x > 255 || x != std::floor(x))
              throw ConfigError("write_npy: uint8 values must be integers in [0, 255]");
            v.push_back(static_cast<std::uint8_t>(x));
          }
          a.data = std::move(v);
        } else {
          a.data = values;
        }
        if (a.element_count() != values.size())
          throw ConfigError("write_npy: shape does not match the number of values");
        const auto bytes = write_npy(a);
        return py::bytes(reinterpret_cast<const char *>(bytes.data()), bytes.size());
      },
      py::arg("shape"), py::arg("values"), py::arg("as_uint8") = false);
}
