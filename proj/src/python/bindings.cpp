#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "fusion/adversary.hpp"
#include "fusion/combinatorics.hpp"
#include "fusion/datamix.hpp"
#include "fusion/error.hpp"
#include "fusion/fixed_point.hpp"
#include "fusion/model.hpp"
#include "fusion/pipeline.hpp"
#include "fusion/planner.hpp"

namespace py = pybind11;
using namespace fusion;
namespace comb = fusion::combinatorics;

namespace {

py::object to_fraction(const comb::Rational& q) {
  static py::object fraction = py::module_::import("fractions").attr("Fraction");
  const auto num = py::int_(py::str(boost::multiprecision::numerator(q).str()));
  const auto den = py::int_(py::str(boost::multiprecision::denominator(q).str()));
  return fraction(num, den);
}

py::dict plan_dict(const planner::SecurityPlan& p) {
  py::dict d;
  d["R"] = p.R;
  d["B"] = p.B;
  d["T"] = p.T;
  d["lambda"] = p.lambda;
  d["beta_pub"] = p.beta_pub;
  d["bound_log2"] = p.bound_log2;
  d["boundary_exact"] = p.boundary_exact;
  return d;
}

}  // namespace

PYBIND11_MODULE(_fusion, m) {
  m.doc() = "Batched verifiable inference: planning, mixing, verification and the game simulator";

  py::register_exception<InfeasibleError>(m, "InfeasibleError", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_RuntimeError);

  m.def(
      "search_params",
      [](std::uint64_t R, int lambda, std::uint64_t beta_pub, bool exact) {
        return plan_dict(planner::search_params(R, lambda, beta_pub, {exact}));
      },
      py::arg("R"), py::arg("lambda_") = planner::kDefaultLambda, py::arg("beta_pub") = planner::kDefaultBetaPub,
      py::arg("exact") = false, "Cost-minimizing (B, T) for R queries at security 2^-lambda.");

  m.def(
      "parameter_table",
      [](int lambda, std::uint64_t beta_pub, std::uint64_t b_lo, std::uint64_t b_hi) {
        py::list out;
        for (const auto& row : planner::parameter_table(lambda, beta_pub, b_lo, b_hi)) {
          py::dict d;
          d["B"] = row.B;
          d["R"] = row.R ? py::object(py::int_(*row.R)) : py::object(py::none());
          d["T"] = row.T;
          out.append(d);
        }
        return out;
      },
      py::arg("lambda_") = planner::kDefaultLambda, py::arg("beta_pub") = planner::kDefaultBetaPub,
      py::arg("b_lo") = 3, py::arg("b_hi") = 8);

  m.def(
      "amortized_cost",
      [](std::uint64_t R, std::uint64_t B, std::uint64_t T) { return to_fraction(planner::amortized_cost(R, B, T).amortized); },
      py::arg("R"), py::arg("B"), py::arg("T"));

  m.def(
      "claim1_bound",
      [](std::uint64_t R, std::uint64_t B, std::uint64_t T, bool exact) -> py::object {
        if (exact) return to_fraction(comb::claim1_bound(R, B, T, comb::Precision::Exact).rational());
        return py::float_(comb::claim1_bound(R, B, T).value());
      },
      py::arg("R"), py::arg("B"), py::arg("T"), py::arg("exact") = false, "R / C(RB+T, B).");

  m.def(
      "prob_success",
      [](std::uint64_t R, std::uint64_t B, std::uint64_t T, std::uint64_t i, bool exact) -> py::object {
        const comb::GameParams p{R, B, T, i};
        if (exact) return to_fraction(comb::prob_success(p, comb::Precision::Exact).rational());
        return py::float_(comb::prob_success(p).value());
      },
      py::arg("R"), py::arg("B"), py::arg("T"), py::arg("i"), py::arg("exact") = false,
      "C(R, i) / C(RB+T, iB): chance that corrupting iB random positions goes undetected.");

  m.def(
      "estimate_win_prob",
      [](std::uint64_t R, std::uint64_t B, std::uint64_t T, std::uint64_t i, std::uint64_t trials,
         std::uint64_t seed, const std::string& strategy, unsigned threads) {
        const auto s = adversary::parse_strategy(strategy, i);
        adversary::WinEstimate e;
        {
          py::gil_scoped_release release;
          e = adversary::estimate_win_prob(s, {R, B, T}, trials, seed, threads);
        }
        py::dict d;
        d["estimate"] = e.estimate;
        d["std_error"] = e.std_error;
        d["trials"] = e.trials;
        d["wins"] = e.wins;
        d["detections"] = e.detections;
        return d;
      },
      py::arg("R"), py::arg("B"), py::arg("T"), py::arg("i"), py::arg("trials") = 100000, py::arg("seed") = 0,
      py::arg("strategy") = "random", py::arg("threads") = 0);

  m.def(
      "enumerate_win_prob",
      [](std::uint64_t R, std::uint64_t B, std::uint64_t T, std::uint64_t i) {
        return to_fraction(adversary::enumerate_win_prob({R, B, T}, i));
      },
      py::arg("R"), py::arg("B"), py::arg("T"), py::arg("i"));

  m.def(
      "reverse_sigmoid_defense",
      [](const std::vector<double>& y, double beta, double gamma) {
        return reverse_sigmoid_defense(y, DefenseParams{beta, gamma});
      },
      py::arg("probs"), py::arg("beta"), py::arg("gamma"));

  py::class_<Model>(m, "Model")
      .def_static("load", &Model::load, py::arg("path"))
      .def_static("from_json", &Model::from_json, py::arg("text"))
      .def("to_json", &Model::to_json)
      .def_property_readonly("input_dim", &Model::input_dim)
      .def_property_readonly("num_classes", &Model::num_classes)
      .def_property_readonly("scale_bits", &Model::scale_bits)
      .def(
          "predict",
          [](const Model& model, const std::vector<double>& x) {
            std::vector<std::int64_t> fx(x.size());
            for (std::size_t k = 0; k < x.size(); ++k) fx[k] = to_fixed(x[k], model.scale_bits());
            return forward(model, fx).label;
          },
          py::arg("features"), "Plaintext label for real-valued features.")
      .def(
          "logits",
          [](const Model& model, const std::vector<std::int64_t>& x) { return forward(model, x).logits; },
          py::arg("fixed_features"));

  m.def(
      "estimate_T_variance",
      [](const std::string& model_path, const std::string& pool_path, const std::vector<std::uint64_t>& Ts,
         std::uint64_t groups, std::uint64_t seed) {
        const Model model = Model::load(model_path);
        const auto pool = read_csv(pool_path, model.scale_bits());
        const auto table = planner::estimate_T_variance(model, pool, Ts, groups, seed);
        py::dict d;
        d["standard_accuracy"] = table.standard_accuracy;
        py::list rows;
        for (const auto& r : table.rows) {
          py::dict row;
          row["T"] = r.T;
          row["variance"] = r.variance;
          row["group_accuracy"] = r.group_accuracy;
          rows.append(row);
        }
        d["rows"] = rows;
        return d;
      },
      py::arg("model"), py::arg("pool"), py::arg("T_list"), py::arg("groups") = 10, py::arg("seed") = 0);

  m.def(
      "run_json",
      [](const std::string& model, const std::string& queries, const std::string& publics, const std::string& backend,
         const std::string& adversary, std::uint64_t seed, int lambda, std::uint64_t beta_pub, double delta) {
        RunOptions o;
        o.model_path = model;
        o.queries_path = queries;
        o.publics_path = publics;
        o.backend = backend;
        o.adversary = adversary;
        o.seed = seed;
        o.lambda = lambda;
        o.beta_pub = beta_pub;
        o.delta = delta;
        o.timestamp = false;
        py::gil_scoped_release release;
        return run_fusion(o).to_json();
      },
      py::arg("model"), py::arg("queries"), py::arg("publics"), py::arg("backend") = "oracle",
      py::arg("adversary") = "honest", py::arg("seed") = 0, py::arg("lambda_") = planner::kDefaultLambda,
      py::arg("beta_pub") = planner::kDefaultBetaPub, py::arg("delta") = 0.95);
}
