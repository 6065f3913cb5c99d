#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "goodhart/ascent.hpp"
#include "goodhart/envs.hpp"
#include "goodhart/geometry.hpp"
#include "goodhart/harness.hpp"
#include "goodhart/metrics.hpp"
#include "goodhart/worked_examples.hpp"

namespace py = pybind11;
using namespace goodhart;

namespace {

RewardVector rv(const Vector& v) { return RewardVector(v); }

TrainingCurve make_curve(std::vector<double> pressures, std::vector<double> true_returns) {
  TrainingCurve c;
  c.pressures = std::move(pressures);
  c.proxy_returns = true_returns;
  c.true_returns = std::move(true_returns);
  return c;
}

py::dict path_dict(const AscentPath& p) {
  py::dict d;
  d["points"] = p.points;
  d["step_gains"] = p.step_gains;
  d["step_lengths"] = p.step_lengths;
  d["stop_reason"] = to_string(p.stop_reason);
  return d;
}

ExperimentConfig config_from(const py::object& cfg) {
  if (cfg.is_none()) return desk_config();
  const std::string text = py::module_::import("json").attr("dumps")(cfg).cast<std::string>();
  return parse_config(nlohmann::json::parse(text));
}

}  // namespace

PYBIND11_MODULE(_goodhart, m) {
  m.attr("__version__") = "0.1.0";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);

  py::class_<TabularMdp>(m, "TabularMdp")
      .def(py::init<int, int, Matrix, Vector, double, std::vector<bool>>(), py::arg("num_states"),
           py::arg("num_actions"), py::arg("transition"), py::arg("initial_dist"), py::arg("discount"),
           py::arg("terminal_mask"))
      .def_property_readonly("num_states", &TabularMdp::num_states)
      .def_property_readonly("num_actions", &TabularMdp::num_actions)
      .def_property_readonly("discount", &TabularMdp::discount)
      .def_property_readonly("transition", py::overload_cast<>(&TabularMdp::transition, py::const_))
      .def_property_readonly("initial_dist", &TabularMdp::initial_dist)
      .def_property_readonly("terminal_mask", &TabularMdp::terminal_mask);

  py::class_<PolytopeModel>(m, "Polytope")
      .def(py::init<const TabularMdp&>())
      .def_property_readonly("dimension", &PolytopeModel::dimension)
      .def("projection", &PolytopeModel::projection)
      .def("project", py::overload_cast<const Vector&>(&PolytopeModel::project, py::const_));

  m.def("make_m22", &make_m22);
  m.def("make_m32", &make_m32);
  m.def("m22_rewards", [] {
    std::vector<Vector> out;
    for (const auto& r : m22_rewards()) out.push_back(r.values);
    return out;
  });
  m.def("make_gridworld", [](int n, double gamma) { return make_gridworld(n, gamma).mdp; });
  m.def("make_cliff", [](int n, double p, double gamma) { return make_cliff(n, p, gamma).mdp; });
  m.def("make_random_mdp", [](int s, int a, int k, double gamma, std::uint64_t seed) {
    return make_random_mdp(s, a, k, gamma, seed).mdp;
  });
  m.def("make_tree_mdp", [](int b, int d, const std::string& variant, double gamma) {
    return make_tree_mdp(b, d, tree_variant_from_string(variant), gamma).mdp;
  }, py::arg("branching"), py::arg("depth"), py::arg("variant") = "first_half", py::arg("gamma") = 0.9);

  m.def("occupancy_measure", [](const TabularMdp& mdp, const Matrix& policy) {
    return occupancy_measure(mdp, Policy(policy)).values;
  });
  m.def("policy_return", [](const TabularMdp& mdp, const Vector& r, const Matrix& policy) {
    return policy_return(mdp, rv(r), Policy(policy));
  });
  m.def("optimal_policy", [](const TabularMdp& mdp, const Vector& r) {
    return optimal_policy(mdp, rv(r), SolverConfig{}).probs;
  });
  m.def("mce_policy", [](const TabularMdp& mdp, const Vector& r, double alpha) {
    return mce_policy(mdp, rv(r), alpha, SolverConfig{}).probs;
  });
  m.def("projected_angle", [](const PolytopeModel& poly, const Vector& a, const Vector& b) {
    return projected_angle(poly, rv(a), rv(b));
  });
  m.def("steepest_ascent", [](const TabularMdp& mdp, const Vector& r) {
    return path_dict(steepest_ascent(mdp, PolytopeModel(mdp), rv(r)));
  });
  m.def("early_stopping", [](const TabularMdp& mdp, const Vector& r, double theta) {
    EarlyStopConfig cfg;
    cfg.angle_bound = theta;
    const auto res = early_stopping(mdp, PolytopeModel(mdp), rv(r), cfg);
    py::dict d = path_dict(res.path);
    d["policy"] = res.policy.probs;
    return d;
  }, py::arg("mdp"), py::arg("reward"), py::arg("theta"));
  m.def("worst_case_return", [](const TabularMdp& mdp, const Vector& eta, const Vector& proxy, double theta) {
    return worst_case_return(PolytopeModel(mdp), eta, rv(proxy), theta);
  });

  m.def("training_curve", [](const TabularMdp& mdp, const Vector& truth, const Vector& proxy,
                             const std::vector<double>& pressures, const std::string& method) {
    SolverConfig cfg;
    cfg.method = method_from_string(method);
    const auto c = training_curve(mdp, rv(truth), rv(proxy), PressureSchedule(pressures), cfg);
    py::dict d;
    d["pressures"] = c.pressures;
    d["true_returns"] = c.true_returns;
    d["proxy_returns"] = c.proxy_returns;
    return d;
  }, py::arg("mdp"), py::arg("true_reward"), py::arg("proxy_reward"), py::arg("pressures"),
     py::arg("method") = "mce");
  m.def("metrics", [](std::vector<double> pressures, std::vector<double> true_returns) {
    const auto r = compute_metrics(make_curve(std::move(pressures), std::move(true_returns)));
    py::dict d;
    d["ndh"] = r.ndh;
    d["si"] = r.si;
    d["cacw"] = r.cacw;
    d["lr"] = r.lr;
    d["lambda_star"] = r.lambda_star;
    return d;
  });

  m.def("desk_config", [] {
    return py::module_::import("json").attr("loads")(config_to_json(desk_config()).dump());
  });
  m.def("run_protocol", [](const std::string& protocol, const py::object& config, const std::filesystem::path& out) {
    const ExperimentConfig cfg = config_from(config);
    Dataset ds;
    {
      py::gil_scoped_release release;
      if (protocol == "prevalence") ds = run_prevalence(cfg);
      else if (protocol == "distance") ds = run_distance_protocol(cfg);
      else if (protocol == "early-stop") ds = run_early_stopping_eval(cfg);
      else if (protocol == "demo-m22") ds = run_demo_m22(cfg);
      else throw InvalidArgument("unknown protocol '" + protocol + "'");
      export_dataset(ds, out);
    }
    return py::make_tuple(ds.records.size(), ds.num_failed());
  }, py::arg("protocol"), py::arg("config") = py::none(), py::arg("out") = "results");
}
