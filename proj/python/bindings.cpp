#include <mtac/baselines.hpp>
#include <mtac/belief.hpp>
#include <mtac/config.hpp>
#include <mtac/env.hpp>
#include <mtac/mpc.hpp>
#include <mtac/policy.hpp>
#include <mtac/ppo.hpp>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

namespace py = pybind11;
using namespace mtac;

namespace {

EnvConfig env_config(double arena, int min_targets, int max_targets, const std::string& dynamics,
                     double static_fraction, bool use_mpc, double timeout) {
  EnvConfig c;
  c.world.arena_width = arena;
  c.world.arena_height = arena;
  c.episode.num_targets = {min_targets, max_targets};
  c.episode.dynamics = parse_dynamics(dynamics);
  c.episode.static_fraction = {static_fraction, static_fraction};
  c.episode.timeout = timeout;
  c.use_mpc = use_mpc;
  c.validate();
  return c;
}

py::dict info_dict(const StepInfo& i) {
  py::dict d;
  d["newly_classified"] = i.newly_classified;
  d["num_classified"] = i.num_classified;
  d["visible_count"] = i.visible_count;
  d["visible_unclassified"] = i.visible_unclassified;
  d["misclassified"] = i.misclassified;
  d["tracking_error"] = i.tracking_error;
  d["timeout"] = i.timeout;
  return d;
}

Eigen::MatrixXd features(const Environment& env) { return encode_observations(env.observations()); }

PolicyParams new_params(int d_h, int d_enc, int heads, const std::string& pooling,
                        std::uint64_t seed) {
  PolicyDims d;
  d.d_h = d_h;
  d.d_enc = d_enc;
  d.heads = heads;
  if (pooling == "mean") {
    d.pooling = Pooling::kMean;
  } else if (pooling != "attention") {
    throw std::invalid_argument("pooling must be 'attention' or 'mean'");
  }
  std::mt19937_64 rng(seed);
  return PolicyParams::initialize(d, rng);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-target active classification core";

  m.def("conflate", [](const Eigen::VectorXd& belief, const Eigen::VectorXd& measurement) {
    return conflate(Belief{belief}, ClassProbability{measurement}).probs;
  }, py::arg("belief"), py::arg("measurement"));
  m.def("conflate_weighted", [](const Eigen::VectorXd& belief, const Eigen::VectorXd& measurement,
                                double w) {
    return conflate_weighted(Belief{belief}, ClassProbability{measurement}, w).probs;
  }, py::arg("belief"), py::arg("measurement"), py::arg("weight"));
  m.def("normalized_entropy", [](const Eigen::VectorXd& p) { return normalized_entropy(p); });

  m.def("compute_gae", [](const std::vector<double>& rewards, const std::vector<double>& values,
                          const std::vector<bool>& dones, double bootstrap, double gamma,
                          double lam) {
    auto d = std::make_unique<bool[]>(dones.size());
    for (std::size_t i = 0; i < dones.size(); ++i) d[i] = dones[i];
    const GaeResult g = compute_gae(rewards, values, std::span<const bool>(d.get(), dones.size()),
                                    bootstrap, gamma, lam);
    return py::make_tuple(g.advantages, g.returns);
  }, py::arg("rewards"), py::arg("values"), py::arg("dones"), py::arg("bootstrap_value"),
     py::arg("gamma") = 0.99, py::arg("lam") = 0.95);

  py::class_<Environment>(m, "Environment")
      .def(py::init([](double arena, int min_targets, int max_targets, const std::string& dynamics,
                       double static_fraction, bool use_mpc, double timeout) {
             return Environment(env_config(arena, min_targets, max_targets, dynamics,
                                           static_fraction, use_mpc, timeout));
           }),
           py::arg("arena") = 15.0, py::arg("min_targets") = 1, py::arg("max_targets") = 3,
           py::arg("dynamics") = "cv", py::arg("static_fraction") = 0.0,
           py::arg("use_mpc") = false, py::arg("timeout") = 100.0)
      .def("reset", [](Environment& e, std::uint64_t seed) {
        e.reset(seed);
        return features(e);
      }, py::arg("seed"))
      .def("step", [](Environment& e, double dx, double dy, double dyaw) {
        const StepResult r = e.step({Vec2(dx, dy), dyaw});
        return py::make_tuple(features(e), r.reward, r.done, info_dict(r.info));
      }, py::arg("dx"), py::arg("dy"), py::arg("dyaw"))
      .def("handcrafted_action", [](const Environment& e) {
        SequentialPlan plan;
        const ViewpointAction a = handcrafted_action(e.state(), plan, e.config().action_bounds(),
                                                     2.0, e.config().world.tau_h);
        return a.as_vector();
      })
      .def_property_readonly("observations", &features)
      .def_property_readonly("done", &Environment::done)
      .def_property_readonly("num_targets", [](const Environment& e) { return e.state().num_targets(); })
      .def_property_readonly("num_classified", [](const Environment& e) { return e.state().num_classified(); })
      .def_property_readonly("step_count", [](const Environment& e) { return e.state().step; })
      .def_property_readonly("max_steps", [](const Environment& e) { return e.config().max_steps(); })
      .def_property_readonly("action_limits", [](const Environment& e) {
        return Eigen::Vector3d(e.config().action_bounds().limits);
      })
      .def_property_readonly("drone_pose", [](const Environment& e) {
        const auto& d = e.state().drone;
        return py::make_tuple(d.position.x(), d.position.y(), d.position.z(), d.yaw);
      });

  py::class_<PolicyParams>(m, "Policy")
      .def(py::init(&new_params), py::arg("d_h") = 16, py::arg("d_enc") = 64, py::arg("heads") = 4,
           py::arg("pooling") = "attention", py::arg("seed") = 0)
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def("save", [](const PolicyParams& p, const std::filesystem::path& path) {
        save_checkpoint(p, path);
      }, py::arg("path"))
      .def("forward", [](const PolicyParams& p, const Eigen::MatrixXd& x) {
        if (x.cols() != p.dims().d_in) throw std::invalid_argument("feature width mismatch");
        const PolicyOutput o = policy_forward(x, p);
        return py::make_tuple(Eigen::Vector3d(o.mu), Eigen::Vector3d(o.log_std), o.value);
      }, py::arg("features"))
      .def("act", [](const PolicyParams& p, const Environment& e) {
        return deterministic_action(policy_forward(features(e), p), e.config().action_bounds())
            .as_vector();
      }, py::arg("env"))
      .def_property_readonly("size", &PolicyParams::size)
      .def_property_readonly("pooling", [](const PolicyParams& p) {
        return p.dims().pooling == Pooling::kMean ? "mean" : "attention";
      });

  m.def("mpc_solve", [](const Eigen::Vector3d& position, double yaw, const Eigen::Vector3d& velocity,
                        const Eigen::Vector3d& target, double target_yaw, int horizon, double w_u,
                        double w_g, int iterations) {
    DroneState x;
    x.position = position;
    x.yaw = yaw;
    x.velocity = velocity;
    MPCConfig cfg;
    cfg.horizon = horizon;
    cfg.w_u = w_u;
    cfg.w_g = w_g;
    cfg.iterations = iterations;
    const MPCSolution s = mpc_solve(x, {target, target_yaw}, cfg);
    Eigen::MatrixXd u(static_cast<int>(s.controls.size()), 4);
    for (std::size_t k = 0; k < s.controls.size(); ++k) u.row(static_cast<int>(k)) = s.controls[k];
    return py::make_tuple(u, s.cost, s.iterations);
  }, py::arg("position"), py::arg("yaw"), py::arg("velocity"), py::arg("target"),
     py::arg("target_yaw"), py::arg("horizon") = 10, py::arg("w_u") = MPCConfig{}.w_u,
     py::arg("w_g") = MPCConfig{}.w_g, py::arg("iterations") = MPCConfig{}.iterations);
}
