/*
 Copyright 2026 mechmpc contributors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#include "mechmpc/hvac.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace mechmpc {

namespace {

void check_params(const HvacParams& p) {
  if (p.rooms.size() != 4) throw ConfigError("the building case study has exactly four rooms");
  for (const auto& r : p.rooms) {
    if (r.comfort_weight <= 0.0 || r.comfort_weight >= 1.0)
      throw ConfigError("comfort weight must lie strictly inside (0, 1)");
    if (r.energy_curvature <= 0.0) throw ConfigError("energy curvature must be positive");
  }
  if (p.mu == 0.0) throw ConfigError("input heat coefficient must be nonzero");
  if (p.u_min >= p.u_max) throw ConfigError("input bounds are empty");
  if (p.reference_temp == 0.0) throw ConfigError("reference temperature must be nonzero");
  if (p.x0.size() != 4) throw ConfigError("x0 must have four entries");
}

Eigen::MatrixXd hvac_matrix(const HvacParams& p) {
  const double a = p.alpha, b = p.beta, g = p.gamma, e = p.eta, v = p.nu_rooms;
  Eigen::MatrixXd A(4, 4);
  if (p.convention == SignConvention::printed) {
    // The displayed matrix, taken literally (including the +eta entry in the
    // second row).
    A << 1 + a + b + g, -b, -g, 0,  //
        -b, 1 + a + b + e, 0, e,    //
        -g, 0, 1 + a + g + v, -v,   //
        0, -e, -v, 1 + a + e + v;
  } else {
    A << 1 - a - b - g, b, g, 0,  //
        b, 1 - a - b - e, 0, e,   //
        g, 0, 1 - a - g - v, v,   //
        0, e, v, 1 - a - e - v;
  }
  return A;
}

}  // namespace

DisturbanceSpec hvac_disturbance_spec(const HvacParams& params) {
  DisturbanceSpec spec;
  spec.kind = DisturbanceSpec::Kind::hvac_outside;
  spec.mean = params.outside_mean;
  spec.amplitude = params.outside_amplitude;
  spec.period = params.outside_period;
  spec.noise_sigma = params.outside_noise_sigma;
  spec.gain = (params.convention == SignConvention::printed ? -1.0 : 1.0) * params.alpha;
  return spec;
}

SystemModel build_hvac(const HvacParams& params, int horizon, std::uint64_t seed) {
  check_params(params);
  SystemConfig cfg;
  cfg.A = hvac_matrix(params);
  cfg.B = params.mu * Eigen::MatrixXd::Identity(4, 4);
  cfg.partition = {{1, 1}, {1, 1}, {1, 1}, {1, 1}};
  cfg.horizon = horizon;
  cfg.x0 = params.x0;
  cfg.disturbance = generate_disturbance(hvac_disturbance_spec(params), 4, horizon, seed);

  if (params.convention == SignConvention::stable) {
    // Couplings must leave each room a positive self-weight; the fully
    // decoupled integrator (rho exactly 1) is admitted as the limit case.
    for (int r = 0; r < 4; ++r)
      if (cfg.A(r, r) <= 0.0)
        throw ConfigError("stable convention requires positive diagonal entries");
    const double rho = cfg.A.eigenvalues().cwiseAbs().maxCoeff();
    if (rho > 1.0 + 1e-12)
      throw ConfigError("stable convention requires spectral radius <= 1; got " +
                        std::to_string(rho));
  }
  return build_system(cfg);
}

AgentCost hvac_cost(const RoomParams& room) {
  const double lam = room.comfort_weight;
  const double td = room.desired_temp;
  const double gc = room.energy_curvature;
  if (lam <= 0.0 || lam >= 1.0) throw ConfigError("comfort weight must lie inside (0, 1)");

  AgentCost c;
  c.stage = [lam, td, gc](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    const double dt = x(0) - td, s = gc * u(0);
    return 0.5 * lam * dt * dt + 0.5 * (1.0 - lam) * std::exp(s * s);
  };
  c.stage_grad_x = [lam, td](const Eigen::VectorXd& x, const Eigen::VectorXd&) {
    Eigen::VectorXd g(1);
    g(0) = lam * (x(0) - td);
    return g;
  };
  c.stage_grad_u = [lam, gc](const Eigen::VectorXd&, const Eigen::VectorXd& u) {
    Eigen::VectorXd g(1);
    const double s = gc * u(0);
    g(0) = (1.0 - lam) * gc * gc * u(0) * std::exp(s * s);
    return g;
  };
  c.stage_hess_xx = [lam](const Eigen::VectorXd&, const Eigen::VectorXd&) {
    Eigen::MatrixXd h(1, 1);
    h(0, 0) = lam;
    return h;
  };
  c.stage_hess_uu = [lam, gc](const Eigen::VectorXd&, const Eigen::VectorXd& u) {
    Eigen::MatrixXd h(1, 1);
    const double s = gc * u(0);
    h(0, 0) = (1.0 - lam) * gc * gc * std::exp(s * s) * (1.0 + 2.0 * s * s);
    return h;
  };
  c.terminal = [lam, td](const Eigen::VectorXd& x) {
    const double dt = x(0) - td;
    return 0.5 * lam * dt * dt;
  };
  c.terminal_grad = [lam, td](const Eigen::VectorXd& x) {
    Eigen::VectorXd g(1);
    g(0) = lam * (x(0) - td);
    return g;
  };
  c.terminal_hess = [lam](const Eigen::VectorXd&) {
    Eigen::MatrixXd h(1, 1);
    h(0, 0) = lam;
    return h;
  };
  c.descriptor = "room(desired " + std::to_string(td) + ")";
  return c;
}

SurrogateFamily hvac_surrogate(double reference_temp) { return scaled_surrogate(reference_temp); }

Eigen::MatrixXd hvac_printed_state_weights(const RoomParams& room, double reference_temp,
                                           const Eigen::MatrixXd& planned_states) {
  Eigen::MatrixXd v(planned_states.rows(), 1);
  for (int k = 0; k < planned_states.rows(); ++k)
    v(k, 0) =
        ((1.0 - room.comfort_weight) * planned_states(k, 0) + room.desired_temp) / reference_temp;
  return v;
}

Scenario hvac_scenario(const HvacParams& params, const MpcSettings& mpc,
                       const LearningSettings& learning, const NashSettings& nash,
                       const SolverSettings& solver, std::uint64_t seed, const std::string& name) {
  check_params(params);
  Scenario s;
  s.name = name;
  s.model = std::make_shared<SystemModel>(build_hvac(params, mpc.horizon, seed));
  for (int i = 0; i < 4; ++i) {
    s.state_sets.push_back(ConstraintSet::unconstrained(1));
    s.input_sets.push_back(
        ConstraintSet::box(Eigen::VectorXd::Constant(1, params.u_min),
                           Eigen::VectorXd::Constant(1, params.u_max)));
    s.costs.push_back(hvac_cost(params.rooms[i]));
  }
  s.family = hvac_surrogate(params.reference_temp);
  double mean_desired = 0.0;
  for (const auto& r : params.rooms) mean_desired += r.desired_temp / 4.0;
  s.consensus_family = hvac_surrogate(mean_desired);
  s.disturbance = hvac_disturbance_spec(params);
  s.mpc = mpc;
  s.learning = learning;
  s.nash = nash;
  s.solver = solver;
  s.seed = seed;
  s.hvac = std::make_shared<HvacParams>(params);

  // Canonical document (kept in sync with scenario_from_json).
  nlohmann::json doc;
  doc["kind"] = "hvac";
  doc["name"] = name;
  nlohmann::json h;
  h["alpha"] = params.alpha;
  h["beta"] = params.beta;
  h["gamma"] = params.gamma;
  h["eta"] = params.eta;
  h["nu"] = params.nu_rooms;
  h["mu"] = params.mu;
  h["u_min"] = params.u_min;
  h["u_max"] = params.u_max;
  h["reference_temp"] = params.reference_temp;
  h["sign_convention"] = params.convention == SignConvention::printed ? "printed" : "stable";
  h["x0"] = std::vector<double>(params.x0.data(), params.x0.data() + params.x0.size());
  nlohmann::json rooms = nlohmann::json::array();
  for (const auto& r : params.rooms)
    rooms.push_back({{"desired_temp", r.desired_temp},
                     {"comfort_weight", r.comfort_weight},
                     {"energy_curvature", r.energy_curvature}});
  h["rooms"] = rooms;
  h["outside"] = {{"mean", params.outside_mean},
                  {"amplitude", params.outside_amplitude},
                  {"period", params.outside_period},
                  {"noise_sigma", params.outside_noise_sigma}};
  doc["hvac"] = h;
  doc["mpc"] = {{"horizon", mpc.horizon},
                {"sim_length", mpc.sim_length},
                {"prediction",
                 mpc.prediction == MpcSettings::Prediction::persistence ? "persistence" : "exact"}};
  doc["learning"] = {{"max_rounds", learning.max_rounds},
                     {"convergence_tol", learning.convergence_tol}};
  doc["nash"] = {{"samples", nash.samples}, {"perturbation_sigma", nash.perturbation_sigma}};
  doc["solver"] = {{"tol", solver.tol}, {"max_newton_iter", solver.max_newton_iter}};
  doc["seed"] = seed;
  s.source = doc;
  return s;
}

Scenario default_scenario() {
  HvacParams p;
  p.rooms = {{20.0, 0.5, 0.3}, {21.0, 0.6, 0.3}, {22.0, 0.7, 0.3}, {23.0, 0.8, 0.3}};
  p.x0 = Eigen::VectorXd::Constant(4, 20.0);
  MpcSettings mpc;
  LearningSettings learning;
  NashSettings nash;
  SolverSettings solver;
  return hvac_scenario(p, mpc, learning, nash, solver, 42, "hvac_default");
}

}  // namespace mechmpc
