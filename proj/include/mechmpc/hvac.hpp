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
#ifndef MECHMPC_HVAC_HPP
#define MECHMPC_HVAC_HPP

#include <vector>

#include "mechmpc/scenario.hpp"
#include "mechmpc/system_model.hpp"

namespace mechmpc {

/// Per-room occupant preferences: desired temperature, the comfort/energy
/// trade-off weight in (0,1), and the curvature of the energy term.
struct RoomParams {
  double desired_temp = 21.0;
  double comfort_weight = 0.5;    // in (0,1); higher favors comfort
  double energy_curvature = 0.3;  // > 0
};

/// Sign convention of the thermal dynamics.
/// `stable` (default): energy-balance form with diagonal 1 - alpha - couplings,
/// positive coupling entries, disturbance +alpha*T_out. `printed`: the
/// sign-flipped variant with diagonal 1 + alpha + couplings and negative
/// couplings (open-loop unstable; kept for comparison runs) and disturbance
/// -alpha*T_out.
enum class SignConvention { stable, printed };

/// Four-room thermal model: rooms 1-2 and 1-3 share walls (beta, gamma),
/// rooms 2-4 and 4-3 share walls (eta, nu_rooms), every room exchanges with
/// the outside (alpha) and has its own heater/cooler (mu per input unit).
struct HvacParams {
  double alpha = 0.05;
  double beta = 0.1;
  double gamma = 0.1;
  double eta = 0.1;
  double nu_rooms = 0.1;
  double mu = 0.2;
  double u_min = -5.0;
  double u_max = 5.0;
  std::vector<RoomParams> rooms;  // exactly 4
  double reference_temp = 21.5;   // broadcast surrogate anchor
  SignConvention convention = SignConvention::stable;
  Eigen::VectorXd x0;  // initial room temperatures
  // Outside temperature generator (daily sinusoid plus noise).
  double outside_mean = 10.0;
  double outside_amplitude = 5.0;
  int outside_period = 48;
  double outside_noise_sigma = 0.5;
};

/// Builds the 4-room model with the disturbance window for the given horizon.
/// Under the stable convention the spectral radius is checked to be < 1.
SystemModel build_hvac(const HvacParams& params, int horizon, std::uint64_t seed);

/// Disturbance spec corresponding to the params (for re-generation per run).
DisturbanceSpec hvac_disturbance_spec(const HvacParams& params);

/// Occupant cost: comfort_weight/2 * (T - desired)^2 per stage and terminal,
/// plus (1-comfort_weight)/2 * exp((energy_curvature * u)^2) per stage.
/// Analytic first and second derivatives. Note the energy term's minimum
/// value at u = 0 is (1-comfort_weight)/2, not zero.
AgentCost hvac_cost(const RoomParams& room);

/// The broadcast surrogate family: 1/2 (T - v*T_ref)^2 for states,
/// 1/2 (w*u)^2 for inputs.
SurrogateFamily hvac_surrogate(double reference_temp);

/// Printed-variant weight update v = ((1-lambda) T_hat + T_d) / T_ref for
/// comparison runs (the gradient-consistent update is the default).
Eigen::MatrixXd hvac_printed_state_weights(const RoomParams& room, double reference_temp,
                                           const Eigen::MatrixXd& planned_states);

/// Builds a full scenario from the params.
Scenario hvac_scenario(const HvacParams& params, const MpcSettings& mpc,
                       const LearningSettings& learning, const NashSettings& nash,
                       const SolverSettings& solver, std::uint64_t seed, const std::string& name);

/// The shipped default: stable convention, alpha 0.05, couplings 0.1, mu 0.2,
/// inputs in [-5, 5], desired temps (20, 21, 22, 23), comfort weights
/// (0.5, 0.6, 0.7, 0.8), energy curvature 0.3, reference temp 21.5, horizon
/// 15, 100 stages, sinusoidal outside temperature (mean 10, amplitude 5,
/// period 48, noise 0.5), seed 42.
Scenario default_scenario();

}  // namespace mechmpc

#endif  // MECHMPC_HVAC_HPP
