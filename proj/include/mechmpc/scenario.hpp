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
#ifndef MECHMPC_SCENARIO_HPP
#define MECHMPC_SCENARIO_HPP

#include <json.hpp>
#include <memory>
#include <string>
#include <vector>

#include "mechmpc/agent.hpp"
#include "mechmpc/mechanism.hpp"
#include "mechmpc/ocp.hpp"
#include "mechmpc/surrogate.hpp"
#include "mechmpc/system_model.hpp"

namespace mechmpc {

struct HvacParams;  // hvac.hpp

/// Exogenous disturbance source. `hvac_outside` maps a generated outside
/// temperature profile into the state equation as gain * T_out * ones(n).
struct DisturbanceSpec {
  enum class Kind { none, inline_values, hvac_outside };
  Kind kind = Kind::none;
  std::vector<Eigen::VectorXd> values;  // inline_values
  // hvac_outside: sinusoidal daily profile plus seeded Gaussian noise
  double mean = 10.0;
  double amplitude = 5.0;
  int period = 48;
  double noise_sigma = 0.5;
  double gain = 0.0;  // multiplies T_out into every state row
};

/// Realizes `length` disturbance vectors of dimension n. Deterministic in the
/// seed; `none` yields zero vectors, inline values must cover the length.
std::vector<Eigen::VectorXd> generate_disturbance(const DisturbanceSpec& spec, int n, int length,
                                                  std::uint64_t seed);
/// The outside-temperature profile behind hvac_outside (for logs/tests).
std::vector<double> generate_outside_temperature(const DisturbanceSpec& spec, int length,
                                                 std::uint64_t seed);

struct MpcSettings {
  int horizon = 15;
  int sim_length = 100;
  enum class Prediction { exact, persistence };
  Prediction prediction = Prediction::exact;
};

struct LearningSettings {
  int max_rounds = 50;
  double convergence_tol = 1e-6;
};

struct NashSettings {
  int samples = 100;
  double perturbation_sigma = 0.25;
};

/// Fully specified runnable instance: model (with the first disturbance
/// window baked in), constraint sets, private costs, announced surrogate
/// family, and run settings. Built from a JSON document and able to
/// reproduce it exactly.
struct Scenario {
  std::string name;
  std::shared_ptr<const SystemModel> model;
  std::vector<ConstraintSet> state_sets;
  std::vector<ConstraintSet> input_sets;
  std::vector<AgentCost> costs;
  SurrogateFamily family;
  /// Family used by the no-information consensus controller (unit weights).
  SurrogateFamily consensus_family;
  DisturbanceSpec disturbance;
  MpcSettings mpc;
  LearningSettings learning;
  NashSettings nash;
  SolverSettings solver;
  std::uint64_t seed = 0;
  /// Room parameters when this is the building case study (enables the
  /// printed-variant weight update).
  std::shared_ptr<const HvacParams> hvac;
  bool printed_weight_update = false;
  nlohmann::json source;  // canonical config document

  std::string hash() const;
  /// True total cost of one agent's trajectory under its private cost.
  double true_cost(int agent, const Trajectory& traj) const;
};

/// Parses a scenario document (kinds: "hvac", "linear"). Throws ConfigError
/// with the offending key on malformed input.
Scenario scenario_from_json(const nlohmann::json& doc);
Scenario load_scenario(const std::string& path);

/// Applies dotted-key overrides ("hvac.alpha=0.07") onto a config document;
/// values are parsed as JSON when possible, else taken as strings. Last wins.
nlohmann::json apply_overrides(nlohmann::json doc, const std::vector<std::string>& assignments);

/// Serializes a model to the documented JSON schema (17-significant-digit
/// round-trip) and back.
nlohmann::json model_to_json(const SystemModel& model);
SystemModel model_from_json(const nlohmann::json& doc);

/// Principal over the scenario's model, sets and family. The scenario's
/// solver settings take precedence over options.solver.
Principal make_principal(const Scenario& scenario, PrincipalOptions options = {});
/// Agents holding only their local slice of the scenario.
std::vector<Agent> make_agents(const Scenario& scenario);

}  // namespace mechmpc

#endif  // MECHMPC_SCENARIO_HPP
