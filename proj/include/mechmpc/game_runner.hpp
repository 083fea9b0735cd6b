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
#ifndef MECHMPC_GAME_RUNNER_HPP
#define MECHMPC_GAME_RUNNER_HPP

#include <optional>
#include <string>
#include <vector>

#include "mechmpc/agent.hpp"
#include "mechmpc/mechanism.hpp"
#include "mechmpc/scenario.hpp"

namespace mechmpc {

/// One round of the repeated game at a fixed initial condition.
struct RoundRecord {
  int round = 0;
  std::vector<Message> messages;  // the profile the principal acted on
  SolveStatus status = SolveStatus::infeasible;
  std::vector<Trajectory> outcome;                   // z(m), empty when infeasible
  std::vector<Eigen::MatrixXd> outcome_multipliers;  // dynamics multipliers of the solve
  std::vector<FeeBreakdown> fees;
  std::vector<Eigen::MatrixXd> references;  // coupling references sent out
  std::vector<double> true_costs;           // private costs at z_i (never surrogate values)
  double message_change = 0.0;              // profile -> updated profile, inf-norm
  bool exclusion_fallback = false;          // some exclusion solve was infeasible
};

struct LearningResult {
  std::vector<RoundRecord> rounds;
  std::vector<Message> final_messages;
  bool converged = false;
  double final_change = 0.0;
};

/// Replays the game at the scenario's initial condition: the principal
/// computes the outcome, references, prices, exclusion references and fees;
/// each agent solves its local problem and refreshes its message by gradient
/// matching. Stops when the profile changes by less than tol (inf-norm).
LearningResult run_learning(const Scenario& scenario, int max_rounds, double tol,
                            const std::optional<std::vector<Message>>& initial_profile = {},
                            int jobs = 1);

struct DeviationSample {
  int agent = 0;
  int sample = 0;
  int strategy = 0;
  double gain = 0.0;  // base cost minus deviated cost; positive = profitable
  bool infeasible = false;
};

struct DeviationReport {
  std::vector<double> base_costs;  // V_i + fee_i at the profile
  std::vector<DeviationSample> best_per_agent;
  double max_gain = -kInf;
  int infeasible_count = 0;
  int samples_per_agent = 0;
  double tolerance = 0.0;
  bool pass() const { return max_gain <= tolerance; }
  bool pass(double tol) const { return max_gain <= tol; }
};

/// Samples unilateral deviations for every agent and reports the largest
/// cost decrease found. Infeasible deviations are counted separately (the
/// principal would fall back; they cannot certify a profitable deviation).
DeviationReport verify_nash(const Scenario& scenario, const std::vector<Message>& profile,
                            int samples, std::uint64_t seed, double tol, int jobs = 1);

enum class ControllerKind { perfect, mechanism, consensus };
std::string controller_tag(ControllerKind kind);  // "P", "M", "A"

struct MpcStageLog {
  int stage = 0;
  Eigen::VectorXd applied_input;
  Eigen::VectorXd realized_state;  // state after the step
  Eigen::VectorXd disturbance;     // realized disturbance entering the step
  std::vector<double> stage_costs;  // per-agent true stage cost at (x_t, u_t)
  bool round_infeasible = false;
  std::vector<Message> messages;  // mechanism controller only
};

struct MpcLog {
  ControllerKind controller = ControllerKind::perfect;
  std::uint64_t seed = 0;
  Eigen::VectorXd initial_state;
  std::vector<MpcStageLog> stages;

  double aggregate_stage_cost(int stage) const;
  double cumulative_cost(int from_stage, int to_stage) const;  // inclusive range
};

/// Receding-horizon simulation, one controller. Exposed stepwise so tests can
/// inspect per-stage plans.
class MpcDriver {
 public:
  MpcDriver(const Scenario& scenario, ControllerKind kind, int sim_length, std::uint64_t seed,
            int jobs = 1);

  struct StepResult {
    Eigen::VectorXd input;
    std::vector<Trajectory> plan;  // open-loop plan; empty on an infeasible round
    bool round_infeasible = false;
    std::vector<Message> messages;  // profile used this stage (mechanism only)
    std::shared_ptr<const SystemModel> window_model;
  };

  bool done() const { return stage_ >= sim_length_; }
  int stage() const { return stage_; }
  const Eigen::VectorXd& state() const { return state_; }
  const Eigen::VectorXd& realized_disturbance(int t) const { return realized_[t]; }

  StepResult step();

 private:
  std::shared_ptr<const SystemModel> window_model() const;

  Scenario scenario_;
  ControllerKind kind_;
  int sim_length_;
  std::uint64_t seed_;
  int jobs_;
  std::vector<Eigen::VectorXd> realized_;  // sim_length + horizon entries
  Eigen::VectorXd state_;
  int stage_ = 0;
  std::vector<Agent> agents_;          // mechanism only
  std::vector<Message> messages_;      // current profile (mechanism only)
};

MpcLog run_mpc(const Scenario& scenario, ControllerKind kind, int sim_length, std::uint64_t seed,
               int jobs = 1);

struct CompareTables {
  std::vector<std::string> cost_header;            // stage, cost_<tag>...
  std::vector<std::vector<double>> cost_rows;      // aggregated true stage cost
  std::vector<std::string> trajectory_header;      // stage, s<j>_<tag>...
  std::vector<std::vector<double>> trajectory_rows;
  std::vector<std::string> summary_lines;          // cumulative costs and gaps
  std::vector<double> cumulative_from_10;          // per controller, stages 10..end
};

/// The data behind the closed-loop comparison figures: per-stage aggregated
/// true cost per controller and per-coordinate state traces.
CompareTables compare_report(const std::vector<MpcLog>& logs);

}  // namespace mechmpc

#endif  // MECHMPC_GAME_RUNNER_HPP
