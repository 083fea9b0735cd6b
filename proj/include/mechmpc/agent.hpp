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
#ifndef MECHMPC_AGENT_HPP
#define MECHMPC_AGENT_HPP

#include <memory>
#include <optional>

#include "mechmpc/message.hpp"
#include "mechmpc/ocp.hpp"
#include "mechmpc/solver.hpp"
#include "mechmpc/surrogate.hpp"
#include "mechmpc/util.hpp"

namespace mechmpc {

/// Raised when an agent-local problem has no feasible trajectory.
class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

/// One agent: private cost, local dynamics (its own blocks only), local
/// constraint sets, and the latest feedback received from the principal.
/// An agent never sees the full A matrix or other agents' costs.
class Agent {
 public:
  Agent(int index, AgentCost cost, Eigen::MatrixXd local_A, Eigen::MatrixXd local_B,
        ConstraintSet state_set, ConstraintSet input_set, int horizon, Eigen::VectorXd x0,
        std::vector<Eigen::VectorXd> local_disturbance = {});

  int index() const { return index_; }
  int state_dim() const { return static_cast<int>(local_A_.rows()); }
  int input_dim() const { return static_cast<int>(local_B_.cols()); }
  int horizon() const { return horizon_; }
  const AgentCost& cost() const { return cost_; }
  const Eigen::VectorXd& initial_state() const { return x0_; }
  const Message& current_message() const { return current_message_; }
  void set_current_message(Message msg) { current_message_ = std::move(msg); }
  const Eigen::MatrixXd& reference() const { return reference_; }
  const Eigen::MatrixXd& prices() const { return prices_; }
  const Eigen::MatrixXd& exclusion_ref() const { return exclusion_ref_; }

  void set_initial_state(const Eigen::VectorXd& x0);
  void set_local_disturbance(std::vector<Eigen::VectorXd> d);

  /// Stores the round feedback (coupling reference c, externality prices, and
  /// the exclusion reference entering the fee's constant part).
  void receive_feedback(Eigen::MatrixXd reference, Eigen::MatrixXd prices,
                        Eigen::MatrixXd exclusion_ref);

  /// The agent's local problem: its own dynamics driven by the coupling
  /// reference, true cost plus the priced-state fee term. The fee's constant
  /// part shifts the objective value but not the argmin.
  OcpProblem local_problem() const;

  /// Solves the local problem. Throws InfeasibleError (with the violation
  /// summary) when the sets are too tight for the reference.
  OcpSolution solve_local(const SolverSettings& settings = {}) const;

  /// Weight update: matches the announced family's derivative to the true
  /// cost gradient along the given local solution; reports the solution
  /// states as the reference and its dynamics multipliers as sensitivities;
  /// leaves the operational bounds unbounded.
  Message gradient_matching_message(const OcpSolution& local_solution,
                                    const SurrogateFamily& family) const;

  /// Deviation message that pins the agent's whole trajectory to the target
  /// via the bounds report. The target must start at x0, satisfy the local
  /// dynamics under the current reference, and lie in the sets.
  Message pinned_message(const Eigen::MatrixXd& target_states,
                         const Eigen::MatrixXd& target_inputs) const;

  /// Equilibrium message built from an externally supplied efficient
  /// trajectory slice and its dynamics multipliers (test/seeding oracle).
  Message truthful_message(const Eigen::MatrixXd& efficient_states,
                           const Eigen::MatrixXd& efficient_inputs,
                           const Eigen::MatrixXd& dyn_multipliers,
                           const SurrogateFamily& family) const;

  /// Random locally feasible trajectory (inputs sampled in the input set,
  /// states rolled out under the current reference); nullopt if sampling
  /// cannot satisfy the state set.
  std::optional<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> random_feasible_target(
      Rng& rng) const;

  /// Random unilateral deviation from `base` for equilibrium testing.
  /// Strategies rotate with `strategy`: multiplicative log-normal noise on
  /// the weights, additive noise on the reports, pinned random trajectories,
  /// and the rational deviation (pin the local best response).
  Message deviation_message(const Message& base, Rng& rng, double sigma, int strategy,
                            const SolverSettings& solver = {}) const;

 private:
  Eigen::MatrixXd match_state_weights(const SurrogateFamily& family,
                                      const Eigen::MatrixXd& states,
                                      const Eigen::MatrixXd& inputs) const;
  Eigen::MatrixXd match_input_weights(const SurrogateFamily& family,
                                      const Eigen::MatrixXd& states,
                                      const Eigen::MatrixXd& inputs) const;

  int index_;
  AgentCost cost_;
  Eigen::MatrixXd local_A_, local_B_;
  ConstraintSet state_set_, input_set_;
  int horizon_;
  Eigen::VectorXd x0_;
  std::vector<Eigen::VectorXd> local_disturbance_;
  Eigen::MatrixXd reference_;      // c, T x n_i
  Eigen::MatrixXd prices_;         // T x n_i
  Eigen::MatrixXd exclusion_ref_;  // (T+1) x n_i
  Message current_message_;
};

}  // namespace mechmpc

#endif  // MECHMPC_AGENT_HPP
