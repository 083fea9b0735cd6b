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
#ifndef MECHMPC_MECHANISM_HPP
#define MECHMPC_MECHANISM_HPP

#include <memory>
#include <optional>
#include <vector>

#include "mechmpc/message.hpp"
#include "mechmpc/ocp.hpp"
#include "mechmpc/solver.hpp"
#include "mechmpc/surrogate.hpp"

namespace mechmpc {

/// The three additive fee terms charged to one agent.
struct FeeBreakdown {
  double externality = 0.0;      ///< priced deviation from the exclusion reference
  double x_mismatch = 0.0;       ///< squared distance of reported to computed states
  double lambda_mismatch = 0.0;  ///< squared distance of reported to computed sensitivities
  double total = 0.0;
};

/// How the exclusion reference is computed.
enum class ExclusionMode {
  /// Re-solve the surrogate problem with the agent's objective zeroed and its
  /// reported bounds dropped (default; the result cannot depend on the
  /// agent's own message).
  full_resolve,
  /// Solve the agent's subsystem alone, neighbors represented by the
  /// coupling reference built from the other agents' reports.
  reference_local,
};

struct PrincipalOptions {
  ExclusionMode exclusion_mode = ExclusionMode::full_resolve;
  SolverSettings solver;
};

/// The coordinator: knows the dynamics and constraint sets, announces the
/// surrogate family, and turns a message profile into the controlled outcome,
/// coupling references, sensitivity aggregates, exclusion references, and
/// fees. Stateless between calls; a round is one sequence of calls over an
/// immutable message profile.
class Principal {
 public:
  Principal(std::shared_ptr<const SystemModel> model, std::vector<ConstraintSet> state_sets,
            std::vector<ConstraintSet> input_sets, SurrogateFamily family,
            PrincipalOptions options = {});

  const SystemModel& model() const { return *model_; }
  const SurrogateFamily& family() const { return family_; }
  const std::vector<ConstraintSet>& state_sets() const { return state_sets_; }
  const std::vector<ConstraintSet>& input_sets() const { return input_sets_; }
  const PrincipalOptions& options() const { return options_; }

  void validate_profile(const std::vector<Message>& messages) const;

  /// Solves the surrogate problem built from the weight and bound components
  /// of the messages; the sensitivity and reference components are ignored.
  /// An infeasible profile is reported through the solution status.
  OcpSolution outcome(const std::vector<Message>& messages) const;

  /// Coupling reference for agent i: row k is sum_j A_ij x_ref^(j)_k,
  /// k = 0..T-1. Depends only on the neighbors' reports.
  Eigen::MatrixXd coupling_reference(const std::vector<Message>& messages, int agent) const;

  /// Externality price for agent i: row k is sum_{j : i in N_j} A_ji^T
  /// sensitivity^(j)_k. Depends only on the other agents' reports.
  Eigen::MatrixXd externality_prices(const std::vector<Message>& messages, int agent) const;

  /// Exclusion reference for agent i: its state trajectory in a solve that
  /// ignores the agent's objective (and, in full_resolve mode, its bounds).
  /// Throws NumericalError if the exclusion problem cannot be solved; returns
  /// nullopt when it is infeasible (caller applies the fallback).
  std::optional<Eigen::MatrixXd> exclusion_trajectory(const std::vector<Message>& messages,
                                                      int agent) const;

  /// Fee for agent i given the round's outcome and the (message-independent)
  /// exclusion reference and prices.
  FeeBreakdown fee(const std::vector<Message>& messages, const OcpSolution& outcome, int agent,
                   const Eigen::MatrixXd& exclusion_ref, const Eigen::MatrixXd& prices) const;

  /// Fallback input applied when the surrogate problem is infeasible: the
  /// phase-1 point's first input, projected onto the input sets.
  Eigen::VectorXd fallback_input(const std::vector<Message>& messages) const;

 private:
  OcpProblem surrogate_problem(const std::vector<Message>& messages) const;

  std::shared_ptr<const SystemModel> model_;
  std::vector<ConstraintSet> state_sets_;
  std::vector<ConstraintSet> input_sets_;
  SurrogateFamily family_;
  PrincipalOptions options_;
};

}  // namespace mechmpc

#endif  // MECHMPC_MECHANISM_HPP
