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
#ifndef MECHMPC_OCP_HPP
#define MECHMPC_OCP_HPP

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "mechmpc/surrogate.hpp"
#include "mechmpc/system_model.hpp"

namespace mechmpc {

/// Objective assignment for one agent inside an OCP.
///
/// - TrueObjective: the agent's private cost.
/// - SurrogateObjective: separable parametric terms built from reported
///   weights (rows are stages: v is (T+1) x n_i, w is T x m_i).
/// - ZeroObjective: no preference; regularized with eps*(|x|^2 + |u|^2) so the
///   problem stays strictly convex.
struct TrueObjective {
  AgentCost cost;
};
struct SurrogateObjective {
  SurrogateFamily family;
  Eigen::MatrixXd state_weights;  // v, (T+1) x n_i
  Eigen::MatrixXd input_weights;  // w, T x m_i
};
struct ZeroObjective {
  double eps = 1e-8;
};
using AgentObjective = std::variant<TrueObjective, SurrogateObjective, ZeroObjective>;

/// Optional per-agent, per-stage box bounds layered on top of the base
/// constraint sets (the reported operational bounds). Entries may be +/-inf;
/// an entry pair with lower == upper pins the coordinate exactly.
struct StageBounds {
  Eigen::MatrixXd state_lower;  // (T+1) x n_i
  Eigen::MatrixXd state_upper;
  Eigen::MatrixXd input_lower;  // T x m_i
  Eigen::MatrixXd input_upper;

  static StageBounds unbounded(int horizon, int n_i, int m_i);
};

/// Convex optimal control problem over the model's linear dynamics. The same
/// structure expresses the centralized true-cost problem, the surrogate
/// problem, and (through fixed_coupling on a single-agent model) each agent's
/// local problem.
struct OcpProblem {
  std::shared_ptr<const SystemModel> model;
  std::vector<ConstraintSet> state_sets;  // one per agent
  std::vector<ConstraintSet> input_sets;
  std::vector<AgentObjective> objectives;  // exactly one per agent
  std::vector<std::optional<StageBounds>> extra_bounds;
  /// Added to the objective as sum_k <terms[k], x^(i)_k> for k = 0..T-1.
  std::vector<std::optional<Eigen::MatrixXd>> linear_state_terms;  // T x n_i
  /// When set for agent i, that agent's dynamics read
  /// x_{k+1} = A_ii x_k + B_i u_k + d^(i)_k + coupling[k]; neighbor state
  /// variables no longer enter its rows.
  std::vector<std::optional<Eigen::MatrixXd>> fixed_coupling;  // T x n_i
  /// Constant added to the reported objective value (does not move the argmin).
  double objective_constant = 0.0;

  /// Initializes the per-agent vectors to match the model; objectives default
  /// to ZeroObjective and must be assigned by the caller.
  static OcpProblem for_model(std::shared_ptr<const SystemModel> model,
                              std::vector<ConstraintSet> state_sets,
                              std::vector<ConstraintSet> input_sets);
};

enum class SolveStatus { optimal, infeasible, max_iter };

/// Nonnegative multipliers for the inequality constraints, structured by
/// origin. A pinned bound (lower == upper) behaves like an equality; its
/// signed multiplier is split into the lower/upper parts.
struct IneqMultipliers {
  // Per agent: rows of the base sets, one vector per stage.
  std::vector<std::vector<Eigen::VectorXd>> state_set;  // [agent][stage 0..T]
  std::vector<std::vector<Eigen::VectorXd>> input_set;  // [agent][stage 0..T-1]
  // Per agent: extra bound multipliers, zero where the bound is absent.
  std::vector<Eigen::MatrixXd> state_bound_lower;  // (T+1) x n_i
  std::vector<Eigen::MatrixXd> state_bound_upper;
  std::vector<Eigen::MatrixXd> input_bound_lower;  // T x m_i
  std::vector<Eigen::MatrixXd> input_bound_upper;
};

/// Certificate produced when a problem is infeasible.
struct InfeasibilityCertificate {
  double total_violation = 0.0;     ///< minimal sum of inequality violations found
  double equality_residual = 0.0;   ///< residual of the equality system, if inconsistent
  std::vector<Violation> worst;     ///< a few of the largest violated rows
};

struct KktReport {
  double stationarity_inf = 0.0;
  double dynamics_inf = 0.0;
  double inequality_inf = 0.0;
  double complementarity_inf = 0.0;
  /// Stationarity left-hand sides, one row per stage: state rows k = 1..T
  /// (row k-1; row T-1 is the terminal equation), input rows k = 0..T-1.
  std::vector<Eigen::MatrixXd> state_stationarity;  // [agent] T x n_i
  std::vector<Eigen::MatrixXd> input_stationarity;  // [agent] T x m_i
  double max_residual() const;
};

/// Solution bundle. status == optimal certifies that the recomputed KKT
/// residuals (stationarity, feasibility, complementarity) are at the solver
/// tolerance; `residuals` carries the achieved values (typically well below
/// it, capped at a small factor of tol under extreme active-set conditioning).
struct OcpSolution {
  SolveStatus status = SolveStatus::infeasible;
  std::vector<Trajectory> trajectories;
  /// Multipliers on the stage-k dynamics equality (the row producing x_{k+1}),
  /// k = 0..T-1, under the sign convention
  ///   dl/dx_k + A^T nu_k - nu_{k-1} + (constraint terms) = 0.
  std::vector<Eigen::MatrixXd> dyn_multipliers;  // [agent] T x n_i
  IneqMultipliers ineq_multipliers;
  double objective_value = 0.0;
  KktReport residuals;
  std::optional<InfeasibilityCertificate> infeasibility;
  int barrier_stages = 0;
  int newton_iterations = 0;
};

struct SolverSettings {
  double tol = 1e-8;          ///< target on the KKT residual inf-norm
  int max_newton_iter = 100;  ///< per centering step
  double barrier_factor = 10.0;
  double barrier_t0 = 1.0;
  double equality_tol = 1e-9;
  double strict_margin = 1e-7;    ///< required slack for a strictly feasible start
  double zero_objective_eps = 1e-8;
  bool trace = false;             ///< one line per Newton step to stderr
};

}  // namespace mechmpc

#endif  // MECHMPC_OCP_HPP
