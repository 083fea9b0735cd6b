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
#ifndef MECHMPC_SYSTEM_MODEL_HPP
#define MECHMPC_SYSTEM_MODEL_HPP

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mechmpc/util.hpp"

namespace mechmpc {

/// Per-agent state/input dimensions.
struct AgentDims {
  int n = 0;  ///< state dimension n_i
  int m = 0;  ///< input dimension m_i
};

/// Partitioned constrained linear system
///
///   x_{k+1} = A x_k + B u_k + d_k
///
/// with one agent per block. B is block-diagonal; neighbor sets are derived
/// from the sparsity of A's off-diagonal blocks. Immutable after
/// build_system(); all operations on it are pure.
struct SystemModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  std::vector<AgentDims> partition;
  int horizon = 0;  ///< number of stages T
  Eigen::VectorXd x0;
  std::vector<Eigen::VectorXd> disturbance;  ///< empty, or one n-vector per stage

  // Derived at build time.
  std::vector<std::vector<int>> neighbors;  ///< j in neighbors[i] iff block A_ij != 0
  std::vector<int> state_offset;
  std::vector<int> input_offset;

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }
  int num_agents() const { return static_cast<int>(partition.size()); }

  Eigen::Block<const Eigen::MatrixXd> state_block(int i, int j) const {
    return A.block(state_offset[i], state_offset[j], partition[i].n, partition[j].n);
  }
  Eigen::Block<const Eigen::MatrixXd> input_block(int i) const {
    return B.block(state_offset[i], input_offset[i], partition[i].n, partition[i].m);
  }
  Eigen::VectorXd state_slice(const Eigen::VectorXd& x, int i) const {
    return x.segment(state_offset[i], partition[i].n);
  }
  /// Stage-k disturbance (zero vector when no disturbance configured).
  Eigen::VectorXd disturbance_at(int k) const;
  /// Agent-i rows of the stage-k disturbance.
  Eigen::VectorXd local_disturbance_at(int i, int k) const;
};

/// Inputs to build_system(); neighbor sets may optionally be declared and are
/// then checked against the sparsity of A.
struct SystemConfig {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  std::vector<AgentDims> partition;
  int horizon = 0;
  Eigen::VectorXd x0;
  std::vector<Eigen::VectorXd> disturbance;
  std::optional<std::vector<std::vector<int>>> declared_neighbors;
};

/// Validates the configuration (partition exactness, block-diagonal B,
/// dimensions) and derives neighbor sets from A's off-diagonal blocks.
/// Throws ConfigError on violation.
SystemModel build_system(const SystemConfig& config);

/// One step of the full dynamics: A x + B u + d_k.
Eigen::VectorXd step_dynamics(const SystemModel& model, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& u, int k);

/// Neighbor contribution to agent i at stage k: sum_j A_ij x^(j)_k.
/// `states` holds the full state at that stage.
Eigen::VectorXd coupling_input(const SystemModel& model, int i, const Eigen::VectorXd& states_k);

// ---------------------------------------------------------------------------
// Constraint sets
// ---------------------------------------------------------------------------

/// Polytope {s : G s <= g}. Build-time validation requires g >= 0, i.e. the
/// set contains the origin.
struct PolytopeSet {
  Eigen::MatrixXd G;
  Eigen::VectorXd g;
};

/// Axis-aligned box; entries may be +/-inf for one-sided or absent bounds.
struct BoxSet {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

/// Constraint set for one agent's states or inputs. Boxes are first-class
/// (the solver generates one row per finite bound); general polytopes are
/// supported through the same interface.
class ConstraintSet {
 public:
  ConstraintSet() = default;  // unconstrained
  static ConstraintSet unconstrained(int dim);
  static ConstraintSet box(Eigen::VectorXd lower, Eigen::VectorXd upper);
  static ConstraintSet polytope(Eigen::MatrixXd G, Eigen::VectorXd g);

  bool is_box() const { return std::holds_alternative<BoxSet>(rep_); }
  const BoxSet& as_box() const { return std::get<BoxSet>(rep_); }
  const PolytopeSet& as_polytope() const { return std::get<PolytopeSet>(rep_); }

  int dim() const { return dim_; }
  /// Number of finite inequality rows.
  int num_rows() const;
  /// Row r as (coefficients, rhs): coeffs . s <= rhs.
  void row(int r, Eigen::VectorXd& coeffs, double& rhs) const;
  /// Compiles to the explicit polytope representation (finite rows only).
  PolytopeSet to_polytope() const;
  /// Signed worst violation of s (<= 0 means contained).
  double violation(const Eigen::VectorXd& s) const;
  /// Checks the origin-containment requirement; throws ConfigError if violated.
  void validate() const;

 private:
  int dim_ = 0;
  std::variant<std::monostate, BoxSet, PolytopeSet> rep_;
};

// ---------------------------------------------------------------------------
// Agent costs
// ---------------------------------------------------------------------------

/// Private cost of one agent: strictly convex stage and terminal terms with
/// analytic first and second derivatives. The solver is Newton-based, so
/// second derivatives are part of the contract.
struct AgentCost {
  std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)> stage;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> stage_grad_x;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> stage_grad_u;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> stage_hess_xx;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> stage_hess_uu;
  /// Optional; zero matrix assumed when absent.
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> stage_hess_xu;

  std::function<double(const Eigen::VectorXd&)> terminal;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> terminal_grad;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> terminal_hess;

  std::string descriptor;  ///< opaque label for logging
};

/// Separable quadratic cost: 1/2 sum qx_j (x_j - xt_j)^2 + 1/2 sum ru_h (u_h - ut_h)^2,
/// terminal 1/2 sum qx_j (x_j - xt_j)^2. All weights must be > 0.
AgentCost quadratic_cost(const Eigen::VectorXd& state_weights, const Eigen::VectorXd& state_target,
                         const Eigen::VectorXd& input_weights,
                         const Eigen::VectorXd& input_target, const std::string& descriptor = "");

struct CostCheckOptions {
  int samples = 100;
  double box_radius = 2.0;          ///< sampling radius around the origin
  double gradient_tol = 1e-5;       ///< relative error vs central differences
  bool require_origin_minimum = true;
  bool require_zero_value = true;
};

/// Statistical validation of the AgentCost contract: midpoint convexity on
/// random pairs, gradients vs central finite differences, and (optionally)
/// a minimum at the origin. Throws ConfigError with a description on failure.
void validate_agent_cost(const AgentCost& cost, int n_i, int m_i, const CostCheckOptions& opts,
                         Rng& rng);

// ---------------------------------------------------------------------------
// Trajectories and feasibility checking
// ---------------------------------------------------------------------------

/// Per-agent state/input sequence: states are (T+1) x n_i, inputs T x m_i,
/// one row per stage.
struct Trajectory {
  int agent = 0;
  Eigen::MatrixXd states;
  Eigen::MatrixXd inputs;
};

/// Assembles the full state vector at stage k from per-agent trajectories.
Eigen::VectorXd full_state_at(const SystemModel& model, const std::vector<Trajectory>& trajs,
                              int k);
/// Assembles the full input vector at stage k.
Eigen::VectorXd full_input_at(const SystemModel& model, const std::vector<Trajectory>& trajs,
                              int k);

struct Violation {
  enum class Kind { dynamics, initial_condition, state_set, input_set, state_bound, input_bound };
  Kind kind;
  int agent = -1;  ///< -1 for full-system rows (dynamics/initial)
  int stage = 0;
  int row = 0;  ///< constraint row or coordinate index
  double magnitude = 0.0;
};

struct FeasibilityReport {
  std::vector<Violation> violations;
  bool feasible() const { return violations.empty(); }
  double max_violation() const;
  std::string summary() const;
};

/// Lists every dynamics, initial-condition, state-set and input-set violation
/// above tol. An empty report certifies feasibility at that tolerance.
FeasibilityReport check_feasible(const SystemModel& model,
                                 const std::vector<ConstraintSet>& state_sets,
                                 const std::vector<ConstraintSet>& input_sets,
                                 const std::vector<Trajectory>& trajs, double tol);

}  // namespace mechmpc

#endif  // MECHMPC_SYSTEM_MODEL_HPP
