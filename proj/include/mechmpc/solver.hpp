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
#ifndef MECHMPC_SOLVER_HPP
#define MECHMPC_SOLVER_HPP

#include <optional>
#include <vector>

#include "mechmpc/ocp.hpp"

namespace mechmpc {

/// Solves the OCP with a log-barrier interior-point method: Newton steps on
/// the equality-constrained barrier problem (dynamics kept explicit), barrier
/// parameter reduced geometrically. Inequality multipliers come from the
/// barrier slacks, equality multipliers from the Newton system, so the
/// Lagrange multipliers the mechanism needs are a by-product of the solve.
///
/// Reported bounds with lower == upper are eliminated as hard pins so the
/// interior stays nonempty. Infeasible problems are certified via an elastic
/// phase-1 subproblem and reported in-band (status infeasible); non-finite
/// arithmetic raises NumericalError instead.
///
/// Deterministic: identical inputs produce bit-identical outputs.
OcpSolution solve_ocp(const OcpProblem& problem, const SolverSettings& settings = {});

/// As above but starts the barrier from `start` when it is strictly feasible
/// (used to check that the optimum does not depend on the starting point).
OcpSolution solve_ocp(const OcpProblem& problem, const SolverSettings& settings,
                      const std::vector<Trajectory>& start);

inline OcpSolution solve_ocp(const OcpProblem& problem, double tol, int max_iter) {
  SolverSettings settings;
  settings.tol = tol;
  settings.max_newton_iter = max_iter;
  return solve_ocp(problem, settings);
}

/// Evaluates the first-order optimality system at an arbitrary
/// (solution-shaped) point: stationarity rows per agent/stage/coordinate,
/// primal feasibility and complementarity. Pure diagnostic; does not solve.
KktReport kkt_residuals(const OcpProblem& problem, const OcpSolution& solution);

struct PhaseOneResult {
  bool feasible = false;
  bool strict = false;  ///< every inequality slack >= margin
  std::vector<Trajectory> point;
  InfeasibilityCertificate certificate;
};

/// Elastic feasibility subproblem: minimizes the total inequality violation
/// subject to the equality constraints. Returns a strictly feasible point
/// (early exit) or the minimal-total-violation certificate.
PhaseOneResult solve_phase1(const OcpProblem& problem, const SolverSettings& settings = {});

/// Single-agent restriction of a model: dynamics A_ii, B_i, the agent's rows
/// of the disturbance, and its slice of x0. The agent-local problems are
/// ordinary OCPs on this model.
SystemModel restrict_to_agent(const SystemModel& model, int agent);

}  // namespace mechmpc

#endif  // MECHMPC_SOLVER_HPP
