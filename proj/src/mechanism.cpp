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
#include "mechmpc/mechanism.hpp"

#include <cmath>
#include <sstream>

namespace mechmpc {

// ---------------------------------------------------------------------------
// Message
// ---------------------------------------------------------------------------

Message Message::bootstrap(int horizon, int n_i, int m_i) {
  Message msg;
  msg.state_weights = Eigen::MatrixXd::Ones(horizon + 1, n_i);
  msg.input_weights = Eigen::MatrixXd::Ones(horizon, m_i);
  msg.sensitivity = Eigen::MatrixXd::Zero(horizon, n_i);
  msg.bounds = StageBounds::unbounded(horizon, n_i, m_i);
  msg.state_ref = Eigen::MatrixXd::Zero(horizon + 1, n_i);
  return msg;
}

namespace {

double bounds_pattern_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  double d = 0.0;
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < a.cols(); ++c) {
      const bool fa = std::isfinite(a(r, c)), fb = std::isfinite(b(r, c));
      if (fa != fb) return kInf;
      if (fa) d = std::max(d, std::abs(a(r, c) - b(r, c)));
    }
  return d;
}

}  // namespace

double message_distance(const Message& a, const Message& b) {
  double d = 0.0;
  d = std::max(d, (a.state_weights - b.state_weights).cwiseAbs().maxCoeff());
  d = std::max(d, (a.input_weights - b.input_weights).cwiseAbs().maxCoeff());
  d = std::max(d, (a.sensitivity - b.sensitivity).cwiseAbs().maxCoeff());
  d = std::max(d, (a.state_ref - b.state_ref).cwiseAbs().maxCoeff());
  d = std::max(d, bounds_pattern_distance(a.bounds.state_lower, b.bounds.state_lower));
  d = std::max(d, bounds_pattern_distance(a.bounds.state_upper, b.bounds.state_upper));
  d = std::max(d, bounds_pattern_distance(a.bounds.input_lower, b.bounds.input_lower));
  d = std::max(d, bounds_pattern_distance(a.bounds.input_upper, b.bounds.input_upper));
  return d;
}

void validate_message(const SystemModel& model, const SurrogateFamily& family, int agent,
                      const Message& msg) {
  const int T = model.horizon;
  const int ni = model.partition[agent].n, mi = model.partition[agent].m;
  auto fail = [&](const std::string& what) {
    std::ostringstream os;
    os << "message from agent " << agent << ": " << what;
    throw ConfigError(os.str());
  };
  if (msg.state_weights.rows() != T + 1 || msg.state_weights.cols() != ni)
    fail("state weights have wrong shape");
  if (msg.input_weights.rows() != T || msg.input_weights.cols() != mi)
    fail("input weights have wrong shape");
  if (msg.sensitivity.rows() != T || msg.sensitivity.cols() != ni)
    fail("sensitivity report has wrong shape");
  if (msg.state_ref.rows() != T + 1 || msg.state_ref.cols() != ni)
    fail("state reference has wrong shape");
  if (msg.bounds.state_lower.rows() != T + 1 || msg.bounds.state_lower.cols() != ni ||
      msg.bounds.state_upper.rows() != T + 1 || msg.bounds.state_upper.cols() != ni ||
      msg.bounds.input_lower.rows() != T || msg.bounds.input_lower.cols() != mi ||
      msg.bounds.input_upper.rows() != T || msg.bounds.input_upper.cols() != mi)
    fail("bounds report has wrong shape");

  if (!msg.state_weights.allFinite() || !msg.input_weights.allFinite())
    fail("weights must be finite");
  if (!msg.sensitivity.allFinite()) fail("sensitivity must be finite");
  if (!msg.state_ref.allFinite()) fail("state reference must be finite");
  if (msg.bounds.state_lower.hasNaN() || msg.bounds.state_upper.hasNaN() ||
      msg.bounds.input_lower.hasNaN() || msg.bounds.input_upper.hasNaN())
    fail("bounds must not contain NaN");
  if (((msg.bounds.state_upper - msg.bounds.state_lower).array() < 0.0).any() ||
      ((msg.bounds.input_upper - msg.bounds.input_lower).array() < 0.0).any())
    fail("bound lower exceeds upper");

  for (int k = 0; k <= T; ++k)
    for (int j = 0; j < ni; ++j)
      if (family.state_param_valid && !family.state_param_valid(msg.state_weights(k, j)))
        fail("invalid state weight");
  for (int k = 0; k < T; ++k)
    for (int h = 0; h < mi; ++h)
      if (family.input_param_valid && !family.input_param_valid(msg.input_weights(k, h)))
        fail("invalid input weight");
}

// ---------------------------------------------------------------------------
// Principal
// ---------------------------------------------------------------------------

Principal::Principal(std::shared_ptr<const SystemModel> model,
                     std::vector<ConstraintSet> state_sets, std::vector<ConstraintSet> input_sets,
                     SurrogateFamily family, PrincipalOptions options)
    : model_(std::move(model)),
      state_sets_(std::move(state_sets)),
      input_sets_(std::move(input_sets)),
      family_(std::move(family)),
      options_(std::move(options)) {
  const int na = model_->num_agents();
  if (static_cast<int>(state_sets_.size()) != na || static_cast<int>(input_sets_.size()) != na)
    throw ConfigError("constraint set count disagrees with the model");
  for (const auto& s : state_sets_) s.validate();
  for (const auto& s : input_sets_) s.validate();
}

void Principal::validate_profile(const std::vector<Message>& messages) const {
  if (static_cast<int>(messages.size()) != model_->num_agents())
    throw ConfigError("expected one message per agent");
  for (int i = 0; i < model_->num_agents(); ++i)
    validate_message(*model_, family_, i, messages[i]);
}

OcpProblem Principal::surrogate_problem(const std::vector<Message>& messages) const {
  OcpProblem p = OcpProblem::for_model(model_, state_sets_, input_sets_);
  for (int i = 0; i < model_->num_agents(); ++i) {
    // Only the weight and bound components enter; the sensitivity and
    // reference reports must not influence the outcome.
    p.objectives[i] =
        SurrogateObjective{family_, messages[i].state_weights, messages[i].input_weights};
    p.extra_bounds[i] = messages[i].bounds;
  }
  return p;
}

OcpSolution Principal::outcome(const std::vector<Message>& messages) const {
  return solve_ocp(surrogate_problem(messages), options_.solver);
}

Eigen::MatrixXd Principal::coupling_reference(const std::vector<Message>& messages,
                                              int agent) const {
  const int T = model_->horizon, ni = model_->partition[agent].n;
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(T, ni);
  for (int j : model_->neighbors[agent]) {
    const auto Aij = model_->state_block(agent, j);
    for (int k = 0; k < T; ++k)
      c.row(k) += (Aij * messages[j].state_ref.row(k).transpose()).transpose();
  }
  return c;
}

Eigen::MatrixXd Principal::externality_prices(const std::vector<Message>& messages,
                                              int agent) const {
  const int T = model_->horizon, ni = model_->partition[agent].n;
  Eigen::MatrixXd prices = Eigen::MatrixXd::Zero(T, ni);
  for (int j = 0; j < model_->num_agents(); ++j) {
    if (j == agent) continue;
    bool has_me = false;
    for (int nb : model_->neighbors[j])
      if (nb == agent) has_me = true;
    if (!has_me) continue;
    const auto Aji = model_->state_block(j, agent);
    for (int k = 0; k < T; ++k)
      prices.row(k) += (Aji.transpose() * messages[j].sensitivity.row(k).transpose()).transpose();
  }
  return prices;
}

std::optional<Eigen::MatrixXd> Principal::exclusion_trajectory(
    const std::vector<Message>& messages, int agent) const {
  if (options_.exclusion_mode == ExclusionMode::full_resolve) {
    OcpProblem p = surrogate_problem(messages);
    p.objectives[agent] = ZeroObjective{options_.solver.zero_objective_eps};
    p.extra_bounds[agent] = std::nullopt;  // reported bounds dropped with the objective
    OcpSolution sol = solve_ocp(p, options_.solver);
    if (sol.status == SolveStatus::infeasible) return std::nullopt;
    if (sol.status != SolveStatus::optimal)
      throw NumericalError("exclusion solve did not converge");
    return sol.trajectories[agent].states;
  }

  // reference_local: the agent's subsystem alone, neighbors frozen at the
  // coupling reference built from the other agents' reported trajectories.
  auto local = std::make_shared<SystemModel>(restrict_to_agent(*model_, agent));
  OcpProblem p = OcpProblem::for_model(local, {state_sets_[agent]}, {input_sets_[agent]});
  p.objectives[0] = ZeroObjective{options_.solver.zero_objective_eps};
  p.fixed_coupling[0] = coupling_reference(messages, agent);
  OcpSolution sol = solve_ocp(p, options_.solver);
  if (sol.status == SolveStatus::infeasible) return std::nullopt;
  if (sol.status != SolveStatus::optimal) throw NumericalError("exclusion solve did not converge");
  return sol.trajectories[0].states;
}

FeeBreakdown Principal::fee(const std::vector<Message>& messages, const OcpSolution& outcome,
                            int agent, const Eigen::MatrixXd& exclusion_ref,
                            const Eigen::MatrixXd& prices) const {
  const int T = model_->horizon;
  const Trajectory& z_i = outcome.trajectories[agent];
  FeeBreakdown f;
  for (int k = 0; k < T; ++k)
    f.externality += prices.row(k).dot(z_i.states.row(k) - exclusion_ref.row(k));
  f.x_mismatch = (messages[agent].state_ref - z_i.states).squaredNorm();
  f.lambda_mismatch = (messages[agent].sensitivity - outcome.dyn_multipliers[agent]).squaredNorm();
  f.total = f.externality + f.x_mismatch + f.lambda_mismatch;
  return f;
}

Eigen::VectorXd Principal::fallback_input(const std::vector<Message>& messages) const {
  PhaseOneResult p1 = solve_phase1(surrogate_problem(messages), options_.solver);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(model_->m());
  for (int i = 0; i < model_->num_agents(); ++i) {
    Eigen::VectorXd ui = p1.point[i].inputs.row(0).transpose();
    // Project onto the input set (boxes exactly; polytopes by clipping along
    // violated rows, adequate for a fallback).
    if (input_sets_[i].is_box()) {
      const BoxSet& b = input_sets_[i].as_box();
      ui = ui.cwiseMax(b.lower).cwiseMin(b.upper);
    } else if (input_sets_[i].num_rows() > 0) {
      Eigen::VectorXd coeffs;
      double rhs = 0.0;
      for (int r = 0; r < input_sets_[i].num_rows(); ++r) {
        input_sets_[i].row(r, coeffs, rhs);
        const double v = coeffs.dot(ui) - rhs;
        const double nrm2 = coeffs.squaredNorm();
        if (v > 0.0 && nrm2 > 0.0) ui -= (v / nrm2) * coeffs;
      }
    }
    u.segment(model_->input_offset[i], model_->partition[i].m) = ui;
  }
  return u;
}

}  // namespace mechmpc
