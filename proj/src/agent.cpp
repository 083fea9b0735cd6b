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
#include "mechmpc/agent.hpp"

#include <cmath>
#include <sstream>

namespace mechmpc {

Agent::Agent(int index, AgentCost cost, Eigen::MatrixXd local_A, Eigen::MatrixXd local_B,
             ConstraintSet state_set, ConstraintSet input_set, int horizon, Eigen::VectorXd x0,
             std::vector<Eigen::VectorXd> local_disturbance)
    : index_(index),
      cost_(std::move(cost)),
      local_A_(std::move(local_A)),
      local_B_(std::move(local_B)),
      state_set_(std::move(state_set)),
      input_set_(std::move(input_set)),
      horizon_(horizon),
      x0_(std::move(x0)),
      local_disturbance_(std::move(local_disturbance)) {
  if (local_A_.rows() != local_A_.cols() || local_A_.rows() != x0_.size())
    throw ConfigError("agent dynamics dimensions are inconsistent");
  if (local_B_.rows() != local_A_.rows()) throw ConfigError("agent input matrix has wrong rows");
  const int ni = state_dim(), mi = input_dim();
  reference_ = Eigen::MatrixXd::Zero(horizon_, ni);
  prices_ = Eigen::MatrixXd::Zero(horizon_, ni);
  exclusion_ref_ = Eigen::MatrixXd::Zero(horizon_ + 1, ni);
  current_message_ = Message::bootstrap(horizon_, ni, mi);
}

void Agent::set_initial_state(const Eigen::VectorXd& x0) {
  if (x0.size() != state_dim()) throw ConfigError("agent initial state has wrong dimension");
  x0_ = x0;
}

void Agent::set_local_disturbance(std::vector<Eigen::VectorXd> d) {
  local_disturbance_ = std::move(d);
}

void Agent::receive_feedback(Eigen::MatrixXd reference, Eigen::MatrixXd prices,
                             Eigen::MatrixXd exclusion_ref) {
  if (reference.rows() != horizon_ || reference.cols() != state_dim())
    throw ConfigError("coupling reference has wrong shape");
  if (prices.rows() != horizon_ || prices.cols() != state_dim())
    throw ConfigError("price array has wrong shape");
  if (exclusion_ref.rows() != horizon_ + 1 || exclusion_ref.cols() != state_dim())
    throw ConfigError("exclusion reference has wrong shape");
  reference_ = std::move(reference);
  prices_ = std::move(prices);
  exclusion_ref_ = std::move(exclusion_ref);
}

OcpProblem Agent::local_problem() const {
  SystemConfig cfg;
  cfg.A = local_A_;
  cfg.B = local_B_;
  cfg.partition = {{state_dim(), input_dim()}};
  cfg.horizon = horizon_;
  cfg.x0 = x0_;
  cfg.disturbance = local_disturbance_;
  auto model = std::make_shared<SystemModel>(build_system(cfg));
  OcpProblem p = OcpProblem::for_model(std::move(model), {state_set_}, {input_set_});
  p.objectives[0] = TrueObjective{cost_};
  p.fixed_coupling[0] = reference_;
  p.linear_state_terms[0] = prices_;
  double constant = 0.0;
  for (int k = 0; k < horizon_; ++k) constant -= prices_.row(k).dot(exclusion_ref_.row(k));
  p.objective_constant = constant;
  return p;
}

OcpSolution Agent::solve_local(const SolverSettings& settings) const {
  OcpSolution sol = solve_ocp(local_problem(), settings);
  if (sol.status == SolveStatus::infeasible) {
    std::ostringstream os;
    os << "agent " << index_ << " local problem infeasible";
    if (sol.infeasibility)
      os << " (total violation " << sol.infeasibility->total_violation << ")";
    throw InfeasibleError(os.str());
  }
  if (sol.status != SolveStatus::optimal) {
    std::ostringstream os;
    os << "agent " << index_ << " local solve did not converge";
    throw NumericalError(os.str());
  }
  return sol;
}

Eigen::MatrixXd Agent::match_state_weights(const SurrogateFamily& family,
                                           const Eigen::MatrixXd& states,
                                           const Eigen::MatrixXd& inputs) const {
  const int ni = state_dim();
  Eigen::MatrixXd v(horizon_ + 1, ni);
  for (int k = 0; k < horizon_; ++k) {
    const Eigen::VectorXd x = states.row(k).transpose(), u = inputs.row(k).transpose();
    const Eigen::VectorXd g = cost_.stage_grad_x(x, u);
    for (int j = 0; j < ni; ++j) v(k, j) = family.match_state(states(k, j), g(j));
  }
  const Eigen::VectorXd gT = cost_.terminal_grad(states.row(horizon_).transpose());
  for (int j = 0; j < ni; ++j)
    v(horizon_, j) = family.match_state(states(horizon_, j), gT(j));
  return v;
}

Eigen::MatrixXd Agent::match_input_weights(const SurrogateFamily& family,
                                           const Eigen::MatrixXd& states,
                                           const Eigen::MatrixXd& inputs) const {
  const int mi = input_dim();
  Eigen::MatrixXd w(horizon_, mi);
  for (int k = 0; k < horizon_; ++k) {
    const Eigen::VectorXd x = states.row(k).transpose(), u = inputs.row(k).transpose();
    const Eigen::VectorXd g = cost_.stage_grad_u(x, u);
    const Eigen::MatrixXd huu = cost_.stage_hess_uu(x, u);
    for (int h = 0; h < mi; ++h) {
      const double s = inputs(k, h);
      // At s ~ 0 the derivative match degenerates to 0/0; the weight is then
      // determined by curvature, which the agent knows from its own cost.
      const bool degenerate = std::abs(s) < 1e-12 && std::abs(g(h)) < 1e-9;
      try {
        if (degenerate && family.match_input_curvature) {
          w(k, h) = family.match_input_curvature(huu(h, h));
        } else {
          w(k, h) = family.match_input(s, g(h));
        }
      } catch (const NumericalError& e) {
        if (family.match_input_curvature && std::abs(s) < 1e-9) {
          w(k, h) = family.match_input_curvature(huu(h, h));
        } else {
          std::ostringstream os;
          os << "agent " << index_ << ": no input weight matches coordinate " << h << " at stage "
             << k << " (" << e.what() << ")";
          throw NumericalError(os.str());
        }
      }
    }
  }
  return w;
}

Message Agent::gradient_matching_message(const OcpSolution& local_solution,
                                         const SurrogateFamily& family) const {
  if (local_solution.status != SolveStatus::optimal)
    throw ConfigError("gradient matching requires an optimal local solution");
  const Trajectory& tr = local_solution.trajectories[0];
  Message msg;
  msg.state_weights = match_state_weights(family, tr.states, tr.inputs);
  msg.input_weights = match_input_weights(family, tr.states, tr.inputs);
  msg.sensitivity = local_solution.dyn_multipliers[0];
  msg.bounds = StageBounds::unbounded(horizon_, state_dim(), input_dim());
  msg.state_ref = tr.states;
  return msg;
}

Message Agent::pinned_message(const Eigen::MatrixXd& target_states,
                              const Eigen::MatrixXd& target_inputs) const {
  const int ni = state_dim(), mi = input_dim();
  if (target_states.rows() != horizon_ + 1 || target_states.cols() != ni ||
      target_inputs.rows() != horizon_ || target_inputs.cols() != mi)
    throw ConfigError("pinned target has wrong shape");

  std::ostringstream problems;
  if ((target_states.row(0).transpose() - x0_).cwiseAbs().maxCoeff() > 1e-9)
    problems << " initial state differs from x0;";
  for (int k = 0; k < horizon_; ++k) {
    Eigen::VectorXd next = local_A_ * target_states.row(k).transpose() +
                           local_B_ * target_inputs.row(k).transpose() +
                           reference_.row(k).transpose();
    if (!local_disturbance_.empty()) next += local_disturbance_[k];
    if ((next - target_states.row(k + 1).transpose()).cwiseAbs().maxCoeff() > 1e-8)
      problems << " dynamics residual at stage " << k << ";";
    if (input_set_.num_rows() > 0 &&
        input_set_.violation(target_inputs.row(k).transpose()) > 1e-9)
      problems << " input outside the input set at stage " << k << ";";
  }
  for (int k = 0; k <= horizon_; ++k)
    if (state_set_.num_rows() > 0 && state_set_.violation(target_states.row(k).transpose()) > 1e-9)
      problems << " state outside the state set at stage " << k << ";";
  if (!problems.str().empty())
    throw InfeasibleError("agent " + std::to_string(index_) + " pinned target infeasible:" +
                          problems.str());

  Message msg = Message::bootstrap(horizon_, ni, mi);
  msg.state_ref = target_states;
  msg.state_ref.row(0) = x0_.transpose();
  msg.bounds.state_lower = msg.state_ref;
  msg.bounds.state_upper = msg.state_ref;
  msg.bounds.input_lower = target_inputs;
  msg.bounds.input_upper = target_inputs;
  return msg;
}

Message Agent::truthful_message(const Eigen::MatrixXd& efficient_states,
                                const Eigen::MatrixXd& efficient_inputs,
                                const Eigen::MatrixXd& dyn_multipliers,
                                const SurrogateFamily& family) const {
  Message msg;
  msg.state_weights = match_state_weights(family, efficient_states, efficient_inputs);
  msg.input_weights = match_input_weights(family, efficient_states, efficient_inputs);
  msg.sensitivity = dyn_multipliers;
  msg.bounds = StageBounds::unbounded(horizon_, state_dim(), input_dim());
  msg.state_ref = efficient_states;
  return msg;
}

std::optional<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> Agent::random_feasible_target(
    Rng& rng) const {
  const int ni = state_dim(), mi = input_dim();
  Eigen::MatrixXd inputs(horizon_, mi);
  for (int k = 0; k < horizon_; ++k)
    for (int h = 0; h < mi; ++h) {
      if (input_set_.is_box()) {
        const BoxSet& b = input_set_.as_box();
        const double lo = std::isfinite(b.lower(h)) ? b.lower(h) : -1.0;
        const double hi = std::isfinite(b.upper(h)) ? b.upper(h) : 1.0;
        // Sample away from the faces so the pin stays strictly inside.
        const double pad = 0.05 * (hi - lo);
        inputs(k, h) = rng.uniform(lo + pad, hi - pad);
      } else {
        inputs(k, h) = rng.normal();
      }
    }

  for (int attempt = 0; attempt < 20; ++attempt) {
    Eigen::MatrixXd states(horizon_ + 1, ni);
    states.row(0) = x0_.transpose();
    for (int k = 0; k < horizon_; ++k) {
      Eigen::VectorXd next = local_A_ * states.row(k).transpose() +
                             local_B_ * inputs.row(k).transpose() + reference_.row(k).transpose();
      if (!local_disturbance_.empty()) next += local_disturbance_[k];
      states.row(k + 1) = next.transpose();
    }
    bool ok = true;
    for (int k = 0; k <= horizon_ && ok; ++k)
      if (state_set_.num_rows() > 0 && state_set_.violation(states.row(k).transpose()) > -1e-9)
        ok = false;
    if (ok) return std::make_pair(states, inputs);
    inputs *= 0.5;  // pull toward the origin and retry
  }
  return std::nullopt;
}

Message Agent::deviation_message(const Message& base, Rng& rng, double sigma, int strategy,
                                 const SolverSettings& solver) const {
  Message dev = base;
  switch (strategy % 4) {
    case 0: {  // multiplicative log-normal noise on the weights
      for (int k = 0; k < dev.state_weights.rows(); ++k)
        for (int j = 0; j < dev.state_weights.cols(); ++j)
          dev.state_weights(k, j) *= std::exp(sigma * rng.normal());
      for (int k = 0; k < dev.input_weights.rows(); ++k)
        for (int h = 0; h < dev.input_weights.cols(); ++h)
          dev.input_weights(k, h) *= std::exp(sigma * rng.normal());
      break;
    }
    case 1: {  // additive noise on the reports (affects only the fees)
      for (int k = 0; k < dev.state_ref.rows(); ++k)
        for (int j = 0; j < dev.state_ref.cols(); ++j) dev.state_ref(k, j) += sigma * rng.normal();
      for (int k = 0; k < dev.sensitivity.rows(); ++k)
        for (int j = 0; j < dev.sensitivity.cols(); ++j)
          dev.sensitivity(k, j) += sigma * rng.normal();
      break;
    }
    case 2: {  // pin a random locally feasible trajectory
      auto target = random_feasible_target(rng);
      if (!target) return deviation_message(base, rng, sigma, 0);
      dev = pinned_message(target->first, target->second);
      break;
    }
    default: {  // rational deviation: pin the local best response
      try {
        const OcpSolution local = solve_local(solver);
        dev = pinned_message(local.trajectories[0].states, local.trajectories[0].inputs);
        dev.sensitivity = local.dyn_multipliers[0];
      } catch (const InfeasibleError&) {
        return deviation_message(base, rng, sigma, 0);
      }
      break;
    }
  }
  return dev;
}

}  // namespace mechmpc
