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
#include "mechmpc/system_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mechmpc {

namespace {

bool block_is_zero(const Eigen::MatrixXd& M, int r0, int c0, int rows, int cols) {
  return M.block(r0, c0, rows, cols).cwiseAbs().maxCoeff() == 0.0;
}

}  // namespace

Eigen::VectorXd SystemModel::disturbance_at(int k) const {
  if (disturbance.empty()) return Eigen::VectorXd::Zero(n());
  if (k < 0 || k >= static_cast<int>(disturbance.size()))
    throw ConfigError("disturbance stage out of range");
  return disturbance[k];
}

Eigen::VectorXd SystemModel::local_disturbance_at(int i, int k) const {
  return disturbance_at(k).segment(state_offset[i], partition[i].n);
}

SystemModel build_system(const SystemConfig& config) {
  SystemModel model;
  model.A = config.A;
  model.B = config.B;
  model.partition = config.partition;
  model.horizon = config.horizon;
  model.x0 = config.x0;
  model.disturbance = config.disturbance;

  if (model.partition.empty()) throw ConfigError("partition must list at least one agent");
  if (model.horizon <= 0) throw ConfigError("horizon must be positive");

  int n = 0, m = 0;
  for (const auto& dims : model.partition) {
    if (dims.n <= 0 || dims.m < 0) throw ConfigError("agent dimensions must be positive");
    model.state_offset.push_back(n);
    model.input_offset.push_back(m);
    n += dims.n;
    m += dims.m;
  }
  if (model.A.rows() != n || model.A.cols() != n) {
    std::ostringstream os;
    os << "partition states sum to " << n << " but A is " << model.A.rows() << "x"
       << model.A.cols();
    throw ConfigError(os.str());
  }
  if (model.B.rows() != n || model.B.cols() != m)
    throw ConfigError("B dimensions disagree with the partition");
  if (model.x0.size() != n) throw ConfigError("x0 dimension disagrees with the partition");
  for (const auto& d : model.disturbance)
    if (d.size() != n) throw ConfigError("disturbance vector dimension mismatch");
  if (!model.disturbance.empty() &&
      static_cast<int>(model.disturbance.size()) < model.horizon)
    throw ConfigError("disturbance sequence shorter than the horizon");

  const int num_agents = model.num_agents();
  for (int i = 0; i < num_agents; ++i) {
    for (int j = 0; j < num_agents; ++j) {
      if (i == j) continue;
      if (!block_is_zero(model.B, model.state_offset[i], model.input_offset[j],
                         model.partition[i].n, model.partition[j].m))
        throw ConfigError("B must be block-diagonal: off-diagonal input block is nonzero");
    }
  }

  model.neighbors.assign(num_agents, {});
  for (int i = 0; i < num_agents; ++i) {
    for (int j = 0; j < num_agents; ++j) {
      if (i == j) continue;
      if (!block_is_zero(model.A, model.state_offset[i], model.state_offset[j],
                         model.partition[i].n, model.partition[j].n))
        model.neighbors[i].push_back(j);
    }
  }

  if (config.declared_neighbors) {
    if (config.declared_neighbors->size() != static_cast<size_t>(num_agents))
      throw ConfigError("declared neighbor list has wrong length");
    for (int i = 0; i < num_agents; ++i) {
      auto declared = (*config.declared_neighbors)[i];
      std::sort(declared.begin(), declared.end());
      if (declared != model.neighbors[i])
        throw ConfigError("declared neighbors disagree with the sparsity of A");
    }
  }
  return model;
}

Eigen::VectorXd step_dynamics(const SystemModel& model, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& u, int k) {
  if (x.size() != model.n() || u.size() != model.m())
    throw ConfigError("step_dynamics: state or input dimension mismatch");
  if (k < 0 || k >= model.horizon) throw ConfigError("step_dynamics: stage out of range");
  return model.A * x + model.B * u + model.disturbance_at(k);
}

Eigen::VectorXd coupling_input(const SystemModel& model, int i, const Eigen::VectorXd& states_k) {
  if (states_k.size() != model.n()) throw ConfigError("coupling_input: state dimension mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(model.partition[i].n);
  for (int j : model.neighbors[i])
    out += model.state_block(i, j) * model.state_slice(states_k, j);
  return out;
}

// ---------------------------------------------------------------------------
// ConstraintSet
// ---------------------------------------------------------------------------

ConstraintSet ConstraintSet::unconstrained(int dim) {
  ConstraintSet s;
  s.dim_ = dim;
  return s;
}

ConstraintSet ConstraintSet::box(Eigen::VectorXd lower, Eigen::VectorXd upper) {
  if (lower.size() != upper.size()) throw ConfigError("box bounds dimension mismatch");
  for (int j = 0; j < lower.size(); ++j)
    if (lower(j) > upper(j)) throw ConfigError("box lower bound exceeds upper bound");
  ConstraintSet s;
  s.dim_ = static_cast<int>(lower.size());
  s.rep_ = BoxSet{std::move(lower), std::move(upper)};
  return s;
}

ConstraintSet ConstraintSet::polytope(Eigen::MatrixXd G, Eigen::VectorXd g) {
  if (G.rows() != g.size()) throw ConfigError("polytope row count mismatch");
  ConstraintSet s;
  s.dim_ = static_cast<int>(G.cols());
  s.rep_ = PolytopeSet{std::move(G), std::move(g)};
  return s;
}

int ConstraintSet::num_rows() const {
  if (std::holds_alternative<std::monostate>(rep_)) return 0;
  if (is_box()) {
    const auto& b = as_box();
    int rows = 0;
    for (int j = 0; j < dim_; ++j) {
      if (std::isfinite(b.lower(j))) ++rows;
      if (std::isfinite(b.upper(j))) ++rows;
    }
    return rows;
  }
  return static_cast<int>(as_polytope().G.rows());
}

void ConstraintSet::row(int r, Eigen::VectorXd& coeffs, double& rhs) const {
  coeffs = Eigen::VectorXd::Zero(dim_);
  if (is_box()) {
    const auto& b = as_box();
    int idx = 0;
    for (int j = 0; j < dim_; ++j) {
      if (std::isfinite(b.lower(j))) {
        if (idx == r) {
          coeffs(j) = -1.0;
          rhs = -b.lower(j);
          return;
        }
        ++idx;
      }
      if (std::isfinite(b.upper(j))) {
        if (idx == r) {
          coeffs(j) = 1.0;
          rhs = b.upper(j);
          return;
        }
        ++idx;
      }
    }
    throw ConfigError("box row index out of range");
  }
  const auto& p = as_polytope();
  coeffs = p.G.row(r).transpose();
  rhs = p.g(r);
}

PolytopeSet ConstraintSet::to_polytope() const {
  const int rows = num_rows();
  PolytopeSet p;
  p.G = Eigen::MatrixXd::Zero(rows, dim_);
  p.g = Eigen::VectorXd::Zero(rows);
  Eigen::VectorXd coeffs;
  double rhs = 0.0;
  for (int r = 0; r < rows; ++r) {
    row(r, coeffs, rhs);
    p.G.row(r) = coeffs.transpose();
    p.g(r) = rhs;
  }
  return p;
}

double ConstraintSet::violation(const Eigen::VectorXd& s) const {
  if (s.size() != dim_) throw ConfigError("violation: dimension mismatch");
  double worst = -kInf;
  Eigen::VectorXd coeffs;
  double rhs = 0.0;
  const int rows = num_rows();
  if (rows == 0) return 0.0;
  for (int r = 0; r < rows; ++r) {
    row(r, coeffs, rhs);
    worst = std::max(worst, coeffs.dot(s) - rhs);
  }
  return worst;
}

void ConstraintSet::validate() const {
  if (std::holds_alternative<std::monostate>(rep_)) return;
  if (is_box()) {
    const auto& b = as_box();
    for (int j = 0; j < dim_; ++j)
      if (b.lower(j) > 0.0 || b.upper(j) < 0.0)
        throw ConfigError("constraint set must contain the origin");
    return;
  }
  const auto& p = as_polytope();
  for (int r = 0; r < p.g.size(); ++r)
    if (p.g(r) < 0.0) throw ConfigError("constraint set must contain the origin (g >= 0)");
}

// ---------------------------------------------------------------------------
// Costs
// ---------------------------------------------------------------------------

AgentCost quadratic_cost(const Eigen::VectorXd& state_weights, const Eigen::VectorXd& state_target,
                         const Eigen::VectorXd& input_weights, const Eigen::VectorXd& input_target,
                         const std::string& descriptor) {
  if (state_weights.size() != state_target.size() || input_weights.size() != input_target.size())
    throw ConfigError("quadratic_cost: weight/target dimension mismatch");
  if ((state_weights.array() <= 0.0).any() || (input_weights.array() <= 0.0).any())
    throw ConfigError("quadratic_cost: weights must be positive");
  AgentCost c;
  const Eigen::VectorXd qx = state_weights, xt = state_target;
  const Eigen::VectorXd ru = input_weights, ut = input_target;
  c.stage = [qx, xt, ru, ut](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    return 0.5 * (qx.array() * (x - xt).array().square()).sum() +
           0.5 * (ru.array() * (u - ut).array().square()).sum();
  };
  c.stage_grad_x = [qx, xt](const Eigen::VectorXd& x, const Eigen::VectorXd&) {
    return Eigen::VectorXd(qx.array() * (x - xt).array());
  };
  c.stage_grad_u = [ru, ut](const Eigen::VectorXd&, const Eigen::VectorXd& u) {
    return Eigen::VectorXd(ru.array() * (u - ut).array());
  };
  c.stage_hess_xx = [qx](const Eigen::VectorXd&, const Eigen::VectorXd&) {
    return Eigen::MatrixXd(qx.asDiagonal());
  };
  c.stage_hess_uu = [ru](const Eigen::VectorXd&, const Eigen::VectorXd&) {
    return Eigen::MatrixXd(ru.asDiagonal());
  };
  c.terminal = [qx, xt](const Eigen::VectorXd& x) {
    return 0.5 * (qx.array() * (x - xt).array().square()).sum();
  };
  c.terminal_grad = [qx, xt](const Eigen::VectorXd& x) {
    return Eigen::VectorXd(qx.array() * (x - xt).array());
  };
  c.terminal_hess = [qx](const Eigen::VectorXd&) { return Eigen::MatrixXd(qx.asDiagonal()); };
  c.descriptor = descriptor.empty() ? "quadratic" : descriptor;
  return c;
}

void validate_agent_cost(const AgentCost& cost, int n_i, int m_i, const CostCheckOptions& opts,
                         Rng& rng) {
  auto sample = [&](int dim) {
    Eigen::VectorXd v(dim);
    for (int j = 0; j < dim; ++j) v(j) = rng.uniform(-opts.box_radius, opts.box_radius);
    return v;
  };

  const Eigen::VectorXd zx = Eigen::VectorXd::Zero(n_i), zu = Eigen::VectorXd::Zero(m_i);
  if (opts.require_zero_value) {
    if (std::abs(cost.stage(zx, zu)) > 1e-12 || std::abs(cost.terminal(zx)) > 1e-12)
      throw ConfigError("cost '" + cost.descriptor + "' is not zero at the origin");
  }
  if (opts.require_origin_minimum) {
    const double g0 = std::max(cost.stage_grad_x(zx, zu).cwiseAbs().maxCoeff(),
                               cost.stage_grad_u(zx, zu).cwiseAbs().maxCoeff());
    if (g0 > 1e-9 || cost.terminal_grad(zx).cwiseAbs().maxCoeff() > 1e-9)
      throw ConfigError("cost '" + cost.descriptor + "' is not stationary at the origin");
  }

  for (int s = 0; s < opts.samples; ++s) {
    // Midpoint strict-convexity check on a random pair.
    const Eigen::VectorXd xa = sample(n_i), xb = sample(n_i);
    const Eigen::VectorXd ua = sample(m_i), ub = sample(m_i);
    if ((xa - xb).norm() + (ua - ub).norm() > 1e-8) {
      const double mid = cost.stage(0.5 * (xa + xb), 0.5 * (ua + ub));
      const double chord = 0.5 * (cost.stage(xa, ua) + cost.stage(xb, ub));
      if (mid >= chord + 1e-12)
        throw ConfigError("cost '" + cost.descriptor + "' fails midpoint convexity");
      const double tmid = cost.terminal(0.5 * (xa + xb));
      const double tchord = 0.5 * (cost.terminal(xa) + cost.terminal(xb));
      if (tmid >= tchord + 1e-12)
        throw ConfigError("terminal cost '" + cost.descriptor + "' fails midpoint convexity");
    }

    // Gradients vs central differences.
    const double h = 1e-6;
    const Eigen::VectorXd gx = cost.stage_grad_x(xa, ua);
    const Eigen::VectorXd gu = cost.stage_grad_u(xa, ua);
    for (int j = 0; j < n_i; ++j) {
      Eigen::VectorXd xp = xa, xm = xa;
      xp(j) += h;
      xm(j) -= h;
      const double fd = (cost.stage(xp, ua) - cost.stage(xm, ua)) / (2 * h);
      if (std::abs(gx(j) - fd) > opts.gradient_tol * std::max({1.0, std::abs(fd), std::abs(gx(j))}))
        throw ConfigError("cost '" + cost.descriptor + "' state gradient disagrees with FD");
    }
    for (int h_idx = 0; h_idx < m_i; ++h_idx) {
      Eigen::VectorXd up = ua, um = ua;
      up(h_idx) += h;
      um(h_idx) -= h;
      const double fd = (cost.stage(xa, up) - cost.stage(xa, um)) / (2 * h);
      if (std::abs(gu(h_idx) - fd) >
          opts.gradient_tol * std::max({1.0, std::abs(fd), std::abs(gu(h_idx))}))
        throw ConfigError("cost '" + cost.descriptor + "' input gradient disagrees with FD");
    }
  }
}

// ---------------------------------------------------------------------------
// Trajectories / feasibility
// ---------------------------------------------------------------------------

Eigen::VectorXd full_state_at(const SystemModel& model, const std::vector<Trajectory>& trajs,
                              int k) {
  Eigen::VectorXd x(model.n());
  for (int i = 0; i < model.num_agents(); ++i)
    x.segment(model.state_offset[i], model.partition[i].n) = trajs[i].states.row(k).transpose();
  return x;
}

Eigen::VectorXd full_input_at(const SystemModel& model, const std::vector<Trajectory>& trajs,
                              int k) {
  Eigen::VectorXd u(model.m());
  for (int i = 0; i < model.num_agents(); ++i)
    u.segment(model.input_offset[i], model.partition[i].m) = trajs[i].inputs.row(k).transpose();
  return u;
}

double FeasibilityReport::max_violation() const {
  double v = 0.0;
  for (const auto& viol : violations) v = std::max(v, viol.magnitude);
  return v;
}

std::string FeasibilityReport::summary() const {
  if (violations.empty()) return "feasible";
  std::ostringstream os;
  os << violations.size() << " violation(s), worst " << max_violation();
  return os.str();
}

FeasibilityReport check_feasible(const SystemModel& model,
                                 const std::vector<ConstraintSet>& state_sets,
                                 const std::vector<ConstraintSet>& input_sets,
                                 const std::vector<Trajectory>& trajs, double tol) {
  const int T = model.horizon;
  FeasibilityReport report;
  if (static_cast<int>(trajs.size()) != model.num_agents())
    throw ConfigError("check_feasible: trajectory count disagrees with the model");
  for (int i = 0; i < model.num_agents(); ++i) {
    if (trajs[i].states.rows() != T + 1 || trajs[i].states.cols() != model.partition[i].n ||
        trajs[i].inputs.rows() != T || trajs[i].inputs.cols() != model.partition[i].m)
      throw ConfigError("check_feasible: trajectory dimensions disagree with the model");
  }

  // Initial condition.
  const Eigen::VectorXd x_start = full_state_at(model, trajs, 0);
  for (int r = 0; r < model.n(); ++r) {
    const double mag = std::abs(x_start(r) - model.x0(r));
    if (mag > tol)
      report.violations.push_back({Violation::Kind::initial_condition, -1, 0, r, mag});
  }

  // Dynamics residuals.
  for (int k = 0; k < T; ++k) {
    const Eigen::VectorXd pred =
        step_dynamics(model, full_state_at(model, trajs, k), full_input_at(model, trajs, k), k);
    const Eigen::VectorXd actual = full_state_at(model, trajs, k + 1);
    for (int r = 0; r < model.n(); ++r) {
      const double mag = std::abs(pred(r) - actual(r));
      if (mag > tol) report.violations.push_back({Violation::Kind::dynamics, -1, k, r, mag});
    }
  }

  // Set membership.
  Eigen::VectorXd coeffs;
  double rhs = 0.0;
  for (int i = 0; i < model.num_agents(); ++i) {
    for (int k = 0; k <= T; ++k) {
      const Eigen::VectorXd xi = trajs[i].states.row(k).transpose();
      for (int r = 0; r < state_sets[i].num_rows(); ++r) {
        state_sets[i].row(r, coeffs, rhs);
        const double mag = coeffs.dot(xi) - rhs;
        if (mag > tol) report.violations.push_back({Violation::Kind::state_set, i, k, r, mag});
      }
    }
    for (int k = 0; k < T; ++k) {
      const Eigen::VectorXd ui = trajs[i].inputs.row(k).transpose();
      for (int r = 0; r < input_sets[i].num_rows(); ++r) {
        input_sets[i].row(r, coeffs, rhs);
        const double mag = coeffs.dot(ui) - rhs;
        if (mag > tol) report.violations.push_back({Violation::Kind::input_set, i, k, r, mag});
      }
    }
  }
  return report;
}

}  // namespace mechmpc
