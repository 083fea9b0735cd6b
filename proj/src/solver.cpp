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
#include "mechmpc/solver.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

namespace mechmpc {

namespace {

// ---------------------------------------------------------------------------
// Coordinate bookkeeping
//
// All trajectory entries live in one flat coordinate space:
//   x_{k,j} -> k*n + j                     for k = 0..T
//   u_{k,h} -> (T+1)*n + k*m + h           for k = 0..T-1
// x_0 is always fixed; reported bounds with lower == upper fix further
// coordinates. Free coordinates are numbered stage by stage (u_k then x_{k+1})
// so the Newton KKT matrix stays banded.
// ---------------------------------------------------------------------------

struct RowTag {
  enum class Kind {
    dynamics,
    state_set,
    input_set,
    state_bound_lower,
    state_bound_upper,
    input_bound_lower,
    input_bound_upper,
  };
  Kind kind = Kind::dynamics;
  int agent = -1;
  int stage = 0;
  int row = 0;    // set row index, or coordinate for bounds
  int coord = 0;  // global coordinate of the produced state (dynamics rows)
};

struct LinRow {
  std::vector<std::pair<int, double>> full;   // (coordinate, coefficient)
  std::vector<std::pair<int, double>> free_;  // (free var, coefficient)
  double cst = 0.0;   // eq: terms + cst == 0; ineq: terms + cst <= 0
  double fcst = 0.0;  // cst with fixed-coordinate contributions folded in
  RowTag tag;

  double value(const Eigen::VectorXd& values) const {
    double v = cst;
    for (const auto& [c, a] : full) v += a * values(c);
    return v;
  }
};

int state_coord(int n, int k, int j) { return k * n + j; }
int input_coord(int n, int m, int T, int k, int h) { return (T + 1) * n + k * m + h; }

struct CompiledOcp {
  const OcpProblem* problem = nullptr;
  int T = 0, n = 0, m = 0, num_coords = 0, num_free = 0;

  Eigen::VectorXd values;         // full coordinate vector, fixed parts baked in
  std::vector<int> var_to_coord;  // free var -> coordinate
  Eigen::VectorXi coord_to_var;   // coordinate -> free var or -1
  std::vector<bool> pinned;       // fixed by a reported bound (excludes x_0)

  std::vector<LinRow> eq;           // dynamics rows with at least one free var
  std::vector<LinRow> degenerate;   // all-fixed dynamics rows (consistency only)
  std::vector<LinRow> ineq;
  std::vector<Violation> trivial_violations;  // constraints violated among constants
  double trivial_violation_sum = 0.0;

  int agent_of_state_row(int r) const {
    int i = 0;
    const auto& off = problem->model->state_offset;
    while (i + 1 < static_cast<int>(off.size()) && off[i + 1] <= r) ++i;
    return i;
  }

  void scatter(const Eigen::VectorXd& zf) {
    for (int v = 0; v < num_free; ++v) values(var_to_coord[v]) = zf(v);
  }
  Eigen::VectorXd gather() const {
    Eigen::VectorXd zf(num_free);
    for (int v = 0; v < num_free; ++v) zf(v) = values(var_to_coord[v]);
    return zf;
  }

  Eigen::VectorXd agent_state(int i, int k) const {
    const auto& model = *problem->model;
    Eigen::VectorXd x(model.partition[i].n);
    for (int j = 0; j < x.size(); ++j)
      x(j) = values(state_coord(n, k, model.state_offset[i] + j));
    return x;
  }
  Eigen::VectorXd agent_input(int i, int k) const {
    const auto& model = *problem->model;
    Eigen::VectorXd u(model.partition[i].m);
    for (int h = 0; h < u.size(); ++h)
      u(h) = values(input_coord(n, m, T, k, model.input_offset[i] + h));
    return u;
  }

  // Objective over the full coordinate vector. grad (if non-null) is resized
  // to num_coords; hess (if non-null) receives free-variable triplets.
  double eval_objective(Eigen::VectorXd* grad, std::vector<Eigen::Triplet<double>>* hess) const;
};

Violation::Kind violation_kind(RowTag::Kind k) {
  switch (k) {
    case RowTag::Kind::dynamics:
      return Violation::Kind::dynamics;
    case RowTag::Kind::state_set:
      return Violation::Kind::state_set;
    case RowTag::Kind::input_set:
      return Violation::Kind::input_set;
    case RowTag::Kind::state_bound_lower:
    case RowTag::Kind::state_bound_upper:
      return Violation::Kind::state_bound;
    default:
      return Violation::Kind::input_bound;
  }
}

double CompiledOcp::eval_objective(Eigen::VectorXd* grad,
                                   std::vector<Eigen::Triplet<double>>* hess) const {
  const auto& model = *problem->model;
  double total = 0.0;
  if (grad) grad->setZero(num_coords);

  auto scatter_grad = [&](int i, int k, bool input, const Eigen::VectorXd& g) {
    if (!grad) return;
    for (int j = 0; j < g.size(); ++j) {
      const int c = input ? input_coord(n, m, T, k, model.input_offset[i] + j)
                          : state_coord(n, k, model.state_offset[i] + j);
      (*grad)(c) += g(j);
    }
  };
  auto scatter_hess = [&](int i, int k1, bool in1, int k2, bool in2, const Eigen::MatrixXd& H) {
    if (!hess) return;
    for (int a = 0; a < H.rows(); ++a) {
      const int ca = in1 ? input_coord(n, m, T, k1, model.input_offset[i] + a)
                         : state_coord(n, k1, model.state_offset[i] + a);
      const int va = coord_to_var(ca);
      if (va < 0) continue;
      for (int b = 0; b < H.cols(); ++b) {
        if (H(a, b) == 0.0) continue;
        const int cb = in2 ? input_coord(n, m, T, k2, model.input_offset[i] + b)
                           : state_coord(n, k2, model.state_offset[i] + b);
        const int vb = coord_to_var(cb);
        if (vb < 0) continue;
        hess->emplace_back(va, vb, H(a, b));
      }
    }
  };

  for (int i = 0; i < model.num_agents(); ++i) {
    const auto& obj = problem->objectives[i];
    const int ni = model.partition[i].n, mi = model.partition[i].m;
    for (int k = 0; k < T; ++k) {
      const Eigen::VectorXd x = agent_state(i, k), u = agent_input(i, k);
      if (const auto* truec = std::get_if<TrueObjective>(&obj)) {
        const AgentCost& c = truec->cost;
        total += c.stage(x, u);
        if (grad) {
          scatter_grad(i, k, false, c.stage_grad_x(x, u));
          scatter_grad(i, k, true, c.stage_grad_u(x, u));
        }
        if (hess) {
          scatter_hess(i, k, false, k, false, c.stage_hess_xx(x, u));
          scatter_hess(i, k, true, k, true, c.stage_hess_uu(x, u));
          if (c.stage_hess_xu) {
            const Eigen::MatrixXd Hxu = c.stage_hess_xu(x, u);
            scatter_hess(i, k, false, k, true, Hxu);
            scatter_hess(i, k, true, k, false, Hxu.transpose());
          }
        }
      } else if (const auto* sur = std::get_if<SurrogateObjective>(&obj)) {
        Eigen::VectorXd gx(ni), gu(mi);
        Eigen::MatrixXd Hxx = Eigen::MatrixXd::Zero(ni, ni),
                        Huu = Eigen::MatrixXd::Zero(mi, mi);
        for (int j = 0; j < ni; ++j) {
          const double v = sur->state_weights(k, j);
          total += sur->family.state_value(x(j), v);
          gx(j) = sur->family.state_deriv(x(j), v);
          Hxx(j, j) = sur->family.state_second(x(j), v);
        }
        for (int h = 0; h < mi; ++h) {
          const double w = sur->input_weights(k, h);
          total += sur->family.input_value(u(h), w);
          gu(h) = sur->family.input_deriv(u(h), w);
          Huu(h, h) = sur->family.input_second(u(h), w);
        }
        if (grad) {
          scatter_grad(i, k, false, gx);
          scatter_grad(i, k, true, gu);
        }
        if (hess) {
          scatter_hess(i, k, false, k, false, Hxx);
          scatter_hess(i, k, true, k, true, Huu);
        }
      } else {
        const double eps = std::get<ZeroObjective>(obj).eps;
        total += eps * (x.squaredNorm() + u.squaredNorm());
        if (grad) {
          scatter_grad(i, k, false, 2.0 * eps * x);
          scatter_grad(i, k, true, 2.0 * eps * u);
        }
        if (hess) {
          scatter_hess(i, k, false, k, false, 2.0 * eps * Eigen::MatrixXd::Identity(ni, ni));
          scatter_hess(i, k, true, k, true, 2.0 * eps * Eigen::MatrixXd::Identity(mi, mi));
        }
      }
      if (problem->linear_state_terms[i]) {
        const Eigen::VectorXd lam = problem->linear_state_terms[i]->row(k).transpose();
        total += lam.dot(x);
        scatter_grad(i, k, false, lam);
      }
    }
    // Terminal term.
    const Eigen::VectorXd xT = agent_state(i, T);
    if (const auto* truec = std::get_if<TrueObjective>(&obj)) {
      total += truec->cost.terminal(xT);
      if (grad) scatter_grad(i, T, false, truec->cost.terminal_grad(xT));
      if (hess) scatter_hess(i, T, false, T, false, truec->cost.terminal_hess(xT));
    } else if (const auto* sur = std::get_if<SurrogateObjective>(&obj)) {
      Eigen::VectorXd gx(ni);
      Eigen::MatrixXd Hxx = Eigen::MatrixXd::Zero(ni, ni);
      for (int j = 0; j < ni; ++j) {
        const double v = sur->state_weights(T, j);
        total += sur->family.state_value(xT(j), v);
        gx(j) = sur->family.state_deriv(xT(j), v);
        Hxx(j, j) = sur->family.state_second(xT(j), v);
      }
      if (grad) scatter_grad(i, T, false, gx);
      if (hess) scatter_hess(i, T, false, T, false, Hxx);
    } else {
      const double eps = std::get<ZeroObjective>(obj).eps;
      total += eps * xT.squaredNorm();
      if (grad) scatter_grad(i, T, false, 2.0 * eps * xT);
      if (hess) scatter_hess(i, T, false, T, false, 2.0 * eps * Eigen::MatrixXd::Identity(ni, ni));
    }
  }
  if (!std::isfinite(total)) throw NumericalError("objective evaluated to a non-finite value");
  if (grad && !grad->allFinite()) throw NumericalError("objective gradient is non-finite");
  return total;
}

// ---------------------------------------------------------------------------
// Compilation
// ---------------------------------------------------------------------------

CompiledOcp compile(const OcpProblem& problem) {
  const SystemModel& model = *problem.model;
  CompiledOcp c;
  c.problem = &problem;
  c.T = model.horizon;
  c.n = model.n();
  c.m = model.m();
  c.num_coords = (c.T + 1) * c.n + c.T * c.m;
  c.values = Eigen::VectorXd::Zero(c.num_coords);
  c.coord_to_var = Eigen::VectorXi::Constant(c.num_coords, -1);
  c.pinned.assign(c.num_coords, false);

  std::vector<bool> fixed(c.num_coords, false);
  for (int j = 0; j < c.n; ++j) {
    fixed[state_coord(c.n, 0, j)] = true;
    c.values(state_coord(c.n, 0, j)) = model.x0(j);
  }

  // Pins from reported bounds (lower == upper).
  for (int i = 0; i < model.num_agents(); ++i) {
    if (!problem.extra_bounds[i]) continue;
    const StageBounds& b = *problem.extra_bounds[i];
    const int ni = model.partition[i].n, mi = model.partition[i].m;
    for (int k = 0; k <= c.T; ++k)
      for (int j = 0; j < ni; ++j) {
        const double lo = b.state_lower(k, j), up = b.state_upper(k, j);
        if (std::isfinite(lo) && lo == up) {
          const int coord = state_coord(c.n, k, model.state_offset[i] + j);
          if (k == 0) {
            const double err = std::abs(lo - model.x0(model.state_offset[i] + j));
            if (err > 1e-12) {
              c.trivial_violations.push_back(
                  {Violation::Kind::initial_condition, i, 0, j, err});
              c.trivial_violation_sum += err;
            }
            continue;  // x_0 stays fixed to the initial condition
          }
          fixed[coord] = true;
          c.pinned[coord] = true;
          c.values(coord) = lo;
        }
      }
    for (int k = 0; k < c.T; ++k)
      for (int h = 0; h < mi; ++h) {
        const double lo = b.input_lower(k, h), up = b.input_upper(k, h);
        if (std::isfinite(lo) && lo == up) {
          const int coord = input_coord(c.n, c.m, c.T, k, model.input_offset[i] + h);
          fixed[coord] = true;
          c.pinned[coord] = true;
          c.values(coord) = lo;
        }
      }
  }

  // Free variables, stage-ordered for bandedness: u_k then x_{k+1}.
  for (int k = 0; k < c.T; ++k) {
    for (int h = 0; h < c.m; ++h) {
      const int coord = input_coord(c.n, c.m, c.T, k, h);
      if (!fixed[coord]) {
        c.coord_to_var(coord) = static_cast<int>(c.var_to_coord.size());
        c.var_to_coord.push_back(coord);
      }
    }
    for (int j = 0; j < c.n; ++j) {
      const int coord = state_coord(c.n, k + 1, j);
      if (!fixed[coord]) {
        c.coord_to_var(coord) = static_cast<int>(c.var_to_coord.size());
        c.var_to_coord.push_back(coord);
      }
    }
  }
  c.num_free = static_cast<int>(c.var_to_coord.size());

  auto finish_row = [&](LinRow& row) {
    row.fcst = row.cst;
    for (const auto& [coord, coef] : row.full) {
      const int v = c.coord_to_var(coord);
      if (v >= 0)
        row.free_.emplace_back(v, coef);
      else
        row.fcst += coef * c.values(coord);
    }
  };

  // Dynamics rows.
  for (int k = 0; k < c.T; ++k) {
    const Eigen::VectorXd d = model.disturbance_at(k);
    for (int r = 0; r < c.n; ++r) {
      const int i = c.agent_of_state_row(r);
      LinRow row;
      row.tag = {RowTag::Kind::dynamics, i, k, r, state_coord(c.n, k + 1, r)};
      row.cst = d(r);
      if (problem.fixed_coupling[i]) {
        const int li = r - model.state_offset[i];
        row.cst += (*problem.fixed_coupling[i])(k, li);
        const auto Aii = model.state_block(i, i);
        for (int jj = 0; jj < model.partition[i].n; ++jj)
          if (Aii(li, jj) != 0.0)
            row.full.emplace_back(state_coord(c.n, k, model.state_offset[i] + jj), Aii(li, jj));
      } else {
        for (int cidx = 0; cidx < c.n; ++cidx)
          if (model.A(r, cidx) != 0.0)
            row.full.emplace_back(state_coord(c.n, k, cidx), model.A(r, cidx));
      }
      for (int h = 0; h < c.m; ++h)
        if (model.B(r, h) != 0.0)
          row.full.emplace_back(input_coord(c.n, c.m, c.T, k, h), model.B(r, h));
      row.full.emplace_back(state_coord(c.n, k + 1, r), -1.0);
      finish_row(row);
      if (row.free_.empty()) {
        const double res = std::abs(row.value(c.values));
        if (res > 1e-9) {
          c.trivial_violations.push_back({Violation::Kind::dynamics, i, k, r, res});
          c.trivial_violation_sum += res;
        }
        c.degenerate.push_back(std::move(row));
      } else {
        c.eq.push_back(std::move(row));
      }
    }
  }

  // Inequality rows from base sets and (non-pinned, finite) reported bounds.
  auto push_ineq = [&](LinRow&& row) {
    finish_row(row);
    if (row.free_.empty()) {
      const double viol = row.value(c.values);
      if (viol > 1e-12) {
        c.trivial_violations.push_back(
            {violation_kind(row.tag.kind), row.tag.agent, row.tag.stage, row.tag.row, viol});
        c.trivial_violation_sum += viol;
      }
      return;
    }
    c.ineq.push_back(std::move(row));
  };

  Eigen::VectorXd coeffs;
  double rhs = 0.0;
  for (int i = 0; i < model.num_agents(); ++i) {
    const int ni = model.partition[i].n, mi = model.partition[i].m;
    const ConstraintSet& xs = problem.state_sets[i];
    for (int k = 0; k <= c.T; ++k)
      for (int r = 0; r < xs.num_rows(); ++r) {
        xs.row(r, coeffs, rhs);
        LinRow row;
        row.tag = {RowTag::Kind::state_set, i, k, r, 0};
        row.cst = -rhs;
        for (int j = 0; j < ni; ++j)
          if (coeffs(j) != 0.0)
            row.full.emplace_back(state_coord(c.n, k, model.state_offset[i] + j), coeffs(j));
        push_ineq(std::move(row));
      }
    const ConstraintSet& us = problem.input_sets[i];
    for (int k = 0; k < c.T; ++k)
      for (int r = 0; r < us.num_rows(); ++r) {
        us.row(r, coeffs, rhs);
        LinRow row;
        row.tag = {RowTag::Kind::input_set, i, k, r, 0};
        row.cst = -rhs;
        for (int h = 0; h < mi; ++h)
          if (coeffs(h) != 0.0)
            row.full.emplace_back(input_coord(c.n, c.m, c.T, k, model.input_offset[i] + h),
                                  coeffs(h));
        push_ineq(std::move(row));
      }
    if (!problem.extra_bounds[i]) continue;
    const StageBounds& b = *problem.extra_bounds[i];
    for (int k = 0; k <= c.T; ++k)
      for (int j = 0; j < ni; ++j) {
        const double lo = b.state_lower(k, j), up = b.state_upper(k, j);
        if (std::isfinite(lo) && lo == up) continue;  // pinned
        const int coord = state_coord(c.n, k, model.state_offset[i] + j);
        if (std::isfinite(lo)) {
          LinRow row;
          row.tag = {RowTag::Kind::state_bound_lower, i, k, j, 0};
          row.cst = lo;
          row.full.emplace_back(coord, -1.0);
          push_ineq(std::move(row));
        }
        if (std::isfinite(up)) {
          LinRow row;
          row.tag = {RowTag::Kind::state_bound_upper, i, k, j, 0};
          row.cst = -up;
          row.full.emplace_back(coord, 1.0);
          push_ineq(std::move(row));
        }
      }
    for (int k = 0; k < c.T; ++k)
      for (int h = 0; h < mi; ++h) {
        const double lo = b.input_lower(k, h), up = b.input_upper(k, h);
        if (std::isfinite(lo) && lo == up) continue;
        const int coord = input_coord(c.n, c.m, c.T, k, model.input_offset[i] + h);
        if (std::isfinite(lo)) {
          LinRow row;
          row.tag = {RowTag::Kind::input_bound_lower, i, k, h, 0};
          row.cst = lo;
          row.full.emplace_back(coord, -1.0);
          push_ineq(std::move(row));
        }
        if (std::isfinite(up)) {
          LinRow row;
          row.tag = {RowTag::Kind::input_bound_upper, i, k, h, 0};
          row.cst = -up;
          row.full.emplace_back(coord, 1.0);
          push_ineq(std::move(row));
        }
      }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Barrier method on a generic problem (shared by the main solve and phase 1)
// ---------------------------------------------------------------------------

struct GenericProblem {
  int nvars = 0;
  const std::vector<LinRow>* eq = nullptr;    // rows over free vars (free_ terms)
  const std::vector<LinRow>* ineq = nullptr;
  // value/grad/hess over the free vector.
  std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*,
                       std::vector<Eigen::Triplet<double>>*)>
      objective;
};

struct BarrierOutcome {
  enum class Status { converged, early_exit, max_iter, stalled };
  Status status = Status::max_iter;
  Eigen::VectorXd z;       // free variables
  Eigen::VectorXd nu;      // equality multipliers
  Eigen::VectorXd lambda;  // inequality multipliers (>= 0)
  double mu = 0.0;         // final centrality parameter
  double eq_residual_inf = 0.0;
  int stages = 0;
  int newton_iters = 0;
};

double eq_value(const LinRow& row, const Eigen::VectorXd& z) {
  double v = row.fcst;
  for (const auto& [var, coef] : row.free_) v += coef * z(var);
  return v;
}

// Primal-dual interior point on the log-barrier central path: the duals are
// explicit variables, each Newton step solves the condensed system
//   [ H + G^T (lambda/s) G   C^T ] [dz ]   [ -(grad + C^T nu + G^T mu/s) ]
//   [ C                      0   ] [dnu] = [ -r_pri                      ]
// followed by the dual recovery d_lambda = (mu - lambda.s)/s + (lambda/s) G dz.
// mu is reduced geometrically down to the tolerance.
BarrierOutcome barrier_solve(const GenericProblem& gp, const SolverSettings& st,
                             const Eigen::VectorXd& z0,
                             const std::function<bool(const Eigen::VectorXd&, double)>& early_exit) {
  const int nv = gp.nvars;
  const int ne = static_cast<int>(gp.eq->size());
  const int ni = static_cast<int>(gp.ineq->size());

  BarrierOutcome out;
  out.z = z0;
  out.nu = Eigen::VectorXd::Zero(ne);
  out.lambda = Eigen::VectorXd::Ones(ni);

  Eigen::VectorXd grad(nv);
  std::vector<Eigen::Triplet<double>> hess_trip;

  auto slacks = [&](const Eigen::VectorXd& z, Eigen::VectorXd& s) {
    for (int r = 0; r < ni; ++r) s(r) = -eq_value((*gp.ineq)[r], z);
  };

  // Full primal-dual residual at (z, lambda, nu) for centrality mu.
  auto residuals = [&](const Eigen::VectorXd& z, const Eigen::VectorXd& lam,
                       const Eigen::VectorXd& nu, const Eigen::VectorXd& s, double mu,
                       Eigen::VectorXd& rd, Eigen::VectorXd& rc, Eigen::VectorXd& rp) {
    gp.objective(z, &grad, nullptr);
    rd = grad;
    for (int r = 0; r < ni; ++r)
      for (const auto& [var, coef] : (*gp.ineq)[r].free_) rd(var) += coef * lam(r);
    for (int r = 0; r < ne; ++r) {
      rp(r) = eq_value((*gp.eq)[r], z);
      for (const auto& [var, coef] : (*gp.eq)[r].free_) rd(var) += coef * nu(r);
    }
    for (int r = 0; r < ni; ++r) rc(r) = lam(r) * s(r) - mu;
  };
  auto norm3 = [](const Eigen::VectorXd& rd, const Eigen::VectorXd& rc,
                  const Eigen::VectorXd& rp) {
    return std::sqrt(rd.squaredNorm() + rc.squaredNorm() + rp.squaredNorm());
  };

  Eigen::VectorXd s(ni), rd(nv), rc(ni), rp(ne);
  slacks(out.z, s);
  double mu = ni ? std::max(st.barrier_t0, out.lambda.dot(s) / std::max(1, ni)) : 0.0;
  const double mu_final = 0.5 * st.tol;
  const int max_stages = 60;

  for (int stage = 0; stage < max_stages; ++stage) {
    ++out.stages;
    bool centered = false;
    double stall_best = std::numeric_limits<double>::infinity();
    int stall_count = 0;

    for (int iter = 0; iter < st.max_newton_iter; ++iter) {
      slacks(out.z, s);
      residuals(out.z, out.lambda, out.nu, s, mu, rd, rc, rp);
      const double rd_inf = rd.size() ? rd.cwiseAbs().maxCoeff() : 0.0;
      const double rc_inf = rc.size() ? rc.cwiseAbs().maxCoeff() : 0.0;
      const double rp_inf = rp.size() ? rp.cwiseAbs().maxCoeff() : 0.0;
      if (st.trace)
        std::cerr << "ipm mu=" << mu << " iter=" << iter << " rd=" << rd_inf << " rc=" << rc_inf
                  << " rp=" << rp_inf << "\n";
      if (rd_inf <= std::max(0.3 * st.tol, 0.1 * mu) && rp_inf <= st.equality_tol &&
          rc_inf <= std::max(0.3 * st.tol, 0.5 * mu)) {
        centered = true;
        out.eq_residual_inf = rp_inf;
        break;
      }

      // Condensed Newton system over (dz, dnu).
      ++out.newton_iters;
      hess_trip.clear();
      gp.objective(out.z, &grad, &hess_trip);
      for (int r = 0; r < ni; ++r) {
        const double ratio = out.lambda(r) / s(r);
        const auto& terms = (*gp.ineq)[r].free_;
        for (const auto& [va, ca] : terms)
          for (const auto& [vb, cb] : terms) hess_trip.emplace_back(va, vb, ca * cb * ratio);
      }
      for (int r = 0; r < ne; ++r) {
        for (const auto& [var, coef] : (*gp.eq)[r].free_) {
          hess_trip.emplace_back(nv + r, var, coef);
          hess_trip.emplace_back(var, nv + r, coef);
        }
      }

      Eigen::VectorXd rhs(nv + ne);
      rhs.head(nv) = -grad;
      for (int r = 0; r < ne; ++r) {
        for (const auto& [var, coef] : (*gp.eq)[r].free_) rhs(var) -= coef * out.nu(r);
        rhs(nv + r) = -rp(r);
      }
      for (int r = 0; r < ni; ++r) {
        const double w = mu / s(r);
        for (const auto& [var, coef] : (*gp.ineq)[r].free_) rhs(var) -= coef * w;
      }

      Eigen::VectorXd step;
      bool solved = false;
      for (double reg : {0.0, 1e-10, 1e-8, 1e-6}) {
        auto trip = hess_trip;
        if (reg > 0.0) {
          for (int v = 0; v < nv; ++v) trip.emplace_back(v, v, reg);
          for (int r = 0; r < ne; ++r) trip.emplace_back(nv + r, nv + r, -reg);
        }
        Eigen::SparseMatrix<double> K(nv + ne, nv + ne);
        K.setFromTriplets(trip.begin(), trip.end());
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(K);
        if (lu.info() != Eigen::Success) continue;
        step = lu.solve(rhs);
        if (!step.allFinite()) continue;
        // Iterative refinement claws back digits lost to active-set
        // ill-conditioning.
        for (int refine = 0; refine < 3; ++refine) {
          Eigen::VectorXd resid = rhs - K * step;
          if (resid.cwiseAbs().maxCoeff() <= 1e-14 * (1.0 + rhs.cwiseAbs().maxCoeff())) break;
          const Eigen::VectorXd corr = lu.solve(resid);
          if (!corr.allFinite()) break;
          step += corr;
        }
        solved = true;
        break;
      }
      if (!solved) throw NumericalError("Newton KKT system could not be factorized");

      const Eigen::VectorXd dz = step.head(nv), dnu = step.tail(ne);
      Eigen::VectorXd dlam(ni);
      for (int r = 0; r < ni; ++r) {
        double gdz = 0.0;
        for (const auto& [var, coef] : (*gp.ineq)[r].free_) gdz += coef * dz(var);
        dlam(r) = (mu - out.lambda(r) * s(r)) / s(r) + (out.lambda(r) / s(r)) * gdz;
      }

      // Fraction-to-boundary on both s and lambda, then backtracking on the
      // full residual norm.
      double alpha = 1.0;
      for (int r = 0; r < ni; ++r) {
        double ds = 0.0;
        for (const auto& [var, coef] : (*gp.ineq)[r].free_) ds += coef * dz(var);
        if (ds > 0.0) alpha = std::min(alpha, 0.995 * s(r) / ds);
        if (dlam(r) < 0.0) alpha = std::min(alpha, 0.995 * out.lambda(r) / -dlam(r));
      }
      const double base_norm = norm3(rd, rc, rp);
      Eigen::VectorXd z_try(nv), lam_try(ni), nu_try(ne), s_try(ni), rd_try(nv), rc_try(ni),
          rp_try(ne);
      bool accepted = false;
      double accepted_norm = base_norm;
      for (int bt = 0; bt < 60; ++bt) {
        z_try = out.z + alpha * dz;
        lam_try = out.lambda + alpha * dlam;
        nu_try = out.nu + alpha * dnu;
        slacks(z_try, s_try);
        if ((ni == 0 || (s_try.minCoeff() > 0.0 && lam_try.minCoeff() > 0.0))) {
          bool finite = true;
          try {
            residuals(z_try, lam_try, nu_try, s_try, mu, rd_try, rc_try, rp_try);
          } catch (const NumericalError&) {
            finite = false;
          }
          if (finite && norm3(rd_try, rc_try, rp_try) <= (1.0 - 0.01 * alpha) * base_norm) {
            out.z = z_try;
            out.lambda = lam_try;
            out.nu = nu_try;
            accepted = true;
            accepted_norm = norm3(rd_try, rc_try, rp_try);
            break;
          }
        }
        alpha *= 0.5;
      }
      // At the numerical floor the step cannot improve the residual; accept
      // the centering when the point is already inside the quality gate.
      const bool at_floor = !accepted || accepted_norm > stall_best * (1.0 - 1e-12);
      if (accepted) stall_best = std::min(stall_best, accepted_norm);
      if (!accepted || (at_floor && ++stall_count > 6)) {
        out.eq_residual_inf = rp_inf;
        if (rd_inf <= 1e3 * st.tol && rp_inf <= 1e3 * st.equality_tol && mu > mu_final) {
          centered = true;  // good enough to continue the path
        } else if (rd_inf <= 10.0 * st.tol && rp_inf <= 1e3 * st.equality_tol) {
          centered = true;
        } else {
          out.status = BarrierOutcome::Status::stalled;
          return out;
        }
        break;
      }
      if (!at_floor) stall_count = 0;
    }

    if (!centered) {
      out.status = BarrierOutcome::Status::max_iter;
      return out;
    }
    if (early_exit && early_exit(out.z, out.eq_residual_inf)) {
      out.status = BarrierOutcome::Status::early_exit;
      return out;
    }
    if (ni == 0 || mu <= mu_final) {
      out.status = BarrierOutcome::Status::converged;
      out.mu = mu;
      return out;
    }
    mu = std::max(mu / st.barrier_factor, mu_final);
  }
  out.status = BarrierOutcome::Status::max_iter;
  return out;
}

// ---------------------------------------------------------------------------
// Phase 1 (elastic feasibility)
// ---------------------------------------------------------------------------

struct PhaseOneInternal {
  bool feasible = false;
  bool strict = false;
  Eigen::VectorXd z;  // free vector of the original problem
  double total_violation = 0.0;
  double equality_residual = 0.0;
  std::vector<Violation> worst;
};

PhaseOneInternal phase1_internal(CompiledOcp& c, const SolverSettings& st) {
  const int nz = c.num_free;
  const int ni = static_cast<int>(c.ineq.size());
  const int nv = nz + ni;
  const double margin = std::max(st.strict_margin, 1e-6);

  // Rows in the elastic space: original inequalities get a -s_r term, plus
  // s_r >= 0. Equalities are unchanged.
  std::vector<LinRow> eq = c.eq;
  std::vector<LinRow> ineq;
  ineq.reserve(2 * ni);
  for (int r = 0; r < ni; ++r) {
    LinRow row = c.ineq[r];
    row.free_.emplace_back(nz + r, -1.0);
    ineq.push_back(std::move(row));
    LinRow pos;
    pos.cst = 0.0;
    pos.free_.emplace_back(nz + r, -1.0);
    ineq.push_back(std::move(pos));
  }

  const double eps_z = 1e-8, eps_s = 1e-10;
  GenericProblem gp;
  gp.nvars = nv;
  gp.eq = &eq;
  gp.ineq = &ineq;
  gp.objective = [&](const Eigen::VectorXd& z, Eigen::VectorXd* grad,
                     std::vector<Eigen::Triplet<double>>* hess) {
    double f = 0.0;
    if (grad) grad->setZero(nv);
    for (int v = 0; v < nz; ++v) {
      f += 0.5 * eps_z * z(v) * z(v);
      if (grad) (*grad)(v) = eps_z * z(v);
    }
    for (int r = 0; r < ni; ++r) {
      const double sv = z(nz + r);
      f += sv + 0.5 * eps_s * sv * sv;
      if (grad) (*grad)(nz + r) = 1.0 + eps_s * sv;
    }
    if (hess) {
      for (int v = 0; v < nz; ++v) hess->emplace_back(v, v, eps_z);
      for (int r = 0; r < ni; ++r) hess->emplace_back(nz + r, nz + r, eps_s);
    }
    return f;
  };

  // Start: z = 0 with slacks comfortably above the current violations.
  Eigen::VectorXd z0 = Eigen::VectorXd::Zero(nv);
  for (int r = 0; r < ni; ++r) {
    const double viol = eq_value(c.ineq[r], z0.head(nz));
    z0(nz + r) = std::max(0.0, viol) + 1.0;
  }

  auto strictly_ok = [&](const Eigen::VectorXd& z, double rp_inf) {
    if (rp_inf > 1e-7) return false;
    for (int r = 0; r < ni; ++r)
      if (eq_value(c.ineq[r], z.head(nz)) > -margin) return false;
    return true;
  };

  SolverSettings ps = st;
  ps.tol = 1e-7;  // phase 1 needs a certificate, not high precision
  BarrierOutcome outcome = barrier_solve(gp, ps, z0, strictly_ok);

  PhaseOneInternal result;
  result.z = outcome.z.head(nz);
  result.equality_residual = outcome.eq_residual_inf;
  if (outcome.status == BarrierOutcome::Status::early_exit) {
    result.feasible = true;
    result.strict = true;
    return result;
  }

  // Evaluate the true violations at the elastic optimum.
  double total = 0.0;
  std::vector<std::pair<double, const LinRow*>> violated;
  for (int r = 0; r < ni; ++r) {
    const double v = eq_value(c.ineq[r], result.z);
    if (v > 0.0) {
      total += v;
      violated.emplace_back(v, &c.ineq[r]);
    }
  }
  result.total_violation = total;
  if (outcome.status == BarrierOutcome::Status::stalled && outcome.eq_residual_inf > 1e-6) {
    // Equality system could not be satisfied; report it as the certificate.
    result.feasible = false;
    return result;
  }
  if (total <= 1e-7) {
    result.feasible = true;
    bool strict = true;
    for (int r = 0; r < ni && strict; ++r)
      if (eq_value(c.ineq[r], result.z) > -margin) strict = false;
    result.strict = strict;
    return result;
  }
  std::sort(violated.begin(), violated.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  for (size_t idx = 0; idx < violated.size() && idx < 5; ++idx) {
    const auto& [v, row] = violated[idx];
    result.worst.push_back(
        {violation_kind(row->tag.kind), row->tag.agent, row->tag.stage, row->tag.row, v});
  }
  return result;
}

// ---------------------------------------------------------------------------
// Solution extraction / KKT evaluation
// ---------------------------------------------------------------------------

IneqMultipliers empty_multipliers(const SystemModel& model) {
  const int T = model.horizon;
  IneqMultipliers mult;
  const int na = model.num_agents();
  mult.state_set.resize(na);
  mult.input_set.resize(na);
  for (int i = 0; i < na; ++i) {
    mult.state_set[i].assign(T + 1, Eigen::VectorXd());
    mult.input_set[i].assign(T, Eigen::VectorXd());
    mult.state_bound_lower.push_back(Eigen::MatrixXd::Zero(T + 1, model.partition[i].n));
    mult.state_bound_upper.push_back(Eigen::MatrixXd::Zero(T + 1, model.partition[i].n));
    mult.input_bound_lower.push_back(Eigen::MatrixXd::Zero(T, model.partition[i].m));
    mult.input_bound_upper.push_back(Eigen::MatrixXd::Zero(T, model.partition[i].m));
  }
  return mult;
}

void size_set_multipliers(const OcpProblem& problem, IneqMultipliers& mult) {
  const SystemModel& model = *problem.model;
  for (int i = 0; i < model.num_agents(); ++i) {
    const int xr = problem.state_sets[i].num_rows();
    const int ur = problem.input_sets[i].num_rows();
    for (auto& v : mult.state_set[i]) v = Eigen::VectorXd::Zero(xr);
    for (auto& v : mult.input_set[i]) v = Eigen::VectorXd::Zero(ur);
  }
}

// Stationarity of the Lagrangian over all coordinates; the caller decides how
// to fold pinned coordinates.
Eigen::VectorXd stationarity_full(const CompiledOcp& c, const Eigen::VectorXd& row_duals,
                                  const std::vector<double>& eq_duals) {
  Eigen::VectorXd grad;
  c.eval_objective(&grad, nullptr);
  for (size_t r = 0; r < c.ineq.size(); ++r) {
    const double lam = row_duals(static_cast<int>(r));
    if (lam == 0.0) continue;
    for (const auto& [coord, coef] : c.ineq[r].full) grad(coord) += lam * coef;
  }
  for (size_t r = 0; r < c.eq.size(); ++r) {
    const double nu = eq_duals[r];
    if (nu == 0.0) continue;
    for (const auto& [coord, coef] : c.eq[r].full) grad(coord) += nu * coef;
  }
  return grad;
}

OcpSolution extract_solution(const OcpProblem& problem, CompiledOcp& c,
                             const BarrierOutcome& outcome, const SolverSettings& st) {
  const SystemModel& model = *problem.model;
  const int T = c.T;
  OcpSolution sol;
  sol.barrier_stages = outcome.stages;
  sol.newton_iterations = outcome.newton_iters;

  c.scatter(outcome.z);

  // Trajectories.
  for (int i = 0; i < model.num_agents(); ++i) {
    Trajectory tr;
    tr.agent = i;
    tr.states.resize(T + 1, model.partition[i].n);
    tr.inputs.resize(T, model.partition[i].m);
    for (int k = 0; k <= T; ++k) tr.states.row(k) = c.agent_state(i, k).transpose();
    for (int k = 0; k < T; ++k) tr.inputs.row(k) = c.agent_input(i, k).transpose();
    sol.trajectories.push_back(std::move(tr));
  }

  // Equality multipliers nu = w / t, mapped back to (agent, stage, coord).
  std::vector<double> eq_duals(c.eq.size(), 0.0);
  for (int i = 0; i < model.num_agents(); ++i)
    sol.dyn_multipliers.push_back(Eigen::MatrixXd::Zero(T, model.partition[i].n));
  for (size_t r = 0; r < c.eq.size(); ++r) {
    const double nu = outcome.nu(static_cast<int>(r));
    eq_duals[r] = nu;
    const RowTag& tag = c.eq[r].tag;
    sol.dyn_multipliers[tag.agent](tag.stage, tag.row - model.state_offset[tag.agent]) = nu;
  }

  // Inequality multipliers.
  sol.ineq_multipliers = empty_multipliers(model);
  size_set_multipliers(problem, sol.ineq_multipliers);
  Eigen::VectorXd row_duals = Eigen::VectorXd::Zero(static_cast<int>(c.ineq.size()));
  if (outcome.lambda.size() == row_duals.size()) row_duals = outcome.lambda;
  for (size_t r = 0; r < c.ineq.size(); ++r) {
    const RowTag& tag = c.ineq[r].tag;
    const double lam = row_duals(static_cast<int>(r));
    auto& mult = sol.ineq_multipliers;
    switch (tag.kind) {
      case RowTag::Kind::state_set:
        mult.state_set[tag.agent][tag.stage](tag.row) = lam;
        break;
      case RowTag::Kind::input_set:
        mult.input_set[tag.agent][tag.stage](tag.row) = lam;
        break;
      case RowTag::Kind::state_bound_lower:
        mult.state_bound_lower[tag.agent](tag.stage, tag.row) = lam;
        break;
      case RowTag::Kind::state_bound_upper:
        mult.state_bound_upper[tag.agent](tag.stage, tag.row) = lam;
        break;
      case RowTag::Kind::input_bound_lower:
        mult.input_bound_lower[tag.agent](tag.stage, tag.row) = lam;
        break;
      case RowTag::Kind::input_bound_upper:
        mult.input_bound_upper[tag.agent](tag.stage, tag.row) = lam;
        break;
      default:
        break;
    }
  }

  // Pinned coordinates absorb whatever stationarity residue remains; the
  // signed pin multiplier is split across the lower/upper bound slots.
  const Eigen::VectorXd stat = stationarity_full(c, row_duals, eq_duals);
  for (int coord = 0; coord < c.num_coords; ++coord) {
    if (!c.pinned[coord]) continue;
    const double pi = -stat(coord);
    int agent = 0, stage = 0, local = 0;
    bool is_input = false;
    if (coord < (T + 1) * c.n) {
      stage = coord / c.n;
      const int r = coord % c.n;
      agent = c.agent_of_state_row(r);
      local = r - model.state_offset[agent];
    } else {
      is_input = true;
      const int rem = coord - (T + 1) * c.n;
      stage = rem / c.m;
      const int h = rem % c.m;
      agent = 0;
      while (agent + 1 < model.num_agents() && model.input_offset[agent + 1] <= h) ++agent;
      local = h - model.input_offset[agent];
    }
    auto& mult = sol.ineq_multipliers;
    if (is_input) {
      if (pi >= 0.0)
        mult.input_bound_upper[agent](stage, local) = pi;
      else
        mult.input_bound_lower[agent](stage, local) = -pi;
    } else {
      if (pi >= 0.0)
        mult.state_bound_upper[agent](stage, local) = pi;
      else
        mult.state_bound_lower[agent](stage, local) = -pi;
    }
  }

  sol.objective_value = c.eval_objective(nullptr, nullptr) + problem.objective_constant;
  sol.residuals = kkt_residuals(problem, sol);
  const bool ok = outcome.status == BarrierOutcome::Status::converged &&
                  sol.residuals.max_residual() <= 10.0 * st.tol;
  sol.status = ok ? SolveStatus::optimal : SolveStatus::max_iter;
  return sol;
}

std::vector<Trajectory> trajectories_from_values(const OcpProblem& problem, CompiledOcp& c) {
  const SystemModel& model = *problem.model;
  std::vector<Trajectory> trajs;
  for (int i = 0; i < model.num_agents(); ++i) {
    Trajectory tr;
    tr.agent = i;
    tr.states.resize(c.T + 1, model.partition[i].n);
    tr.inputs.resize(c.T, model.partition[i].m);
    for (int k = 0; k <= c.T; ++k) tr.states.row(k) = c.agent_state(i, k).transpose();
    for (int k = 0; k < c.T; ++k) tr.inputs.row(k) = c.agent_input(i, k).transpose();
    trajs.push_back(std::move(tr));
  }
  return trajs;
}

InfeasibilityCertificate certificate_from_trivial(const CompiledOcp& c) {
  InfeasibilityCertificate cert;
  cert.total_violation = c.trivial_violation_sum;
  cert.worst = c.trivial_violations;
  if (cert.worst.size() > 5) cert.worst.resize(5);
  for (const auto& v : c.trivial_violations)
    if (v.kind == Violation::Kind::dynamics || v.kind == Violation::Kind::initial_condition)
      cert.equality_residual = std::max(cert.equality_residual, v.magnitude);
  return cert;
}

}  // namespace

OcpSolution solve_ocp(const OcpProblem& problem, const SolverSettings& settings) {
  return solve_ocp(problem, settings, {});
}

OcpSolution solve_ocp(const OcpProblem& problem, const SolverSettings& settings,
                      const std::vector<Trajectory>& start) {
  CompiledOcp c = compile(problem);
  const SystemModel& model = *problem.model;

  if (!c.trivial_violations.empty()) {
    OcpSolution sol;
    sol.status = SolveStatus::infeasible;
    sol.infeasibility = certificate_from_trivial(c);
    sol.trajectories = trajectories_from_values(problem, c);
    sol.dyn_multipliers.assign(model.num_agents(), Eigen::MatrixXd());
    for (int i = 0; i < model.num_agents(); ++i)
      sol.dyn_multipliers[i] = Eigen::MatrixXd::Zero(c.T, model.partition[i].n);
    sol.ineq_multipliers = empty_multipliers(model);
    size_set_multipliers(problem, sol.ineq_multipliers);
    return sol;
  }

  // Starting point: caller-provided if strictly feasible, else the zero
  // trajectory if strictly feasible, else phase 1.
  const double margin = std::max(settings.strict_margin, 1e-6);
  auto strictly_feasible = [&](const Eigen::VectorXd& zf) {
    for (const auto& row : c.ineq)
      if (eq_value(row, zf) > -margin) return false;
    return true;
  };

  Eigen::VectorXd z0 = Eigen::VectorXd::Zero(c.num_free);
  bool have_start = false;
  if (!start.empty()) {
    for (int i = 0; i < model.num_agents(); ++i) {
      for (int k = 0; k <= c.T; ++k)
        for (int j = 0; j < model.partition[i].n; ++j) {
          const int v = c.coord_to_var(state_coord(c.n, k, model.state_offset[i] + j));
          if (v >= 0) z0(v) = start[i].states(k, j);
        }
      for (int k = 0; k < c.T; ++k)
        for (int h = 0; h < model.partition[i].m; ++h) {
          const int v =
              c.coord_to_var(input_coord(c.n, c.m, c.T, k, model.input_offset[i] + h));
          if (v >= 0) z0(v) = start[i].inputs(k, h);
        }
    }
    have_start = strictly_feasible(z0);
  }
  if (!have_start) {
    z0.setZero();
    if (!strictly_feasible(z0)) {
      PhaseOneInternal p1 = phase1_internal(c, settings);
      if (!p1.feasible) {
        OcpSolution sol;
        sol.status = SolveStatus::infeasible;
        InfeasibilityCertificate cert;
        cert.total_violation = p1.total_violation;
        cert.equality_residual = p1.equality_residual;
        cert.worst = p1.worst;
        sol.infeasibility = cert;
        c.scatter(p1.z);
        sol.trajectories = trajectories_from_values(problem, c);
        sol.dyn_multipliers.assign(model.num_agents(), Eigen::MatrixXd());
        for (int i = 0; i < model.num_agents(); ++i)
          sol.dyn_multipliers[i] = Eigen::MatrixXd::Zero(c.T, model.partition[i].n);
        sol.ineq_multipliers = empty_multipliers(model);
        size_set_multipliers(problem, sol.ineq_multipliers);
        return sol;
      }
      z0 = p1.z;
      // A feasible-but-thin interior can defeat the barrier; nudge strictly
      // violated slacks is impossible here, so proceed only if all slacks > 0.
      for (const auto& row : c.ineq)
        if (eq_value(row, z0) >= 0.0)
          throw NumericalError("feasible set has empty interior along a non-pinned constraint");
    }
  }

  GenericProblem gp;
  gp.nvars = c.num_free;
  gp.eq = &c.eq;
  gp.ineq = &c.ineq;
  gp.objective = [&](const Eigen::VectorXd& zf, Eigen::VectorXd* grad,
                     std::vector<Eigen::Triplet<double>>* hess) {
    c.scatter(zf);
    if (!grad) return c.eval_objective(nullptr, hess);
    Eigen::VectorXd grad_full;
    const double f = c.eval_objective(&grad_full, hess);
    grad->resize(c.num_free);
    for (int v = 0; v < c.num_free; ++v) (*grad)(v) = grad_full(c.var_to_coord[v]);
    return f;
  };

  BarrierOutcome outcome = barrier_solve(gp, settings, z0, nullptr);
  if (outcome.status == BarrierOutcome::Status::stalled && outcome.eq_residual_inf > 1e-6) {
    OcpSolution sol;
    sol.status = SolveStatus::infeasible;
    InfeasibilityCertificate cert;
    cert.equality_residual = outcome.eq_residual_inf;
    sol.infeasibility = cert;
    c.scatter(outcome.z);
    sol.trajectories = trajectories_from_values(problem, c);
    sol.dyn_multipliers.assign(model.num_agents(), Eigen::MatrixXd());
    for (int i = 0; i < model.num_agents(); ++i)
      sol.dyn_multipliers[i] = Eigen::MatrixXd::Zero(c.T, model.partition[i].n);
    sol.ineq_multipliers = empty_multipliers(model);
    size_set_multipliers(problem, sol.ineq_multipliers);
    return sol;
  }
  if (outcome.lambda.size() == 0) outcome.lambda = Eigen::VectorXd::Zero(c.ineq.size());
  return extract_solution(problem, c, outcome, settings);
}

PhaseOneResult solve_phase1(const OcpProblem& problem, const SolverSettings& settings) {
  CompiledOcp c = compile(problem);
  PhaseOneResult result;
  if (!c.trivial_violations.empty()) {
    result.feasible = false;
    result.certificate = certificate_from_trivial(c);
    result.point = trajectories_from_values(problem, c);
    return result;
  }
  PhaseOneInternal p1 = phase1_internal(c, settings);
  result.feasible = p1.feasible;
  result.strict = p1.strict;
  result.certificate.total_violation = p1.total_violation;
  result.certificate.equality_residual = p1.equality_residual;
  result.certificate.worst = p1.worst;
  c.scatter(p1.z);
  if (p1.feasible) {
    // Make the dynamics exact: keep the inputs, roll the states forward.
    // (Phase 1 satisfies the equalities only to Newton tolerance.)
    std::vector<Trajectory> trajs = trajectories_from_values(problem, c);
    result.point = trajs;
  } else {
    result.point = trajectories_from_values(problem, c);
  }
  return result;
}

double KktReport::max_residual() const {
  return std::max({stationarity_inf, dynamics_inf, inequality_inf, complementarity_inf});
}

KktReport kkt_residuals(const OcpProblem& problem, const OcpSolution& solution) {
  CompiledOcp c = compile(problem);
  const SystemModel& model = *problem.model;
  const int T = c.T;

  // Load the solution values (pinned coordinates keep their compiled values;
  // a deviating external solution shows up as a bound violation below).
  for (int i = 0; i < model.num_agents(); ++i) {
    for (int k = 0; k <= T; ++k)
      for (int j = 0; j < model.partition[i].n; ++j) {
        const int coord = state_coord(c.n, k, model.state_offset[i] + j);
        if (c.coord_to_var(coord) >= 0) c.values(coord) = solution.trajectories[i].states(k, j);
      }
    for (int k = 0; k < T; ++k)
      for (int h = 0; h < model.partition[i].m; ++h) {
        const int coord = input_coord(c.n, c.m, c.T, k, model.input_offset[i] + h);
        if (c.coord_to_var(coord) >= 0) c.values(coord) = solution.trajectories[i].inputs(k, h);
      }
  }

  // Flatten the structured multipliers back onto the compiled rows.
  Eigen::VectorXd row_duals = Eigen::VectorXd::Zero(static_cast<int>(c.ineq.size()));
  for (size_t r = 0; r < c.ineq.size(); ++r) {
    const RowTag& tag = c.ineq[r].tag;
    const auto& mult = solution.ineq_multipliers;
    switch (tag.kind) {
      case RowTag::Kind::state_set:
        row_duals(r) = mult.state_set[tag.agent][tag.stage](tag.row);
        break;
      case RowTag::Kind::input_set:
        row_duals(r) = mult.input_set[tag.agent][tag.stage](tag.row);
        break;
      case RowTag::Kind::state_bound_lower:
        row_duals(r) = mult.state_bound_lower[tag.agent](tag.stage, tag.row);
        break;
      case RowTag::Kind::state_bound_upper:
        row_duals(r) = mult.state_bound_upper[tag.agent](tag.stage, tag.row);
        break;
      case RowTag::Kind::input_bound_lower:
        row_duals(r) = mult.input_bound_lower[tag.agent](tag.stage, tag.row);
        break;
      case RowTag::Kind::input_bound_upper:
        row_duals(r) = mult.input_bound_upper[tag.agent](tag.stage, tag.row);
        break;
      default:
        break;
    }
  }
  std::vector<double> eq_duals(c.eq.size(), 0.0);
  for (size_t r = 0; r < c.eq.size(); ++r) {
    const RowTag& tag = c.eq[r].tag;
    eq_duals[r] =
        solution.dyn_multipliers[tag.agent](tag.stage, tag.row - model.state_offset[tag.agent]);
  }

  KktReport report;

  // Stationarity; pinned coordinates are balanced by their pin multipliers.
  Eigen::VectorXd stat = stationarity_full(c, row_duals, eq_duals);
  for (int coord = 0; coord < c.num_coords; ++coord) {
    if (!c.pinned[coord]) continue;
    // Add the pin multiplier contribution (upper minus lower).
    const int agent = [&] {
      if (coord < (T + 1) * c.n) return c.agent_of_state_row(coord % c.n);
      int h = (coord - (T + 1) * c.n) % c.m;
      int a = 0;
      while (a + 1 < model.num_agents() && model.input_offset[a + 1] <= h) ++a;
      return a;
    }();
    const auto& mult = solution.ineq_multipliers;
    if (coord < (T + 1) * c.n) {
      const int stage = coord / c.n, local = coord % c.n - model.state_offset[agent];
      stat(coord) += mult.state_bound_upper[agent](stage, local) -
                     mult.state_bound_lower[agent](stage, local);
    } else {
      const int rem = coord - (T + 1) * c.n;
      const int stage = rem / c.m, local = rem % c.m - model.input_offset[agent];
      stat(coord) += mult.input_bound_upper[agent](stage, local) -
                     mult.input_bound_lower[agent](stage, local);
    }
  }

  for (int i = 0; i < model.num_agents(); ++i) {
    const int ni = model.partition[i].n, mi = model.partition[i].m;
    Eigen::MatrixXd sx = Eigen::MatrixXd::Zero(T, ni);   // rows: stages 1..T
    Eigen::MatrixXd su = Eigen::MatrixXd::Zero(T, mi);   // rows: stages 0..T-1
    for (int k = 1; k <= T; ++k)
      for (int j = 0; j < ni; ++j)
        sx(k - 1, j) = stat(state_coord(c.n, k, model.state_offset[i] + j));
    for (int k = 0; k < T; ++k)
      for (int h = 0; h < mi; ++h)
        su(k, h) = stat(input_coord(c.n, c.m, c.T, k, model.input_offset[i] + h));
    report.state_stationarity.push_back(std::move(sx));
    report.input_stationarity.push_back(std::move(su));
  }
  double stat_inf = 0.0;
  for (int i = 0; i < model.num_agents(); ++i) {
    if (report.state_stationarity[i].size())
      stat_inf = std::max(stat_inf, report.state_stationarity[i].cwiseAbs().maxCoeff());
    if (report.input_stationarity[i].size())
      stat_inf = std::max(stat_inf, report.input_stationarity[i].cwiseAbs().maxCoeff());
  }
  report.stationarity_inf = stat_inf;

  // Primal feasibility.
  double dyn_inf = 0.0;
  for (const auto& row : c.eq) dyn_inf = std::max(dyn_inf, std::abs(row.value(c.values)));
  for (const auto& row : c.degenerate) {
    // Evaluate with the external solution's values for pinned coords.
    double v = row.cst;
    for (const auto& [coord, coef] : row.full) {
      double val = c.values(coord);
      if (c.pinned[coord] || coord < c.n) {
        // pinned or x_0: compiled value; external may deviate on pins
        const int k = coord < (T + 1) * c.n ? coord / c.n : -1;
        if (k >= 0) {
          const int r = coord % c.n;
          const int agent = c.agent_of_state_row(r);
          val = solution.trajectories[agent].states(k, r - model.state_offset[agent]);
        }
      }
      v += coef * val;
    }
    dyn_inf = std::max(dyn_inf, std::abs(v));
  }
  report.dynamics_inf = dyn_inf;

  double ineq_inf = 0.0, comp_inf = 0.0;
  for (size_t r = 0; r < c.ineq.size(); ++r) {
    const double v = c.ineq[r].value(c.values);
    ineq_inf = std::max(ineq_inf, v);
    comp_inf = std::max(comp_inf, std::abs(row_duals(r) * v));
  }
  // Pinned coordinates vs the external solution.
  for (int i = 0; i < model.num_agents(); ++i) {
    if (!problem.extra_bounds[i]) continue;
    const StageBounds& b = *problem.extra_bounds[i];
    for (int k = 1; k <= T; ++k)
      for (int j = 0; j < model.partition[i].n; ++j)
        if (std::isfinite(b.state_lower(k, j)) && b.state_lower(k, j) == b.state_upper(k, j))
          ineq_inf = std::max(
              ineq_inf, std::abs(solution.trajectories[i].states(k, j) - b.state_lower(k, j)));
    for (int k = 0; k < T; ++k)
      for (int h = 0; h < model.partition[i].m; ++h)
        if (std::isfinite(b.input_lower(k, h)) && b.input_lower(k, h) == b.input_upper(k, h))
          ineq_inf = std::max(
              ineq_inf, std::abs(solution.trajectories[i].inputs(k, h) - b.input_lower(k, h)));
  }
  report.inequality_inf = ineq_inf;
  report.complementarity_inf = comp_inf;
  return report;
}

SystemModel restrict_to_agent(const SystemModel& model, int agent) {
  SystemConfig cfg;
  cfg.A = model.state_block(agent, agent);
  cfg.B = model.input_block(agent);
  cfg.partition = {model.partition[agent]};
  cfg.horizon = model.horizon;
  cfg.x0 = model.state_slice(model.x0, agent);
  for (int k = 0; k < static_cast<int>(model.disturbance.size()); ++k)
    cfg.disturbance.push_back(model.local_disturbance_at(agent, k));
  return build_system(cfg);
}

}  // namespace mechmpc
