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
// End-to-end acceptance suite. Each criterion prints one PASS/FAIL line; the
// binary exits nonzero if any criterion fails. argv[1] is the CLI binary
// (used by the determinism criterion).
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mechmpc/game_runner.hpp"
#include "mechmpc/hvac.hpp"
#include "mechmpc/scenario.hpp"
#include "mechmpc/solver.hpp"
#include "oracles.hpp"

using namespace mechmpc;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int number, const std::string& name, bool pass, const std::string& detail) {
  std::printf("criterion %d %-28s %s (%s)\n", number, name.c_str(), pass ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

void guard(int number, const std::string& name, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(number, name, false, std::string("exception: ") + e.what());
  }
}

/// Default scenario with the outside temperature zeroed (no disturbance
/// inside the stage problem).
Scenario quiet_scenario() {
  nlohmann::json doc = default_scenario().source;
  doc["hvac"]["outside"]["mean"] = 0.0;
  doc["hvac"]["outside"]["amplitude"] = 0.0;
  doc["hvac"]["outside"]["noise_sigma"] = 0.0;
  return scenario_from_json(doc);
}

OcpSolution solve_efficient(const Scenario& s) {
  OcpProblem p = OcpProblem::for_model(s.model, s.state_sets, s.input_sets);
  for (int i = 0; i < s.model->num_agents(); ++i) p.objectives[i] = TrueObjective{s.costs[i]};
  OcpSolution sol = solve_ocp(p, s.solver);
  if (sol.status != SolveStatus::optimal)
    throw NumericalError("centralized problem did not solve");
  return sol;
}

std::vector<Message> truthful_profile(const Scenario& s, const OcpSolution& eff) {
  std::vector<Agent> agents = make_agents(s);
  std::vector<Message> profile;
  for (int i = 0; i < s.model->num_agents(); ++i)
    profile.push_back(agents[i].truthful_message(eff.trajectories[i].states,
                                                 eff.trajectories[i].inputs,
                                                 eff.dyn_multipliers[i], s.family));
  return profile;
}

// --------------------------------------------------------------------------

void criterion1_fixed_point() {
  Scenario s = quiet_scenario();
  const OcpSolution eff = solve_efficient(s);
  Principal principal = make_principal(s);
  const std::vector<Message> profile = truthful_profile(s, eff);
  OcpSolution z = principal.outcome(profile);
  if (z.status != SolveStatus::optimal) {
    report(1, "equilibrium-fixed-point", false, "surrogate problem not optimal");
    return;
  }
  double traj_err = 0.0, mult_err = 0.0;
  for (int i = 0; i < 4; ++i) {
    traj_err = std::max(traj_err, (z.trajectories[i].states - eff.trajectories[i].states)
                                      .cwiseAbs()
                                      .maxCoeff());
    traj_err = std::max(traj_err, (z.trajectories[i].inputs - eff.trajectories[i].inputs)
                                      .cwiseAbs()
                                      .maxCoeff());
    mult_err = std::max(mult_err, (z.dyn_multipliers[i] - eff.dyn_multipliers[i])
                                      .cwiseAbs()
                                      .maxCoeff());
  }
  std::ostringstream os;
  os << "trajectory err " << traj_err << ", multiplier err " << mult_err;
  report(1, "equilibrium-fixed-point", traj_err <= 1e-4 && mult_err <= 1e-4, os.str());
}

void criterion2_best_response_grid() {
  Scenario s = quiet_scenario();
  const OcpSolution eff = solve_efficient(s);
  Principal principal = make_principal(s);
  std::vector<Message> profile = truthful_profile(s, eff);
  const OcpSolution z = principal.outcome(profile);
  const int T = s.model->horizon;

  bool center_exact = true, strictly_larger = true;
  const double h = 0.05;
  for (int i = 0; i < 4; ++i) {
    const Eigen::MatrixXd prices = principal.externality_prices(profile, i);
    const Eigen::MatrixXd x_hat = Eigen::MatrixXd::Zero(T + 1, 1);

    // Center the reports on the computed outcome; the outcome itself must not
    // move (it never reads these components).
    std::vector<Message> centered = profile;
    centered[i].state_ref = z.trajectories[i].states;
    centered[i].sensitivity = z.dyn_multipliers[i];
    const OcpSolution z_center = principal.outcome(centered);
    for (int a = 0; a < 4; ++a)
      if (z_center.trajectories[a].states != z.trajectories[a].states ||
          z_center.dyn_multipliers[a] != z.dyn_multipliers[a])
        center_exact = false;

    const FeeBreakdown center_fee = principal.fee(centered, z_center, i, x_hat, prices);
    if (center_fee.x_mismatch != 0.0 || center_fee.lambda_mismatch != 0.0) center_exact = false;

    // One-coordinate sweeps of both reports; the outcome is unchanged, so the
    // fee can be evaluated directly against the same solution.
    for (int k = 0; k <= T; ++k) {
      for (double delta : {-2 * h, -h, h, 2 * h}) {
        std::vector<Message> dev = centered;
        dev[i].state_ref(k, 0) += delta;
        const FeeBreakdown fee = principal.fee(dev, z_center, i, x_hat, prices);
        if (!(fee.total > center_fee.total)) strictly_larger = false;
      }
    }
    for (int k = 0; k < T; ++k) {
      for (double delta : {-2 * h, -h, h, 2 * h}) {
        std::vector<Message> dev = centered;
        dev[i].sensitivity(k, 0) += delta;
        const FeeBreakdown fee = principal.fee(dev, z_center, i, x_hat, prices);
        if (!(fee.total > center_fee.total)) strictly_larger = false;
      }
    }
  }
  std::ostringstream os;
  os << "center mismatches exactly zero: " << (center_exact ? "yes" : "no")
     << ", off-center strictly larger: " << (strictly_larger ? "yes" : "no");
  report(2, "report-best-response", center_exact && strictly_larger, os.str());
}

void criterion3_pinning() {
  Scenario s = default_scenario();
  const OcpSolution eff = solve_efficient(s);
  Principal principal = make_principal(s);
  std::vector<Message> profile = truthful_profile(s, eff);
  std::vector<Agent> agents = make_agents(s);
  const int T = s.model->horizon;

  int forced = 0, infeasible_certified = 0, errors = 0;
  Rng rng(1234);
  for (int i = 0; i < 4; ++i) {
    agents[i].receive_feedback(principal.coupling_reference(profile, i),
                               principal.externality_prices(profile, i),
                               Eigen::MatrixXd::Zero(T + 1, 1));
    for (int trial = 0; trial < 20; ++trial) {
      auto target = agents[i].random_feasible_target(rng);
      if (!target) {
        ++errors;
        continue;
      }
      std::vector<Message> trial_profile = profile;
      trial_profile[i] = agents[i].pinned_message(target->first, target->second);
      const OcpSolution z = principal.outcome(trial_profile);
      if (z.status == SolveStatus::optimal) {
        const double err =
            std::max((z.trajectories[i].states - target->first).cwiseAbs().maxCoeff(),
                     (z.trajectories[i].inputs - target->second).cwiseAbs().maxCoeff());
        if (err <= 1e-6)
          ++forced;
        else
          ++errors;
      } else {
        // The profile was infeasible; phase 1 must certify it.
        OcpProblem p = OcpProblem::for_model(s.model, s.state_sets, s.input_sets);
        for (int a = 0; a < 4; ++a) {
          p.objectives[a] = SurrogateObjective{s.family, trial_profile[a].state_weights,
                                               trial_profile[a].input_weights};
          p.extra_bounds[a] = trial_profile[a].bounds;
        }
        PhaseOneResult p1 = solve_phase1(p, s.solver);
        if (!p1.feasible && (p1.certificate.total_violation > 1e-8 ||
                             p1.certificate.equality_residual > 1e-8))
          ++infeasible_certified;
        else
          ++errors;
      }
    }
  }
  std::ostringstream os;
  os << forced << " forced, " << infeasible_certified << " certified infeasible, " << errors
     << " errors of 80";
  report(3, "bounds-pinning", errors == 0 && forced > 0, os.str());
}

void criterion4_nash_sampling() {
  Scenario s = quiet_scenario();
  const OcpSolution eff = solve_efficient(s);
  const std::vector<Message> profile = truthful_profile(s, eff);
  DeviationReport rep = verify_nash(s, profile, 100, 7, 1e-5);
  std::ostringstream os;
  os << "max gain " << rep.max_gain << " over " << rep.samples_per_agent
     << " samples/agent, infeasible " << rep.infeasible_count;
  report(4, "nash-sampling", rep.pass(1e-5), os.str());
}

void criterion5_controller_comparison() {
  Scenario s = default_scenario();
  std::vector<MpcLog> logs;
  for (ControllerKind kind :
       {ControllerKind::perfect, ControllerKind::mechanism, ControllerKind::consensus})
    logs.push_back(run_mpc(s, kind, 100, 42));
  const double cum_p = logs[0].cumulative_cost(10, 99);
  const double cum_m = logs[1].cumulative_cost(10, 99);
  const double cum_a = logs[2].cumulative_cost(10, 99);
  const bool recovers = cum_m <= 1.05 * cum_p;
  const bool consensus_worse = cum_a >= 1.10 * cum_m;
  std::ostringstream os;
  os << "stages 10..99: P " << cum_p << ", M " << cum_m << " (x" << cum_m / cum_p << "), A "
     << cum_a << " (x" << cum_a / cum_m << " of M)";
  report(5, "controller-comparison", recovers && consensus_worse, os.str());
}

void criterion6_solver_oracles() {
  Rng rng(2024);
  double worst_obj = 0.0, worst_mult = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const int T = 2 + trial % 2;  // 2 or 3 scalar decision variables
    const double a = rng.uniform(0.5, 1.4), b = rng.uniform(0.5, 1.5);
    const double x0 = rng.uniform(-1.0, 1.0);
    const double qx = rng.uniform(0.5, 2.0), ru = rng.uniform(0.5, 2.0);

    SystemConfig cfg;
    cfg.A = Eigen::MatrixXd::Constant(1, 1, a);
    cfg.B = Eigen::MatrixXd::Constant(1, 1, b);
    cfg.partition = {{1, 1}};
    cfg.horizon = T;
    cfg.x0 = Eigen::VectorXd::Constant(1, x0);
    auto model = std::make_shared<SystemModel>(build_system(cfg));
    OcpProblem p = OcpProblem::for_model(
        model, {ConstraintSet::unconstrained(1)},
        {ConstraintSet::box(Eigen::VectorXd::Constant(1, -0.4),
                            Eigen::VectorXd::Constant(1, 0.4))});
    p.objectives[0] = TrueObjective{quadratic_cost(
        Eigen::VectorXd::Constant(1, qx), Eigen::VectorXd::Zero(1),
        Eigen::VectorXd::Constant(1, ru), Eigen::VectorXd::Zero(1))};

    OcpSolution sol = solve_ocp(p);
    if (sol.status != SolveStatus::optimal) throw NumericalError("oracle trial did not solve");
    oracle::PgdResult pgd = oracle::projected_gradient(p, 1000000, 1e-3);
    worst_obj = std::max(worst_obj, oracle::rel_err(sol.objective_value, pgd.objective));

    // Adjoint recursion on an interior instance (wide box).
    OcpProblem interior = p;
    interior.input_sets[0] = ConstraintSet::box(Eigen::VectorXd::Constant(1, -50.0),
                                                Eigen::VectorXd::Constant(1, 50.0));
    OcpSolution sol2 = solve_ocp(interior);
    const Eigen::MatrixXd nu = oracle::adjoint_multipliers(
        interior, sol2.trajectories[0].states, sol2.trajectories[0].inputs);
    worst_mult = std::max(worst_mult, (nu - sol2.dyn_multipliers[0]).cwiseAbs().maxCoeff());
  }
  std::ostringstream os;
  os << "objective rel err " << worst_obj << ", multiplier err " << worst_mult;
  report(6, "solver-oracle-equivalence", worst_obj <= 1e-4 && worst_mult <= 1e-5, os.str());
}

void criterion7_gradient_suite() {
  Rng rng(31);
  const double h = 1e-6;
  double worst = 0.0;
  auto relcmp = [&](double analytic, double fd) {
    worst = std::max(worst, std::abs(analytic - fd) /
                                std::max({1.0, std::abs(analytic), std::abs(fd)}));
  };

  const RoomParams room{21.0, 0.6, 0.3};
  AgentCost cost = hvac_cost(room);
  for (int t = 0; t < 100; ++t) {
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, rng.uniform(12.0, 30.0));
    const Eigen::VectorXd u = Eigen::VectorXd::Constant(1, rng.uniform(-5.0, 5.0));
    Eigen::VectorXd xp = x, xm = x, up = u, um = u;
    xp(0) += h;
    xm(0) -= h;
    up(0) += h;
    um(0) -= h;
    relcmp(cost.stage_grad_x(x, u)(0), (cost.stage(xp, u) - cost.stage(xm, u)) / (2 * h));
    relcmp(cost.stage_grad_u(x, u)(0), (cost.stage(x, up) - cost.stage(x, um)) / (2 * h));
    relcmp(cost.terminal_grad(x)(0), (cost.terminal(xp) - cost.terminal(xm)) / (2 * h));
  }

  SurrogateFamily family = hvac_surrogate(21.5);
  for (int t = 0; t < 100; ++t) {
    const double sx = rng.uniform(-30.0, 30.0), v = rng.uniform(-2.0, 2.0);
    relcmp(family.state_deriv(sx, v),
           (family.state_value(sx + h, v) - family.state_value(sx - h, v)) / (2 * h));
    const double su = rng.uniform(-5.0, 5.0), w = rng.uniform(0.2, 2.0);
    relcmp(family.input_deriv(su, w),
           (family.input_value(su + h, w) - family.input_value(su - h, w)) / (2 * h));
  }
  std::ostringstream os;
  os << "worst relative error " << worst;
  report(7, "gradient-suite", worst <= 1e-5, os.str());
}

void criterion8_independence() {
  Scenario s = default_scenario();
  const OcpSolution eff = solve_efficient(s);
  Principal principal = make_principal(s);
  const std::vector<Message> profile = truthful_profile(s, eff);
  std::vector<Agent> agents = make_agents(s);

  std::vector<Eigen::MatrixXd> base_c, base_prices, base_excl;
  for (int i = 0; i < 4; ++i) {
    base_c.push_back(principal.coupling_reference(profile, i));
    base_prices.push_back(principal.externality_prices(profile, i));
    auto excl = principal.exclusion_trajectory(profile, i);
    if (!excl) throw NumericalError("exclusion infeasible at the truthful profile");
    base_excl.push_back(*excl);
    agents[i].receive_feedback(base_c[i], base_prices[i], base_excl[i]);
  }

  int identical = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int i = trial % 4;
    Rng rng(Rng::derive_seed(99, trial, i));
    std::vector<Message> perturbed = profile;
    perturbed[i] = agents[i].deviation_message(profile[i], rng, 0.4, trial, s.solver);
    const Eigen::MatrixXd c = principal.coupling_reference(perturbed, i);
    const Eigen::MatrixXd prices = principal.externality_prices(perturbed, i);
    auto excl = principal.exclusion_trajectory(perturbed, i);
    if (c == base_c[i] && prices == base_prices[i] && excl && *excl == base_excl[i]) ++identical;
  }
  std::ostringstream os;
  os << identical << " of 50 perturbations left references, prices and exclusion bit-identical";
  report(8, "own-message-independence", identical == 50, os.str());
}

void criterion9_cli_determinism(const std::string& cli) {
  // Two byte-identical invocations; the first run's artifacts are snapshotted
  // before the rerun overwrites them.
  const fs::path dir = fs::temp_directory_path() / "mechmpc_acc9";
  const fs::path snapshot = fs::temp_directory_path() / "mechmpc_acc9_first";
  fs::remove_all(dir);
  fs::remove_all(snapshot);

  std::ostringstream cmd;
  cmd << "'" << cli << "' compare --out '" << dir.string()
      << "' --set mpc.sim_length=30 > /dev/null 2>&1";
  if (std::system(cmd.str().c_str()) != 0) {
    report(9, "cli-determinism", false, "first compare invocation failed");
    return;
  }
  fs::create_directories(snapshot);
  for (const auto& entry : fs::directory_iterator(dir))
    fs::copy_file(entry.path(), snapshot / entry.path().filename());
  if (std::system(cmd.str().c_str()) != 0) {
    report(9, "cli-determinism", false, "second compare invocation failed");
    return;
  }

  auto strip = [](const fs::path& file) {
    std::ifstream in(file);
    std::ostringstream body;
    std::string line;
    while (std::getline(in, line))
      if (line.rfind("# timestamp", 0) != 0) body << line << "\n";
    return body.str();
  };

  int files = 0;
  bool same = true;
  for (const auto& entry : fs::directory_iterator(snapshot)) {
    ++files;
    const fs::path other = dir / entry.path().filename();
    if (!fs::exists(other) || strip(entry.path()) != strip(other)) same = false;
  }
  std::ostringstream os;
  os << files << " artifacts byte-compared modulo the timestamp line";
  report(9, "cli-determinism", same && files >= 6, os.str());
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "tools/mechmpc";
  guard(1, "equilibrium-fixed-point", criterion1_fixed_point);
  guard(2, "report-best-response", criterion2_best_response_grid);
  guard(3, "bounds-pinning", criterion3_pinning);
  guard(4, "nash-sampling", criterion4_nash_sampling);
  guard(5, "controller-comparison", criterion5_controller_comparison);
  guard(6, "solver-oracle-equivalence", criterion6_solver_oracles);
  guard(7, "gradient-suite", criterion7_gradient_suite);
  guard(8, "own-message-independence", criterion8_independence);
  guard(9, "cli-determinism", [&] { criterion9_cli_determinism(cli); });

  if (failures == 0) {
    std::printf("acceptance: all 9 criteria PASS\n");
    return 0;
  }
  std::printf("acceptance: %d criterion(s) FAILED\n", failures);
  return 1;
}
