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
#include "mechmpc/game_runner.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mechmpc/hvac.hpp"

namespace mechmpc {

namespace {

struct RoundFeedback {
  std::vector<Eigen::MatrixXd> references;
  std::vector<Eigen::MatrixXd> prices;
  std::vector<Eigen::MatrixXd> exclusions;
  bool exclusion_fallback = false;
};

/// Message-independent feedback for all agents; infeasible exclusion solves
/// fall back to a zero reference and flag the round.
RoundFeedback compute_feedback(const Principal& principal, const std::vector<Message>& messages,
                               int jobs) {
  const SystemModel& model = principal.model();
  const int na = model.num_agents();
  RoundFeedback fb;
  fb.references.resize(na);
  fb.prices.resize(na);
  fb.exclusions.resize(na);
  std::vector<char> fallback(na, 0);
  parallel_for(na, jobs, [&](int i) {
    fb.references[i] = principal.coupling_reference(messages, i);
    fb.prices[i] = principal.externality_prices(messages, i);
    auto excl = principal.exclusion_trajectory(messages, i);
    if (excl) {
      fb.exclusions[i] = *excl;
    } else {
      fb.exclusions[i] = Eigen::MatrixXd::Zero(model.horizon + 1, model.partition[i].n);
      fallback[i] = 1;
    }
  });
  for (char f : fallback) fb.exclusion_fallback |= (f != 0);
  return fb;
}

Message updated_message(const Scenario& scenario, Agent& agent, const RoundFeedback& fb,
                        const SolverSettings& solver) {
  const int i = agent.index();
  agent.receive_feedback(fb.references[i], fb.prices[i], fb.exclusions[i]);
  const OcpSolution local = agent.solve_local(solver);
  Message msg = agent.gradient_matching_message(local, scenario.family);
  if (scenario.printed_weight_update && scenario.hvac) {
    msg.state_weights = hvac_printed_state_weights(
        scenario.hvac->rooms[i], scenario.hvac->reference_temp, local.trajectories[0].states);
  }
  return msg;
}

}  // namespace

LearningResult run_learning(const Scenario& scenario, int max_rounds, double tol,
                            const std::optional<std::vector<Message>>& initial_profile,
                            int jobs) {
  if (max_rounds < 1) throw ConfigError("learning needs at least one round");
  Principal principal = make_principal(scenario);
  std::vector<Agent> agents = make_agents(scenario);
  const int na = scenario.model->num_agents();

  std::vector<Message> messages;
  if (initial_profile) {
    messages = *initial_profile;
  } else {
    for (const Agent& a : agents) messages.push_back(a.current_message());
  }

  LearningResult result;
  for (int round = 0; round < max_rounds; ++round) {
    principal.validate_profile(messages);
    RoundRecord record;
    record.round = round;
    record.messages = messages;

    OcpSolution z = principal.outcome(messages);
    record.status = z.status;
    RoundFeedback fb = compute_feedback(principal, messages, jobs);
    record.references = fb.references;
    record.exclusion_fallback = fb.exclusion_fallback;
    if (z.status == SolveStatus::optimal) {
      record.outcome = z.trajectories;
      record.outcome_multipliers = z.dyn_multipliers;
      for (int i = 0; i < na; ++i) {
        record.fees.push_back(principal.fee(messages, z, i, fb.exclusions[i], fb.prices[i]));
        record.true_costs.push_back(scenario.true_cost(i, z.trajectories[i]));
      }
    }

    std::vector<Message> next(na);
    parallel_for(na, jobs, [&](int i) {
      next[i] = updated_message(scenario, agents[i], fb, scenario.solver);
    });

    double change = 0.0;
    for (int i = 0; i < na; ++i) change = std::max(change, message_distance(messages[i], next[i]));
    record.message_change = change;
    result.rounds.push_back(std::move(record));
    messages = std::move(next);

    if (change < tol) {
      result.converged = true;
      result.final_change = change;
      break;
    }
    result.final_change = change;
  }
  result.final_messages = messages;
  return result;
}

DeviationReport verify_nash(const Scenario& scenario, const std::vector<Message>& profile,
                            int samples, std::uint64_t seed, double tol, int jobs) {
  if (samples < 1) throw ConfigError("deviation check needs at least one sample");
  Principal principal = make_principal(scenario);
  std::vector<Agent> agents = make_agents(scenario);
  const int na = scenario.model->num_agents();
  principal.validate_profile(profile);

  OcpSolution base = principal.outcome(profile);
  if (base.status != SolveStatus::optimal)
    throw ConfigError("deviation check requires a feasible base profile");
  RoundFeedback fb = compute_feedback(principal, profile, jobs);
  for (int i = 0; i < na; ++i)
    agents[i].receive_feedback(fb.references[i], fb.prices[i], fb.exclusions[i]);

  DeviationReport report;
  report.samples_per_agent = samples;
  for (int i = 0; i < na; ++i) {
    const FeeBreakdown fee = principal.fee(profile, base, i, fb.exclusions[i], fb.prices[i]);
    report.base_costs.push_back(scenario.true_cost(i, base.trajectories[i]) + fee.total);
  }

  std::vector<DeviationSample> all(static_cast<size_t>(na) * samples);
  std::vector<char> infeasible_flags(all.size(), 0);
  parallel_for(na * samples, jobs, [&](int idx) {
    const int i = idx / samples, s = idx % samples;
    DeviationSample& out = all[idx];
    out.agent = i;
    out.sample = s;
    out.strategy = s % 4;
    Rng rng(Rng::derive_seed(seed, i, s));
    Message deviated = agents[i].deviation_message(
        profile[i], rng, scenario.nash.perturbation_sigma, s % 4, scenario.solver);
    std::vector<Message> trial = profile;
    trial[i] = std::move(deviated);
    OcpSolution z = principal.outcome(trial);
    if (z.status != SolveStatus::optimal) {
      out.infeasible = true;
      infeasible_flags[idx] = 1;
      out.gain = -kInf;
      return;
    }
    const FeeBreakdown fee = principal.fee(trial, z, i, fb.exclusions[i], fb.prices[i]);
    const double cost = scenario.true_cost(i, z.trajectories[i]) + fee.total;
    out.gain = report.base_costs[i] - cost;
  });

  report.best_per_agent.resize(na);
  for (int i = 0; i < na; ++i) {
    report.best_per_agent[i] = all[static_cast<size_t>(i) * samples];
    for (int s = 0; s < samples; ++s) {
      const DeviationSample& d = all[static_cast<size_t>(i) * samples + s];
      if (!d.infeasible && (report.best_per_agent[i].infeasible ||
                            d.gain > report.best_per_agent[i].gain))
        report.best_per_agent[i] = d;
      report.max_gain = std::max(report.max_gain, d.infeasible ? -kInf : d.gain);
    }
  }
  for (char f : infeasible_flags) report.infeasible_count += (f != 0);
  report.tolerance = tol;
  return report;
}

// ---------------------------------------------------------------------------
// Receding-horizon simulation
// ---------------------------------------------------------------------------

std::string controller_tag(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::perfect:
      return "P";
    case ControllerKind::mechanism:
      return "M";
    default:
      return "A";
  }
}

double MpcLog::aggregate_stage_cost(int stage) const {
  double total = 0.0;
  for (double c : stages[stage].stage_costs) total += c;
  return total;
}

double MpcLog::cumulative_cost(int from_stage, int to_stage) const {
  double total = 0.0;
  for (int t = from_stage; t <= to_stage && t < static_cast<int>(stages.size()); ++t)
    total += aggregate_stage_cost(t);
  return total;
}

MpcDriver::MpcDriver(const Scenario& scenario, ControllerKind kind, int sim_length,
                     std::uint64_t seed, int jobs)
    : scenario_(scenario), kind_(kind), sim_length_(sim_length), seed_(seed), jobs_(jobs) {
  if (sim_length_ < 1) throw ConfigError("simulation length must be positive");
  const SystemModel& model = *scenario_.model;
  realized_ = generate_disturbance(scenario_.disturbance, model.n(),
                                   sim_length_ + model.horizon, seed);
  state_ = model.x0;
  if (kind_ == ControllerKind::mechanism) {
    agents_ = make_agents(scenario_);
    for (const Agent& a : agents_) messages_.push_back(a.current_message());
  }
}

std::shared_ptr<const SystemModel> MpcDriver::window_model() const {
  const SystemModel& base = *scenario_.model;
  SystemConfig cfg;
  cfg.A = base.A;
  cfg.B = base.B;
  cfg.partition = base.partition;
  cfg.horizon = base.horizon;
  cfg.x0 = state_;
  for (int k = 0; k < base.horizon; ++k) {
    if (scenario_.mpc.prediction == MpcSettings::Prediction::exact)
      cfg.disturbance.push_back(realized_[stage_ + k]);
    else
      cfg.disturbance.push_back(realized_[stage_]);
  }
  return std::make_shared<SystemModel>(build_system(cfg));
}

MpcDriver::StepResult MpcDriver::step() {
  if (done()) throw ConfigError("simulation is already finished");
  const SystemModel& base = *scenario_.model;
  StepResult result;
  result.window_model = window_model();

  if (kind_ == ControllerKind::perfect) {
    OcpProblem p =
        OcpProblem::for_model(result.window_model, scenario_.state_sets, scenario_.input_sets);
    for (int i = 0; i < base.num_agents(); ++i) p.objectives[i] = TrueObjective{scenario_.costs[i]};
    OcpSolution sol = solve_ocp(p, scenario_.solver);
    if (sol.status != SolveStatus::optimal)
      throw NumericalError("perfect-information stage problem did not solve");
    result.plan = sol.trajectories;
    result.input = full_input_at(*result.window_model, sol.trajectories, 0);
  } else if (kind_ == ControllerKind::consensus) {
    // Fixed unit weights against the consensus reference; no updates ever.
    Principal principal(result.window_model, scenario_.state_sets, scenario_.input_sets,
                        scenario_.consensus_family, PrincipalOptions{.solver = scenario_.solver});
    std::vector<Message> unit;
    for (int i = 0; i < base.num_agents(); ++i)
      unit.push_back(
          Message::bootstrap(base.horizon, base.partition[i].n, base.partition[i].m));
    OcpSolution sol = principal.outcome(unit);
    if (sol.status != SolveStatus::optimal)
      throw NumericalError("consensus stage problem did not solve");
    result.plan = sol.trajectories;
    result.input = full_input_at(*result.window_model, sol.trajectories, 0);
  } else {
    Principal principal(result.window_model, scenario_.state_sets, scenario_.input_sets,
                        scenario_.family,
                        PrincipalOptions{.solver = scenario_.solver});
    principal.validate_profile(messages_);
    result.messages = messages_;

    OcpSolution z = principal.outcome(messages_);
    RoundFeedback fb = compute_feedback(principal, messages_, jobs_);
    if (z.status == SolveStatus::optimal) {
      result.plan = z.trajectories;
      result.input = full_input_at(*result.window_model, z.trajectories, 0);
    } else {
      result.round_infeasible = true;
      result.input = principal.fallback_input(messages_);
    }

    // Agents observe their local state, receive the feedback, re-plan, and
    // refresh their messages for the next stage.
    std::vector<Message> next(base.num_agents());
    Scenario& sc = scenario_;
    parallel_for(base.num_agents(), jobs_, [&](int i) {
      agents_[i].set_initial_state(base.state_slice(state_, i));
      std::vector<Eigen::VectorXd> local_d;
      for (int k = 0; k < base.horizon; ++k)
        local_d.push_back(result.window_model->local_disturbance_at(i, k));
      agents_[i].set_local_disturbance(std::move(local_d));
      next[i] = updated_message(sc, agents_[i], fb, sc.solver);
    });
    messages_ = std::move(next);
  }

  state_ = base.A * state_ + base.B * result.input + realized_[stage_];
  ++stage_;
  return result;
}

MpcLog run_mpc(const Scenario& scenario, ControllerKind kind, int sim_length, std::uint64_t seed,
               int jobs) {
  MpcDriver driver(scenario, kind, sim_length, seed, jobs);
  const SystemModel& model = *scenario.model;
  MpcLog log;
  log.controller = kind;
  log.seed = seed;
  log.initial_state = model.x0;
  while (!driver.done()) {
    const int t = driver.stage();
    const Eigen::VectorXd x_before = driver.state();
    MpcDriver::StepResult sr = driver.step();
    MpcStageLog entry;
    entry.stage = t;
    entry.applied_input = sr.input;
    entry.realized_state = driver.state();
    entry.disturbance = driver.realized_disturbance(t);
    entry.round_infeasible = sr.round_infeasible;
    for (int i = 0; i < model.num_agents(); ++i) {
      const Eigen::VectorXd xi = model.state_slice(x_before, i);
      const Eigen::VectorXd ui =
          sr.input.segment(model.input_offset[i], model.partition[i].m);
      entry.stage_costs.push_back(scenario.costs[i].stage(xi, ui));
    }
    if (kind == ControllerKind::mechanism) entry.messages = sr.messages;
    log.stages.push_back(std::move(entry));
  }
  return log;
}

CompareTables compare_report(const std::vector<MpcLog>& logs) {
  if (logs.empty()) throw ConfigError("nothing to compare");
  const size_t stages = logs[0].stages.size();
  for (const MpcLog& log : logs)
    if (log.stages.size() != stages) throw ConfigError("logs have mismatched lengths");

  CompareTables tables;
  tables.cost_header.push_back("stage");
  for (const MpcLog& log : logs)
    tables.cost_header.push_back("cost_" + controller_tag(log.controller));
  for (size_t t = 0; t < stages; ++t) {
    std::vector<double> row{static_cast<double>(t)};
    for (const MpcLog& log : logs) row.push_back(log.aggregate_stage_cost(static_cast<int>(t)));
    tables.cost_rows.push_back(std::move(row));
  }

  const int n = static_cast<int>(logs[0].initial_state.size());
  tables.trajectory_header.push_back("stage");
  for (int j = 0; j < n; ++j)
    for (const MpcLog& log : logs)
      tables.trajectory_header.push_back("s" + std::to_string(j) + "_" +
                                         controller_tag(log.controller));
  for (size_t t = 0; t <= stages; ++t) {
    std::vector<double> row{static_cast<double>(t)};
    for (int j = 0; j < n; ++j)
      for (const MpcLog& log : logs)
        row.push_back(t == 0 ? log.initial_state(j) : log.stages[t - 1].realized_state(j));
    tables.trajectory_rows.push_back(std::move(row));
  }

  const int last = static_cast<int>(stages) - 1;
  std::vector<double> full_totals, late_totals;
  for (const MpcLog& log : logs) {
    full_totals.push_back(log.cumulative_cost(0, last));
    late_totals.push_back(log.cumulative_cost(std::min(10, last), last));
  }
  tables.cumulative_from_10 = late_totals;
  for (size_t l = 0; l < logs.size(); ++l) {
    std::ostringstream os;
    os << "controller " << controller_tag(logs[l].controller) << ": total "
       << format_double(full_totals[l]) << ", stages 10.. " << format_double(late_totals[l]);
    if (l > 0 && late_totals[0] != 0.0)
      os << ", gap vs " << controller_tag(logs[0].controller) << " "
         << format_double((late_totals[l] - late_totals[0]) / late_totals[0]);
    tables.summary_lines.push_back(os.str());
  }
  return tables;
}

}  // namespace mechmpc
