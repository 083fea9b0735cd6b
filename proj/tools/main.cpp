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
#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mechmpc/game_runner.hpp"
#include "mechmpc/hvac.hpp"
#include "mechmpc/scenario.hpp"
#include "mechmpc/transcript.hpp"
#include "mechmpc/version.hpp"

namespace fs = std::filesystem;
using namespace mechmpc;
using nlohmann::json;

namespace {

struct RunSpec {
  std::string command;
  std::string scenario_path = "default";
  std::string out_dir = "out";
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string format = "csv";
  int jobs = 1;
  int rounds = -1;
  int samples = -1;
  bool seed_truthful = false;
  std::string profile_path;
  std::string controller = "M";
  double tol = 1e-5;
  std::string command_line;
};

Scenario build_scenario(const RunSpec& spec) {
  json doc = spec.scenario_path == "default" ? default_scenario().source
                                             : load_scenario(spec.scenario_path).source;
  doc = apply_overrides(doc, spec.overrides);
  if (spec.seed_given) doc["seed"] = spec.seed;
  return scenario_from_json(doc);
}

std::string timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[64];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::ofstream open_artifact(const fs::path& path, const Scenario& scenario, const RunSpec& spec) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  ArtifactHeader header{kVersion, scenario.hash(), scenario.seed, spec.command_line};
  write_header(out, header);
  out << "# timestamp: " << timestamp_now() << "\n";
  return out;
}

/// Efficient trajectory of the scenario's centralized true-cost problem.
OcpSolution solve_efficient(const Scenario& scenario) {
  OcpProblem p =
      OcpProblem::for_model(scenario.model, scenario.state_sets, scenario.input_sets);
  for (int i = 0; i < scenario.model->num_agents(); ++i)
    p.objectives[i] = TrueObjective{scenario.costs[i]};
  OcpSolution sol = solve_ocp(p, scenario.solver);
  if (sol.status != SolveStatus::optimal)
    throw NumericalError("centralized true-cost problem did not solve");
  return sol;
}

std::vector<Message> truthful_profile(const Scenario& scenario) {
  const OcpSolution eff = solve_efficient(scenario);
  std::vector<Agent> agents = make_agents(scenario);
  std::vector<Message> profile;
  for (int i = 0; i < scenario.model->num_agents(); ++i)
    profile.push_back(agents[i].truthful_message(eff.trajectories[i].states,
                                                 eff.trajectories[i].inputs,
                                                 eff.dyn_multipliers[i], scenario.family));
  return profile;
}

json strip_header_and_parse(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream body;
  std::string line;
  while (std::getline(in, line))
    if (line.empty() || line[0] != '#') body << line << "\n";
  try {
    return json::parse(body.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + std::string(e.what()));
  }
}

int cmd_learn(const RunSpec& spec) {
  Scenario scenario = build_scenario(spec);
  const int rounds = spec.rounds > 0 ? spec.rounds : scenario.learning.max_rounds;
  if (spec.rounds == 0) throw ConfigError("rounds must be positive");
  LearningResult result =
      run_learning(scenario, rounds, scenario.learning.convergence_tol, {}, spec.jobs);

  fs::create_directories(spec.out_dir);
  {
    auto out = open_artifact(fs::path(spec.out_dir) / "rounds.jsonl", scenario, spec);
    for (const RoundRecord& r : result.rounds) out << round_record_to_json(r).dump() << "\n";
  }
  {
    auto out = open_artifact(fs::path(spec.out_dir) / "final_messages.json", scenario, spec);
    out << profile_to_json(result.final_messages).dump(2) << "\n";
  }
  json summary{{"rounds_used", result.rounds.size()},
               {"converged", result.converged},
               {"final_message_change", result.final_change}};
  {
    auto out = open_artifact(fs::path(spec.out_dir) / "summary.json", scenario, spec);
    out << summary.dump(2) << "\n";
  }
  std::cout << "learn: rounds=" << result.rounds.size() << " converged="
            << (result.converged ? "yes" : "no") << " final_change=" << result.final_change
            << "\n";
  return 0;
}

int cmd_verify(const RunSpec& spec) {
  Scenario scenario = build_scenario(spec);
  const int samples = spec.samples > 0 ? spec.samples : scenario.nash.samples;
  if (spec.samples == 0) throw ConfigError("samples must be positive");

  std::vector<Message> profile;
  if (spec.seed_truthful) {
    profile = truthful_profile(scenario);
  } else if (!spec.profile_path.empty()) {
    profile = profile_from_json(strip_header_and_parse(spec.profile_path));
  } else {
    throw ConfigError("verify needs --profile FILE or --seed-truthful");
  }

  DeviationReport report =
      verify_nash(scenario, profile, samples, scenario.seed, spec.tol, spec.jobs);

  fs::create_directories(spec.out_dir);
  json doc;
  doc["samples_per_agent"] = report.samples_per_agent;
  doc["max_gain"] = report.max_gain;
  doc["infeasible_deviations"] = report.infeasible_count;
  doc["pass"] = report.pass(spec.tol);
  doc["tolerance"] = spec.tol;
  json agents = json::array();
  for (size_t i = 0; i < report.best_per_agent.size(); ++i) {
    const DeviationSample& d = report.best_per_agent[i];
    agents.push_back({{"agent", d.agent},
                      {"base_cost", report.base_costs[i]},
                      {"best_gain", d.infeasible ? json() : json(d.gain)},
                      {"strategy", d.strategy},
                      {"sample", d.sample}});
  }
  doc["agents"] = agents;
  {
    auto out = open_artifact(fs::path(spec.out_dir) / "verify_report.json", scenario, spec);
    out << doc.dump(2) << "\n";
  }
  std::cout << "verify: max_gain=" << report.max_gain << " pass="
            << (report.pass(spec.tol) ? "yes" : "no") << "\n";
  return report.pass(spec.tol) ? 0 : 1;
}

ControllerKind controller_from_string(const std::string& s) {
  if (s == "P" || s == "perfect") return ControllerKind::perfect;
  if (s == "M" || s == "mechanism") return ControllerKind::mechanism;
  if (s == "A" || s == "consensus") return ControllerKind::consensus;
  throw ConfigError("unknown controller '" + s + "' (use P, M or A)");
}

void write_log(const fs::path& dir, const Scenario& scenario, const RunSpec& spec,
               const MpcLog& log) {
  const std::string base = "mpc_" + controller_tag(log.controller);
  if (spec.format == "jsonl") {
    auto out = open_artifact(dir / (base + ".jsonl"), scenario, spec);
    write_mpc_log_jsonl(out, log);
  } else {
    auto out = open_artifact(dir / (base + ".csv"), scenario, spec);
    write_mpc_log_csv(out, log);
  }
}

int cmd_compare(const RunSpec& spec) {
  Scenario scenario = build_scenario(spec);
  const int sim_length = scenario.mpc.sim_length;
  std::vector<MpcLog> logs;
  for (ControllerKind kind :
       {ControllerKind::perfect, ControllerKind::mechanism, ControllerKind::consensus})
    logs.push_back(run_mpc(scenario, kind, sim_length, scenario.seed, spec.jobs));

  fs::create_directories(spec.out_dir);
  const fs::path dir(spec.out_dir);
  for (const MpcLog& log : logs) write_log(dir, scenario, spec, log);

  CompareTables tables = compare_report(logs);
  {
    auto out = open_artifact(dir / "stage_cost.csv", scenario, spec);
    write_csv(out, tables.cost_header, tables.cost_rows);
  }
  {
    auto out = open_artifact(dir / "trajectories.csv", scenario, spec);
    write_csv(out, tables.trajectory_header, tables.trajectory_rows);
  }
  const double cum_p = tables.cumulative_from_10[0];
  const double cum_m = tables.cumulative_from_10[1];
  const double cum_a = tables.cumulative_from_10[2];
  json summary{{"stages", sim_length},
               {"cumulative_from_stage_10", {{"P", cum_p}, {"M", cum_m}, {"A", cum_a}}},
               {"gap_M_vs_P", cum_p != 0.0 ? (cum_m - cum_p) / cum_p : 0.0},
               {"ratio_A_vs_M", cum_m != 0.0 ? cum_a / cum_m : 0.0}};
  {
    auto out = open_artifact(dir / "summary.json", scenario, spec);
    out << summary.dump(2) << "\n";
  }
  for (const std::string& line : tables.summary_lines) std::cout << line << "\n";
  std::cout << "compare: gap(M,P)=" << summary["gap_M_vs_P"].get<double>()
            << " ratio(A,M)=" << summary["ratio_A_vs_M"].get<double>() << "\n";
  return 0;
}

int cmd_simulate(const RunSpec& spec) {
  Scenario scenario = build_scenario(spec);
  const ControllerKind kind = controller_from_string(spec.controller);
  MpcLog log = run_mpc(scenario, kind, scenario.mpc.sim_length, scenario.seed, spec.jobs);
  fs::create_directories(spec.out_dir);
  write_log(fs::path(spec.out_dir), scenario, spec, log);
  std::cout << "simulate: controller=" << controller_tag(kind)
            << " total_cost=" << log.cumulative_cost(0, scenario.mpc.sim_length - 1) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mechmpc: coordinator/agent optimal control simulation platform"};
  app.require_subcommand(1);

  RunSpec spec;
  {
    std::ostringstream os;
    for (int i = 0; i < argc; ++i) os << (i ? " " : "") << argv[i];
    spec.command_line = os.str();
  }

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--scenario", spec.scenario_path,
                    "Scenario JSON path, or 'default' for the built-in building scenario");
    sub->add_option("--out", spec.out_dir, "Output directory");
    sub->add_option("--set", spec.overrides, "Override scenario keys, dotted (a.b.c=value)");
    sub->add_option("--seed", spec.seed, "Run seed (overrides the scenario seed)")
        ->each([&](const std::string&) { spec.seed_given = true; });
    sub->add_option("--format", spec.format, "Log format: csv or jsonl")
        ->check(CLI::IsMember({"csv", "jsonl"}));
    sub->add_option("--jobs", spec.jobs, "Worker threads for independent solves")
        ->check(CLI::PositiveNumber);
  };

  CLI::App* learn = app.add_subcommand("learn", "Replay the game at a fixed initial condition");
  add_common(learn);
  learn->add_option("--rounds", spec.rounds, "Maximum rounds (default from scenario)");

  CLI::App* verify = app.add_subcommand("verify", "Sample unilateral deviations from a profile");
  add_common(verify);
  verify->add_option("--samples", spec.samples, "Deviations per agent (default from scenario)");
  verify->add_option("--profile", spec.profile_path,
                     "Message profile JSON (e.g. final_messages.json from learn)");
  verify->add_flag("--seed-truthful", spec.seed_truthful,
                   "Build the profile from the centralized true-cost solution");
  verify->add_option("--tol", spec.tol, "Largest acceptable cost decrease");

  CLI::App* compare =
      app.add_subcommand("compare", "Run the perfect-information, mechanism and consensus "
                                    "controllers on the same disturbance realization");
  add_common(compare);

  CLI::App* simulate = app.add_subcommand("simulate", "Run one controller");
  add_common(simulate);
  simulate->add_option("--controller", spec.controller, "P, M or A");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (learn->parsed()) return cmd_learn(spec);
    if (verify->parsed()) return cmd_verify(spec);
    if (compare->parsed()) return cmd_compare(spec);
    if (simulate->parsed()) return cmd_simulate(spec);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
