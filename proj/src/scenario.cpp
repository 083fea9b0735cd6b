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
#include "mechmpc/scenario.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "mechmpc/hvac.hpp"

namespace mechmpc {

using nlohmann::json;

std::vector<double> generate_outside_temperature(const DisturbanceSpec& spec, int length,
                                                 std::uint64_t seed) {
  std::vector<double> t_out(length, 0.0);
  Rng rng(seed);
  for (int k = 0; k < length; ++k) {
    const double base =
        spec.mean + spec.amplitude * std::sin(2.0 * M_PI * k / std::max(1, spec.period));
    t_out[k] = base + spec.noise_sigma * rng.normal();
  }
  return t_out;
}

std::vector<Eigen::VectorXd> generate_disturbance(const DisturbanceSpec& spec, int n, int length,
                                                  std::uint64_t seed) {
  std::vector<Eigen::VectorXd> d;
  d.reserve(length);
  switch (spec.kind) {
    case DisturbanceSpec::Kind::none:
      for (int k = 0; k < length; ++k) d.push_back(Eigen::VectorXd::Zero(n));
      break;
    case DisturbanceSpec::Kind::inline_values: {
      if (static_cast<int>(spec.values.size()) < length)
        throw ConfigError("inline disturbance shorter than the requested length");
      for (int k = 0; k < length; ++k) {
        if (spec.values[k].size() != n)
          throw ConfigError("inline disturbance vector has wrong dimension");
        d.push_back(spec.values[k]);
      }
      break;
    }
    case DisturbanceSpec::Kind::hvac_outside: {
      const std::vector<double> t_out = generate_outside_temperature(spec, length, seed);
      for (int k = 0; k < length; ++k)
        d.push_back(spec.gain * t_out[k] * Eigen::VectorXd::Ones(n));
      break;
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// JSON helpers
// ---------------------------------------------------------------------------

namespace {

Eigen::VectorXd vector_from_json(const json& arr, const std::string& key) {
  if (!arr.is_array()) throw ConfigError("expected array for '" + key + "'");
  Eigen::VectorXd v(arr.size());
  for (size_t i = 0; i < arr.size(); ++i) v(i) = arr[i].get<double>();
  return v;
}

Eigen::MatrixXd matrix_from_json(const json& arr, const std::string& key) {
  if (!arr.is_array() || arr.empty() || !arr[0].is_array())
    throw ConfigError("expected row-major matrix (array of arrays) for '" + key + "'");
  const size_t rows = arr.size(), cols = arr[0].size();
  Eigen::MatrixXd m(rows, cols);
  for (size_t r = 0; r < rows; ++r) {
    if (arr[r].size() != cols) throw ConfigError("ragged matrix for '" + key + "'");
    for (size_t c = 0; c < cols; ++c) m(r, c) = arr[r][c].get<double>();
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json arr = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    arr.push_back(row);
  }
  return arr;
}

template <typename T>
T get_or(const json& doc, const std::string& key, T fallback) {
  if (!doc.contains(key)) return fallback;
  return doc.at(key).get<T>();
}

/// Bound arrays may use null / "inf" / "-inf" for unbounded entries.
double bound_entry(const json& v) {
  if (v.is_null()) return kInf;
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf" || s == "+inf") return kInf;
    if (s == "-inf") return -kInf;
    throw ConfigError("unrecognized bound entry '" + s + "'");
  }
  return v.get<double>();
}

ConstraintSet set_from_json(const json& doc, int dim, const std::string& key) {
  if (doc.is_null()) return ConstraintSet::unconstrained(dim);
  if (doc.contains("lower") && doc.contains("upper")) {
    Eigen::VectorXd lo(dim), up(dim);
    for (int j = 0; j < dim; ++j) {
      lo(j) = bound_entry(doc.at("lower").at(j));
      up(j) = bound_entry(doc.at("upper").at(j));
    }
    ConstraintSet s = ConstraintSet::box(lo, up);
    s.validate();
    return s;
  }
  if (doc.contains("G") && doc.contains("g")) {
    ConstraintSet s = ConstraintSet::polytope(matrix_from_json(doc.at("G"), key + ".G"),
                                              vector_from_json(doc.at("g"), key + ".g"));
    s.validate();
    return s;
  }
  throw ConfigError("constraint set '" + key + "' needs lower/upper or G/g");
}

MpcSettings mpc_from_json(const json& doc) {
  MpcSettings mpc;
  if (doc.is_null()) return mpc;
  mpc.horizon = get_or(doc, "horizon", mpc.horizon);
  mpc.sim_length = get_or(doc, "sim_length", mpc.sim_length);
  const std::string pred = get_or<std::string>(doc, "prediction", "exact");
  if (pred == "exact")
    mpc.prediction = MpcSettings::Prediction::exact;
  else if (pred == "persistence")
    mpc.prediction = MpcSettings::Prediction::persistence;
  else
    throw ConfigError("unknown prediction mode '" + pred + "'");
  if (mpc.horizon <= 0) throw ConfigError("mpc.horizon must be positive");
  if (mpc.sim_length <= 0) throw ConfigError("mpc.sim_length must be positive");
  return mpc;
}

LearningSettings learning_from_json(const json& doc) {
  LearningSettings l;
  if (doc.is_null()) return l;
  l.max_rounds = get_or(doc, "max_rounds", l.max_rounds);
  l.convergence_tol = get_or(doc, "convergence_tol", l.convergence_tol);
  if (l.max_rounds <= 0) throw ConfigError("learning.max_rounds must be positive");
  return l;
}

NashSettings nash_from_json(const json& doc) {
  NashSettings n;
  if (doc.is_null()) return n;
  n.samples = get_or(doc, "samples", n.samples);
  n.perturbation_sigma = get_or(doc, "perturbation_sigma", n.perturbation_sigma);
  if (n.samples <= 0) throw ConfigError("nash.samples must be positive");
  return n;
}

SolverSettings solver_from_json(const json& doc) {
  SolverSettings s;
  if (doc.is_null()) return s;
  s.tol = get_or(doc, "tol", s.tol);
  s.max_newton_iter = get_or(doc, "max_newton_iter", s.max_newton_iter);
  if (s.tol <= 0.0) throw ConfigError("solver.tol must be positive");
  return s;
}

Scenario hvac_scenario_from_json(const json& doc) {
  const json& h = doc.at("hvac");
  HvacParams p;
  p.alpha = get_or(h, "alpha", p.alpha);
  p.beta = get_or(h, "beta", p.beta);
  p.gamma = get_or(h, "gamma", p.gamma);
  p.eta = get_or(h, "eta", p.eta);
  p.nu_rooms = get_or(h, "nu", p.nu_rooms);
  p.mu = get_or(h, "mu", p.mu);
  p.u_min = get_or(h, "u_min", p.u_min);
  p.u_max = get_or(h, "u_max", p.u_max);
  p.reference_temp = get_or(h, "reference_temp", p.reference_temp);
  const std::string conv = get_or<std::string>(h, "sign_convention", "stable");
  if (conv == "stable")
    p.convention = SignConvention::stable;
  else if (conv == "printed")
    p.convention = SignConvention::printed;
  else
    throw ConfigError("unknown sign_convention '" + conv + "'");
  if (!h.contains("rooms")) throw ConfigError("hvac.rooms is required");
  p.rooms.clear();
  for (const auto& r : h.at("rooms"))
    p.rooms.push_back({r.at("desired_temp").get<double>(), r.at("comfort_weight").get<double>(),
                       r.at("energy_curvature").get<double>()});
  p.x0 = h.contains("x0") ? vector_from_json(h.at("x0"), "hvac.x0")
                          : Eigen::VectorXd::Constant(4, 20.0);
  if (h.contains("outside")) {
    const json& o = h.at("outside");
    p.outside_mean = get_or(o, "mean", p.outside_mean);
    p.outside_amplitude = get_or(o, "amplitude", p.outside_amplitude);
    p.outside_period = get_or(o, "period", p.outside_period);
    p.outside_noise_sigma = get_or(o, "noise_sigma", p.outside_noise_sigma);
  }

  const std::uint64_t seed = get_or<std::uint64_t>(doc, "seed", 42);
  Scenario s = hvac_scenario(p, mpc_from_json(doc.contains("mpc") ? doc.at("mpc") : json()),
                             learning_from_json(doc.contains("learning") ? doc.at("learning")
                                                                         : json()),
                             nash_from_json(doc.contains("nash") ? doc.at("nash") : json()),
                             solver_from_json(doc.contains("solver") ? doc.at("solver") : json()),
                             seed, get_or<std::string>(doc, "name", "hvac"));
  s.printed_weight_update = get_or(doc, "printed_weight_update", false);
  s.source = doc;
  return s;
}

Scenario linear_scenario_from_json(const json& doc) {
  Scenario s;
  s.name = get_or<std::string>(doc, "name", "linear");
  s.seed = get_or<std::uint64_t>(doc, "seed", 0);
  s.mpc = mpc_from_json(doc.contains("mpc") ? doc.at("mpc") : json());
  s.learning = learning_from_json(doc.contains("learning") ? doc.at("learning") : json());
  s.nash = nash_from_json(doc.contains("nash") ? doc.at("nash") : json());
  s.solver = solver_from_json(doc.contains("solver") ? doc.at("solver") : json());

  const json& m = doc.at("model");
  SystemConfig cfg;
  cfg.A = matrix_from_json(m.at("A"), "model.A");
  cfg.B = matrix_from_json(m.at("B"), "model.B");
  for (const auto& pr : m.at("partition"))
    cfg.partition.push_back({pr.at(0).get<int>(), pr.at(1).get<int>()});
  cfg.horizon = s.mpc.horizon;
  cfg.x0 = vector_from_json(m.at("x0"), "model.x0");

  DisturbanceSpec dist;
  if (m.contains("disturbance") && !m.at("disturbance").is_null()) {
    const json& dj = m.at("disturbance");
    const std::string kind = dj.at("type").get<std::string>();
    if (kind == "none") {
      dist.kind = DisturbanceSpec::Kind::none;
    } else if (kind == "inline") {
      dist.kind = DisturbanceSpec::Kind::inline_values;
      for (const auto& row : dj.at("values"))
        dist.values.push_back(vector_from_json(row, "disturbance.values"));
    } else if (kind == "sinusoid") {
      // Named generator: seeded sinusoidal profile scaled into every state row.
      dist.kind = DisturbanceSpec::Kind::hvac_outside;
      dist.mean = get_or(dj, "mean", 0.0);
      dist.amplitude = get_or(dj, "amplitude", 1.0);
      dist.period = get_or(dj, "period", 48);
      dist.noise_sigma = get_or(dj, "noise_sigma", 0.0);
      dist.gain = get_or(dj, "gain", 1.0);
    } else {
      throw ConfigError("unknown disturbance type '" + kind + "' for a linear scenario");
    }
  }
  s.disturbance = dist;
  cfg.disturbance = generate_disturbance(dist, cfg.A.rows(), cfg.horizon, s.seed);
  s.model = std::make_shared<SystemModel>(build_system(cfg));

  const json& agents = doc.at("agents");
  if (agents.size() != s.model->partition.size())
    throw ConfigError("agents array length disagrees with the partition");
  for (size_t i = 0; i < agents.size(); ++i) {
    const json& a = agents[i];
    const int ni = s.model->partition[i].n, mi = s.model->partition[i].m;
    const Eigen::VectorXd qx = vector_from_json(a.at("state_weights"), "state_weights");
    const Eigen::VectorXd xt = a.contains("state_target")
                                   ? vector_from_json(a.at("state_target"), "state_target")
                                   : Eigen::VectorXd::Zero(ni);
    const Eigen::VectorXd ru = vector_from_json(a.at("input_weights"), "input_weights");
    const Eigen::VectorXd ut = a.contains("input_target")
                                   ? vector_from_json(a.at("input_target"), "input_target")
                                   : Eigen::VectorXd::Zero(mi);
    s.costs.push_back(quadratic_cost(qx, xt, ru, ut, "agent" + std::to_string(i)));
    s.state_sets.push_back(set_from_json(a.contains("state_box") ? a.at("state_box") : json(), ni,
                                         "state_box"));
    s.input_sets.push_back(set_from_json(a.contains("input_box") ? a.at("input_box") : json(), mi,
                                         "input_box"));
  }

  const json& sur = doc.contains("surrogate") ? doc.at("surrogate") : json();
  const std::string fam = sur.is_null() ? "shift" : get_or<std::string>(sur, "type", "shift");
  if (fam == "shift") {
    s.family = shift_surrogate();
    s.consensus_family = s.family;
  } else if (fam == "scaled") {
    const double ref = sur.at("reference").get<double>();
    s.family = scaled_surrogate(ref);
    s.consensus_family = s.family;
  } else {
    throw ConfigError("unknown surrogate type '" + fam + "'");
  }
  s.source = doc;
  return s;
}

}  // namespace

Scenario scenario_from_json(const json& doc) {
  const std::string kind = get_or<std::string>(doc, "kind", "");
  if (kind == "hvac") return hvac_scenario_from_json(doc);
  if (kind == "linear") return linear_scenario_from_json(doc);
  throw ConfigError("scenario kind must be 'hvac' or 'linear'");
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError("scenario '" + path + "' is not valid JSON: " + e.what());
  }
  return scenario_from_json(doc);
}

json apply_overrides(json doc, const std::vector<std::string>& assignments) {
  for (const std::string& assignment : assignments) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override '" + assignment + "' is not of the form key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;  // plain string
    }
    json* node = &doc;
    std::istringstream keys(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(keys, part, '.')) parts.push_back(part);
    if (parts.empty()) throw ConfigError("empty override key");
    for (size_t i = 0; i + 1 < parts.size(); ++i) node = &((*node)[parts[i]]);
    (*node)[parts.back()] = value;
  }
  return doc;
}

std::string Scenario::hash() const { return fnv1a_hex(source.dump()); }

double Scenario::true_cost(int agent, const Trajectory& traj) const {
  const AgentCost& c = costs[agent];
  double total = c.terminal(traj.states.row(model->horizon).transpose());
  for (int k = 0; k < model->horizon; ++k)
    total += c.stage(traj.states.row(k).transpose(), traj.inputs.row(k).transpose());
  return total;
}

json model_to_json(const SystemModel& model) {
  json doc;
  doc["A"] = matrix_to_json(model.A);
  doc["B"] = matrix_to_json(model.B);
  json part = json::array();
  for (const auto& p : model.partition) part.push_back({p.n, p.m});
  doc["partition"] = part;
  doc["horizon"] = model.horizon;
  doc["x0"] = vector_to_json(model.x0);
  if (!model.disturbance.empty()) {
    json d = json::array();
    for (const auto& dk : model.disturbance) d.push_back(vector_to_json(dk));
    doc["disturbance"] = d;
  }
  return doc;
}

SystemModel model_from_json(const json& doc) {
  SystemConfig cfg;
  cfg.A = matrix_from_json(doc.at("A"), "A");
  cfg.B = matrix_from_json(doc.at("B"), "B");
  for (const auto& pr : doc.at("partition"))
    cfg.partition.push_back({pr.at(0).get<int>(), pr.at(1).get<int>()});
  cfg.horizon = doc.at("horizon").get<int>();
  cfg.x0 = vector_from_json(doc.at("x0"), "x0");
  if (doc.contains("disturbance"))
    for (const auto& dk : doc.at("disturbance"))
      cfg.disturbance.push_back(vector_from_json(dk, "disturbance"));
  return build_system(cfg);
}

Principal make_principal(const Scenario& scenario, PrincipalOptions options) {
  options.solver = scenario.solver;
  return Principal(scenario.model, scenario.state_sets, scenario.input_sets, scenario.family,
                   options);
}

std::vector<Agent> make_agents(const Scenario& scenario) {
  std::vector<Agent> agents;
  const SystemModel& model = *scenario.model;
  for (int i = 0; i < model.num_agents(); ++i) {
    std::vector<Eigen::VectorXd> local_d;
    for (int k = 0; k < static_cast<int>(model.disturbance.size()); ++k)
      local_d.push_back(model.local_disturbance_at(i, k));
    agents.emplace_back(i, scenario.costs[i], Eigen::MatrixXd(model.state_block(i, i)),
                        Eigen::MatrixXd(model.input_block(i)), scenario.state_sets[i],
                        scenario.input_sets[i], model.horizon, model.state_slice(model.x0, i),
                        std::move(local_d));
  }
  return agents;
}

}  // namespace mechmpc
