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
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mechmpc/hvac.hpp"
#include "mechmpc/mechanism.hpp"
#include "test_support.hpp"

using namespace mechmpc;
using namespace mechmpc::testing;

namespace {

// Two coupled scalar agents, inputs boxed, states free.
Principal two_agent_principal(double coupling, double x0a = 0.0, double x0b = 0.0, int T = 3) {
  SystemConfig cfg;
  cfg.A = mat(2, 2, {0.8, coupling, coupling, 0.8});
  cfg.B = Eigen::MatrixXd::Identity(2, 2);
  cfg.partition = {{1, 1}, {1, 1}};
  cfg.horizon = T;
  cfg.x0 = vec({x0a, x0b});
  auto model = std::make_shared<SystemModel>(build_system(cfg));
  std::vector<ConstraintSet> xs = {ConstraintSet::unconstrained(1),
                                   ConstraintSet::unconstrained(1)};
  std::vector<ConstraintSet> us = {ConstraintSet::box(vec({-4.0}), vec({4.0})),
                                   ConstraintSet::box(vec({-4.0}), vec({4.0}))};
  return Principal(model, xs, us, scaled_surrogate(2.0));
}

bool identical_solutions(const OcpSolution& a, const OcpSolution& b) {
  for (size_t i = 0; i < a.trajectories.size(); ++i) {
    if (a.trajectories[i].states != b.trajectories[i].states) return false;
    if (a.trajectories[i].inputs != b.trajectories[i].inputs) return false;
    if (a.dyn_multipliers[i] != b.dyn_multipliers[i]) return false;
  }
  return a.objective_value == b.objective_value;
}

}  // namespace

TEST_CASE("outcome ignores the sensitivity and reference reports bit-for-bit") {
  Principal principal = two_agent_principal(0.2, 1.0, -0.5);
  const SystemModel& model = principal.model();
  std::vector<Message> msgs = {Message::bootstrap(model.horizon, 1, 1),
                               Message::bootstrap(model.horizon, 1, 1)};
  OcpSolution base = principal.outcome(msgs);
  REQUIRE(base.status == SolveStatus::optimal);

  std::vector<Message> altered = msgs;
  altered[0].state_ref.setConstant(7.5);
  altered[0].sensitivity.setConstant(-3.25);
  altered[1].state_ref.setConstant(-2.0);
  OcpSolution changed = principal.outcome(altered);
  CHECK(identical_solutions(base, changed));
}

TEST_CASE("origin is returned when the surrogate is centered there") {
  Principal principal = two_agent_principal(0.2, 0.0, 0.0);
  const int T = principal.model().horizon;
  std::vector<Message> msgs = {Message::bootstrap(T, 1, 1), Message::bootstrap(T, 1, 1)};
  for (auto& m : msgs) m.state_weights.setZero();  // state terms centered at the origin
  OcpSolution sol = principal.outcome(msgs);
  REQUIRE(sol.status == SolveStatus::optimal);
  CHECK(sol.trajectories[0].states.cwiseAbs().maxCoeff() < 1e-7);
  CHECK(sol.trajectories[1].inputs.cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("bound reports pin an agent's trajectory through the outcome") {
  const double coupling = 0.15, x0a = 0.5, x0b = 0.0;
  Principal principal = two_agent_principal(coupling, x0a, x0b);
  const SystemModel& model = principal.model();
  const int T = model.horizon;
  std::vector<Message> msgs = {Message::bootstrap(T, 1, 1), Message::bootstrap(T, 1, 1)};

  // The neighbor's reported trajectory must start at its true initial state;
  // from stage 1 on it has freedom. The pinned target follows the agent's
  // local dynamics under the reference built from that report.
  msgs[1].state_ref.setZero();
  msgs[1].state_ref(0, 0) = x0b;
  Eigen::MatrixXd xs(T + 1, 1), us(T, 1);
  xs(0, 0) = x0a;
  for (int k = 0; k < T; ++k) {
    us(k, 0) = 0.1;
    xs(k + 1, 0) = 0.8 * xs(k, 0) + us(k, 0) + coupling * msgs[1].state_ref(k, 0);
  }
  msgs[0].bounds.state_lower = xs;
  msgs[0].bounds.state_upper = xs;
  msgs[0].bounds.input_lower = us;
  msgs[0].bounds.input_upper = us;

  OcpSolution sol = principal.outcome(msgs);
  REQUIRE(sol.status == SolveStatus::optimal);
  CHECK((sol.trajectories[0].states - xs).cwiseAbs().maxCoeff() < 1e-7);
  CHECK((sol.trajectories[0].inputs - us).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("coupling references") {
  SUBCASE("no neighbors gives zeros and own message is irrelevant") {
    Principal principal = two_agent_principal(0.0);
    const int T = principal.model().horizon;
    std::vector<Message> msgs = {Message::bootstrap(T, 1, 1), Message::bootstrap(T, 1, 1)};
    msgs[1].state_ref.setConstant(2.0);
    CHECK(principal.coupling_reference(msgs, 0).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("single coupling term") {
    SystemConfig cfg;
    cfg.A = mat(2, 2, {1.0, 0.3, 0.0, 1.0});
    cfg.B = Eigen::MatrixXd::Identity(2, 2);
    cfg.partition = {{1, 1}, {1, 1}};
    cfg.horizon = 2;
    cfg.x0 = vec({0.0, 0.0});
    auto model = std::make_shared<SystemModel>(build_system(cfg));
    Principal principal(model,
                        {ConstraintSet::unconstrained(1), ConstraintSet::unconstrained(1)},
                        {ConstraintSet::unconstrained(1), ConstraintSet::unconstrained(1)},
                        scaled_surrogate(2.0));
    std::vector<Message> msgs = {Message::bootstrap(2, 1, 1), Message::bootstrap(2, 1, 1)};
    msgs[1].state_ref.setConstant(2.0);
    const Eigen::MatrixXd c0 = principal.coupling_reference(msgs, 0);
    CHECK(c0(0, 0) == doctest::Approx(0.6));
    CHECK(c0(1, 0) == doctest::Approx(0.6));
    // Agent 0's own message never enters its reference.
    std::vector<Message> changed = msgs;
    changed[0].state_ref.setConstant(-9.0);
    changed[0].state_weights.setConstant(3.0);
    CHECK(principal.coupling_reference(changed, 0) == c0);
  }
}

TEST_CASE("externality prices aggregate neighbor sensitivities") {
  SystemConfig cfg;
  cfg.A = mat(2, 2, {1.0, 0.0, 0.5, 1.0});  // agent 0 influences agent 1
  cfg.B = Eigen::MatrixXd::Identity(2, 2);
  cfg.partition = {{1, 1}, {1, 1}};
  cfg.horizon = 2;
  cfg.x0 = vec({0.0, 0.0});
  auto model = std::make_shared<SystemModel>(build_system(cfg));
  Principal principal(model, {ConstraintSet::unconstrained(1), ConstraintSet::unconstrained(1)},
                      {ConstraintSet::unconstrained(1), ConstraintSet::unconstrained(1)},
                      scaled_surrogate(2.0));
  std::vector<Message> msgs = {Message::bootstrap(2, 1, 1), Message::bootstrap(2, 1, 1)};
  msgs[1].sensitivity.setConstant(1.0);
  const Eigen::MatrixXd prices0 = principal.externality_prices(msgs, 0);
  CHECK(prices0(0, 0) == doctest::Approx(0.5));
  CHECK(prices0(1, 0) == doctest::Approx(0.5));
  // No one depends on agent 1.
  CHECK(principal.externality_prices(msgs, 1).cwiseAbs().maxCoeff() == 0.0);
  // Own sensitivity never enters.
  std::vector<Message> changed = msgs;
  changed[0].sensitivity.setConstant(123.0);
  CHECK(principal.externality_prices(changed, 0) == prices0);
}

TEST_CASE("exclusion trajectory is independent of the excluded agent's message") {
  Principal principal = two_agent_principal(0.2, 1.0, -0.5);
  const int T = principal.model().horizon;
  std::vector<Message> msgs = {Message::bootstrap(T, 1, 1), Message::bootstrap(T, 1, 1)};
  auto base = principal.exclusion_trajectory(msgs, 0);
  REQUIRE(base.has_value());

  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Message> changed = msgs;
    changed[0].state_weights.setConstant(rng.uniform(-3, 3));
    changed[0].input_weights.setConstant(rng.uniform(0.2, 3.0));
    changed[0].sensitivity.setConstant(rng.normal());
    changed[0].state_ref.setConstant(rng.normal());
    changed[0].bounds.state_lower.setConstant(-20.0 - trial);
    changed[0].bounds.state_upper.setConstant(20.0 + trial);
    auto excl = principal.exclusion_trajectory(changed, 0);
    REQUIRE(excl.has_value());
    CHECK(*excl == *base);  // bit-identical
  }
}

TEST_CASE("reference-local exclusion mode solves the subsystem against the reports") {
  Scenario scenario = default_scenario();
  PrincipalOptions options;
  options.exclusion_mode = ExclusionMode::reference_local;
  Principal principal = make_principal(scenario, options);
  const int T = scenario.model->horizon;
  std::vector<Message> msgs;
  for (int i = 0; i < 4; ++i) msgs.push_back(Message::bootstrap(T, 1, 1));
  msgs[1].state_ref.setConstant(20.0);
  msgs[2].state_ref.setConstant(21.0);

  auto excl = principal.exclusion_trajectory(msgs, 0);
  REQUIRE(excl.has_value());
  CHECK(excl->rows() == T + 1);
  // Still independent of the excluded agent's own message.
  std::vector<Message> changed = msgs;
  changed[0].state_weights.setConstant(4.0);
  changed[0].state_ref.setConstant(-3.0);
  auto excl2 = principal.exclusion_trajectory(changed, 0);
  REQUIRE(excl2.has_value());
  CHECK(*excl2 == *excl);
  // But it does react to the neighbors' reported trajectories.
  std::vector<Message> moved = msgs;
  moved[1].state_ref.setConstant(5.0);
  auto excl3 = principal.exclusion_trajectory(moved, 0);
  REQUIRE(excl3.has_value());
  CHECK((*excl3 - *excl).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("exclusion trajectory agrees with an independently built re-solve") {
  Scenario scenario = default_scenario();
  Principal principal = make_principal(scenario);
  const SystemModel& model = *scenario.model;
  std::vector<Message> msgs;
  for (int i = 0; i < model.num_agents(); ++i) msgs.push_back(Message::bootstrap(model.horizon, 1, 1));
  auto excl = principal.exclusion_trajectory(msgs, 0);
  REQUIRE(excl.has_value());

  OcpProblem p = OcpProblem::for_model(scenario.model, scenario.state_sets, scenario.input_sets);
  for (int i = 1; i < model.num_agents(); ++i) {
    p.objectives[i] = SurrogateObjective{scenario.family, msgs[i].state_weights,
                                         msgs[i].input_weights};
    p.extra_bounds[i] = msgs[i].bounds;
  }
  p.objectives[0] = ZeroObjective{scenario.solver.zero_objective_eps};
  OcpSolution re = solve_ocp(p, scenario.solver);
  REQUIRE(re.status == SolveStatus::optimal);
  CHECK((re.trajectories[0].states - *excl).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("fees: matched reports cost nothing, externality sums price times gap") {
  Principal principal = two_agent_principal(0.2, 1.0, -0.5, 4);
  const int T = 4;
  std::vector<Message> msgs = {Message::bootstrap(T, 1, 1), Message::bootstrap(T, 1, 1)};
  OcpSolution z = principal.outcome(msgs);
  REQUIRE(z.status == SolveStatus::optimal);

  SUBCASE("reports equal to the outcome kill both mismatch terms") {
    msgs[0].state_ref = z.trajectories[0].states;
    msgs[0].sensitivity = z.dyn_multipliers[0];
    OcpSolution z2 = principal.outcome(msgs);  // unchanged by those components
    const Eigen::MatrixXd x_hat = Eigen::MatrixXd::Zero(T + 1, 1);
    const Eigen::MatrixXd prices = Eigen::MatrixXd::Zero(T, 1);
    FeeBreakdown fee = principal.fee(msgs, z2, 0, x_hat, prices);
    CHECK(fee.x_mismatch == 0.0);
    CHECK(fee.lambda_mismatch == 0.0);
    CHECK(fee.externality == 0.0);
    CHECK(fee.total == 0.0);
  }

  SUBCASE("hand-computed externality: 4 stages of price one times gap one half") {
    Eigen::MatrixXd x_hat = z.trajectories[0].states;
    for (int k = 0; k <= T; ++k) x_hat(k, 0) -= 0.5;
    const Eigen::MatrixXd prices = Eigen::MatrixXd::Ones(T, 1);
    msgs[0].state_ref = z.trajectories[0].states;
    msgs[0].sensitivity = z.dyn_multipliers[0];
    FeeBreakdown fee = principal.fee(msgs, z, 0, x_hat, prices);
    CHECK(fee.externality == doctest::Approx(2.0));
    CHECK(fee.total == doctest::Approx(2.0));
    CHECK(fee.total == fee.externality + fee.x_mismatch + fee.lambda_mismatch);
  }
}

TEST_CASE("message validation rejects malformed reports") {
  Principal principal = two_agent_principal(0.1);
  const int T = principal.model().horizon;
  std::vector<Message> msgs = {Message::bootstrap(T, 1, 1), Message::bootstrap(T, 1, 1)};
  CHECK_NOTHROW(principal.validate_profile(msgs));

  SUBCASE("NaN weight") {
    msgs[0].state_weights(1, 0) = std::nan("");
    CHECK_THROWS_AS(principal.validate_profile(msgs), ConfigError);
  }
  SUBCASE("infinite reference") {
    msgs[0].state_ref(0, 0) = kInf;
    CHECK_THROWS_AS(principal.validate_profile(msgs), ConfigError);
  }
  SUBCASE("zero input weight is degenerate for the scaled family") {
    msgs[1].input_weights(0, 0) = 0.0;
    CHECK_THROWS_AS(principal.validate_profile(msgs), ConfigError);
  }
  SUBCASE("crossed bounds") {
    msgs[0].bounds.state_lower(1, 0) = 1.0;
    msgs[0].bounds.state_upper(1, 0) = -1.0;
    CHECK_THROWS_AS(principal.validate_profile(msgs), ConfigError);
  }
  SUBCASE("wrong shape") {
    msgs[0].input_weights = Eigen::MatrixXd::Ones(T + 2, 1);
    CHECK_THROWS_AS(principal.validate_profile(msgs), ConfigError);
  }
}

TEST_CASE("infeasible profile reports in-band and the fallback input is in-set") {
  Principal principal = two_agent_principal(0.15, 0.5, 0.0);
  const int T = principal.model().horizon;
  std::vector<Message> msgs = {Message::bootstrap(T, 1, 1), Message::bootstrap(T, 1, 1)};
  // Pin agent 0 to an operational range the input box cannot reach.
  msgs[0].bounds.input_lower.setConstant(9.0);
  msgs[0].bounds.input_upper.setConstant(9.0);
  OcpSolution sol = principal.outcome(msgs);
  CHECK(sol.status == SolveStatus::infeasible);
  const Eigen::VectorXd u = principal.fallback_input(msgs);
  CHECK(u.cwiseAbs().maxCoeff() <= 4.0 + 1e-9);
}
