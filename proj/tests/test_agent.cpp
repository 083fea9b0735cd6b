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

#include "mechmpc/agent.hpp"
#include "mechmpc/hvac.hpp"
#include "mechmpc/mechanism.hpp"
#include "test_support.hpp"

using namespace mechmpc;
using namespace mechmpc::testing;

namespace {

AgentCost scalar_quadratic() {
  return quadratic_cost(vec({2.0}), vec({0.0}), vec({2.0}), vec({0.0}));  // x^2 + u^2 terms
}

Agent scalar_agent(int T, double x0, double a = 1.0, double b = 1.0) {
  return Agent(0, scalar_quadratic(), mat(1, 1, {a}), mat(1, 1, {b}),
               ConstraintSet::unconstrained(1), ConstraintSet::unconstrained(1), T, vec({x0}));
}

}  // namespace

TEST_CASE("local solve at the origin stays at the origin") {
  Agent agent = scalar_agent(3, 0.0);
  OcpSolution sol = agent.solve_local();
  CHECK(sol.trajectories[0].states.cwiseAbs().maxCoeff() < 1e-8);
  CHECK(sol.trajectories[0].inputs.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("local solve prices states through the externality term") {
  // T = 2, x0 = 1, prices 1 at both stages. Stationarity gives x1 = 0.2,
  // u = (-0.8, -0.1), multipliers (1.6, 0.2), objective 2.9 (exclusion at 0).
  Agent agent = scalar_agent(2, 1.0);
  agent.receive_feedback(Eigen::MatrixXd::Zero(2, 1), Eigen::MatrixXd::Ones(2, 1),
                         Eigen::MatrixXd::Zero(3, 1));
  OcpSolution sol = agent.solve_local();
  CHECK(sol.trajectories[0].states(1, 0) == doctest::Approx(0.2).epsilon(1e-7));
  CHECK(sol.trajectories[0].inputs(0, 0) == doctest::Approx(-0.8).epsilon(1e-7));
  CHECK(sol.trajectories[0].inputs(1, 0) == doctest::Approx(-0.1).epsilon(1e-7));
  CHECK(sol.dyn_multipliers[0](0, 0) == doctest::Approx(1.6).epsilon(1e-6));
  CHECK(sol.dyn_multipliers[0](1, 0) == doctest::Approx(0.2).epsilon(1e-6));
  CHECK(sol.objective_value == doctest::Approx(2.9).epsilon(1e-7));

  SUBCASE("with one stage the priced term is a constant") {
    Agent one = scalar_agent(1, 1.0);
    one.receive_feedback(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Ones(1, 1),
                         Eigen::MatrixXd::Zero(2, 1));
    OcpSolution s1 = one.solve_local();
    // The price multiplies x_0 only, so the optimizer is the unpriced one.
    CHECK(s1.trajectories[0].inputs(0, 0) == doctest::Approx(-0.5).epsilon(1e-7));
    CHECK(s1.objective_value == doctest::Approx(1.5 + 1.0).epsilon(1e-7));
  }

  SUBCASE("shifting the exclusion reference moves the value, not the argmin") {
    Agent shifted = scalar_agent(2, 1.0);
    Eigen::MatrixXd x_hat = Eigen::MatrixXd::Constant(3, 1, 0.7);
    shifted.receive_feedback(Eigen::MatrixXd::Zero(2, 1), Eigen::MatrixXd::Ones(2, 1), x_hat);
    OcpSolution s2 = shifted.solve_local();
    CHECK((s2.trajectories[0].inputs - sol.trajectories[0].inputs).cwiseAbs().maxCoeff() < 1e-8);
    // Two priced stages, each shifted by 0.7, enter as a negative constant.
    CHECK(sol.objective_value - s2.objective_value == doctest::Approx(1.4).epsilon(1e-9));
  }
}

TEST_CASE("local infeasibility is reported with a violation summary") {
  Agent agent(0, scalar_quadratic(), mat(1, 1, {1.0}), mat(1, 1, {1.0}),
              ConstraintSet::box(vec({-0.1}), vec({0.1})), ConstraintSet::box(vec({-0.1}),
                                                                              vec({0.1})),
              2, vec({5.0}));  // x0 far outside the state box
  CHECK_THROWS_AS(agent.solve_local(), InfeasibleError);
}

TEST_CASE("gradient matching with the shift family negates the states for x^2 costs") {
  Agent agent = scalar_agent(3, 1.0);
  OcpSolution sol = agent.solve_local();
  Message msg = agent.gradient_matching_message(sol, shift_surrogate());
  // f'(s; theta) = s - theta must equal 2s, so theta = -s.
  CHECK((msg.state_weights + sol.trajectories[0].states).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((msg.input_weights + sol.trajectories[0].inputs).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(msg.state_ref == sol.trajectories[0].states);
  CHECK(msg.sensitivity == sol.dyn_multipliers[0]);
  CHECK(!std::isfinite(msg.bounds.state_lower(1, 0)));
  CHECK(!std::isfinite(msg.bounds.input_upper(0, 0)));
}

TEST_CASE("gradient matching reproduces the room weight formulas") {
  const RoomParams room{21.0, 0.6, 0.3};
  const double t_ref = 21.5;
  Agent agent(0, hvac_cost(room), mat(1, 1, {0.9}), mat(1, 1, {0.2}),
              ConstraintSet::unconstrained(1), ConstraintSet::box(vec({-5.0}), vec({5.0})), 4,
              vec({20.0}));
  OcpSolution sol = agent.solve_local();
  Message msg = agent.gradient_matching_message(sol, hvac_surrogate(t_ref));

  const double lam = room.comfort_weight, gc = room.energy_curvature;
  for (int k = 0; k <= 4; ++k) {
    const double temp = sol.trajectories[0].states(k, 0);
    const double expected = ((1.0 - lam) * temp + lam * room.desired_temp) / t_ref;
    CHECK(msg.state_weights(k, 0) == doctest::Approx(expected).epsilon(1e-10));
  }
  for (int k = 0; k < 4; ++k) {
    const double u = sol.trajectories[0].inputs(k, 0);
    const double expected = std::sqrt((1.0 - lam) * gc * gc * std::exp((gc * u) * (gc * u)));
    CHECK(msg.input_weights(k, 0) == doctest::Approx(expected).epsilon(1e-8));
  }

  SUBCASE("surrogate gradient equals the true gradient along the solution") {
    SurrogateFamily family = hvac_surrogate(t_ref);
    for (int k = 0; k < 4; ++k) {
      const Eigen::VectorXd x = sol.trajectories[0].states.row(k).transpose();
      const Eigen::VectorXd u = sol.trajectories[0].inputs.row(k).transpose();
      const double sg = family.state_deriv(x(0), msg.state_weights(k, 0));
      const double tg = agent.cost().stage_grad_x(x, u)(0);
      CHECK(sg == doctest::Approx(tg).epsilon(1e-10));
      const double sgu = family.input_deriv(u(0), msg.input_weights(k, 0));
      const double tgu = agent.cost().stage_grad_u(x, u)(0);
      CHECK(sgu == doctest::Approx(tgu).epsilon(1e-10));
    }
  }

  SUBCASE("printed-variant weights differ exactly by the missing comfort factor") {
    const Eigen::MatrixXd printed =
        hvac_printed_state_weights(room, t_ref, sol.trajectories[0].states);
    for (int k = 0; k <= 4; ++k) {
      const double expected =
          ((1.0 - lam) * sol.trajectories[0].states(k, 0) + room.desired_temp) / t_ref;
      CHECK(printed(k, 0) == doctest::Approx(expected).epsilon(1e-12));
      CHECK(printed(k, 0) - msg.state_weights(k, 0) ==
            doctest::Approx((1.0 - lam) * room.desired_temp / t_ref).epsilon(1e-9));
    }
  }
}

TEST_CASE("input weight at a zero input comes from the curvature") {
  const RoomParams room{21.0, 0.5, 0.3};
  // Desired temperature equals the uncontrolled equilibrium so the optimal
  // input is exactly zero: A = 1 (integrator), d = 0, x0 = desired.
  Agent agent(0, hvac_cost(room), mat(1, 1, {1.0}), mat(1, 1, {0.2}),
              ConstraintSet::unconstrained(1), ConstraintSet::box(vec({-5.0}), vec({5.0})), 3,
              vec({21.0}));
  OcpSolution sol = agent.solve_local();
  REQUIRE(sol.trajectories[0].inputs.cwiseAbs().maxCoeff() < 1e-9);
  Message msg = agent.gradient_matching_message(sol, hvac_surrogate(21.5));
  const double expected = std::sqrt((1.0 - room.comfort_weight) * 0.3 * 0.3);
  for (int k = 0; k < 3; ++k)
    CHECK(msg.input_weights(k, 0) == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("pinned messages") {
  SUBCASE("pin to the local optimum and the outcome returns it") {
    const double coupling = 0.15, x0a = 0.5, x0b = -0.25;
    SystemConfig cfg;
    cfg.A = mat(2, 2, {0.8, coupling, coupling, 0.8});
    cfg.B = Eigen::MatrixXd::Identity(2, 2);
    cfg.partition = {{1, 1}, {1, 1}};
    cfg.horizon = 3;
    cfg.x0 = vec({x0a, x0b});
    auto model = std::make_shared<SystemModel>(build_system(cfg));
    std::vector<ConstraintSet> xs = {ConstraintSet::unconstrained(1),
                                     ConstraintSet::unconstrained(1)};
    std::vector<ConstraintSet> us = {ConstraintSet::box(vec({-4.0}), vec({4.0})),
                                     ConstraintSet::box(vec({-4.0}), vec({4.0}))};
    Principal principal(model, xs, us, scaled_surrogate(2.0));

    std::vector<Message> msgs = {Message::bootstrap(3, 1, 1), Message::bootstrap(3, 1, 1)};
    msgs[1].state_ref.setZero();
    msgs[1].state_ref(0, 0) = x0b;  // truthful at stage zero

    Agent agent(0, scalar_quadratic(), mat(1, 1, {0.8}), mat(1, 1, {1.0}), xs[0], us[0], 3,
                vec({x0a}));
    agent.receive_feedback(principal.coupling_reference(msgs, 0), Eigen::MatrixXd::Zero(3, 1),
                           Eigen::MatrixXd::Zero(4, 1));
    OcpSolution local = agent.solve_local();
    Message pinned =
        agent.pinned_message(local.trajectories[0].states, local.trajectories[0].inputs);
    msgs[0] = pinned;
    OcpSolution out = principal.outcome(msgs);
    REQUIRE(out.status == SolveStatus::optimal);
    CHECK((out.trajectories[0].states - local.trajectories[0].states).cwiseAbs().maxCoeff() <
          1e-6);
    CHECK((out.trajectories[0].inputs - local.trajectories[0].inputs).cwiseAbs().maxCoeff() <
          1e-6);
  }

  SUBCASE("pin outside the state set is rejected before submission") {
    Agent agent(0, scalar_quadratic(), mat(1, 1, {1.0}), mat(1, 1, {1.0}),
                ConstraintSet::box(vec({-1.0}), vec({1.0})),
                ConstraintSet::box(vec({-4.0}), vec({4.0})), 2, vec({0.0}));
    Eigen::MatrixXd target_x(3, 1), target_u(2, 1);
    target_u << 2.0, 0.0;
    target_x << 0.0, 2.0, 2.0;  // dynamics-consistent but leaves the box
    CHECK_THROWS_AS(agent.pinned_message(target_x, target_u), InfeasibleError);
  }

  SUBCASE("dynamics-inconsistent pin is rejected") {
    Agent agent = scalar_agent(2, 0.0);
    Eigen::MatrixXd target_x = Eigen::MatrixXd::Zero(3, 1), target_u = Eigen::MatrixXd::Zero(2, 1);
    target_x(1, 0) = 1.0;  // cannot follow from u = 0
    CHECK_THROWS_AS(agent.pinned_message(target_x, target_u), InfeasibleError);
  }

  SUBCASE("pin the origin and the outcome holds the origin for that agent") {
    Agent agent = scalar_agent(3, 0.0);
    Message pinned =
        agent.pinned_message(Eigen::MatrixXd::Zero(4, 1), Eigen::MatrixXd::Zero(3, 1));
    SystemConfig cfg;
    cfg.A = Eigen::MatrixXd::Identity(2, 2);
    cfg.B = Eigen::MatrixXd::Identity(2, 2);
    cfg.partition = {{1, 1}, {1, 1}};
    cfg.horizon = 3;
    cfg.x0 = vec({0.0, 0.3});
    auto model = std::make_shared<SystemModel>(build_system(cfg));
    Principal principal(model,
                        {ConstraintSet::unconstrained(1), ConstraintSet::unconstrained(1)},
                        {ConstraintSet::unconstrained(1), ConstraintSet::unconstrained(1)},
                        shift_surrogate());
    std::vector<Message> msgs = {pinned, Message::bootstrap(3, 1, 1)};
    OcpSolution out = principal.outcome(msgs);
    REQUIRE(out.status == SolveStatus::optimal);
    CHECK(out.trajectories[0].states.cwiseAbs().maxCoeff() < 1e-9);
    CHECK(out.trajectories[0].inputs.cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("decoupled truthful message equals gradient matching at the local solution") {
  Agent agent = scalar_agent(3, 0.8);
  OcpSolution local = agent.solve_local();  // zero reference and prices = standalone problem
  Message matched = agent.gradient_matching_message(local, shift_surrogate());
  Message truthful =
      agent.truthful_message(local.trajectories[0].states, local.trajectories[0].inputs,
                             local.dyn_multipliers[0], shift_surrogate());
  CHECK(message_distance(matched, truthful) < 1e-12);
}

TEST_CASE("deviation messages stay valid and vary by strategy") {
  const RoomParams room{21.0, 0.6, 0.3};
  Agent agent(0, hvac_cost(room), mat(1, 1, {0.9}), mat(1, 1, {0.2}),
              ConstraintSet::unconstrained(1), ConstraintSet::box(vec({-5.0}), vec({5.0})), 4,
              vec({20.0}));
  OcpSolution sol = agent.solve_local();
  Message base = agent.gradient_matching_message(sol, hvac_surrogate(21.5));

  SystemConfig cfg;
  cfg.A = mat(1, 1, {0.9});
  cfg.B = mat(1, 1, {0.2});
  cfg.partition = {{1, 1}};
  cfg.horizon = 4;
  cfg.x0 = vec({20.0});
  SystemModel model = build_system(cfg);

  Rng rng(99);
  for (int s = 0; s < 12; ++s) {
    Message dev = agent.deviation_message(base, rng, 0.25, s);
    CHECK_NOTHROW(validate_message(model, hvac_surrogate(21.5), 0, dev));
    if (s % 4 == 1) {
      // Report-only strategy keeps the outcome-relevant parts intact.
      CHECK(dev.state_weights == base.state_weights);
      CHECK(dev.input_weights == base.input_weights);
      CHECK(dev.state_ref != base.state_ref);
    }
  }
}
