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

#include "mechmpc/system_model.hpp"
#include "test_support.hpp"

using namespace mechmpc;
using namespace mechmpc::testing;

TEST_CASE("identity dynamics have no neighbors") {
  SystemConfig cfg;
  cfg.A = Eigen::MatrixXd::Identity(2, 2);
  cfg.B = Eigen::MatrixXd::Identity(2, 2);
  cfg.partition = {{1, 1}, {1, 1}};
  cfg.horizon = 3;
  cfg.x0 = vec({0.0, 0.0});
  SystemModel model = build_system(cfg);
  CHECK(model.neighbors[0].empty());
  CHECK(model.neighbors[1].empty());
}

TEST_CASE("partition exactness is enforced") {
  SystemConfig cfg;
  cfg.A = Eigen::MatrixXd::Identity(2, 2);
  cfg.B = Eigen::MatrixXd::Identity(2, 2);
  cfg.partition = {{1, 1}, {2, 1}};  // sums to 3 != 2
  cfg.horizon = 3;
  cfg.x0 = vec({0.0, 0.0});
  CHECK_THROWS_AS(build_system(cfg), ConfigError);
}

TEST_CASE("off-block-diagonal B is rejected") {
  SystemConfig cfg;
  cfg.A = Eigen::MatrixXd::Identity(2, 2);
  cfg.B = mat(2, 2, {1.0, 0.5, 0.0, 1.0});
  cfg.partition = {{1, 1}, {1, 1}};
  cfg.horizon = 2;
  cfg.x0 = vec({0.0, 0.0});
  CHECK_THROWS_AS(build_system(cfg), ConfigError);
}

TEST_CASE("declared neighbors must match the sparsity of A") {
  SystemConfig cfg;
  cfg.A = mat(2, 2, {1.0, 0.3, 0.0, 1.0});
  cfg.B = Eigen::MatrixXd::Identity(2, 2);
  cfg.partition = {{1, 1}, {1, 1}};
  cfg.horizon = 2;
  cfg.x0 = vec({0.0, 0.0});
  cfg.declared_neighbors = std::vector<std::vector<int>>{{1}, {}};
  CHECK_NOTHROW(build_system(cfg));
  cfg.declared_neighbors = std::vector<std::vector<int>>{{}, {0}};
  CHECK_THROWS_AS(build_system(cfg), ConfigError);
}

TEST_CASE("step_dynamics basics") {
  SystemConfig cfg;
  cfg.A = Eigen::MatrixXd::Identity(2, 2);
  cfg.B = Eigen::MatrixXd::Identity(2, 2);
  cfg.partition = {{1, 1}, {1, 1}};
  cfg.horizon = 2;
  cfg.x0 = vec({0.0, 0.0});
  SystemModel model = build_system(cfg);
  CHECK(step_dynamics(model, vec({1.0, 0.0}), vec({0.0, 0.0}), 0) == vec({1.0, 0.0}));
  CHECK(step_dynamics(model, vec({0.0, 0.0}), vec({1.0, 2.0}), 1) == vec({1.0, 2.0}));
  CHECK_THROWS_AS(step_dynamics(model, vec({1.0}), vec({0.0, 0.0}), 0), ConfigError);
  CHECK_THROWS_AS(step_dynamics(model, vec({1.0, 0.0}), vec({0.0, 0.0}), 2), ConfigError);
}

TEST_CASE("coupling_input sums neighbor contributions") {
  SystemConfig cfg;
  cfg.A = mat(2, 2, {1.0, 0.3, 0.0, 1.0});
  cfg.B = Eigen::MatrixXd::Identity(2, 2);
  cfg.partition = {{1, 1}, {1, 1}};
  cfg.horizon = 2;
  cfg.x0 = vec({0.0, 0.0});
  SystemModel model = build_system(cfg);
  CHECK(coupling_input(model, 0, vec({5.0, 2.0}))(0) == doctest::Approx(0.6));
  CHECK(coupling_input(model, 1, vec({5.0, 2.0}))(0) == doctest::Approx(0.0));
}

TEST_CASE("block decomposition identity: local + coupling equals the full step") {
  Rng rng(3);
  SystemConfig cfg;
  cfg.A = Eigen::MatrixXd::NullaryExpr(5, 5, [&]() { return rng.uniform(-0.4, 0.4); });
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(5, 3);
  B.block(0, 0, 2, 1).setConstant(0.7);
  B.block(2, 1, 2, 1).setConstant(1.1);
  B.block(4, 2, 1, 1).setConstant(-0.3);
  cfg.B = B;
  cfg.partition = {{2, 1}, {2, 1}, {1, 1}};
  cfg.horizon = 2;
  cfg.x0 = Eigen::VectorXd::Zero(5);
  cfg.disturbance = {Eigen::VectorXd::Constant(5, 0.2), Eigen::VectorXd::Constant(5, -0.1)};
  SystemModel model = build_system(cfg);

  Eigen::VectorXd x(5), u(3);
  for (int j = 0; j < 5; ++j) x(j) = rng.uniform(-2, 2);
  for (int h = 0; h < 3; ++h) u(h) = rng.uniform(-2, 2);
  const Eigen::VectorXd full = step_dynamics(model, x, u, 0);
  for (int i = 0; i < 3; ++i) {
    const Eigen::VectorXd local =
        model.state_block(i, i) * model.state_slice(x, i) +
        model.input_block(i) * u.segment(model.input_offset[i], model.partition[i].m) +
        model.local_disturbance_at(i, 0) + coupling_input(model, i, x);
    CHECK((local - model.state_slice(full, i)).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("constraint sets: origin containment and row generation") {
  CHECK_NOTHROW(ConstraintSet::box(vec({-1.0}), vec({2.0})).validate());
  CHECK_THROWS_AS(ConstraintSet::box(vec({0.5}), vec({2.0})).validate(), ConfigError);
  CHECK_THROWS_AS(ConstraintSet::box(vec({1.0}), vec({0.0})), ConfigError);

  ConstraintSet half_open = ConstraintSet::box(vec({-kInf}), vec({3.0}));
  CHECK(half_open.num_rows() == 1);
  PolytopeSet p = half_open.to_polytope();
  CHECK(p.G(0, 0) == 1.0);
  CHECK(p.g(0) == 3.0);
  CHECK(half_open.violation(vec({4.0})) == doctest::Approx(1.0));
  CHECK(half_open.violation(vec({2.0})) == doctest::Approx(-1.0));
}

TEST_CASE("agent cost validation") {
  Rng rng(17);
  AgentCost good = quadratic_cost(vec({1.0, 2.0}), vec({0.0, 0.0}), vec({1.0}), vec({0.0}));
  CostCheckOptions opts;
  CHECK_NOTHROW(validate_agent_cost(good, 2, 1, opts, rng));

  AgentCost shifted = quadratic_cost(vec({1.0}), vec({0.5}), vec({1.0}), vec({0.0}));
  CHECK_THROWS_AS(validate_agent_cost(shifted, 1, 1, opts, rng), ConfigError);
  CostCheckOptions relaxed = opts;
  relaxed.require_origin_minimum = false;
  relaxed.require_zero_value = false;
  CHECK_NOTHROW(validate_agent_cost(shifted, 1, 1, relaxed, rng));

  AgentCost wrong_grad = good;
  wrong_grad.stage_grad_u = [](const Eigen::VectorXd&, const Eigen::VectorXd& u) {
    return Eigen::VectorXd(1.5 * u);
  };
  CHECK_THROWS_AS(validate_agent_cost(wrong_grad, 2, 1, opts, rng), ConfigError);
}

TEST_CASE("check_feasible flags exactly what is violated") {
  SystemConfig cfg;
  cfg.A = Eigen::MatrixXd::Identity(2, 2);
  cfg.B = Eigen::MatrixXd::Identity(2, 2);
  cfg.partition = {{1, 1}, {1, 1}};
  cfg.horizon = 2;
  cfg.x0 = vec({0.0, 0.0});
  SystemModel model = build_system(cfg);
  std::vector<ConstraintSet> xs = {ConstraintSet::box(vec({-1.0}), vec({1.0})),
                                   ConstraintSet::box(vec({-1.0}), vec({1.0}))};
  std::vector<ConstraintSet> us = xs;

  std::vector<Trajectory> trajs;
  for (int i = 0; i < 2; ++i) {
    Trajectory tr;
    tr.agent = i;
    tr.states = Eigen::MatrixXd::Zero(3, 1);
    tr.inputs = Eigen::MatrixXd::Zero(2, 1);
    trajs.push_back(tr);
  }
  CHECK(check_feasible(model, xs, us, trajs, 1e-9).feasible());

  SUBCASE("initial condition mismatch is reported") {
    SystemConfig cfg2 = cfg;
    cfg2.x0 = vec({1.0, 0.0});
    SystemModel model2 = build_system(cfg2);
    FeasibilityReport rep = check_feasible(model2, xs, us, trajs, 1e-9);
    REQUIRE_FALSE(rep.feasible());
    CHECK(rep.violations[0].kind == Violation::Kind::initial_condition);
  }

  SUBCASE("one box violation of 0.1 yields entries of magnitude 0.1") {
    // Keep dynamics consistent: u drives the state out of the box.
    trajs[0].inputs(0, 0) = 1.1;
    trajs[0].states(1, 0) = 1.1;
    trajs[0].states(2, 0) = 1.1;
    trajs[0].inputs(1, 0) = 0.0;
    std::vector<ConstraintSet> wide_us = {ConstraintSet::box(vec({-2.0}), vec({2.0})),
                                          ConstraintSet::box(vec({-2.0}), vec({2.0}))};
    FeasibilityReport rep = check_feasible(model, xs, wide_us, trajs, 1e-6);
    REQUIRE(rep.violations.size() == 2);  // states at stages 1 and 2
    for (const auto& v : rep.violations) {
      CHECK(v.kind == Violation::Kind::state_set);
      CHECK(v.magnitude == doctest::Approx(0.1));
    }
  }
}
