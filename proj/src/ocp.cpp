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
#include "mechmpc/ocp.hpp"

namespace mechmpc {

StageBounds StageBounds::unbounded(int horizon, int n_i, int m_i) {
  StageBounds b;
  b.state_lower = Eigen::MatrixXd::Constant(horizon + 1, n_i, -kInf);
  b.state_upper = Eigen::MatrixXd::Constant(horizon + 1, n_i, kInf);
  b.input_lower = Eigen::MatrixXd::Constant(horizon, m_i, -kInf);
  b.input_upper = Eigen::MatrixXd::Constant(horizon, m_i, kInf);
  return b;
}

OcpProblem OcpProblem::for_model(std::shared_ptr<const SystemModel> model,
                                 std::vector<ConstraintSet> state_sets,
                                 std::vector<ConstraintSet> input_sets) {
  OcpProblem p;
  const int na = model->num_agents();
  if (static_cast<int>(state_sets.size()) != na || static_cast<int>(input_sets.size()) != na)
    throw ConfigError("constraint set count disagrees with the model");
  p.model = std::move(model);
  p.state_sets = std::move(state_sets);
  p.input_sets = std::move(input_sets);
  p.objectives.assign(na, ZeroObjective{});
  p.extra_bounds.assign(na, std::nullopt);
  p.linear_state_terms.assign(na, std::nullopt);
  p.fixed_coupling.assign(na, std::nullopt);
  return p;
}

}  // namespace mechmpc
