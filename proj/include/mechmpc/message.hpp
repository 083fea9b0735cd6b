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
#ifndef MECHMPC_MESSAGE_HPP
#define MECHMPC_MESSAGE_HPP

#include <Eigen/Dense>

#include "mechmpc/ocp.hpp"
#include "mechmpc/surrogate.hpp"
#include "mechmpc/system_model.hpp"

namespace mechmpc {

/// What one agent reports to the principal each round: surrogate weights for
/// its states and inputs, a sensitivity report (its view of the dynamics
/// multipliers), operational bounds, and a state reference trajectory.
/// Row k of each array is stage k.
struct Message {
  Eigen::MatrixXd state_weights;  // (T+1) x n_i
  Eigen::MatrixXd input_weights;  // T x m_i
  Eigen::MatrixXd sensitivity;    // T x n_i
  StageBounds bounds;             // entries may be +/-inf; lower == upper pins
  Eigen::MatrixXd state_ref;      // (T+1) x n_i

  /// Unit weights, zero sensitivity/reference, unbounded operational range
  /// (the first-round bootstrap message).
  static Message bootstrap(int horizon, int n_i, int m_i);
};

/// Distance between two messages: inf-norm over the finite components
/// (weights, sensitivity, reference) plus infinity if the bound patterns
/// differ anywhere.
double message_distance(const Message& a, const Message& b);

/// Checks dimensions against the model, rejects NaN/inf outside the bounds
/// report, enforces lower <= upper, and checks weights against the announced
/// family's parameter validity. Throws ConfigError naming the defect.
void validate_message(const SystemModel& model, const SurrogateFamily& family, int agent,
                      const Message& msg);

}  // namespace mechmpc

#endif  // MECHMPC_MESSAGE_HPP
