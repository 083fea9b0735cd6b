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
#ifndef MECHMPC_SURROGATE_HPP
#define MECHMPC_SURROGATE_HPP

#include <functional>
#include <string>

namespace mechmpc {

/// Parametric scalar function family announced by the principal. Each agent
/// coordinate gets one term f(s; theta); states and inputs may use different
/// functional forms but the family is common to all agents.
///
/// All members are per-coordinate scalar maps. match_state / match_input
/// invert the derivative in its parameter: they return theta such that
/// f'(s; theta) = target_gradient. match_input_curvature covers the
/// degenerate point where both s and the target gradient vanish and the
/// weight is determined by curvature instead; it may be null for families
/// without that degeneracy.
struct SurrogateFamily {
  std::string name;

  std::function<double(double s, double theta)> state_value;
  std::function<double(double s, double theta)> state_deriv;
  std::function<double(double s, double theta)> state_second;

  std::function<double(double s, double theta)> input_value;
  std::function<double(double s, double theta)> input_deriv;
  std::function<double(double s, double theta)> input_second;

  std::function<double(double s, double target_gradient)> match_state;
  std::function<double(double s, double target_gradient)> match_input;
  std::function<double(double curvature)> match_input_curvature;

  std::function<bool(double theta)> state_param_valid;
  std::function<bool(double theta)> input_param_valid;
};

/// Shift family: f(s; theta) = 1/2 (s - theta)^2 for both states and inputs.
/// match solves s - theta = g. Any parameter is valid.
SurrogateFamily shift_surrogate();

/// Scaled family used by the building case study:
///   states: f(s; v) = 1/2 (s - v * reference)^2
///   inputs: f(s; w) = 1/2 (w * s)^2
/// `reference` must be nonzero. Input weights w == 0 are invalid (the term
/// would lose strict convexity).
SurrogateFamily scaled_surrogate(double reference);

}  // namespace mechmpc

#endif  // MECHMPC_SURROGATE_HPP
