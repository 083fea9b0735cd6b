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
#include "mechmpc/surrogate.hpp"

#include <cmath>

#include "mechmpc/util.hpp"

namespace mechmpc {

SurrogateFamily shift_surrogate() {
  SurrogateFamily f;
  f.name = "shift";
  f.state_value = [](double s, double t) { return 0.5 * (s - t) * (s - t); };
  f.state_deriv = [](double s, double t) { return s - t; };
  f.state_second = [](double, double) { return 1.0; };
  f.input_value = f.state_value;
  f.input_deriv = f.state_deriv;
  f.input_second = f.state_second;
  f.match_state = [](double s, double g) { return s - g; };
  f.match_input = f.match_state;
  f.match_input_curvature = nullptr;
  f.state_param_valid = [](double t) { return std::isfinite(t); };
  f.input_param_valid = f.state_param_valid;
  return f;
}

SurrogateFamily scaled_surrogate(double reference) {
  if (reference == 0.0) throw ConfigError("scaled surrogate requires a nonzero reference");
  SurrogateFamily f;
  f.name = "scaled";
  const double r = reference;
  f.state_value = [r](double s, double v) { return 0.5 * (s - v * r) * (s - v * r); };
  f.state_deriv = [r](double s, double v) { return s - v * r; };
  f.state_second = [](double, double) { return 1.0; };
  f.input_value = [](double s, double w) { return 0.5 * (w * s) * (w * s); };
  f.input_deriv = [](double s, double w) { return w * w * s; };
  f.input_second = [](double, double w) { return w * w; };
  f.match_state = [r](double s, double g) { return (s - g) / r; };
  f.match_input = [](double s, double g) {
    if (s == 0.0) throw NumericalError("scaled surrogate: input weight undefined at s = 0");
    const double ratio = g / s;
    if (ratio <= 0.0)
      throw NumericalError("scaled surrogate: gradient sign incompatible with w^2 s");
    return std::sqrt(ratio);
  };
  f.match_input_curvature = [](double curvature) {
    if (curvature <= 0.0)
      throw NumericalError("scaled surrogate: nonpositive curvature at degenerate match");
    return std::sqrt(curvature);
  };
  f.state_param_valid = [](double v) { return std::isfinite(v); };
  f.input_param_valid = [](double w) { return std::isfinite(w) && w != 0.0; };
  return f;
}

}  // namespace mechmpc
