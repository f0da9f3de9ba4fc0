// Copyright 2026 The LPM Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "lpm/autodiff.hpp"

namespace lpm {

/// Denominator floor for relative errors, so near-zero gradients are
/// compared absolutely.
inline constexpr double kGradCheckFloor = 1e-3;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  Index checked = 0;
};

/// Compares reverse-mode gradients of `build_loss` against central
/// differences for every entry of every parameter. `build_loss` records a
/// scalar loss on the given tape and must be deterministic.
template <typename BuildLoss>
GradCheckReport grad_check(BuildLoss&& build_loss, std::span<ad::Parameter<double>* const> params, double step = 1e-6) {
  for (auto* p : params) p->zero_grad();
  {
    ad::Tape<double> tape;
    ad::Var loss = build_loss(tape);
    tape.backward(loss);
  }
  auto eval = [&]() {
    ad::Tape<double> tape;
    ad::Var loss = build_loss(tape);
    return tape.value(loss)(0, 0);
  };
  GradCheckReport rep;
  for (auto* p : params) {
    const Matrix<double> analytic = p->grad;
    for (Index i = 0; i < p->value.size(); ++i) {
      double& x = p->value.data()[i];
      const double orig = x;
      x = orig + step;
      const double up = eval();
      x = orig - step;
      const double down = eval();
      x = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic.data()[i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
      ++rep.checked;
      if (rep.worst_index < 0 || err > rep.max_relative_error) {
        rep.max_relative_error = err;
        rep.worst_parameter = p->name;
        rep.worst_index = i;
        rep.analytic = a;
        rep.numeric = numeric;
      }
    }
  }
  return rep;
}

}  // namespace lpm
