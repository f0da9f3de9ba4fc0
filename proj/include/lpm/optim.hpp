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

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "lpm/autodiff.hpp"

namespace lpm {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::vector<Matrix<T>> first_moment;
  std::vector<Matrix<T>> second_moment;
  std::int64_t step = 0;

  AdamState() = default;
  explicit AdamState(AdamConfig c) : config(c) {}
};

/// Bias-corrected Adam. Moment buffers are created on the first step. All
/// gradients are validated before any parameter is touched.
template <typename T>
void adam_step(std::span<ad::Parameter<T>* const> params, AdamState<T>& state) {
  if (state.step == 0 && state.first_moment.empty()) {
    for (auto* p : params) {
      state.first_moment.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
      state.second_moment.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.first_moment.size()) + " tensors, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* p = params[i];
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols() ||
        state.first_moment[i].rows() != p->value.rows() || state.first_moment[i].cols() != p->value.cols()) {
      throw ShapeError("adam_step: shape mismatch for parameter '" + p->name + "'");
    }
    if (!p->grad.allFinite()) throw NonFiniteError("adam_step: non-finite gradient in parameter '" + p->name + "'");
  }
  ++state.step;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(c.beta1);
  const T b2 = static_cast<T>(c.beta2);
  const T step_size = static_cast<T>(c.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(c.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto* p = params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    T* pv = p->value.data();
    const T* g = p->grad.data();
    T* mv = m.data();
    T* vv = v.data();
    for (Index j = 0, n = p->value.size(); j < n; ++j) {
      mv[j] = b1 * mv[j] + (T(1) - b1) * g[j];
      vv[j] = b2 * vv[j] + (T(1) - b2) * g[j] * g[j];
      pv[j] -= step_size * mv[j] / (std::sqrt(vv[j]) * inv_sqrt_bc2 + eps);
    }
  }
}

template <typename T>
void zero_grads(std::span<ad::Parameter<T>* const> params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace lpm
