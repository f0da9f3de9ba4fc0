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
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lpm/autodiff.hpp"

namespace lpm {

enum class Activation : std::uint32_t { kIdentity = 0, kRelu = 1, kLeakyRelu = 2 };

/// Leaky slope used by critics.
inline constexpr double kLeakySlope = 0.2;

struct LayerSpec {
  std::string name;
  Index in = 0;
  Index out = 0;
  Activation activation = Activation::kIdentity;
  bool batch_norm = false;

  bool operator==(const LayerSpec&) const = default;
};

/// Fully connected layer applied row-wise: affine, activation, then
/// optional batch normalization. Weight is in x out so rows map as x * W + b.
template <typename T>
struct DenseLayer {
  LayerSpec spec;
  ad::Parameter<T> weight;
  ad::Parameter<T> bias;
  ad::Parameter<T> gamma;
  ad::Parameter<T> beta;
  RowVector<T> running_mean;
  RowVector<T> running_var;

  DenseLayer() = default;

  DenseLayer(LayerSpec s, std::mt19937_64& rng) : spec(std::move(s)) {
    if (spec.in < 1 || spec.out < 1) {
      throw ShapeError("layer '" + spec.name + "': invalid dims " + shape_str(spec.in, spec.out));
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix<T> w(spec.in, spec.out);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(u(rng));
    Matrix<T> b(1, spec.out);
    for (Index i = 0; i < b.size(); ++i) b.data()[i] = static_cast<T>(u(rng));
    weight = ad::Parameter<T>(spec.name + ".weight", std::move(w));
    bias = ad::Parameter<T>(spec.name + ".bias", std::move(b));
    if (spec.batch_norm) {
      gamma = ad::Parameter<T>(spec.name + ".gamma", Matrix<T>::Ones(1, spec.out));
      beta = ad::Parameter<T>(spec.name + ".beta", Matrix<T>::Zero(1, spec.out));
      running_mean = RowVector<T>::Zero(spec.out);
      running_var = RowVector<T>::Ones(spec.out);
    }
  }

  std::vector<ad::Parameter<T>*> parameters() {
    std::vector<ad::Parameter<T>*> p{&weight, &bias};
    if (spec.batch_norm) {
      p.push_back(&gamma);
      p.push_back(&beta);
    }
    return p;
  }

  template <typename U>
  DenseLayer<U> cast() const {
    DenseLayer<U> o;
    o.spec = spec;
    o.weight = ad::Parameter<U>(weight.name, weight.value.template cast<U>());
    o.bias = ad::Parameter<U>(bias.name, bias.value.template cast<U>());
    if (spec.batch_norm) {
      o.gamma = ad::Parameter<U>(gamma.name, gamma.value.template cast<U>());
      o.beta = ad::Parameter<U>(beta.name, beta.value.template cast<U>());
      o.running_mean = running_mean.template cast<U>();
      o.running_var = running_var.template cast<U>();
    }
    return o;
  }
};

struct LayerRunOptions {
  bool training = false;             // batch statistics instead of running ones
  bool update_running_stats = false;  // only meaningful when training
  double momentum = 0.9;              // running = momentum * running + (1 - momentum) * batch
  double eps = 1e-5;
  const std::vector<char>* row_mask = nullptr;  // rows contributing to batch statistics
};

template <typename T>
ad::Var forward_layer(ad::Tape<T>& t, DenseLayer<T>& layer, ad::Var x, const LayerRunOptions& opt) {
  ad::Var y = ad::affine(t, x, t.parameter(layer.weight), t.parameter(layer.bias));
  switch (layer.spec.activation) {
    case Activation::kRelu:
      y = ad::relu(t, y);
      break;
    case Activation::kLeakyRelu:
      y = ad::leaky_relu(t, y, static_cast<T>(kLeakySlope));
      break;
    case Activation::kIdentity:
      break;
  }
  if (!layer.spec.batch_norm) return y;
  const T eps = static_cast<T>(opt.eps);
  if (!opt.training) {
    return ad::batch_norm_frozen(t, y, t.parameter(layer.gamma), t.parameter(layer.beta), layer.running_mean,
                                 layer.running_var, eps);
  }
  static const std::vector<char> kAllRows;
  auto bn = ad::batch_norm_train(t, y, t.parameter(layer.gamma), t.parameter(layer.beta),
                                 opt.row_mask ? *opt.row_mask : kAllRows, eps);
  if (opt.update_running_stats) {
    const T mom = static_cast<T>(opt.momentum);
    const T unbias = bn.count > 1 ? static_cast<T>(bn.count) / static_cast<T>(bn.count - 1) : T(1);
    layer.running_mean = mom * layer.running_mean + (T(1) - mom) * bn.batch_mean;
    layer.running_var = mom * layer.running_var + (T(1) - mom) * unbias * bn.batch_var;
  }
  return bn.out;
}

/// Applies the same layer stack to every row of `input` (weight sharing
/// across points).
template <typename T>
ad::Var forward_pointwise_mlp(ad::Tape<T>& t, std::span<DenseLayer<T>> layers, ad::Var input,
                              const LayerRunOptions& opt) {
  const auto& x = t.value(input);
  if (x.rows() < 1) throw ShapeError("forward_pointwise_mlp: empty input");
  ad::Var h = input;
  Index width = x.cols();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].spec.in != width) {
      throw ShapeError("layer " + std::to_string(i) + " ('" + layers[i].spec.name + "') expects width " +
                       std::to_string(layers[i].spec.in) + ", got " + std::to_string(width));
    }
    h = forward_layer(t, layers[i], h, opt);
    width = layers[i].spec.out;
  }
  return h;
}

/// Builds a chain of layers from widths: dims = {in, h1, ..., out}.
template <typename T>
std::vector<DenseLayer<T>> make_mlp(const std::string& prefix, const std::vector<Index>& dims, Activation hidden,
                                    bool hidden_bn, Activation last, bool last_bn, std::mt19937_64& rng) {
  std::vector<DenseLayer<T>> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const bool is_last = i + 2 == dims.size();
    LayerSpec s{prefix + "." + std::to_string(i), dims[i], dims[i + 1], is_last ? last : hidden,
                is_last ? last_bn : hidden_bn};
    layers.emplace_back(std::move(s), rng);
  }
  return layers;
}

template <typename T>
void collect_parameters(std::vector<DenseLayer<T>>& layers, std::vector<ad::Parameter<T>*>& out) {
  for (auto& l : layers) {
    auto p = l.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
}

}  // namespace lpm
