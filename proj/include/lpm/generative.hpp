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

// Generative heads over the part latent space: a variational sampling layer
// applied to each part row, and a GAN / WGAN-GP pair on flattened part sets.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lpm/layers.hpp"
#include "lpm/losses.hpp"
#include "lpm/model.hpp"
#include "lpm/optim.hpp"
#include "lpm/pooling.hpp"

namespace lpm {

// ---------------------------------------------------------------------------
// Variational head

/// Mean and log-variance layers shared by all part rows. The mean layer
/// starts as the identity so a fresh head reproduces the autoencoder when
/// noise is off.
template <typename T>
struct VaeHead {
  DenseLayer<T> mean;
  DenseLayer<T> log_variance;
  double beta = 0.1;
  bool trained = false;

  VaeHead() = default;

  VaeHead(Index width, double beta_weight, std::uint64_t seed) : beta(beta_weight) {
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw Error("VAE beta must be finite and >= 0");
    std::mt19937_64 rng(seed);
    mean = DenseLayer<T>({"vae.mean", width, width, Activation::kIdentity, false}, rng);
    log_variance = DenseLayer<T>({"vae.log_variance", width, width, Activation::kIdentity, false}, rng);
    mean.weight.value = Matrix<T>::Identity(width, width);
    mean.bias.value.setZero();
    log_variance.weight.value.setZero();
    log_variance.bias.value.setZero();
  }

  Index width() const { return mean.spec.in; }

  std::vector<ad::Parameter<T>*> parameters() {
    return {&mean.weight, &mean.bias, &log_variance.weight, &log_variance.bias};
  }
};

template <typename T>
struct VaeSample {
  PartFeatureSet<T> z;
  Matrix<T> mu;
  Matrix<T> log_variance;
  double kl = 0.0;
};

/// Gaussian KL to the standard normal: summed over the entries of each
/// present row, averaged over present rows.
template <typename T>
double gaussian_kl(const Matrix<T>& mu, const Matrix<T>& log_variance, const std::vector<char>& present) {
  double total = 0.0;
  Index count = 0;
  for (Index r = 0; r < mu.rows(); ++r) {
    if (!present[static_cast<std::size_t>(r)]) continue;
    for (Index c = 0; c < mu.cols(); ++c) {
      const double m = mu(r, c);
      const double lv = log_variance(r, c);
      total += m * m + std::exp(lv) - 1.0 - lv;
    }
    ++count;
  }
  if (count == 0) throw EmptyInputError("gaussian_kl: no present part");
  return 0.5 * total / static_cast<double>(count);
}

/// Tape version of the sampling layer. `noise` has the shape of `parts`;
/// absent rows stay zero in z and are excluded from the KL term.
template <typename T>
struct VaeTapeResult {
  ad::Var z;
  ad::Var kl;
};

template <typename T>
VaeTapeResult<T> vae_transform(ad::Tape<T>& t, VaeHead<T>& head, ad::Var parts, const std::vector<char>& present,
                               const Matrix<T>& noise) {
  const auto& pv = t.value(parts);
  if (pv.cols() != head.width()) {
    throw ShapeError("vae: part width " + std::to_string(pv.cols()) + " but head width " + std::to_string(head.width()));
  }
  if (noise.rows() != pv.rows() || noise.cols() != pv.cols()) throw ShapeError("vae: noise shape");
  Matrix<T> mask(pv.rows(), pv.cols());
  Index count = 0;
  for (Index r = 0; r < pv.rows(); ++r) {
    const bool on = present[static_cast<std::size_t>(r)] != 0;
    mask.row(r).setConstant(on ? T(1) : T(0));
    count += on ? 1 : 0;
  }
  if (count == 0) throw EmptyInputError("vae: no present part");
  ad::Var mu = ad::affine(t, parts, t.parameter(head.mean.weight), t.parameter(head.mean.bias));
  ad::Var lv = ad::affine(t, parts, t.parameter(head.log_variance.weight), t.parameter(head.log_variance.bias));
  if (!t.value(lv).allFinite()) throw NonFiniteError("vae: non-finite log-variance");
  ad::Var sigma = ad::exp(t, ad::scale(t, lv, T(0.5)));
  ad::Var z = ad::add(t, ad::mul_const(t, mu, mask), ad::mul_const(t, sigma, Matrix<T>(noise.cwiseProduct(mask))));
  // 0.5 * (mu^2 + exp(lv) - 1 - lv), masked, summed per row and averaged over present rows
  ad::Var terms = ad::sub(t, ad::add(t, ad::square(t, mu), ad::exp(t, lv)), ad::add_scalar(t, lv, T(1)));
  ad::Var kl = ad::scale(t, ad::sum(t, ad::mul_const(t, terms, std::move(mask))), T(0.5) / static_cast<T>(count));
  return {z, kl};
}

/// Samples z = mu + exp(logvar / 2) * eps. A null `noise` draws eps from
/// N(0, I) with `rng`.
template <typename T>
VaeSample<T> vae_sample(const VaeHead<T>& head, const PartFeatureSet<T>& parts, std::mt19937_64& rng,
                        const Matrix<T>* noise = nullptr) {
  if (parts.width() != head.width()) {
    throw ShapeError("vae_sample: part width " + std::to_string(parts.width()) + " but head width " +
                     std::to_string(head.width()));
  }
  Matrix<T> eps;
  if (noise) {
    eps = *noise;
  } else {
    std::normal_distribution<double> nd(0.0, 1.0);
    eps.resize(parts.parts(), parts.width());
    for (Index i = 0; i < eps.size(); ++i) eps.data()[i] = static_cast<T>(nd(rng));
  }
  auto& h = const_cast<VaeHead<T>&>(head);  // no-grad tape never writes parameters
  ad::Tape<T> t(false);
  auto r = vae_transform(t, h, t.constant(parts.features), parts.present, eps);
  VaeSample<T> s;
  s.z = {t.value(r.z), parts.present};
  s.mu = parts.features * head.mean.weight.value;
  s.mu.rowwise() += head.mean.bias.value.row(0);
  s.log_variance = parts.features * head.log_variance.weight.value;
  s.log_variance.rowwise() += head.log_variance.bias.value.row(0);
  s.kl = static_cast<double>(t.value(r.kl)(0, 0));
  return s;
}

/// Minimized objective: reconstruction + beta * KL.
inline double vae_loss(double reconstruction, double kl, double beta) {
  if (!std::isfinite(reconstruction) || !std::isfinite(kl) || !std::isfinite(beta)) {
    throw NonFiniteError("vae_loss: non-finite input");
  }
  return reconstruction + beta * kl;
}

struct VaeTrainConfig {
  double learning_rate = 1e-3;
  int epochs = 100;
  int batch_size = 32;
  std::uint64_t seed = 1;
  bool train_decoder = true;  // fine-tune the decoder along with the head
  bool sample_noise = true;   // false feeds eps = 0 (deterministic)
  Reduction reduction = Reduction::kSum;  // chamfer summed over points, averaged over the batch
};

struct VaeEpochRecord {
  int epoch = 0;
  double reconstruction = 0.0;
  double kl = 0.0;
};

/// Part features of every sample, computed once with the frozen encoder.
template <typename T>
std::vector<PartFeatureSet<T>> encode_dataset(const LpmModel<T>& model, const Dataset& data) {
  std::vector<PartFeatureSet<T>> out;
  out.reserve(data.samples.size());
  for (const auto& c : data.samples) out.push_back(encode(model, c).parts);
  return out;
}

/// Fuses stacked (B*k) x l rows into B x l with the model's pooling.
template <typename T>
ad::Var fuse_rows(ad::Tape<T>& t, ad::Var rows, const std::vector<char>& present, Index k, PoolingKind kind) {
  const Index total = t.value(rows).rows();
  std::vector<Index> seg(static_cast<std::size_t>(total));
  for (Index s = 0; s < total; ++s) seg[static_cast<std::size_t>(s)] = present[static_cast<std::size_t>(s)] ? s / k : -1;
  auto r = ad::segment_pool(t, rows, seg, total / k, kind);
  for (char p : r.present)
    if (!p) throw EmptyInputError("fuse: a sample has no present part");
  return r.out;
}

/// Trains the head (and optionally the decoder) on frozen encoder latents
/// with reconstruction + beta * KL.
template <typename T>
std::vector<VaeEpochRecord> train_vae(LpmModel<T>& model, VaeHead<T>& head, const Dataset& data,
                                      const VaeTrainConfig& cfg,
                                      const std::function<void(const VaeEpochRecord&)>& on_epoch = {}) {
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw Error("train_vae: epochs and batch size must be >= 1");
  if (data.samples.empty()) throw EmptyInputError("train_vae: empty dataset");
  if (head.width() != model.spec.feature_size) throw ShapeError("train_vae: head width does not match model");
  ScopedFlushDenormals ftz;
  const Index k = model.spec.parts;
  const auto latents = encode_dataset(model, data);
  std::vector<ad::Parameter<T>*> params = head.parameters();
  if (cfg.train_decoder) collect_parameters(model.decoder, params);
  AdamState<T> adam(AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<std::size_t> order(data.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<VaeEpochRecord> hist;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double recon_sum = 0.0, kl_sum = 0.0;
    for (std::size_t start = 0, batch_id = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batch_id) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto B = static_cast<Index>(end - start);
      Matrix<T> stacked(B * k, model.spec.feature_size);
      std::vector<char> present(static_cast<std::size_t>(B * k));
      std::vector<const LabeledCloud*> clouds;
      for (Index b = 0; b < B; ++b) {
        const auto& ps = latents[order[start + static_cast<std::size_t>(b)]];
        stacked.middleRows(b * k, k) = ps.features;
        for (Index p = 0; p < k; ++p) present[static_cast<std::size_t>(b * k + p)] = ps.present[static_cast<std::size_t>(p)];
        clouds.push_back(&data.samples[order[start + static_cast<std::size_t>(b)]]);
      }
      Matrix<T> noise = Matrix<T>::Zero(stacked.rows(), stacked.cols());
      if (cfg.sample_noise)
        for (Index i = 0; i < noise.size(); ++i) noise.data()[i] = static_cast<T>(nd(rng));
      zero_grads<T>(params);
      ad::Tape<T> t;
      auto v = vae_transform(t, head, t.constant(std::move(stacked)), present, noise);
      ad::Var global = fuse_rows(t, v.z, present, k, model.spec.pooling);
      ad::Var flat = forward_pointwise_mlp<T>(t, model.decoder, global, LayerRunOptions{});
      ad::Var decoded = ad::reshape(t, flat, B * model.spec.points, 3);
      ad::Var recon = chamfer_loss(t, decoded, model.spec.points, reconstruction_targets<T>(clouds), cfg.reduction);
      ad::Var loss = ad::add(t, recon, ad::scale(t, v.kl, static_cast<T>(head.beta)));
      const double rv = static_cast<double>(t.value(recon)(0, 0));
      const double kv = static_cast<double>(t.value(v.kl)(0, 0));
      if (!std::isfinite(rv) || !std::isfinite(kv)) {
        throw NonFiniteError("train_vae: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_id));
      }
      t.backward(loss);
      adam_step<T>(params, adam);
      recon_sum += rv * static_cast<double>(B);
      kl_sum += kv * static_cast<double>(B);
    }
    const double n = static_cast<double>(order.size());
    hist.push_back({epoch, recon_sum / n, kl_sum / n});
    if (on_epoch) on_epoch(hist.back());
  }
  head.trained = true;
  return hist;
}

// ---------------------------------------------------------------------------
// Latent GAN

enum class GanObjective : std::uint32_t { kStandard = 0, kWassersteinGp = 1 };

inline const char* to_string(GanObjective o) { return o == GanObjective::kStandard ? "gan" : "wgan"; }

struct GanConfig {
  GanObjective objective = GanObjective::kStandard;
  Index noise_size = 128;
  Index hidden = 128;
  double gp_weight = 10.0;
  int critic_steps = 5;  // per generator step, Wasserstein mode only
  double generator_lr = 5e-4;
  double critic_lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;

  void validate() const {
    if (noise_size < 1 || hidden < 1) throw ShapeError("gan: sizes must be >= 1");
    if (!(gp_weight >= 0.0)) throw Error("gan: gradient penalty weight must be >= 0");
    if (critic_steps < 1) throw Error("gan: critic steps must be >= 1");
  }
};

/// Generator noise -> hidden -> l -> k*l; critic k*l -> l -> hidden -> 1.
template <typename T>
struct LatentGan {
  GanConfig config;
  Index parts = 0;
  Index width = 0;
  std::vector<DenseLayer<T>> generator;
  std::vector<DenseLayer<T>> critic;
  bool trained = false;

  LatentGan() = default;

  LatentGan(GanConfig c, Index k, Index l, std::uint64_t seed) : config(c), parts(k), width(l) {
    config.validate();
    if (k < 1 || l < 1) throw ShapeError("gan: part count and width must be >= 1");
    std::mt19937_64 rng(seed);
    generator = make_mlp<T>("generator", {c.noise_size, c.hidden, l, k * l}, Activation::kRelu, false,
                            Activation::kIdentity, false, rng);
    critic = make_mlp<T>("critic", {k * l, l, c.hidden, 1}, Activation::kLeakyRelu, false, Activation::kIdentity,
                         false, rng);
  }

  Index latent_size() const { return parts * width; }

  std::vector<ad::Parameter<T>*> generator_parameters() {
    std::vector<ad::Parameter<T>*> p;
    collect_parameters(generator, p);
    return p;
  }
  std::vector<ad::Parameter<T>*> critic_parameters() {
    std::vector<ad::Parameter<T>*> p;
    collect_parameters(critic, p);
    return p;
  }
};

/// Gradient of the summed critic output with respect to its input, built
/// from tape ops so the result stays differentiable in the critic weights.
/// Exact for piecewise-linear critics without normalization layers.
template <typename T>
ad::Var critic_input_gradient(ad::Tape<T>& t, std::span<DenseLayer<T>> critic, const Matrix<T>& x) {
  std::vector<Matrix<T>> slopes;
  std::vector<ad::Var> weights;
  Matrix<T> h = x;
  for (auto& layer : critic) {
    if (layer.spec.batch_norm) throw Error("critic_input_gradient: normalization layers are not supported");
    Matrix<T> a = h * layer.weight.value;
    a.rowwise() += layer.bias.value.row(0);
    Matrix<T> s(a.rows(), a.cols());
    for (Index i = 0; i < a.size(); ++i) {
      const T v = a.data()[i];
      switch (layer.spec.activation) {
        case Activation::kIdentity:
          s.data()[i] = T(1);
          break;
        case Activation::kRelu:
          s.data()[i] = v > T(0) ? T(1) : T(0);
          break;
        case Activation::kLeakyRelu:
          s.data()[i] = v > T(0) ? T(1) : static_cast<T>(kLeakySlope);
          break;
      }
      a.data()[i] = v * s.data()[i];
    }
    slopes.push_back(std::move(s));
    weights.push_back(t.parameter(layer.weight));
    h = std::move(a);
  }
  ad::Var g = t.constant(slopes.back());
  for (std::size_t i = critic.size(); i-- > 0;) {
    if (i + 1 < critic.size()) g = ad::mul_const(t, g, slopes[i]);
    g = ad::matmul_bt(t, g, weights[i]);
  }
  return g;
}

/// gp * mean((||grad D(x_hat)|| - 1)^2) over the rows of x_hat.
template <typename T>
ad::Var gradient_penalty(ad::Tape<T>& t, std::span<DenseLayer<T>> critic, const Matrix<T>& x_hat, T weight) {
  ad::Var g = critic_input_gradient(t, critic, x_hat);
  ad::Var dev = ad::add_scalar(t, ad::row_norm(t, g), T(-1));
  return ad::scale(t, ad::mean(t, ad::square(t, dev)), weight);
}

template <typename T>
struct GanState {
  AdamState<T> generator;
  AdamState<T> critic;
  std::int64_t step = 0;
};

template <typename T>
GanState<T> make_gan_state(const GanConfig& c) {
  GanState<T> s;
  s.generator = AdamState<T>(AdamConfig{c.generator_lr, c.beta1, c.beta2, 1e-8});
  s.critic = AdamState<T>(AdamConfig{c.critic_lr, c.beta1, c.beta2, 1e-8});
  return s;
}

struct GanStepResult {
  double critic_loss = 0.0;
  double generator_loss = 0.0;
};

struct GanStepOptions {
  bool freeze_generator = false;
};

template <typename T>
Matrix<T> gan_noise(Index rows, Index size, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix<T> z(rows, size);
  for (Index i = 0; i < z.size(); ++i) z.data()[i] = static_cast<T>(nd(rng));
  return z;
}

template <typename T>
Matrix<T> generate_latents(const LatentGan<T>& gan, const Matrix<T>& noise) {
  auto& g = const_cast<LatentGan<T>&>(gan);  // no-grad tape never writes parameters
  ad::Tape<T> t(false);
  return t.value(forward_pointwise_mlp<T>(t, g.generator, t.constant(noise), LayerRunOptions{}));
}

template <typename T>
Matrix<T> critic_scores(const LatentGan<T>& gan, const Matrix<T>& x) {
  auto& g = const_cast<LatentGan<T>&>(gan);
  ad::Tape<T> t(false);
  return t.value(forward_pointwise_mlp<T>(t, g.critic, t.constant(x), LayerRunOptions{}));
}

/// Critic loss on fixed real and fake batches. Standard mode is the binary
/// cross-entropy form; Wasserstein mode is mean(D(fake)) - mean(D(real))
/// plus the gradient penalty at `x_hat`.
template <typename T>
ad::Var critic_loss(ad::Tape<T>& t, LatentGan<T>& gan, const Matrix<T>& real, const Matrix<T>& fake,
                    const Matrix<T>& x_hat) {
  ad::Var dr = forward_pointwise_mlp<T>(t, gan.critic, t.constant(real), LayerRunOptions{});
  ad::Var df = forward_pointwise_mlp<T>(t, gan.critic, t.constant(fake), LayerRunOptions{});
  if (gan.config.objective == GanObjective::kStandard) {
    return ad::add(t, ad::mean(t, ad::softplus(t, ad::scale(t, dr, T(-1)))), ad::mean(t, ad::softplus(t, df)));
  }
  ad::Var loss = ad::sub(t, ad::mean(t, df), ad::mean(t, dr));
  if (gan.config.gp_weight > 0.0) {
    loss = ad::add(t, loss, gradient_penalty<T>(t, gan.critic, x_hat, static_cast<T>(gan.config.gp_weight)));
  }
  return loss;
}

/// One generator update preceded by the configured number of critic
/// updates (one in standard mode). Every critic update draws fresh noise
/// and interpolation weights; `real` is reused.
template <typename T>
GanStepResult gan_step(LatentGan<T>& gan, const Matrix<T>& real, GanState<T>& state, std::mt19937_64& rng,
                       const GanStepOptions& opt = {}) {
  if (real.cols() != gan.latent_size()) {
    throw ShapeError("gan_step: real latents have width " + std::to_string(real.cols()) + ", expected " +
                     std::to_string(gan.latent_size()));
  }
  if (real.rows() < 1) throw EmptyInputError("gan_step: empty batch");
  ++state.step;
  const Index B = real.rows();
  auto cparams = gan.critic_parameters();
  auto gparams = gan.generator_parameters();
  const int critic_steps = gan.config.objective == GanObjective::kStandard ? 1 : gan.config.critic_steps;
  GanStepResult res;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int s = 0; s < critic_steps; ++s) {
    const Matrix<T> fake = generate_latents(gan, gan_noise<T>(B, gan.config.noise_size, rng));
    Matrix<T> x_hat(B, real.cols());
    for (Index b = 0; b < B; ++b) {
      const T a = static_cast<T>(unit(rng));
      x_hat.row(b) = a * real.row(b) + (T(1) - a) * fake.row(b);
    }
    zero_grads<T>(cparams);
    ad::Tape<T> t;
    ad::Var loss = critic_loss(t, gan, real, fake, x_hat);
    res.critic_loss = static_cast<double>(t.value(loss)(0, 0));
    if (!std::isfinite(res.critic_loss)) {
      throw NonFiniteError("gan_step: non-finite critic loss at step " + std::to_string(state.step));
    }
    t.backward(loss);
    adam_step<T>(cparams, state.critic);
  }
  if (opt.freeze_generator) return res;
  zero_grads<T>(gparams);
  zero_grads<T>(cparams);
  ad::Tape<T> t;
  ad::Var fake = forward_pointwise_mlp<T>(t, gan.generator, t.constant(gan_noise<T>(B, gan.config.noise_size, rng)),
                                          LayerRunOptions{});
  ad::Var score = forward_pointwise_mlp<T>(t, gan.critic, fake, LayerRunOptions{});
  ad::Var gl = gan.config.objective == GanObjective::kStandard ? ad::mean(t, ad::softplus(t, ad::scale(t, score, T(-1))))
                                                               : ad::scale(t, ad::mean(t, score), T(-1));
  res.generator_loss = static_cast<double>(t.value(gl)(0, 0));
  if (!std::isfinite(res.generator_loss)) {
    throw NonFiniteError("gan_step: non-finite generator loss at step " + std::to_string(state.step));
  }
  t.backward(gl);
  adam_step<T>(gparams, state.generator);
  return res;
}

/// Flattens part sets to rows of k*l. Absent rows take the fused global
/// feature, which leaves the max fusion unchanged.
template <typename T>
Matrix<T> flatten_latents(std::span<const PartFeatureSet<T>> sets) {
  if (sets.empty()) throw EmptyInputError("flatten_latents: no latents");
  const Index k = sets[0].parts();
  const Index l = sets[0].width();
  Matrix<T> out(static_cast<Index>(sets.size()), k * l);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto& s = sets[i];
    if (s.parts() != k || s.width() != l) throw ShapeError("flatten_latents: inconsistent part set shapes");
    const GlobalFeature<T> g = global_maxpool(s);
    for (Index p = 0; p < k; ++p) {
      out.block(static_cast<Index>(i), p * l, 1, l) = s.present[static_cast<std::size_t>(p)] ? RowVector<T>(s.features.row(p)) : g;
    }
  }
  return out;
}

struct GanTrainConfig {
  int steps = 2000;  // generator steps
  int batch_size = 32;
  std::uint64_t seed = 1;
};

struct GanLogRecord {
  int step = 0;
  double critic_loss = 0.0;
  double generator_loss = 0.0;
};

/// Trains against latents of a frozen autoencoder.
template <typename T>
std::vector<GanLogRecord> train_gan(LatentGan<T>& gan, const Matrix<T>& latents, const GanTrainConfig& cfg,
                                    const std::function<void(const GanLogRecord&)>& on_step = {}) {
  if (latents.rows() < 1) throw EmptyInputError("train_gan: no latents");
  if (cfg.steps < 1 || cfg.batch_size < 1) throw Error("train_gan: steps and batch size must be >= 1");
  ScopedFlushDenormals ftz;
  auto state = make_gan_state<T>(gan.config);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<Index> pick(0, latents.rows() - 1);
  std::vector<GanLogRecord> log;
  for (int s = 1; s <= cfg.steps; ++s) {
    Matrix<T> batch(std::min<Index>(cfg.batch_size, latents.rows()), latents.cols());
    for (Index b = 0; b < batch.rows(); ++b) batch.row(b) = latents.row(pick(rng));
    auto r = gan_step(gan, batch, state, rng);
    log.push_back({s, r.critic_loss, r.generator_loss});
    if (on_step) on_step(log.back());
  }
  gan.trained = true;
  return log;
}

// ---------------------------------------------------------------------------
// Sampling

/// Prior samples of the VAE head: every row drawn from N(0, I).
template <typename T>
std::vector<PartFeatureSet<T>> sample_latents(const VaeHead<T>& head, Index parts, std::size_t count,
                                              std::uint64_t seed) {
  if (!head.trained) throw Error("sample_latents: VAE head is untrained");
  std::vector<PartFeatureSet<T>> out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (std::size_t i = 0; i < count; ++i) {
    PartFeatureSet<T> s{Matrix<T>(parts, head.width()), std::vector<char>(static_cast<std::size_t>(parts), 1)};
    for (Index j = 0; j < s.features.size(); ++j) s.features.data()[j] = static_cast<T>(nd(rng));
    out.push_back(std::move(s));
  }
  return out;
}

template <typename T>
std::vector<PartFeatureSet<T>> sample_latents(const LatentGan<T>& gan, std::size_t count, std::uint64_t seed) {
  if (!gan.trained) throw Error("sample_latents: GAN head is untrained");
  std::vector<PartFeatureSet<T>> out;
  if (count == 0) return out;
  std::mt19937_64 rng(seed);
  const Matrix<T> flat = generate_latents(gan, gan_noise<T>(static_cast<Index>(count), gan.config.noise_size, rng));
  for (Index i = 0; i < flat.rows(); ++i) {
    PartFeatureSet<T> s{Eigen::Map<const Matrix<T>>(flat.row(i).data(), gan.parts, gan.width),
                        std::vector<char>(static_cast<std::size_t>(gan.parts), 1)};
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace lpm
