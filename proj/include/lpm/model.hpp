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

// Part-aware point cloud autoencoder.
//
//   points --h--> point features --(per-part max)--> part features
//          --(max over parts)--> global feature --decoder--> points
//
// A segmentation head labels points from [point feature | global feature]
// so unlabeled clouds can be encoded. During training the part pool reads
// ground-truth labels and the head learns from the same forward pass.

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lpm/autodiff.hpp"
#include "lpm/cloud.hpp"
#include "lpm/layers.hpp"
#include "lpm/losses.hpp"
#include "lpm/optim.hpp"
#include "lpm/pooling.hpp"

namespace lpm {

enum class LabelSource : std::uint32_t { kGiven = 0, kPredicted = 1 };

inline const char* to_string(LabelSource s) { return s == LabelSource::kGiven ? "given" : "predicted"; }

inline LabelSource label_source_from_string(const std::string& s) {
  if (s == "given") return LabelSource::kGiven;
  if (s == "predicted") return LabelSource::kPredicted;
  throw Error("unknown label source '" + s + "' (expected given|predicted)");
}

struct ModelSpec {
  Index feature_size = 64;  // latent width per part
  Index parts = 4;          // semantic part count
  Index points = 256;       // decoder output size
  PoolingKind pooling = PoolingKind::kMax;
  bool batch_norm = true;
  bool segmentation_uses_global = true;
  LabelSource label_source = LabelSource::kGiven;
  std::vector<Index> encoder_hidden{64, 128};
  std::vector<Index> segmentation_hidden{64, 32, 16};
  std::vector<Index> decoder_hidden{1024, 2048};

  /// Full-size configuration: 2048 output points, 128-wide part features.
  static ModelSpec full_scale() {
    ModelSpec s;
    s.feature_size = 128;
    s.points = 2048;
    return s;
  }

  void validate() const {
    if (feature_size < 1) throw ShapeError("feature size must be >= 1");
    if (parts < 1) throw ShapeError("part count must be >= 1");
    if (points < 1) throw ShapeError("point count must be >= 1");
  }

  bool operator==(const ModelSpec&) const = default;
};

template <typename T>
struct EncodeResult {
  Matrix<T> point_features;  // n x l
  PartFeatureSet<T> parts;   // k x l
  GlobalFeature<T> global;   // l
};

template <typename T>
struct SegmentResult {
  Matrix<T> probabilities;  // n x (k+1); class 0 is padding
  Labels labels;            // argmax over 1..k
};

template <typename T>
class LpmModel {
 public:
  ModelSpec spec;
  std::vector<DenseLayer<T>> encoder;
  std::vector<DenseLayer<T>> segmenter;
  std::vector<DenseLayer<T>> decoder;

  LpmModel() = default;

  LpmModel(ModelSpec s, std::uint64_t seed) : spec(std::move(s)) {
    spec.validate();
    std::mt19937_64 rng(seed);
    std::vector<Index> enc{3};
    enc.insert(enc.end(), spec.encoder_hidden.begin(), spec.encoder_hidden.end());
    enc.push_back(spec.feature_size);
    encoder = make_mlp<T>("encoder", enc, Activation::kRelu, spec.batch_norm, Activation::kRelu, spec.batch_norm, rng);
    std::vector<Index> seg{spec.segmentation_uses_global ? 2 * spec.feature_size : spec.feature_size};
    seg.insert(seg.end(), spec.segmentation_hidden.begin(), spec.segmentation_hidden.end());
    seg.push_back(spec.parts + 1);
    segmenter = make_mlp<T>("segmenter", seg, Activation::kRelu, spec.batch_norm, Activation::kIdentity, false, rng);
    std::vector<Index> dec{spec.feature_size};
    dec.insert(dec.end(), spec.decoder_hidden.begin(), spec.decoder_hidden.end());
    dec.push_back(spec.points * 3);
    decoder = make_mlp<T>("decoder", dec, Activation::kRelu, false, Activation::kIdentity, false, rng);
  }

  std::vector<ad::Parameter<T>*> parameters() {
    std::vector<ad::Parameter<T>*> p;
    collect_parameters(encoder, p);
    collect_parameters(segmenter, p);
    collect_parameters(decoder, p);
    return p;
  }

  std::vector<ad::Parameter<T>*> segmenter_parameters() {
    std::vector<ad::Parameter<T>*> p;
    collect_parameters(segmenter, p);
    return p;
  }

  /// Everything except the segmentation head.
  std::vector<ad::Parameter<T>*> autoencoder_parameters() {
    std::vector<ad::Parameter<T>*> p;
    collect_parameters(encoder, p);
    collect_parameters(decoder, p);
    return p;
  }

  template <typename U>
  LpmModel<U> cast() const {
    LpmModel<U> m;
    m.spec = spec;
    for (const auto& l : encoder) m.encoder.push_back(l.template cast<U>());
    for (const auto& l : segmenter) m.segmenter.push_back(l.template cast<U>());
    for (const auto& l : decoder) m.decoder.push_back(l.template cast<U>());
    return m;
  }
};

// ---------------------------------------------------------------------------
// Batched forward pass

/// Optional transform applied to the stacked (B*k) x l part features before
/// fusion; used by the VAE sampling layers.
template <typename T>
using LatentTransform = std::function<ad::Var(ad::Tape<T>&, ad::Var parts, const std::vector<char>& present)>;

enum class PoolLabels { kGiven, kPredicted };

template <typename T>
struct ForwardOptions {
  LayerRunOptions layers;
  PoolLabels pool_labels = PoolLabels::kGiven;
  bool run_segmentation = true;
  bool run_decoder = true;
  LatentTransform<T> latent_transform;
};

template <typename T>
struct BatchForward {
  ad::Var point_features;        // R x l, R = total rows of the batch
  ad::Var seg_logits;            // R x (k+1), when segmentation ran
  ad::Var parts;                 // (B*k) x l
  std::vector<char> present;     // B*k
  ad::Var latents;               // parts after the latent transform
  ad::Var global;                // B x l
  ad::Var decoded;               // (B*n) x 3, when the decoder ran
  std::vector<Index> row_offset;  // first row of each cloud, plus a sentinel
  Labels pool_labels;            // labels that fed the part pool
};

template <typename T>
Labels argmax_part_labels(const Matrix<T>& logits, const std::vector<char>& real) {
  Labels out(static_cast<std::size_t>(logits.rows()), 0);
  for (Index r = 0; r < logits.rows(); ++r) {
    if (!real[static_cast<std::size_t>(r)]) continue;
    Index best = 1;
    for (Index c = 2; c < logits.cols(); ++c)
      if (logits(r, c) > logits(r, best)) best = c;
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

/// Runs the network over a batch of clouds stacked row-wise.
template <typename T>
BatchForward<T> forward_batch(ad::Tape<T>& t, LpmModel<T>& model, std::span<const LabeledCloud* const> batch,
                              const ForwardOptions<T>& opt) {
  const ModelSpec& spec = model.spec;
  const Index k = spec.parts;
  const auto B = static_cast<Index>(batch.size());
  if (B == 0) throw EmptyInputError("forward_batch: empty batch");
  BatchForward<T> out;
  out.row_offset.push_back(0);
  for (const auto* c : batch) {
    if (c->k != k) {
      throw InvalidLabelError("cloud has k = " + std::to_string(c->k) + " but model has k = " + std::to_string(k));
    }
    out.row_offset.push_back(out.row_offset.back() + c->size());
  }
  const Index R = out.row_offset.back();
  Matrix<T> x(R, 3);
  Labels labels(static_cast<std::size_t>(R));
  std::vector<char> real(static_cast<std::size_t>(R));
  std::vector<Index> row_cloud(static_cast<std::size_t>(R));
  for (Index b = 0; b < B; ++b) {
    const auto* c = batch[static_cast<std::size_t>(b)];
    x.middleRows(out.row_offset[b], c->size()) = c->points.template cast<T>();
    for (Index i = 0; i < c->size(); ++i) {
      const int l = c->labels[static_cast<std::size_t>(i)];
      if (l < 0 || l > k) {
        throw InvalidLabelError("label " + std::to_string(l) + " outside 0.." + std::to_string(k));
      }
      const auto r = static_cast<std::size_t>(out.row_offset[b] + i);
      labels[r] = l;
      real[r] = l > 0;
      row_cloud[r] = b;
    }
  }
  LayerRunOptions lopt = opt.layers;
  lopt.row_mask = &real;
  out.point_features = forward_pointwise_mlp<T>(t, model.encoder, t.constant(std::move(x)), lopt);

  if (opt.run_segmentation || opt.pool_labels == PoolLabels::kPredicted) {
    ad::Var seg_in = out.point_features;
    if (spec.segmentation_uses_global) {
      std::vector<Index> seg(static_cast<std::size_t>(R));
      for (Index r = 0; r < R; ++r) seg[static_cast<std::size_t>(r)] = real[static_cast<std::size_t>(r)] ? row_cloud[static_cast<std::size_t>(r)] : -1;
      auto direct = ad::segment_pool(t, out.point_features, seg, B, spec.pooling);
      for (Index b = 0; b < B; ++b) {
        if (!direct.present[static_cast<std::size_t>(b)]) throw EmptyInputError("cloud " + std::to_string(b) + " has only padding");
      }
      seg_in = ad::concat_cols(t, out.point_features, ad::gather_rows(t, direct.out, row_cloud));
    }
    out.seg_logits = forward_pointwise_mlp<T>(t, model.segmenter, seg_in, lopt);
  }

  out.pool_labels = opt.pool_labels == PoolLabels::kGiven ? labels : argmax_part_labels(t.value(out.seg_logits), real);
  std::vector<Index> part_seg(static_cast<std::size_t>(R));
  for (Index r = 0; r < R; ++r) {
    const int l = out.pool_labels[static_cast<std::size_t>(r)];
    part_seg[static_cast<std::size_t>(r)] = l > 0 ? row_cloud[static_cast<std::size_t>(r)] * k + (l - 1) : -1;
  }
  auto parts = ad::segment_pool(t, out.point_features, part_seg, B * k, spec.pooling);
  out.parts = parts.out;
  out.present = parts.present;
  out.latents = opt.latent_transform ? opt.latent_transform(t, out.parts, out.present) : out.parts;

  std::vector<Index> fuse_seg(static_cast<std::size_t>(B * k));
  for (Index s = 0; s < B * k; ++s) fuse_seg[static_cast<std::size_t>(s)] = out.present[static_cast<std::size_t>(s)] ? s / k : -1;
  auto global = ad::segment_pool(t, out.latents, fuse_seg, B, spec.pooling);
  for (Index b = 0; b < B; ++b) {
    if (!global.present[static_cast<std::size_t>(b)]) throw EmptyInputError("cloud " + std::to_string(b) + " has no present part");
  }
  out.global = global.out;
  if (opt.run_decoder) {
    ad::Var flat = forward_pointwise_mlp<T>(t, model.decoder, out.global, lopt);
    out.decoded = ad::reshape(t, flat, B * spec.points, 3);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inference (frozen statistics; safe for concurrent callers)

namespace detail {

template <typename T>
ForwardOptions<T> inference_options(PoolLabels labels, bool segment, bool decode) {
  ForwardOptions<T> o;
  o.layers.training = false;
  o.pool_labels = labels;
  o.run_segmentation = segment;
  o.run_decoder = decode;
  return o;
}

}  // namespace detail

/// Encodes a cloud with its own labels (0 = padding).
template <typename T>
EncodeResult<T> encode(const LpmModel<T>& model, const LabeledCloud& cloud) {
  auto& m = const_cast<LpmModel<T>&>(model);  // inference never mutates parameters
  ad::Tape<T> t(false);
  const LabeledCloud* ptr = &cloud;
  auto f = forward_batch<T>(t, m, std::span<const LabeledCloud* const>(&ptr, 1),
                            detail::inference_options<T>(PoolLabels::kGiven, false, false));
  EncodeResult<T> r;
  r.point_features = t.value(f.point_features);
  r.parts = {t.value(f.parts), f.present};
  r.global = t.value(f.global).row(0);
  return r;
}

/// Encodes with labels predicted by the segmentation head. Labels of the
/// input only mark padding (0); their part ids are ignored.
template <typename T>
std::pair<EncodeResult<T>, Labels> encode_predicted(const LpmModel<T>& model, const LabeledCloud& cloud) {
  auto& m = const_cast<LpmModel<T>&>(model);
  ad::Tape<T> t(false);
  LabeledCloud masked = cloud;
  for (auto& l : masked.labels) l = l > 0 ? 1 : 0;
  const LabeledCloud* ptr = &masked;
  auto f = forward_batch<T>(t, m, std::span<const LabeledCloud* const>(&ptr, 1),
                            detail::inference_options<T>(PoolLabels::kPredicted, true, false));
  EncodeResult<T> r;
  r.point_features = t.value(f.point_features);
  r.parts = {t.value(f.parts), f.present};
  r.global = t.value(f.global).row(0);
  return {std::move(r), f.pool_labels};
}

/// Per-point class probabilities from point features and a global feature.
template <typename T>
SegmentResult<T> segment(const LpmModel<T>& model, const Matrix<T>& point_features, const GlobalFeature<T>& global) {
  auto& m = const_cast<LpmModel<T>&>(model);
  const Index l = model.spec.feature_size;
  if (point_features.cols() != l || global.cols() != l) {
    throw ShapeError("segment: expected feature width " + std::to_string(l) + ", got " +
                     std::to_string(point_features.cols()) + " and " + std::to_string(global.cols()));
  }
  ad::Tape<T> t(false);
  ad::Var in = t.constant(point_features);
  if (model.spec.segmentation_uses_global) {
    Matrix<T> g = global.replicate(point_features.rows(), 1);
    in = ad::concat_cols(t, in, t.constant(std::move(g)));
  }
  LayerRunOptions lopt;
  ad::Var logits = forward_pointwise_mlp<T>(t, m.segmenter, in, lopt);
  SegmentResult<T> r;
  r.probabilities = ad::softmax_rows(t.value(logits));
  r.labels = argmax_part_labels(t.value(logits), std::vector<char>(static_cast<std::size_t>(point_features.rows()), 1));
  return r;
}

template <typename T>
Points decode(const LpmModel<T>& model, const GlobalFeature<T>& global) {
  auto& m = const_cast<LpmModel<T>&>(model);
  if (global.cols() != model.spec.feature_size) {
    throw ShapeError("decode: expected feature width " + std::to_string(model.spec.feature_size) + ", got " +
                     std::to_string(global.cols()));
  }
  ad::Tape<T> t(false);
  LayerRunOptions lopt;
  ad::Var flat = forward_pointwise_mlp<T>(t, m.decoder, t.constant(Matrix<T>(global)), lopt);
  return Eigen::Map<const Matrix<T>>(t.value(flat).data(), model.spec.points, 3).template cast<double>();
}

/// Labels a cloud with the segmentation head; every row is a real point.
template <typename T>
Labels predict_labels(const LpmModel<T>& model, const Points& points) {
  LabeledCloud c;
  c.points = points;
  c.labels.assign(static_cast<std::size_t>(points.rows()), 1);
  c.k = static_cast<int>(model.spec.parts);
  return encode_predicted(model, c).second;
}

/// Decodes a global feature and labels the result.
template <typename T>
LabeledCloud decode_labeled(const LpmModel<T>& model, const GlobalFeature<T>& global) {
  LabeledCloud c;
  c.points = decode(model, global);
  c.k = static_cast<int>(model.spec.parts);
  c.labels = predict_labels(model, c.points);
  return c;
}

/// Full autoencoding path. With kPredicted the segmentation head supplies
/// the part labels, so the input needs no annotation.
template <typename T>
LabeledCloud reconstruct(const LpmModel<T>& model, const LabeledCloud& cloud, LabelSource source) {
  const EncodeResult<T> e = source == LabelSource::kGiven ? encode(model, cloud) : encode_predicted(model, cloud).first;
  return decode_labeled(model, e.global);
}

// ---------------------------------------------------------------------------
// Training

enum class SegmentationTraining {
  kJoint,         // head trained with cross-entropy alongside the autoencoder
  kAbsent,        // no head; ground-truth labels only
  kFrozenRandom,  // randomly initialized head, frozen, and its labels feed the pool
};

enum class ReconMetric { kChamfer, kEmdApprox };

struct TrainConfig {
  double learning_rate = 5e-4;
  int epochs = 200;
  int batch_size = 32;
  ReconMetric metric = ReconMetric::kChamfer;
  Reduction reduction = Reduction::kMean;
  double segmentation_weight = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double bn_momentum = 0.9;
  std::uint64_t seed = 1;
  SegmentationTraining segmentation = SegmentationTraining::kJoint;

  void validate() const {
    if (!(learning_rate >= 0.0)) throw Error("learning rate must be >= 0");
    if (epochs < 1) throw Error("epochs must be >= 1");
    if (batch_size < 1) throw Error("batch size must be >= 1");
  }
};

struct EpochRecord {
  int epoch = 0;
  double reconstruction = 0.0;
  double segmentation = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  bool operator==(const TrainHistory& o) const {
    if (epochs.size() != o.epochs.size()) return false;
    for (std::size_t i = 0; i < epochs.size(); ++i) {
      if (epochs[i].epoch != o.epochs[i].epoch || epochs[i].reconstruction != o.epochs[i].reconstruction ||
          epochs[i].segmentation != o.epochs[i].segmentation) {
        return false;
      }
    }
    return true;
  }
};

/// Reconstruction targets: real points of each cloud.
template <typename T>
std::vector<Matrix<T>> reconstruction_targets(std::span<const LabeledCloud* const> batch) {
  std::vector<Matrix<T>> targets;
  targets.reserve(batch.size());
  for (const auto* c : batch) targets.push_back(c->real_points().template cast<T>());
  return targets;
}

template <typename T>
ad::Var reconstruction_loss(ad::Tape<T>& t, ad::Var decoded, Index n, const std::vector<Matrix<T>>& targets,
                            const TrainConfig& cfg) {
  return cfg.metric == ReconMetric::kChamfer ? chamfer_loss(t, decoded, n, targets, cfg.reduction)
                                             : emd_loss(t, decoded, n, targets, cfg.reduction);
}

/// Cross-entropy targets: the point's part id, -1 for padding.
inline std::vector<int> segmentation_targets(const Labels& labels) {
  std::vector<int> t(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) t[i] = labels[i] > 0 ? labels[i] : -1;
  return t;
}

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minibatch Adam on reconstruction + weight * cross-entropy.
template <typename T>
TrainHistory train(LpmModel<T>& model, const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  ScopedFlushDenormals ftz;
  if (data.k != model.spec.parts) {
    throw Error("dataset has k = " + std::to_string(data.k) + " but model has k = " + std::to_string(model.spec.parts));
  }
  if (data.samples.empty()) throw EmptyInputError("train: empty dataset");
  std::vector<ad::Parameter<T>*> params =
      cfg.segmentation == SegmentationTraining::kJoint ? model.parameters() : model.autoencoder_parameters();
  AdamState<T> adam(AdamConfig{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_epsilon});
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  TrainHistory hist;
  auto all_params = model.parameters();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double recon_sum = 0.0;
    double seg_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0, batch_id = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batch_id) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const LabeledCloud*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&data.samples[order[i]]);
      zero_grads<T>(all_params);
      ad::Tape<T> t;
      ForwardOptions<T> fo;
      fo.layers.training = true;
      fo.layers.update_running_stats = true;
      fo.layers.momentum = cfg.bn_momentum;
      fo.run_segmentation = cfg.segmentation != SegmentationTraining::kAbsent;
      fo.pool_labels = cfg.segmentation == SegmentationTraining::kFrozenRandom ? PoolLabels::kPredicted : PoolLabels::kGiven;
      auto f = forward_batch<T>(t, model, batch, fo);
      const auto targets = reconstruction_targets<T>(batch);
      ad::Var recon = reconstruction_loss(t, f.decoded, model.spec.points, targets, cfg);
      ad::Var loss = recon;
      double seg_value = 0.0;
      if (cfg.segmentation == SegmentationTraining::kJoint) {
        Labels stacked;
        for (const auto* c : batch) stacked.insert(stacked.end(), c->labels.begin(), c->labels.end());
        ad::Var ce = ad::softmax_cross_entropy(t, f.seg_logits, segmentation_targets(stacked));
        seg_value = static_cast<double>(t.value(ce)(0, 0));
        loss = ad::add(t, recon, ad::scale(t, ce, static_cast<T>(cfg.segmentation_weight)));
      }
      const double recon_value = static_cast<double>(t.value(recon)(0, 0));
      if (!std::isfinite(recon_value) || !std::isfinite(seg_value)) {
        throw NonFiniteError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_id));
      }
      t.backward(loss);
      adam_step<T>(params, adam);
      recon_sum += recon_value * static_cast<double>(batch.size());
      seg_sum += seg_value * static_cast<double>(batch.size());
      seen += batch.size();
    }
    EpochRecord rec{epoch, recon_sum / static_cast<double>(seen), seg_sum / static_cast<double>(seen)};
    hist.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return hist;
}

}  // namespace lpm
