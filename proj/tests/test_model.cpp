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

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace lpm {
namespace {

using testing::random_cloud;
using testing::tiny_spec;

/// Runs a few training steps so batch-norm running statistics move away
/// from their initial values.
template <typename T>
void warm_up(LpmModel<T>& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Dataset ds;
  ds.k = static_cast<int>(model.spec.parts);
  for (int i = 0; i < 8; ++i) {
    ds.samples.push_back(random_cloud(20, ds.k, rng, 3));
    ds.splits.push_back(Split::kTrain);
  }
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  train(model, ds, cfg);
}

TEST(Encode, TwoStagePoolEqualsDirectMaxOverRealRows) {
  LpmModel<float> model(tiny_spec(4, 16), 3);
  warm_up(model, 1);
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const LabeledCloud c = random_cloud(40, 4, rng, trial % 5);
    const auto e = encode(model, c);
    EXPECT_EQ(e.global, direct_pool<float>(e.point_features, c.labels, PoolingKind::kMax));
    EXPECT_EQ(e.global, global_maxpool(e.parts));
  }
}

TEST(Encode, PartRowsMatchPerPartMaxOracle) {
  LpmModel<double> model(tiny_spec(3, 8), 4);
  std::mt19937_64 rng(5);
  LabeledCloud c = random_cloud(25, 3, rng, 2);
  for (auto& l : c.labels)
    if (l == 2) l = 1;  // part 2 absent
  const auto e = encode(model, c);
  for (int p = 1; p <= 3; ++p) {
    const bool present = std::count(c.labels.begin(), c.labels.end(), p) > 0;
    EXPECT_EQ(e.parts.has(p), present);
    RowVector<double> want = RowVector<double>::Zero(8);
    bool first = true;
    for (std::size_t i = 0; i < c.labels.size(); ++i) {
      if (c.labels[i] != p) continue;
      want = first ? RowVector<double>(e.point_features.row(static_cast<Index>(i)))
                   : RowVector<double>(want.cwiseMax(e.point_features.row(static_cast<Index>(i))));
      first = false;
    }
    EXPECT_EQ(RowVector<double>(e.parts.features.row(p - 1)), want);
  }
}

TEST(Encode, PermutationInvariant) {
  LpmModel<float> model(tiny_spec(4, 16), 6);
  warm_up(model, 7);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const LabeledCloud c = random_cloud(30, 4, rng, 3);
    const auto base = encode(model, c);
    std::vector<Index> perm(static_cast<std::size_t>(c.size()));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    LabeledCloud p = c;
    for (Index i = 0; i < c.size(); ++i) {
      p.points.row(i) = c.points.row(perm[static_cast<std::size_t>(i)]);
      p.labels[static_cast<std::size_t>(i)] = c.labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    }
    const auto e = encode(model, p);
    EXPECT_EQ(e.parts, base.parts);
    EXPECT_EQ(e.global, base.global);
  }
}

TEST(Encode, Errors) {
  LpmModel<float> model(tiny_spec(3), 1);
  std::mt19937_64 rng(9);
  EXPECT_THROW(encode(model, random_cloud(10, 4, rng)), InvalidLabelError);
  LabeledCloud pad = random_cloud(5, 3, rng);
  std::fill(pad.labels.begin(), pad.labels.end(), 0);
  EXPECT_THROW(encode(model, pad), EmptyInputError);
  EXPECT_THROW(decode(model, RowVector<float>(RowVector<float>::Zero(5))), ShapeError);
}

TEST(Model, FullNetworkGradientCheck) {
  LpmModel<double> model(tiny_spec(3, 6, 8), 10);
  std::mt19937_64 rng(11);
  const LabeledCloud a = random_cloud(8, 3, rng);
  const LabeledCloud b = random_cloud(6, 3, rng, 2);
  std::vector<const LabeledCloud*> batch{&a, &b};
  TrainConfig cfg;
  auto params = model.parameters();
  auto rep = grad_check(
      [&](ad::Tape<double>& t) {
        ForwardOptions<double> fo;
        fo.layers.training = true;
        auto f = forward_batch<double>(t, model, batch, fo);
        ad::Var recon = reconstruction_loss(t, f.decoded, model.spec.points, reconstruction_targets<double>(batch), cfg);
        Labels stacked = a.labels;
        stacked.insert(stacked.end(), b.labels.begin(), b.labels.end());
        ad::Var ce = ad::softmax_cross_entropy(t, f.seg_logits, segmentation_targets(stacked));
        return ad::add(t, recon, ce);
      },
      params);
  EXPECT_LE(rep.max_relative_error, 1e-4) << rep.worst_parameter << "[" << rep.worst_index << "]";
  EXPECT_GT(rep.checked, 500);
}

TEST(Model, InferenceIsDeterministicAndBatchIndependent) {
  LpmModel<float> model(tiny_spec(3, 8), 12);
  warm_up(model, 13);
  std::mt19937_64 rng(14);
  const LabeledCloud a = random_cloud(12, 3, rng);
  const LabeledCloud b = random_cloud(17, 3, rng, 4);
  ad::Tape<float> t(false);
  std::vector<const LabeledCloud*> batch{&a, &b};
  auto f = forward_batch<float>(t, model, batch, detail::inference_options<float>(PoolLabels::kGiven, false, true));
  EXPECT_EQ(RowVector<float>(t.value(f.global).row(1)), encode(model, b).global);
  EXPECT_EQ(decode(model, encode(model, a).global), decode(model, encode(model, a).global));
}

TEST(Model, LatentTransformHookFeedsFusionAndDecoder) {
  LpmModel<double> model(tiny_spec(3, 6, 8), 15);
  std::mt19937_64 rng(16);
  const LabeledCloud a = random_cloud(9, 3, rng);
  std::vector<const LabeledCloud*> batch{&a};
  ad::Tape<double> t(false);
  auto opt = detail::inference_options<double>(PoolLabels::kGiven, false, true);
  opt.latent_transform = [](ad::Tape<double>& tp, ad::Var parts, const std::vector<char>&) {
    return ad::scale(tp, parts, 2.0);
  };
  auto f = forward_batch<double>(t, model, batch, opt);
  const RowVector<double> g = t.value(f.global).row(0);
  EXPECT_EQ(g, RowVector<double>(2.0 * encode(model, a).global));
  EXPECT_EQ(t.value(f.decoded), decode(model, g));
}

TEST(Model, PredictedLabelsNeverPadding) {
  LpmModel<float> model(tiny_spec(4, 8), 17);
  std::mt19937_64 rng(18);
  const LabeledCloud c = random_cloud(30, 4, rng, 5);
  auto [e, labels] = encode_predicted(model, c);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (c.labels[i] == 0) {
      EXPECT_EQ(labels[i], 0);
    } else {
      EXPECT_GE(labels[i], 1);
      EXPECT_LE(labels[i], 4);
    }
  }
  const auto seg = segment(model, e.point_features, e.global);
  EXPECT_EQ(seg.probabilities.rows(), c.size());
  EXPECT_NEAR(seg.probabilities.row(0).sum(), 1.0f, 1e-5f);
  const auto r = reconstruct(model, c, LabelSource::kPredicted);
  EXPECT_EQ(r.size(), model.spec.points);
}

Dataset tiny_dataset(std::size_t count, std::uint64_t seed) {
  Dataset ds = synth_dataset(SynthSpec::chair(16, seed), count);
  return ds;
}

TEST(Train, SameSeedSameHistory) {
  const Dataset ds = tiny_dataset(24, 1);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 8;
  LpmModel<float> m1(tiny_spec(4, 8), 3), m2(tiny_spec(4, 8), 3);
  const auto h1 = train(m1, ds, cfg);
  const auto h2 = train(m2, ds, cfg);
  EXPECT_TRUE(h1 == h2);
  EXPECT_EQ(m1.decoder.back().weight.value, m2.decoder.back().weight.value);
  cfg.seed = 2;
  LpmModel<float> m3(tiny_spec(4, 8), 3);
  EXPECT_FALSE(train(m3, ds, cfg) == h1);
}

TEST(Train, LossDecreases) {
  const Dataset ds = tiny_dataset(32, 2);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 8;
  cfg.learning_rate = 2e-3;
  LpmModel<float> model(tiny_spec(4, 16), 4);
  const auto h = train(model, ds, cfg);
  EXPECT_LT(h.epochs.back().reconstruction, 0.5 * h.epochs.front().reconstruction);
  EXPECT_LT(h.epochs.back().segmentation, h.epochs.front().segmentation);
}

TEST(Train, SegmentationModes) {
  const Dataset ds = tiny_dataset(16, 3);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  for (auto mode : {SegmentationTraining::kAbsent, SegmentationTraining::kFrozenRandom}) {
    LpmModel<float> model(tiny_spec(4, 8), 5);
    const auto before = model.segmenter.front().weight.value;
    const auto enc_before = model.encoder.front().weight.value;
    cfg.segmentation = mode;
    const auto h = train(model, ds, cfg);
    EXPECT_EQ(model.segmenter.front().weight.value, before);
    EXPECT_NE(model.encoder.front().weight.value, enc_before);
    EXPECT_EQ(h.epochs.back().segmentation, 0.0);
  }
}

TEST(Train, EmdMetricRuns) {
  const Dataset ds = tiny_dataset(8, 4);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.metric = ReconMetric::kEmdApprox;
  LpmModel<float> model(tiny_spec(4, 8), 6);
  const auto h = train(model, ds, cfg);
  EXPECT_TRUE(std::isfinite(h.epochs.back().reconstruction));
}

TEST(Train, Errors) {
  const Dataset ds = tiny_dataset(4, 5);
  LpmModel<float> model(tiny_spec(3, 8), 7);
  EXPECT_THROW(train(model, ds, TrainConfig{}), Error);
  LpmModel<float> ok(tiny_spec(4, 8), 7);
  TrainConfig bad;
  bad.epochs = 0;
  EXPECT_THROW(train(ok, ds, bad), Error);
  EXPECT_THROW(train(ok, Dataset{{}, {}, "x", 4}, TrainConfig{}), EmptyInputError);
  TrainConfig huge;
  huge.epochs = 1;
  huge.learning_rate = 1e30;
  huge.batch_size = 2;
  EXPECT_THROW(train(ok, ds, huge), NonFiniteError);
}

TEST(ModelSpec, Validation) {
  ModelSpec s;
  s.parts = 0;
  EXPECT_THROW(LpmModel<float>(s, 1), ShapeError);
  EXPECT_EQ(ModelSpec::full_scale().points, 2048);
}

}  // namespace
}  // namespace lpm
