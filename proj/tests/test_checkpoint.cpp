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
using testing::TempDir;
using testing::tiny_spec;

std::string bytes_of(const Bundle& b) { return serialize(to_container(b)); }

Bundle trained_bundle(CheckpointKind kind) {
  Bundle b;
  b.kind = kind;
  b.model = LpmModel<float>(tiny_spec(3, 8, 16), 1);
  for (auto& l : b.model.encoder) {
    if (l.spec.batch_norm) {
      l.running_mean.setConstant(0.25f);
      l.running_var.setConstant(1.5f);
    }
  }
  b.extra = {{"seed", 1}, {"note", "unit"}};
  if (kind == CheckpointKind::kVae) {
    b.vae = VaeHead<float>(8, 0.2, 2);
    b.vae->log_variance.bias.value.setConstant(-0.5f);
    b.vae->trained = true;
  } else if (kind != CheckpointKind::kAutoencoder) {
    GanConfig g;
    g.objective = kind == CheckpointKind::kGan ? GanObjective::kStandard : GanObjective::kWassersteinGp;
    g.noise_size = 5;
    g.hidden = 7;
    g.critic_steps = 3;
    b.gan = LatentGan<float>(g, 3, 8, 3);
    b.gan->trained = true;
  }
  return b;
}

TEST(Checkpoint, RoundTripEveryKind) {
  TempDir dir;
  for (auto kind : {CheckpointKind::kAutoencoder, CheckpointKind::kVae, CheckpointKind::kGan, CheckpointKind::kWgan}) {
    const Bundle b = trained_bundle(kind);
    const auto path = dir.path() / (std::string(to_string(kind)) + ".lpmn");
    save_bundle(path, b);
    const Bundle back = load_bundle(path);
    EXPECT_EQ(back.kind, kind);
    EXPECT_EQ(back.extra, b.extra);
    EXPECT_EQ(back.model.spec, b.model.spec);
    EXPECT_EQ(bytes_of(back), bytes_of(b)) << to_string(kind);
    EXPECT_EQ(back.vae.has_value(), kind == CheckpointKind::kVae);
    EXPECT_EQ(back.gan.has_value(), kind == CheckpointKind::kGan || kind == CheckpointKind::kWgan);
    if (back.vae) {
      EXPECT_DOUBLE_EQ(back.vae->beta, 0.2);
      EXPECT_TRUE(back.vae->trained);
    }
    if (back.gan) {
      EXPECT_EQ(back.gan->config.critic_steps, 3);
      EXPECT_EQ(back.gan->config.noise_size, 5);
      EXPECT_EQ(to_string(back.gan->config.objective), std::string(to_string(kind)));
    }
  }
}

TEST(Checkpoint, LoadedModelEncodesIdentically) {
  TempDir dir;
  const Bundle b = trained_bundle(CheckpointKind::kAutoencoder);
  save_model(dir.path() / "m.lpmn", b.model);
  const auto m = load_model(dir.path() / "m.lpmn");
  std::mt19937_64 rng(5);
  for (int i = 0; i < 5; ++i) {
    const auto c = random_cloud(16, 3, rng, 2);
    const auto e1 = encode(b.model, c);
    const auto e2 = encode(m, c);
    EXPECT_EQ(e1.parts, e2.parts);
    EXPECT_EQ(e1.global, e2.global);
    EXPECT_EQ(decode(b.model, e1.global), decode(m, e2.global));
  }
}

TEST(Checkpoint, ContentHashIsStableAndSensitive) {
  const std::string a = bytes_of(trained_bundle(CheckpointKind::kAutoencoder));
  EXPECT_EQ(content_hash(a), content_hash(a));
  EXPECT_EQ(content_hash(a).size(), 16u);
  std::string b = a;
  b[b.size() / 2] ^= 1;
  EXPECT_NE(content_hash(a), content_hash(b));
  EXPECT_EQ(content_hash(""), "cbf29ce484222325");
}

TEST(Checkpoint, CorruptionIsRejected) {
  const std::string good = bytes_of(trained_bundle(CheckpointKind::kVae));
  auto load = [](const std::string& s) { return from_container(deserialize(s)); };
  EXPECT_NO_THROW(load(good));

  std::string magic = good;
  magic[0] = 'X';
  EXPECT_THROW(load(magic), FormatError);

  std::string version = good;
  version[4] = 9;
  EXPECT_THROW(load(version), FormatError);

  std::string kind = good;
  kind[8] = 7;
  EXPECT_THROW(load(kind), FormatError);

  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, good.size() / 2, good.size() - 1}) {
    EXPECT_THROW(load(good.substr(0, cut)), FormatError) << "cut at " << cut;
  }
  EXPECT_THROW(load(good + "x"), FormatError);
}

TEST(Checkpoint, ArchitectureMismatchIsRejected) {
  Container c = to_container(trained_bundle(CheckpointKind::kAutoencoder));
  c.metadata["model"]["feature_size"] = 9;
  EXPECT_THROW(from_container(deserialize(serialize(c))), FormatError);

  Container extra = to_container(trained_bundle(CheckpointKind::kAutoencoder));
  std::mt19937_64 rng(1);
  extra.layers.emplace_back(LayerSpec{"stray.0", 2, 2, Activation::kIdentity, false}, rng);
  EXPECT_THROW(from_container(deserialize(serialize(extra))), FormatError);

  Container missing = to_container(trained_bundle(CheckpointKind::kVae));
  missing.layers.pop_back();
  EXPECT_THROW(from_container(deserialize(serialize(missing))), FormatError);
}

TEST(Checkpoint, NonFiniteWeightsAreNotWritten) {
  Bundle b = trained_bundle(CheckpointKind::kAutoencoder);
  b.model.decoder[0].weight.value(0, 0) = std::numeric_limits<float>::infinity();
  EXPECT_THROW(bytes_of(b), NonFiniteError);
}

TEST(Checkpoint, HeadlessKindsAreRejected) {
  Bundle b = trained_bundle(CheckpointKind::kAutoencoder);
  b.kind = CheckpointKind::kVae;
  EXPECT_THROW(to_container(b), Error);
  b.kind = CheckpointKind::kGan;
  EXPECT_THROW(to_container(b), Error);
}

}  // namespace
}  // namespace lpm
