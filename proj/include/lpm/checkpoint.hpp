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

// Binary checkpoint container.
//
//   "LPMN"  u32 version  u32 kind
//   u32 metadata length, metadata bytes (JSON text)
//   u32 layer count, per layer: name, u64 in, u64 out, u32 activation, u8 batch_norm
//   u32 tensor count, per tensor: name, u64 rows, u64 cols
//   tensor data in the same order, float32 row-major
//
// Integers and floats are little-endian; names are u32 length + bytes.
// Each layer contributes weight, bias and, with batch norm, gamma, beta,
// running mean and running variance.

#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lpm/cloud.hpp"
#include "lpm/generative.hpp"
#include "lpm/layers.hpp"
#include "lpm/model.hpp"

namespace lpm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointKind : std::uint32_t { kAutoencoder = 0, kVae = 1, kGan = 2, kWgan = 3 };

inline const char* to_string(CheckpointKind k) {
  switch (k) {
    case CheckpointKind::kAutoencoder:
      return "autoencoder";
    case CheckpointKind::kVae:
      return "vae";
    case CheckpointKind::kGan:
      return "gan";
    case CheckpointKind::kWgan:
      return "wgan";
  }
  return "autoencoder";
}

struct Container {
  CheckpointKind kind = CheckpointKind::kAutoencoder;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<DenseLayer<float>> layers;
};

namespace detail {

class ByteWriter {
 public:
  template <typename U>
  void put(U v) {
    static_assert(std::is_trivially_copyable_v<U>);
    unsigned char b[sizeof(U)];
    std::memcpy(b, &v, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(U));
    out_.append(reinterpret_cast<const char*>(b), sizeof(U));
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  const std::string& bytes() const { return out_; }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& data) : data_(data) {}

  template <typename U>
  U get(const char* what) {
    if (pos_ + sizeof(U) > data_.size()) throw FormatError(std::string("checkpoint truncated while reading ") + what);
    unsigned char b[sizeof(U)];
    std::memcpy(b, data_.data() + pos_, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(U));
    pos_ += sizeof(U);
    U v;
    std::memcpy(&v, b, sizeof(U));
    return v;
  }
  std::string get_string(const char* what) {
    const auto n = get<std::uint32_t>(what);
    if (pos_ + n > data_.size()) throw FormatError(std::string("checkpoint truncated while reading ") + what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  const std::string& data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize(const Container& c) {
  detail::ByteWriter w;
  for (char ch : std::string("LPMN")) w.put(ch);
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint32_t>(c.kind));
  w.put_string(c.metadata.dump());
  w.put(static_cast<std::uint32_t>(c.layers.size()));
  for (const auto& l : c.layers) {
    w.put_string(l.spec.name);
    w.put(static_cast<std::uint64_t>(l.spec.in));
    w.put(static_cast<std::uint64_t>(l.spec.out));
    w.put(static_cast<std::uint32_t>(l.spec.activation));
    w.put(static_cast<std::uint8_t>(l.spec.batch_norm ? 1 : 0));
  }
  std::vector<std::pair<std::string, Matrix<float>>> tensors;
  for (const auto& l : c.layers) {
    tensors.emplace_back(l.weight.name, l.weight.value);
    tensors.emplace_back(l.bias.name, l.bias.value);
    if (l.spec.batch_norm) {
      tensors.emplace_back(l.gamma.name, l.gamma.value);
      tensors.emplace_back(l.beta.name, l.beta.value);
      tensors.emplace_back(l.spec.name + ".running_mean", Matrix<float>(l.running_mean));
      tensors.emplace_back(l.spec.name + ".running_var", Matrix<float>(l.running_var));
    }
  }
  w.put(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    w.put_string(name);
    w.put(static_cast<std::uint64_t>(m.rows()));
    w.put(static_cast<std::uint64_t>(m.cols()));
  }
  for (const auto& [name, m] : tensors) {
    if (!m.allFinite()) throw NonFiniteError("checkpoint: tensor '" + name + "' is not finite");
    for (Index i = 0; i < m.size(); ++i) w.put(m.data()[i]);
  }
  return w.bytes();
}

inline Container deserialize(const std::string& bytes) {
  detail::ByteReader r(bytes);
  std::string magic;
  for (int i = 0; i < 4; ++i) magic.push_back(r.get<char>("magic"));
  if (magic != "LPMN") throw FormatError("not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  Container c;
  const auto kind = r.get<std::uint32_t>("kind");
  if (kind > 3) throw FormatError("unknown checkpoint kind " + std::to_string(kind));
  c.kind = static_cast<CheckpointKind>(kind);
  try {
    c.metadata = nlohmann::json::parse(r.get_string("metadata"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  const auto n_layers = r.get<std::uint32_t>("layer count");
  if (n_layers > r.remaining()) throw FormatError("checkpoint layer count exceeds file size");
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    DenseLayer<float> l;
    l.spec.name = r.get_string("layer name");
    l.spec.in = static_cast<Index>(r.get<std::uint64_t>("layer input size"));
    l.spec.out = static_cast<Index>(r.get<std::uint64_t>("layer output size"));
    const auto act = r.get<std::uint32_t>("activation");
    if (act > 2) throw FormatError("layer '" + l.spec.name + "': unknown activation " + std::to_string(act));
    l.spec.activation = static_cast<Activation>(act);
    l.spec.batch_norm = r.get<std::uint8_t>("batch norm flag") != 0;
    c.layers.push_back(std::move(l));
  }
  struct Desc {
    std::string name;
    Index rows, cols;
  };
  const auto n_tensors = r.get<std::uint32_t>("tensor count");
  if (n_tensors > r.remaining()) throw FormatError("checkpoint tensor count exceeds file size");
  std::vector<Desc> descs(n_tensors);
  for (auto& d : descs) {
    d.name = r.get_string("tensor name");
    d.rows = static_cast<Index>(r.get<std::uint64_t>("tensor rows"));
    d.cols = static_cast<Index>(r.get<std::uint64_t>("tensor cols"));
  }
  std::size_t next = 0;
  auto read_tensor = [&](const std::string& expected, Index rows, Index cols) {
    if (next >= descs.size()) throw FormatError("checkpoint is missing tensor '" + expected + "'");
    const auto& d = descs[next++];
    if (d.name != expected || d.rows != rows || d.cols != cols) {
      throw FormatError("checkpoint tensor '" + d.name + "' " + shape_str(d.rows, d.cols) + " where '" + expected +
                        "' " + shape_str(rows, cols) + " was expected");
    }
    if (static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) > r.remaining() / sizeof(float)) {
      throw FormatError("checkpoint truncated in tensor '" + expected + "'");
    }
    Matrix<float> m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = r.get<float>("tensor data");
    return m;
  };
  for (auto& l : c.layers) {
    const auto& s = l.spec;
    l.weight = ad::Parameter<float>(s.name + ".weight", read_tensor(s.name + ".weight", s.in, s.out));
    l.bias = ad::Parameter<float>(s.name + ".bias", read_tensor(s.name + ".bias", 1, s.out));
    if (s.batch_norm) {
      l.gamma = ad::Parameter<float>(s.name + ".gamma", read_tensor(s.name + ".gamma", 1, s.out));
      l.beta = ad::Parameter<float>(s.name + ".beta", read_tensor(s.name + ".beta", 1, s.out));
      l.running_mean = read_tensor(s.name + ".running_mean", 1, s.out).row(0);
      l.running_var = read_tensor(s.name + ".running_var", 1, s.out).row(0);
    }
  }
  if (next != descs.size()) throw FormatError("checkpoint has unexpected extra tensors");
  if (!r.at_end()) throw FormatError("checkpoint has trailing bytes");
  return c;
}

/// FNV-1a over the file bytes, as 16 hex digits.
inline std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Model and head bundles

inline nlohmann::json to_json(const ModelSpec& s) {
  return {{"feature_size", s.feature_size},
          {"parts", s.parts},
          {"points", s.points},
          {"pooling", to_string(s.pooling)},
          {"batch_norm", s.batch_norm},
          {"segmentation_uses_global", s.segmentation_uses_global},
          {"label_source", to_string(s.label_source)},
          {"encoder_hidden", s.encoder_hidden},
          {"segmentation_hidden", s.segmentation_hidden},
          {"decoder_hidden", s.decoder_hidden}};
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
  try {
    ModelSpec s;
    s.feature_size = j.at("feature_size").get<Index>();
    s.parts = j.at("parts").get<Index>();
    s.points = j.at("points").get<Index>();
    s.pooling = pooling_from_string(j.at("pooling").get<std::string>());
    s.batch_norm = j.at("batch_norm").get<bool>();
    s.segmentation_uses_global = j.at("segmentation_uses_global").get<bool>();
    s.label_source = label_source_from_string(j.at("label_source").get<std::string>());
    s.encoder_hidden = j.at("encoder_hidden").get<std::vector<Index>>();
    s.segmentation_hidden = j.at("segmentation_hidden").get<std::vector<Index>>();
    s.decoder_hidden = j.at("decoder_hidden").get<std::vector<Index>>();
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model spec: ") + e.what());
  }
}

/// Everything a checkpoint can hold. Heads are present according to kind.
struct Bundle {
  CheckpointKind kind = CheckpointKind::kAutoencoder;
  LpmModel<float> model;
  std::optional<VaeHead<float>> vae;
  std::optional<LatentGan<float>> gan;
  nlohmann::json extra = nlohmann::json::object();  // free-form run info (seed, config)
};

namespace detail {

inline std::vector<DenseLayer<float>> take_prefix(std::vector<DenseLayer<float>>& layers, const std::string& prefix,
                                                  std::size_t count) {
  std::vector<DenseLayer<float>> out;
  for (std::size_t i = 0; i < count; ++i) {
    if (layers.empty()) throw FormatError("checkpoint is missing layer " + prefix + "." + std::to_string(i));
    auto& l = layers.front();
    if (l.spec.name.rfind(prefix + ".", 0) != 0) {
      throw FormatError("checkpoint layer '" + l.spec.name + "' where " + prefix + "." + std::to_string(i) +
                        " was expected");
    }
    out.push_back(std::move(l));
    layers.erase(layers.begin());
  }
  return out;
}

inline void require_same_specs(const std::vector<DenseLayer<float>>& got, const std::vector<DenseLayer<float>>& want) {
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (!(got[i].spec == want[i].spec)) {
      throw FormatError("checkpoint layer '" + got[i].spec.name + "' does not match the architecture in its metadata");
    }
  }
}

}  // namespace detail

inline Container to_container(const Bundle& b) {
  Container c;
  c.kind = b.kind;
  c.metadata = {{"model", to_json(b.model.spec)}, {"extra", b.extra}};
  for (const auto* group : {&b.model.encoder, &b.model.segmenter, &b.model.decoder})
    for (const auto& l : *group) c.layers.push_back(l);
  if (b.kind == CheckpointKind::kVae) {
    if (!b.vae) throw Error("VAE checkpoint without a VAE head");
    c.metadata["vae"] = {{"beta", b.vae->beta}, {"trained", b.vae->trained}};
    c.layers.push_back(b.vae->mean);
    c.layers.push_back(b.vae->log_variance);
  } else if (b.kind == CheckpointKind::kGan || b.kind == CheckpointKind::kWgan) {
    if (!b.gan) throw Error("GAN checkpoint without a GAN head");
    const auto& g = b.gan->config;
    c.metadata["gan"] = {{"objective", to_string(g.objective)}, {"noise_size", g.noise_size},
                         {"hidden", g.hidden},                  {"gp_weight", g.gp_weight},
                         {"critic_steps", g.critic_steps},      {"generator_lr", g.generator_lr},
                         {"critic_lr", g.critic_lr},            {"beta1", g.beta1},
                         {"beta2", g.beta2},                    {"trained", b.gan->trained}};
    for (const auto* group : {&b.gan->generator, &b.gan->critic})
      for (const auto& l : *group) c.layers.push_back(l);
  }
  return c;
}

inline Bundle from_container(Container c) {
  Bundle b;
  b.kind = c.kind;
  if (!c.metadata.contains("model")) throw FormatError("checkpoint metadata has no model spec");
  const ModelSpec spec = model_spec_from_json(c.metadata["model"]);
  b.extra = c.metadata.value("extra", nlohmann::json::object());
  LpmModel<float> reference(spec, 0);
  b.model.spec = spec;
  b.model.encoder = detail::take_prefix(c.layers, "encoder", reference.encoder.size());
  b.model.segmenter = detail::take_prefix(c.layers, "segmenter", reference.segmenter.size());
  b.model.decoder = detail::take_prefix(c.layers, "decoder", reference.decoder.size());
  detail::require_same_specs(b.model.encoder, reference.encoder);
  detail::require_same_specs(b.model.segmenter, reference.segmenter);
  detail::require_same_specs(b.model.decoder, reference.decoder);
  try {
    if (b.kind == CheckpointKind::kVae) {
      const auto& m = c.metadata.at("vae");
      VaeHead<float> head(spec.feature_size, m.at("beta").get<double>(), 0);
      auto layers = detail::take_prefix(c.layers, "vae", 2);
      detail::require_same_specs(layers, {head.mean, head.log_variance});
      head.mean = std::move(layers[0]);
      head.log_variance = std::move(layers[1]);
      head.trained = m.at("trained").get<bool>();
      b.vae = std::move(head);
    } else if (b.kind == CheckpointKind::kGan || b.kind == CheckpointKind::kWgan) {
      const auto& m = c.metadata.at("gan");
      GanConfig g;
      g.objective = b.kind == CheckpointKind::kGan ? GanObjective::kStandard : GanObjective::kWassersteinGp;
      g.noise_size = m.at("noise_size").get<Index>();
      g.hidden = m.at("hidden").get<Index>();
      g.gp_weight = m.at("gp_weight").get<double>();
      g.critic_steps = m.at("critic_steps").get<int>();
      g.generator_lr = m.at("generator_lr").get<double>();
      g.critic_lr = m.at("critic_lr").get<double>();
      g.beta1 = m.at("beta1").get<double>();
      g.beta2 = m.at("beta2").get<double>();
      LatentGan<float> gan(g, spec.parts, spec.feature_size, 0);
      auto gen = detail::take_prefix(c.layers, "generator", gan.generator.size());
      auto crit = detail::take_prefix(c.layers, "critic", gan.critic.size());
      detail::require_same_specs(gen, gan.generator);
      detail::require_same_specs(crit, gan.critic);
      gan.generator = std::move(gen);
      gan.critic = std::move(crit);
      gan.trained = m.at("trained").get<bool>();
      b.gan = std::move(gan);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint head metadata: ") + e.what());
  }
  if (!c.layers.empty()) throw FormatError("checkpoint has unexpected layer '" + c.layers.front().spec.name + "'");
  return b;
}

inline void save_bundle(const std::filesystem::path& path, const Bundle& b) {
  write_file_atomic(path, serialize(to_container(b)));
}

inline Bundle load_bundle(const std::filesystem::path& path) { return from_container(deserialize(read_file(path))); }

inline void save_model(const std::filesystem::path& path, const LpmModel<float>& model,
                       const nlohmann::json& extra = nlohmann::json::object()) {
  Bundle b;
  b.model = model;
  b.extra = extra;
  save_bundle(path, b);
}

inline LpmModel<float> load_model(const std::filesystem::path& path) { return load_bundle(path).model; }

}  // namespace lpm
