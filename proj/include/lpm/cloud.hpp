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

// Labeled point clouds: formats, resampling, normalization, splits and a
// procedural box-assembly generator.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lpm/tensor.hpp"

namespace lpm {

using json = nlohmann::json;

struct LabeledCloud {
  Points points;  // n x 3
  Labels labels;  // 0 = padding, 1..k = part
  int k = 1;

  Index size() const { return points.rows(); }

  Index real_count() const {
    return static_cast<Index>(std::count_if(labels.begin(), labels.end(), [](int l) { return l > 0; }));
  }

  /// Non-padding rows, in order.
  Points real_points() const {
    Points out(real_count(), 3);
    Index j = 0;
    for (Index i = 0; i < size(); ++i)
      if (labels[static_cast<std::size_t>(i)] > 0) out.row(j++) = points.row(i);
    return out;
  }

  std::vector<char> real_mask() const {
    std::vector<char> m(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) m[i] = labels[i] > 0;
    return m;
  }

  void validate() const {
    if (points.cols() != 3) throw ShapeError("cloud points must be n x 3, got " + shape_str(points.rows(), points.cols()));
    if (points.rows() < 1) throw ShapeError("cloud has no points");
    if (static_cast<Index>(labels.size()) != points.rows()) {
      throw ShapeError("cloud has " + std::to_string(points.rows()) + " points but " + std::to_string(labels.size()) +
                       " labels");
    }
    if (k < 1) throw ShapeError("cloud part count must be >= 1");
    if (!points.allFinite()) throw NonFiniteError("cloud contains non-finite coordinates");
    for (int l : labels)
      if (l < 0 || l > k) throw InvalidLabelError("label " + std::to_string(l) + " outside 0.." + std::to_string(k));
  }

  bool operator==(const LabeledCloud&) const = default;
};

// ---------------------------------------------------------------------------
// Text and JSON formats

struct LabelMapping {
  std::map<int, int> raw_to_part;
};

struct LoadOptions {
  std::optional<LabelMapping> mapping;  // explicit raw -> part map; otherwise rank remap
  std::optional<int> declared_k;
};

struct LoadedCloud {
  LabeledCloud cloud;
  LabelMapping mapping;
};

namespace detail {

inline std::vector<std::string> content_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    lines.push_back(line);
  }
  return lines;
}

}  // namespace detail

/// Parses parallel ".pts" (x y z per line) and ".seg" (one integer per
/// line) streams. Without an explicit mapping, distinct raw labels are
/// remapped by rank to 1..k; raw 0 stays padding.
inline LoadedCloud load_labeled_cloud(std::istream& points_in, std::istream& labels_in, const LoadOptions& opt = {}) {
  const auto pl = detail::content_lines(points_in);
  const auto ll = detail::content_lines(labels_in);
  if (pl.size() != ll.size()) {
    throw FormatError("point/label count mismatch: " + std::to_string(pl.size()) + " points, " +
                      std::to_string(ll.size()) + " labels");
  }
  if (pl.empty()) throw FormatError("empty point cloud");
  LoadedCloud res;
  res.cloud.points.resize(static_cast<Index>(pl.size()), 3);
  std::vector<int> raw(ll.size());
  for (std::size_t i = 0; i < pl.size(); ++i) {
    std::istringstream ss(pl[i]);
    for (int c = 0; c < 3; ++c) {
      std::string tok;
      if (!(ss >> tok)) throw FormatError("point line " + std::to_string(i + 1) + ": expected 3 reals");
      try {
        std::size_t used = 0;
        res.cloud.points(static_cast<Index>(i), c) = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw FormatError("point line " + std::to_string(i + 1) + ": unparsable token '" + tok + "'");
      }
    }
    std::string extra;
    if (ss >> extra) throw FormatError("point line " + std::to_string(i + 1) + ": unexpected token '" + extra + "'");
    std::istringstream ls(ll[i]);
    std::string tok;
    ls >> tok;
    try {
      std::size_t used = 0;
      raw[i] = std::stoi(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw FormatError("label line " + std::to_string(i + 1) + ": unparsable token '" + tok + "'");
    }
    if (ls >> tok) throw FormatError("label line " + std::to_string(i + 1) + ": unexpected token '" + tok + "'");
  }
  if (opt.mapping) {
    res.mapping = *opt.mapping;
  } else {
    std::set<int> distinct;
    for (int r : raw)
      if (r != 0) distinct.insert(r);
    int next = 1;
    for (int r : distinct) res.mapping.raw_to_part[r] = next++;
  }
  int k = 0;
  for (const auto& [r, p] : res.mapping.raw_to_part) k = std::max(k, p);
  res.cloud.labels.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] == 0 && !res.mapping.raw_to_part.count(0)) {
      res.cloud.labels[i] = 0;
      continue;
    }
    auto it = res.mapping.raw_to_part.find(raw[i]);
    if (it == res.mapping.raw_to_part.end()) {
      throw InvalidLabelError("label " + std::to_string(raw[i]) + " on line " + std::to_string(i + 1) +
                              " is outside the declared label set");
    }
    res.cloud.labels[i] = it->second;
  }
  if (opt.declared_k) {
    if (k > *opt.declared_k) {
      throw InvalidLabelError("labels need " + std::to_string(k) + " parts but k = " + std::to_string(*opt.declared_k));
    }
    k = *opt.declared_k;
  }
  res.cloud.k = std::max(k, 1);
  res.cloud.validate();
  return res;
}

/// Identity mapping for files whose labels already are part ids 1..k.
inline LabelMapping identity_mapping(int k) {
  LabelMapping m;
  for (int p = 1; p <= k; ++p) m.raw_to_part[p] = p;
  return m;
}

inline LoadedCloud load_labeled_cloud(const std::filesystem::path& pts, const std::filesystem::path& seg,
                                      const LoadOptions& opt = {}) {
  std::ifstream p(pts);
  if (!p) throw FormatError("cannot open " + pts.string());
  std::ifstream s(seg);
  if (!s) throw FormatError("cannot open " + seg.string());
  return load_labeled_cloud(p, s, opt);
}

inline void write_pts(std::ostream& out, const LabeledCloud& c) {
  out.precision(17);
  for (Index i = 0; i < c.size(); ++i) out << c.points(i, 0) << ' ' << c.points(i, 1) << ' ' << c.points(i, 2) << '\n';
}

inline void write_seg(std::ostream& out, const LabeledCloud& c) {
  for (int l : c.labels) out << l << '\n';
}

inline json cloud_to_json(const LabeledCloud& c) {
  json pts = json::array();
  for (Index i = 0; i < c.size(); ++i) pts.push_back({c.points(i, 0), c.points(i, 1), c.points(i, 2)});
  return json{{"points", std::move(pts)}, {"labels", c.labels}, {"k", c.k}};
}

/// Accepts {"points": [[x,y,z],...], "labels": [...]?, "k": int?}. Missing
/// labels mean every point is a real point of part 1.
inline LabeledCloud cloud_from_json(const json& j, std::optional<int> declared_k = std::nullopt) {
  if (!j.is_object() || !j.contains("points") || !j["points"].is_array()) {
    throw FormatError("cloud JSON needs a 'points' array");
  }
  const auto& pts = j["points"];
  LabeledCloud c;
  c.points.resize(static_cast<Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!pts[i].is_array() || pts[i].size() != 3) {
      throw FormatError("point " + std::to_string(i) + " must be an array of 3 numbers");
    }
    for (int d = 0; d < 3; ++d) {
      if (!pts[i][d].is_number()) throw FormatError("point " + std::to_string(i) + " has a non-numeric coordinate");
      c.points(static_cast<Index>(i), d) = pts[i][d].get<double>();
    }
  }
  if (j.contains("labels")) {
    if (!j["labels"].is_array()) throw FormatError("'labels' must be an array");
    for (const auto& l : j["labels"]) {
      if (!l.is_number_integer()) throw FormatError("labels must be integers");
      c.labels.push_back(l.get<int>());
    }
  } else {
    c.labels.assign(pts.size(), 1);
  }
  int k = 1;
  for (int l : c.labels) k = std::max(k, l);
  if (j.contains("k")) k = std::max(k, j["k"].get<int>());
  if (declared_k) {
    if (k > *declared_k) {
      throw InvalidLabelError("labels need " + std::to_string(k) + " parts but k = " + std::to_string(*declared_k));
    }
    k = *declared_k;
  }
  c.k = k;
  c.validate();
  return c;
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out << contents;
    if (!out) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline LabeledCloud load_cloud_json(const std::filesystem::path& path, std::optional<int> declared_k = std::nullopt) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return cloud_from_json(j, declared_k);
}

// ---------------------------------------------------------------------------
// Resampling and normalization

/// Downsamples without replacement (kept rows stay in input order) or
/// appends (0,0,0) rows labeled 0.
inline LabeledCloud resample(const LabeledCloud& cloud, Index n_target, std::uint64_t seed) {
  if (n_target < 1) throw ShapeError("resample target must be >= 1");
  const Index n = cloud.size();
  LabeledCloud out;
  out.k = cloud.k;
  if (n == n_target) return cloud;
  if (n < n_target) {
    out.points = Points::Zero(n_target, 3);
    out.points.topRows(n) = cloud.points;
    out.labels = cloud.labels;
    out.labels.resize(static_cast<std::size_t>(n_target), 0);
    return out;
  }
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::mt19937_64 rng(seed);
  for (Index i = 0; i < n_target; ++i) {
    std::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(n_target));
  std::sort(idx.begin(), idx.end());
  out.points.resize(n_target, 3);
  out.labels.resize(static_cast<std::size_t>(n_target));
  for (Index i = 0; i < n_target; ++i) {
    out.points.row(i) = cloud.points.row(idx[static_cast<std::size_t>(i)]);
    out.labels[static_cast<std::size_t>(i)] = cloud.labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
  }
  return out;
}

struct NormalizeResult {
  LabeledCloud cloud;
  bool degenerate = false;  // all real points coincide; unit scale used
};

/// Centers real points at their centroid and scales the farthest to unit
/// distance. Padding rows stay at the origin.
inline NormalizeResult normalize(const LabeledCloud& cloud) {
  const Index m = cloud.real_count();
  if (m == 0) throw EmptyInputError("normalize: cloud has no real points");
  Eigen::RowVector3d centroid = Eigen::RowVector3d::Zero();
  for (Index i = 0; i < cloud.size(); ++i)
    if (cloud.labels[static_cast<std::size_t>(i)] > 0) centroid += cloud.points.row(i);
  centroid /= static_cast<double>(m);
  NormalizeResult res;
  res.cloud = cloud;
  double radius = 0.0;
  for (Index i = 0; i < cloud.size(); ++i) {
    if (cloud.labels[static_cast<std::size_t>(i)] == 0) continue;
    res.cloud.points.row(i) = cloud.points.row(i) - centroid;
    radius = std::max(radius, res.cloud.points.row(i).norm());
  }
  if (!(radius > 1e-12)) {
    res.degenerate = true;
    radius = 1.0;
  }
  for (Index i = 0; i < cloud.size(); ++i)
    if (cloud.labels[static_cast<std::size_t>(i)] > 0) res.cloud.points.row(i) /= radius;
  return res;
}

// ---------------------------------------------------------------------------
// Datasets

enum class Split { kTrain, kVal, kTest };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "train";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw FormatError("unknown split '" + s + "'");
}

struct Dataset {
  std::vector<LabeledCloud> samples;
  std::vector<Split> splits;  // parallel to samples
  std::string category = "synthetic";
  int k = 1;

  std::size_t size() const { return samples.size(); }

  Dataset subset(Split s) const {
    Dataset d;
    d.category = category;
    d.k = k;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (splits[i] == s) {
        d.samples.push_back(samples[i]);
        d.splits.push_back(s);
      }
    }
    return d;
  }
};

struct SplitResult {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Deterministic shuffled split with sizes round(r_train * n), round(r_val * n)
/// and the remainder.
inline SplitResult split_dataset(const Dataset& ds, std::array<double, 3> ratios, std::uint64_t seed) {
  for (double r : ratios)
    if (r < 0.0 || !std::isfinite(r)) throw Error("split ratios must be non-negative");
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw Error("split ratios must sum to 1");
  const auto n = static_cast<long long>(ds.size());
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  long long n_train = std::min(n, std::llround(ratios[0] * static_cast<double>(n)));
  long long n_val = std::min(n - n_train, std::llround(ratios[1] * static_cast<double>(n)));
  SplitResult res;
  for (Dataset* d : {&res.train, &res.val, &res.test}) {
    d->category = ds.category;
    d->k = ds.k;
  }
  for (long long i = 0; i < n; ++i) {
    const auto& s = ds.samples[order[static_cast<std::size_t>(i)]];
    if (i < n_train) {
      res.train.samples.push_back(s);
      res.train.splits.push_back(Split::kTrain);
    } else if (i < n_train + n_val) {
      res.val.samples.push_back(s);
      res.val.splits.push_back(Split::kVal);
    } else {
      res.test.samples.push_back(s);
      res.test.splits.push_back(Split::kTest);
    }
  }
  return res;
}

/// Writes every sample as a JSON cloud plus manifest.json into `dir`.
inline std::filesystem::path write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json samples = json::array();
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "cloud_%05zu.json", i);
    write_file_atomic(dir / name, cloud_to_json(ds.samples[i]).dump());
    samples.push_back({{"path", name}, {"split", to_string(ds.splits[i])}});
  }
  json manifest{{"category", ds.category}, {"k", ds.k}, {"samples", std::move(samples)}};
  const auto path = dir / "manifest.json";
  write_file_atomic(path, manifest.dump(2));
  return path;
}

/// Loads a manifest: {"category", "k", "samples": [{"path", "split"?}]}.
/// Paths are relative to the manifest; ".pts" samples read the sibling
/// ".seg" file. An optional "label_map" {raw: part} applies to text files.
inline Dataset load_manifest(const std::filesystem::path& manifest_path) {
  json m;
  try {
    m = json::parse(read_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  if (!m.contains("k") || !m.contains("samples")) throw FormatError("manifest needs 'k' and 'samples'");
  Dataset ds;
  ds.k = m["k"].get<int>();
  ds.category = m.value("category", std::string("unknown"));
  LoadOptions opt;
  opt.declared_k = ds.k;
  if (m.contains("label_map")) {
    LabelMapping lm;
    for (const auto& [raw, part] : m["label_map"].items()) lm.raw_to_part[std::stoi(raw)] = part.get<int>();
    opt.mapping = lm;
  } else {
    opt.mapping = identity_mapping(ds.k);
  }
  const auto base = manifest_path.parent_path();
  for (const auto& s : m["samples"]) {
    const std::filesystem::path p = base / s.at("path").get<std::string>();
    if (p.extension() == ".pts") {
      auto seg = p;
      seg.replace_extension(".seg");
      ds.samples.push_back(load_labeled_cloud(p, seg, opt).cloud);
    } else {
      ds.samples.push_back(load_cloud_json(p, ds.k));
    }
    ds.splits.push_back(split_from_string(s.value("split", std::string("train"))));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic shapes

struct BoxSpec {
  std::array<double, 3> extent_min{};
  std::array<double, 3> extent_max{};
  std::array<double, 3> center_min{};
  std::array<double, 3> center_max{};
};

struct SynthPart {
  int id = 1;
  double presence = 1.0;
  std::vector<BoxSpec> boxes;
};

/// kRandom fills boxes with independent uniform draws and oversamples
/// before resampling; kStratified places points on a Halton sequence so a
/// cloud is a deterministic function of its box parameters.
enum class SynthSampling { kRandom, kStratified };

inline const char* to_string(SynthSampling s) { return s == SynthSampling::kRandom ? "random" : "stratified"; }

inline SynthSampling synth_sampling_from_string(const std::string& s) {
  if (s == "random") return SynthSampling::kRandom;
  if (s == "stratified") return SynthSampling::kStratified;
  throw Error("unknown synth sampling '" + s + "' (expected random|stratified)");
}

struct SynthSpec {
  std::vector<SynthPart> parts;
  Index points = 256;
  std::uint64_t seed = 0;
  std::string category = "synthetic";
  SynthSampling sampling = SynthSampling::kStratified;

  int k() const {
    int k = 0;
    for (const auto& p : parts) k = std::max(k, p.id);
    return k;
  }

  void validate() const {
    if (parts.empty()) throw Error("synth spec has no parts");
    if (points < 1) throw Error("synth spec needs points >= 1");
    bool anchored = false;
    for (const auto& p : parts) {
      if (p.id < 1) throw Error("synth part ids start at 1");
      if (!(p.presence >= 0.0 && p.presence <= 1.0)) throw Error("synth presence probability outside [0,1]");
      if (p.boxes.empty()) throw Error("synth part " + std::to_string(p.id) + " has no boxes");
      for (const auto& b : p.boxes) {
        for (int d = 0; d < 3; ++d) {
          if (b.extent_min[d] <= 0.0 || b.extent_max[d] < b.extent_min[d] || b.center_max[d] < b.center_min[d]) {
            throw Error("synth part " + std::to_string(p.id) + " has an invalid box range");
          }
        }
      }
      anchored = anchored || p.presence == 1.0;
    }
    if (!anchored) throw Error("synth spec needs at least one part with presence probability 1");
  }

  /// Four-part chair: seat, back, four legs, optional arms.
  static SynthSpec chair(Index n = 256, std::uint64_t seed = 7) {
    SynthSpec s;
    s.points = n;
    s.seed = seed;
    s.category = "chair";
    s.parts.push_back({1, 1.0, {{{0.8, 0.08, 0.8}, {1.2, 0.14, 1.2}, {0.0, 0.45, 0.0}, {0.0, 0.55, 0.0}}}});
    s.parts.push_back({2, 1.0, {{{0.8, 0.5, 0.06}, {1.2, 1.0, 0.10}, {0.0, 0.95, -0.5}, {0.0, 1.15, -0.45}}}});
    SynthPart legs{3, 1.0, {}};
    for (double sx : {-1.0, 1.0}) {
      for (double sz : {-1.0, 1.0}) {
        BoxSpec b{{0.06, 0.35, 0.06}, {0.10, 0.45, 0.10}, {0, 0.2, 0}, {0, 0.25, 0}};
        b.center_min[0] = sx < 0 ? -0.45 : 0.32;
        b.center_max[0] = sx < 0 ? -0.32 : 0.45;
        b.center_min[2] = sz < 0 ? -0.45 : 0.32;
        b.center_max[2] = sz < 0 ? -0.32 : 0.45;
        legs.boxes.push_back(b);
      }
    }
    s.parts.push_back(legs);
    SynthPart arms{4, 0.5, {}};
    for (double sx : {-1.0, 1.0}) {
      BoxSpec b{{0.06, 0.2, 0.6}, {0.10, 0.3, 0.9}, {0, 0.7, -0.05}, {0, 0.78, 0.05}};
      b.center_min[0] = sx < 0 ? -0.66 : 0.56;
      b.center_max[0] = sx < 0 ? -0.56 : 0.66;
      arms.boxes.push_back(b);
    }
    s.parts.push_back(arms);
    return s;
  }
};

inline json to_json(const SynthSpec& s) {
  json parts = json::array();
  for (const auto& p : s.parts) {
    json boxes = json::array();
    for (const auto& b : p.boxes) {
      boxes.push_back({{"extent_min", b.extent_min},
                       {"extent_max", b.extent_max},
                       {"center_min", b.center_min},
                       {"center_max", b.center_max}});
    }
    parts.push_back({{"id", p.id}, {"presence", p.presence}, {"boxes", std::move(boxes)}});
  }
  return json{{"category", s.category},
              {"points", s.points},
              {"seed", s.seed},
              {"sampling", to_string(s.sampling)},
              {"parts", std::move(parts)}};
}

inline SynthSpec synth_spec_from_json(const json& j) {
  SynthSpec s;
  s.category = j.value("category", std::string("synthetic"));
  s.points = j.value("points", Index{256});
  s.seed = j.value("seed", std::uint64_t{0});
  s.sampling = synth_sampling_from_string(j.value("sampling", std::string("stratified")));
  for (const auto& p : j.at("parts")) {
    SynthPart part;
    part.id = p.at("id").get<int>();
    part.presence = p.value("presence", 1.0);
    for (const auto& b : p.at("boxes")) {
      part.boxes.push_back({b.at("extent_min").get<std::array<double, 3>>(), b.at("extent_max").get<std::array<double, 3>>(),
                            b.at("center_min").get<std::array<double, 3>>(), b.at("center_max").get<std::array<double, 3>>()});
    }
    s.parts.push_back(std::move(part));
  }
  s.validate();
  return s;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Radical inverse of `i` in `base`, in [0, 1).
inline double halton(std::uint64_t i, std::uint64_t base) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= static_cast<double>(base);
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

}  // namespace detail

/// Per-sample stream seed, independent of how many samples are drawn.
inline std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index) {
  return detail::splitmix64(seed ^ detail::splitmix64(index + 1));
}

/// One shape: a box per present part entry filled with points, with the
/// point budget split by box surface area; then normalized. Random sampling
/// draws 2n points and resamples to n.
inline LabeledCloud synth_sample(const SynthSpec& spec, std::uint64_t index) {
  std::mt19937_64 rng(sample_seed(spec.seed, index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  struct Box {
    Eigen::RowVector3d center, extent;
    int label;
  };
  std::vector<Box> boxes;
  for (const auto& part : spec.parts) {
    const bool present = unit(rng) < part.presence;
    for (const auto& b : part.boxes) {
      Box box{};
      for (int d = 0; d < 3; ++d) {
        box.extent[d] = b.extent_min[d] + (b.extent_max[d] - b.extent_min[d]) * unit(rng);
        box.center[d] = b.center_min[d] + (b.center_max[d] - b.center_min[d]) * unit(rng);
      }
      box.label = part.id;
      if (present) boxes.push_back(box);
    }
  }
  const bool stratified = spec.sampling == SynthSampling::kStratified;
  const Index raw_count = stratified ? spec.points : 2 * spec.points;
  std::vector<double> area(boxes.size());
  double total = 0.0;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& e = boxes[i].extent;
    area[i] = e[0] * e[1] + e[1] * e[2] + e[0] * e[2];
    total += area[i];
  }
  // Largest-remainder allocation keeps the total exact.
  std::vector<Index> alloc(boxes.size());
  std::vector<std::pair<double, std::size_t>> rem;
  Index used = 0;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const double exact = static_cast<double>(raw_count) * area[i] / total;
    alloc[i] = static_cast<Index>(std::floor(exact));
    used += alloc[i];
    rem.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; used < raw_count; ++r, ++used) ++alloc[rem[r % rem.size()].second];
  LabeledCloud c;
  c.k = spec.k();
  c.points.resize(raw_count, 3);
  c.labels.resize(static_cast<std::size_t>(raw_count));
  Index row = 0;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    for (Index j = 0; j < alloc[i]; ++j, ++row) {
      static constexpr std::uint64_t kBases[3] = {2, 3, 5};
      for (int d = 0; d < 3; ++d) {
        const double u = stratified ? detail::halton(static_cast<std::uint64_t>(j) + 1, kBases[d]) : unit(rng);
        c.points(row, d) = boxes[i].center[d] + (u - 0.5) * boxes[i].extent[d];
      }
      c.labels[static_cast<std::size_t>(row)] = boxes[i].label;
    }
  }
  return resample(normalize(c).cloud, spec.points, rng());
}

inline Dataset synth_dataset(const SynthSpec& spec, std::size_t count) {
  spec.validate();
  Dataset ds;
  ds.category = spec.category;
  ds.k = spec.k();
  for (std::size_t i = 0; i < count; ++i) {
    ds.samples.push_back(synth_sample(spec, i));
    ds.splits.push_back(Split::kTrain);
  }
  return ds;
}

}  // namespace lpm
