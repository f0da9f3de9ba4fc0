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

// Part-level edits on latent part sets. Every operation is a pure value
// transformation; rows that an operation does not name are copied bit for
// bit.

#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lpm/pooling.hpp"

namespace lpm {

class InvalidEditError : public Error {
 public:
  using Error::Error;
};

namespace detail {

template <typename T>
void require_compatible(const PartFeatureSet<T>& a, const PartFeatureSet<T>& b, const char* op) {
  if (a.parts() != b.parts() || a.width() != b.width()) {
    throw ShapeError(std::string(op) + ": part sets " + shape_str(a.parts(), a.width()) + " and " +
                     shape_str(b.parts(), b.width()) + " differ");
  }
}

template <typename T>
void require_part_id(const PartFeatureSet<T>& a, int part, const char* op) {
  if (part < 1 || part > a.parts()) {
    throw InvalidEditError(std::string(op) + ": part id " + std::to_string(part) + " outside valid range 1.." +
                           std::to_string(a.parts()));
  }
}

inline void require_t(double t, const char* op) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw InvalidEditError(std::string(op) + ": t = " + std::to_string(t) + " outside [0, 1]");
  }
}

template <typename T>
void require_present(const PartFeatureSet<T>& a, int part, const char* op, const char* which) {
  if (!a.has(part)) {
    throw AbsentPartError(std::string(op) + ": part " + std::to_string(part) + " is absent in " + which);
  }
}

}  // namespace detail

/// Fusion into a global feature: the column max over present rows (the
/// encoder's second pooling stage), or their mean for mean-pooled models.
template <typename T>
GlobalFeature<T> fuse_global(const PartFeatureSet<T>& parts, PoolingKind kind = PoolingKind::kMax) {
  if (kind == PoolingKind::kMax) return global_maxpool(parts);
  if (!parts.any_present()) throw EmptyInputError("fuse_global: no part is present");
  GlobalFeature<T> g = GlobalFeature<T>::Zero(parts.width());
  Index count = 0;
  for (Index p = 0; p < parts.parts(); ++p) {
    if (!parts.present[static_cast<std::size_t>(p)]) continue;
    g += parts.features.row(p);
    ++count;
  }
  return g / static_cast<T>(count);
}

/// A with row `part` replaced by B's row.
template <typename T>
PartFeatureSet<T> exchange_part(const PartFeatureSet<T>& a, const PartFeatureSet<T>& b, int part) {
  detail::require_compatible(a, b, "exchange");
  detail::require_part_id(a, part, "exchange");
  detail::require_present(b, part, "exchange", "the donor");
  PartFeatureSet<T> out = a;
  out.features.row(part - 1) = b.features.row(part - 1);
  out.present[static_cast<std::size_t>(part - 1)] = 1;
  return out;
}

/// Convex combination (1 - t) * a + t * b; t = 0 and t = 1 return the
/// endpoints exactly.
template <typename T>
RowVector<T> lerp_row(const RowVector<T>& a, const RowVector<T>& b, double t) {
  if (t == 0.0) return a;
  if (t == 1.0) return b;
  const T wa = static_cast<T>(1.0 - t);
  const T wb = static_cast<T>(t);
  RowVector<T> out(a.cols());
  for (Index i = 0; i < a.cols(); ++i) out(i) = wa * a(i) + wb * b(i);
  return out;
}

template <typename T>
GlobalFeature<T> interpolate_global(const PartFeatureSet<T>& a, const PartFeatureSet<T>& b, double t,
                                    PoolingKind kind = PoolingKind::kMax) {
  detail::require_compatible(a, b, "interpolate");
  detail::require_t(t, "interpolate");
  return lerp_row<T>(fuse_global(a, kind), fuse_global(b, kind), t);
}

/// A with row `part` = (1 - t) * A_part + t * B_part.
template <typename T>
PartFeatureSet<T> interpolate_part(const PartFeatureSet<T>& a, const PartFeatureSet<T>& b, int part, double t) {
  detail::require_compatible(a, b, "interpolate");
  detail::require_part_id(a, part, "interpolate");
  detail::require_t(t, "interpolate");
  detail::require_present(a, part, "interpolate", "the first source");
  detail::require_present(b, part, "interpolate", "the second source");
  PartFeatureSet<T> out = a;
  out.features.row(part - 1) = lerp_row<T>(a.features.row(part - 1), b.features.row(part - 1), t);
  return out;
}

/// Every source donates one named part; unassigned parts are absent.
template <typename T>
PartFeatureSet<T> compose(const std::vector<std::pair<const PartFeatureSet<T>*, int>>& sources) {
  if (sources.empty()) throw InvalidEditError("compose: no sources");
  const auto& first = *sources.front().first;
  PartFeatureSet<T> out{Matrix<T>::Zero(first.parts(), first.width()),
                        std::vector<char>(static_cast<std::size_t>(first.parts()), 0)};
  std::set<int> seen;
  for (const auto& [src, part] : sources) {
    detail::require_compatible(first, *src, "compose");
    detail::require_part_id(first, part, "compose");
    if (!seen.insert(part).second) throw InvalidEditError("compose: part " + std::to_string(part) + " assigned twice");
    detail::require_present(*src, part, "compose", "its source");
    out.features.row(part - 1) = src->features.row(part - 1);
    out.present[static_cast<std::size_t>(part - 1)] = 1;
  }
  return out;
}

/// Marks a part absent; its row is zeroed for serialization.
template <typename T>
PartFeatureSet<T> remove_part(const PartFeatureSet<T>& a, int part) {
  detail::require_part_id(a, part, "remove");
  detail::require_present(a, part, "remove", "the source");
  PartFeatureSet<T> out = a;
  out.features.row(part - 1).setZero();
  out.present[static_cast<std::size_t>(part - 1)] = 0;
  if (!out.any_present()) throw InvalidEditError("remove: would leave no part present");
  return out;
}

/// Replaces row `part` with a freshly generated row.
template <typename T>
PartFeatureSet<T> replace_part(const PartFeatureSet<T>& a, int part, const RowVector<T>& row) {
  detail::require_part_id(a, part, "regenerate");
  if (row.cols() != a.width()) throw ShapeError("regenerate: row width " + std::to_string(row.cols()));
  PartFeatureSet<T> out = a;
  out.features.row(part - 1) = row;
  out.present[static_cast<std::size_t>(part - 1)] = 1;
  return out;
}

// ---------------------------------------------------------------------------
// Serialized edit operations

enum class EditKind { kExchange, kInterpolateGlobal, kInterpolatePart, kCompose, kRemove, kRegeneratePart };

inline const char* to_string(EditKind k) {
  switch (k) {
    case EditKind::kExchange:
      return "exchange";
    case EditKind::kInterpolateGlobal:
      return "interpolate-global";
    case EditKind::kInterpolatePart:
      return "interpolate-part";
    case EditKind::kCompose:
      return "compose";
    case EditKind::kRemove:
      return "remove";
    case EditKind::kRegeneratePart:
      return "regenerate-part";
  }
  return "exchange";
}

/// Source references are opaque ids resolved by the caller (session ids in
/// the service, input positions or file stems in the CLI).
struct EditOp {
  EditKind kind = EditKind::kExchange;
  int part = 0;
  double t = 0.0;
  std::vector<std::string> sources;                      // exchange / interpolate: {A, B}; remove / regenerate: {A}
  std::vector<std::pair<std::string, int>> assignments;  // compose: (source, part)
  std::string head;                                      // regenerate: vae | gan | wgan
  std::uint64_t seed = 0;

  bool operator==(const EditOp&) const = default;
};

inline nlohmann::json to_json(const EditOp& op) {
  nlohmann::json j{{"kind", to_string(op.kind)}};
  switch (op.kind) {
    case EditKind::kExchange:
    case EditKind::kRemove:
      j["part"] = op.part;
      j["sources"] = op.sources;
      break;
    case EditKind::kInterpolateGlobal:
      j["t"] = op.t;
      j["sources"] = op.sources;
      break;
    case EditKind::kInterpolatePart:
      j["part"] = op.part;
      j["t"] = op.t;
      j["sources"] = op.sources;
      break;
    case EditKind::kCompose: {
      nlohmann::json a = nlohmann::json::array();
      for (const auto& [src, part] : op.assignments) a.push_back({{"source", src}, {"part", part}});
      j["assignments"] = std::move(a);
      break;
    }
    case EditKind::kRegeneratePart:
      j["part"] = op.part;
      j["sources"] = op.sources;
      j["head"] = op.head;
      j["seed"] = op.seed;
      break;
  }
  return j;
}

namespace detail {

inline std::string source_id(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw InvalidEditError("edit: source ids must be strings or integers");
}

inline std::vector<std::string> source_list(const nlohmann::json& j, std::size_t expected, const char* kind) {
  if (!j.contains("sources") || !j["sources"].is_array() || j["sources"].size() != expected) {
    throw InvalidEditError(std::string("edit ") + kind + ": expected " + std::to_string(expected) + " source id(s)");
  }
  std::vector<std::string> out;
  for (const auto& v : j["sources"]) out.push_back(source_id(v));
  return out;
}

inline int part_field(const nlohmann::json& j, const char* kind) {
  if (!j.contains("part") || !j["part"].is_number_integer()) {
    throw InvalidEditError(std::string("edit ") + kind + ": missing integer 'part'");
  }
  return j["part"].get<int>();
}

inline double t_field(const nlohmann::json& j) {
  if (!j.contains("t") || !j["t"].is_number()) throw InvalidEditError("edit interpolate: missing numeric 't'");
  const double t = j["t"].get<double>();
  require_t(t, "edit interpolate");
  return t;
}

}  // namespace detail

/// Parses an edit description. "interpolate" with "scope": "global" or
/// "part" and "regenerate" are accepted as aliases. Part ids are range
/// checked later against the model.
inline EditOp edit_op_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
    throw InvalidEditError("edit: expected an object with a string 'kind'");
  }
  std::string kind = j["kind"].get<std::string>();
  if (kind == "interpolate") {
    const std::string scope = j.value("scope", std::string("part"));
    if (scope != "part" && scope != "global") throw InvalidEditError("edit: unknown scope '" + scope + "'");
    kind = "interpolate-" + scope;
  }
  if (kind == "regenerate") kind = "regenerate-part";
  EditOp op;
  if (kind == "exchange") {
    op.kind = EditKind::kExchange;
    op.part = detail::part_field(j, "exchange");
    op.sources = detail::source_list(j, 2, "exchange");
  } else if (kind == "interpolate-global") {
    op.kind = EditKind::kInterpolateGlobal;
    op.t = detail::t_field(j);
    op.sources = detail::source_list(j, 2, "interpolate");
  } else if (kind == "interpolate-part") {
    op.kind = EditKind::kInterpolatePart;
    op.part = detail::part_field(j, "interpolate");
    op.t = detail::t_field(j);
    op.sources = detail::source_list(j, 2, "interpolate");
  } else if (kind == "compose") {
    op.kind = EditKind::kCompose;
    if (!j.contains("assignments") || !j["assignments"].is_array() || j["assignments"].empty()) {
      throw InvalidEditError("edit compose: expected a non-empty 'assignments' array");
    }
    for (const auto& a : j["assignments"]) {
      if (!a.is_object() || !a.contains("source")) throw InvalidEditError("edit compose: assignment needs 'source'");
      op.assignments.emplace_back(detail::source_id(a["source"]), detail::part_field(a, "compose"));
    }
  } else if (kind == "remove") {
    op.kind = EditKind::kRemove;
    op.part = detail::part_field(j, "remove");
    op.sources = detail::source_list(j, 1, "remove");
  } else if (kind == "regenerate-part") {
    op.kind = EditKind::kRegeneratePart;
    op.part = detail::part_field(j, "regenerate");
    op.sources = detail::source_list(j, 1, "regenerate");
    op.head = j.value("head", std::string("vae"));
    if (op.head != "vae" && op.head != "gan" && op.head != "wgan") {
      throw InvalidEditError("edit regenerate: unknown head '" + op.head + "' (expected vae|gan|wgan)");
    }
    op.seed = j.value("seed", std::uint64_t{0});
  } else {
    throw InvalidEditError("edit: unknown kind '" + kind + "'");
  }
  return op;
}

/// Outcome of an edit: a part set, or only a global feature for
/// global-scope interpolation.
template <typename T>
struct EditResult {
  std::optional<PartFeatureSet<T>> parts;
  GlobalFeature<T> global;
};

template <typename T>
using SourceLookup = std::function<const PartFeatureSet<T>&(const std::string& id)>;

/// Produces a replacement row for regenerate edits: (head, part, seed) -> row.
template <typename T>
using RowGenerator = std::function<RowVector<T>(const std::string& head, int part, std::uint64_t seed)>;

template <typename T>
EditResult<T> apply_edit(const EditOp& op, const SourceLookup<T>& lookup, PoolingKind fusion,
                         const RowGenerator<T>& generate = {}) {
  EditResult<T> r;
  switch (op.kind) {
    case EditKind::kExchange:
      r.parts = exchange_part(lookup(op.sources.at(0)), lookup(op.sources.at(1)), op.part);
      break;
    case EditKind::kInterpolateGlobal:
      r.global = interpolate_global(lookup(op.sources.at(0)), lookup(op.sources.at(1)), op.t, fusion);
      return r;
    case EditKind::kInterpolatePart:
      r.parts = interpolate_part(lookup(op.sources.at(0)), lookup(op.sources.at(1)), op.part, op.t);
      break;
    case EditKind::kCompose: {
      std::vector<std::pair<const PartFeatureSet<T>*, int>> src;
      for (const auto& [id, part] : op.assignments) src.emplace_back(&lookup(id), part);
      r.parts = compose(src);
      break;
    }
    case EditKind::kRemove:
      r.parts = remove_part(lookup(op.sources.at(0)), op.part);
      break;
    case EditKind::kRegeneratePart: {
      const auto& a = lookup(op.sources.at(0));
      detail::require_part_id(a, op.part, "regenerate");
      if (!generate) throw Error("regenerate: no generative head available");
      r.parts = replace_part(a, op.part, generate(op.head, op.part, op.seed));
      break;
    }
  }
  r.global = fuse_global(*r.parts, fusion);
  return r;
}

}  // namespace lpm
