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

// Two-stage pooling: point features -> per-part features -> global feature.

#pragma once

#include <string>
#include <vector>

#include "lpm/autodiff.hpp"

namespace lpm {

/// k x l part features with a presence mask. Absent rows hold zeros and are
/// never pooled.
template <typename T>
struct PartFeatureSet {
  Matrix<T> features;
  std::vector<char> present;

  Index parts() const { return features.rows(); }
  Index width() const { return features.cols(); }
  bool has(int part_id) const {
    return part_id >= 1 && part_id <= parts() && present[static_cast<std::size_t>(part_id - 1)] != 0;
  }
  bool any_present() const {
    for (char p : present)
      if (p) return true;
    return false;
  }
  bool operator==(const PartFeatureSet&) const = default;
};

template <typename T>
using GlobalFeature = RowVector<T>;

using ArgmaxMatrix = Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct SegmentMaxpool {
  PartFeatureSet<T> parts;
  ArgmaxMatrix argmax;  // winning point row per (part, feature); -1 when absent
};

/// Maps labels 0..k to segment ids (-1 for padding).
inline std::vector<Index> label_segments(const Labels& labels, Index k) {
  std::vector<Index> seg(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l < 0 || l > k) {
      throw InvalidLabelError("label " + std::to_string(l) + " at point " + std::to_string(i) + " outside 0.." +
                              std::to_string(k));
    }
    seg[i] = l - 1;
  }
  return seg;
}

template <typename T>
SegmentMaxpool<T> masked_segment_maxpool(const Matrix<T>& features, const Labels& labels, Index k) {
  if (k < 1) throw ShapeError("part count must be >= 1");
  if (static_cast<Index>(labels.size()) != features.rows()) {
    throw ShapeError("masked_segment_maxpool: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(features.rows()) + " points");
  }
  ad::Tape<T> tape;
  auto r = ad::segment_pool(tape, tape.constant(features), label_segments(labels, k), k, PoolingKind::kMax);
  return {{tape.value(r.out), r.present}, r.argmax};
}

/// Column-wise max over present parts.
template <typename T>
GlobalFeature<T> global_maxpool(const PartFeatureSet<T>& parts) {
  if (!parts.any_present()) throw EmptyInputError("global_maxpool: no part is present");
  GlobalFeature<T> g;
  bool first = true;
  for (Index p = 0; p < parts.parts(); ++p) {
    if (!parts.present[static_cast<std::size_t>(p)]) continue;
    if (first) {
      g = parts.features.row(p);
      first = false;
    } else {
      g = g.cwiseMax(parts.features.row(p));
    }
  }
  return g;
}

/// Column-wise pool over the rows whose label is non-zero.
template <typename T>
GlobalFeature<T> direct_pool(const Matrix<T>& features, const Labels& labels, PoolingKind kind) {
  std::vector<Index> seg(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) seg[i] = labels[i] > 0 ? 0 : -1;
  ad::Tape<T> tape;
  auto r = ad::segment_pool(tape, tape.constant(features), seg, 1, kind);
  if (!r.present[0]) throw EmptyInputError("direct_pool: every point is padding");
  return tape.value(r.out).row(0);
}

}  // namespace lpm
