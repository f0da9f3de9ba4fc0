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

// Reconstruction losses recorded on a tape.

#pragma once

#include <string>
#include <vector>

#include "lpm/autodiff.hpp"
#include "lpm/distances.hpp"

namespace lpm {

/// kSum is the plain set distance; kMean divides each direction by its
/// point count.
enum class Reduction { kSum, kMean };

inline const char* to_string(Reduction r) { return r == Reduction::kSum ? "sum" : "mean"; }

inline Reduction reduction_from_string(const std::string& s) {
  if (s == "sum") return Reduction::kSum;
  if (s == "mean") return Reduction::kMean;
  throw Error("unknown reduction '" + s + "' (expected sum|mean)");
}

/// Batch mean of chamfer(pred_b, target_b). `pred` stacks B clouds of
/// `points_per_cloud` rows each.
template <typename T>
ad::Var chamfer_loss(ad::Tape<T>& t, ad::Var pred, Index points_per_cloud, const std::vector<Matrix<T>>& targets,
                     Reduction reduction) {
  const auto& pv = t.value(pred);
  const auto batch = static_cast<Index>(targets.size());
  if (pv.cols() != 3 || pv.rows() != batch * points_per_cloud) {
    throw ShapeError("chamfer_loss: prediction " + shape_str(pv.rows(), pv.cols()) + " for " +
                     std::to_string(batch) + " clouds of " + std::to_string(points_per_cloud));
  }
  std::vector<ChamferResult<T>> res(targets.size());
  std::vector<T> w_fwd(targets.size()), w_bwd(targets.size());
  T total = 0;
  for (Index b = 0; b < batch; ++b) {
    const Matrix<T> p = pv.middleRows(b * points_per_cloud, points_per_cloud);
    const auto& tgt = targets[static_cast<std::size_t>(b)];
    auto& r = res[static_cast<std::size_t>(b)];
    r = chamfer_detail(p, tgt);
    const T inv_b = T(1) / static_cast<T>(batch);
    w_fwd[static_cast<std::size_t>(b)] =
        reduction == Reduction::kSum ? inv_b : inv_b / static_cast<T>(points_per_cloud);
    w_bwd[static_cast<std::size_t>(b)] = reduction == Reduction::kSum ? inv_b : inv_b / static_cast<T>(tgt.rows());
    total += w_fwd[static_cast<std::size_t>(b)] * r.forward + w_bwd[static_cast<std::size_t>(b)] * r.backward;
  }
  Matrix<T> out(1, 1);
  out(0, 0) = total;
  return t.record(std::move(out), t.requires_grad(pred),
                  [pred, points_per_cloud, targets, res = std::move(res), w_fwd, w_bwd](ad::Tape<T>& tp,
                                                                                          const Matrix<T>& g) {
                    const auto& pv2 = tp.value(pred);
                    auto& gp = tp.grad(pred);
                    const T up = g(0, 0);
                    for (std::size_t b = 0; b < res.size(); ++b) {
                      const Index off = static_cast<Index>(b) * points_per_cloud;
                      const auto& tgt = targets[b];
                      const auto& r = res[b];
                      for (Index i = 0; i < points_per_cloud; ++i) {
                        gp.row(off + i) += (T(2) * up * w_fwd[b]) *
                                           (pv2.row(off + i) - tgt.row(r.s1_to_s2.index[static_cast<std::size_t>(i)]));
                      }
                      for (Index j = 0; j < tgt.rows(); ++j) {
                        const Index i = r.s2_to_s1.index[static_cast<std::size_t>(j)];
                        gp.row(off + i) += (T(2) * up * w_bwd[b]) * (pv2.row(off + i) - tgt.row(j));
                      }
                    }
                  });
}

/// Batch mean of the matched Euclidean cost under an auction matching that
/// is frozen for the backward pass. Targets must have `points_per_cloud`
/// rows.
template <typename T>
ad::Var emd_loss(ad::Tape<T>& t, ad::Var pred, Index points_per_cloud, const std::vector<Matrix<T>>& targets,
                 Reduction reduction) {
  const auto& pv = t.value(pred);
  const auto batch = static_cast<Index>(targets.size());
  if (pv.cols() != 3 || pv.rows() != batch * points_per_cloud) throw ShapeError("emd_loss: prediction shape");
  std::vector<Assignment> match(targets.size());
  T total = 0;
  const T w = (reduction == Reduction::kSum ? T(1) : T(1) / static_cast<T>(points_per_cloud)) / static_cast<T>(batch);
  for (Index b = 0; b < batch; ++b) {
    const auto& tgt = targets[static_cast<std::size_t>(b)];
    if (tgt.rows() != points_per_cloud) {
      throw ShapeError("emd_loss: target " + std::to_string(b) + " has " + std::to_string(tgt.rows()) +
                       " real points; EMD training needs full-size targets of " + std::to_string(points_per_cloud));
    }
    const Points p = pv.middleRows(b * points_per_cloud, points_per_cloud).template cast<double>();
    match[static_cast<std::size_t>(b)] = emd_approx_matching(p, tgt.template cast<double>());
    total += w * static_cast<T>(match[static_cast<std::size_t>(b)].cost);
  }
  Matrix<T> out(1, 1);
  out(0, 0) = total;
  return t.record(std::move(out), t.requires_grad(pred),
                  [pred, points_per_cloud, targets, match = std::move(match), w](ad::Tape<T>& tp, const Matrix<T>& g) {
                    const auto& pv2 = tp.value(pred);
                    auto& gp = tp.grad(pred);
                    for (std::size_t b = 0; b < match.size(); ++b) {
                      const Index off = static_cast<Index>(b) * points_per_cloud;
                      const Matrix<T> p = pv2.middleRows(off, points_per_cloud);
                      gp.middleRows(off, points_per_cloud) += (g(0, 0) * w) * emd_grad_s1(p, targets[b], match[b]);
                    }
                  });
}

}  // namespace lpm
