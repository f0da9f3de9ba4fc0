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

// Set distances between point clouds.
//
//   chamfer:    sum of squared nearest-neighbour distances, both directions.
//   emd_exact:  min over bijections of summed Euclidean distances (Hungarian).
//   emd_approx: the same objective solved by auction with epsilon scaling.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "lpm/tensor.hpp"

namespace lpm {

enum class DistanceKind { kChamfer, kEmdExact, kEmdApprox };

/// Brute force is used up to this many reference points; a k-d tree above.
inline constexpr Index kKdTreeThreshold = 512;

/// Default size limit for the O(n^3) exact solver.
inline constexpr Index kEmdExactLimit = 256;

namespace detail {

template <typename T>
T sqdist3(const Matrix<T>& a, Index i, const Matrix<T>& b, Index j) {
  const T dx = a(i, 0) - b(j, 0);
  const T dy = a(i, 1) - b(j, 1);
  const T dz = a(i, 2) - b(j, 2);
  return dx * dx + dy * dy + dz * dz;
}

template <typename T>
void require_cloud(const Matrix<T>& s, const char* what) {
  if (s.cols() != 3) throw ShapeError(std::string(what) + ": point sets must be n x 3");
  if (s.rows() == 0) throw EmptyInputError(std::string(what) + ": empty point set");
}

}  // namespace detail

/// Static 3-d tree answering exact nearest-neighbour queries. Ties resolve
/// to the lowest reference index, matching the brute-force scan.
template <typename T>
class KdTree {
 public:
  explicit KdTree(const Matrix<T>& points) : pts_(points), order_(static_cast<std::size_t>(points.rows())) {
    std::iota(order_.begin(), order_.end(), Index{0});
    nodes_.reserve(order_.size());
    build(0, static_cast<Index>(order_.size()), 0);
  }

  /// Returns (index, squared distance) of the nearest reference point.
  std::pair<Index, T> nearest(const Matrix<T>& q, Index row) const {
    Best best{-1, std::numeric_limits<T>::infinity()};
    search(0, q, row, best);
    return {best.index, best.d2};
  }

 private:
  struct Node {
    Index point;
    int axis;
    Index left = -1;
    Index right = -1;
  };
  struct Best {
    Index index;
    T d2;
  };

  Index build(Index lo, Index hi, int depth) {
    if (lo >= hi) return -1;
    const int axis = depth % 3;
    const Index mid = lo + (hi - lo) / 2;
    std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi, [&](Index a, Index b) {
      return pts_(a, axis) < pts_(b, axis) || (pts_(a, axis) == pts_(b, axis) && a < b);
    });
    const auto id = static_cast<Index>(nodes_.size());
    nodes_.push_back({order_[static_cast<std::size_t>(mid)], axis});
    const Index l = build(lo, mid, depth + 1);
    const Index r = build(mid + 1, hi, depth + 1);
    nodes_[static_cast<std::size_t>(id)].left = l;
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  void search(Index node, const Matrix<T>& q, Index row, Best& best) const {
    if (node < 0) return;
    const Node& n = nodes_[static_cast<std::size_t>(node)];
    const T d2 = detail::sqdist3(q, row, pts_, n.point);
    if (d2 < best.d2 || (d2 == best.d2 && n.point < best.index)) best = {n.point, d2};
    const T diff = q(row, n.axis) - pts_(n.point, n.axis);
    const Index near = diff < 0 ? n.left : n.right;
    const Index far = diff < 0 ? n.right : n.left;
    search(near, q, row, best);
    // <= keeps equal-distance candidates reachable for the index tie-break.
    if (diff * diff <= best.d2) search(far, q, row, best);
  }

  const Matrix<T>& pts_;
  std::vector<Index> order_;
  std::vector<Node> nodes_;
};

template <typename T>
struct NearestNeighbors {
  std::vector<Index> index;
  std::vector<T> sqdist;
};

/// For every row of `query`, the nearest row of `ref`.
template <typename T>
NearestNeighbors<T> nearest_neighbors(const Matrix<T>& query, const Matrix<T>& ref) {
  NearestNeighbors<T> nn;
  nn.index.resize(static_cast<std::size_t>(query.rows()));
  nn.sqdist.resize(static_cast<std::size_t>(query.rows()));
  if (ref.rows() > kKdTreeThreshold) {
    KdTree<T> tree(ref);
    for (Index i = 0; i < query.rows(); ++i) {
      auto [j, d] = tree.nearest(query, i);
      nn.index[static_cast<std::size_t>(i)] = j;
      nn.sqdist[static_cast<std::size_t>(i)] = d;
    }
    return nn;
  }
  for (Index i = 0; i < query.rows(); ++i) {
    Index best = 0;
    T bd = detail::sqdist3(query, i, ref, 0);
    for (Index j = 1; j < ref.rows(); ++j) {
      const T d = detail::sqdist3(query, i, ref, j);
      if (d < bd) {
        bd = d;
        best = j;
      }
    }
    nn.index[static_cast<std::size_t>(i)] = best;
    nn.sqdist[static_cast<std::size_t>(i)] = bd;
  }
  return nn;
}

template <typename T>
struct ChamferResult {
  T value = 0;
  T forward = 0;   // sum over S1
  T backward = 0;  // sum over S2
  NearestNeighbors<T> s1_to_s2;
  NearestNeighbors<T> s2_to_s1;
};

template <typename T>
ChamferResult<T> chamfer_detail(const Matrix<T>& s1, const Matrix<T>& s2) {
  detail::require_cloud(s1, "chamfer");
  detail::require_cloud(s2, "chamfer");
  ChamferResult<T> r;
  r.s1_to_s2 = nearest_neighbors(s1, s2);
  r.s2_to_s1 = nearest_neighbors(s2, s1);
  for (T d : r.s1_to_s2.sqdist) r.forward += d;
  for (T d : r.s2_to_s1.sqdist) r.backward += d;
  r.value = r.forward + r.backward;
  return r;
}

template <typename T>
T chamfer(const Matrix<T>& s1, const Matrix<T>& s2) {
  return chamfer_detail(s1, s2).value;
}

/// Gradient of chamfer(s1, s2) with respect to s1's coordinates.
template <typename T>
Matrix<T> chamfer_grad_s1(const Matrix<T>& s1, const Matrix<T>& s2, const ChamferResult<T>& r) {
  Matrix<T> g = Matrix<T>::Zero(s1.rows(), 3);
  for (Index i = 0; i < s1.rows(); ++i) g.row(i) += T(2) * (s1.row(i) - s2.row(r.s1_to_s2.index[static_cast<std::size_t>(i)]));
  for (Index j = 0; j < s2.rows(); ++j) {
    const Index i = r.s2_to_s1.index[static_cast<std::size_t>(j)];
    g.row(i) += T(2) * (s1.row(i) - s2.row(j));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Assignment

struct Assignment {
  std::vector<Index> target;  // S1 row i -> S2 row target[i]
  double cost = 0.0;
};

/// Euclidean distance matrix between two point sets.
inline Matrix<double> distance_matrix(const Points& s1, const Points& s2) {
  Matrix<double> c(s1.rows(), s2.rows());
  for (Index i = 0; i < s1.rows(); ++i)
    for (Index j = 0; j < s2.rows(); ++j) c(i, j) = std::sqrt(detail::sqdist3(s1, i, s2, j));
  return c;
}

/// Kuhn-Munkres with potentials, O(n^3), on a square cost matrix.
inline Assignment hungarian(const Matrix<double>& cost) {
  const Index n = cost.rows();
  if (cost.cols() != n) throw ShapeError("hungarian: cost matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<Index> p(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
  for (Index i = 1; i <= n; ++i) {
    p[0] = i;
    Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
    std::vector<char> used(static_cast<std::size_t>(n + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const Index i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const Index j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  Assignment a;
  a.target.assign(static_cast<std::size_t>(n), -1);
  for (Index j = 1; j <= n; ++j) a.target[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  for (Index i = 0; i < n; ++i) a.cost += cost(i, a.target[static_cast<std::size_t>(i)]);
  return a;
}

struct AuctionOptions {
  double relative_tolerance = 1e-3;  // target gap as a fraction of a cost lower bound
  double scaling_factor = 5.0;
};

/// Forward auction with epsilon scaling for min-cost perfect matching. The
/// final epsilon bounds the gap to the optimum by n * epsilon.
inline Assignment auction(const Matrix<double>& cost, const AuctionOptions& opt = {}) {
  const Index n = cost.rows();
  if (cost.cols() != n) throw ShapeError("auction: cost matrix must be square");
  Assignment a;
  if (n == 0) return a;
  const double cmax = cost.maxCoeff();
  // Assignment cost lower bound: every row (column) pays at least its minimum.
  const double lb = std::max(cost.rowwise().minCoeff().sum(), cost.colwise().minCoeff().sum());
  const double eps_final = std::max(opt.relative_tolerance * lb / static_cast<double>(n), 1e-12 * std::max(cmax, 1.0));
  double eps = std::max(cmax / 4.0, eps_final);
  std::vector<double> price(static_cast<std::size_t>(n), 0.0);
  std::vector<Index> owner(static_cast<std::size_t>(n), -1);
  std::vector<Index>& target = a.target;
  std::vector<Index> queue;
  queue.reserve(static_cast<std::size_t>(n));
  for (;;) {
    target.assign(static_cast<std::size_t>(n), -1);
    std::fill(owner.begin(), owner.end(), -1);
    queue.clear();
    for (Index i = n; i-- > 0;) queue.push_back(i);
    while (!queue.empty()) {
      const Index i = queue.back();
      queue.pop_back();
      // Best and second-best net value of -cost - price.
      Index best = -1;
      double v1 = -std::numeric_limits<double>::infinity();
      double v2 = -std::numeric_limits<double>::infinity();
      for (Index j = 0; j < n; ++j) {
        const double val = -cost(i, j) - price[static_cast<std::size_t>(j)];
        if (val > v1) {
          v2 = v1;
          v1 = val;
          best = j;
        } else if (val > v2) {
          v2 = val;
        }
      }
      const double increment = (n > 1 ? v1 - v2 : 0.0) + eps;
      price[static_cast<std::size_t>(best)] += increment;
      const Index prev = owner[static_cast<std::size_t>(best)];
      owner[static_cast<std::size_t>(best)] = i;
      target[static_cast<std::size_t>(i)] = best;
      if (prev >= 0) {
        target[static_cast<std::size_t>(prev)] = -1;
        queue.push_back(prev);
      }
    }
    if (eps <= eps_final) break;
    eps = std::max(eps / opt.scaling_factor, eps_final);
  }
  for (Index i = 0; i < n; ++i) a.cost += cost(i, target[static_cast<std::size_t>(i)]);
  return a;
}

inline void require_equal_sizes(const Points& s1, const Points& s2, const char* what) {
  detail::require_cloud(s1, what);
  detail::require_cloud(s2, what);
  if (s1.rows() != s2.rows()) {
    throw ShapeError(std::string(what) + ": size mismatch " + std::to_string(s1.rows()) + " vs " +
                     std::to_string(s2.rows()));
  }
}

inline Assignment emd_exact_matching(const Points& s1, const Points& s2, Index limit = kEmdExactLimit) {
  require_equal_sizes(s1, s2, "emd_exact");
  if (s1.rows() > limit) {
    throw Error("emd_exact: " + std::to_string(s1.rows()) + " points exceeds the exact-size limit " +
                std::to_string(limit));
  }
  return hungarian(distance_matrix(s1, s2));
}

inline double emd_exact(const Points& s1, const Points& s2, Index limit = kEmdExactLimit) {
  return emd_exact_matching(s1, s2, limit).cost;
}

inline Assignment emd_approx_matching(const Points& s1, const Points& s2, const AuctionOptions& opt = {}) {
  require_equal_sizes(s1, s2, "emd_approx");
  return auction(distance_matrix(s1, s2), opt);
}

inline double emd_approx(const Points& s1, const Points& s2, const AuctionOptions& opt = {}) {
  return emd_approx_matching(s1, s2, opt).cost;
}

/// Gradient of the matched cost sum_i |s1_i - s2_m(i)| with respect to s1,
/// holding the matching fixed.
template <typename T>
Matrix<T> emd_grad_s1(const Matrix<T>& s1, const Matrix<T>& s2, const Assignment& m) {
  Matrix<T> g = Matrix<T>::Zero(s1.rows(), 3);
  for (Index i = 0; i < s1.rows(); ++i) {
    const RowVector<T> d = s1.row(i) - s2.row(m.target[static_cast<std::size_t>(i)]);
    const T norm = d.norm();
    if (norm > T(0)) g.row(i) = d / norm;
  }
  return g;
}

/// Distance between two clouds under `kind`.
inline double cloud_distance(const Points& s1, const Points& s2, DistanceKind kind) {
  switch (kind) {
    case DistanceKind::kChamfer:
      return chamfer(s1, s2);
    case DistanceKind::kEmdExact:
      return emd_exact(s1, s2);
    case DistanceKind::kEmdApprox:
      return emd_approx(s1, s2);
  }
  return 0.0;
}

}  // namespace lpm
