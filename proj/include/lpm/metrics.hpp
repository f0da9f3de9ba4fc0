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

// Set-level metrics for generated clouds: minimum matching distance,
// coverage, occupancy-grid Jensen-Shannon divergence and total mutual
// difference.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lpm/distances.hpp"

namespace lpm {

inline constexpr int kDefaultGridResolution = 28;

/// D(i, j) = distance(samples[i], reference[j]).
inline Matrix<double> pairwise_distances(const std::vector<Points>& samples, const std::vector<Points>& reference,
                                         DistanceKind kind) {
  Matrix<double> d(static_cast<Index>(samples.size()), static_cast<Index>(reference.size()));
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = 0; j < reference.size(); ++j)
      d(static_cast<Index>(i), static_cast<Index>(j)) = cloud_distance(samples[i], reference[j], kind);
  return d;
}

namespace detail {

inline void require_sets(std::size_t samples, std::size_t reference, const char* what) {
  if (samples == 0 || reference == 0) throw EmptyInputError(std::string(what) + ": empty cloud set");
}

}  // namespace detail

/// Mean over reference clouds of the distance to the nearest sample.
inline double mmd_from_distances(const Matrix<double>& d) {
  detail::require_sets(static_cast<std::size_t>(d.rows()), static_cast<std::size_t>(d.cols()), "mmd");
  double total = 0.0;
  for (Index j = 0; j < d.cols(); ++j) total += d.col(j).minCoeff();
  return total / static_cast<double>(d.cols());
}

/// Percentage of reference clouds that are the nearest reference of at
/// least one sample. Ties go to the lowest reference index.
inline double coverage_from_distances(const Matrix<double>& d) {
  detail::require_sets(static_cast<std::size_t>(d.rows()), static_cast<std::size_t>(d.cols()), "coverage");
  std::set<Index> matched;
  for (Index i = 0; i < d.rows(); ++i) {
    Index best = 0;
    d.row(i).minCoeff(&best);
    matched.insert(best);
  }
  return 100.0 * static_cast<double>(matched.size()) / static_cast<double>(d.cols());
}

inline double mmd(const std::vector<Points>& samples, const std::vector<Points>& reference, DistanceKind kind) {
  detail::require_sets(samples.size(), reference.size(), "mmd");
  return mmd_from_distances(pairwise_distances(samples, reference, kind));
}

inline double coverage(const std::vector<Points>& samples, const std::vector<Points>& reference, DistanceKind kind) {
  detail::require_sets(samples.size(), reference.size(), "coverage");
  return coverage_from_distances(pairwise_distances(samples, reference, kind));
}

/// Jensen-Shannon divergence (natural log) of two distributions.
inline double jsd_distributions(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw ShapeError("jsd: distributions of different sizes");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) total += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) total += 0.5 * q[i] * std::log(q[i] / m);
  }
  return total;
}

struct OccupancyGrid {
  std::vector<double> distribution;  // resolution^3 bins summing to 1
  std::size_t clamped = 0;           // points outside [-1, 1]^3 moved to a boundary bin
};

/// Bins every point of every cloud into a resolution^3 grid over [-1, 1]^3.
inline OccupancyGrid occupancy_grid(const std::vector<Points>& clouds, int resolution) {
  if (resolution < 1) throw Error("jsd: grid resolution must be >= 1");
  const auto r = static_cast<std::size_t>(resolution);
  OccupancyGrid g;
  g.distribution.assign(r * r * r, 0.0);
  std::size_t total = 0;
  for (const auto& c : clouds) {
    for (Index i = 0; i < c.rows(); ++i) {
      std::size_t bin[3];
      bool outside = false;
      for (int d = 0; d < 3; ++d) {
        const double v = c(i, d);
        if (!std::isfinite(v)) throw NonFiniteError("jsd: non-finite coordinate");
        outside = outside || v < -1.0 || v > 1.0;
        const double cell = std::floor((v + 1.0) * 0.5 * resolution);
        bin[d] = static_cast<std::size_t>(std::clamp(cell, 0.0, static_cast<double>(resolution - 1)));
      }
      g.clamped += outside ? 1 : 0;
      g.distribution[(bin[0] * r + bin[1]) * r + bin[2]] += 1.0;
      ++total;
    }
  }
  if (total == 0) throw EmptyInputError("jsd: no points");
  for (double& v : g.distribution) v /= static_cast<double>(total);
  return g;
}

struct JsdResult {
  double value = 0.0;
  std::size_t clamped = 0;
};

inline JsdResult jsd(const std::vector<Points>& samples, const std::vector<Points>& reference,
                     int resolution = kDefaultGridResolution) {
  detail::require_sets(samples.size(), reference.size(), "jsd");
  const auto a = occupancy_grid(samples, resolution);
  const auto b = occupancy_grid(reference, resolution);
  return {jsd_distributions(a.distribution, b.distribution), a.clamped + b.clamped};
}

/// For each input, mean chamfer distance over unordered variant pairs;
/// averaged over inputs.
inline double tmd(const std::vector<std::vector<Points>>& variant_sets) {
  if (variant_sets.empty()) throw EmptyInputError("tmd: no inputs");
  double total = 0.0;
  for (std::size_t s = 0; s < variant_sets.size(); ++s) {
    const auto& v = variant_sets[s];
    if (v.size() < 2) throw EmptyInputError("tmd: input " + std::to_string(s) + " has fewer than 2 variants");
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < v.size(); ++i)
      for (std::size_t j = i + 1; j < v.size(); ++j, ++pairs) sum += chamfer(v[i], v[j]);
    total += sum / static_cast<double>(pairs);
  }
  return total / static_cast<double>(variant_sets.size());
}

// ---------------------------------------------------------------------------
// Report

struct MetricReport {
  std::optional<double> mmd_cd, mmd_emd, cov_cd, cov_emd, jsd, tmd;
  std::size_t jsd_clamped = 0;
  int grid_resolution = kDefaultGridResolution;
  std::size_t reference_size = 0;
  std::size_t sample_size = 0;
};

struct MetricSelection {
  bool cd = true;
  bool emd = true;
  bool jsd = true;
  int grid_resolution = kDefaultGridResolution;
  DistanceKind emd_kind = DistanceKind::kEmdApprox;
};

inline MetricReport evaluate_sets(const std::vector<Points>& samples, const std::vector<Points>& reference,
                                  const MetricSelection& sel) {
  detail::require_sets(samples.size(), reference.size(), "evaluate");
  MetricReport r;
  r.reference_size = reference.size();
  r.sample_size = samples.size();
  r.grid_resolution = sel.grid_resolution;
  if (sel.cd) {
    const auto d = pairwise_distances(samples, reference, DistanceKind::kChamfer);
    r.mmd_cd = mmd_from_distances(d);
    r.cov_cd = coverage_from_distances(d);
  }
  if (sel.emd) {
    const auto d = pairwise_distances(samples, reference, sel.emd_kind);
    r.mmd_emd = mmd_from_distances(d);
    r.cov_emd = coverage_from_distances(d);
  }
  if (sel.jsd) {
    const auto j = jsd(samples, reference, sel.grid_resolution);
    r.jsd = j.value;
    r.jsd_clamped = j.clamped;
  }
  return r;
}

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j;
  auto put = [&](const char* key, const std::optional<double>& v) {
    j[key] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  put("jsd", r.jsd);
  put("mmd_cd", r.mmd_cd);
  put("mmd_emd", r.mmd_emd);
  put("cov_cd", r.cov_cd);
  put("cov_emd", r.cov_emd);
  put("tmd", r.tmd);
  j["jsd_clamped_points"] = r.jsd_clamped;
  j["grid_resolution"] = r.grid_resolution;
  j["reference_size"] = r.reference_size;
  j["sample_size"] = r.sample_size;
  return j;
}

/// One header row and one value row, columns padded to equal width.
inline std::string to_table(const MetricReport& r, const std::string& label = "model") {
  const std::vector<std::pair<std::string, std::optional<double>>> cols{
      {"JSD", r.jsd},         {"MMD-CD", r.mmd_cd},   {"MMD-EMD", r.mmd_emd},
      {"COV-CD(%)", r.cov_cd}, {"COV-EMD(%)", r.cov_emd}, {"TMD", r.tmd}};
  std::ostringstream head, row;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%-12s", "");
  head << buf;
  std::snprintf(buf, sizeof(buf), "%-12s", label.substr(0, 12).c_str());
  row << buf;
  for (const auto& [name, v] : cols) {
    std::snprintf(buf, sizeof(buf), "%12s", name.c_str());
    head << buf;
    if (v) {
      std::snprintf(buf, sizeof(buf), "%12.6f", *v);
    } else {
      std::snprintf(buf, sizeof(buf), "%12s", "-");
    }
    row << buf;
  }
  return head.str() + "\n" + row.str() + "\n";
}

}  // namespace lpm
