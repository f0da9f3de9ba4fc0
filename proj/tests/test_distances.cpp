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

using testing::brute_chamfer;
using testing::brute_emd;
using testing::random_points;

TEST(Chamfer, MatchesBruteForce) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Points a = random_points(1 + trial % 17, rng);
    const Points b = random_points(1 + (trial * 7) % 23, rng);
    EXPECT_NEAR(chamfer(a, b), brute_chamfer(a, b), 1e-12);
  }
}

TEST(Chamfer, KdTreePathMatchesBruteForce) {
  std::mt19937_64 rng(2);
  const Points a = random_points(kKdTreeThreshold + 37, rng);
  const Points b = random_points(kKdTreeThreshold + 101, rng);
  EXPECT_NEAR(chamfer(a, b), brute_chamfer(a, b), 1e-10);
}

TEST(KdTree, TiesResolveToLowestIndex) {
  Points ref(4, 3);
  ref << 1, 0, 0, -1, 0, 0, 0, 1, 0, 1, 0, 0;
  Points q = Points::Zero(1, 3);
  KdTree<double> tree(ref);
  EXPECT_EQ(tree.nearest(q, 0).first, 0);
  Points dup(600, 3);
  for (Index i = 0; i < dup.rows(); ++i) dup.row(i) << 0.5, 0.5, 0.5;
  EXPECT_EQ(nearest_neighbors(q, dup).index[0], 0);
}

TEST(Chamfer, PropertiesOnRandomPairs) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const Points a = random_points(32, rng);
    const Points b = random_points(40, rng);
    EXPECT_EQ(chamfer(a, b), chamfer(b, a));
    EXPECT_GE(chamfer(a, b), 0.0);
    EXPECT_EQ(chamfer(a, a), 0.0);
  }
}

TEST(Chamfer, RejectsEmptyAndMalformed) {
  EXPECT_THROW(chamfer(Points(0, 3), Points(Points::Ones(2, 3))), EmptyInputError);
  EXPECT_THROW(chamfer(Points(Points::Ones(2, 2)), Points(Points::Ones(2, 3))), ShapeError);
}

TEST(Chamfer, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  const Points a = random_points(7, rng);
  const Points b = random_points(9, rng);
  const Matrix<double> analytic = chamfer_grad_s1(a, b, chamfer_detail(a, b));
  const Matrix<double> numeric = testing::numeric_gradient(a, [&](const Matrix<double>& x) { return chamfer(x, b); });
  EXPECT_LE(testing::max_relative_error(analytic, numeric), 1e-6);
}

TEST(Hungarian, MatchesPermutationEnumeration) {
  std::mt19937_64 rng(5);
  for (Index n = 1; n <= 6; ++n) {
    for (int trial = 0; trial < 10; ++trial) {
      const Points a = random_points(n, rng);
      const Points b = random_points(n, rng);
      EXPECT_NEAR(emd_exact(a, b), brute_emd(a, b), 1e-9) << "n = " << n;
    }
  }
}

TEST(Hungarian, AssignmentIsAPermutation) {
  std::mt19937_64 rng(6);
  const Points a = random_points(30, rng);
  const Points b = random_points(30, rng);
  auto m = emd_exact_matching(a, b);
  std::vector<Index> sorted = m.target;
  std::sort(sorted.begin(), sorted.end());
  for (Index i = 0; i < 30; ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);
}

TEST(Auction, WithinOnePercentOfExact) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Points a = random_points(64, rng);
    const Points b = random_points(64, rng);
    const double exact = emd_exact(a, b);
    const double approx = emd_approx(a, b);
    EXPECT_GE(approx, exact - 1e-9);
    EXPECT_LE(approx, 1.01 * exact);
  }
}

TEST(Auction, ExactOnIdenticalAndPermutedClouds) {
  std::mt19937_64 rng(8);
  const Points a = random_points(50, rng);
  Points b = a;
  std::vector<Index> perm(50);
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  for (Index i = 0; i < 50; ++i) b.row(i) = a.row(perm[static_cast<std::size_t>(i)]);
  EXPECT_NEAR(emd_approx(a, b), 0.0, 1e-12);
  EXPECT_NEAR(emd_exact(a, b), 0.0, 1e-12);
}

TEST(Emd, SizeErrors) {
  EXPECT_THROW(emd_exact(Points::Ones(3, 3), Points::Ones(4, 3)), ShapeError);
  EXPECT_THROW(emd_approx(Points::Ones(3, 3), Points::Ones(4, 3)), ShapeError);
  std::mt19937_64 rng(9);
  EXPECT_THROW(emd_exact(random_points(10, rng), random_points(10, rng), 8), Error);
}

TEST(Emd, GradientWithFixedMatching) {
  std::mt19937_64 rng(10);
  const Points a = random_points(6, rng);
  const Points b = random_points(6, rng);
  const auto m = emd_exact_matching(a, b);
  auto matched_cost = [&](const Matrix<double>& x) {
    double s = 0.0;
    for (Index i = 0; i < x.rows(); ++i) s += (x.row(i) - b.row(m.target[static_cast<std::size_t>(i)])).norm();
    return s;
  };
  EXPECT_LE(testing::max_relative_error(emd_grad_s1(a, b, m), testing::numeric_gradient(a, matched_cost)), 1e-6);
}

TEST(Losses, ChamferLossGradientAndReductions) {
  std::mt19937_64 rng(11);
  const Index n = 5;
  ad::Parameter<double> pred{"pred", random_points(2 * n, rng)};
  const std::vector<Matrix<double>> targets{random_points(4, rng), random_points(6, rng)};
  for (auto red : {Reduction::kSum, Reduction::kMean}) {
    auto rep = grad_check([&](ad::Tape<double>& t) { return chamfer_loss(t, t.parameter(pred), n, targets, red); },
                          std::vector<ad::Parameter<double>*>{&pred});
    EXPECT_LE(rep.max_relative_error, 1e-6) << to_string(red);
  }
  ad::Tape<double> t;
  const double sum = t.value(chamfer_loss(t, t.constant(pred.value), n, targets, Reduction::kSum))(0, 0);
  const double want = 0.5 * (brute_chamfer(pred.value.topRows(n), targets[0]) +
                             brute_chamfer(pred.value.bottomRows(n), targets[1]));
  EXPECT_NEAR(sum, want, 1e-12);
}

TEST(Losses, ChamferLossMeanIsPerPointAverage) {
  std::mt19937_64 rng(12);
  const Points p = random_points(5, rng);
  const Points q = random_points(8, rng);
  ad::Tape<double> t;
  const double v = t.value(chamfer_loss(t, t.constant(p), 5, {q}, Reduction::kMean))(0, 0);
  const auto d = chamfer_detail(p, q);
  EXPECT_NEAR(v, d.forward / 5.0 + d.backward / 8.0, 1e-14);
}

TEST(Losses, EmdLossValueAndShapeChecks) {
  std::mt19937_64 rng(13);
  const Points p = random_points(6, rng);
  const Points q = random_points(6, rng);
  ad::Tape<double> t;
  const double v = t.value(emd_loss(t, t.constant(p), 6, {q}, Reduction::kSum))(0, 0);
  EXPECT_GE(v, brute_emd(p, q) - 1e-12);
  EXPECT_LE(v, 1.01 * brute_emd(p, q));
  EXPECT_THROW(emd_loss(t, t.constant(p), 6, {random_points(5, rng)}, Reduction::kSum), ShapeError);
}

}  // namespace
}  // namespace lpm
