#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "projood/binary_io.hpp"
#include "projood/centroids.hpp"
#include "projood/error.hpp"

using namespace projood;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "projood_unit";
  fs::create_directories(dir);
  return dir / name;
}

void expect_unit_rows(const CentroidSet& s) {
  for (int i = 0; i < s.class_count(); ++i) EXPECT_NEAR(s.vectors().row(i).norm(), 1.0, 1e-9);
}

}  // namespace

TEST(Simplex, AntipodalPair) {
  const CentroidSet s = generate_simplex(2, 1);
  EXPECT_NEAR(s.vectors()(0, 0) * s.vectors()(1, 0), -1.0, 1e-12);
  EXPECT_NEAR(std::abs(s.vectors()(0, 0)), 1.0, 1e-12);
}

TEST(Simplex, GramMatchesRegularSimplex) {
  for (int n = 1; n <= 12; ++n)
    for (int c = 2; c <= n + 1; ++c) {
      const CentroidSet s = generate_simplex(c, n);
      expect_unit_rows(s);
      const Eigen::MatrixXd g = s.vectors() * s.vectors().transpose();
      const double off = -1.0 / (c - 1);
      const Eigen::MatrixXd expected =
          (1.0 + 1.0 / (c - 1)) * Eigen::MatrixXd::Identity(c, c) + off * Eigen::MatrixXd::Ones(c, c);
      EXPECT_LT((g - expected).cwiseAbs().maxCoeff(), 1e-6) << "c=" << c << " n=" << n;
    }
}

TEST(Simplex, TriangleAndTetrahedron) {
  const CentroidSet t = generate_simplex(3, 2);
  const CentroidSet q = generate_simplex(4, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) EXPECT_NEAR(t.vectors().row(i).dot(t.vectors().row(j)), -0.5, 1e-6);
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) EXPECT_NEAR(q.vectors().row(i).dot(q.vectors().row(j)), -1.0 / 3.0, 1e-6);
}

TEST(Simplex, TooManyClassesIsADimensionError) {
  EXPECT_THROW(generate_simplex(4, 2), DimensionError);
  EXPECT_THROW(generate_simplex(1, 2), InvalidArgument);
}

TEST(Iterative, TriangleMatchesSimplex) {
  for (std::uint64_t seed : {0u, 1u, 17u}) {
    IterativeOptions o;
    o.seed = seed;
    const CentroidSet s = generate_iterative(3, 2, o);
    expect_unit_rows(s);
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) EXPECT_NEAR(s.vectors().row(i).dot(s.vectors().row(j)), -0.5, 1e-3);
  }
}

TEST(Iterative, SixPointsFormARegularHexagon) {
  const CentroidSet s = generate_iterative(6, 2);
  std::vector<double> angles;
  for (int i = 0; i < 6; ++i) angles.push_back(std::atan2(s.vectors()(i, 1), s.vectors()(i, 0)));
  std::sort(angles.begin(), angles.end());
  // Brute-force optimum of 6 points on a circle: equal gaps of 2 pi / 6.
  for (int i = 0; i < 6; ++i) {
    const double gap = i + 1 < 6 ? angles[i + 1] - angles[i] : angles[0] + 2 * std::numbers::pi - angles[5];
    EXPECT_NEAR(gap, 2 * std::numbers::pi / 6, 1e-2);
  }
}

TEST(Iterative, TwoPointsBecomeAntipodal) {
  const CentroidSet s = generate_iterative(2, 5);
  EXPECT_NEAR(s.vectors().row(0).dot(s.vectors().row(1)), -1.0, 1e-6);
}

TEST(Iterative, SameSeedIsBitwiseIdentical) {
  IterativeOptions o;
  o.seed = 5;
  o.steps = 2000;
  const CentroidSet a = generate_iterative(7, 4, o);
  const CentroidSet b = generate_iterative(7, 4, o);
  EXPECT_EQ(0, std::memcmp(a.vectors().data(), b.vectors().data(), sizeof(double) * a.vectors().size()));
  EXPECT_EQ(a.generator(), CentroidGenerator::Iterative);
}

TEST(Iterative, BeyondSimplexCapacityStillUnitNorm) {
  IterativeOptions o;
  o.steps = 3000;
  const CentroidSet s = generate_iterative(10, 3, o);
  expect_unit_rows(s);
  EXPECT_GT(min_pairwise_angle(s.vectors()), 0.5);
}

TEST(Iterative, MinimumAngleNonDecreasingOverFinalTenthOfSteps) {
  for (auto [c, n] : {std::pair{12, 3}, std::pair{5, 4}, std::pair{30, 6}}) {
    std::vector<double> trace;
    IterativeOptions o;
    o.seed = 3;
    o.steps = 2000;
    o.min_angle_trace = &trace;
    generate_iterative(c, n, o);
    ASSERT_FALSE(trace.empty());
    const std::size_t from = 1800;  // the guarded window
    for (std::size_t i = from + 1; i < trace.size(); ++i) EXPECT_GE(trace[i], trace[i - 1]) << "step " << i;
  }
}

TEST(CentroidFile, RoundTripIsBitwiseEqual) {
  const CentroidSet s = generate_iterative(3, 2);
  const fs::path p = temp_path("tri.pdcc");
  save_centroids(s, p);
  const CentroidSet t = load_centroids(p);
  ASSERT_EQ(t.class_count(), 3);
  ASSERT_EQ(t.feature_dim(), 2);
  EXPECT_EQ(0, std::memcmp(s.vectors().data(), t.vectors().data(), sizeof(double) * 6));
  EXPECT_EQ(t.generator(), CentroidGenerator::Iterative);
}

TEST(CentroidFile, TruncatedIsMalformed) {
  const fs::path p = temp_path("trunc.pdcc");
  save_centroids(generate_simplex(3, 2), p);
  auto bytes = bin::read_file(p);
  bytes.resize(bytes.size() - 5);
  bin::write_file(p, bytes);
  EXPECT_THROW(load_centroids(p), MalformedFile);
}

TEST(CentroidFile, WrongMagicIsVersionMismatch) {
  const fs::path p = temp_path("magic.pdcc");
  save_centroids(generate_simplex(3, 2), p);
  auto bytes = bin::read_file(p);
  bytes[0] = 'X';
  bin::write_file(p, bytes);
  EXPECT_THROW(load_centroids(p), VersionMismatch);
}

TEST(CentroidSetType, RejectsNonUnitRows) {
  Eigen::MatrixXd v(2, 2);
  v << 1, 0, 0, 2;
  EXPECT_THROW(CentroidSet(v, CentroidGenerator::Simplex), InvalidArgument);
}
