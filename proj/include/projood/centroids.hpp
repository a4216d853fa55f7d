#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

namespace projood {

enum class CentroidGenerator : std::uint8_t { Simplex = 0, Iterative = 1 };

// Fixed class targets a_1..a_c on the unit sphere of R^n, stored one per row.
// Immutable after construction.
class CentroidSet {
 public:
  CentroidSet(Eigen::MatrixXd vectors, CentroidGenerator generator);

  int class_count() const { return static_cast<int>(vectors_.rows()); }
  int feature_dim() const { return static_cast<int>(vectors_.cols()); }
  const Eigen::MatrixXd& vectors() const { return vectors_; }
  Eigen::VectorXd row(int i) const { return vectors_.row(i).transpose(); }
  CentroidGenerator generator() const { return generator_; }

 private:
  Eigen::MatrixXd vectors_;
  CentroidGenerator generator_;
};

// Regular simplex with c vertices embedded in the first c-1 coordinates of
// R^n. Pairwise cosine is -1/(c-1). Throws DimensionError when c > n + 1.
CentroidSet generate_simplex(int class_count, int feature_dim);

struct IterativeOptions {
  std::uint64_t seed = 0;
  int steps = 10000;
  double step_size = 0.05;
  // When set, receives the minimum pairwise angle after every step.
  std::vector<double>* min_angle_trace = nullptr;
};

// Inverse-square repulsion on the sphere. Works for any c >= 2, n >= 2.
// Writes a warning to stderr when c <= n + 1 and the pairwise cosines have
// not settled onto the simplex value.
CentroidSet generate_iterative(int class_count, int feature_dim, const IterativeOptions& opts = {});

// Largest minus smallest off-diagonal cosine.
double cosine_spread(const CentroidSet& set);
// Smallest pairwise angle in radians.
double min_pairwise_angle(const Eigen::MatrixXd& vectors);

void save_centroids(const CentroidSet& set, const std::filesystem::path& path);
CentroidSet load_centroids(const std::filesystem::path& path);

}  // namespace projood
