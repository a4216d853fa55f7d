#include "projood/centroids.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <random>
#include <string>

#include "projood/binary_io.hpp"
#include "projood/error.hpp"

namespace projood {

namespace {

constexpr char kMagic[] = "PDCC";
constexpr std::uint32_t kVersion = 1;

// Rows are unit vectors, so squared distances follow from the Gram matrix.
Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& a) {
  Eigen::MatrixXd d2 = (2.0 - 2.0 * (a * a.transpose()).array()).matrix();
  d2.diagonal().setConstant(std::numeric_limits<double>::infinity());
  return d2.cwiseMax(1e-300);
}

double repulsion_energy(const Eigen::MatrixXd& a) {
  // Each pair counted twice.
  return 0.5 * squared_distances(a).cwiseInverse().sum();
}

// Negative energy gradient (the repulsive force), projected onto each
// point's tangent space: force_i = sum_j 2 (a_i - a_j) / |a_i - a_j|^4.
Eigen::MatrixXd tangent_force(const Eigen::MatrixXd& a) {
  const Eigen::MatrixXd d2 = squared_distances(a);
  const Eigen::MatrixXd w = (2.0 * d2.array().square().inverse()).matrix();
  Eigen::MatrixXd force = w.rowwise().sum().asDiagonal() * a - w * a;
  const Eigen::VectorXd radial = (force.array() * a.array()).rowwise().sum();
  force -= radial.asDiagonal() * a;
  return force;
}

void normalize_rows(Eigen::MatrixXd& a) {
  for (Eigen::Index i = 0; i < a.rows(); ++i) a.row(i).normalize();
}

}  // namespace

CentroidSet::CentroidSet(Eigen::MatrixXd vectors, CentroidGenerator generator)
    : vectors_(std::move(vectors)), generator_(generator) {
  if (vectors_.rows() < 2) throw InvalidArgument("centroid set needs at least 2 classes");
  if (vectors_.cols() < 1) throw InvalidArgument("centroid feature dimension must be >= 1");
  for (Eigen::Index i = 0; i < vectors_.rows(); ++i) {
    if (!vectors_.row(i).allFinite()) throw InvalidArgument("centroid row is not finite");
    if (std::abs(vectors_.row(i).norm() - 1.0) > 1e-9)
      throw InvalidArgument("centroid row " + std::to_string(i) + " is not unit norm");
  }
}

CentroidSet generate_simplex(int class_count, int feature_dim) {
  if (class_count < 2) throw InvalidArgument("class_count must be >= 2");
  if (feature_dim < 1) throw InvalidArgument("feature_dim must be >= 1");
  if (class_count > feature_dim + 1)
    throw DimensionError("simplex with " + std::to_string(class_count) + " vertices needs feature_dim >= " +
                         std::to_string(class_count - 1) + ", got " + std::to_string(feature_dim));
  const int c = class_count;
  // Vertices e_i - (1/c)·1, expressed in the Helmert basis of the hyperplane
  // orthogonal to the all-ones vector: h_k = (1,..,1,-k,0,..)/sqrt(k(k+1)).
  Eigen::MatrixXd helmert = Eigen::MatrixXd::Zero(c, c - 1);
  for (int k = 1; k < c; ++k) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(k) * (k + 1));
    for (int r = 0; r < k; ++r) helmert(r, k - 1) = scale;
    helmert(k, k - 1) = -k * scale;
  }
  // Rows of the identity are the e_i; their projection onto the hyperplane
  // has coordinates helmert.row(i).
  Eigen::MatrixXd vectors = Eigen::MatrixXd::Zero(c, feature_dim);
  vectors.leftCols(c - 1) = helmert;
  normalize_rows(vectors);
  return CentroidSet(std::move(vectors), CentroidGenerator::Simplex);
}

CentroidSet generate_iterative(int class_count, int feature_dim, const IterativeOptions& opts) {
  if (class_count < 2) throw InvalidArgument("class_count must be >= 2");
  if (feature_dim < 2) throw InvalidArgument("iterative generator needs feature_dim >= 2");
  if (opts.steps < 0 || !(opts.step_size > 0.0)) throw InvalidArgument("steps must be >= 0 and step_size > 0");

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(class_count, feature_dim);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = normal(rng);
  normalize_rows(a);

  // Step length is the largest per-point displacement. A step is accepted
  // only if it lowers the energy; in the final 10% it must also not shrink
  // the minimum pairwise angle. Rejections halve the step, acceptances grow
  // it back towards the configured size.
  const int guard_from = opts.steps - opts.steps / 10;
  double step = opts.step_size;
  double energy = repulsion_energy(a);
  double min_angle = min_pairwise_angle(a);
  for (int it = 0; it < opts.steps; ++it) {
    const Eigen::MatrixXd force = tangent_force(a);
    double max_norm = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) max_norm = std::max(max_norm, force.row(i).norm());
    if (max_norm < 1e-300) break;
    Eigen::MatrixXd trial = a + (step / max_norm) * force;
    normalize_rows(trial);
    const double trial_energy = repulsion_energy(trial);
    const double trial_angle = min_pairwise_angle(trial);
    const bool accept = trial_energy < energy && (it < guard_from || trial_angle >= min_angle);
    if (accept) {
      a = std::move(trial);
      energy = trial_energy;
      min_angle = trial_angle;
      step = std::min(opts.step_size, step * 1.2);
    } else {
      step *= 0.5;
    }
    if (opts.min_angle_trace) opts.min_angle_trace->push_back(min_angle);
    if (step < 1e-15) break;
  }

  CentroidSet set(std::move(a), CentroidGenerator::Iterative);
  if (class_count <= feature_dim + 1) {
    const double spread = cosine_spread(set);
    if (spread > 1e-2)
      std::cerr << "warning: iterative centroids (c=" << class_count << ", n=" << feature_dim
                << ") did not converge, pairwise cosine spread " << spread << "\n";
  }
  return set;
}

double cosine_spread(const CentroidSet& set) {
  const Eigen::MatrixXd gram = set.vectors() * set.vectors().transpose();
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (Eigen::Index i = 0; i < gram.rows(); ++i)
    for (Eigen::Index j = i + 1; j < gram.cols(); ++j) {
      lo = std::min(lo, gram(i, j));
      hi = std::max(hi, gram(i, j));
    }
  return hi - lo;
}

double min_pairwise_angle(const Eigen::MatrixXd& vectors) {
  const Eigen::MatrixXd gram = vectors * vectors.transpose();
  double largest = -1.0;
  for (Eigen::Index i = 0; i < gram.rows(); ++i)
    for (Eigen::Index j = i + 1; j < gram.cols(); ++j) largest = std::max(largest, gram(i, j));
  return std::acos(std::clamp(largest, -1.0, 1.0));
}

void save_centroids(const CentroidSet& set, const std::filesystem::path& path) {
  bin::Writer w;
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(set.class_count()));
  w.u32(static_cast<std::uint32_t>(set.feature_dim()));
  w.u8(static_cast<std::uint8_t>(set.generator()));
  // Row-major payload.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = set.vectors();
  w.f64s(std::span<const double>(rm.data(), static_cast<std::size_t>(rm.size())));
  w.save(path);
}

CentroidSet load_centroids(const std::filesystem::path& path) {
  auto r = bin::Reader::open(path);
  if (r.bytes(4) != std::string_view(kMagic, 4)) throw VersionMismatch(path.string() + ": not a centroid file");
  if (const auto v = r.u32(); v != kVersion)
    throw VersionMismatch(path.string() + ": unsupported centroid format version " + std::to_string(v));
  const std::uint32_t c = r.u32();
  const std::uint32_t n = r.u32();
  const std::uint8_t flag = r.u8();
  if (flag > 1) throw MalformedFile(path.string() + ": unknown generator flag");
  if (c < 2 || n < 1 || c > 100000 || n > 100000) throw MalformedFile(path.string() + ": implausible dimensions");
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(c, n);
  r.f64s(std::span<double>(rm.data(), static_cast<std::size_t>(rm.size())));
  if (!r.at_end()) throw MalformedFile(path.string() + ": trailing bytes");
  try {
    return CentroidSet(Eigen::MatrixXd(rm), static_cast<CentroidGenerator>(flag));
  } catch (const InvalidArgument& e) {
    throw MalformedFile(path.string() + ": " + e.what());
  }
}

}  // namespace projood
