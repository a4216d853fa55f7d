#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "projood/layers.hpp"

namespace projood {

inline constexpr int kOodLabel = -1;

struct Dataset {
  std::string name;
  TensorShape shape;
  Batch features;           // one sample per row
  std::vector<int> labels;  // class index, or kOodLabel

  Eigen::Index size() const { return features.rows(); }
  bool empty() const { return features.rows() == 0; }
  bool is_ood() const;
};

enum class DatasetKind { GaussianMixture, TwoMoons, UniformRing, ShiftedCluster, UniformNoise, IdxImages };

DatasetKind parse_dataset_kind(const std::string& s);
std::string to_string(DatasetKind k);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::GaussianMixture;
  std::string name;
  std::uint64_t seed = 0;
  int samples = 1000;
  int dim = 2;

  // gaussian_mixture: class means evenly spaced on a circle of this radius
  // in the first two coordinates.
  int class_count = 4;
  double cluster_radius = 1.5;
  double cluster_std = 0.3;
  // two_moons
  double moon_noise = 0.1;
  // uniform_ring: uniform over the shell inner <= |x| <= outer
  double ring_inner = 5.0;
  double ring_outer = 6.0;
  // shifted_cluster: isotropic Gaussian
  std::vector<double> center{3.5, 3.5};
  double spread = 0.3;
  // uniform_noise: uniform over the box [low, high]^dim
  double low = -6.0;
  double high = 6.0;
  // idx_images
  std::filesystem::path images_path;
  std::optional<std::filesystem::path> labels_path;
  bool as_ood = false;  // discard labels and mark every sample OOD
  int offset = 0;       // skip this many samples first
  int limit = 0;        // then keep at most `limit` samples when > 0
};

// Synthetic ID/OOD stand-ins. Deterministic in (spec, spec.seed).
Dataset generate_synthetic(const DatasetSpec& spec);
// Dispatches to generate_synthetic or load_idx.
Dataset make_dataset(const DatasetSpec& spec);

struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;
};

// Unsigned-byte IDX files only (type code 0x08).
IdxArray read_idx(const std::filesystem::path& path);
void write_idx(const std::filesystem::path& path, const IdxArray& array);

// Pixels scaled to [0,1] by /255. Labels, when given, must match the image
// count. Without labels (or with as_ood) every sample is marked OOD.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::optional<std::filesystem::path>& labels_path = std::nullopt, bool as_ood = false,
                 int limit = 0, int offset = 0);

Dataset subset(const Dataset& data, const std::vector<Eigen::Index>& indices, std::string name = {});

// Disjoint, exhaustive, stratified by label. fractions = (train, test), sum 1.
std::pair<Dataset, Dataset> split(const Dataset& data, std::pair<double, double> fractions, std::uint64_t seed);

}  // namespace projood
