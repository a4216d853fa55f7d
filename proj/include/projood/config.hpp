#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "projood/centroids.hpp"
#include "projood/dataset.hpp"
#include "projood/fusion.hpp"
#include "projood/losses.hpp"
#include "projood/network.hpp"
#include "projood/projection.hpp"

namespace projood {

struct CentroidConfig {
  CentroidGenerator generator = CentroidGenerator::Simplex;
  int steps = 10000;
  double step_size = 0.05;
};

// Everything one experiment needs. Dataset, training and fusion seeds are
// not stored: they are derived from `seed` by name (see sub_seed).
struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs/experiment";
  BiasMode bias_mode = BiasMode::Exclude;

  CentroidConfig centroids;
  NetworkConfig network;
  LossConfig loss;

  DatasetSpec id;
  double train_fraction = 0.8;
  // Fusion is fitted on ID-train against this source only.
  DatasetSpec reference_ood;
  // Held-out OOD sources, evaluated with the fusion fitted above.
  std::vector<DatasetSpec> test_ood;

  FusionOptions fusion;
  int histogram_bins = 50;

  std::uint64_t sub_seed(std::string_view purpose) const;
  void validate() const;
};

// Named seed derived from a global one; stable across platforms.
std::uint64_t derive_seed(std::uint64_t global, std::string_view purpose);

// INI-style text: [section] headers, key = value lines, '#' or ';' comments.
// Relative paths are resolved against base_dir. Unknown sections or keys are
// rejected with InvalidArgument.
ExperimentConfig parse_experiment(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment(const std::filesystem::path& path);

std::string to_string(BiasMode mode);
BiasMode parse_bias_mode(const std::string& s);

}  // namespace projood
