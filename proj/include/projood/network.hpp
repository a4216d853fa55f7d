#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "projood/centroids.hpp"
#include "projood/dataset.hpp"
#include "projood/layers.hpp"
#include "projood/losses.hpp"

namespace projood {

enum class LayerKind { Dense, Conv3x3, MaxPool2, Flatten };

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  int size = 0;  // width for dense, channels for conv3x3
  bool operator==(const LayerSpec&) const = default;
};

// "conv3x3:16,maxpool2,conv3x3:32,maxpool2,flatten" or "dense:64,dense:32"
std::vector<LayerSpec> parse_architecture(std::string_view text);
std::string format_architecture(const std::vector<LayerSpec>& layers);
TensorShape parse_shape(std::string_view text);  // "2", "1x28x28"

struct LearningRateSchedule {
  double initial = 0.1;
  double decay = 0.1;
  std::vector<double> decay_at{0.3, 0.6};  // fractions of the epoch budget
  double at_epoch(int epoch, int total_epochs) const;
};

struct NetworkConfig {
  TensorShape input_shape{2, 1, 1};
  std::vector<LayerSpec> architecture{{LayerKind::Dense, 64}, {LayerKind::Dense, 32}};
  int class_count = 4;
  int pedcc_dim = 8;
  bool final_bn_relu = false;
  bool fc1_bias = true;
  int epochs = 100;
  int batch_size = 128;
  LearningRateSchedule lr;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  double checkpoint_fraction = 0.7;

  // m: width of the feature fed to the first fully connected layer.
  int feature_dim() const;
  void validate() const;
  std::string serialize() const;
  static NetworkConfig deserialize(std::string_view text);
};

struct ForwardResult {
  Batch f_m;        // input of FC1
  Batch f_n;        // output of FC1
  Batch cos_theta;  // cosine to each centroid
  std::vector<std::uint8_t> degenerate;  // 1 where |f_n| == 0
};

// Feature extractor -> [BN + ReLU] -> FC1 -> fixed-centroid cosine head.
// Hidden dense/conv layers are followed by ReLU; the last weighted feature
// layer is left linear so that f_m is its raw output unless final_bn_relu.
class NetworkModel {
 public:
  NetworkModel(NetworkConfig config, CentroidSet centroids);
  NetworkModel(NetworkModel&&) noexcept = default;
  NetworkModel& operator=(NetworkModel&&) noexcept = default;

  const NetworkConfig& config() const { return config_; }
  const CentroidSet& centroids() const { return centroids_; }
  int feature_dim() const { return config_.feature_dim(); }

  ForwardResult infer(const Batch& x) const;
  ForwardResult forward_train(const Batch& x);
  // Backpropagates a gradient wrt f_n through FC1 and the feature layers.
  void backward(const Batch& d_fn);

  std::vector<ParamRef> parameters();
  void zero_grad();

  Dense& fc1() { return *fc1_; }
  const Dense& fc1() const { return *fc1_; }
  const std::vector<std::unique_ptr<Layer>>& feature_layers() const { return layers_; }

 private:
  NetworkConfig config_;
  CentroidSet centroids_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<std::string> layer_names_;
  std::unique_ptr<Dense> fc1_;
};

// cos_theta(i, j) = <f_i, a_j> / (|f_i| |a_j|); rows with |f_i| == 0 give 0
// and are flagged.
Batch cosine_head(const Batch& f_n, const CentroidSet& centroids, std::vector<std::uint8_t>* degenerate = nullptr);
Batch cosine_head_backward(const Batch& f_n, const Batch& cos_theta, const Batch& d_cos, const CentroidSet& centroids);

struct LossBreakdown {
  double total = 0.0;
  double am = 0.0;
  double mse = 0.0;
  double lin_ind = 0.0;
};

// L = L_AM + mse_weight * L_MSE + k * L_lin_ind. Zeroes the parameter
// gradients and leaves dL/dparam in them. `out` must come from
// forward_train on the same model.
LossBreakdown loss_total(NetworkModel& model, const ForwardResult& out, std::span<const int> labels,
                         const LossConfig& loss);

struct EpochStats {
  int epoch = 0;  // 1-based
  double learning_rate = 0.0;
  double total = 0.0;
  double am = 0.0;
  double mse = 0.0;
  double lin_ind = 0.0;
  double accuracy = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::vector<std::filesystem::path> checkpoints;
  std::string to_text() const;
  std::string to_csv() const;
};

struct TrainOptions {
  std::optional<std::filesystem::path> checkpoint_dir;
  std::ostream* log = nullptr;
};

// SGD with momentum and weight decay. Deterministic given config().seed.
// Throws NumericalError when the loss stops being finite.
TrainReport train(NetworkModel& model, const Dataset& data, const LossConfig& loss, const TrainOptions& opts = {});

int checkpoint_epoch(const NetworkConfig& config);
std::filesystem::path checkpoint_name(int epoch);  // checkpoint_epoch070.pjod
inline constexpr const char* kFinalCheckpointName = "checkpoint_final.pjod";

void save_checkpoint(const NetworkModel& model, const std::filesystem::path& path);
NetworkModel load_checkpoint(const std::filesystem::path& path);
// Also checks that the stored centroids match `expected`.
NetworkModel load_checkpoint(const std::filesystem::path& path, const CentroidSet& expected);

}  // namespace projood
