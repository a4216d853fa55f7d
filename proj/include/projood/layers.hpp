#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace projood {

// Activations travel as one sample per row. Image tensors are flattened
// channel-major (c, y, x).
using Batch = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct TensorShape {
  int channels = 1;
  int height = 1;
  int width = 1;
  int size() const { return channels * height * width; }
  int spatial() const { return height * width; }
  bool operator==(const TensorShape&) const = default;
};

std::string to_string(const TensorShape& s);

struct ParamRef {
  std::string name;
  Eigen::MatrixXd* value = nullptr;
  Eigen::MatrixXd* grad = nullptr;  // null for buffers such as running statistics
};

class Layer {
 public:
  explicit Layer(TensorShape in) : in_(in) {}
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  virtual TensorShape output_shape() const = 0;
  TensorShape input_shape() const { return in_; }

  // Evaluation-mode forward. Pure.
  virtual Batch infer(const Batch& x) const = 0;
  // Training-mode forward. Caches what backward needs; BN also refreshes its
  // running statistics here.
  virtual Batch forward_train(const Batch& x) { return infer(x); }
  // Accumulates parameter gradients, returns the gradient wrt the input of
  // the most recent forward_train call.
  virtual Batch backward(const Batch& dy) = 0;

  // Trainable parameters followed by buffers, with a common name prefix.
  virtual std::vector<ParamRef> params(const std::string& /*prefix*/) { return {}; }

 protected:
  TensorShape in_;
};

class Dense final : public Layer {
 public:
  Dense(TensorShape in, int out, bool bias);
  std::string kind() const override { return "dense"; }
  TensorShape output_shape() const override { return {out_, 1, 1}; }
  Batch infer(const Batch& x) const override;
  Batch forward_train(const Batch& x) override;
  Batch backward(const Batch& dy) override;
  std::vector<ParamRef> params(const std::string& prefix) override;

  void init_uniform(std::mt19937_64& rng, double bound);
  Eigen::MatrixXd& weight() { return weight_; }
  const Eigen::MatrixXd& weight() const { return weight_; }
  bool has_bias() const { return has_bias_; }
  const Eigen::MatrixXd& bias() const { return bias_; }
  Eigen::MatrixXd& bias() { return bias_; }

 private:
  int out_;
  bool has_bias_;
  Eigen::MatrixXd weight_;  // in x out, columns are the output directions
  Eigen::MatrixXd bias_;    // out x 1
  Eigen::MatrixXd weight_grad_, bias_grad_;
  Batch x_;
};

// 3x3 convolution, stride 1, zero padding 1.
class Conv3x3 final : public Layer {
 public:
  Conv3x3(TensorShape in, int out_channels);
  std::string kind() const override { return "conv3x3"; }
  TensorShape output_shape() const override { return {out_channels_, in_.height, in_.width}; }
  Batch infer(const Batch& x) const override;
  Batch forward_train(const Batch& x) override;
  Batch backward(const Batch& dy) override;
  std::vector<ParamRef> params(const std::string& prefix) override;

  void init_uniform(std::mt19937_64& rng, double bound);
  int fan_in() const { return in_.channels * 9; }

 private:
  Eigen::MatrixXd im2col(const Batch& x) const;
  Batch run(const Eigen::MatrixXd& cols, Eigen::Index n) const;

  int out_channels_;
  Eigen::MatrixXd weight_;  // (in_channels*9) x out_channels
  Eigen::MatrixXd bias_;    // out_channels x 1
  Eigen::MatrixXd weight_grad_, bias_grad_;
  Eigen::MatrixXd cols_;
};

// 2x2 max pooling, stride 2; odd trailing rows/columns are dropped.
class MaxPool2 final : public Layer {
 public:
  explicit MaxPool2(TensorShape in) : Layer(in) {}
  std::string kind() const override { return "maxpool2"; }
  TensorShape output_shape() const override { return {in_.channels, in_.height / 2, in_.width / 2}; }
  Batch infer(const Batch& x) const override;
  Batch forward_train(const Batch& x) override;
  Batch backward(const Batch& dy) override;

 private:
  Batch pool(const Batch& x, std::vector<int>* argmax) const;
  std::vector<int> argmax_;
  Eigen::Index rows_ = 0;
};

// Shape-only: turns (c, h, w) into (c*h*w, 1, 1). Storage is unchanged.
class Flatten final : public Layer {
 public:
  explicit Flatten(TensorShape in) : Layer(in) {}
  std::string kind() const override { return "flatten"; }
  TensorShape output_shape() const override { return {in_.size(), 1, 1}; }
  Batch infer(const Batch& x) const override { return x; }
  Batch backward(const Batch& dy) override { return dy; }
};

class ReLU final : public Layer {
 public:
  explicit ReLU(TensorShape in) : Layer(in) {}
  std::string kind() const override { return "relu"; }
  TensorShape output_shape() const override { return in_; }
  Batch infer(const Batch& x) const override { return x.cwiseMax(0.0); }
  Batch forward_train(const Batch& x) override;
  Batch backward(const Batch& dy) override;

 private:
  Batch mask_;
};

// Per-channel batch normalization. Statistics are taken over the batch and
// the spatial positions of each channel; a (c, 1, 1) input is normalized per
// feature.
class BatchNorm final : public Layer {
 public:
  static constexpr double kMomentum = 0.1;
  static constexpr double kEpsilon = 1e-5;

  explicit BatchNorm(TensorShape in);
  std::string kind() const override { return "batchnorm"; }
  TensorShape output_shape() const override { return in_; }
  Batch infer(const Batch& x) const override;
  Batch forward_train(const Batch& x) override;
  Batch backward(const Batch& dy) override;
  std::vector<ParamRef> params(const std::string& prefix) override;

  Eigen::MatrixXd& gamma() { return gamma_; }
  Eigen::MatrixXd& beta() { return beta_; }
  Eigen::MatrixXd& running_mean() { return running_mean_; }
  Eigen::MatrixXd& running_var() { return running_var_; }

 private:
  Eigen::MatrixXd gamma_, beta_, running_mean_, running_var_;
  Eigen::MatrixXd gamma_grad_, beta_grad_;
  Batch x_hat_;
  Eigen::VectorXd inv_std_;
};

}  // namespace projood
