#include "projood/layers.hpp"

#include <cmath>
#include <limits>

#include "projood/error.hpp"

namespace projood {

std::string to_string(const TensorShape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

namespace {

void check_input(const Batch& x, const TensorShape& shape, const char* who) {
  if (x.cols() != shape.size())
    throw ShapeMismatch(std::string(who) + ": expected " + std::to_string(shape.size()) + " input features, got " +
                        std::to_string(x.cols()));
}

void fill_uniform(Eigen::MatrixXd& m, std::mt19937_64& rng, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
}

}  // namespace

// ---------------------------------------------------------------- Dense

Dense::Dense(TensorShape in, int out, bool bias)
    : Layer(in),
      out_(out),
      has_bias_(bias),
      weight_(Eigen::MatrixXd::Zero(in.size(), out)),
      bias_(Eigen::MatrixXd::Zero(out, 1)),
      weight_grad_(Eigen::MatrixXd::Zero(in.size(), out)),
      bias_grad_(Eigen::MatrixXd::Zero(out, 1)) {
  if (out < 1) throw InvalidArgument("dense width must be >= 1");
}

void Dense::init_uniform(std::mt19937_64& rng, double bound) {
  fill_uniform(weight_, rng, bound);
  bias_.setZero();
}

Batch Dense::infer(const Batch& x) const {
  check_input(x, in_, "dense");
  Batch y = x * weight_;
  if (has_bias_) y.rowwise() += bias_.col(0).transpose();
  return y;
}

Batch Dense::forward_train(const Batch& x) {
  x_ = x;
  return infer(x);
}

Batch Dense::backward(const Batch& dy) {
  weight_grad_.noalias() += x_.transpose() * dy;
  if (has_bias_) bias_grad_.col(0) += dy.colwise().sum().transpose();
  return dy * weight_.transpose();
}

std::vector<ParamRef> Dense::params(const std::string& prefix) {
  std::vector<ParamRef> p{{prefix + ".weight", &weight_, &weight_grad_}};
  if (has_bias_) p.push_back({prefix + ".bias", &bias_, &bias_grad_});
  return p;
}

// ---------------------------------------------------------------- Conv3x3

Conv3x3::Conv3x3(TensorShape in, int out_channels)
    : Layer(in),
      out_channels_(out_channels),
      weight_(Eigen::MatrixXd::Zero(in.channels * 9, out_channels)),
      bias_(Eigen::MatrixXd::Zero(out_channels, 1)),
      weight_grad_(Eigen::MatrixXd::Zero(in.channels * 9, out_channels)),
      bias_grad_(Eigen::MatrixXd::Zero(out_channels, 1)) {
  if (out_channels < 1) throw InvalidArgument("conv3x3 channels must be >= 1");
}

void Conv3x3::init_uniform(std::mt19937_64& rng, double bound) {
  fill_uniform(weight_, rng, bound);
  bias_.setZero();
}

// Row (n*H*W + p) holds the 3x3 neighbourhood of pixel p of sample n, column
// (c*9 + ky*3 + kx).
Eigen::MatrixXd Conv3x3::im2col(const Batch& x) const {
  const int h = in_.height, w = in_.width, hw = in_.spatial();
  Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(x.rows() * hw, in_.channels * 9);
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    const double* src = x.row(n).data();
    for (int c = 0; c < in_.channels; ++c) {
      const double* plane = src + static_cast<std::ptrdiff_t>(c) * hw;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const Eigen::Index col = c * 9 + ky * 3 + kx;
          for (int y = 0; y < h; ++y) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= h) continue;
            for (int xx = 0; xx < w; ++xx) {
              const int sx = xx + kx - 1;
              if (sx < 0 || sx >= w) continue;
              cols(n * hw + y * w + xx, col) = plane[sy * w + sx];
            }
          }
        }
    }
  }
  return cols;
}

Batch Conv3x3::run(const Eigen::MatrixXd& cols, Eigen::Index n) const {
  const int hw = in_.spatial();
  Eigen::MatrixXd out = cols * weight_;
  out.rowwise() += bias_.col(0).transpose();
  Batch y(n, static_cast<Eigen::Index>(out_channels_) * hw);
  for (Eigen::Index s = 0; s < n; ++s)
    for (int k = 0; k < out_channels_; ++k)
      for (int p = 0; p < hw; ++p) y(s, k * hw + p) = out(s * hw + p, k);
  return y;
}

Batch Conv3x3::infer(const Batch& x) const {
  check_input(x, in_, "conv3x3");
  return run(im2col(x), x.rows());
}

Batch Conv3x3::forward_train(const Batch& x) {
  check_input(x, in_, "conv3x3");
  cols_ = im2col(x);
  return run(cols_, x.rows());
}

Batch Conv3x3::backward(const Batch& dy) {
  const int h = in_.height, w = in_.width, hw = in_.spatial();
  const Eigen::Index n = dy.rows();
  Eigen::MatrixXd d_out(n * hw, out_channels_);
  for (Eigen::Index s = 0; s < n; ++s)
    for (int k = 0; k < out_channels_; ++k)
      for (int p = 0; p < hw; ++p) d_out(s * hw + p, k) = dy(s, k * hw + p);

  weight_grad_.noalias() += cols_.transpose() * d_out;
  bias_grad_.col(0) += d_out.colwise().sum().transpose();
  const Eigen::MatrixXd d_cols = d_out * weight_.transpose();

  Batch dx = Batch::Zero(n, in_.size());
  for (Eigen::Index s = 0; s < n; ++s) {
    double* dst = dx.row(s).data();
    for (int c = 0; c < in_.channels; ++c) {
      double* plane = dst + static_cast<std::ptrdiff_t>(c) * hw;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const Eigen::Index col = c * 9 + ky * 3 + kx;
          for (int y = 0; y < h; ++y) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= h) continue;
            for (int xx = 0; xx < w; ++xx) {
              const int sx = xx + kx - 1;
              if (sx < 0 || sx >= w) continue;
              plane[sy * w + sx] += d_cols(s * hw + y * w + xx, col);
            }
          }
        }
    }
  }
  return dx;
}

std::vector<ParamRef> Conv3x3::params(const std::string& prefix) {
  return {{prefix + ".weight", &weight_, &weight_grad_}, {prefix + ".bias", &bias_, &bias_grad_}};
}

// ---------------------------------------------------------------- MaxPool2

Batch MaxPool2::pool(const Batch& x, std::vector<int>* argmax) const {
  check_input(x, in_, "maxpool2");
  const TensorShape out = output_shape();
  Batch y(x.rows(), out.size());
  if (argmax) argmax->assign(static_cast<std::size_t>(x.rows() * out.size()), 0);
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    for (int c = 0; c < in_.channels; ++c)
      for (int oy = 0; oy < out.height; ++oy)
        for (int ox = 0; ox < out.width; ++ox) {
          int best = -1;
          double best_v = -std::numeric_limits<double>::infinity();
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const int idx = c * in_.spatial() + (2 * oy + dy) * in_.width + (2 * ox + dx);
              if (x(n, idx) > best_v || best < 0) {
                best_v = x(n, idx);
                best = idx;
              }
            }
          const int o = c * out.spatial() + oy * out.width + ox;
          y(n, o) = best_v;
          if (argmax) (*argmax)[static_cast<std::size_t>(n * out.size() + o)] = best;
        }
  }
  return y;
}

Batch MaxPool2::infer(const Batch& x) const { return pool(x, nullptr); }

Batch MaxPool2::forward_train(const Batch& x) {
  rows_ = x.rows();
  return pool(x, &argmax_);
}

Batch MaxPool2::backward(const Batch& dy) {
  const int out_size = output_shape().size();
  Batch dx = Batch::Zero(rows_, in_.size());
  for (Eigen::Index n = 0; n < rows_; ++n)
    for (int o = 0; o < out_size; ++o)
      dx(n, argmax_[static_cast<std::size_t>(n * out_size + o)]) += dy(n, o);
  return dx;
}

// ---------------------------------------------------------------- ReLU

Batch ReLU::forward_train(const Batch& x) {
  mask_ = (x.array() > 0.0).cast<double>();
  return x.cwiseProduct(mask_);
}

Batch ReLU::backward(const Batch& dy) { return dy.cwiseProduct(mask_); }

// ---------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(TensorShape in)
    : Layer(in),
      gamma_(Eigen::MatrixXd::Ones(in.channels, 1)),
      beta_(Eigen::MatrixXd::Zero(in.channels, 1)),
      running_mean_(Eigen::MatrixXd::Zero(in.channels, 1)),
      running_var_(Eigen::MatrixXd::Ones(in.channels, 1)),
      gamma_grad_(Eigen::MatrixXd::Zero(in.channels, 1)),
      beta_grad_(Eigen::MatrixXd::Zero(in.channels, 1)) {}

Batch BatchNorm::infer(const Batch& x) const {
  check_input(x, in_, "batchnorm");
  const int s = in_.spatial();
  Batch y(x.rows(), x.cols());
  for (int c = 0; c < in_.channels; ++c) {
    const double scale = gamma_(c, 0) / std::sqrt(running_var_(c, 0) + kEpsilon);
    const double shift = beta_(c, 0) - scale * running_mean_(c, 0);
    y.middleCols(c * s, s) = (x.middleCols(c * s, s).array() * scale + shift).matrix();
  }
  return y;
}

Batch BatchNorm::forward_train(const Batch& x) {
  check_input(x, in_, "batchnorm");
  const int s = in_.spatial();
  const double count = static_cast<double>(x.rows()) * s;
  if (count < 2) throw InvalidArgument("batchnorm in training mode needs more than one value per channel");
  x_hat_.resize(x.rows(), x.cols());
  inv_std_.resize(in_.channels);
  Batch y(x.rows(), x.cols());
  for (int c = 0; c < in_.channels; ++c) {
    const auto block = x.middleCols(c * s, s);
    const double mean = block.sum() / count;
    const double var = (block.array() - mean).square().sum() / count;
    const double inv_std = 1.0 / std::sqrt(var + kEpsilon);
    inv_std_(c) = inv_std;
    x_hat_.middleCols(c * s, s) = ((block.array() - mean) * inv_std).matrix();
    y.middleCols(c * s, s) = (x_hat_.middleCols(c * s, s).array() * gamma_(c, 0) + beta_(c, 0)).matrix();
    running_mean_(c, 0) = (1.0 - kMomentum) * running_mean_(c, 0) + kMomentum * mean;
    running_var_(c, 0) = (1.0 - kMomentum) * running_var_(c, 0) + kMomentum * var * count / (count - 1.0);
  }
  return y;
}

Batch BatchNorm::backward(const Batch& dy) {
  const int s = in_.spatial();
  const double count = static_cast<double>(dy.rows()) * s;
  Batch dx(dy.rows(), dy.cols());
  for (int c = 0; c < in_.channels; ++c) {
    const auto g = dy.middleCols(c * s, s).array();
    const auto xh = x_hat_.middleCols(c * s, s).array();
    const double sum_g = g.sum();
    const double sum_gx = (g * xh).sum();
    gamma_grad_(c, 0) += sum_gx;
    beta_grad_(c, 0) += sum_g;
    const double k = gamma_(c, 0) * inv_std_(c) / count;
    dx.middleCols(c * s, s) = (k * (count * g - sum_g - xh * sum_gx)).matrix();
  }
  return dx;
}

std::vector<ParamRef> BatchNorm::params(const std::string& prefix) {
  return {{prefix + ".gamma", &gamma_, &gamma_grad_},
          {prefix + ".beta", &beta_, &beta_grad_},
          {prefix + ".running_mean", &running_mean_, nullptr},
          {prefix + ".running_var", &running_var_, nullptr}};
}

}  // namespace projood
