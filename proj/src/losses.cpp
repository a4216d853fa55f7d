#include "projood/losses.hpp"

#include <cmath>
#include <string>

#include "projood/error.hpp"

namespace projood {

void LossConfig::validate() const {
  if (!(scale > 0.0)) throw InvalidArgument("loss scale must be > 0");
  if (!(margin >= 0.0)) throw InvalidArgument("loss margin must be >= 0");
  if (!(lin_ind_weight >= 0.0)) throw InvalidArgument("lin_ind_weight must be >= 0");
  if (!(mse_weight >= 0.0)) throw InvalidArgument("mse_weight must be >= 0");
}

namespace {

void check_labels(std::span<const int> labels, Eigen::Index rows, Eigen::Index classes) {
  if (static_cast<Eigen::Index>(labels.size()) != rows)
    throw ShapeMismatch("label count " + std::to_string(labels.size()) + " does not match batch size " +
                        std::to_string(rows));
  for (int y : labels)
    if (y < 0 || y >= classes) throw InvalidArgument("label " + std::to_string(y) + " out of range");
}

}  // namespace

BatchLoss loss_am(const Batch& cos_theta, std::span<const int> labels, double scale, double margin) {
  check_labels(labels, cos_theta.rows(), cos_theta.cols());
  if (!cos_theta.allFinite()) throw NumericalError("loss_am: non-finite cosine input");
  const Eigen::Index n = cos_theta.rows();
  BatchLoss out;
  out.grad = Batch::Zero(n, cos_theta.cols());
  if (n == 0) return out;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    Eigen::RowVectorXd z = scale * cos_theta.row(i);
    z(y) -= scale * margin;
    const double zmax = z.maxCoeff();
    const Eigen::RowVectorXd e = (z.array() - zmax).exp();
    const double sum = e.sum();
    out.value += std::log(sum) + zmax - z(y);
    out.grad.row(i) = (scale / static_cast<double>(n)) * (e / sum);
    out.grad(i, y) -= scale / static_cast<double>(n);
  }
  out.value /= static_cast<double>(n);
  return out;
}

BatchLoss loss_mse(const Batch& f_n, std::span<const int> labels, const CentroidSet& centroids) {
  if (f_n.cols() != centroids.feature_dim())
    throw ShapeMismatch("loss_mse: feature width does not match centroid dimension");
  check_labels(labels, f_n.rows(), centroids.class_count());
  if (!f_n.allFinite()) throw NumericalError("loss_mse: non-finite feature input");
  const Eigen::Index n = f_n.rows();
  BatchLoss out;
  out.grad = Batch::Zero(n, f_n.cols());
  if (n == 0) return out;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXd d = f_n.row(i) - centroids.vectors().row(labels[static_cast<std::size_t>(i)]);
    out.value += d.squaredNorm();
    out.grad.row(i) = (2.0 / static_cast<double>(n)) * d;
  }
  out.value /= static_cast<double>(n);
  return out;
}

MatrixLoss loss_lin_ind(const Eigen::MatrixXd& weights) {
  const Eigen::Index n = weights.cols();
  MatrixLoss out;
  out.grad = Eigen::MatrixXd::Zero(weights.rows(), n);
  const Eigen::VectorXd norms = weights.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < n; ++j)
    if (!(norms(j) > 0.0)) throw InvalidArgument("loss_lin_ind: weight column " + std::to_string(j) + " has zero norm");
  if (n < 2) return out;

  const Eigen::MatrixXd unit = weights * norms.cwiseInverse().asDiagonal();
  Eigen::MatrixXd gram = unit.transpose() * unit;
  gram.diagonal().setZero();
  const double denom = static_cast<double>(n) * static_cast<double>(n - 1);
  out.value = gram.squaredNorm() / denom;

  // dL/dG = 2 G_offdiag / denom (symmetric), dL/dU = 2 U dL/dG, then back
  // through u = w / |w|: dL/dw = (I - u u^T) dL/du / |w|.
  const Eigen::MatrixXd d_unit = unit * (4.0 / denom * gram);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::VectorXd u = unit.col(j);
    const Eigen::VectorXd g = d_unit.col(j);
    out.grad.col(j) = (g - u * u.dot(g)) / norms(j);
  }
  return out;
}

double softmax_max(const Eigen::Ref<const Eigen::RowVectorXd>& cos_theta, double scale) {
  const Eigen::RowVectorXd z = scale * cos_theta;
  const double zmax = z.maxCoeff();
  return 1.0 / (z.array() - zmax).exp().sum();
}

}  // namespace projood
