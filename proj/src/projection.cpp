#include "projood/projection.hpp"

#include <algorithm>

#include "projood/error.hpp"

namespace projood {

ProjectionOperator ProjectionOperator::from_columns(const Eigen::MatrixXd& spanning, double tol) {
  if (!spanning.allFinite()) throw InvalidArgument("projection vectors must be finite");
  ProjectionOperator op;
  op.source_dim_ = static_cast<int>(spanning.rows());
  Eigen::MatrixXd q(spanning.rows(), std::min(spanning.rows(), spanning.cols()));
  Eigen::Index kept = 0;
  for (Eigen::Index j = 0; j < spanning.cols() && kept < spanning.rows(); ++j) {
    Eigen::VectorXd v = spanning.col(j);
    const double scale = std::max(1.0, v.norm());
    // Modified Gram-Schmidt, run twice for numerical orthogonality.
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index k = 0; k < kept; ++k) v -= q.col(k).dot(v) * q.col(k);
    const double r = v.norm();
    if (r < tol * scale) continue;
    q.col(kept++) = v / r;
  }
  if (kept == 0) throw InvalidArgument("projection subspace is empty: all spanning vectors are zero");
  op.basis_ = q.leftCols(kept);
  return op;
}

Eigen::VectorXd ProjectionOperator::lift(const Eigen::Ref<const Eigen::VectorXd>& f) const {
  if (f.size() != source_dim_)
    throw ShapeMismatch("projection expects a " + std::to_string(source_dim_) + "-vector, got " +
                        std::to_string(f.size()));
  if (mode_ == BiasMode::Exclude) return f;
  Eigen::VectorXd up(f.size() + 1);
  up << f, 1.0;
  return up;
}

Eigen::VectorXd ProjectionOperator::apply(const Eigen::Ref<const Eigen::VectorXd>& f) const {
  const Eigen::VectorXd x = lift(f);
  return basis_ * (basis_.transpose() * x);
}

ProjectionOperator projector_from_weights(const Eigen::MatrixXd& weights, const std::optional<Eigen::VectorXd>& bias,
                                          BiasMode mode) {
  if (weights.size() == 0 || weights.isZero(0.0)) throw InvalidArgument("projection weight matrix is zero");
  if (mode == BiasMode::Exclude) {
    ProjectionOperator op = ProjectionOperator::from_columns(weights);
    op.mode_ = mode;
    return op;
  }
  if (!bias) throw InvalidArgument("bias_mode include-as-vector needs an FC bias");
  if (bias->size() != weights.cols()) throw ShapeMismatch("bias length does not match weight columns");
  Eigen::MatrixXd augmented(weights.rows() + 1, weights.cols());
  augmented << weights, bias->transpose();
  ProjectionOperator op = ProjectionOperator::from_columns(augmented);
  op.source_dim_ = static_cast<int>(weights.rows());
  op.mode_ = mode;
  return op;
}

}  // namespace projood
