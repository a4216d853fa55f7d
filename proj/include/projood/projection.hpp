#pragma once

#include <optional>

#include <Eigen/Dense>

namespace projood {

enum class BiasMode { Exclude, IncludeAsVector };

// Orthogonal projection onto the span of a set of vectors, held as an
// orthonormal basis Q so that P = Q Q^T is never formed explicitly.
//
// With IncludeAsVector the operator lives in R^{m+1}: inputs are augmented
// with a constant 1 and the FC bias is appended to W as an extra row, so that
// [W; b^T]^T [f; 1] = W^T f + b reproduces the FC output.
class ProjectionOperator {
 public:
  // Columns with residual norm below tol * max(1, |column|) after
  // orthogonalization against the kept ones are dropped.
  static ProjectionOperator from_columns(const Eigen::MatrixXd& spanning, double tol = 1e-10);

  int source_dim() const { return source_dim_; }
  int rank() const { return static_cast<int>(basis_.cols()); }
  const Eigen::MatrixXd& basis() const { return basis_; }
  BiasMode bias_mode() const { return mode_; }

  // Input lifted into the operator's space (appends 1 in IncludeAsVector).
  Eigen::VectorXd lift(const Eigen::Ref<const Eigen::VectorXd>& f) const;
  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& f) const;
  Eigen::MatrixXd matrix() const { return basis_ * basis_.transpose(); }

 private:
  friend ProjectionOperator projector_from_weights(const Eigen::MatrixXd&, const std::optional<Eigen::VectorXd>&,
                                                   BiasMode);
  int source_dim_ = 0;
  Eigen::MatrixXd basis_;
  BiasMode mode_ = BiasMode::Exclude;
};

// Projector onto span(columns of W), W is m x n. IncludeAsVector requires a
// bias of length n. Throws InvalidArgument when W has no nonzero column.
ProjectionOperator projector_from_weights(const Eigen::MatrixXd& weights,
                                          const std::optional<Eigen::VectorXd>& bias = std::nullopt,
                                          BiasMode mode = BiasMode::Exclude);

}  // namespace projood
