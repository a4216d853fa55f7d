#pragma once

#include <span>

#include <Eigen/Dense>

#include "projood/centroids.hpp"
#include "projood/layers.hpp"

namespace projood {

struct LossConfig {
  double scale = 5.5;         // s
  double margin = 0.35;       // additive margin on the true-class cosine
  double lin_ind_weight = 1;  // k
  double mse_weight = 1;
  void validate() const;
};

struct BatchLoss {
  double value = 0.0;
  Batch grad;  // same shape as the input batch
};

struct MatrixLoss {
  double value = 0.0;
  Eigen::MatrixXd grad;
};

// Additive-margin softmax over centroid cosines, averaged over the batch:
//   -(1/N) sum log( e^{s(cos_y - m)} / (e^{s(cos_y - m)} + sum_{j != y} e^{s cos_j}) )
// Gradient is wrt cos_theta.
BatchLoss loss_am(const Batch& cos_theta, std::span<const int> labels, double scale, double margin);

// (1/N) sum |f_i - a_{y_i}|^2, gradient wrt f_n.
BatchLoss loss_mse(const Batch& f_n, std::span<const int> labels, const CentroidSet& centroids);

// Mean squared off-diagonal entry of the Gram matrix of the unit-normalized
// columns of W (m x n). Zero iff the columns are pairwise orthogonal.
// Gradient wrt W. Throws InvalidArgument on a zero column.
MatrixLoss loss_lin_ind(const Eigen::MatrixXd& weights);

// Max-softmax probability of s * cos_theta for one sample.
double softmax_max(const Eigen::Ref<const Eigen::RowVectorXd>& cos_theta, double scale);

}  // namespace projood
