#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "projood/scoring.hpp"

namespace projood {

inline constexpr int kFusionFeatureCount = 4;
inline constexpr std::array<const char*, kFusionFeatureCount> kFusionFeatureNames{"cos_alpha", "max_cos_beta",
                                                                                  "cos_gamma", "norm_fn"};

// N x 4 matrix in kFusionFeatureNames order.
Eigen::MatrixXd fusion_features(const std::vector<ScoreRecord>& records);
Eigen::RowVectorXd fusion_features(const ScoreRecord& record);

// Per-feature min-max scaling fitted on training data. Test values outside
// the fitted range extend affinely; nothing is clipped.
struct Standardizer {
  Eigen::RowVectorXd min;
  Eigen::RowVectorXd max;

  bool is_constant(int feature) const { return !(max(feature) > min(feature)); }
  Eigen::RowVectorXd apply_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

// Needs at least two rows. A constant feature gets width 1.
Standardizer standardize_fit(const Eigen::MatrixXd& features);

enum class FusionKind : std::uint8_t { RbfSvm = 0, LinearSvm = 1, LogReg = 2 };
FusionKind parse_fusion_kind(const std::string& s);
std::string to_string(FusionKind k);

struct SvmModel {
  FusionKind kind = FusionKind::RbfSvm;  // RbfSvm or LinearSvm
  Eigen::MatrixXd support_vectors;       // one per row
  Eigen::VectorXd dual_coef;             // alpha_i * y_i
  double intercept = 0.0;
  double C = 5.0;
  double gamma = 1.0;  // K(x, z) = exp(-gamma |x - z|^2) for the RBF kind

  double kernel(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b) const;
  // sum_i alpha_i y_i K(x_i, x) + b
  double decision(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

struct SvmOptions {
  FusionKind kind = FusionKind::RbfSvm;
  double C = 5.0;
  double gamma = 1.0;
  double tolerance = 1e-3;  // stop when the maximal KKT violation gap drops below this
  std::uint64_t seed = 0;
  long max_iterations = 0;  // 0 picks max(100000, 100 N)
};

struct SvmSolution {
  SvmModel model;
  Eigen::VectorXd alpha;  // one per training row, input order
  long iterations = 0;
  double gap = 0.0;       // final max violation gap
};

// Sequential minimal optimization with second-order working set selection.
// labels are +1 (ID) / -1. The result does not depend on the order of the
// training rows: they are put into a canonical order, then permuted by seed.
SvmSolution svm_train(const Eigen::MatrixXd& features, std::span<const int> labels, const SvmOptions& opts);

struct PlattParams {
  double A = 0.0;
  double B = 0.0;
  double probability(double decision) const;  // 1 / (1 + exp(A f + B))
};

// Fits P(y = +1 | f). Throws InvalidArgument when only one label is present.
PlattParams platt_fit(std::span<const double> decision_values, std::span<const int> labels);

struct LogRegModel {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  double penalty = 0.5;
  double probability(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

struct LogRegOptions {
  double penalty = 0.5;  // L2 coefficient: objective = mean log-loss + penalty/2 |w|^2
  double learning_rate = 1.0;
  int iterations = 1000;
};

// Objective and its gradient (weights then intercept), exposed for checking.
double logreg_objective(const Eigen::VectorXd& w, double b, const Eigen::MatrixXd& x, std::span<const int> labels,
                        double penalty);
Eigen::VectorXd logreg_gradient(const Eigen::VectorXd& w, double b, const Eigen::MatrixXd& x,
                                std::span<const int> labels, double penalty);
LogRegModel logreg_train(const Eigen::MatrixXd& features, std::span<const int> labels, const LogRegOptions& opts);

class FusionModel {
 public:
  FusionKind kind = FusionKind::RbfSvm;
  Standardizer standardizer;
  std::optional<SvmModel> svm;
  PlattParams platt;
  std::optional<LogRegModel> logreg;

  // Raw decision value (SVM margin or logit).
  double decision(const ScoreRecord& r) const;
  // S_svm in (0,1); higher means more in-distribution.
  double score(const ScoreRecord& r) const;
};

struct FusionOptions {
  FusionKind kind = FusionKind::RbfSvm;
  double C = 5.0;
  std::optional<double> rbf_gamma;  // default 1 / (4 * mean per-feature variance)
  double calibration_fraction = 0.2;
  LogRegOptions logreg;
  std::uint64_t seed = 0;
  std::size_t max_per_class = 0;  // 0 keeps everything
};

// ID records are the positive class, the reference OOD records negative.
FusionModel fit_fusion(const std::vector<ScoreRecord>& id, const std::vector<ScoreRecord>& ood,
                       const FusionOptions& opts);

double fuse_score(const FusionModel& model, const ScoreRecord& record);

void save_fusion(const FusionModel& model, const std::filesystem::path& path);
FusionModel load_fusion(const std::filesystem::path& path);

}  // namespace projood
