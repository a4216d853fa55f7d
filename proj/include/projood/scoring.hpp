#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "projood/centroids.hpp"
#include "projood/dataset.hpp"
#include "projood/network.hpp"
#include "projood/projection.hpp"

namespace projood {

enum class SampleLabel { ID, OOD, Unlabeled };
std::string to_string(SampleLabel l);
SampleLabel parse_sample_label(const std::string& s);

struct ScoreRecord {
  double cos_alpha = 0.0;
  double max_cos_beta = 0.0;
  double cos_gamma = 0.0;
  double norm_fn = 0.0;
  double baseline_msp = 0.0;
  Eigen::VectorXd cos_theta;  // not persisted in the CSV dump
  SampleLabel label = SampleLabel::Unlabeled;
  int predicted_class = 0;
  int true_class = kOodLabel;  // not persisted in the CSV dump
  bool degenerate = false;
};

struct ProjectionCosine {
  double value = 0.0;
  bool degenerate = false;
};

// |P f_m| / |f_m| in [0,1]; 0 and flagged when |f_m| < 1e-12.
ProjectionCosine cos_gamma(const Eigen::Ref<const Eigen::VectorXd>& f_m, const ProjectionOperator& proj);

struct PedccAngles {
  double cos_alpha = 0.0;
  Eigen::VectorXd cos_beta;
  Eigen::VectorXd cos_theta;
  bool degenerate = false;
};

// Projector onto span(a_1..a_c).
ProjectionOperator pedcc_projector(const CentroidSet& centroids);

// Decomposition of the centroid cosines: f_p = projection of f_n onto the
// centroid span, cos alpha = |f_p|/|f_n|, cos beta_i = cos(f_p, a_i),
// cos theta_i = cos(f_n, a_i) = cos alpha * cos beta_i.
PedccAngles pedcc_angles(const Eigen::Ref<const Eigen::VectorXd>& f_n, const CentroidSet& centroids);
PedccAngles pedcc_angles(const Eigen::Ref<const Eigen::VectorXd>& f_n, const CentroidSet& centroids,
                         const ProjectionOperator& centroid_span);

double s_norm(const Eigen::Ref<const Eigen::VectorXd>& f_n);

// Max-softmax probability over logits s * cos_theta (comparison baseline).
double baseline_msp(const Eigen::Ref<const Eigen::VectorXd>& cos_theta, double scale);

// One record per sample, in dataset order. `scale` is the AM-softmax s used
// for the baseline logits.
std::vector<ScoreRecord> score_dataset(const NetworkModel& model, const ProjectionOperator& primary,
                                       const CentroidSet& centroids, const Dataset& data, SampleLabel label,
                                       double scale);

// Projector from the model's FC1 under the given bias mode.
ProjectionOperator primary_projector(const NetworkModel& model, BiasMode mode);

void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoreRecord>& records);
std::string scores_csv(const std::vector<ScoreRecord>& records);
std::vector<ScoreRecord> read_scores_csv(const std::filesystem::path& path);

inline constexpr const char* kScoresCsvHeader =
    "sample_id,cos_alpha,max_cos_beta,cos_gamma,norm_fn,baseline_msp,predicted_class,label";

}  // namespace projood
