#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "projood/config.hpp"
#include "projood/metrics.hpp"
#include "projood/scoring.hpp"

namespace projood {

struct ExperimentData {
  Dataset id_train;
  Dataset id_test;
  Dataset reference_ood;
  std::vector<Dataset> test_ood;  // same order as config.test_ood
};

// Every dataset draw gets its own seed derived from the global one.
Dataset load_source(const ExperimentConfig& cfg, const DatasetSpec& spec);
ExperimentData load_data(const ExperimentConfig& cfg);

CentroidSet make_centroids(const ExperimentConfig& cfg);
// The network config with its seed derived from the experiment seed.
NetworkConfig network_config(const ExperimentConfig& cfg);
// The fusion options with their seed derived from the experiment seed.
FusionOptions fusion_options(const ExperimentConfig& cfg);

// Score names reported by eval, in report order.
inline const std::vector<std::string> kScoreNames{"S_gamma", "S_norm", "S_alpha", "S_beta", "S_svm", "baseline"};

// One column of per-sample scores; higher means more in-distribution.
// S_svm needs a fusion model.
std::vector<double> score_values(const std::vector<ScoreRecord>& records, const std::string& score_name,
                                 const FusionModel* fusion = nullptr);

struct NamedScores {
  std::string name;
  std::vector<ScoreRecord> records;
};

// One report per (OOD set x score name). S_svm is skipped without a fusion
// model; `only` restricts the score names.
std::vector<EvalReport> evaluate_scores(const NamedScores& id, const std::vector<NamedScores>& ood,
                                        const FusionModel* fusion, int histogram_bins,
                                        const std::vector<std::string>& only = {});

// Output layout under an experiment directory.
struct RunLayout {
  std::filesystem::path root;
  std::filesystem::path centroids() const { return root / "centroids.pdcc"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path train_report() const { return root / "train_report.txt"; }
  std::filesystem::path loss_curve() const { return root / "loss_curve.csv"; }
  std::filesystem::path scores(const std::string& ref) const { return root / "scores" / (ref + ".csv"); }
  std::filesystem::path fusion() const { return root / "fusion.pfus"; }
  std::filesystem::path eval_dir() const { return root / "eval"; }
};

// Writes eval.csv plus one report and one histogram file per EvalReport.
void write_eval_reports(const std::filesystem::path& dir, const std::vector<EvalReport>& reports);

struct PipelineResult {
  TrainReport train;
  std::vector<EvalReport> reports;
  double id_test_accuracy = 0.0;
};

// centroids -> train -> score -> fuse -> eval, writing every artifact under
// `out`. `log` receives progress lines when non-null.
PipelineResult run_pipeline(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream* log = nullptr);

// Fraction of records whose predicted class equals the true class.
double accuracy(const std::vector<ScoreRecord>& records);

enum class AblationAxis { BnRelu, BiasMode, FusionKind };
AblationAxis parse_ablation_axis(const std::string& s);
std::string to_string(AblationAxis a);

struct AblationSetting {
  std::string setting;  // e.g. "on", "exclude", "rbf_svm"
  std::vector<EvalReport> reports;  // one per OOD set
};

// Runs the pipeline under each value of the axis and reports the focal score
// (S_gamma for bn_relu and bias_mode, S_svm for fusion_kind).
std::vector<AblationSetting> run_ablation(const ExperimentConfig& cfg, AblationAxis axis,
                                          const std::filesystem::path& out, std::ostream* log = nullptr);

}  // namespace projood
