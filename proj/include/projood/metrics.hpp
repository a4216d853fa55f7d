#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace projood {

// Scores at or above the threshold are accepted as in-distribution.
inline bool classify(double score, double tau) { return score >= tau; }

// Mann-Whitney estimate of P(id > ood) with ties counted as 1/2, computed
// from mid-ranks. Throws EmptyInput when either list is empty.
double auroc(std::span<const double> id_scores, std::span<const double> ood_scores);

struct TprOperatingPoint {
  double tnr = 0.0;
  double tau = 0.0;
};

// tau is the largest observed ID score with #{id >= tau} / N_id >= level;
// tnr = #{ood < tau} / N_ood.
TprOperatingPoint tnr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores, double level);

struct Histogram {
  std::vector<double> edges;  // bins + 1 entries
  std::vector<std::size_t> counts;
};

// Equal-width bins on [lo, hi]; the last bin is closed. Values outside the
// range are not counted.
Histogram histogram(std::span<const double> scores, int bins, double lo, double hi);

struct EvalReport {
  std::string id_dataset;
  std::string ood_dataset;
  std::string score_name;
  double auroc = 0.0;
  double tnr_at_tpr95 = 0.0;
  double tnr_at_tpr98 = 0.0;
  double tau95 = 0.0;
  double tau98 = 0.0;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
  std::vector<double> bin_edges;
  std::vector<std::size_t> id_counts;
  std::vector<std::size_t> ood_counts;

  std::string to_text() const;        // key: value lines
  std::string csv_rows() const;       // metric,id_dataset,ood_dataset,score_name,value
  std::string histogram_csv() const;  // bin_left,bin_right,id_count,ood_count
};

inline constexpr const char* kEvalCsvHeader = "metric,id_dataset,ood_dataset,score_name,value";

// Histograms span the pooled score range.
EvalReport evaluate(std::span<const double> id_scores, std::span<const double> ood_scores, std::string id_dataset,
                    std::string ood_dataset, std::string score_name, int histogram_bins = 50);

}  // namespace projood
