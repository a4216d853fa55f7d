#include "projood/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "projood/error.hpp"

namespace projood {

namespace {

void require_scores(std::span<const double> id, std::span<const double> ood) {
  if (id.empty() || ood.empty()) throw EmptyInput("ID and OOD score lists must both be non-empty");
  for (double v : id)
    if (!std::isfinite(v)) throw InvalidArgument("non-finite ID score");
  for (double v : ood)
    if (!std::isfinite(v)) throw InvalidArgument("non-finite OOD score");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
  require_scores(id_scores, ood_scores);
  const std::size_t n_id = id_scores.size();
  const std::size_t n = n_id + ood_scores.size();
  std::vector<std::pair<double, bool>> all;
  all.reserve(n);
  for (double v : id_scores) all.emplace_back(v, true);
  for (double v : ood_scores) all.emplace_back(v, false);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  // Twice the rank sum keeps mid-ranks integral.
  long double twice_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && all[j].first == all[i].first) ++j;
    const long double twice_mid = static_cast<long double>(i + 1 + j);  // 2 * average of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (all[k].second) twice_rank_sum += twice_mid;
    i = j;
  }
  // U = R_id - n_id (n_id + 1) / 2 = #(id > ood) + ties / 2.
  const long double twice_u = twice_rank_sum - static_cast<long double>(n_id) * (n_id + 1);
  return static_cast<double>(twice_u / 2) /
         (static_cast<double>(n_id) * static_cast<double>(ood_scores.size()));
}

TprOperatingPoint tnr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores, double level) {
  require_scores(id_scores, ood_scores);
  if (!(level > 0.0 && level <= 1.0)) throw InvalidArgument("TPR level must lie in (0,1]");
  std::vector<double> id(id_scores.begin(), id_scores.end());
  std::sort(id.begin(), id.end(), std::greater<>());
  const std::size_t n = id.size();
  // Smallest k with k / n >= level.
  std::size_t k = 1;
  while (k < n && static_cast<double>(k) / static_cast<double>(n) < level) ++k;
  TprOperatingPoint op;
  op.tau = id[k - 1];
  const auto below = std::count_if(ood_scores.begin(), ood_scores.end(), [&](double s) { return !classify(s, op.tau); });
  op.tnr = static_cast<double>(below) / static_cast<double>(ood_scores.size());
  return op;
}

Histogram histogram(std::span<const double> scores, int bins, double lo, double hi) {
  if (bins < 1) throw InvalidArgument("histogram needs at least one bin");
  if (!(std::isfinite(lo) && std::isfinite(hi) && hi > lo)) throw InvalidArgument("histogram range must satisfy lo < hi");
  Histogram h;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  const double width = (hi - lo) / bins;
  for (int i = 0; i <= bins; ++i) h.edges.push_back(i == bins ? hi : lo + i * width);
  for (double v : scores) {
    if (!(v >= lo && v <= hi)) continue;
    auto b = static_cast<int>((v - lo) / width);
    b = std::clamp(b, 0, bins - 1);
    // Floating rounding near an edge: defer to the stored edges.
    while (b > 0 && v < h.edges[static_cast<std::size_t>(b)]) --b;
    while (b < bins - 1 && v >= h.edges[static_cast<std::size_t>(b) + 1]) ++b;
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

EvalReport evaluate(std::span<const double> id_scores, std::span<const double> ood_scores, std::string id_dataset,
                    std::string ood_dataset, std::string score_name, int histogram_bins) {
  EvalReport r;
  r.id_dataset = std::move(id_dataset);
  r.ood_dataset = std::move(ood_dataset);
  r.score_name = std::move(score_name);
  r.auroc = auroc(id_scores, ood_scores);
  const auto p95 = tnr_at_tpr(id_scores, ood_scores, 0.95);
  const auto p98 = tnr_at_tpr(id_scores, ood_scores, 0.98);
  r.tnr_at_tpr95 = p95.tnr;
  r.tau95 = p95.tau;
  r.tnr_at_tpr98 = p98.tnr;
  r.tau98 = p98.tau;
  r.n_id = id_scores.size();
  r.n_ood = ood_scores.size();

  double lo = std::min(*std::min_element(id_scores.begin(), id_scores.end()),
                       *std::min_element(ood_scores.begin(), ood_scores.end()));
  double hi = std::max(*std::max_element(id_scores.begin(), id_scores.end()),
                       *std::max_element(ood_scores.begin(), ood_scores.end()));
  if (!(hi > lo)) hi = lo + 1.0;
  const Histogram hid = histogram(id_scores, histogram_bins, lo, hi);
  const Histogram hood = histogram(ood_scores, histogram_bins, lo, hi);
  r.bin_edges = hid.edges;
  r.id_counts = hid.counts;
  r.ood_counts = hood.counts;
  return r;
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << "id_dataset: " << id_dataset << "\n"
     << "ood_dataset: " << ood_dataset << "\n"
     << "score: " << score_name << "\n"
     << "n_id: " << n_id << "\n"
     << "n_ood: " << n_ood << "\n"
     << "auroc: " << fmt(auroc) << "\n"
     << "tnr_at_tpr95: " << fmt(tnr_at_tpr95) << "\n"
     << "tau95: " << fmt(tau95) << "\n"
     << "tnr_at_tpr98: " << fmt(tnr_at_tpr98) << "\n"
     << "tau98: " << fmt(tau98) << "\n"
     << "histogram_bins: " << id_counts.size() << "\n";
  return os.str();
}

std::string EvalReport::csv_rows() const {
  std::string out;
  const auto row = [&](const char* metric, double v) {
    out += std::string(metric) + "," + id_dataset + "," + ood_dataset + "," + score_name + "," + fmt(v) + "\n";
  };
  row("auroc", auroc);
  row("tnr_at_tpr95", tnr_at_tpr95);
  row("tnr_at_tpr98", tnr_at_tpr98);
  row("tau95", tau95);
  row("tau98", tau98);
  return out;
}

std::string EvalReport::histogram_csv() const {
  std::string out = "bin_left,bin_right,id_count,ood_count\n";
  for (std::size_t i = 0; i < id_counts.size(); ++i)
    out += fmt(bin_edges[i]) + "," + fmt(bin_edges[i + 1]) + "," + std::to_string(id_counts[i]) + "," +
           std::to_string(ood_counts[i]) + "\n";
  return out;
}

}  // namespace projood
