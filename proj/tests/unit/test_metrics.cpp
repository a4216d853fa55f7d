#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "projood/error.hpp"
#include "projood/metrics.hpp"

using namespace projood;

namespace {

double auroc_pairs(const std::vector<double>& id, const std::vector<double>& ood) {
  double count = 0.0;
  for (double a : id)
    for (double b : ood) count += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  return count / (static_cast<double>(id.size()) * static_cast<double>(ood.size()));
}

std::vector<double> tied_scores(std::mt19937_64& rng, std::size_t n, int levels) {
  std::uniform_int_distribution<int> d(0, levels - 1);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng) * 0.25;
  return v;
}

}  // namespace

TEST(Classify, BoundaryIsInDistribution) {
  EXPECT_TRUE(classify(0.7, 0.5));
  EXPECT_TRUE(classify(0.5, 0.5));
  EXPECT_FALSE(classify(0.3, 0.5));
}

TEST(Auroc, WorkedExamples) {
  EXPECT_EQ(auroc(std::vector<double>{0.9, 0.8}, std::vector<double>{0.1, 0.2}), 1.0);
  EXPECT_EQ(auroc(std::vector<double>{0.9, 0.3}, std::vector<double>{0.5, 0.1}), 0.75);
  EXPECT_EQ(auroc(std::vector<double>{0.5}, std::vector<double>{0.5}), 0.5);
}

TEST(Auroc, EmptyListThrows) {
  EXPECT_THROW(auroc(std::vector<double>{}, std::vector<double>{1.0}), EmptyInput);
  EXPECT_THROW(auroc(std::vector<double>{1.0}, std::vector<double>{}), EmptyInput);
}

TEST(Auroc, MatchesPairCountingOracleWithTies) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> size(1, 200);
  for (int trial = 0; trial < 200; ++trial) {
    const auto id = tied_scores(rng, size(rng), 1 + trial % 12);
    const auto ood = tied_scores(rng, size(rng), 1 + trial % 7);
    EXPECT_EQ(auroc(id, ood), auroc_pairs(id, ood)) << "trial " << trial;
  }
}

TEST(Auroc, SwappingRolesComplements) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = tied_scores(rng, 37, 5);
    const auto b = tied_scores(rng, 53, 9);
    EXPECT_EQ(auroc(a, b) + auroc(b, a), 1.0);
  }
}

TEST(Auroc, InvariantUnderIncreasingTransform) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> a(80), b(60);
  for (auto& x : a) x = n(rng) + 0.5;
  for (auto& x : b) x = n(rng);
  a[0] = b[0];  // one cross tie
  auto t = [](std::vector<double> v) {
    for (auto& x : v) x = std::exp(2.0 * x) + 3.0;
    return v;
  };
  EXPECT_EQ(auroc(a, b), auroc(t(a), t(b)));
}

TEST(TnrAtTpr, WorkedExample) {
  std::vector<double> id;
  for (int i = 1; i <= 20; ++i) id.push_back(i);
  const auto op = tnr_at_tpr(id, std::vector<double>{0.0, 1.5, 3.0}, 0.95);
  EXPECT_EQ(op.tau, 2.0);
  EXPECT_DOUBLE_EQ(op.tnr, 2.0 / 3.0);
}

TEST(TnrAtTpr, ExtremeSeparations) {
  const std::vector<double> id{5, 6, 7, 8};
  for (double level : {0.95, 0.98}) {
    EXPECT_EQ(tnr_at_tpr(id, std::vector<double>{0, 1, 2}, level).tnr, 1.0);
    EXPECT_EQ(tnr_at_tpr(id, std::vector<double>{9, 10}, level).tnr, 0.0);
  }
  EXPECT_THROW(tnr_at_tpr(std::vector<double>{}, id, 0.95), EmptyInput);
}

TEST(TnrAtTpr, StricterLevelNeverRaisesThreshold) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto id = tied_scores(rng, 1 + trial * 3, 20);
    const auto ood = tied_scores(rng, 40, 20);
    const auto p95 = tnr_at_tpr(id, ood, 0.95);
    const auto p98 = tnr_at_tpr(id, ood, 0.98);
    EXPECT_LE(p98.tau, p95.tau);
    EXPECT_LE(p98.tnr, p95.tnr);
    // tau is an observed ID score meeting the level, and the largest such.
    const auto above = [&](double t) {
      return static_cast<double>(std::count_if(id.begin(), id.end(), [&](double s) { return s >= t; })) / id.size();
    };
    EXPECT_NE(std::find(id.begin(), id.end(), p95.tau), id.end());
    EXPECT_GE(above(p95.tau), 0.95);
    for (double s : id)
      if (s > p95.tau) EXPECT_LT(above(s), 0.95);
  }
}

TEST(Histogram, Examples) {
  const auto h = histogram(std::vector<double>{0.1, 0.9}, 2, 0.0, 1.0);
  EXPECT_EQ(h.counts, (std::vector<std::size_t>{1, 1}));
  EXPECT_EQ(h.edges, (std::vector<double>{0.0, 0.5, 1.0}));
  const auto e = histogram(std::vector<double>{}, 3, 0.0, 1.0);
  EXPECT_EQ(e.counts, (std::vector<std::size_t>{0, 0, 0}));
  EXPECT_THROW(histogram(std::vector<double>{}, 0, 0.0, 1.0), InvalidArgument);
  EXPECT_THROW(histogram(std::vector<double>{}, 2, 1.0, 1.0), InvalidArgument);
}

TEST(Histogram, MatchesBruteForceBinning) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.2, 1.2);
  std::vector<double> v(1000);
  for (auto& x : v) x = u(rng);
  v[0] = 1.0;  // closed last bin
  v[1] = 0.0;
  const int bins = 13;
  const auto h = histogram(v, bins, 0.0, 1.0);
  std::vector<std::size_t> oracle(bins, 0);
  std::size_t in_range = 0;
  for (double x : v) {
    if (x < 0.0 || x > 1.0) continue;
    ++in_range;
    for (int b = 0; b < bins; ++b) {
      const bool last = b == bins - 1;
      if (x >= h.edges[b] && (x < h.edges[b + 1] || (last && x <= h.edges[b + 1]))) {
        ++oracle[b];
        break;
      }
    }
  }
  EXPECT_EQ(h.counts, oracle);
  std::size_t total = 0;
  for (auto c : h.counts) total += c;
  EXPECT_EQ(total, in_range);
}

TEST(EvalReportTest, SerializedForms) {
  const auto r = evaluate(std::vector<double>{0.9, 0.3}, std::vector<double>{0.5, 0.1}, "id_test", "ring", "S_gamma", 4);
  EXPECT_EQ(r.auroc, 0.75);
  EXPECT_NE(r.to_text().find("auroc: 0.75\n"), std::string::npos);
  EXPECT_NE(r.csv_rows().find("auroc,id_test,ring,S_gamma,0.75\n"), std::string::npos);
  EXPECT_EQ(r.histogram_csv().rfind("bin_left,bin_right,id_count,ood_count\n", 0), 0u);
  std::size_t total = 0;
  for (std::size_t i = 0; i < r.id_counts.size(); ++i) total += r.id_counts[i] + r.ood_counts[i];
  EXPECT_EQ(total, 4u);
}
