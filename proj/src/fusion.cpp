#include "projood/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "projood/binary_io.hpp"
#include "projood/error.hpp"

namespace projood {

Eigen::RowVectorXd fusion_features(const ScoreRecord& r) {
  Eigen::RowVectorXd x(kFusionFeatureCount);
  x << r.cos_alpha, r.max_cos_beta, r.cos_gamma, r.norm_fn;
  return x;
}

Eigen::MatrixXd fusion_features(const std::vector<ScoreRecord>& records) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(records.size()), kFusionFeatureCount);
  for (std::size_t i = 0; i < records.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = fusion_features(records[i]);
  return x;
}

// ---------------------------------------------------------------- standardizer

Standardizer standardize_fit(const Eigen::MatrixXd& features) {
  if (features.rows() < 2) throw EmptyInput("standardizer needs at least two records");
  if (!features.allFinite()) throw InvalidArgument("standardizer input is not finite");
  return {features.colwise().minCoeff(), features.colwise().maxCoeff()};
}

Eigen::RowVectorXd Standardizer::apply_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  if (x.size() != min.size()) throw ShapeMismatch("standardizer feature count mismatch");
  Eigen::RowVectorXd out(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double width = is_constant(static_cast<int>(j)) ? 1.0 : max(j) - min(j);
    out(j) = (x(j) - min(j)) / width;
  }
  return out;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = apply_row(x.row(i));
  return out;
}

FusionKind parse_fusion_kind(const std::string& s) {
  if (s == "rbf_svm") return FusionKind::RbfSvm;
  if (s == "linear_svm") return FusionKind::LinearSvm;
  if (s == "logreg") return FusionKind::LogReg;
  throw InvalidArgument("unknown fusion kind '" + s + "'");
}

std::string to_string(FusionKind k) {
  switch (k) {
    case FusionKind::RbfSvm: return "rbf_svm";
    case FusionKind::LinearSvm: return "linear_svm";
    case FusionKind::LogReg: return "logreg";
  }
  return "?";
}

// ---------------------------------------------------------------- SVM

double SvmModel::kernel(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b) const {
  if (kind == FusionKind::LinearSvm) return a.dot(b);
  return std::exp(-gamma * (a - b).squaredNorm());
}

double SvmModel::decision(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  double f = intercept;
  for (Eigen::Index i = 0; i < support_vectors.rows(); ++i) f += dual_coef(i) * kernel(support_vectors.row(i), x);
  return f;
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void check_binary_labels(std::span<const int> labels, Eigen::Index rows) {
  if (static_cast<Eigen::Index>(labels.size()) != rows) throw ShapeMismatch("label count does not match feature rows");
  bool pos = false, neg = false;
  for (int y : labels) {
    if (y == 1) pos = true;
    else if (y == -1) neg = true;
    else throw InvalidArgument("binary labels must be +1 or -1");
  }
  if (!pos || !neg) throw InvalidArgument("training data must contain both classes");
}

class SmoSolver {
 public:
  SmoSolver(const Eigen::MatrixXd& x, const std::vector<int>& y, const SvmModel& kernel_model, double c)
      : x_(x), y_(y), k_(kernel_model), c_(c), n_(x.rows()) {
    alpha_ = Eigen::VectorXd::Zero(n_);
    grad_ = Eigen::VectorXd::Constant(n_, -1.0);
    diag_.resize(n_);
    for (Eigen::Index i = 0; i < n_; ++i) diag_(i) = k_.kernel(x_.row(i), x_.row(i));
  }

  void solve(double eps, long max_iter) {
    Eigen::VectorXd qi(n_), qj(n_);
    for (iterations_ = 0; iterations_ < max_iter; ++iterations_) {
      Eigen::Index i = -1, j = -1;
      if (select(eps, i, j, qi)) return;
      fill_q(j, qj);
      update(i, j, qi, qj);
    }
    throw NumericalError("SMO did not converge in " + std::to_string(max_iter) + " iterations (violation gap " +
                         std::to_string(gap_) + ", tolerance " + std::to_string(eps) + ", N=" + std::to_string(n_) +
                         ")");
  }

  double rho() const {
    double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
    int n_free = 0;
    for (Eigen::Index i = 0; i < n_; ++i) {
      const double yg = y_[static_cast<std::size_t>(i)] * grad_(i);
      const bool pos = y_[static_cast<std::size_t>(i)] > 0;
      if (upper(i)) {
        if (pos) lb = std::max(lb, yg);
        else ub = std::min(ub, yg);
      } else if (lower(i)) {
        if (pos) ub = std::min(ub, yg);
        else lb = std::max(lb, yg);
      } else {
        ++n_free;
        sum_free += yg;
      }
    }
    return n_free > 0 ? sum_free / n_free : (ub + lb) / 2.0;
  }

  const Eigen::VectorXd& alpha() const { return alpha_; }
  long iterations() const { return iterations_; }
  double gap() const { return gap_; }

 private:
  static constexpr double kTau = 1e-12;

  bool upper(Eigen::Index i) const { return alpha_(i) >= c_; }
  bool lower(Eigen::Index i) const { return alpha_(i) <= 0.0; }
  int y(Eigen::Index i) const { return y_[static_cast<std::size_t>(i)]; }

  // Q_t[k] = y_t y_k K(x_t, x_k)
  void fill_q(Eigen::Index t, Eigen::VectorXd& q) const {
    for (Eigen::Index k = 0; k < n_; ++k) q(k) = y(t) * y(k) * k_.kernel(x_.row(t), x_.row(k));
  }

  // Second-order working set selection; returns true at optimality.
  bool select(double eps, Eigen::Index& out_i, Eigen::Index& out_j, Eigen::VectorXd& qi) {
    double gmax = -std::numeric_limits<double>::infinity();
    double gmax2 = -std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < n_; ++t) {
      if (y(t) > 0) {
        if (!upper(t) && -grad_(t) > gmax) { gmax = -grad_(t); i = t; }
      } else {
        if (!lower(t) && grad_(t) > gmax) { gmax = grad_(t); i = t; }
      }
    }
    if (i < 0) {
      gap_ = 0.0;
      return true;
    }
    fill_q(i, qi);
    Eigen::Index j = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < n_; ++t) {
      double grad_diff;
      double quad;
      if (y(t) > 0) {
        if (lower(t)) continue;
        gmax2 = std::max(gmax2, grad_(t));
        grad_diff = gmax + grad_(t);
        quad = diag_(i) + diag_(t) - 2.0 * y(i) * qi(t);
      } else {
        if (upper(t)) continue;
        gmax2 = std::max(gmax2, -grad_(t));
        grad_diff = gmax - grad_(t);
        quad = diag_(i) + diag_(t) + 2.0 * y(i) * qi(t);
      }
      if (grad_diff <= 0.0) continue;
      const double obj = -(grad_diff * grad_diff) / (quad > 0.0 ? quad : kTau);
      if (obj < best) {
        best = obj;
        j = t;
      }
    }
    gap_ = gmax + gmax2;
    if (gap_ < eps || j < 0) return true;
    out_i = i;
    out_j = j;
    return false;
  }

  void update(Eigen::Index i, Eigen::Index j, const Eigen::VectorXd& qi, const Eigen::VectorXd& qj) {
    const double old_i = alpha_(i), old_j = alpha_(j);
    double& ai = alpha_(i);
    double& aj = alpha_(j);
    if (y(i) != y(j)) {
      double quad = diag_(i) + diag_(j) + 2.0 * qi(j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad_(i) - grad_(j)) / quad;
      const double diff = ai - aj;
      ai += delta;
      aj += delta;
      if (diff > 0.0) {
        if (aj < 0.0) { aj = 0.0; ai = diff; }
      } else {
        if (ai < 0.0) { ai = 0.0; aj = -diff; }
      }
      if (diff > 0.0) {
        if (ai > c_) { ai = c_; aj = c_ - diff; }
      } else {
        if (aj > c_) { aj = c_; ai = c_ + diff; }
      }
    } else {
      double quad = diag_(i) + diag_(j) - 2.0 * qi(j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad_(i) - grad_(j)) / quad;
      const double sum = ai + aj;
      ai -= delta;
      aj += delta;
      if (sum > c_) {
        if (ai > c_) { ai = c_; aj = sum - c_; }
      } else {
        if (aj < 0.0) { aj = 0.0; ai = sum; }
      }
      if (sum > c_) {
        if (aj > c_) { aj = c_; ai = sum - c_; }
      } else {
        if (ai < 0.0) { ai = 0.0; aj = sum; }
      }
    }
    const double di = ai - old_i, dj = aj - old_j;
    grad_ += qi * di + qj * dj;
  }

  const Eigen::MatrixXd& x_;
  const std::vector<int>& y_;
  const SvmModel& k_;
  double c_;
  Eigen::Index n_;
  Eigen::VectorXd alpha_, grad_, diag_;
  long iterations_ = 0;
  double gap_ = 0.0;
};

}  // namespace

SvmSolution svm_train(const Eigen::MatrixXd& features, std::span<const int> labels, const SvmOptions& opts) {
  if (opts.kind == FusionKind::LogReg) throw InvalidArgument("svm_train needs an SVM kind");
  if (features.rows() < 2) throw EmptyInput("svm_train needs at least two samples");
  check_binary_labels(labels, features.rows());
  if (!features.allFinite()) throw InvalidArgument("svm_train: non-finite features");
  if (!(opts.C > 0.0)) throw InvalidArgument("SVM penalty C must be > 0");
  if (opts.kind == FusionKind::RbfSvm && !(opts.gamma > 0.0)) throw InvalidArgument("RBF gamma must be > 0");
  if (!(opts.tolerance > 0.0)) throw InvalidArgument("SVM tolerance must be > 0");

  const Eigen::Index n = features.rows();
  // Canonical order: lexicographic on (features, label), then a seeded shuffle.
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::sort(perm.begin(), perm.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < features.cols(); ++c)
      if (features(a, c) != features(b, c)) return features(a, c) < features(b, c);
    return labels[static_cast<std::size_t>(a)] < labels[static_cast<std::size_t>(b)];
  });
  std::mt19937_64 rng(mix_seed(opts.seed, 1));
  std::shuffle(perm.begin(), perm.end(), rng);

  Eigen::MatrixXd x(n, features.cols());
  std::vector<int> y(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) {
    x.row(k) = features.row(perm[static_cast<std::size_t>(k)]);
    y[static_cast<std::size_t>(k)] = labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])];
  }

  SvmSolution sol;
  sol.model.kind = opts.kind;
  sol.model.C = opts.C;
  sol.model.gamma = opts.kind == FusionKind::RbfSvm ? opts.gamma : 0.0;
  SmoSolver smo(x, y, sol.model, opts.C);
  smo.solve(opts.tolerance, opts.max_iterations > 0 ? opts.max_iterations : std::max<long>(100000, 100 * n));
  sol.iterations = smo.iterations();
  sol.gap = smo.gap();
  sol.model.intercept = -smo.rho();

  sol.alpha = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Index> sv;
  for (Eigen::Index k = 0; k < n; ++k) {
    sol.alpha(perm[static_cast<std::size_t>(k)]) = smo.alpha()(k);
    if (smo.alpha()(k) > 0.0) sv.push_back(k);
  }
  sol.model.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), x.cols());
  sol.model.dual_coef.resize(static_cast<Eigen::Index>(sv.size()));
  for (std::size_t s = 0; s < sv.size(); ++s) {
    sol.model.support_vectors.row(static_cast<Eigen::Index>(s)) = x.row(sv[s]);
    sol.model.dual_coef(static_cast<Eigen::Index>(s)) = smo.alpha()(sv[s]) * y[static_cast<std::size_t>(sv[s])];
  }
  return sol;
}

// ---------------------------------------------------------------- Platt

double PlattParams::probability(double f) const {
  const double z = A * f + B;
  // Split on sign so exp never overflows.
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

PlattParams platt_fit(std::span<const double> dec, std::span<const int> labels) {
  if (dec.size() != labels.size()) throw ShapeMismatch("platt_fit: decision/label count mismatch");
  double prior1 = 0, prior0 = 0;
  for (int y : labels) (y > 0 ? prior1 : prior0) += 1.0;
  if (prior1 == 0 || prior0 == 0) throw InvalidArgument("degenerate calibration: all calibration labels are equal");

  // Newton's method with backtracking on the regularized-target log-loss.
  const double hi = (prior1 + 1.0) / (prior1 + 2.0);
  const double lo = 1.0 / (prior0 + 2.0);
  std::vector<double> t(dec.size());
  for (std::size_t i = 0; i < dec.size(); ++i) t[i] = labels[i] > 0 ? hi : lo;

  const auto objective = [&](double a, double b) {
    double f = 0.0;
    for (std::size_t i = 0; i < dec.size(); ++i) {
      const double z = dec[i] * a + b;
      f += z >= 0.0 ? t[i] * z + std::log1p(std::exp(-z)) : (t[i] - 1.0) * z + std::log1p(std::exp(z));
    }
    return f;
  };

  constexpr int kMaxIter = 100;
  constexpr double kMinStep = 1e-10;
  constexpr double kSigma = 1e-12;
  double a = 0.0, b = std::log((prior0 + 1.0) / (prior1 + 1.0));
  double fval = objective(a, b);
  for (int it = 0; it < kMaxIter; ++it) {
    double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < dec.size(); ++i) {
      const double z = dec[i] * a + b;
      double p, q;
      if (z >= 0.0) {
        const double e = std::exp(-z);
        p = e / (1.0 + e);
        q = 1.0 / (1.0 + e);
      } else {
        const double e = std::exp(z);
        p = 1.0 / (1.0 + e);
        q = e / (1.0 + e);
      }
      const double d2 = p * q;
      h11 += dec[i] * dec[i] * d2;
      h22 += d2;
      h21 += dec[i] * d2;
      const double d1 = t[i] - p;
      g1 += dec[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < 1e-5 && std::abs(g2) < 1e-5) break;
    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;
    double step = 1.0;
    while (step >= kMinStep) {
      const double na = a + step * da, nb = b + step * db;
      const double nf = objective(na, nb);
      if (nf < fval + 1e-4 * step * gd) {
        a = na;
        b = nb;
        fval = nf;
        break;
      }
      step /= 2.0;
    }
    if (step < kMinStep) break;
  }
  return {a, b};
}

// ---------------------------------------------------------------- logistic regression

double LogRegModel::probability(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  const double z = x.dot(weights.transpose()) + intercept;
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

namespace {

// log(1 + exp(-m)) without overflow.
double softplus_neg(double m) { return m >= 0.0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m)); }

}  // namespace

double logreg_objective(const Eigen::VectorXd& w, double b, const Eigen::MatrixXd& x, std::span<const int> labels,
                        double penalty) {
  double loss = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    loss += softplus_neg(labels[static_cast<std::size_t>(i)] * (x.row(i).dot(w.transpose()) + b));
  return loss / static_cast<double>(x.rows()) + 0.5 * penalty * w.squaredNorm();
}

Eigen::VectorXd logreg_gradient(const Eigen::VectorXd& w, double b, const Eigen::MatrixXd& x,
                                std::span<const int> labels, double penalty) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(w.size() + 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double y = labels[static_cast<std::size_t>(i)];
    const double m = y * (x.row(i).dot(w.transpose()) + b);
    // d/dm log(1 + e^{-m}) = -sigmoid(-m)
    const double s = m >= 0.0 ? std::exp(-m) / (1.0 + std::exp(-m)) : 1.0 / (1.0 + std::exp(m));
    g.head(w.size()) -= y * s * x.row(i).transpose();
    g(w.size()) -= y * s;
  }
  g /= static_cast<double>(x.rows());
  g.head(w.size()) += penalty * w;
  return g;
}

LogRegModel logreg_train(const Eigen::MatrixXd& features, std::span<const int> labels, const LogRegOptions& opts) {
  if (features.rows() < 1) throw EmptyInput("logreg_train needs data");
  check_binary_labels(labels, features.rows());
  if (!(opts.penalty >= 0.0) || !(opts.learning_rate > 0.0) || opts.iterations < 0)
    throw InvalidArgument("logreg needs penalty >= 0, learning_rate > 0, iterations >= 0");
  LogRegModel m;
  m.penalty = opts.penalty;
  m.weights = Eigen::VectorXd::Zero(features.cols());
  for (int it = 0; it < opts.iterations; ++it) {
    const Eigen::VectorXd g = logreg_gradient(m.weights, m.intercept, features, labels, opts.penalty);
    m.weights -= opts.learning_rate * g.head(m.weights.size());
    m.intercept -= opts.learning_rate * g(m.weights.size());
    if (!m.weights.allFinite() || !std::isfinite(m.intercept))
      throw NumericalError("logistic regression diverged at iteration " + std::to_string(it) +
                           "; lower the learning rate");
  }
  return m;
}

// ---------------------------------------------------------------- fusion model

double FusionModel::decision(const ScoreRecord& r) const {
  const Eigen::RowVectorXd x = standardizer.apply_row(fusion_features(r));
  if (kind == FusionKind::LogReg) return x.dot(logreg->weights.transpose()) + logreg->intercept;
  return svm->decision(x);
}

double FusionModel::score(const ScoreRecord& r) const {
  if (kind == FusionKind::LogReg) return logreg->probability(standardizer.apply_row(fusion_features(r)));
  return platt.probability(decision(r));
}

double fuse_score(const FusionModel& model, const ScoreRecord& record) { return model.score(record); }

namespace {

std::vector<Eigen::Index> sample_rows(Eigen::Index n, std::size_t cap, std::mt19937_64& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  if (cap > 0 && idx.size() > cap) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

// Rows in lexicographic order, so nothing downstream sees the caller's ordering.
Eigen::MatrixXd canonical_rows(const Eigen::MatrixXd& x) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::lexicographical_compare(x.row(a).begin(), x.row(a).end(), x.row(b).begin(), x.row(b).end());
  });
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = x.row(idx[k]);
  return out;
}

}  // namespace

FusionModel fit_fusion(const std::vector<ScoreRecord>& id, const std::vector<ScoreRecord>& ood,
                       const FusionOptions& opts) {
  if (id.empty() || ood.empty()) throw EmptyInput("fusion needs both ID and reference OOD records");
  if (!(opts.calibration_fraction >= 0.0 && opts.calibration_fraction < 1.0))
    throw InvalidArgument("calibration_fraction must lie in [0,1)");

  std::mt19937_64 rng(mix_seed(opts.seed, 2));
  const Eigen::MatrixXd x_id = canonical_rows(fusion_features(id));
  const Eigen::MatrixXd x_ood = canonical_rows(fusion_features(ood));
  const auto keep_id = sample_rows(x_id.rows(), opts.max_per_class, rng);
  const auto keep_ood = sample_rows(x_ood.rows(), opts.max_per_class, rng);

  const auto n = static_cast<Eigen::Index>(keep_id.size() + keep_ood.size());
  Eigen::MatrixXd x(n, kFusionFeatureCount);
  std::vector<int> y;
  Eigen::Index r = 0;
  for (auto i : keep_id) { x.row(r++) = x_id.row(i); y.push_back(1); }
  for (auto i : keep_ood) { x.row(r++) = x_ood.row(i); y.push_back(-1); }

  FusionModel model;
  model.kind = opts.kind;
  model.standardizer = standardize_fit(x);
  const Eigen::MatrixXd xs = model.standardizer.apply(x);

  if (opts.kind == FusionKind::LogReg) {
    model.logreg = logreg_train(xs, y, opts.logreg);
    return model;
  }

  // Stratified hold-out for the probability calibration.
  std::vector<Eigen::Index> train_rows, cal_rows;
  for (int label : {1, -1}) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < n; ++i)
      if (y[static_cast<std::size_t>(i)] == label) rows.push_back(i);
    std::shuffle(rows.begin(), rows.end(), rng);
    auto n_cal = static_cast<std::size_t>(std::llround(opts.calibration_fraction * static_cast<double>(rows.size())));
    if (opts.calibration_fraction > 0.0) n_cal = std::clamp<std::size_t>(n_cal, 1, rows.size() - 1);
    cal_rows.insert(cal_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_cal));
    train_rows.insert(train_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_cal), rows.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(cal_rows.begin(), cal_rows.end());
  if (cal_rows.empty()) cal_rows = train_rows;

  Eigen::MatrixXd x_train(static_cast<Eigen::Index>(train_rows.size()), kFusionFeatureCount);
  std::vector<int> y_train;
  for (std::size_t k = 0; k < train_rows.size(); ++k) {
    x_train.row(static_cast<Eigen::Index>(k)) = xs.row(train_rows[k]);
    y_train.push_back(y[static_cast<std::size_t>(train_rows[k])]);
  }

  SvmOptions so;
  so.kind = opts.kind;
  so.C = opts.C;
  so.seed = mix_seed(opts.seed, 3);
  if (opts.kind == FusionKind::RbfSvm) {
    if (opts.rbf_gamma) {
      so.gamma = *opts.rbf_gamma;
    } else {
      const Eigen::RowVectorXd mean = x_train.colwise().mean();
      const double mean_var = (x_train.rowwise() - mean).array().square().colwise().mean().mean();
      so.gamma = mean_var > 0.0 ? 1.0 / (kFusionFeatureCount * mean_var) : 1.0;
    }
  }
  model.svm = svm_train(x_train, y_train, so).model;

  std::vector<double> dec;
  std::vector<int> y_cal;
  for (auto i : cal_rows) {
    dec.push_back(model.svm->decision(xs.row(i)));
    y_cal.push_back(y[static_cast<std::size_t>(i)]);
  }
  model.platt = platt_fit(dec, y_cal);
  if (!(model.platt.A < 0.0))
    throw NumericalError("degenerate calibration: fitted Platt slope A=" + std::to_string(model.platt.A) +
                         " is not negative");
  return model;
}

// ---------------------------------------------------------------- persistence

namespace {
constexpr char kMagic[] = "PFUS";
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_fusion(const FusionModel& model, const std::filesystem::path& path) {
  bin::Writer w;
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kVersion);
  w.u8(static_cast<std::uint8_t>(model.kind));
  for (int j = 0; j < kFusionFeatureCount; ++j) w.f64(model.standardizer.min(j));
  for (int j = 0; j < kFusionFeatureCount; ++j) w.f64(model.standardizer.max(j));
  if (model.kind == FusionKind::LogReg) {
    const LogRegModel& m = *model.logreg;
    w.u32(static_cast<std::uint32_t>(m.weights.size()));
    w.f64s(std::span<const double>(m.weights.data(), static_cast<std::size_t>(m.weights.size())));
    w.f64(m.intercept);
    w.f64(m.penalty);
  } else {
    const SvmModel& s = *model.svm;
    w.u32(static_cast<std::uint32_t>(s.support_vectors.rows()));
    w.u32(static_cast<std::uint32_t>(s.support_vectors.cols()));
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> sv = s.support_vectors;
    w.f64s(std::span<const double>(sv.data(), static_cast<std::size_t>(sv.size())));
    w.f64s(std::span<const double>(s.dual_coef.data(), static_cast<std::size_t>(s.dual_coef.size())));
    w.f64(s.intercept);
    w.f64(s.C);
    w.f64(s.gamma);
    w.f64(model.platt.A);
    w.f64(model.platt.B);
  }
  w.save(path);
}

FusionModel load_fusion(const std::filesystem::path& path) {
  auto r = bin::Reader::open(path);
  const std::string where = path.string();
  if (r.bytes(4) != std::string_view(kMagic, 4)) throw VersionMismatch(where + ": not a fusion model file");
  if (const auto v = r.u32(); v != kVersion)
    throw VersionMismatch(where + ": unsupported fusion format version " + std::to_string(v));
  FusionModel m;
  const std::uint8_t kind = r.u8();
  if (kind > 2) throw MalformedFile(where + ": unknown fusion kind");
  m.kind = static_cast<FusionKind>(kind);
  m.standardizer.min.resize(kFusionFeatureCount);
  m.standardizer.max.resize(kFusionFeatureCount);
  for (int j = 0; j < kFusionFeatureCount; ++j) m.standardizer.min(j) = r.f64();
  for (int j = 0; j < kFusionFeatureCount; ++j) m.standardizer.max(j) = r.f64();
  if (m.kind == FusionKind::LogReg) {
    LogRegModel lr;
    const std::uint32_t d = r.u32();
    if (d != kFusionFeatureCount) throw MalformedFile(where + ": logistic weight count mismatch");
    lr.weights.resize(d);
    r.f64s(std::span<double>(lr.weights.data(), d));
    lr.intercept = r.f64();
    lr.penalty = r.f64();
    m.logreg = std::move(lr);
  } else {
    SvmModel s;
    s.kind = m.kind;
    const std::uint32_t count = r.u32();
    const std::uint32_t d = r.u32();
    if (d != kFusionFeatureCount) throw MalformedFile(where + ": support vector width mismatch");
    if (static_cast<std::size_t>(count) * (d + 1) * sizeof(double) > r.remaining())
      throw MalformedFile(where + ": truncated support vectors");
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> sv(count, d);
    r.f64s(std::span<double>(sv.data(), static_cast<std::size_t>(sv.size())));
    s.support_vectors = sv;
    s.dual_coef.resize(count);
    r.f64s(std::span<double>(s.dual_coef.data(), count));
    s.intercept = r.f64();
    s.C = r.f64();
    s.gamma = r.f64();
    m.platt.A = r.f64();
    m.platt.B = r.f64();
    m.svm = std::move(s);
  }
  if (!r.at_end()) throw MalformedFile(where + ": trailing bytes");
  return m;
}

}  // namespace projood
