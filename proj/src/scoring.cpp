#include "projood/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "projood/binary_io.hpp"
#include "projood/error.hpp"
#include "projood/losses.hpp"

namespace projood {

namespace {
constexpr double kTinyNorm = 1e-12;
}

std::string to_string(SampleLabel l) {
  switch (l) {
    case SampleLabel::ID: return "ID";
    case SampleLabel::OOD: return "OOD";
    case SampleLabel::Unlabeled: return "unlabeled";
  }
  return "?";
}

SampleLabel parse_sample_label(const std::string& s) {
  if (s == "ID") return SampleLabel::ID;
  if (s == "OOD") return SampleLabel::OOD;
  if (s == "unlabeled") return SampleLabel::Unlabeled;
  throw MalformedFile("unknown sample label '" + s + "'");
}

ProjectionCosine cos_gamma(const Eigen::Ref<const Eigen::VectorXd>& f_m, const ProjectionOperator& proj) {
  const Eigen::VectorXd x = proj.lift(f_m);
  const double norm = x.norm();
  if (!(norm >= kTinyNorm)) return {0.0, true};
  const double projected = (proj.basis().transpose() * x).norm();
  return {std::clamp(projected / norm, 0.0, 1.0), false};
}

ProjectionOperator pedcc_projector(const CentroidSet& centroids) {
  return ProjectionOperator::from_columns(centroids.vectors().transpose());
}

PedccAngles pedcc_angles(const Eigen::Ref<const Eigen::VectorXd>& f_n, const CentroidSet& centroids) {
  return pedcc_angles(f_n, centroids, pedcc_projector(centroids));
}

PedccAngles pedcc_angles(const Eigen::Ref<const Eigen::VectorXd>& f_n, const CentroidSet& centroids,
                         const ProjectionOperator& centroid_span) {
  const Eigen::MatrixXd& a = centroids.vectors();
  if (f_n.size() != a.cols()) throw ShapeMismatch("pedcc_angles: feature width != centroid dimension");
  const Eigen::Index c = a.rows();
  PedccAngles out;
  out.cos_beta = Eigen::VectorXd::Zero(c);
  out.cos_theta = Eigen::VectorXd::Zero(c);
  const double fn = f_n.norm();
  if (!(fn >= kTinyNorm)) {
    out.degenerate = true;
    return out;
  }
  const Eigen::VectorXd a_norm = a.rowwise().norm();
  const Eigen::VectorXd dots = a * f_n;
  out.cos_theta = (dots.array() / (a_norm.array() * fn)).cwiseMax(-1.0).cwiseMin(1.0).matrix();

  const Eigen::VectorXd fp = centroid_span.apply(f_n);
  const double fp_norm = fp.norm();
  if (!(fp_norm >= kTinyNorm)) {
    out.degenerate = true;
    return out;
  }
  out.cos_alpha = std::clamp(fp_norm / fn, 0.0, 1.0);
  out.cos_beta = ((a * fp).array() / (a_norm.array() * fp_norm)).cwiseMax(-1.0).cwiseMin(1.0).matrix();
  return out;
}

double s_norm(const Eigen::Ref<const Eigen::VectorXd>& f_n) { return f_n.norm(); }

double baseline_msp(const Eigen::Ref<const Eigen::VectorXd>& cos_theta, double scale) {
  return softmax_max(cos_theta.transpose(), scale);
}

ProjectionOperator primary_projector(const NetworkModel& model, BiasMode mode) {
  const Dense& fc1 = model.fc1();
  std::optional<Eigen::VectorXd> bias;
  if (fc1.has_bias()) bias = fc1.bias().col(0);
  return projector_from_weights(fc1.weight(), bias, mode);
}

std::vector<ScoreRecord> score_dataset(const NetworkModel& model, const ProjectionOperator& primary,
                                       const CentroidSet& centroids, const Dataset& data, SampleLabel label,
                                       double scale) {
  std::vector<ScoreRecord> out;
  out.reserve(static_cast<std::size_t>(data.size()));
  const ProjectionOperator span = pedcc_projector(centroids);
  constexpr Eigen::Index kChunk = 256;
  for (Eigen::Index lo = 0; lo < data.size(); lo += kChunk) {
    const Eigen::Index hi = std::min(data.size(), lo + kChunk);
    const ForwardResult fw = model.infer(data.features.middleRows(lo, hi - lo));
    for (Eigen::Index i = 0; i < hi - lo; ++i) {
      const Eigen::VectorXd f_m = fw.f_m.row(i).transpose();
      const Eigen::VectorXd f_n = fw.f_n.row(i).transpose();
      const ProjectionCosine g = cos_gamma(f_m, primary);
      const PedccAngles ang = pedcc_angles(f_n, centroids, span);
      ScoreRecord r;
      r.cos_gamma = g.value;
      r.cos_alpha = ang.cos_alpha;
      r.max_cos_beta = ang.degenerate ? 0.0 : ang.cos_beta.maxCoeff();
      r.norm_fn = s_norm(f_n);
      r.cos_theta = ang.cos_theta;
      r.baseline_msp = baseline_msp(ang.cos_theta, scale);
      Eigen::Index arg = 0;
      ang.cos_theta.maxCoeff(&arg);
      r.predicted_class = static_cast<int>(arg);
      r.label = label;
      r.true_class = data.labels[static_cast<std::size_t>(lo + i)];
      r.degenerate = g.degenerate || ang.degenerate;
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::string scores_csv(const std::vector<ScoreRecord>& records) {
  std::string out = std::string(kScoresCsvHeader) + "\n";
  char buf[512];
  for (std::size_t i = 0; i < records.size(); ++i) {
    const ScoreRecord& r = records[i];
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%d,%s\n", i, r.cos_alpha, r.max_cos_beta, r.cos_gamma,
                  r.norm_fn, r.baseline_msp, r.predicted_class, to_string(r.label).c_str());
    out += buf;
  }
  return out;
}

void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoreRecord>& records) {
  const std::string text = scores_csv(records);
  bin::write_file(path, std::span<const char>(text.data(), text.size()));
}

std::vector<ScoreRecord> read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw MalformedFile(path.string() + ": empty score file (no header)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kScoresCsvHeader) throw MalformedFile(path.string() + ": unexpected score CSV header");
  std::vector<ScoreRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> f;
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 8) throw MalformedFile(path.string() + ":" + std::to_string(lineno) + ": expected 8 columns");
    ScoreRecord r;
    try {
      r.cos_alpha = std::stod(f[1]);
      r.max_cos_beta = std::stod(f[2]);
      r.cos_gamma = std::stod(f[3]);
      r.norm_fn = std::stod(f[4]);
      r.baseline_msp = std::stod(f[5]);
      r.predicted_class = std::stoi(f[6]);
    } catch (const std::exception&) {
      throw MalformedFile(path.string() + ":" + std::to_string(lineno) + ": bad number");
    }
    r.label = parse_sample_label(f[7]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace projood
