#include "projood/experiment.hpp"

#include <algorithm>
#include <ostream>
#include <set>

#include "projood/binary_io.hpp"
#include "projood/error.hpp"

namespace projood {

Dataset load_source(const ExperimentConfig& cfg, const DatasetSpec& spec) {
  DatasetSpec s = spec;
  s.seed = cfg.sub_seed("data:" + spec.name);
  Dataset d = make_dataset(s);
  d.name = spec.name;
  if (spec.as_ood) std::fill(d.labels.begin(), d.labels.end(), kOodLabel);
  return d;
}

ExperimentData load_data(const ExperimentConfig& cfg) {
  ExperimentData data;
  const Dataset id = load_source(cfg, cfg.id);
  for (int y : id.labels)
    if (y < 0 || y >= cfg.network.class_count)
      throw InvalidArgument("ID label " + std::to_string(y) + " outside [0, class_count)");
  const TensorShape& in = cfg.network.input_shape;
  const auto check_shape = [&](const Dataset& d) {
    if (d.shape.size() != in.size())
      throw ShapeMismatch("dataset '" + d.name + "' has shape " + to_string(d.shape) + " but the network expects " +
                          to_string(in));
  };
  check_shape(id);
  std::tie(data.id_train, data.id_test) = split(id, {cfg.train_fraction, 1.0 - cfg.train_fraction}, cfg.sub_seed("split"));
  data.id_train.name = "id_train";
  data.id_test.name = "id_test";
  data.reference_ood = load_source(cfg, cfg.reference_ood);
  check_shape(data.reference_ood);
  for (const auto& spec : cfg.test_ood) {
    data.test_ood.push_back(load_source(cfg, spec));
    check_shape(data.test_ood.back());
  }
  return data;
}

CentroidSet make_centroids(const ExperimentConfig& cfg) {
  const int c = cfg.network.class_count, n = cfg.network.pedcc_dim;
  if (cfg.centroids.generator == CentroidGenerator::Simplex) return generate_simplex(c, n);
  IterativeOptions opts;
  opts.seed = cfg.sub_seed("centroids");
  opts.steps = cfg.centroids.steps;
  opts.step_size = cfg.centroids.step_size;
  return generate_iterative(c, n, opts);
}

NetworkConfig network_config(const ExperimentConfig& cfg) {
  NetworkConfig n = cfg.network;
  n.seed = cfg.sub_seed("train");
  return n;
}

FusionOptions fusion_options(const ExperimentConfig& cfg) {
  FusionOptions f = cfg.fusion;
  f.seed = cfg.sub_seed("fusion");
  return f;
}

std::vector<double> score_values(const std::vector<ScoreRecord>& records, const std::string& score_name,
                                 const FusionModel* fusion) {
  std::vector<double> out;
  out.reserve(records.size());
  if (score_name == "S_svm") {
    if (!fusion) throw InvalidArgument("S_svm needs a fusion model");
    for (const auto& r : records) out.push_back(fusion->score(r));
    return out;
  }
  double ScoreRecord::*field = nullptr;
  if (score_name == "S_gamma") field = &ScoreRecord::cos_gamma;
  else if (score_name == "S_norm") field = &ScoreRecord::norm_fn;
  else if (score_name == "S_alpha") field = &ScoreRecord::cos_alpha;
  else if (score_name == "S_beta") field = &ScoreRecord::max_cos_beta;
  else if (score_name == "baseline") field = &ScoreRecord::baseline_msp;
  else throw InvalidArgument("unknown score name '" + score_name + "'");
  for (const auto& r : records) out.push_back(r.*field);
  return out;
}

std::vector<EvalReport> evaluate_scores(const NamedScores& id, const std::vector<NamedScores>& ood,
                                        const FusionModel* fusion, int histogram_bins,
                                        const std::vector<std::string>& only) {
  if (id.records.empty()) throw ArtifactError("ID score set '" + id.name + "' is empty");
  std::vector<EvalReport> reports;
  for (const auto& o : ood) {
    if (o.records.empty()) throw ArtifactError("OOD score set '" + o.name + "' is empty");
    for (const auto& name : kScoreNames) {
      if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
      if (name == "S_svm" && !fusion) continue;
      const auto a = score_values(id.records, name, fusion);
      const auto b = score_values(o.records, name, fusion);
      reports.push_back(evaluate(a, b, id.name, o.name, name, histogram_bins));
    }
  }
  return reports;
}

void write_eval_reports(const std::filesystem::path& dir, const std::vector<EvalReport>& reports) {
  std::string csv = std::string(kEvalCsvHeader) + "\n";
  for (const auto& r : reports) {
    csv += r.csv_rows();
    const std::string stem = r.ood_dataset + "_" + r.score_name;
    bin::write_file(dir / ("report_" + stem + ".txt"), r.to_text());
    bin::write_file(dir / ("hist_" + stem + ".csv"), r.histogram_csv());
  }
  bin::write_file(dir / "eval.csv", csv);
}

double accuracy(const std::vector<ScoreRecord>& records) {
  if (records.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& r : records) hit += r.predicted_class == r.true_class;
  return static_cast<double>(hit) / static_cast<double>(records.size());
}

namespace {

void say(std::ostream* log, const std::string& line) {
  if (log) *log << line << std::endl;
}

// Trains and returns the model restored from the checkpoint_fraction
// checkpoint, which is the one scored downstream.
NetworkModel train_stage(const ExperimentConfig& cfg, const ExperimentData& data, const RunLayout& out,
                         const CentroidSet& centroids, TrainReport& report, std::ostream* log) {
  save_centroids(centroids, out.centroids());
  NetworkModel model(network_config(cfg), centroids);
  say(log, "training " + format_architecture(cfg.network.architecture) + " on " + std::to_string(data.id_train.size()) +
               " samples for " + std::to_string(cfg.network.epochs) + " epochs");
  TrainOptions opts;
  opts.checkpoint_dir = out.checkpoints();
  report = train(model, data.id_train, cfg.loss, opts);
  bin::write_file(out.train_report(), report.to_text());
  bin::write_file(out.loss_curve(), report.to_csv());
  return load_checkpoint(out.checkpoints() / checkpoint_name(checkpoint_epoch(model.config())), centroids);
}

struct ScoredSets {
  NamedScores id_train, id_test, reference;
  std::vector<NamedScores> ood;
};

ScoredSets score_stage(const ExperimentConfig& cfg, const NetworkModel& model, const ExperimentData& data,
                       BiasMode mode) {
  const ProjectionOperator primary = primary_projector(model, mode);
  const auto run = [&](const Dataset& d, SampleLabel label) {
    return NamedScores{d.name, score_dataset(model, primary, model.centroids(), d, label, cfg.loss.scale)};
  };
  ScoredSets s;
  s.id_train = run(data.id_train, SampleLabel::ID);
  s.id_test = run(data.id_test, SampleLabel::ID);
  s.reference = run(data.reference_ood, SampleLabel::OOD);
  for (const auto& d : data.test_ood) s.ood.push_back(run(d, SampleLabel::OOD));
  return s;
}

void write_scores(const RunLayout& out, const ScoredSets& s) {
  write_scores_csv(out.scores(s.id_train.name), s.id_train.records);
  write_scores_csv(out.scores(s.id_test.name), s.id_test.records);
  write_scores_csv(out.scores(s.reference.name), s.reference.records);
  for (const auto& o : s.ood) write_scores_csv(out.scores(o.name), o.records);
}

}  // namespace

PipelineResult run_pipeline(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::ostream* log) {
  const RunLayout out{out_dir};
  PipelineResult result;
  const ExperimentData data = load_data(cfg);
  const CentroidSet centroids = make_centroids(cfg);
  const NetworkModel model = train_stage(cfg, data, out, centroids, result.train, log);

  const ScoredSets s = score_stage(cfg, model, data, cfg.bias_mode);
  write_scores(out, s);
  result.id_test_accuracy = accuracy(s.id_test.records);
  say(log, "ID test accuracy " + std::to_string(result.id_test_accuracy));

  const FusionModel fusion = fit_fusion(s.id_train.records, s.reference.records, fusion_options(cfg));
  save_fusion(fusion, out.fusion());

  result.reports = evaluate_scores(s.id_test, s.ood, &fusion, cfg.histogram_bins);
  write_eval_reports(out.eval_dir(), result.reports);
  for (const auto& r : result.reports)
    say(log, r.ood_dataset + " " + r.score_name + " AUROC " + std::to_string(r.auroc));
  return result;
}

AblationAxis parse_ablation_axis(const std::string& s) {
  if (s == "bn_relu") return AblationAxis::BnRelu;
  if (s == "bias_mode") return AblationAxis::BiasMode;
  if (s == "fusion_kind") return AblationAxis::FusionKind;
  throw InvalidArgument("unknown ablation axis '" + s + "' (expected bn_relu, bias_mode or fusion_kind)");
}

std::string to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::BnRelu: return "bn_relu";
    case AblationAxis::BiasMode: return "bias_mode";
    case AblationAxis::FusionKind: return "fusion_kind";
  }
  return "?";
}

std::vector<AblationSetting> run_ablation(const ExperimentConfig& cfg, AblationAxis axis,
                                          const std::filesystem::path& out_dir, std::ostream* log) {
  std::vector<AblationSetting> settings;
  const ExperimentData data = load_data(cfg);
  const CentroidSet centroids = make_centroids(cfg);

  if (axis == AblationAxis::BnRelu) {
    for (bool on : {false, true}) {
      ExperimentConfig c = cfg;
      c.network.final_bn_relu = on;
      const std::string name = on ? "on" : "off";
      say(log, "bn_relu = " + name);
      const RunLayout out{out_dir / ("bn_relu_" + name)};
      TrainReport report;
      const NetworkModel model = train_stage(c, data, out, centroids, report, log);
      const ScoredSets s = score_stage(c, model, data, c.bias_mode);
      write_scores(out, s);
      settings.push_back({name, evaluate_scores(s.id_test, s.ood, nullptr, c.histogram_bins, {"S_gamma"})});
    }
  } else {
    const RunLayout out{out_dir / "model"};
    TrainReport report;
    const NetworkModel model = train_stage(cfg, data, out, centroids, report, log);
    if (axis == AblationAxis::BiasMode) {
      for (BiasMode mode : {BiasMode::Exclude, BiasMode::IncludeAsVector}) {
        const ScoredSets s = score_stage(cfg, model, data, mode);
        settings.push_back({to_string(mode), evaluate_scores(s.id_test, s.ood, nullptr, cfg.histogram_bins, {"S_gamma"})});
      }
    } else {
      const ScoredSets s = score_stage(cfg, model, data, cfg.bias_mode);
      write_scores(out, s);
      for (FusionKind kind : {FusionKind::RbfSvm, FusionKind::LinearSvm, FusionKind::LogReg}) {
        FusionOptions f = fusion_options(cfg);
        f.kind = kind;
        const FusionModel fusion = fit_fusion(s.id_train.records, s.reference.records, f);
        settings.push_back({to_string(kind), evaluate_scores(s.id_test, s.ood, &fusion, cfg.histogram_bins, {"S_svm"})});
      }
    }
  }

  const std::string axis_name = to_string(axis);
  std::string text, csv = "setting," + std::string(kEvalCsvHeader) + "\n";
  for (const auto& st : settings) {
    for (const auto& r : st.reports) {
      text += axis_name + ": " + st.setting + "\n" + r.to_text() + "\n";
      std::size_t pos = 0;
      const std::string rows = r.csv_rows();
      while (pos < rows.size()) {
        const std::size_t nl = rows.find('\n', pos);
        csv += st.setting + "," + rows.substr(pos, nl - pos) + "\n";
        pos = nl + 1;
      }
    }
  }
  bin::write_file(out_dir / ("ablation_" + axis_name + ".txt"), text);
  bin::write_file(out_dir / ("ablation_" + axis_name + ".csv"), csv);
  return settings;
}

}  // namespace projood
