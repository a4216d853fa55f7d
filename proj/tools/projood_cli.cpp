// Command-line front end: gen-centroids, train, score, fuse, eval, ablate, run.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "projood/binary_io.hpp"
#include "projood/config.hpp"
#include "projood/error.hpp"
#include "projood/experiment.hpp"

namespace fs = std::filesystem;
using namespace projood;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = load_experiment(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  return cfg;
}

CentroidSet centroids_for(const ExperimentConfig& cfg, const RunLayout& out) {
  if (!fs::exists(out.centroids())) return make_centroids(cfg);
  CentroidSet set = load_centroids(out.centroids());
  if (set.class_count() != cfg.network.class_count || set.feature_dim() != cfg.network.pedcc_dim)
    throw ArchitectureMismatch(out.centroids().string() + " does not match class_count/pedcc_dim of the config");
  return set;
}

int cmd_gen_centroids(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const RunLayout out{cfg.out_dir};
  const CentroidSet set = make_centroids(cfg);
  save_centroids(set, out.centroids());
  std::cout << "wrote " << out.centroids().string() << " (c=" << set.class_count() << ", n=" << set.feature_dim()
            << ", min angle " << min_pairwise_angle(set.vectors()) << " rad)\n";
  return 0;
}

int cmd_train(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const RunLayout out{cfg.out_dir};
  const CentroidSet set = centroids_for(cfg, out);
  save_centroids(set, out.centroids());
  const ExperimentData data = load_data(cfg);
  NetworkModel model(network_config(cfg), set);
  TrainOptions opts;
  opts.checkpoint_dir = out.checkpoints();
  opts.log = &std::cout;
  const TrainReport report = train(model, data.id_train, cfg.loss, opts);
  bin::write_file(out.train_report(), report.to_text());
  bin::write_file(out.loss_curve(), report.to_csv());
  for (const auto& p : report.checkpoints) std::cout << "wrote " << p.string() << "\n";
  return 0;
}

int cmd_score(const Common& c, const std::string& checkpoint, const std::vector<std::string>& refs) {
  const ExperimentConfig cfg = load(c);
  const RunLayout out{cfg.out_dir};
  const fs::path ckpt =
      checkpoint.empty() ? out.checkpoints() / checkpoint_name(checkpoint_epoch(cfg.network)) : fs::path(checkpoint);
  const NetworkModel model =
      fs::exists(out.centroids()) ? load_checkpoint(ckpt, load_centroids(out.centroids())) : load_checkpoint(ckpt);
  const ExperimentData data = load_data(cfg);
  const ProjectionOperator primary = primary_projector(model, cfg.bias_mode);

  std::vector<std::pair<const Dataset*, SampleLabel>> all{{&data.id_train, SampleLabel::ID},
                                                          {&data.id_test, SampleLabel::ID},
                                                          {&data.reference_ood, SampleLabel::OOD}};
  for (const auto& d : data.test_ood) all.emplace_back(&d, SampleLabel::OOD);
  for (const auto& ref : refs) {
    bool known = false;
    for (const auto& [d, l] : all) known |= d->name == ref;
    if (!known) throw InvalidArgument("unknown dataset reference '" + ref + "'");
  }
  for (const auto& [d, label] : all) {
    if (!refs.empty() && std::find(refs.begin(), refs.end(), d->name) == refs.end()) continue;
    const auto records = score_dataset(model, primary, model.centroids(), *d, label, cfg.loss.scale);
    write_scores_csv(out.scores(d->name), records);
    std::cout << "wrote " << out.scores(d->name).string() << " (" << records.size() << " records";
    if (label == SampleLabel::ID) std::cout << ", accuracy " << accuracy(records);
    std::cout << ")\n";
  }
  return 0;
}

std::vector<ScoreRecord> read_nonempty(const fs::path& p) {
  auto records = read_scores_csv(p);
  if (records.empty()) throw ArtifactError(p.string() + ": score file has no records");
  return records;
}

int cmd_fuse(const Common& c, const std::vector<std::string>& files) {
  const ExperimentConfig cfg = load(c);
  const RunLayout out{cfg.out_dir};
  if (!files.empty() && files.size() != 2) throw InvalidArgument("fuse takes ID_SCORES REFERENCE_OOD_SCORES");
  const fs::path id_path = files.empty() ? out.scores("id_train") : fs::path(files[0]);
  const fs::path ref_path = files.empty() ? out.scores("reference_ood") : fs::path(files[1]);
  const FusionModel model = fit_fusion(read_nonempty(id_path), read_nonempty(ref_path), fusion_options(cfg));
  save_fusion(model, out.fusion());
  std::cout << "features:";
  for (const char* f : kFusionFeatureNames) std::cout << " " << f;
  std::cout << "\nwrote " << out.fusion().string() << " (" << to_string(model.kind) << ")\n";
  return 0;
}

int cmd_eval(const Common& c, const std::string& fusion_path, const std::vector<std::string>& files) {
  const ExperimentConfig cfg = load(c);
  const RunLayout out{cfg.out_dir};
  const FusionModel fusion = load_fusion(fusion_path.empty() ? out.fusion() : fs::path(fusion_path));

  NamedScores id;
  std::vector<NamedScores> ood;
  if (files.empty()) {
    id = {"id_test", read_nonempty(out.scores("id_test"))};
    for (const auto& spec : cfg.test_ood) ood.push_back({spec.name, read_nonempty(out.scores(spec.name))});
  } else {
    if (files.size() < 2) throw InvalidArgument("eval takes ID_SCORES OOD_SCORES...");
    id = {fs::path(files[0]).stem().string(), read_nonempty(files[0])};
    for (std::size_t i = 1; i < files.size(); ++i) ood.push_back({fs::path(files[i]).stem().string(), read_nonempty(files[i])});
  }
  const auto reports = evaluate_scores(id, ood, &fusion, cfg.histogram_bins);
  write_eval_reports(out.eval_dir(), reports);
  for (const auto& r : reports)
    std::cout << r.ood_dataset << " " << r.score_name << " auroc=" << r.auroc << " tnr95=" << r.tnr_at_tpr95
              << " tnr98=" << r.tnr_at_tpr98 << "\n";
  return 0;
}

int cmd_ablate(const Common& c, const std::string& axis_name) {
  const ExperimentConfig cfg = load(c);
  const AblationAxis axis = parse_ablation_axis(axis_name);
  const auto settings = run_ablation(cfg, axis, cfg.out_dir / ("ablate_" + axis_name), &std::cout);
  for (const auto& s : settings)
    for (const auto& r : s.reports)
      std::cout << axis_name << "=" << s.setting << " " << r.ood_dataset << " " << r.score_name
                << " auroc=" << r.auroc << "\n";
  return 0;
}

int cmd_run(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const PipelineResult result = run_pipeline(cfg, cfg.out_dir, &std::cout);
  std::cout << "ID test accuracy " << result.id_test_accuracy << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"projood: subspace-projection OOD detection pipeline"};
  app.require_subcommand(1);

  Common common;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "experiment config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", common.out, "output directory (overrides the config)");
    sub->add_option("--seed", common.seed, "global seed (overrides the config)");
  };

  auto* gen = app.add_subcommand("gen-centroids", "generate the class centroids");
  add_common(gen);
  auto* tr = app.add_subcommand("train", "train the network and write checkpoints");
  add_common(tr);

  std::string checkpoint;
  std::vector<std::string> refs;
  auto* sc = app.add_subcommand("score", "write per-sample score CSVs");
  add_common(sc);
  sc->add_option("--checkpoint", checkpoint, "checkpoint to score (default: the checkpoint_fraction one)");
  sc->add_option("datasets", refs, "id_train, id_test, reference_ood or an OOD name (default: all)");

  std::vector<std::string> fuse_files;
  auto* fu = app.add_subcommand("fuse", "fit the fusion classifier on ID-train vs the reference OOD set");
  add_common(fu);
  fu->add_option("scores", fuse_files, "ID_SCORES REFERENCE_OOD_SCORES (default: from --out)");

  std::string fusion_path;
  std::vector<std::string> eval_files;
  auto* ev = app.add_subcommand("eval", "evaluate every score against each OOD set");
  add_common(ev);
  ev->add_option("--fusion", fusion_path, "fusion model (default: <out>/fusion.pfus)");
  ev->add_option("scores", eval_files, "ID_SCORES OOD_SCORES... (default: from --out)");

  std::string axis;
  auto* ab = app.add_subcommand("ablate", "compare settings along one axis");
  add_common(ab);
  ab->add_option("--axis", axis, "bn_relu, bias_mode or fusion_kind")->required();

  auto* run = app.add_subcommand("run", "full pipeline: centroids, train, score, fuse, eval");
  add_common(run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen_centroids(common);
    if (*tr) return cmd_train(common);
    if (*sc) return cmd_score(common, checkpoint, refs);
    if (*fu) return cmd_fuse(common, fuse_files);
    if (*ev) return cmd_eval(common, fusion_path, eval_files);
    if (*ab) return cmd_ablate(common, axis);
    if (*run) return cmd_run(common);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ArtifactError& e) {
    std::cerr << "artifact error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "artifact error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
