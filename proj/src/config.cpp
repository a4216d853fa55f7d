#include "projood/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "projood/error.hpp"

namespace projood {

std::uint64_t derive_seed(std::uint64_t global, std::string_view purpose) {
  // FNV-1a of the purpose, folded into the global seed, then splitmix64.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : purpose) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t z = global ^ h;
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t ExperimentConfig::sub_seed(std::string_view purpose) const { return derive_seed(seed, purpose); }

std::string to_string(BiasMode mode) { return mode == BiasMode::Exclude ? "exclude" : "include_as_vector"; }

BiasMode parse_bias_mode(const std::string& s) {
  if (s == "exclude") return BiasMode::Exclude;
  if (s == "include_as_vector") return BiasMode::IncludeAsVector;
  throw InvalidArgument("unknown bias_mode '" + s + "' (expected exclude or include_as_vector)");
}

void ExperimentConfig::validate() const {
  network.validate();
  loss.validate();
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidArgument("train_fraction must lie in (0,1)");
  if (id.kind != DatasetKind::GaussianMixture && id.kind != DatasetKind::TwoMoons && id.kind != DatasetKind::IdxImages)
    throw InvalidArgument("[data.id] must be a labeled kind (gaussian_mixture, two_moons, idx_images)");
  if (id.kind == DatasetKind::IdxImages && !id.labels_path) throw InvalidArgument("[data.id] needs a labels file");
  if (test_ood.empty()) throw InvalidArgument("at least one [data.ood.<name>] section is required");
  std::set<std::string> names;
  for (const auto& s : test_ood) {
    if (s.name == "id_train" || s.name == "id_test" || s.name == "reference_ood")
      throw InvalidArgument("OOD dataset name '" + s.name + "' is reserved");
    if (!names.insert(s.name).second) throw InvalidArgument("duplicate OOD dataset name '" + s.name + "'");
  }
  if (histogram_bins < 1) throw InvalidArgument("histogram_bins must be >= 1");
  if (centroids.steps < 0 || !(centroids.step_size > 0.0)) throw InvalidArgument("bad centroid optimizer settings");
  if (centroids.generator == CentroidGenerator::Simplex && network.class_count > network.pedcc_dim + 1)
    throw InvalidArgument("simplex centroids need class_count <= pedcc_dim + 1; use generator = iterative");
  if (!(fusion.C > 0.0)) throw InvalidArgument("fusion C must be > 0");
  if (fusion.rbf_gamma && !(*fusion.rbf_gamma > 0.0)) throw InvalidArgument("fusion rbf_gamma must be > 0");
}

namespace {

namespace pt = boost::property_tree;

class Section {
 public:
  Section(std::string name, const pt::ptree& tree) : name_(std::move(name)), tree_(tree) {}

  const std::string& name() const { return name_; }

  bool has(const std::string& key) {
    used_.insert(key);
    return tree_.find(key) != tree_.not_found();
  }

  std::string str(const std::string& key) {
    used_.insert(key);
    const auto it = tree_.find(key);
    if (it == tree_.not_found()) throw InvalidArgument("[" + name_ + "] is missing '" + key + "'");
    return it->second.data();
  }

  template <class T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    out = number<T>(key, str(key));
  }

  void get_bool(const std::string& key, bool& out) {
    if (!has(key)) return;
    const std::string v = str(key);
    if (v == "true" || v == "on" || v == "yes" || v == "1") out = true;
    else if (v == "false" || v == "off" || v == "no" || v == "0") out = false;
    else throw InvalidArgument("[" + name_ + "] " + key + ": expected a boolean, got '" + v + "'");
  }

  std::vector<double> list(const std::string& key) {
    std::vector<double> out;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(number<double>(key, trim(item)));
    return out;
  }

  // Every key present must have been read.
  void finish() const {
    for (const auto& [key, value] : tree_)
      if (!used_.count(key)) throw InvalidArgument("[" + name_ + "] unknown key '" + key + "'");
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t") - b + 1);
  }

  template <class T>
  T number(const std::string& key, const std::string& text) const {
    T value{};
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end || text.empty())
      throw InvalidArgument("[" + name_ + "] " + key + ": cannot parse '" + text + "' as a number");
    return value;
  }

  std::string name_;
  const pt::ptree& tree_;
  std::set<std::string> used_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

void read_dataset(Section& s, DatasetSpec& d, const std::filesystem::path& base) {
  d.kind = parse_dataset_kind(s.str("kind"));
  s.get("samples", d.samples);
  s.get("dim", d.dim);
  s.get("class_count", d.class_count);
  s.get("cluster_radius", d.cluster_radius);
  s.get("cluster_std", d.cluster_std);
  s.get("moon_noise", d.moon_noise);
  s.get("ring_inner", d.ring_inner);
  s.get("ring_outer", d.ring_outer);
  if (s.has("center")) d.center = s.list("center");
  s.get("spread", d.spread);
  s.get("low", d.low);
  s.get("high", d.high);
  if (s.has("images")) d.images_path = resolve(base, s.str("images"));
  if (s.has("labels")) d.labels_path = resolve(base, s.str("labels"));
  s.get("offset", d.offset);
  s.get("limit", d.limit);
  if (d.kind == DatasetKind::IdxImages && d.images_path.empty())
    throw InvalidArgument("[" + s.name() + "] idx_images needs 'images'");
}

}  // namespace

ExperimentConfig parse_experiment(const std::string& text, const std::filesystem::path& base_dir) {
  pt::ptree root;
  try {
    std::istringstream in(text);
    pt::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }

  ExperimentConfig cfg;
  bool have_id = false, have_ref = false;
  for (const auto& [name, tree] : root) {
    if (tree.empty() && !tree.data().empty())
      throw InvalidArgument("config: key '" + name + "' outside of any section");
    Section s(name, tree);
    if (name == "experiment") {
      if (s.has("name")) cfg.name = s.str("name");
      s.get("seed", cfg.seed);
      if (s.has("out_dir")) cfg.out_dir = resolve(base_dir, s.str("out_dir"));
      if (s.has("bias_mode")) cfg.bias_mode = parse_bias_mode(s.str("bias_mode"));
    } else if (name == "centroids") {
      if (s.has("generator")) {
        const std::string g = s.str("generator");
        if (g == "simplex") cfg.centroids.generator = CentroidGenerator::Simplex;
        else if (g == "iterative") cfg.centroids.generator = CentroidGenerator::Iterative;
        else throw InvalidArgument("[centroids] generator must be simplex or iterative");
      }
      s.get("steps", cfg.centroids.steps);
      s.get("step_size", cfg.centroids.step_size);
    } else if (name == "network") {
      NetworkConfig& n = cfg.network;
      if (s.has("input")) n.input_shape = parse_shape(s.str("input"));
      if (s.has("architecture")) n.architecture = parse_architecture(s.str("architecture"));
      s.get("class_count", n.class_count);
      s.get("pedcc_dim", n.pedcc_dim);
      s.get_bool("final_bn_relu", n.final_bn_relu);
      s.get_bool("fc1_bias", n.fc1_bias);
      s.get("epochs", n.epochs);
      s.get("batch_size", n.batch_size);
      s.get("learning_rate", n.lr.initial);
      s.get("lr_decay", n.lr.decay);
      if (s.has("lr_decay_at")) n.lr.decay_at = s.list("lr_decay_at");
      s.get("momentum", n.momentum);
      s.get("weight_decay", n.weight_decay);
      s.get("checkpoint_fraction", n.checkpoint_fraction);
    } else if (name == "loss") {
      s.get("scale", cfg.loss.scale);
      s.get("margin", cfg.loss.margin);
      s.get("lin_ind_weight", cfg.loss.lin_ind_weight);
      s.get("mse_weight", cfg.loss.mse_weight);
    } else if (name == "data.id") {
      read_dataset(s, cfg.id, base_dir);
      cfg.id.name = "id";
      s.get("train_fraction", cfg.train_fraction);
      have_id = true;
    } else if (name == "data.reference_ood") {
      read_dataset(s, cfg.reference_ood, base_dir);
      cfg.reference_ood.name = "reference_ood";
      cfg.reference_ood.as_ood = true;
      have_ref = true;
    } else if (name.rfind("data.ood.", 0) == 0 && name.size() > 9) {
      DatasetSpec d;
      read_dataset(s, d, base_dir);
      d.name = name.substr(9);
      d.as_ood = true;
      cfg.test_ood.push_back(std::move(d));
    } else if (name == "fusion") {
      if (s.has("kind")) cfg.fusion.kind = parse_fusion_kind(s.str("kind"));
      s.get("C", cfg.fusion.C);
      if (s.has("rbf_gamma")) {
        double g = 0.0;
        s.get("rbf_gamma", g);
        cfg.fusion.rbf_gamma = g;
      }
      s.get("calibration_fraction", cfg.fusion.calibration_fraction);
      s.get("max_per_class", cfg.fusion.max_per_class);
      s.get("logreg_penalty", cfg.fusion.logreg.penalty);
      s.get("logreg_learning_rate", cfg.fusion.logreg.learning_rate);
      s.get("logreg_iterations", cfg.fusion.logreg.iterations);
    } else if (name == "eval") {
      s.get("histogram_bins", cfg.histogram_bins);
    } else {
      throw InvalidArgument("config: unknown section [" + name + "]");
    }
    s.finish();
  }
  if (!have_id) throw InvalidArgument("config: missing [data.id]");
  if (!have_ref) throw InvalidArgument("config: missing [data.reference_ood]");
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment(ss.str(), path.parent_path());
}

}  // namespace projood
