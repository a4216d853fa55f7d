#include "projood/network.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "projood/binary_io.hpp"
#include "projood/error.hpp"

namespace projood {

// ---------------------------------------------------------------- config text

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_on(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

int to_int(const std::string& s, const char* what) {
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw InvalidArgument(std::string("bad ") + what + ": '" + s + "'");
  return v;
}

double to_double(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument(std::string("bad ") + what + ": '" + s + "'");
  }
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<LayerSpec> parse_architecture(std::string_view text) {
  std::vector<LayerSpec> out;
  if (trim(text).empty()) return out;
  for (const auto& item : split_on(text, ',')) {
    const auto parts = split_on(item, ':');
    const std::string& name = parts[0];
    if (name == "dense" || name == "conv3x3") {
      if (parts.size() != 2) throw InvalidArgument("layer '" + item + "' needs a size, e.g. " + name + ":32");
      const int size = to_int(parts[1], "layer size");
      if (size < 1) throw InvalidArgument("layer size must be >= 1 in '" + item + "'");
      out.push_back({name == "dense" ? LayerKind::Dense : LayerKind::Conv3x3, size});
    } else if (name == "maxpool2" || name == "flatten") {
      if (parts.size() != 1) throw InvalidArgument("layer '" + item + "' takes no size");
      out.push_back({name == "maxpool2" ? LayerKind::MaxPool2 : LayerKind::Flatten, 0});
    } else {
      throw InvalidArgument("unknown layer '" + item + "'");
    }
  }
  return out;
}

std::string format_architecture(const std::vector<LayerSpec>& layers) {
  std::string out;
  for (const auto& l : layers) {
    if (!out.empty()) out += ',';
    switch (l.kind) {
      case LayerKind::Dense: out += "dense:" + std::to_string(l.size); break;
      case LayerKind::Conv3x3: out += "conv3x3:" + std::to_string(l.size); break;
      case LayerKind::MaxPool2: out += "maxpool2"; break;
      case LayerKind::Flatten: out += "flatten"; break;
    }
  }
  return out;
}

TensorShape parse_shape(std::string_view text) {
  const auto parts = split_on(text, 'x');
  TensorShape s;
  if (parts.size() == 1) {
    s = {to_int(parts[0], "shape"), 1, 1};
  } else if (parts.size() == 3) {
    s = {to_int(parts[0], "shape"), to_int(parts[1], "shape"), to_int(parts[2], "shape")};
  } else {
    throw InvalidArgument("shape must be 'D' or 'CxHxW', got '" + std::string(text) + "'");
  }
  if (s.channels < 1 || s.height < 1 || s.width < 1) throw InvalidArgument("shape dimensions must be >= 1");
  return s;
}

double LearningRateSchedule::at_epoch(int epoch, int total_epochs) const {
  double lr = initial;
  for (double f : decay_at)
    if (epoch >= static_cast<int>(std::lround(f * total_epochs))) lr *= decay;
  return lr;
}

namespace {

// Shape after each architecture entry; validates spatial sizes.
TensorShape walk_shapes(const NetworkConfig& c) {
  TensorShape s = c.input_shape;
  bool flat = s.height == 1 && s.width == 1;
  for (const auto& l : c.architecture) {
    switch (l.kind) {
      case LayerKind::Dense: s = {l.size, 1, 1}; flat = true; break;
      case LayerKind::Conv3x3:
        if (flat && !(s.height > 1 || s.width > 1))
          throw InvalidArgument("conv3x3 needs a spatial input (CxHxW), got " + to_string(s));
        s = {l.size, s.height, s.width};
        break;
      case LayerKind::MaxPool2:
        if (s.height < 2 || s.width < 2) throw InvalidArgument("maxpool2 needs height and width >= 2, got " + to_string(s));
        s = {s.channels, s.height / 2, s.width / 2};
        break;
      case LayerKind::Flatten: s = {s.size(), 1, 1}; flat = true; break;
    }
  }
  return s;
}

}  // namespace

int NetworkConfig::feature_dim() const { return walk_shapes(*this).size(); }

void NetworkConfig::validate() const {
  if (class_count < 2) throw InvalidArgument("class_count must be >= 2");
  if (pedcc_dim < 1) throw InvalidArgument("pedcc_dim must be >= 1");
  const int m = feature_dim();
  if (!(m > pedcc_dim)) throw InvalidArgument("feature dimension m=" + std::to_string(m) + " must exceed pedcc_dim n=" +
                                              std::to_string(pedcc_dim));
  if (pedcc_dim < class_count - 1) throw InvalidArgument("pedcc_dim must be >= class_count - 1");
  if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(lr.initial > 0.0)) throw InvalidArgument("learning_rate must be > 0");
  if (!(lr.decay > 0.0)) throw InvalidArgument("lr_decay must be > 0");
  for (double f : lr.decay_at)
    if (!(f > 0.0 && f < 1.0)) throw InvalidArgument("lr_decay_at fractions must lie in (0,1)");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw InvalidArgument("weight_decay must be >= 0");
  if (!(checkpoint_fraction > 0.0 && checkpoint_fraction <= 1.0))
    throw InvalidArgument("checkpoint_fraction must lie in (0,1]");
}

std::string NetworkConfig::serialize() const {
  std::string decay;
  for (double f : lr.decay_at) decay += (decay.empty() ? "" : ",") + fmt_double(f);
  std::ostringstream os;
  os << "input_shape=" << to_string(input_shape) << "\n"
     << "architecture=" << format_architecture(architecture) << "\n"
     << "class_count=" << class_count << "\n"
     << "pedcc_dim=" << pedcc_dim << "\n"
     << "final_bn_relu=" << (final_bn_relu ? 1 : 0) << "\n"
     << "fc1_bias=" << (fc1_bias ? 1 : 0) << "\n"
     << "epochs=" << epochs << "\n"
     << "batch_size=" << batch_size << "\n"
     << "learning_rate=" << fmt_double(lr.initial) << "\n"
     << "lr_decay=" << fmt_double(lr.decay) << "\n"
     << "lr_decay_at=" << decay << "\n"
     << "momentum=" << fmt_double(momentum) << "\n"
     << "weight_decay=" << fmt_double(weight_decay) << "\n"
     << "seed=" << seed << "\n"
     << "checkpoint_fraction=" << fmt_double(checkpoint_fraction) << "\n";
  return os.str();
}

NetworkConfig NetworkConfig::deserialize(std::string_view text) {
  std::map<std::string, std::string> kv;
  for (const auto& line : split_on(text, '\n')) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw MalformedFile("config line without '=': " + line);
    kv[trim(std::string_view(line).substr(0, eq))] = trim(std::string_view(line).substr(eq + 1));
  }
  const auto get = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw MalformedFile(std::string("config is missing '") + key + "'");
    return it->second;
  };
  NetworkConfig c;
  try {
    c.input_shape = parse_shape(get("input_shape"));
    c.architecture = parse_architecture(get("architecture"));
    c.class_count = to_int(get("class_count"), "class_count");
    c.pedcc_dim = to_int(get("pedcc_dim"), "pedcc_dim");
    c.final_bn_relu = get("final_bn_relu") == "1";
    c.fc1_bias = get("fc1_bias") == "1";
    c.epochs = to_int(get("epochs"), "epochs");
    c.batch_size = to_int(get("batch_size"), "batch_size");
    c.lr.initial = to_double(get("learning_rate"), "learning_rate");
    c.lr.decay = to_double(get("lr_decay"), "lr_decay");
    c.lr.decay_at.clear();
    if (!get("lr_decay_at").empty())
      for (const auto& f : split_on(get("lr_decay_at"), ',')) c.lr.decay_at.push_back(to_double(f, "lr_decay_at"));
    c.momentum = to_double(get("momentum"), "momentum");
    c.weight_decay = to_double(get("weight_decay"), "weight_decay");
    c.seed = std::stoull(get("seed"));
    c.checkpoint_fraction = to_double(get("checkpoint_fraction"), "checkpoint_fraction");
  } catch (const InvalidArgument& e) {
    throw MalformedFile(std::string("stored config: ") + e.what());
  } catch (const std::logic_error& e) {
    throw MalformedFile(std::string("stored config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------- model

NetworkModel::NetworkModel(NetworkConfig config, CentroidSet centroids)
    : config_(std::move(config)), centroids_(std::move(centroids)) {
  config_.validate();
  if (centroids_.feature_dim() != config_.pedcc_dim)
    throw ArchitectureMismatch("centroid dimension " + std::to_string(centroids_.feature_dim()) +
                               " does not match pedcc_dim " + std::to_string(config_.pedcc_dim));
  if (centroids_.class_count() != config_.class_count)
    throw ArchitectureMismatch("centroid count " + std::to_string(centroids_.class_count()) +
                               " does not match class_count " + std::to_string(config_.class_count));

  std::mt19937_64 rng(config_.seed);
  int last_weighted = -1;
  for (std::size_t i = 0; i < config_.architecture.size(); ++i)
    if (config_.architecture[i].kind == LayerKind::Dense || config_.architecture[i].kind == LayerKind::Conv3x3)
      last_weighted = static_cast<int>(i);

  TensorShape shape = config_.input_shape;
  int index = 0;
  const auto add = [&](std::unique_ptr<Layer> layer, const std::string& name) {
    shape = layer->output_shape();
    layers_.push_back(std::move(layer));
    layer_names_.push_back(name);
  };
  for (std::size_t i = 0; i < config_.architecture.size(); ++i) {
    const LayerSpec& spec = config_.architecture[i];
    const std::string name = "layer" + std::to_string(index++);
    const bool hidden = static_cast<int>(i) != last_weighted;
    // He-uniform ahead of a ReLU, LeCun-uniform for the linear last layer.
    const auto bound = [&](int fan_in) { return std::sqrt((hidden ? 6.0 : 3.0) / fan_in); };
    switch (spec.kind) {
      case LayerKind::Dense: {
        auto d = std::make_unique<Dense>(shape, spec.size, true);
        d->init_uniform(rng, bound(shape.size()));
        add(std::move(d), name);
        break;
      }
      case LayerKind::Conv3x3: {
        auto c = std::make_unique<Conv3x3>(shape, spec.size);
        c->init_uniform(rng, bound(c->fan_in()));
        add(std::move(c), name);
        break;
      }
      case LayerKind::MaxPool2: add(std::make_unique<MaxPool2>(shape), name); break;
      case LayerKind::Flatten: add(std::make_unique<Flatten>(shape), name); break;
    }
    if (hidden && (spec.kind == LayerKind::Dense || spec.kind == LayerKind::Conv3x3))
      add(std::make_unique<ReLU>(shape), "layer" + std::to_string(index++));
  }
  if (config_.final_bn_relu) {
    add(std::make_unique<BatchNorm>(shape), "final_bn");
    add(std::make_unique<ReLU>(shape), "final_relu");
  }
  fc1_ = std::make_unique<Dense>(shape, config_.pedcc_dim, config_.fc1_bias);
  fc1_->init_uniform(rng, std::sqrt(3.0 / shape.size()));
}

Batch cosine_head(const Batch& f_n, const CentroidSet& centroids, std::vector<std::uint8_t>* degenerate) {
  if (f_n.cols() != centroids.feature_dim()) throw ShapeMismatch("cosine head: feature width != centroid dimension");
  const Eigen::MatrixXd& a = centroids.vectors();
  const Eigen::VectorXd a_norm = a.rowwise().norm();
  Batch cos = f_n * a.transpose();
  if (degenerate) degenerate->assign(static_cast<std::size_t>(f_n.rows()), 0);
  for (Eigen::Index i = 0; i < f_n.rows(); ++i) {
    const double fn = f_n.row(i).norm();
    if (!(fn > 0.0)) {
      cos.row(i).setZero();
      if (degenerate) (*degenerate)[static_cast<std::size_t>(i)] = 1;
      continue;
    }
    for (Eigen::Index j = 0; j < cos.cols(); ++j) cos(i, j) = std::clamp(cos(i, j) / (fn * a_norm(j)), -1.0, 1.0);
  }
  return cos;
}

Batch cosine_head_backward(const Batch& f_n, const Batch& cos_theta, const Batch& d_cos, const CentroidSet& centroids) {
  // d cos_j / d f = a_j / (|f||a_j|) - cos_j f / |f|^2
  const Eigen::MatrixXd& a = centroids.vectors();
  const Eigen::VectorXd a_norm = a.rowwise().norm();
  const Eigen::MatrixXd a_unit = a_norm.cwiseInverse().asDiagonal() * a;
  Batch d_f = Batch::Zero(f_n.rows(), f_n.cols());
  for (Eigen::Index i = 0; i < f_n.rows(); ++i) {
    const double fn = f_n.row(i).norm();
    if (!(fn > 0.0)) continue;
    const double weighted = d_cos.row(i).dot(cos_theta.row(i));
    d_f.row(i) = (d_cos.row(i) * a_unit) / fn - (weighted / (fn * fn)) * f_n.row(i);
  }
  return d_f;
}

ForwardResult NetworkModel::infer(const Batch& x) const {
  if (x.cols() != config_.input_shape.size())
    throw ShapeMismatch("input has " + std::to_string(x.cols()) + " features, network expects " +
                        std::to_string(config_.input_shape.size()));
  Batch h = x;
  for (const auto& l : layers_) h = l->infer(h);
  ForwardResult r;
  r.f_n = fc1_->infer(h);
  r.f_m = std::move(h);
  r.cos_theta = cosine_head(r.f_n, centroids_, &r.degenerate);
  return r;
}

ForwardResult NetworkModel::forward_train(const Batch& x) {
  if (x.cols() != config_.input_shape.size())
    throw ShapeMismatch("input has " + std::to_string(x.cols()) + " features, network expects " +
                        std::to_string(config_.input_shape.size()));
  Batch h = x;
  for (auto& l : layers_) h = l->forward_train(h);
  ForwardResult r;
  r.f_n = fc1_->forward_train(h);
  r.f_m = std::move(h);
  r.cos_theta = cosine_head(r.f_n, centroids_, &r.degenerate);
  return r;
}

void NetworkModel::backward(const Batch& d_fn) {
  Batch g = fc1_->backward(d_fn);
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
}

std::vector<ParamRef> NetworkModel::parameters() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    for (auto& p : layers_[i]->params(layer_names_[i])) out.push_back(p);
  for (auto& p : fc1_->params("fc1")) out.push_back(p);
  return out;
}

void NetworkModel::zero_grad() {
  for (auto& p : parameters())
    if (p.grad) p.grad->setZero();
}

LossBreakdown loss_total(NetworkModel& model, const ForwardResult& out, std::span<const int> labels,
                         const LossConfig& loss) {
  loss.validate();
  model.zero_grad();
  LossBreakdown b;
  const BatchLoss am = loss_am(out.cos_theta, labels, loss.scale, loss.margin);
  b.am = am.value;
  Batch d_fn = cosine_head_backward(out.f_n, out.cos_theta, am.grad, model.centroids());
  if (loss.mse_weight > 0.0) {
    const BatchLoss mse = loss_mse(out.f_n, labels, model.centroids());
    b.mse = mse.value;
    d_fn += loss.mse_weight * mse.grad;
  }
  model.backward(d_fn);
  if (loss.lin_ind_weight > 0.0) {
    const MatrixLoss lin = loss_lin_ind(model.fc1().weight());
    b.lin_ind = lin.value;
    for (auto& p : model.fc1().params("fc1"))
      if (p.name == "fc1.weight") *p.grad += loss.lin_ind_weight * lin.grad;
  }
  b.total = b.am + loss.mse_weight * b.mse + loss.lin_ind_weight * b.lin_ind;
  return b;
}

// ---------------------------------------------------------------- training

int checkpoint_epoch(const NetworkConfig& config) {
  return std::clamp(static_cast<int>(std::lround(config.checkpoint_fraction * config.epochs)), 1,
                    std::max(1, config.epochs));
}

std::filesystem::path checkpoint_name(int epoch) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "checkpoint_epoch%03d.pjod", epoch);
  return buf;
}

TrainReport train(NetworkModel& model, const Dataset& data, const LossConfig& loss, const TrainOptions& opts) {
  const NetworkConfig& cfg = model.config();
  loss.validate();
  if (data.empty()) throw EmptyInput("training set is empty");
  if (data.features.cols() != cfg.input_shape.size()) throw ShapeMismatch("training data width does not match network input");
  for (int y : data.labels)
    if (y < 0 || y >= cfg.class_count) throw InvalidArgument("training label " + std::to_string(y) + " out of range");

  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), 0);

  auto params = model.parameters();
  std::vector<Eigen::MatrixXd> velocity;
  for (const auto& p : params) velocity.push_back(Eigen::MatrixXd::Zero(p.value->rows(), p.value->cols()));

  // Batch boundaries; a trailing singleton batch is folded into the previous one.
  const Eigen::Index n = data.size();
  const Eigen::Index bs = cfg.batch_size;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> spans;
  for (Eigen::Index s = 0; s < n; s += bs) spans.emplace_back(s, std::min(n, s + bs));
  if (spans.size() > 1 && spans.back().second - spans.back().first < 2) {
    spans[spans.size() - 2].second = n;
    spans.pop_back();
  }

  const int ckpt_epoch = checkpoint_epoch(cfg);
  TrainReport report;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = cfg.lr.at_epoch(epoch, cfg.epochs);
    EpochStats st;
    st.epoch = epoch + 1;
    st.learning_rate = lr;
    double correct = 0.0;
    for (std::size_t bi = 0; bi < spans.size(); ++bi) {
      const auto [lo, hi] = spans[bi];
      Batch x(hi - lo, data.features.cols());
      std::vector<int> y(static_cast<std::size_t>(hi - lo));
      for (Eigen::Index k = lo; k < hi; ++k) {
        x.row(k - lo) = data.features.row(order[static_cast<std::size_t>(k)]);
        y[static_cast<std::size_t>(k - lo)] = data.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])];
      }
      const ForwardResult out = model.forward_train(x);
      const LossBreakdown b = loss_total(model, out, y, loss);
      if (!std::isfinite(b.total))
        throw NumericalError("training diverged at epoch " + std::to_string(epoch + 1) + ", batch " +
                             std::to_string(bi) + ": loss=" + std::to_string(b.total) + " (am=" +
                             std::to_string(b.am) + ", mse=" + std::to_string(b.mse) +
                             ", lin_ind=" + std::to_string(b.lin_ind) + ", lr=" + std::to_string(lr) + ")");
      const double w = static_cast<double>(hi - lo);
      st.total += w * b.total;
      st.am += w * b.am;
      st.mse += w * b.mse;
      st.lin_ind += w * b.lin_ind;
      for (Eigen::Index k = 0; k < out.cos_theta.rows(); ++k) {
        Eigen::Index arg = 0;
        out.cos_theta.row(k).maxCoeff(&arg);
        if (arg == y[static_cast<std::size_t>(k)]) correct += 1.0;
      }
      for (std::size_t p = 0; p < params.size(); ++p) {
        if (!params[p].grad) continue;
        Eigen::MatrixXd g = *params[p].grad;
        if (cfg.weight_decay > 0.0) g += cfg.weight_decay * *params[p].value;
        velocity[p] = cfg.momentum * velocity[p] + g;
        *params[p].value -= lr * velocity[p];
      }
    }
    const double dn = static_cast<double>(n);
    st.total /= dn;
    st.am /= dn;
    st.mse /= dn;
    st.lin_ind /= dn;
    st.accuracy = correct / dn;
    report.epochs.push_back(st);
    if (opts.log)
      *opts.log << "epoch " << st.epoch << "/" << cfg.epochs << " lr=" << lr << " loss=" << st.total
                << " am=" << st.am << " mse=" << st.mse << " lin_ind=" << st.lin_ind << " acc=" << st.accuracy
                << "\n";
    if (opts.checkpoint_dir && epoch + 1 == ckpt_epoch) {
      const auto path = *opts.checkpoint_dir / checkpoint_name(ckpt_epoch);
      save_checkpoint(model, path);
      report.checkpoints.push_back(path);
    }
  }
  if (opts.checkpoint_dir) {
    const auto path = *opts.checkpoint_dir / kFinalCheckpointName;
    save_checkpoint(model, path);
    report.checkpoints.push_back(path);
  }
  return report;
}

std::string TrainReport::to_text() const {
  std::ostringstream os;
  os << "epochs: " << epochs.size() << "\n";
  if (!epochs.empty()) {
    const auto& last = epochs.back();
    os << "final_loss: " << fmt_double(last.total) << "\n"
       << "final_loss_am: " << fmt_double(last.am) << "\n"
       << "final_loss_mse: " << fmt_double(last.mse) << "\n"
       << "final_loss_lin_ind: " << fmt_double(last.lin_ind) << "\n"
       << "final_train_accuracy: " << fmt_double(last.accuracy) << "\n";
  }
  for (const auto& c : checkpoints) os << "checkpoint: " << c.filename().string() << "\n";
  return os.str();
}

std::string TrainReport::to_csv() const {
  std::ostringstream os;
  os << "epoch,learning_rate,loss,loss_am,loss_mse,loss_lin_ind,train_accuracy\n";
  char buf[256];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", e.epoch, e.learning_rate, e.total, e.am, e.mse,
                  e.lin_ind, e.accuracy);
    os << buf;
  }
  return os.str();
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr char kMagic[] = "PJOD";
constexpr std::uint32_t kVersion = 1;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void put_tensor(bin::Writer& w, const std::string& name, const Eigen::MatrixXd& m) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.bytes(name);
  w.u32(2);
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  const RowMajor rm = m;
  w.f64s(std::span<const double>(rm.data(), static_cast<std::size_t>(rm.size())));
}

struct RawTensor {
  std::vector<std::uint32_t> dims;
  std::vector<double> data;
};

}  // namespace

void save_checkpoint(const NetworkModel& model, const std::filesystem::path& path) {
  bin::Writer w;
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kVersion);
  std::string cfg = model.config().serialize();
  cfg += "centroid_generator=" + std::to_string(static_cast<int>(model.centroids().generator())) + "\n";
  w.u32(static_cast<std::uint32_t>(cfg.size()));
  w.bytes(cfg);
  // parameters() only hands out references; nothing is modified here.
  auto params = const_cast<NetworkModel&>(model).parameters();
  w.u32(static_cast<std::uint32_t>(params.size() + 1));
  for (const auto& p : params) put_tensor(w, p.name, *p.value);
  put_tensor(w, "centroids", model.centroids().vectors());
  w.save(path);
}

NetworkModel load_checkpoint(const std::filesystem::path& path) {
  auto r = bin::Reader::open(path);
  const std::string where = path.string();
  if (r.bytes(4) != std::string_view(kMagic, 4)) throw VersionMismatch(where + ": not a checkpoint file");
  if (const auto v = r.u32(); v != kVersion)
    throw VersionMismatch(where + ": unsupported checkpoint version " + std::to_string(v));
  const std::uint32_t cfg_len = r.u32();
  const std::string cfg_text = r.bytes(cfg_len);

  int generator = 0;
  std::string net_text;
  for (const auto& line : split_on(cfg_text, '\n')) {
    if (line.rfind("centroid_generator=", 0) == 0) {
      generator = to_int(line.substr(19), "centroid_generator");
    } else if (!line.empty()) {
      net_text += line + "\n";
    }
  }
  NetworkConfig cfg = NetworkConfig::deserialize(net_text);

  std::map<std::string, RawTensor> tensors;
  const std::uint32_t count = r.u32();
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::string name = r.bytes(r.u32());
    RawTensor raw;
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw MalformedFile(where + ": implausible tensor rank");
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      raw.dims.push_back(r.u32());
      total *= raw.dims.back();
    }
    if (total * sizeof(double) > r.remaining()) throw MalformedFile(where + ": truncated tensor '" + name + "'");
    raw.data.resize(total);
    r.f64s(raw.data);
    tensors[name] = std::move(raw);
  }
  if (!r.at_end()) throw MalformedFile(where + ": trailing bytes");

  const auto as_matrix = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw ArchitectureMismatch(where + ": missing tensor '" + name + "'");
    const RawTensor& t = it->second;
    if (t.dims.size() != 2 || t.dims[0] != rows || t.dims[1] != cols)
      throw ArchitectureMismatch(where + ": tensor '" + name + "' has the wrong shape");
    return Eigen::MatrixXd(Eigen::Map<const RowMajor>(t.data.data(), rows, cols));
  };

  const auto cent_it = tensors.find("centroids");
  if (cent_it == tensors.end() || cent_it->second.dims.size() != 2)
    throw ArchitectureMismatch(where + ": missing centroid tensor");
  Eigen::MatrixXd cvec = as_matrix("centroids", cent_it->second.dims[0], cent_it->second.dims[1]);
  std::optional<CentroidSet> centroids;
  try {
    centroids.emplace(std::move(cvec), static_cast<CentroidGenerator>(generator));
  } catch (const InvalidArgument& e) {
    throw MalformedFile(where + ": " + e.what());
  }

  NetworkModel model = [&] {
    try {
      return NetworkModel(cfg, *centroids);
    } catch (const InvalidArgument& e) {
      throw MalformedFile(where + ": " + e.what());
    }
  }();
  auto params = model.parameters();
  if (params.size() + 1 != tensors.size()) throw ArchitectureMismatch(where + ": tensor count does not match architecture");
  for (auto& p : params) *p.value = as_matrix(p.name, p.value->rows(), p.value->cols());
  return model;
}

NetworkModel load_checkpoint(const std::filesystem::path& path, const CentroidSet& expected) {
  NetworkModel model = load_checkpoint(path);
  const CentroidSet& stored = model.centroids();
  if (stored.feature_dim() != expected.feature_dim())
    throw ArchitectureMismatch(path.string() + ": checkpoint pedcc_dim " + std::to_string(stored.feature_dim()) +
                               " does not match centroid dimension " + std::to_string(expected.feature_dim()));
  if (stored.class_count() != expected.class_count())
    throw ArchitectureMismatch(path.string() + ": checkpoint class count does not match centroids");
  if (stored.vectors() != expected.vectors())
    throw ArchitectureMismatch(path.string() + ": checkpoint was trained against different centroids");
  return model;
}

}  // namespace projood
