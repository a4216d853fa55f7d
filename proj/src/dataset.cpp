#include "projood/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <tuple>

#include "projood/binary_io.hpp"
#include "projood/error.hpp"

namespace projood {

bool Dataset::is_ood() const {
  return !labels.empty() && std::all_of(labels.begin(), labels.end(), [](int l) { return l == kOodLabel; });
}

DatasetKind parse_dataset_kind(const std::string& s) {
  if (s == "gaussian_mixture") return DatasetKind::GaussianMixture;
  if (s == "two_moons") return DatasetKind::TwoMoons;
  if (s == "uniform_ring") return DatasetKind::UniformRing;
  if (s == "shifted_cluster") return DatasetKind::ShiftedCluster;
  if (s == "uniform_noise") return DatasetKind::UniformNoise;
  if (s == "idx_images") return DatasetKind::IdxImages;
  throw InvalidArgument("unknown dataset kind '" + s + "'");
}

std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::GaussianMixture: return "gaussian_mixture";
    case DatasetKind::TwoMoons: return "two_moons";
    case DatasetKind::UniformRing: return "uniform_ring";
    case DatasetKind::ShiftedCluster: return "shifted_cluster";
    case DatasetKind::UniformNoise: return "uniform_noise";
    case DatasetKind::IdxImages: return "idx_images";
  }
  return "?";
}

namespace {

Dataset blank(const DatasetSpec& spec) {
  Dataset d;
  d.name = spec.name.empty() ? to_string(spec.kind) : spec.name;
  d.shape = {spec.dim, 1, 1};
  d.features = Batch::Zero(spec.samples, spec.dim);
  d.labels.assign(static_cast<std::size_t>(spec.samples), kOodLabel);
  return d;
}

Eigen::RowVectorXd random_direction(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::RowVectorXd v(dim);
  do {
    for (int j = 0; j < dim; ++j) v(j) = normal(rng);
  } while (v.norm() < 1e-12);
  return v.normalized();
}

}  // namespace

Dataset generate_synthetic(const DatasetSpec& spec) {
  if (spec.samples < 0) throw InvalidArgument("samples must be >= 0");
  if (spec.dim < 1) throw InvalidArgument("dim must be >= 1");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Dataset d = blank(spec);

  switch (spec.kind) {
    case DatasetKind::GaussianMixture: {
      if (spec.class_count < 2) throw InvalidArgument("gaussian_mixture needs class_count >= 2");
      if (spec.dim < 2) throw InvalidArgument("gaussian_mixture needs dim >= 2");
      if (!(spec.cluster_std >= 0.0)) throw InvalidArgument("cluster_std must be >= 0");
      for (int i = 0; i < spec.samples; ++i) {
        const int label = i % spec.class_count;
        const double angle = 2.0 * std::numbers::pi * label / spec.class_count;
        for (int j = 0; j < spec.dim; ++j) d.features(i, j) = spec.cluster_std * normal(rng);
        d.features(i, 0) += spec.cluster_radius * std::cos(angle);
        d.features(i, 1) += spec.cluster_radius * std::sin(angle);
        d.labels[static_cast<std::size_t>(i)] = label;
      }
      break;
    }
    case DatasetKind::TwoMoons: {
      if (spec.dim < 2) throw InvalidArgument("two_moons needs dim >= 2");
      for (int i = 0; i < spec.samples; ++i) {
        const int label = i % 2;
        const double t = std::numbers::pi * unit(rng);
        double x = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
        double y = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
        d.features(i, 0) = x + spec.moon_noise * normal(rng);
        d.features(i, 1) = y + spec.moon_noise * normal(rng);
        for (int j = 2; j < spec.dim; ++j) d.features(i, j) = spec.moon_noise * normal(rng);
        d.labels[static_cast<std::size_t>(i)] = label;
      }
      break;
    }
    case DatasetKind::UniformRing: {
      if (!(spec.ring_inner >= 0.0 && spec.ring_outer > spec.ring_inner))
        throw InvalidArgument("uniform_ring needs 0 <= ring_inner < ring_outer");
      // Radius density proportional to r^(dim-1) gives a uniform shell.
      const double lo = std::pow(spec.ring_inner, spec.dim);
      const double hi = std::pow(spec.ring_outer, spec.dim);
      for (int i = 0; i < spec.samples; ++i) {
        const Eigen::RowVectorXd dir = random_direction(spec.dim, rng);
        const double r = std::pow(lo + (hi - lo) * unit(rng), 1.0 / spec.dim);
        d.features.row(i) = r * dir;
      }
      break;
    }
    case DatasetKind::ShiftedCluster: {
      if (static_cast<int>(spec.center.size()) > spec.dim)
        throw InvalidArgument("shifted_cluster center has more coordinates than dim");
      for (int i = 0; i < spec.samples; ++i)
        for (int j = 0; j < spec.dim; ++j) {
          const double c = j < static_cast<int>(spec.center.size()) ? spec.center[static_cast<std::size_t>(j)] : 0.0;
          d.features(i, j) = c + spec.spread * normal(rng);
        }
      break;
    }
    case DatasetKind::UniformNoise: {
      if (!(spec.high > spec.low)) throw InvalidArgument("uniform_noise needs low < high");
      for (int i = 0; i < spec.samples; ++i)
        for (int j = 0; j < spec.dim; ++j) d.features(i, j) = spec.low + (spec.high - spec.low) * unit(rng);
      break;
    }
    case DatasetKind::IdxImages:
      throw InvalidArgument("idx_images is not a synthetic dataset kind");
  }
  return d;
}

Dataset make_dataset(const DatasetSpec& spec) {
  if (spec.kind != DatasetKind::IdxImages) return generate_synthetic(spec);
  Dataset d = load_idx(spec.images_path, spec.labels_path, spec.as_ood, spec.limit, spec.offset);
  if (!spec.name.empty()) d.name = spec.name;
  return d;
}

// ---------------------------------------------------------------- IDX

namespace {

std::uint32_t read_be32(const std::vector<char>& buf, std::size_t at) {
  const auto b = [&](std::size_t i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(buf[at + i])); };
  return (b(0) << 24) | (b(1) << 16) | (b(2) << 8) | b(3);
}

}  // namespace

IdxArray read_idx(const std::filesystem::path& path) {
  const std::vector<char> buf = bin::read_file(path);
  const std::string where = path.string();
  if (buf.size() < 4) throw TruncatedPayload(where + ": shorter than the IDX header");
  if (buf[0] != 0 || buf[1] != 0) throw BadMagic(where + ": IDX magic must start with two zero bytes");
  if (static_cast<unsigned char>(buf[2]) != 0x08)
    throw BadMagic(where + ": only unsigned-byte IDX data (type 0x08) is supported");
  const int ndims = static_cast<unsigned char>(buf[3]);
  if (ndims < 1) throw BadMagic(where + ": IDX dimension count must be >= 1");
  const std::size_t header = 4 + 4 * static_cast<std::size_t>(ndims);
  if (buf.size() < header) throw TruncatedPayload(where + ": truncated IDX dimension list");

  IdxArray out;
  std::size_t count = 1;
  for (int i = 0; i < ndims; ++i) {
    out.dims.push_back(read_be32(buf, 4 + 4 * static_cast<std::size_t>(i)));
    count *= out.dims.back();
  }
  if (buf.size() - header < count)
    throw TruncatedPayload(where + ": payload has " + std::to_string(buf.size() - header) + " bytes, expected " +
                           std::to_string(count));
  if (buf.size() - header > count) throw MalformedFile(where + ": trailing bytes after IDX payload");
  out.data.assign(reinterpret_cast<const std::uint8_t*>(buf.data() + header),
                  reinterpret_cast<const std::uint8_t*>(buf.data() + header + count));
  return out;
}

void write_idx(const std::filesystem::path& path, const IdxArray& array) {
  std::size_t count = 1;
  for (auto d : array.dims) count *= d;
  if (array.dims.empty() || array.dims.size() > 255) throw InvalidArgument("IDX needs 1..255 dimensions");
  if (count != array.data.size()) throw InvalidArgument("IDX dims do not match payload size");
  std::vector<char> buf{0, 0, 0x08, static_cast<char>(array.dims.size())};
  for (auto d : array.dims)
    for (int shift = 24; shift >= 0; shift -= 8) buf.push_back(static_cast<char>((d >> shift) & 0xFF));
  buf.insert(buf.end(), array.data.begin(), array.data.end());
  bin::write_file(path, buf);
}

Dataset load_idx(const std::filesystem::path& images_path, const std::optional<std::filesystem::path>& labels_path,
                 bool as_ood, int limit, int offset) {
  if (limit < 0 || offset < 0) throw InvalidArgument("limit and offset must be >= 0");
  const IdxArray images = read_idx(images_path);
  const std::size_t n = images.dims[0];
  TensorShape shape;
  switch (images.dims.size()) {
    case 1: shape = {1, 1, 1}; break;
    case 2: shape = {static_cast<int>(images.dims[1]), 1, 1}; break;
    case 3: shape = {1, static_cast<int>(images.dims[1]), static_cast<int>(images.dims[2])}; break;
    case 4:
      shape = {static_cast<int>(images.dims[1]), static_cast<int>(images.dims[2]), static_cast<int>(images.dims[3])};
      break;
    default: throw MalformedFile(images_path.string() + ": IDX image files must have 1 to 4 dimensions");
  }

  std::vector<int> labels(n, kOodLabel);
  if (labels_path && !as_ood) {
    const IdxArray lab = read_idx(*labels_path);
    if (lab.dims.size() != 1) throw MalformedFile(labels_path->string() + ": label file must be one-dimensional");
    if (lab.dims[0] != n)
      throw CountMismatch("image count " + std::to_string(n) + " does not match label count " +
                          std::to_string(lab.dims[0]));
    for (std::size_t i = 0; i < n; ++i) labels[i] = lab.data[i];
  }

  const std::size_t first = std::min(n, static_cast<std::size_t>(offset));
  const std::size_t keep = limit > 0 ? std::min(n - first, static_cast<std::size_t>(limit)) : n - first;
  const std::size_t per = static_cast<std::size_t>(shape.size());
  Dataset d;
  d.name = images_path.filename().string();
  d.shape = shape;
  d.features.resize(static_cast<Eigen::Index>(keep), static_cast<Eigen::Index>(per));
  for (std::size_t i = 0; i < keep; ++i)
    for (std::size_t j = 0; j < per; ++j)
      d.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          images.data[(first + i) * per + j] / 255.0;
  d.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(first),
                  labels.begin() + static_cast<std::ptrdiff_t>(first + keep));
  return d;
}

// ---------------------------------------------------------------- split

Dataset subset(const Dataset& data, const std::vector<Eigen::Index>& indices, std::string name) {
  Dataset out;
  out.name = name.empty() ? data.name : std::move(name);
  out.shape = data.shape;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), data.features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = data.features.row(indices[i]);
    out.labels.push_back(data.labels[static_cast<std::size_t>(indices[i])]);
  }
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& data, std::pair<double, double> fractions, std::uint64_t seed) {
  const auto [f_train, f_test] = fractions;
  if (!(f_train >= 0.0 && f_test >= 0.0) || std::abs(f_train + f_test - 1.0) > 1e-9)
    throw InvalidArgument("split fractions must be non-negative and sum to 1");

  // Shuffle within each label, then order everything by the fractional rank
  // (r + 0.5) / class_size so any prefix is stratified to within one sample.
  std::map<int, std::vector<Eigen::Index>> by_label;
  for (Eigen::Index i = 0; i < data.size(); ++i) by_label[data.labels[static_cast<std::size_t>(i)]].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::tuple<double, int, Eigen::Index>> keyed;
  keyed.reserve(static_cast<std::size_t>(data.size()));
  for (auto& [label, idx] : by_label) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t r = 0; r < idx.size(); ++r)
      keyed.emplace_back((static_cast<double>(r) + 0.5) / static_cast<double>(idx.size()), label, idx[r]);
  }
  std::sort(keyed.begin(), keyed.end());

  const auto n_train = static_cast<std::size_t>(std::llround(f_train * static_cast<double>(data.size())));
  std::vector<Eigen::Index> train_idx, test_idx;
  for (std::size_t i = 0; i < keyed.size(); ++i) (i < n_train ? train_idx : test_idx).push_back(std::get<2>(keyed[i]));
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {subset(data, train_idx, data.name + ".train"), subset(data, test_idx, data.name + ".test")};
}

}  // namespace projood
