#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "projood/binary_io.hpp"
#include "projood/dataset.hpp"
#include "projood/error.hpp"
#include "projood/losses.hpp"
#include "projood/network.hpp"

using namespace projood;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "projood_unit" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Eigen::MatrixXd* param(NetworkModel& m, const std::string& name) {
  for (auto& p : m.parameters())
    if (p.name == name) return p.value;
  return nullptr;
}

Batch random_batch(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Batch b(rows, cols);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = n(rng);
  return b;
}

NetworkConfig small_config() {
  NetworkConfig c;
  c.input_shape = {2, 1, 1};
  c.architecture = {{LayerKind::Dense, 16}, {LayerKind::Dense, 8}};
  c.class_count = 4;
  c.pedcc_dim = 4;
  c.epochs = 100;
  c.batch_size = 32;
  c.lr.initial = 0.01;
  c.seed = 3;
  return c;
}

Dataset gaussian4(int samples, std::uint64_t seed) {
  DatasetSpec s;
  s.kind = DatasetKind::GaussianMixture;
  s.samples = samples;
  s.seed = seed;
  return generate_synthetic(s);
}

}  // namespace

// ---------------------------------------------------------------- losses

TEST(LossAm, SingleSampleHandValue) {
  Batch cos(1, 2);
  cos << 1.0, 0.0;
  const std::vector<int> y{0};
  EXPECT_NEAR(loss_am(cos, y, 1.0, 0.0).value, std::log(1.0 + std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(loss_am(cos, y, 1.0, 0.0).value, 0.31326, 1e-5);
}

TEST(LossAm, ZeroMarginUnitScaleIsCrossEntropy) {
  const Batch cos = random_batch(5, 3, 1, 0.4);
  const std::vector<int> y{0, 2, 1, 1, 0};
  double ce = 0.0;
  for (int i = 0; i < 5; ++i) {
    double z = 0.0;
    for (int j = 0; j < 3; ++j) z += std::exp(cos(i, j));
    ce -= std::log(std::exp(cos(i, y[static_cast<std::size_t>(i)])) / z);
  }
  EXPECT_NEAR(loss_am(cos, y, 1.0, 0.0).value, ce / 5.0, 1e-12);
}

TEST(LossAm, DecreasesAsTrueCosineGrows) {
  Batch cos(1, 3);
  cos << 0.1, 0.3, -0.2;
  const std::vector<int> y{0};
  double prev = loss_am(cos, y, 5.5, 0.35).value;
  for (int k = 0; k < 8; ++k) {
    cos(0, 0) += 0.1;
    const double now = loss_am(cos, y, 5.5, 0.35).value;
    EXPECT_TRUE(std::isfinite(now));
    EXPECT_LT(now, prev);
    prev = now;
  }
}

TEST(LossAm, NonFiniteInputThrows) {
  Batch cos(1, 2);
  cos << std::nan(""), 0.0;
  const std::vector<int> y{0};
  EXPECT_THROW(loss_am(cos, y, 1.0, 0.0), Error);
}

TEST(LossMse, ExactCentroidsGiveZero) {
  const CentroidSet a = generate_simplex(3, 2);
  Batch f(3, 2);
  for (int i = 0; i < 3; ++i) f.row(i) = a.vectors().row(i);
  const std::vector<int> y{0, 1, 2};
  EXPECT_NEAR(loss_mse(f, y, a).value, 0.0, 1e-15);
}

TEST(LossMse, UnitDisplacement) {
  Eigen::MatrixXd v(2, 2);
  v << 1, 0, -1, 0;
  const CentroidSet a(v, CentroidGenerator::Simplex);
  Batch f = Batch::Zero(1, 2);
  const std::vector<int> y{0};
  const BatchLoss l = loss_mse(f, y, a);
  EXPECT_DOUBLE_EQ(l.value, 1.0);
  EXPECT_DOUBLE_EQ(l.grad(0, 0), -2.0);
}

TEST(LossLinInd, OrthonormalColumnsGiveZero) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Identity(5, 3);
  EXPECT_NEAR(loss_lin_ind(w).value, 0.0, 1e-15);
}

TEST(LossLinInd, IdenticalUnitColumns) {
  Eigen::MatrixXd w(3, 2);
  w << 0.6, 0.6, 0.8, 0.8, 0.0, 0.0;
  EXPECT_NEAR(loss_lin_ind(w).value, 1.0, 1e-12);
}

TEST(LossLinInd, ZeroIffPairwiseOrthogonal) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    // Orthogonal but unequal-length columns: still zero.
    Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(Eigen::MatrixXd(random_batch(6, 4, rng()))).householderQ();
    Eigen::MatrixXd w = q.leftCols(4) * Eigen::VectorXd::LinSpaced(4, 0.5, 3.0).asDiagonal();
    EXPECT_LT(loss_lin_ind(w).value, 1e-10);
    w(0, 0) += 0.1;
    EXPECT_GT(loss_lin_ind(w).value, 1e-10);
  }
}

TEST(LossLinInd, ZeroColumnThrows) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Identity(3, 2);
  w.col(1).setZero();
  EXPECT_THROW(loss_lin_ind(w), InvalidArgument);
}

// ---------------------------------------------------------------- forward

TEST(Forward, IdentityToy) {
  NetworkConfig c;
  c.input_shape = {3, 1, 1};
  c.architecture = {{LayerKind::Dense, 3}};
  c.class_count = 2;
  c.pedcc_dim = 2;
  NetworkModel m(c, generate_simplex(2, 2));
  *param(m, "layer0.weight") = Eigen::MatrixXd::Identity(3, 3);
  param(m, "layer0.bias")->setZero();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(3, 2);
  w(0, 0) = w(1, 1) = 1.0;
  m.fc1().weight() = w;
  m.fc1().bias().setZero();
  const ForwardResult r = m.infer(Batch::Ones(1, 3));
  EXPECT_DOUBLE_EQ(r.f_m(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(r.f_n(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(r.f_n(0, 1), 1.0);
}

TEST(Forward, ScalarCentroidCosines) {
  const CentroidSet a = generate_simplex(2, 1);
  Batch f(1, 1);
  f << 0.5;
  const Batch cos = cosine_head(f, a);
  EXPECT_DOUBLE_EQ(cos(0, 0) * a.vectors()(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(cos(0, 0), -cos(0, 1));
}

TEST(Forward, ZeroFeatureIsFlaggedDegenerate) {
  const CentroidSet a = generate_simplex(3, 2);
  std::vector<std::uint8_t> flag;
  const Batch cos = cosine_head(Batch::Zero(2, 2), a, &flag);
  EXPECT_EQ(cos.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(flag, (std::vector<std::uint8_t>{1, 1}));
}

TEST(Forward, CosinesBoundedOnRandomInputs) {
  NetworkModel m(small_config(), generate_simplex(4, 4));
  const ForwardResult r = m.infer(random_batch(1000, 2, 5, 10.0));
  EXPECT_LE(r.cos_theta.maxCoeff(), 1.0);
  EXPECT_GE(r.cos_theta.minCoeff(), -1.0);
}

TEST(Forward, ShapeMismatchThrows) {
  NetworkModel m(small_config(), generate_simplex(4, 4));
  EXPECT_THROW(m.infer(Batch::Zero(3, 5)), ShapeMismatch);
}

TEST(Forward, WithoutFinalBnReluFmIsRawLastLayerOutput) {
  NetworkModel m(small_config(), generate_simplex(4, 4));
  const Batch x = random_batch(20, 2, 6);
  Batch h = x;
  for (const auto& l : m.feature_layers()) h = l->infer(h);
  EXPECT_EQ(m.feature_layers().back()->kind(), "dense");
  EXPECT_EQ((m.infer(x).f_m - h).cwiseAbs().maxCoeff(), 0.0);
  // Raw linear output: negative entries survive.
  EXPECT_LT(h.minCoeff(), 0.0);
}

TEST(Forward, BatchNormEvaluationIsDeterministicAffine) {
  BatchNorm bn({3, 1, 1});
  bn.forward_train(random_batch(16, 3, 7, 2.0));
  const Batch x = random_batch(5, 3, 8);
  const Batch y1 = bn.infer(x), y2 = bn.infer(x);
  EXPECT_EQ((y1 - y2).cwiseAbs().maxCoeff(), 0.0);
  // Affine: f(a x + (1-a) z) = a f(x) + (1-a) f(z).
  const Batch z = random_batch(5, 3, 9);
  const Batch mix = bn.infer(0.3 * x + 0.7 * z);
  EXPECT_LT((mix - (0.3 * y1 + 0.7 * bn.infer(z))).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LossTotal, OnlyAmWhenOtherWeightsZero) {
  NetworkModel m(small_config(), generate_simplex(4, 4));
  const Batch x = random_batch(12, 2, 10);
  const std::vector<int> y{0, 1, 2, 3, 0, 1, 2, 3, 0, 1, 2, 3};
  const ForwardResult out = m.forward_train(x);
  const LossBreakdown b = loss_total(m, out, y, {5.5, 0.35, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(b.total, loss_am(out.cos_theta, y, 5.5, 0.35).value);
}

// ---------------------------------------------------------------- training

TEST(Train, FourGaussiansReachHighTrainAccuracy) {
  NetworkModel m(small_config(), generate_simplex(4, 4));
  const TrainReport r = train(m, gaussian4(800, 11), {});
  ASSERT_EQ(r.epochs.size(), 100u);
  EXPECT_GE(r.epochs.back().accuracy, 0.97);
  for (const auto& e : r.epochs) {
    EXPECT_TRUE(std::isfinite(e.total));
    EXPECT_GE(e.accuracy, 0.0);
    EXPECT_LE(e.accuracy, 1.0);
  }
}

TEST(Train, LossDecreasesOnSeparableTwoClassData) {
  NetworkConfig c = small_config();
  c.class_count = 2;
  c.pedcc_dim = 2;
  c.epochs = 50;
  DatasetSpec s;
  s.kind = DatasetKind::GaussianMixture;
  s.class_count = 2;
  s.samples = 400;
  s.seed = 12;
  NetworkModel m(c, generate_simplex(2, 2));
  const TrainReport r = train(m, generate_synthetic(s), {});
  EXPECT_LT(r.epochs.back().total, 0.5 * r.epochs.front().total);
}

TEST(Train, SameSeedGivesBitwiseIdenticalCheckpoints) {
  NetworkConfig c = small_config();
  c.epochs = 10;
  const Dataset d = gaussian4(300, 13);
  const fs::path a = temp_dir("det_a"), b = temp_dir("det_b");
  {
    NetworkModel m(c, generate_simplex(4, 4));
    train(m, d, {}, {a, nullptr});
  }
  {
    NetworkModel m(c, generate_simplex(4, 4));
    train(m, d, {}, {b, nullptr});
  }
  for (const fs::path name : {checkpoint_name(checkpoint_epoch(c)), fs::path(kFinalCheckpointName)}) {
    ASSERT_TRUE(fs::exists(a / name)) << name;
    EXPECT_EQ(bin::read_file(a / name), bin::read_file(b / name)) << name;
  }
  EXPECT_EQ(checkpoint_epoch(c), 7);
}

TEST(Train, HugeLinearIndependenceWeightOrthogonalizesFc1) {
  NetworkConfig c = small_config();
  // The penalty gradient scales with k, so the step shrinks with it.
  c.epochs = 30;
  c.lr.initial = 1e-7;
  NetworkModel m(c, generate_simplex(4, 4));
  LossConfig l;
  l.lin_ind_weight = 1e6;
  train(m, gaussian4(400, 14), l);
  Eigen::MatrixXd w = m.fc1().weight();
  for (Eigen::Index j = 0; j < w.cols(); ++j) w.col(j).normalize();
  Eigen::MatrixXd g = w.transpose() * w;
  g.diagonal().setZero();
  EXPECT_LT(g.cwiseAbs().maxCoeff(), 0.05);
}

TEST(Train, DivergenceIsReportedAsNumericalError) {
  NetworkConfig c = small_config();
  c.lr.initial = 1e6;
  c.epochs = 5;
  NetworkModel m(c, generate_simplex(4, 4));
  EXPECT_THROW(train(m, gaussian4(200, 15), {}), NumericalError);
}

TEST(Train, LearningRateSchedule) {
  LearningRateSchedule s;
  EXPECT_DOUBLE_EQ(s.at_epoch(0, 100), 0.1);
  EXPECT_DOUBLE_EQ(s.at_epoch(29, 100), 0.1);
  EXPECT_NEAR(s.at_epoch(30, 100), 0.01, 1e-15);
  EXPECT_NEAR(s.at_epoch(60, 100), 0.001, 1e-15);
}

// ---------------------------------------------------------------- checkpoints

TEST(Checkpoint, RoundTripGivesIdenticalOutputs) {
  NetworkConfig c = small_config();
  c.final_bn_relu = true;
  c.epochs = 3;
  NetworkModel m(c, generate_simplex(4, 4));
  train(m, gaussian4(200, 16), {});
  const fs::path p = temp_dir("ckpt") / "m.pjod";
  save_checkpoint(m, p);
  const NetworkModel back = load_checkpoint(p, m.centroids());
  const Batch x = random_batch(100, 2, 17, 3.0);
  const ForwardResult a = m.infer(x), b = back.infer(x);
  EXPECT_EQ((a.f_m - b.f_m).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((a.f_n - b.f_n).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((a.cos_theta - b.cos_theta).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(back.config().serialize(), m.config().serialize());
}

TEST(Checkpoint, TruncatedIsMalformed) {
  NetworkModel m(small_config(), generate_simplex(4, 4));
  const fs::path p = temp_dir("ckpt_trunc") / "m.pjod";
  save_checkpoint(m, p);
  auto bytes = bin::read_file(p);
  bytes.resize(bytes.size() / 2);
  bin::write_file(p, bytes);
  EXPECT_THROW(load_checkpoint(p), MalformedFile);
}

TEST(Checkpoint, WrongMagicIsVersionMismatch) {
  NetworkModel m(small_config(), generate_simplex(4, 4));
  const fs::path p = temp_dir("ckpt_magic") / "m.pjod";
  save_checkpoint(m, p);
  auto bytes = bin::read_file(p);
  bytes[1] = 'Z';
  bin::write_file(p, bytes);
  EXPECT_THROW(load_checkpoint(p), VersionMismatch);
}

TEST(Checkpoint, DifferentPedccDimIsArchitectureMismatch) {
  NetworkModel m(small_config(), generate_simplex(4, 4));
  const fs::path p = temp_dir("ckpt_arch") / "m.pjod";
  save_checkpoint(m, p);
  EXPECT_THROW(load_checkpoint(p, generate_simplex(4, 5)), ArchitectureMismatch);
}

TEST(NetworkConfigText, SerializeRoundTrip) {
  NetworkConfig c = small_config();
  c.architecture = parse_architecture("conv3x3:4,maxpool2,flatten,dense:10");
  c.input_shape = parse_shape("1x8x8");
  c.final_bn_relu = true;
  c.lr.decay_at = {0.25, 0.5, 0.75};
  const NetworkConfig back = NetworkConfig::deserialize(c.serialize());
  EXPECT_EQ(back.serialize(), c.serialize());
  EXPECT_EQ(format_architecture(back.architecture), "conv3x3:4,maxpool2,flatten,dense:10");
}

TEST(NetworkConfigText, InvalidConfigsRejected) {
  NetworkConfig c = small_config();
  c.pedcc_dim = 2;  // n < c - 1
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = small_config();
  c.pedcc_dim = 8;  // m = 8 is not > n
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = small_config();
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = small_config();
  c.lr.decay_at = {1.2};
  EXPECT_THROW(c.validate(), InvalidArgument);
  EXPECT_THROW(parse_architecture("dense:0"), InvalidArgument);
  EXPECT_THROW(parse_architecture("pool"), InvalidArgument);
}
