#include <string>

#include <gtest/gtest.h>

#include "projood/config.hpp"
#include "projood/error.hpp"

using namespace projood;

namespace {

const std::string kMinimal = R"(
[experiment]
seed = 3

[network]
input = 2
architecture = dense:16
class_count = 4
pedcc_dim = 4

[data.id]
kind = gaussian_mixture
samples = 200

[data.reference_ood]
kind = shifted_cluster

[data.ood.ring]
kind = uniform_ring
)";

std::string with(const std::string& extra) { return kMinimal + extra; }

// Adds a key line to a section, creating the section when absent.
std::string set(const std::string& section, const std::string& line) {
  std::string text = kMinimal;
  const std::string header = "[" + section + "]\n";
  const auto at = text.find(header);
  if (at == std::string::npos) return text + header + line + "\n";
  return text.insert(at + header.size(), line + "\n");
}

}  // namespace

TEST(Config, MinimalFileUsesDefaults) {
  const ExperimentConfig c = parse_experiment(kMinimal, "/base");
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.network.pedcc_dim, 4);
  EXPECT_EQ(c.loss.scale, 5.5);
  EXPECT_EQ(c.loss.margin, 0.35);
  EXPECT_EQ(c.network.checkpoint_fraction, 0.7);
  EXPECT_EQ(c.train_fraction, 0.8);
  EXPECT_EQ(c.fusion.kind, FusionKind::RbfSvm);
  ASSERT_EQ(c.test_ood.size(), 1u);
  EXPECT_EQ(c.test_ood[0].name, "ring");
  EXPECT_EQ(c.test_ood[0].kind, DatasetKind::UniformRing);
  EXPECT_EQ(c.bias_mode, BiasMode::Exclude);
}

TEST(Config, SectionsAndPaths) {
  const ExperimentConfig c = parse_experiment(with(R"(
[data.ood.digits]
kind = idx_images
images = idx/a-images
labels = /abs/a-labels
offset = 10
limit = 5

[fusion]
kind = logreg
logreg_penalty = 0.25

[loss]
lin_ind_weight = 10
)"),
                                              "/base");
  const DatasetSpec& d = c.test_ood[1];
  EXPECT_EQ(d.images_path, "/base/idx/a-images");
  EXPECT_EQ(*d.labels_path, "/abs/a-labels");
  EXPECT_EQ(d.offset, 10);
  EXPECT_EQ(d.limit, 5);
  EXPECT_EQ(c.fusion.kind, FusionKind::LogReg);
  EXPECT_EQ(c.fusion.logreg.penalty, 0.25);
  EXPECT_EQ(c.loss.lin_ind_weight, 10.0);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_experiment(set("experiment", "surprise = 1")), InvalidArgument);
  EXPECT_THROW(parse_experiment(with("[mystery]\na = 1\n")), InvalidArgument);
  EXPECT_THROW(parse_experiment(set("network", "epochs = ten")), InvalidArgument);
  EXPECT_THROW(parse_experiment(set("network", "final_bn_relu = maybe")), InvalidArgument);
  EXPECT_THROW(parse_experiment(with("[data.ood.id_test]\nkind = uniform_noise\n")), InvalidArgument);
  EXPECT_THROW(parse_experiment(with("[fusion]\nkind = forest\n")), InvalidArgument);
  EXPECT_THROW(parse_experiment(with("[fusion]\nC = 0\n")), InvalidArgument);
  EXPECT_THROW(parse_experiment(with("[loss]\nscale = -1\n")), InvalidArgument);
  EXPECT_THROW(load_experiment("/nonexistent/projood.ini"), InvalidArgument);
}

TEST(Config, BooleansAcceptCommonSpellings) {
  for (const char* v : {"true", "on", "yes", "1"})
    EXPECT_TRUE(parse_experiment(set("network", std::string("final_bn_relu = ") + v)).network.final_bn_relu);
  for (const char* v : {"false", "off", "no", "0"})
    EXPECT_FALSE(parse_experiment(set("network", std::string("final_bn_relu = ") + v)).network.final_bn_relu);
}

TEST(Config, SubSeedsAreStableAndDistinct) {
  EXPECT_EQ(derive_seed(7, "train"), derive_seed(7, "train"));
  EXPECT_NE(derive_seed(7, "train"), derive_seed(7, "split"));
  EXPECT_NE(derive_seed(7, "train"), derive_seed(8, "train"));
  const ExperimentConfig c = parse_experiment(kMinimal);
  EXPECT_EQ(c.sub_seed("fusion"), derive_seed(3, "fusion"));
}
