#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>

using namespace std::string_literals;
namespace fs = std::filesystem;

namespace {

const std::string kTiny = R"(
[experiment]
seed = 5

[network]
input = 2
architecture = dense:16
class_count = 4
pedcc_dim = 4
epochs = 3
batch_size = 32
learning_rate = 0.01

[data.id]
kind = gaussian_mixture
samples = 200

[data.reference_ood]
kind = shifted_cluster
samples = 100

[data.ood.ring]
kind = uniform_ring
samples = 100
)";

fs::path work_dir() {
  const fs::path d = fs::temp_directory_path() / "projood_cli_test";
  fs::create_directories(d);
  return d;
}

fs::path write(const std::string& name, const std::string& text) {
  const fs::path p = work_dir() / name;
  std::ofstream(p) << text;
  return p;
}

int run(const std::string& args) {
  const std::string cmd = "\""s + PROJOOD_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST(Cli, FullPipelineThenEvalErrors) {
  const fs::path cfg = write("tiny.ini", kTiny);
  const fs::path out = work_dir() / "run";
  fs::remove_all(out);
  ASSERT_EQ(run("run --config " + q(cfg) + " --out " + q(out)), 0);
  EXPECT_TRUE(fs::exists(out / "eval" / "eval.csv"));
  EXPECT_TRUE(fs::exists(out / "fusion.pfus"));

  const fs::path id = out / "scores" / "id_test.csv";
  const fs::path empty = write("empty.csv", "");
  EXPECT_EQ(run("eval --config " + q(cfg) + " --out " + q(out) + " " + q(id) + " " + q(empty)), 2);
  EXPECT_EQ(run("eval --config " + q(cfg) + " --out " + q(out) + " --fusion " + q(work_dir() / "missing.pfus") + " " +
                q(id) + " " + q(out / "scores" / "ring.csv")),
            2);
  EXPECT_EQ(run("eval --config " + q(cfg) + " --out " + q(out) + " " + q(id) + " " + q(out / "scores" / "ring.csv")), 0);
}

TEST(Cli, InvalidConfigExitsOne) {
  const fs::path bad = write("bad.ini", kTiny + "\n[network_typo]\nx = 1\n");
  EXPECT_EQ(run("gen-centroids --config " + q(bad) + " --out " + q(work_dir() / "bad")), 1);
  EXPECT_EQ(run("gen-centroids --config " + q(work_dir() / "absent.ini")), 1);
  EXPECT_EQ(run("no-such-command"), 1);
  EXPECT_EQ(run("ablate --config " + q(write("ok.ini", kTiny)) + " --axis sideways"), 1);
}

TEST(Cli, DivergenceExitsThree) {
  std::string text = kTiny;
  text.replace(text.find("learning_rate = 0.01"), 20, "learning_rate = 1e6");
  const fs::path cfg = write("diverge.ini", text);
  EXPECT_EQ(run("train --config " + q(cfg) + " --out " + q(work_dir() / "diverge")), 3);
}

TEST(Cli, AblateBnReluGivesTwoReportsPerOodSet) {
  const fs::path cfg = write("ablate.ini", kTiny);
  const fs::path out = work_dir() / "ablate";
  fs::remove_all(out);
  ASSERT_EQ(run("ablate --config " + q(cfg) + " --out " + q(out) + " --axis bn_relu"), 0);
  std::ifstream in(out / "ablate_bn_relu" / "ablation_bn_relu.csv");
  std::string line;
  int ring_auroc = 0;
  while (std::getline(in, line))
    if (line.find(",auroc,") != std::string::npos && line.find(",ring,") != std::string::npos) ++ring_auroc;
  EXPECT_EQ(ring_auroc, 2);
}
