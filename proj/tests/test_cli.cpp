#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <string>

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int status = -1;
  std::string output;
};

// Runs the CLI inside `cwd`, capturing stdout and stderr.
CliResult cli(const std::string& args, const fs::path& cwd) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" ENDREG_CLI_PATH "' " + args + " 2>&1";
  CliResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::set<fs::path> tree(const fs::path& root) {
  std::set<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    out.insert(fs::relative(e.path(), root));
  return out;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("endreg_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "small.cfg") << "generator=gaussian_clusters\n"
                                         "n_samples=150\n"
                                         "eval_samples=90\n"
                                         "n_targets=3\n"
                                         "n_biases=3\n"
                                         "epochs=2\n"
                                         "batch_size=16\n"
                                         "seeds=0,1\n";
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GradcheckSucceeds) {
  const CliResult r = cli("gradcheck", dir_);
  EXPECT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("\"passed\": true"), std::string::npos);
}

TEST_F(Cli, FlagBeatsConfigFile) {
  std::ofstream(dir_ / "a.cfg") << "alpha=0.1\n";
  const CliResult r = cli("gradcheck -c a.cfg --alpha 0.3 --gradcheck_networks 1", dir_);
  EXPECT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("\"alpha\": 0.3"), std::string::npos) << r.output;
  const CliResult s = cli("gradcheck -c a.cfg --set alpha=0.25 --gradcheck_networks 1", dir_);
  EXPECT_NE(s.output.find("\"alpha\": 0.25"), std::string::npos) << s.output;
}

TEST_F(Cli, ExitCodes) {
  CliResult r = cli("train -c small.cfg --train_data missing.endd", dir_);
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.output.find("config error"), std::string::npos);
  EXPECT_NE(r.output.find("train_data"), std::string::npos);
  EXPECT_EQ(std::count(r.output.begin(), r.output.end(), '\n'), 1);
  EXPECT_EQ(cli("generate --rho 1.5", dir_).status, 2);
  EXPECT_EQ(cli("generate --set nokey=1", dir_).status, 2);
  EXPECT_EQ(cli("generate --set novalue", dir_).status, 1);
  EXPECT_EQ(cli("frobnicate", dir_).status, 1);
  EXPECT_EQ(cli("", dir_).status, 1);
  EXPECT_EQ(cli("eval -c small.cfg", dir_).status, 2);
  std::ofstream(dir_ / "junk.endd") << "not a dataset";
  std::ofstream(dir_ / "junk.endm") << "not a model";
  EXPECT_EQ(cli("eval --checkpoint junk.endm --eval_data junk.endd", dir_).status, 4);
}

TEST_F(Cli, GenerateIsDeterministic) {
  ASSERT_EQ(cli("generate -c small.cfg --out_dir a", dir_).status, 0);
  ASSERT_EQ(cli("generate -c small.cfg --out_dir b", dir_).status, 0);
  for (const char* f : {"train.endd", "biased_test.endd", "unbiased_test.endd",
                        "bias_conflicting.endd"}) {
    ASSERT_TRUE(fs::exists(dir_ / "a" / f)) << f;
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
}

TEST_F(Cli, TrainEvalAblateStayInOutDir) {
  const auto before = tree(dir_);
  ASSERT_EQ(cli("generate -c small.cfg --out_dir data", dir_).status, 0);
  CliResult r = cli("train -c small.cfg --out_dir run --train_data data/train.endd "
              "--biased_data data/biased_test.endd --unbiased_data data/unbiased_test.endd",
              dir_);
  ASSERT_EQ(r.status, 0) << r.output;
  for (const char* f : {"metrics.csv", "summary.json", "model.endm"})
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
  r = cli("eval --out_dir ev --checkpoint run/model.endm --eval_data data/unbiased_test.endd", dir_);
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("\"unbiased_avg_accuracy\""), std::string::npos);
  r = cli("ablate -c small.cfg --out_dir abl", dir_);
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir_ / "abl" / "ablation.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "abl" / "metrics_full_seed1.csv"));

  std::set<std::string> tops;
  for (const auto& p : tree(dir_))
    if (!before.count(p)) tops.insert(p.begin()->string());
  EXPECT_EQ(tops, (std::set<std::string>{"data", "run", "abl"}));
}

TEST_F(Cli, TrainIsIdempotent) {
  ASSERT_EQ(cli("train -c small.cfg --out_dir r1", dir_).status, 0);
  ASSERT_EQ(cli("train -c small.cfg --out_dir r2", dir_).status, 0);
  EXPECT_EQ(slurp(dir_ / "r1" / "metrics.csv"), slurp(dir_ / "r2" / "metrics.csv"));
  EXPECT_EQ(slurp(dir_ / "r1" / "model.endm"), slurp(dir_ / "r2" / "model.endm"));
}

TEST_F(Cli, HelpListsSchemaFlags) {
  const CliResult r = cli("train --help", dir_);
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.output.find("--rho"), std::string::npos);
  EXPECT_NE(r.output.find("--alpha"), std::string::npos);
}
