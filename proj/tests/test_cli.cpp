#include <gtest/gtest.h>

#include <sys/wait.h>

#include <filesystem>
#include <fstream>

#include "../tools/cdkt_cli.hpp"

namespace fs = std::filesystem;
using cdkt::cli::run_cli;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& content) {
  std::ofstream(p, std::ios::binary) << content;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("cdkt_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Small planted dataset split into <prefix>.train/.test/.users plus its world.
  void make_dataset(const std::string& prefix = "data") {
    ASSERT_EQ(cli({"generate", "--out", path("all.cascades"), "--users", "60", "--cascades", "80", "--seed", "3",
                   "--world-out", path("world.model")})
                  .code,
              0);
    ASSERT_EQ(cli({"prepare", "--in", path("all.cascades"), "--out", path(prefix), "--top-users", "60",
                   "--test-fraction", "0.25", "--seed", "4"})
                  .code,
              0);
  }

  fs::path dir_;
};

std::optional<double> report_value(const std::string& report, const std::string& key) {
  std::istringstream in(report);
  std::string line;
  while (std::getline(in, line))
    if (line.starts_with(key + "=")) return cdkt::text::parse_real(line.substr(key.size() + 1));
  return std::nullopt;
}

}  // namespace

TEST_F(CliTest, TrainWritesModelHeaderAndTrace) {
  make_dataset();
  const auto r = cli({"train", "--variant", "cdkt", "--dim", "50", "--iters", "3000", "--seed", "1", "--in",
                      path("data.train"), "--out", path("model.txt"), "--users", path("data.users"),
                      "--probe-interval", "1000"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto model = slurp(path("model.txt"));
  EXPECT_NE(model.find("\nvariant=CDKT dim=50 "), std::string::npos) << model.substr(0, 80);
  EXPECT_TRUE(r.out.starts_with("iterations=3000 loss="));
  EXPECT_NE(r.out.find(" tau="), std::string::npos);
  const auto trace = slurp(path("model.txt.trace"));
  EXPECT_TRUE(trace.starts_with("iteration\tloss\ttau\n0\t"));
}

TEST_F(CliTest, MissingRequiredFlagIsNamed) {
  const auto r = cli({"train", "--out", path("m.txt")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--in"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(path("m.txt")));
}

TEST_F(CliTest, BadValuesAreRejected) {
  make_dataset();
  const std::vector<std::vector<std::string>> bad{
      {"--variant", "xyz"}, {"--tau-update", "sideways"}, {"--dim", "0"}, {"--alpha0", "-1"}, {"--dim", "abc"}};
  for (const auto& extra : bad) {
    std::vector<std::string> args{"train", "--in", path("data.train"), "--out", path("m.txt")};
    args.insert(args.end(), extra.begin(), extra.end());
    const auto r = cli(args);
    EXPECT_EQ(r.code, 1) << extra[0];
    EXPECT_FALSE(r.err.empty());
  }
  EXPECT_FALSE(fs::exists(path("m.txt")));
}

TEST_F(CliTest, TauUpdateModeChangesThresholdDynamics) {
  spit(path("sep.cascades"), "c1\ts:0,a:1\n");
  spit(path("sep.users"), "a\nb\ns\n");
  auto train_tau = [&](const std::string& mode) {
    const auto r = cli({"train", "--in", path("sep.cascades"), "--users", path("sep.users"), "--out",
                        path(mode + ".model"), "--dim", "1", "--iters", "5000", "--probe-interval", "500",
                        "--tau-update=" + mode});
    EXPECT_EQ(r.code, 0) << r.err;
    std::istringstream in(slurp(path(mode + ".model")));
    return cdkt::read_model(in).tau();
  };
  const double gradient = train_tau("gradient");
  const double paper = train_tau("paper");
  EXPECT_GT(gradient, paper);
  EXPECT_EQ(paper, 0.0);
}

TEST_F(CliTest, PerfectModelScoresMapOne) {
  make_dataset();
  const auto r = cli({"evaluate", "--model", path("world.model"), "--in", path("data.test"), "--out",
                      path("report.txt"), "--metrics", "map,pr"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = slurp(path("report.txt"));
  EXPECT_EQ(report_value(report, "map"), 1.0) << report;
  EXPECT_NE(report.find("[pr_curve]"), std::string::npos);
  EXPECT_EQ(r.out, "map=1\n");
}

TEST_F(CliTest, PrecisionAtKLargerThanPoolFails) {
  spit(path("tiny.cascades"), "c1\ts:0,a:1\n");
  spit(path("tiny.model"), "CDKT-MODEL v1\nvariant=CDKT dim=1 users=3 tau=2\na\t1\nb\t2\ns\t0\n");
  const auto r = cli({"evaluate", "--model", path("tiny.model"), "--in", path("tiny.cascades"), "--out",
                      path("report.txt"), "--metrics", "p@50"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("pool has 2"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(path("report.txt")));

  const auto ok = cli({"evaluate", "--model", path("tiny.model"), "--in", path("tiny.cascades"), "--out",
                       path("report.txt"), "--metrics", "p@k", "--k", "1,2"});
  ASSERT_EQ(ok.code, 0) << ok.err;
  EXPECT_EQ(ok.out, "p@1=1\np@2=0.5\n");
}

TEST_F(CliTest, UnknownUserInDatasetFails) {
  spit(path("tiny.model"), "CDKT-MODEL v1\nvariant=CDK dim=1 users=2 tau=none\na\t1\ns\t0\n");
  spit(path("other.cascades"), "c1\ts:0,a:1,zed:2\n");
  for (const std::string cmd : {"evaluate", "predict"}) {
    const auto r = cli({cmd, "--model", path("tiny.model"), "--in", path("other.cascades"), "--out", path("x")});
    EXPECT_EQ(r.code, 1) << cmd;
    EXPECT_NE(r.err.find("'zed'"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(path("x")));
  }
}

TEST_F(CliTest, MalformedInputReportsLine) {
  spit(path("bad.cascades"), "c1\ts:0,a:1\nc2\ta:1,b:2\n");
  const auto r = cli({"train", "--in", path("bad.cascades"), "--out", path("m.txt"), "--iters", "10"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(path("m.txt")));
  EXPECT_FALSE(fs::exists(path("m.txt.trace")));
}

TEST_F(CliTest, RerunsAreByteIdentical) {
  make_dataset();
  std::vector<std::string> outputs;
  for (int run = 0; run < 2; ++run) {
    const std::string tag = std::to_string(run);
    ASSERT_EQ(cli({"train", "--in", path("data.train"), "--users", path("data.users"), "--out",
                   path("m" + tag), "--dim", "8", "--iters", "20000", "--probe-interval", "5000"})
                  .code,
              0);
    ASSERT_EQ(cli({"predict", "--model", path("m" + tag), "--in", path("data.test"), "--out", path("p" + tag),
                   "--threads", run == 0 ? "1" : "3"})
                  .code,
              0);
    ASSERT_EQ(cli({"evaluate", "--model", path("m" + tag), "--in", path("data.test"), "--out", path("r" + tag),
                   "--k", "5,10"})
                  .code,
              0);
  }
  for (const std::string stem : {"m", "m", "p", "r"}) EXPECT_EQ(slurp(path(stem + "0")), slurp(path(stem + "1")));
  EXPECT_EQ(slurp(path("m0.trace")), slurp(path("m1.trace")));
}

TEST_F(CliTest, ConfigFileWithFlagOverrides) {
  make_dataset();
  spit(path("run.conf"), "# training setup\ndim = 7\niters=500\nprobe-interval=100\nvariant=cdk\n");
  const auto r = cli({"train", "--config", path("run.conf"), "--in", path("data.train"), "--users",
                      path("data.users"), "--out", path("m.txt"), "--dim", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(slurp(path("m.txt")).find("\nvariant=CDK dim=5 "), std::string::npos);
  EXPECT_TRUE(r.out.starts_with("iterations=500 "));

  spit(path("eval.conf"), "metrics=p@k\nk=1,2,3\n");
  const auto e = cli({"evaluate", "--config", path("eval.conf"), "--model", path("m.txt"), "--in",
                      path("data.test"), "--out", path("r.txt"), "--k", "4"});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_TRUE(e.out.starts_with("p@4=")) << e.out;
  EXPECT_EQ(e.out.find("p@1="), std::string::npos);

  spit(path("broken.conf"), "dim 7\n");
  const auto b = cli({"train", "--config", path("broken.conf"), "--in", path("data.train"), "--out", path("z")});
  EXPECT_EQ(b.code, 1);
  EXPECT_NE(b.err.find("line 1"), std::string::npos);
}

TEST_F(CliTest, PrepareWritesSplitFiles) {
  make_dataset("split");
  std::istringstream train(slurp(path("split.train"))), test(slurp(path("split.test")));
  const auto tr = cdkt::parse_cascades(train), te = cdkt::parse_cascades(test);
  EXPECT_FALSE(tr.empty());
  EXPECT_FALSE(te.empty());
  for (const auto& c : tr) EXPECT_GE(c.size(), 2u);
  EXPECT_FALSE(slurp(path("split.users")).empty());
}

TEST_F(CliTest, IcGeneration) {
  spit(path("g.tsv"), "a\tb\t1\nb\tc\t1\n");
  const auto r = cli({"generate", "--world", "ic", "--graph", path("g.tsv"), "--cascades", "5", "--out",
                      path("ic.cascades")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(slurp(path("ic.cascades")));
  for (const auto& c : cdkt::parse_cascades(in)) {
    if (c.source == "a") {
      EXPECT_EQ(c.infections.back().time, 2.0);
    }
  }
}

TEST_F(CliTest, HelpExitsZero) {
  EXPECT_EQ(cli({"--help"}).code, 0);
  EXPECT_EQ(cli({"train", "--help"}).code, 0);
  EXPECT_EQ(cli({}).code, 1);
}

TEST(CliBinary, ExitCodes) {
  const std::string bin = CDKT_CLI_PATH;
  const int ok = std::system((bin + " --help > /dev/null").c_str());
  EXPECT_EQ(WEXITSTATUS(ok), 0);
  const int bad = std::system((bin + " train --out /dev/null 2> /dev/null").c_str());
  EXPECT_EQ(WEXITSTATUS(bad), 1);
}
