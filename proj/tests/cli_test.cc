// Copyright 2026 The fusekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "fusekit/cli.h"

#include <fstream>
#include <sstream>

#include "fusekit/fusion.h"
#include "fusekit/tensor_store.h"
#include "gtest/gtest.h"
#include "json.hpp"
#include "test_util.h"

namespace fusekit {
namespace {

using nlohmann::json;
using testing::TempDir;

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
  json report() const { return json::parse(out); }
};

CliResult run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  CliResult r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string str(const std::filesystem::path& p) { return p.string(); }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ASSERT_EQ(run({"gen-fixtures", "checkpoints", "-o", str(dir_ / "ckpt"), "--cosine",
                   "0.95", "--seed", "1"})
                  .code,
              0);
    a_ = str(dir_ / "ckpt" / "a.fta");
    b_ = str(dir_ / "ckpt" / "b.fta");
  }

  TempDir dir_;
  std::string a_, b_;
};

TEST_F(CliTest, FuseEchoesAlphaAndWritesTheFusion) {
  const std::string out = str(dir_ / "fused.fta");
  CliResult r = run({"fuse", a_, b_, "--alpha", "0.1", "-o", out, "--json", "-"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json report = r.report();
  EXPECT_EQ(report["config"]["alpha"].get<double>(), 0.1);
  EXPECT_EQ(report["alpha"].get<double>(), 0.1);
  EXPECT_EQ(read_archive(out), fuse_pair(read_archive(a_), read_archive(b_), 0.1));
}

TEST_F(CliTest, JsonFileAlongsideTable) {
  const std::string json_path = str(dir_ / "report.json");
  CliResult r = run({"cossim", a_, b_, "--json", json_path});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("cosine similarity"), std::string::npos);
  std::ifstream in(json_path);
  const json report = json::parse(in);
  EXPECT_NEAR(report["cosine"].get<double>(), 0.95, 1e-6);
  EXPECT_TRUE(report["warning"].is_null());
}

TEST_F(CliTest, SimilarityWarning) {
  CliResult same = run({"cossim", a_, a_});
  EXPECT_EQ(same.code, 0);
  EXPECT_EQ(same.err, "");

  ASSERT_EQ(run({"gen-fixtures", "checkpoints", "-o", str(dir_ / "far"), "--cosine", "0.90"})
                .code,
            0);
  CliResult far =
      run({"cossim", str(dir_ / "far" / "a.fta"), str(dir_ / "far" / "b.fta"), "--json", "-"});
  EXPECT_EQ(far.code, 0);
  EXPECT_NE(far.err.find("warning: "), std::string::npos);
  EXPECT_FALSE(far.report()["warning"].is_null());
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"fuse", a_, b_, "--alpha", "1.5", "-o", str(dir_ / "x.fta")}).code, 2);
  EXPECT_EQ(run({"fuse", a_, b_, "--alpha", "1.5", "--extrapolate", "-o",
                 str(dir_ / "x.fta")})
                .code,
            0);
  EXPECT_EQ(run({"fuse", a_, b_, "--coeffs", "0.5,0.6", "-o", str(dir_ / "x.fta")}).code, 2);
  EXPECT_EQ(run({"fuse", a_, str(dir_ / "missing.fta"), "--alpha", "0.5", "-o",
                 str(dir_ / "x.fta")})
                .code,
            1);

  ASSERT_EQ(run({"gen-fixtures", "checkpoints", "-o", str(dir_ / "wide"), "--layer-width",
                 "8"})
                .code,
            0);
  CliResult incompatible = run({"fuse", a_, str(dir_ / "wide" / "a.fta"), "--alpha", "0.5",
                                "-o", str(dir_ / "x.fta")});
  EXPECT_EQ(incompatible.code, 2);
  EXPECT_NE(incompatible.err.find("error [incompatible]"), std::string::npos)
      << incompatible.err;
}

TEST_F(CliTest, SwaIsTheEqualAverage) {
  const std::string out = str(dir_ / "swa.fta");
  ASSERT_EQ(run({"swa", a_, b_, "-o", out}).code, 0);
  EXPECT_EQ(read_archive(out), fuse_pair(read_archive(a_), read_archive(b_), 0.5));
}

TEST_F(CliTest, SearchDefaultsInConfigEcho) {
  const std::string table = str(dir_ / "scores.csv");
  {
    std::ofstream csv(table);
    csv << "alpha,score\n";
    for (int k = 0; k <= 20; ++k) csv << k / 20.0 << "," << (k == 7 ? 0.9 : 0.5) << "\n";
  }
  CliResult r = run({"search", "--table", table, "--json", "-"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json report = r.report();
  EXPECT_EQ(report["config"]["trials"].get<int>(), 50);
  EXPECT_EQ(report["config"]["step"].get<double>(), 0.05);
  EXPECT_EQ(report["strategy"], "grid");
  EXPECT_EQ(report["result"]["evaluations"].size(), 21u);
  EXPECT_DOUBLE_EQ(report["result"]["best"][0].get<double>(), 0.35);
}

TEST_F(CliTest, SearchSimplexInTableMode) {
  const std::string table = str(dir_ / "scores3.csv");
  {
    std::ofstream csv(table);
    for (int i = 0; i <= 20; ++i) {
      for (int j = 0; i + j <= 20; ++j) {
        csv << i / 20.0 << "," << j / 20.0 << "," << (20 - i - j) / 20.0 << ","
            << -(std::abs(i - 10) + std::abs(j - 6)) << "\n";
      }
    }
  }
  CliResult r = run({"search", "--table", table, "--seed", "3", "--json", "-"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json report = r.report();
  EXPECT_EQ(report["strategy"], "random_simplex");
  EXPECT_EQ(report["result"]["evaluations"].size(), 50u);
  EXPECT_EQ(run({"search", "--table", table, "--seed", "3", "--json", "-"}).out, r.out);
}

TEST_F(CliTest, MetricsJsonIsDeterministic) {
  const std::string fx = str(dir_ / "pred");
  ASSERT_EQ(run({"gen-fixtures", "predictions", "-o", fx, "--fractions", "0.6,0.6",
                 "--overlap", "0.2", "--images", "1", "--image-height", "10", "--image-width",
                 "10"})
                .code,
            0);
  const std::vector<std::string> args = {"metrics", fx + "/model_0", "--gt", fx + "/gt",
                                         "--json", "-"};
  CliResult first = run(args), second = run(args);
  ASSERT_EQ(first.code, 0) << first.err;
  EXPECT_EQ(first.out, second.out);
  EXPECT_DOUBLE_EQ(first.report()["scores"]["pixel_accuracy"].get<double>(), 0.6);

  CliResult oracle = run({"oracle", fx + "/model_0", fx + "/model_1", "--gt", fx + "/gt",
                          "--json", "-"});
  ASSERT_EQ(oracle.code, 0) << oracle.err;
  EXPECT_DOUBLE_EQ(oracle.report()["oracle"]["pixel_accuracy"].get<double>(), 1.0);
}

TEST_F(CliTest, CalibrateAndEnsemble) {
  const std::string fx = str(dir_ / "cal");
  ASSERT_EQ(run({"gen-fixtures", "calibration", "-o", fx, "--bin-accuracy",
                 "0.05,0.15,0.25,0.35,0.45,0.55,0.65,0.75,0.85,0.95"})
                .code,
            0);
  CliResult r = run({"calibrate", fx + "/pred", "--gt", fx + "/gt", "--json", "-"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_LT(r.report()["calibration"]["ece"].get<double>(), 1e-9);

  const std::string soft = str(dir_ / "soft");
  ASSERT_EQ(run({"gen-fixtures", "predictions", "-o", soft, "--with-probs"}).code, 0);
  CliResult e = run({"ensemble", soft + "/model_0", soft + "/model_1", "-o",
                     str(dir_ / "ens"), "--gt", soft + "/gt", "--json", "-"});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(e.report()["members"].get<int>(), 2);
  EXPECT_TRUE(e.report().contains("calibration"));
}

TEST_F(CliTest, ScheduleFromConfigFile) {
  const std::string config = str(dir_ / "schedule.json");
  std::ofstream(config) << R"({"iterations_per_cycle": 50, "cycles": 10, "cycle_ends": true})";
  CliResult r = run({"schedule", "--config", config, "--json", "-"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json report = r.report();
  EXPECT_EQ(report["total_weights"].get<int>(), 11);
  EXPECT_EQ(report["marked_rows"].get<int>(), 10);
  EXPECT_EQ(report["config"]["schedule"]["start_lr"].get<double>(), 0.005);

  // Explicit flags win over the file.
  CliResult flags = run({"schedule", "--config", config, "--cycles", "2", "--json", "-"});
  ASSERT_EQ(flags.code, 0) << flags.err;
  EXPECT_EQ(flags.report()["total_weights"].get<int>(), 3);

  std::ofstream(config) << "[1, 2]";
  EXPECT_EQ(run({"schedule", "--config", config}).code, 2);
}

TEST_F(CliTest, GenFixturesRejectsInfeasible) {
  CliResult r = run({"gen-fixtures", "predictions", "-o", str(dir_ / "bad"), "--fractions",
                     "0.6,0.6", "--overlap", "0.1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("infeasible"), std::string::npos) << r.err;
}

TEST(CliBinaryTest, ExitStatusFromTheExecutable) {
  testing::ProcessResult help = testing::run_process({FUSEKIT_CLI_PATH, "--help"});
  EXPECT_EQ(help.exit_code, 0);
  EXPECT_NE(help.out.find("fuse"), std::string::npos);
  EXPECT_EQ(testing::run_process({FUSEKIT_CLI_PATH, "cossim", "/nonexistent/a.fta",
                                  "/nonexistent/b.fta"})
                .exit_code,
            1);
  EXPECT_EQ(testing::run_process({FUSEKIT_CLI_PATH, "fuse"}).exit_code, 2);
}

}  // namespace
}  // namespace fusekit
