#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "stub_server.hpp"
#include "test_util.hpp"
#include "webphish/cli.hpp"

using namespace webphish;
using webphish::testing::StubServer;
using webphish::testing::TempDir;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = webphish::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(invoke({}).code, 2);
  EXPECT_EQ(invoke({"bogus"}).code, 2);
  const auto r = invoke({"train", "--manifest", "x"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error: usage: ", 0), 0u);
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
  EXPECT_EQ(invoke({"train", "--manifest", "x", "--out", "y", "--variant", "both"}).code, 2);
  // Overrides are validated before any input is read.
  EXPECT_EQ(invoke({"train", "--manifest", "missing.jsonl", "--out", "y", "--fc-units", "1,2,3,4"}).code, 2);
  EXPECT_EQ(invoke({"train", "--manifest", "missing.jsonl", "--out", "y"}).code, 2);  // no --val
}

TEST(Cli, HelpDocumentsEveryFlag) {
  for (const char* sub : {"fetch", "prepare", "train", "eval", "predict", "finetune", "features", "baseline",
                          "project", "gen-synthetic"}) {
    const auto r = invoke({sub, "--help"});
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_NE(r.out.find(std::string("webphish ") + sub), std::string::npos) << sub;
  }
  const auto train = invoke({"train", "--help"}).out;
  for (const char* flag : {"--variant", "--conv-layers", "--fc-units", "--filters", "--no-embedding", "--epochs",
                           "--patience", "--lr", "[0.0015]", "[20]"})
    EXPECT_NE(train.find(flag), std::string::npos) << flag;
}

TEST(Cli, DataAndNumericErrorCodes) {
  TempDir dir;
  const auto missing = invoke({"eval", "--model", (dir.path / "none.ckpt").string(), "--manifest", "x"});
  EXPECT_EQ(missing.code, 3);
  std::ofstream(dir.path / "bad.ckpt") << "this is plainly not a model checkpoint file\n";
  const auto bad = invoke({"predict", "--model", (dir.path / "bad.ckpt").string(), "--url", "a.com"});
  EXPECT_EQ(bad.code, 3);
  EXPECT_EQ(bad.err, "error: checkpoint_format: not a webphish checkpoint\n");
  std::ofstream(dir.path / "f.csv") << "id,label,a,b\n" << std::string("x,1,1,1\n") << "y,0,1,1\n";
  const auto pca = invoke({"project", "--input", (dir.path / "f.csv").string(), "--method", "pca", "--out",
                        (dir.path / "p.csv").string()});
  EXPECT_EQ(pca.code, 3);  // zero variance
  std::ostringstream line_rows;
  line_rows << "id,label,a\n";
  for (int i = 0; i < 30; ++i) line_rows << "r" << i << ",1," << i << "\n";
  std::ofstream(dir.path / "g.csv") << line_rows.str();
  EXPECT_EQ(invoke({"project", "--input", (dir.path / "g.csv").string(), "--method", "pca", "--out",
                 (dir.path / "p.csv").string()})
                .code,
            3);  // one column
}

TEST(Cli, PipelineIsDeterministicAndDoesNotMutateInputs) {
  TempDir dir;
  const auto d = dir.path.string();
  ASSERT_EQ(invoke({"--seed", "3", "gen-synthetic", "--out", d + "/syn.jsonl", "--count", "220"}).code, 0);
  ASSERT_EQ(invoke({"--seed", "7", "prepare", "--manifest", d + "/syn.jsonl", "--out", d + "/split"}).code, 0);
  const auto before = slurp(d + "/split/train.jsonl");

  const std::vector<std::string> train{"--seed",      "42",       "train",     "--manifest", d + "/split/train.jsonl",
                                       "--val",       d + "/split/validation.jsonl", "--html-len", "300",
                                       "--url-len",   "60",       "--epochs",  "4"};
  auto a = train, b = train;
  a.insert(a.end(), {"--out", d + "/a.ckpt", "--history", d + "/a.csv"});
  b.insert(b.end(), {"--out", d + "/b.ckpt", "--history", d + "/b.csv"});
  ASSERT_EQ(invoke(a).code, 0);
  ASSERT_EQ(invoke(b).code, 0);
  EXPECT_EQ(slurp(d + "/a.csv"), slurp(d + "/b.csv"));
  EXPECT_EQ(slurp(d + "/a.ckpt"), slurp(d + "/b.ckpt"));
  EXPECT_EQ(slurp(d + "/split/train.jsonl"), before);

  const auto ev = invoke({"eval", "--model", d + "/a.ckpt", "--manifest", d + "/split/test.jsonl", "--roc", d + "/roc.csv"});
  ASSERT_EQ(ev.code, 0) << ev.err;
  const auto report = nlohmann::json::parse(ev.out);
  EXPECT_EQ(report["confusion"]["tp"].get<int>() + report["confusion"]["fn"].get<int>() +
                report["confusion"]["tn"].get<int>() + report["confusion"]["fp"].get<int>(),
            22);
  EXPECT_TRUE(report.contains("auc"));
  EXPECT_EQ(slurp(d + "/roc.csv").rfind("threshold,fpr,tpr\ninf,0,0\n", 0), 0u);

  const auto pred = invoke({"predict", "--model", d + "/a.ckpt", "--manifest", d + "/split/test.jsonl"});
  EXPECT_EQ(std::count(pred.out.begin(), pred.out.end(), '\n'), 22);

  ASSERT_EQ(invoke({"features", "--manifest", d + "/split/train.jsonl", "--out", d + "/tr.csv"}).code, 0);
  ASSERT_EQ(invoke({"features", "--manifest", d + "/split/test.jsonl", "--out", d + "/te.csv"}).code, 0);
  const auto rf = invoke({"baseline", "--train", d + "/tr.csv", "--test", d + "/te.csv", "--importance", d + "/imp.csv"});
  ASSERT_EQ(rf.code, 0) << rf.err;
  EXPECT_EQ(rf.out, invoke({"baseline", "--train", d + "/tr.csv", "--test", d + "/te.csv"}).out);
  EXPECT_EQ(slurp(d + "/imp.csv").rfind("feature_name,importance\n", 0), 0u);
  EXPECT_EQ(invoke({"baseline", "--method", "logreg", "--train", d + "/tr.csv", "--test", d + "/te.csv"}).code, 0);

  const auto proj = invoke({"project", "--model", d + "/a.ckpt", "--manifest", d + "/split/train.jsonl", "--out",
                         d + "/p.csv", "--concat-out", d + "/c.csv", "--iterations", "300"});
  ASSERT_EQ(proj.code, 0) << proj.err;
  EXPECT_EQ(slurp(d + "/p.csv").rfind("id,label,x,y\n", 0), 0u);
  EXPECT_EQ(slurp(d + "/c.csv").rfind("id,label,c0,c1,", 0), 0u);

  const auto ft = invoke({"finetune", "--model", d + "/a.ckpt", "--manifest", d + "/split/train.jsonl",
                       "--no-early-stopping", "--epochs", "1", "--out", d + "/ft.ckpt"});
  EXPECT_EQ(ft.code, 0) << ft.err;
}

TEST(Cli, ConfigFileWithFlagPrecedence) {
  TempDir dir;
  const auto d = dir.path.string();
  std::ofstream(d + "/run.ini") << "seed=5\n[gen-synthetic]\ncount=40\nprofile=shifted\n";
  ASSERT_EQ(invoke({"--config", d + "/run.ini", "gen-synthetic", "--out", d + "/a.jsonl"}).out, "samples: 40\n");
  ASSERT_EQ(invoke({"--config", d + "/run.ini", "gen-synthetic", "--out", d + "/b.jsonl", "--count", "30"}).out,
            "samples: 30\n");
  ASSERT_EQ(invoke({"--seed", "5", "gen-synthetic", "--out", d + "/c.jsonl", "--count", "40", "--profile", "shifted"}).code,
            0);
  EXPECT_EQ(slurp(d + "/a.jsonl"), slurp(d + "/c.jsonl"));
}

TEST(Cli, FetchWritesManifestAndReport) {
  StubServer stub;
  TempDir dir;
  const auto d = dir.path.string();
  std::ofstream(d + "/urls.txt") << "# stub\n" << stub.url("/ok") << "\n" << stub.url("/missing") << "\n";
  const auto r = invoke({"fetch", "--urls", d + "/urls.txt", "--label", "legitimate", "--out", d + "/corpus",
                      "--rate-limit", "0", "--per-host-interval", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = nlohmann::json::parse(r.out);
  EXPECT_EQ(summary["succeeded"], 1);
  EXPECT_EQ(summary["errors"]["http_error"], 1);
  EXPECT_TRUE(std::filesystem::exists(d + "/corpus/fetch_report.json"));
  EXPECT_EQ(load_manifest(d + "/corpus/manifest.jsonl").samples.size(), 1u);
}
