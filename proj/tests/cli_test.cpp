#include "sapx/cli.hpp"

#include <gtest/gtest.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace sapx;

namespace {

fs::path scratch() {
  static int counter = 0;
  auto p = fs::temp_directory_path() /
           ("sapx_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  int code = -1;
  std::string out, err;
  fs::path dir() const {
    std::string d = out;
    while (!d.empty() && d.back() == '\n') d.pop_back();
    return d;
  }
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

const std::string kStd = std::string(SAPX_SOURCE_DIR) + "/tools/std.json";

}  // namespace

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(cli::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(cli::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Cli, SpectralWritesOneRowAndManifest) {
  const auto root = scratch();
  auto r = run({"spectral", "--q", "5", "--gens", kStd, "--out", root.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto dir = r.dir();
  ASSERT_TRUE(fs::exists(dir / "manifest.json"));
  EXPECT_FALSE(fs::exists(dir / "manifest.json.tmp"));
  const auto csv = lines(slurp(dir / "gap.csv"));
  ASSERT_EQ(csv.size(), 2u);
  EXPECT_EQ(csv[1].substr(0, 8), "5,14400,");

  const auto man = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(man["subcommand"], "spectral");
  EXPECT_EQ(man["version"], cli::kVersion);
  EXPECT_EQ(man["config"]["--q"], "5");
  EXPECT_EQ(man["config"]["--gens"], kStd);
  EXPECT_TRUE(man["wall_seconds"].is_number());
  ASSERT_EQ(man["outputs"].size(), 2u);
  for (const auto& o : man["outputs"]) {
    const std::string body = slurp(dir / o["file"].get<std::string>());
    EXPECT_EQ(o["sha256"], cli::sha256_hex(body));
    EXPECT_EQ(o["bytes"], std::to_string(body.size()));
  }
}

TEST(Cli, UsageErrorsExit64) {
  const auto root = scratch().string();
  EXPECT_EQ(run({"spectral", "--q", "5", "--bogus", "--out", root}).code, 64);
  EXPECT_EQ(run({}).code, 64);
  EXPECT_EQ(run({"frobnicate"}).code, 64);
  EXPECT_EQ(run({"spectral", "--out", root}).code, 64);  // --q is required
  EXPECT_EQ(run({"spectral", "--q", "5", "--gens", "/nonexistent.json", "--out", root}).code, 64);
  EXPECT_EQ(run({"nonconc", "--event", "e7", "--out", root}).code, 64);
  EXPECT_EQ(run({"lemma-check", "--lemma", "42", "--out", root}).code, 64);
  EXPECT_EQ(run({"lemma-check", "--lemma", "1946", "--p", "4", "--out", root}).code, 64);
  EXPECT_TRUE(fs::is_empty(root));
}

TEST(Cli, BadJsonIsAConfigError) {
  const auto root = scratch();
  std::ofstream(root / "bad.json") << "[[1, 2";
  EXPECT_EQ(run({"growth", "--set", (root / "bad.json").string(), "--q1", "5", "--out", root.string()}).code, 64);
  std::ofstream(root / "det.json") << "[[[2, 0], [0, 1]]]";
  EXPECT_EQ(run({"growth", "--set", (root / "det.json").string(), "--q1", "5", "--out", root.string()}).code, 64);
}

TEST(Cli, RangesNeedForce) {
  const auto root = scratch().string();
  EXPECT_EQ(run({"approxhom", "--epsilon", "0.01", "--out", root}).code, 64);
  auto r = run({"approxhom", "--epsilon", "0.01", "--force", "--out", root});
  EXPECT_NE(r.code, 64) << r.err;
  const auto man = nlohmann::json::parse(slurp(r.dir() / "manifest.json"));
  EXPECT_EQ(man["config"]["--force"], "true");
  EXPECT_EQ(run({"spectral", "--q", "65", "--out", root}).code, 64);
}

TEST(Cli, RuntimeFailureExits1) {
  const auto root = scratch().string();
  EXPECT_EQ(run({"spectral", "--q", "5", "--cap", "10", "--out", root}).code, 1);
}

// Pairs are (|Lambda(3)/Lambda(81)|)^2 = (3^9)^2.
TEST(Cli, CommutatorSweepSummary) {
  const auto root = scratch().string();
  auto r = run({"lemma-check", "--lemma", "1946", "--p", "3", "--depth", "4", "--out", root});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(r.dir() / "lemma.csv"), "p,n,pairs,violations\n3,4,387420489,0\n");
}

TEST(Cli, BracketInstancesAllCover) {
  const auto root = scratch().string();
  auto r = run({"lemma-check", "--lemma", "bracket", "--q", "60", "--trials", "50", "--out", root});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(slurp(r.dir() / "lemma.csv")).size(), 51u);
}

TEST(Cli, FailedVerificationExits2) {
  const auto root = scratch().string();
  auto r = run({"lemma-check", "--lemma", "amplify", "--p", "2", "--out", root});
  EXPECT_EQ(r.code, 2);
  const auto man = nlohmann::json::parse(slurp(r.dir() / "manifest.json"));
  EXPECT_EQ(man["exit_code"], 2);
  EXPECT_EQ(run({"lemma-check", "--lemma", "amplify", "--p", "3", "--out", root}).code, 0);
  // Density 0.1 mod 31 misses the size hypothesis.
  EXPECT_EQ(run({"addcomb", "--q", "31", "--density", "0.1", "--trials", "2", "--out", root}).code, 2);
}

TEST(Cli, RerunsGiveIdenticalBodies) {
  const auto root = scratch().string();
  const std::vector<std::vector<std::string>> cmds = {
      {"addcomb", "--q", "29", "--trials", "4", "--seed", "7"},
      {"approxhom", "--family", "sl2", "--n1", "6", "--n2", "3", "--corrupt", "2", "--seed", "3"},
      {"nonconc", "--event", "integral:1,0,0,0,0,0,0,0:1", "--lmin", "1", "--lmax", "4", "--samples", "500"},
      {"glue", "--q1", "1", "--q2", "5", "--q3", "5"},
  };
  for (auto args : cmds) {
    args.insert(args.end(), {"--out", root});
    auto a = run(args), b = run(args);
    ASSERT_EQ(a.code, b.code) << args[0];
    ASSERT_NE(a.dir(), b.dir());
    const auto ma = nlohmann::json::parse(slurp(a.dir() / "manifest.json"));
    const auto mb = nlohmann::json::parse(slurp(b.dir() / "manifest.json"));
    EXPECT_EQ(ma["outputs"], mb["outputs"]) << args[0];
    for (const auto& o : ma["outputs"]) {
      const std::string f = o["file"];
      EXPECT_EQ(slurp(a.dir() / f), slurp(b.dir() / f)) << args[0] << " " << f;
    }
  }
}

TEST(Cli, EnvironmentSetsOutputRoot) {
  const auto root = scratch();
  ::setenv(cli::kOutputRootEnv, root.string().c_str(), 1);
  auto r = run({"addcomb", "--q", "7", "--trials", "1", "--threads", "1"});
  ::unsetenv(cli::kOutputRootEnv);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.dir().parent_path(), root);
  const auto man = nlohmann::json::parse(slurp(r.dir() / "manifest.json"));
  EXPECT_EQ(man["threads"], "1");
}

TEST(Cli, GlueReportUsesDecimalStrings) {
  const auto root = scratch().string();
  auto r = run({"glue", "--q1", "1", "--q2", "5", "--q3", "5", "--b", "diagonal", "--out", root});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(r.dir() / "glue.json"));
  EXPECT_EQ(j["status"], "NO_EXPANSION");
  EXPECT_TRUE(j["achieved"]["q3_star"].is_string());
  EXPECT_TRUE(j["kernel"]["size"].is_string());
  EXPECT_EQ(run({"glue", "--q1", "1", "--q2", "7", "--q3", "5", "--b", "diagonal", "--out", root}).code, 64);
}

TEST(Cli, GrowthOfSanovSetMod7) {
  const auto root = scratch();
  std::ofstream(root / "set.json") << "[[[1,2],[0,1]],[[1,0],[2,1]],[[1,-2],[0,1]],[[1,0],[-2,1]]]";
  auto r = run({"growth", "--set", (root / "set.json").string(), "--q1", "7", "--kmax", "3", "--out",
                root.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  // No identity in A, so |A| = 4; A^2 is the 12 reduced words of length 2 plus 1.
  EXPECT_EQ(slurp(r.dir() / "growth.csv").substr(0, 18), "l,size\n1,4\n2,13\n3,");
}

#ifdef SAPX_CLI_BINARY
TEST(CliBinary, ExitCodesFromProcess) {
  const auto root = scratch().string();
  auto code = [&](const std::string& args) {
    const int s = std::system((std::string(SAPX_CLI_BINARY) + " " + args + " --out " + root + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(s);
  };
  EXPECT_EQ(code("spectral --q 5 --gens " + kStd), 0);
  EXPECT_EQ(code("spectral --q 5 --unknown-flag"), 64);
  EXPECT_EQ(code("lemma-check --lemma amplify --p 2"), 2);
}
#endif
