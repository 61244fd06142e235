#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "envpred/cli.hpp"
#include "envpred/features.hpp"
#include "envpred/model.hpp"

using namespace envpred;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int status = 0;
  std::string out;
};

CliResult run_cli(const std::vector<std::string>& args) {
  std::ostringstream captured;
  std::streambuf* old = std::cout.rdbuf(captured.rdbuf());
  CliResult r;
  r.status = cli_run(args);
  std::cout.rdbuf(old);
  r.out = captured.str();
  return r;
}

fs::path work_dir() {
  const fs::path p = fs::temp_directory_path() / "envpred_cli_tests";
  fs::create_directories(p);
  return p;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_CASE("unknown subcommands and flags fail with usage") {
  CHECK(run_cli({"frobnicate"}).status != 0);
  CHECK(run_cli({}).status != 0);
  CHECK(run_cli({"train", "--bogus-flag"}).status != 0);
}

TEST_CASE("synth-data, train, generate, eval round trip") {
  const fs::path dir = work_dir();
  const fs::path data = dir / "toy";
  const CliResult synth = run_cli({"synth-data", "--out", data.string(), "--phrases", "12",
                                   "--frames", "160", "--seed", "3"});
  REQUIRE(synth.status == 0);
  const std::string manifest = (data / "manifest.txt").string();
  const auto corpus = read_corpus(manifest);
  CHECK(corpus.size() == 12);
  CHECK(corpus[0].length() == 160);
  CHECK(corpus[0].n_bins() == 60);

  SUBCASE("training is byte-reproducible for a fixed seed") {
    const fs::path runA = dir / "runA";
    const fs::path runB = dir / "runB";
    const std::vector<std::string> base = {
        "train", "--model", "iter", "--data", manifest, "--seed", "5",
        "--updates", "3", "--eval-every", "2", "--preset", "small",
        "--n-iter", "2", "--batch", "4"};
    auto argsA = base;
    argsA.push_back("--out");
    argsA.push_back(runA.string());
    auto argsB = base;
    argsB.push_back("--out");
    argsB.push_back(runB.string());
    REQUIRE(run_cli(argsA).status == 0);
    REQUIRE(run_cli(argsB).status == 0);
    CHECK(file_bytes(runA / "runlog.txt") == file_bytes(runB / "runlog.txt"));
    CHECK(file_bytes(runA / "final.blob") == file_bytes(runB / "final.blob"));
    CHECK(file_bytes(runA / "final.manifest") == file_bytes(runB / "final.manifest"));

    SUBCASE("generate and eval consume the checkpoint") {
      const fs::path gen = dir / "gen.fsq";
      const CliResult g = run_cli({"generate", "--ckpt", (runA / "final").string(), "--data",
                                   manifest, "--phrase", "1", "--out", gen.string()});
      REQUIRE(g.status == 0);
      const FeatureSequence seq = read_feature_file(gen.string());
      CHECK(seq.length() == 160);

      const CliResult e = run_cli({"eval", "--ckpt", (runA / "final").string(), "--data",
                                   manifest, "--horizon", "8", "--stride", "8"});
      REQUIRE(e.status == 0);
      CHECK(e.out.find("tf_mse_db2=") != std::string::npos);
      CHECK(e.out.find("baseline_mse_db2=") != std::string::npos);
      CHECK(e.out.find("drift_db horizon=8") != std::string::npos);
    }
  }
}

TEST_CASE("compare reports p = 0.5 on a symmetric score file") {
  const fs::path scores = work_dir() / "sym.txt";
  std::ofstream(scores) << "# symmetric preferences\n-1\n1\n";
  const CliResult r = run_cli({"compare", scores.string()});
  REQUIRE(r.status == 0);
  CHECK(r.out.find("p=0.5") != std::string::npos);
  CHECK(r.out.find("mean=0") != std::string::npos);
}

TEST_CASE("mos validates the declared score range") {
  const fs::path scores = work_dir() / "mos.txt";
  std::ofstream(scores) << "3\n3\n4\n4\n";
  const CliResult ok = run_cli({"mos", scores.string()});
  REQUIRE(ok.status == 0);
  CHECK(ok.out.find("mean=3.5") != std::string::npos);
  CHECK(ok.out.find("half_width=0.918") != std::string::npos);

  const fs::path bad = work_dir() / "mos_bad.txt";
  std::ofstream(bad) << "0.5\n3\n4\n";
  CHECK(run_cli({"mos", bad.string()}).status != 0);
}
