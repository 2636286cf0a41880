#include "doctest_torch.hpp"

#include <fstream>
#include <sstream>

#include "arsivae/array_archive.hpp"
#include "arsivae/cli.hpp"
#include "arsivae/errors.hpp"
#include "helpers.hpp"

using namespace arsivae;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "arsivae");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

nlohmann::json read(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

// Tiny experiment: 80 samples at 32x32, one epoch, narrow model.
fs::path write_config(const fs::path& dir) {
  const auto path = dir / "exp.json";
  std::ofstream(path) << R"({
    // comments are allowed
    "dataset": {"n": 80, "seed": 2, "canvas": [32, 32]},
    "model": {"latent_dim": 8, "image_size": 32, "base_width": 2, "num_regularized_dims": 6},
    "train": {"method": "ar_sivae", "epochs": 1, "patience": 1, "batch_size": 16,
              "weights": {"alpha_pl": 0.0}},
    "eval": {"traversal_bases": 3, "traversal_steps": 5},
    "output_dir": ")" << (dir / "out").string()
                     << "\"\n}\n";
  return path;
}

}  // namespace

TEST_SUITE("cli_runner") {
  TEST_CASE("usage and configuration errors exit with code 2") {
    testing::TempDir tmp("cli_err");
    const auto cfg = write_config(tmp.path()).string();
    CHECK(run({"--config", cfg, "train", "--method", "vae"}) == 2);
    CHECK(run({"--config", cfg, "--device", "cuda", "train"}) == 2);
    CHECK(run({"--no-such-flag"}) == 2);
    CHECK(run({}) == 2);
    CHECK(run({"--help"}) == 0);
    std::ofstream(tmp / "bad.json") << "{ not json";
    CHECK(run({"--config", (tmp / "bad.json").string(), "generate"}) == 2);
    CHECK_THROWS_AS(load_experiment_config(tmp / "bad.json"), InvalidConfig);
  }

  TEST_CASE("config loading and overrides") {
    testing::TempDir tmp("cli_cfg");
    const auto cfg = load_experiment_config(write_config(tmp.path()));
    CHECK(cfg.dataset.n == 80);
    CHECK(cfg.model.base_width == 2);
    CHECK(cfg.train.method == Method::ArSivae);
    CHECK(cfg.train.weights.alpha_pl == 0.0);
    CHECK(cfg.eval.traversal_steps == 5);
    const nlohmann::json j = cfg;
    CHECK(nlohmann::json(j.get<ExperimentConfig>()) == j);
    CHECK(run({"--config", write_config(tmp.path()).string(), "--seed", "9", "--print-config"}) == 0);

    auto bad = cfg;
    bad.model.image_size = 64;
    CHECK_THROWS_AS(bad.validate(), InvalidConfig);
  }

  TEST_CASE("generate is reproducible and refuses to overwrite") {
    testing::TempDir tmp("cli_gen");
    const auto cfg = write_config(tmp.path()).string();
    REQUIRE(run({"--config", cfg, "generate", "--out", (tmp / "a").string()}) == 0);
    REQUIRE(run({"--config", cfg, "generate", "--out", (tmp / "b").string()}) == 0);
    CHECK(archive_content_hash(tmp / "a") ==
          archive_content_hash(tmp / "b"));
    CHECK(run({"--config", cfg, "generate", "--out", (tmp / "a").string()}) == 1);
    REQUIRE(run({"--config", cfg, "--seed", "5", "generate", "--out", (tmp / "c").string()}) == 0);
    CHECK(archive_content_hash(tmp / "a") !=
          archive_content_hash(tmp / "c"));
  }

  TEST_CASE("train, evaluate, traverse and compare end to end") {
    testing::TempDir tmp("cli_e2e");
    const auto cfg = write_config(tmp.path()).string();
    const auto out = tmp / "out";
    REQUIRE(run({"--config", cfg, "generate"}) == 0);
    REQUIRE(run({"--config", cfg, "train", "--run-dir", (out / "ar").string()}) == 0);
    REQUIRE(run({"--config", cfg, "train", "--method", "sivae", "--run-dir", (out / "si").string()}) == 0);
    CHECK(read(out / "si" / "manifest.json").at("config").at("train").at("method") == "sivae");

    CHECK(run({"--config", cfg, "evaluate", "--run", (out / "missing").string()}) == 1);
    REQUIRE(run({"--config", cfg, "evaluate", "--run", (out / "ar").string()}) == 0);
    REQUIRE(run({"--config", cfg, "evaluate", "--run", (out / "si").string()}) == 0);
    const auto report = read(out / "ar" / "report.json");
    CHECK(report.contains("ssim_all"));
    CHECK(report.contains("scc"));
    CHECK(fs::exists(out / "ar" / "tables.txt"));

    REQUIRE(run({"--config", cfg, "traverse", "--run", (out / "ar").string()}) == 0);
    CHECK(fs::exists(out / "ar" / "traversal" / "traversal.png"));
    const auto trav = read(out / "ar" / "traversal" / "traversal.json");
    CHECK(trav.contains("mean_monotonicity"));

    REQUIRE(run({"--config", cfg, "compare", (out / "ar").string(), (out / "si").string(), "--out",
                 (tmp / "cmp").string()}) == 0);
    std::ifstream in(tmp / "cmp" / "comparison.txt");
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str().find("ar_sivae") != std::string::npos);
    CHECK(ss.str().find("sivae") != std::string::npos);
    CHECK(ss.str().find("WARNING") == std::string::npos);
  }

  TEST_CASE("gamma ablation records one row per value") {
    testing::TempDir tmp("cli_abl");
    const auto cfg = write_config(tmp.path()).string();
    REQUIRE(run({"--config", cfg, "generate"}) == 0);
    REQUIRE(run({"--config", cfg, "ablate-gamma", "--gammas", "0,10", "--out", (tmp / "abl").string()}) == 0);
    const auto sweep = read(tmp / "abl" / "sweep.json");
    CHECK(sweep.at("rows").size() == 2);
    CHECK(sweep.contains("scc_non_decreasing"));
    CHECK(fs::exists(tmp / "abl" / "sweep.txt"));
  }
}
