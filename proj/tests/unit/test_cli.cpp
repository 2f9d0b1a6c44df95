#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "lr/binary_io.hpp"
#include "lr/cli.hpp"
#include "lr/dataset.hpp"

namespace fs = std::filesystem;
using lr::testing::TempDir;

namespace {

struct Run {
  int status;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int status = lr::cli::dispatch(args, out, err);
  return {status, out.str(), err.str()};
}

std::vector<std::string> with(std::vector<std::string> base, const std::vector<std::string>& extra) {
  base.insert(base.end(), extra.begin(), extra.end());
  return base;
}

// Small bandit pipeline flags shared by every stage.
std::vector<std::string> small(const fs::path& dir) {
  return {"--env", "narrow_support_bandit", "--n", "1500", "--seed", "3", "--output-dir", dir.string(),
          "--gan-steps", "150", "--steps", "40", "--episodes", "3"};
}

std::string file(const fs::path& p) { return lr::io::read_file(p); }

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("unknown or missing command") {
    const auto r = run({"fly"});
    CHECK(r.status == lr::cli::kUnknownCommand);
    const auto j = nlohmann::json::parse(r.err);
    CHECK(j["status"] == 2);
    CHECK(j["error"] == "usage");
    CHECK(run({}).status == lr::cli::kUnknownCommand);
  }

  TEST_CASE("invalid configuration exits with status 3") {
    TempDir dir("cli_cfg");
    lr::io::write_file_atomic(dir / "bad.json", R"({"env": "point_mass_1d", "bogus": 1})");
    CHECK(run({"gen-data", "--config", (dir / "bad.json").string()}).status == lr::cli::kInvalidConfig);
    lr::io::write_file_atomic(dir / "broken.json", "{not json");
    CHECK(run({"gen-data", "--config", (dir / "broken.json").string()}).status == lr::cli::kInvalidConfig);
    CHECK(run({"gen-data", "--env", "cartpole"}).status == lr::cli::kInvalidConfig);
    CHECK(run({"gen-data", "--n", "abc"}).status == lr::cli::kInvalidConfig);
    CHECK(run({"train", "--p", "0.1", "--quantile", "0.2", "--output-dir", dir.path().string()}).status ==
          lr::cli::kInvalidConfig);
    const auto r = run({"gen-data", "--config", (dir / "missing.json").string()});
    CHECK(r.status == lr::cli::kIoFailure);
  }

  TEST_CASE("gen-data writes the requested number of records") {
    TempDir dir("cli_gen");
    const auto r = run(with({"gen-data"}, small(dir.path())));
    REQUIRE(r.status == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["size"] == 1500);
    const auto d = lr::read_dataset(dir / "dataset.lrds");
    CHECK(d.size() == 1500);
    CHECK(d.meta().env_id == lr::EnvId::narrow_support_bandit);
    CHECK(fs::exists(dir / "dataset.stats.json"));
  }

  TEST_CASE("eval with a missing checkpoint reports an io failure and writes nothing") {
    TempDir dir("cli_missing");
    REQUIRE(run(with({"gen-data"}, small(dir.path()))).status == 0);
    const auto r = run(with({"eval", "--algo", "ddpg"}, small(dir.path())));
    CHECK(r.status == lr::cli::kIoFailure);
    CHECK(nlohmann::json::parse(r.err)["status"] == 4);
    CHECK_FALSE(fs::exists(dir / "eval_ddpg_seed3.json"));
  }

  TEST_CASE("full pipeline") {
    TempDir dir("cli_pipe");
    const auto f = small(dir.path());
    REQUIRE(run(with({"gen-data"}, f)).status == 0);
    REQUIRE(run(with({"train-support"}, f)).status == 0);
    CHECK(fs::exists(dir / "support" / "dis.lrnn"));
    for (std::string algo : {"lr-ddpg", "ddpg", "bc"}) {
      const auto t = run(with({"train", "--algo", algo}, f));
      REQUIRE_MESSAGE(t.status == 0, t.err);
      const auto e = run(with({"eval", "--algo", algo}, f));
      REQUIRE_MESSAGE(e.status == 0, e.err);
    }
    const auto lr_eval = nlohmann::json::parse(file(dir / "eval_lr_ddpg_seed3.json"));
    CHECK(lr_eval["episodes"] == 3);
    CHECK(lr_eval["fallback_rate"].is_number());
    CHECK(lr_eval["rare_action_rate"].is_number());
    CHECK(nlohmann::json::parse(file(dir / "eval_bc_seed3.json"))["max_abs_q"].is_null());
    CHECK(fs::exists(dir / "lr_ddpg_seed3" / "metrics.csv"));

    lr::io::write_file_atomic(dir / "report.cfg.json", R"({"report": {"algos": ["lr-ddpg", "ddpg", "bc"]}})");
    const auto rep = run(with({"report", "--config", (dir / "report.cfg.json").string()}, f));
    REQUIRE_MESSAGE(rep.status == 0, rep.err);
    CHECK(nlohmann::json::parse(rep.out)["reports"] == 3);
    const auto bundle = nlohmann::json::parse(file(dir / "report.json"));
    CHECK(bundle["reports"].size() == 3);
    CHECK(bundle["reports"][0]["algo"] == "lr-ddpg");
    CHECK(fs::exists(dir / "report.csv"));

    lr::io::write_file_atomic(dir / "junk.json", "[");
    CHECK(run(with({"report", "--inputs", (dir / "junk.json").string()}, f)).status == lr::cli::kIoFailure);
  }

  TEST_CASE("training through the cli is bitwise reproducible") {
    TempDir a("cli_det_a"), b("cli_det_b");
    for (const auto* dir : {&a, &b}) {
      const auto f = small(dir->path());
      REQUIRE(run(with({"gen-data"}, f)).status == 0);
      REQUIRE(run(with({"train-support"}, f)).status == 0);
      REQUIRE(run(with({"train"}, f)).status == 0);
    }
    CHECK(file(a / "dataset.lrds") == file(b / "dataset.lrds"));
    CHECK(file(a / "support/dis.lrnn") == file(b / "support/dis.lrnn"));
    for (const char* n : {"q.lrnn", "pi.lrnn", "q_target.lrnn", "pi_target.lrnn", "metrics.csv"})
      CHECK(file(a / "lr_ddpg_seed3" / n) == file(b / "lr_ddpg_seed3" / n));
  }

  TEST_CASE("flags override the config file") {
    TempDir dir("cli_prec");
    lr::io::write_file_atomic(dir / "c.json",
                              R"({"env": "narrow_support_bandit", "n": 50, "seed": 8, "output_dir": ")" +
                                  dir.path().string() + R"("})");
    REQUIRE(run({"gen-data", "--config", (dir / "c.json").string()}).status == 0);
    CHECK(lr::read_dataset(dir / "dataset.lrds").size() == 50);
    REQUIRE(run({"gen-data", "--config", (dir / "c.json").string(), "--n", "70", "--out", (dir / "x.lrds").string()})
                .status == 0);
    const auto d = lr::read_dataset(dir / "x.lrds");
    CHECK(d.size() == 70);
    CHECK(d.meta().seed == 8);
  }

  TEST_CASE("dataset env must match the configured env") {
    TempDir dir("cli_env");
    REQUIRE(run(with({"gen-data"}, small(dir.path()))).status == 0);
    const auto r = run({"train-support", "--env", "point_mass_1d", "--output-dir", dir.path().string()});
    CHECK(r.status == lr::cli::kInvalidConfig);
  }
}
