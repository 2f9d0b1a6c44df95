#include "lr/config.hpp"

#include <cstdlib>
#include <set>

#include "lr/binary_io.hpp"
#include "lr/error.hpp"

namespace lr {

namespace fs = std::filesystem;

namespace {

constexpr Algo kAlgos[] = {Algo::lr_ddpg, Algo::ddpg, Algo::bc};

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <class J>
std::set<std::string> keys_of(const J& j) {
  std::set<std::string> out;
  for (const auto& [key, value] : j.items()) out.insert(key);
  return out;
}

std::string algo_tag(Algo a) {
  std::string s(to_string(a));
  for (auto& ch : s) {
    if (ch == '-') ch = '_';
  }
  return s;
}

}  // namespace

std::string_view to_string(Algo a) {
  switch (a) {
    case Algo::lr_ddpg: return "lr-ddpg";
    case Algo::ddpg: return "ddpg";
    case Algo::bc: return "bc";
  }
  return "?";
}

Algo parse_algo(std::string_view name) {
  for (Algo a : kAlgos) {
    if (name == to_string(a)) return a;
  }
  throw ConfigError("unknown algo '" + std::string(name) + "' (expected lr-ddpg, ddpg or bc)");
}

void RunConfig::validate() const {
  if (n == 0) throw ConfigError("n must be >= 1");
  if (eval.episodes == 0) throw ConfigError("eval.episodes must be >= 1");
  if (eval.horizon < 0) throw ConfigError("eval.horizon must be >= 0");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  gan.validate();
  ddpg.validate();
  lr.validate();
}

fs::path RunConfig::dataset_path() const { return dataset ? *dataset : output_dir / "dataset.lrds"; }

fs::path RunConfig::stats_path() const {
  auto p = dataset_path();
  return p.replace_extension(".stats.json");
}

fs::path RunConfig::support_path() const { return support ? *support : output_dir / "support"; }

fs::path RunConfig::checkpoint_path(Algo a, std::uint64_t s) const {
  if (checkpoint && a == algo && s == seed) return *checkpoint;
  return output_dir / (algo_tag(a) + "_seed" + std::to_string(s));
}

fs::path RunConfig::eval_path(Algo a, std::uint64_t s) const {
  if (eval_out && a == algo && s == seed) return *eval_out;
  return output_dir / ("eval_" + algo_tag(a) + "_seed" + std::to_string(s) + ".json");
}

fs::path RunConfig::report_prefix() const { return report_out ? *report_out : output_dir / "report"; }

fs::path default_output_dir() {
  const char* env = std::getenv("LR_OUTPUT_DIR");
  return (env && *env) ? fs::path(env) : fs::path("lr_runs");
}

RunConfig run_config_from_json(const nlohmann::json& j, RunConfig c) {
  check_keys(j,
             {"env", "behavior", "n", "seed", "seeds", "algo", "output_dir", "dataset", "support", "checkpoint", "gan",
              "ddpg", "lr", "eval", "report"},
             "config");
  try {
    if (j.contains("env")) c.env = parse_env_id(j["env"].get<std::string>());
    if (j.contains("behavior")) c.behavior = parse_behavior_kind(j["behavior"].get<std::string>());
    if (j.contains("n")) c.n = j["n"].get<std::size_t>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("algo")) c.algo = parse_algo(j["algo"].get<std::string>());
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
    if (j.contains("dataset")) c.dataset = fs::path(j["dataset"].get<std::string>());
    if (j.contains("support")) c.support = fs::path(j["support"].get<std::string>());
    if (j.contains("checkpoint")) c.checkpoint = fs::path(j["checkpoint"].get<std::string>());
    if (j.contains("gan")) {
      check_keys(j["gan"], keys_of(to_json(GanConfig{})), "gan");
      c.gan = gan_config_from_json(j["gan"], c.gan);
    }
    if (j.contains("ddpg")) {
      check_keys(j["ddpg"], keys_of(to_json(DdpgConfig{})), "ddpg");
      c.ddpg = ddpg_config_from_json(j["ddpg"], c.ddpg);
    }
    if (j.contains("lr")) {
      check_keys(j["lr"], {"p", "quantile", "sigma", "k_max", "fallback", "constrain_actor"}, "lr");
      c.lr = lr_config_from_json(j["lr"], c.lr);
    }
    if (j.contains("eval")) {
      const auto& e = j["eval"];
      check_keys(e, {"episodes", "seed", "horizon", "out"}, "eval");
      if (e.contains("episodes")) c.eval.episodes = e["episodes"].get<std::size_t>();
      if (e.contains("seed")) c.eval.seed = e["seed"].get<std::uint64_t>();
      if (e.contains("horizon")) c.eval.horizon = e["horizon"].get<int>();
      if (e.contains("out")) c.eval_out = fs::path(e["out"].get<std::string>());
    }
    if (j.contains("report")) {
      const auto& r = j["report"];
      check_keys(r, {"out", "inputs", "algos"}, "report");
      if (r.contains("out")) c.report_out = fs::path(r["out"].get<std::string>());
      if (r.contains("inputs")) {
        c.report_inputs.clear();
        for (const auto& p : r["inputs"]) c.report_inputs.emplace_back(p.get<std::string>());
      }
      if (r.contains("algos")) {
        c.report_algos.clear();
        for (const auto& a : r["algos"]) c.report_algos.push_back(parse_algo(a.get<std::string>()));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path, RunConfig base) {
  const std::string text = io::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j, std::move(base));
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["env"] = std::string(to_string(c.env));
  j["behavior"] = std::string(to_string(c.behavior));
  j["n"] = c.n;
  j["seed"] = c.seed;
  j["seeds"] = c.seeds;
  j["algo"] = std::string(to_string(c.algo));
  j["output_dir"] = c.output_dir.string();
  j["dataset"] = c.dataset_path().string();
  j["support"] = c.support_path().string();
  j["checkpoint"] = c.checkpoint_path().string();
  j["gan"] = to_json(c.gan);
  j["ddpg"] = to_json(c.ddpg);
  j["lr"] = to_json(c.lr);
  j["eval"] = {{"episodes", c.eval.episodes}, {"seed", c.eval.seed}, {"horizon", c.eval.horizon},
               {"out", c.eval_path().string()}};
  nlohmann::ordered_json algos = nlohmann::ordered_json::array();
  for (Algo a : c.report_algos) algos.push_back(std::string(to_string(a)));
  nlohmann::ordered_json inputs = nlohmann::ordered_json::array();
  for (const auto& p : c.report_inputs) inputs.push_back(p.string());
  j["report"] = {{"out", c.report_prefix().string()}, {"inputs", inputs}, {"algos", algos}};
  return j;
}

}  // namespace lr
