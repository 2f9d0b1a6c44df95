#include "lr/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <optional>
#include <ostream>

#include "lr/bench.hpp"
#include "lr/binary_io.hpp"
#include "lr/config.hpp"
#include "lr/dataset.hpp"
#include "lr/error.hpp"
#include "lr/lr.hpp"
#include "lr/support_gan.hpp"

namespace lr::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kCommands[] = {"gen-data", "train-support", "train", "eval", "report"};

// Every flag mirrors a config key; unset flags leave the config untouched.
struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> env, behavior, algo, fallback;
  std::optional<std::size_t> n, episodes, steps, gan_steps, k_max;
  std::optional<std::uint64_t> seed, eval_seed;
  std::optional<std::string> output_dir, dataset, support, checkpoint, out;
  std::optional<double> p, quantile, sigma, gamma;
  std::optional<bool> terminal_masking, constrain_actor;
  std::vector<std::string> inputs;
  std::vector<std::uint64_t> seeds;
};

void add_flags(CLI::App& app, Flags& f) {
  app.add_option("--config", f.config, "JSON run config");
  app.add_option("--env", f.env, "env");
  app.add_option("--behavior", f.behavior, "behavior");
  app.add_option("--n", f.n, "n");
  app.add_option("--seed", f.seed, "seed");
  app.add_option("--seeds", f.seeds, "seeds");
  app.add_option("--algo", f.algo, "algo: lr-ddpg | ddpg | bc");
  app.add_option("--output-dir", f.output_dir, "output_dir");
  app.add_option("--dataset", f.dataset, "dataset");
  app.add_option("--support", f.support, "support");
  app.add_option("--checkpoint", f.checkpoint, "checkpoint");
  app.add_option("--out", f.out, "primary output of the command");
  app.add_option("--inputs", f.inputs, "report.inputs");
  app.add_option("--episodes", f.episodes, "eval.episodes");
  app.add_option("--eval-seed", f.eval_seed, "eval.seed");
  app.add_option("--steps", f.steps, "ddpg.total_steps");
  app.add_option("--gamma", f.gamma, "ddpg.gamma");
  app.add_option("--terminal-masking", f.terminal_masking, "ddpg.terminal_masking");
  app.add_option("--gan-steps", f.gan_steps, "gan.steps");
  app.add_option("--p", f.p, "lr.p");
  app.add_option("--quantile", f.quantile, "lr.quantile");
  app.add_option("--sigma", f.sigma, "lr.sigma");
  app.add_option("--k-max", f.k_max, "lr.k_max");
  app.add_option("--fallback", f.fallback, "lr.fallback");
  app.add_option("--constrain-actor", f.constrain_actor, "lr.constrain_actor");
}

RunConfig resolve(const std::string& command, const Flags& f) {
  RunConfig c;
  c.output_dir = default_output_dir();
  if (f.config) c = load_run_config(*f.config, c);
  if (f.env) c.env = parse_env_id(*f.env);
  if (f.behavior) c.behavior = parse_behavior_kind(*f.behavior);
  if (f.n) c.n = *f.n;
  if (f.seed) c.seed = *f.seed;
  if (!f.seeds.empty()) c.seeds = f.seeds;
  if (f.algo) c.algo = parse_algo(*f.algo);
  if (f.output_dir) c.output_dir = *f.output_dir;
  if (f.dataset) c.dataset = fs::path(*f.dataset);
  if (f.support) c.support = fs::path(*f.support);
  if (f.checkpoint) c.checkpoint = fs::path(*f.checkpoint);
  if (!f.inputs.empty()) c.report_inputs.assign(f.inputs.begin(), f.inputs.end());
  if (f.episodes) c.eval.episodes = *f.episodes;
  if (f.eval_seed) c.eval.seed = *f.eval_seed;
  if (f.steps) c.ddpg.total_steps = *f.steps;
  if (f.gamma) c.ddpg.gamma = *f.gamma;
  if (f.terminal_masking) c.ddpg.terminal_masking = *f.terminal_masking;
  if (f.gan_steps) c.gan.steps = *f.gan_steps;
  if (f.p && f.quantile) throw ConfigError("give either --p or --quantile, not both");
  if (f.p) c.lr.p = ThresholdSpec::absolute(*f.p);
  if (f.quantile) c.lr.p = ThresholdSpec::quantile(*f.quantile);
  if (f.sigma) c.lr.sigma = *f.sigma;
  if (f.k_max) c.lr.k_max = *f.k_max;
  if (f.fallback) c.lr.fallback = parse_fallback(*f.fallback);
  if (f.constrain_actor) c.lr.constrain_actor = *f.constrain_actor;
  if (f.out) {
    const fs::path p(*f.out);
    if (command == "gen-data") c.dataset = p;
    else if (command == "train-support") c.support = p;
    else if (command == "train") c.checkpoint = p;
    else if (command == "eval") c.eval_out = p;
    else c.report_out = p;
  }
  c.validate();
  return c;
}

FixedDataset load_dataset_for(const RunConfig& c) {
  auto d = read_dataset(c.dataset_path());
  if (d.meta().env_id != c.env) {
    throw ConfigError("dataset env " + std::string(to_string(d.meta().env_id)) + " does not match config env " +
                      std::string(to_string(c.env)));
  }
  return d;
}

int horizon_of(const RunConfig& c) { return c.eval.horizon > 0 ? c.eval.horizon : mdp_spec(c.env).horizon_default; }

ordered_json cmd_gen_data(const RunConfig& c) {
  const auto d = generate_dataset(c.env, BehaviorPolicy::preset(c.behavior, c.env), c.n, c.seed);
  const auto path = c.dataset_path();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_dataset(path, d);
  io::write_file_atomic(c.stats_path(), to_json(dataset_stats(d)).dump(2) + "\n");
  return {{"command", "gen-data"}, {"dataset", path.string()}, {"stats", c.stats_path().string()}, {"size", d.size()}};
}

ordered_json cmd_train_support(const RunConfig& c) {
  const auto d = load_dataset_for(c);
  const auto m = train_gan(d, c.gan, c.seed);
  save_support_model(c.support_path(), m);
  ordered_json j{{"command", "train-support"}, {"support", c.support_path().string()}};
  if (!m.curve.empty()) {
    j["final_dis_loss"] = m.curve.back().dis_loss;
    j["final_gen_loss"] = m.curve.back().gen_loss;
  }
  return j;
}

ordered_json cmd_train(const RunConfig& c) {
  const auto d = load_dataset_for(c);
  TrainResult result = [&] {
    switch (c.algo) {
      case Algo::lr_ddpg: return train_lr_ddpg(d, load_support_model(c.support_path()), c.ddpg, c.lr, c.seed);
      case Algo::ddpg: return train_baseline(d, BaselineAlgo::naive_ddpg, c.ddpg, c.seed);
      case Algo::bc: return train_baseline(d, BaselineAlgo::behavior_clone, c.ddpg, c.seed);
    }
    throw ConfigError("unknown algo");
  }();
  const auto dir = c.checkpoint_path();
  ordered_json manifest;
  manifest["algo"] = std::string(to_string(c.algo));
  manifest["env"] = std::string(to_string(c.env));
  manifest["seed"] = c.seed;
  manifest["steps"] = c.ddpg.total_steps;
  manifest["ddpg"] = to_json(c.ddpg);
  if (c.algo == Algo::lr_ddpg) manifest["lr"] = to_json(c.lr);
  manifest["threshold"] = result.threshold ? ordered_json(*result.threshold) : ordered_json(nullptr);
  manifest["metrics"] = metrics_summary(result.metrics);
  save_agent(dir, result.agent, manifest, c.algo == Algo::bc);
  io::write_file_atomic(dir / "metrics.csv", metrics_csv(result.metrics));
  return {{"command", "train"}, {"algo", to_string(c.algo)}, {"checkpoint", dir.string()},
          {"metrics", (dir / "metrics.csv").string()}, {"summary", manifest["metrics"]}};
}

ordered_json cmd_eval(const RunConfig& c) {
  const auto dir = c.checkpoint_path();
  const auto loaded = load_agent(dir);
  const auto& man = loaded.manifest;
  if (man.contains("env") && man["env"].get<std::string>() != to_string(c.env)) {
    throw ConfigError("checkpoint env " + man["env"].get<std::string>() + " does not match config env");
  }
  const auto d = load_dataset_for(c);
  const int horizon = horizon_of(c);
  const double gamma = c.ddpg.gamma;
  EvalReport r = evaluate_policy(c.env, actor_policy(loaded.agent), c.eval.episodes, horizon, gamma, c.eval.seed);
  r.algo = man.value("algo", std::string(to_string(c.algo)));
  r.seed = man.value("seed", c.seed);
  const auto behavior = BehaviorPolicy::preset(c.behavior, c.env);
  r.behavior_reference =
      evaluate_policy(c.env, behavior_policy(behavior, c.eval.seed), c.eval.episodes, horizon, gamma, c.eval.seed)
          .mean_return;
  const bool actor_only = man.at("networks").at("actor_only").get<bool>();
  if (!actor_only) {
    const auto& mdp = mdp_spec(c.env);
    DivergenceReport div = q_divergence_diagnostic(loaded.agent, d, gamma, mdp.reward_low, mdp.reward_high);
    if (fs::exists(c.support_path() / "support.json")) {
      const auto m = load_support_model(c.support_path());
      const double p = man.contains("threshold") && !man["threshold"].is_null()
                           ? man["threshold"].get<double>()
                           : resolve_projection(c.lr, m, d).p;
      div.rare_action_rate = rare_action_rate(m, loaded.agent, d, p);
    }
    r.divergence = div;
  }
  if (man.contains("metrics") && man["metrics"].contains("gated_records") &&
      man["metrics"]["gated_records"].get<std::size_t>() > 0) {
    r.fallback_rate = man["metrics"]["fallback_rate"].get<double>();
  }
  const auto path = c.eval_path();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_file_atomic(path, to_json(r).dump(2) + "\n");
  return {{"command", "eval"}, {"report", path.string()}, {"mean_return", r.mean_return},
          {"behavior_reference", *r.behavior_reference}};
}

ordered_json cmd_report(const RunConfig& c) {
  std::vector<fs::path> inputs = c.report_inputs;
  if (inputs.empty()) {
    const auto seeds = c.seeds.empty() ? std::vector<std::uint64_t>{c.seed} : c.seeds;
    const auto algos = c.report_algos.empty() ? std::vector<Algo>{c.algo} : c.report_algos;
    for (Algo a : algos) {
      for (auto s : seeds) inputs.push_back(c.eval_path(a, s));
    }
  }
  std::vector<EvalReport> reports;
  for (const auto& p : inputs) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(io::read_file(p));
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(p.string() + ": " + e.what());
    }
    reports.push_back(eval_report_from_json(j));
  }
  const auto prefix = c.report_prefix();
  auto json_path = prefix;
  json_path += ".json";
  auto csv_path = prefix;
  csv_path += ".csv";
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  emit_report(reports, json_path, csv_path);
  return {{"command", "report"}, {"json", json_path.string()}, {"csv", csv_path.string()}, {"reports", reports.size()}};
}

void fail_line(std::ostream& err, int status, const char* kind, const std::string& message) {
  ordered_json j{{"status", status}, {"error", kind}, {"message", message}};
  err << j.dump() << '\n';
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty()) {
    fail_line(err, kUnknownCommand, "usage", "missing command (gen-data, train-support, train, eval, report)");
    return kUnknownCommand;
  }
  const std::string& command = args.front();
  if (std::find(std::begin(kCommands), std::end(kCommands), command) == std::end(kCommands)) {
    fail_line(err, kUnknownCommand, "usage", "unknown command '" + command + "'");
    return kUnknownCommand;
  }
  CLI::App app{"lrctl " + command};
  Flags flags;
  add_flags(app, flags);
  try {
    std::vector<std::string> rest(args.rbegin(), args.rend() - 1);
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    fail_line(err, kInvalidConfig, "config", e.what());
    return kInvalidConfig;
  }
  try {
    const RunConfig c = resolve(command, flags);
    ordered_json summary;
    if (command == "gen-data") summary = cmd_gen_data(c);
    else if (command == "train-support") summary = cmd_train_support(c);
    else if (command == "train") summary = cmd_train(c);
    else if (command == "eval") summary = cmd_eval(c);
    else summary = cmd_report(c);
    out << summary.dump() << '\n';
    return kOk;
  } catch (const ConfigError& e) {
    fail_line(err, kInvalidConfig, "config", e.what());
    return kInvalidConfig;
  } catch (const IoError& e) {
    fail_line(err, kIoFailure, "io", e.what());
    return kIoFailure;
  } catch (const FormatError& e) {
    fail_line(err, kIoFailure, "format", e.what());
    return kIoFailure;
  } catch (const fs::filesystem_error& e) {
    fail_line(err, kIoFailure, "io", e.what());
    return kIoFailure;
  } catch (const std::exception& e) {
    fail_line(err, kFailure, "runtime", e.what());
    return kFailure;
  }
}

}  // namespace lr::cli
