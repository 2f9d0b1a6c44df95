#include "lr/bench.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>

#include "lr/binary_io.hpp"
#include "lr/error.hpp"

namespace lr {

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

template <class T>
nlohmann::ordered_json opt_json(const std::optional<T>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::optional<double> opt_double(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

}  // namespace

std::vector<std::uint64_t> evaluation_seeds(std::uint64_t seed, std::size_t episodes) {
  std::vector<std::uint64_t> s(episodes);
  for (std::size_t i = 0; i < episodes; ++i) s[i] = derive_seed(seed, {i});
  return s;
}

EvalReport evaluate_policy(EnvId env, const Policy& policy, std::size_t episodes, int horizon, double gamma,
                           std::uint64_t seed) {
  if (episodes == 0) throw ConfigError("evaluate_policy: episodes must be >= 1");
  EvalReport r;
  r.env = std::string(to_string(env));
  r.episodes = episodes;
  r.episode_seeds = evaluation_seeds(seed, episodes);
  for (auto s : r.episode_seeds) {
    const auto ep = rollout(env, policy, horizon, gamma, s);
    r.returns.push_back(ep.undiscounted_return);
    r.disc_returns.push_back(ep.discounted_return);
  }
  const double n = static_cast<double>(episodes);
  r.mean_return = std::accumulate(r.returns.begin(), r.returns.end(), 0.0) / n;
  r.mean_disc_return = std::accumulate(r.disc_returns.begin(), r.disc_returns.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : r.returns) ss += (x - r.mean_return) * (x - r.mean_return);
  r.std_return = std::sqrt(ss / n);
  r.min_return = *std::min_element(r.returns.begin(), r.returns.end());
  r.max_return = *std::max_element(r.returns.begin(), r.returns.end());
  return r;
}

Policy actor_policy(const DdpgAgent& agent) {
  auto snapshot = std::make_shared<const DdpgAgent>(agent);
  return [snapshot](const EnvState& s) { return policy_action(*snapshot, s.state, false); };
}

Policy behavior_policy(const BehaviorPolicy& behavior, std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(derive_seed(seed, {0xbe}));
  return [behavior, rng](const EnvState& s) { return behavior_action(behavior, s, *rng); };
}

double q_bound(double gamma, double reward_low, double reward_high) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("q bound undefined for gamma outside [0,1)");
  return std::max(std::abs(reward_low), std::abs(reward_high)) / (1.0 - gamma);
}

DivergenceReport q_divergence_diagnostic(const DdpgAgent& agent, const FixedDataset& d, double gamma,
                                         double reward_low, double reward_high) {
  DivergenceReport r;
  r.q_bound = q_bound(gamma, reward_low, reward_high);
  const Eigen::VectorXd q = critic_values(agent, d.all().s, d.all().a, false).cwiseAbs();
  r.max_abs_q = q.maxCoeff();
  r.frac_exceeding = (q.array() > r.q_bound).cast<double>().mean();
  return r;
}

double rare_action_rate(const SupportModel& m, const DdpgAgent& agent, const FixedDataset& d, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("rare_action_rate: p must be in [0,1]");
  const auto& s = d.all().s;
  const Eigen::VectorXd c = confidence_batch(m, s, policy_actions(agent, s, false));
  return (c.array() < p).cast<double>().mean();
}

nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["algo"] = r.algo;
  j["env"] = r.env;
  j["seed"] = r.seed;
  j["episodes"] = r.episodes;
  j["mean_return"] = r.mean_return;
  j["std_return"] = r.std_return;
  j["min_return"] = r.min_return;
  j["max_return"] = r.max_return;
  j["mean_disc_return"] = r.mean_disc_return;
  j["max_abs_q"] = r.divergence ? nlohmann::ordered_json(r.divergence->max_abs_q) : nullptr;
  j["q_bound"] = r.divergence ? nlohmann::ordered_json(r.divergence->q_bound) : nullptr;
  j["frac_exceeding"] = r.divergence ? nlohmann::ordered_json(r.divergence->frac_exceeding) : nullptr;
  j["rare_action_rate"] = r.divergence ? opt_json(r.divergence->rare_action_rate) : nullptr;
  j["fallback_rate"] = opt_json(r.fallback_rate);
  j["behavior_reference"] = opt_json(r.behavior_reference);
  j["returns"] = r.returns;
  j["disc_returns"] = r.disc_returns;
  j["episode_seeds"] = r.episode_seeds;
  return j;
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.algo = j.at("algo").get<std::string>();
    r.env = j.at("env").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.episodes = j.at("episodes").get<std::size_t>();
    r.mean_return = j.at("mean_return").get<double>();
    r.std_return = j.at("std_return").get<double>();
    r.min_return = j.at("min_return").get<double>();
    r.max_return = j.at("max_return").get<double>();
    r.mean_disc_return = j.at("mean_disc_return").get<double>();
    if (auto q = opt_double(j, "max_abs_q")) {
      DivergenceReport d;
      d.max_abs_q = *q;
      d.q_bound = j.at("q_bound").get<double>();
      d.frac_exceeding = j.at("frac_exceeding").get<double>();
      d.rare_action_rate = opt_double(j, "rare_action_rate");
      r.divergence = d;
    }
    r.fallback_rate = opt_double(j, "fallback_rate");
    r.behavior_reference = opt_double(j, "behavior_reference");
    r.returns = j.at("returns").get<std::vector<double>>();
    r.disc_returns = j.at("disc_returns").get<std::vector<double>>();
    r.episode_seeds = j.at("episode_seeds").get<std::vector<std::uint64_t>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("eval report: ") + e.what());
  }
}

std::string report_csv(std::span<const EvalReport> reports) {
  std::string out = std::string(kReportCsvHeader) + "\n";
  for (const auto& r : reports) {
    const auto& d = r.divergence;
    out += r.algo + "," + r.env + "," + std::to_string(r.seed) + "," + std::to_string(r.episodes) + "," +
           fmt(r.mean_return) + "," + fmt(r.std_return) + "," + fmt(r.min_return) + "," + fmt(r.max_return) + "," +
           fmt(r.mean_disc_return) + "," + (d ? fmt(d->max_abs_q) : "") + "," + (d ? fmt(d->q_bound) : "") + "," +
           (d ? fmt(d->frac_exceeding) : "") + "," + (d ? fmt_opt(d->rare_action_rate) : "") + "," +
           fmt_opt(r.fallback_rate) + "\n";
  }
  return out;
}

nlohmann::ordered_json report_bundle(std::span<const EvalReport> reports) {
  nlohmann::ordered_json j;
  j["columns"] = nlohmann::ordered_json::array();
  std::string header = kReportCsvHeader;
  std::stringstream ss(header);
  for (std::string col; std::getline(ss, col, ',');) j["columns"].push_back(col);
  j["reports"] = nlohmann::ordered_json::array();
  for (const auto& r : reports) j["reports"].push_back(to_json(r));
  return j;
}

void emit_report(std::span<const EvalReport> reports, const std::filesystem::path& json_path,
                 const std::filesystem::path& csv_path) {
  if (reports.empty()) throw ConfigError("emit_report: at least one report required");
  io::write_file_atomic(json_path, report_bundle(reports).dump(2) + "\n");
  io::write_file_atomic(csv_path, report_csv(reports));
}

}  // namespace lr
