#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lr/dataset.hpp"
#include "lr/ddpg.hpp"
#include "lr/env.hpp"
#include "lr/support_gan.hpp"

namespace lr {

struct DivergenceReport {
  double max_abs_q = 0.0;
  double q_bound = 0.0;
  double frac_exceeding = 0.0;
  std::optional<double> rare_action_rate;
};

struct EvalReport {
  std::string algo;
  std::string env;
  std::uint64_t seed = 0;  // training seed
  std::size_t episodes = 0;
  std::vector<double> returns;       // undiscounted
  std::vector<double> disc_returns;  // discounted
  double mean_return = 0.0;
  double std_return = 0.0;  // population std
  double min_return = 0.0;
  double max_return = 0.0;
  double mean_disc_return = 0.0;
  std::optional<double> behavior_reference;
  std::vector<std::uint64_t> episode_seeds;
  std::optional<DivergenceReport> divergence;
  std::optional<double> fallback_rate;
};

// Episode i starts from env_reset(env, derive_seed(seed, {i})).
std::vector<std::uint64_t> evaluation_seeds(std::uint64_t seed, std::size_t episodes);

EvalReport evaluate_policy(EnvId env, const Policy& policy, std::size_t episodes, int horizon, double gamma,
                           std::uint64_t seed);

// Deterministic actor (no projection), action box clipping included.
Policy actor_policy(const DdpgAgent& agent);
Policy behavior_policy(const BehaviorPolicy& behavior, std::uint64_t seed);

// |Q(s, a)| over all dataset pairs against max(|r_min|, |r_max|) / (1 - gamma).
DivergenceReport q_divergence_diagnostic(const DdpgAgent& agent, const FixedDataset& d, double gamma,
                                         double reward_low, double reward_high);
double q_bound(double gamma, double reward_low, double reward_high);

// Fraction of dataset states whose actor action scores below p.
double rare_action_rate(const SupportModel& m, const DdpgAgent& agent, const FixedDataset& d, double p);

nlohmann::ordered_json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& j);

inline constexpr const char* kReportCsvHeader =
    "algo,env,seed,episodes,mean_return,std_return,min_return,max_return,mean_disc_return,max_abs_q,q_bound,"
    "frac_exceeding,rare_action_rate,fallback_rate";

std::string report_csv(std::span<const EvalReport> reports);
nlohmann::ordered_json report_bundle(std::span<const EvalReport> reports);

// Writes <prefix>.json and <prefix>.csv atomically.
void emit_report(std::span<const EvalReport> reports, const std::filesystem::path& json_path,
                 const std::filesystem::path& csv_path);

}  // namespace lr
