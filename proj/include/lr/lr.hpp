#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "lr/dataset.hpp"
#include "lr/ddpg.hpp"
#include "lr/support_gan.hpp"

namespace lr {

enum class Fallback { best_seen, dataset_nearest };

std::string_view to_string(Fallback f);
Fallback parse_fallback(std::string_view name);

// Either a fixed confidence threshold or a quantile of dataset confidences
// resolved once before training.
struct ThresholdSpec {
  enum class Mode { absolute, quantile };
  Mode mode = Mode::quantile;
  double value = 0.1;

  static ThresholdSpec absolute(double p) { return {Mode::absolute, p}; }
  static ThresholdSpec quantile(double q) { return {Mode::quantile, q}; }
};

struct LrConfig {
  ThresholdSpec p;
  // Noise std for every action dim; unset means 0.1 x action-box half-width.
  std::optional<double> sigma;
  std::size_t k_max = 100;
  Fallback fallback = Fallback::best_seen;
  // Also gate the actor: records whose pi(s) fails the threshold are pulled
  // towards their projected action instead of ascending Q.
  bool constrain_actor = false;

  void validate() const;
};

nlohmann::ordered_json to_json(const LrConfig& cfg);
LrConfig lr_config_from_json(const nlohmann::json& j, LrConfig base = {});

// Fully resolved projection settings.
struct ProjectionParams {
  double p;
  Eigen::VectorXd sigma;
  std::size_t k_max;
  Fallback fallback;
  Eigen::VectorXd action_low;
  Eigen::VectorXd action_high;
};

ProjectionParams make_projection_params(double p, const LrConfig& cfg, const MdpSpec& mdp);
// Calibrates a quantile threshold against `d` when needed.
ProjectionParams resolve_projection(const LrConfig& cfg, const SupportModel& m, const FixedDataset& d);

struct ProjectionOutcome {
  Eigen::VectorXd action;
  std::size_t iterations_used = 0;
  double final_confidence = 0.0;
  bool fallback_used = false;
};

// Random-walk the proposed action with cumulative N(0, sigma^2) steps (clipped
// to the box) until the discriminator confidence reaches p, for at most k_max
// steps. `dataset` is required only for Fallback::dataset_nearest; without it
// best_seen is used.
ProjectionOutcome lr_project(const SupportModel& m, const Eigen::VectorXd& s_next, const Eigen::VectorXd& a_proposed,
                             const ProjectionParams& params, Rng& rng, const FixedDataset* dataset = nullptr);

// Column-wise lr_project; record j draws from Rng(seeds[j]). Results do not
// depend on how records are grouped.
std::vector<ProjectionOutcome> lr_project_batch(const SupportModel& m, const Eigen::MatrixXd& s_next,
                                                const Eigen::MatrixXd& a_proposed, const ProjectionParams& params,
                                                const std::vector<std::uint64_t>& seeds,
                                                const FixedDataset* dataset = nullptr);

struct TrainRecord {
  std::size_t step;  // 1-based count of completed iterations
  double critic_loss;
  double actor_loss;
  double mean_target_y;
  double mean_abs_q;
  double max_abs_q;
  double projection_rate;
  double fallback_rate;
  double mean_iterations;
  std::optional<double> eval_mean;
  std::optional<double> eval_std;
};

struct TrainMetrics {
  std::vector<TrainRecord> records;
  std::size_t gated_records = 0;
  std::size_t projected_records = 0;
  std::size_t fallback_records = 0;

  double overall_fallback_rate() const {
    return gated_records == 0 ? 0.0 : static_cast<double>(fallback_records) / static_cast<double>(gated_records);
  }
  double overall_projection_rate() const {
    return gated_records == 0 ? 0.0 : static_cast<double>(projected_records) / static_cast<double>(gated_records);
  }
  double max_abs_q() const;
};

inline constexpr const char* kMetricsCsvHeader =
    "step,critic_loss,actor_loss,mean_target_y,mean_abs_q,max_abs_q,projection_rate,fallback_rate,mean_iterations,"
    "eval_mean,eval_std";

std::string metrics_csv(const TrainMetrics& m);
nlohmann::ordered_json metrics_summary(const TrainMetrics& m);

// Optional live-environment evaluation, called at each metrics record. Returns
// (mean, std) of evaluation returns. Training itself never touches the env.
using EvalHook = std::function<std::pair<double, double>(const DdpgAgent&)>;

struct TrainResult {
  DdpgAgent agent;
  TrainMetrics metrics;
  std::optional<double> threshold;  // resolved p, LR-DDPG only
};

TrainResult train_lr_ddpg(const FixedDataset& d, const SupportModel& m, const DdpgConfig& dcfg, const LrConfig& lcfg,
                          std::uint64_t seed, const EvalHook& eval = {});

enum class BaselineAlgo { naive_ddpg, behavior_clone };

TrainResult train_baseline(const FixedDataset& d, BaselineAlgo algo, const DdpgConfig& dcfg, std::uint64_t seed,
                           const EvalHook& eval = {});

}  // namespace lr
