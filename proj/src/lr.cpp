#include "lr/lr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "lr/error.hpp"

namespace lr {

namespace {

constexpr std::size_t kNearestCandidates = 32;

struct GateTally {
  std::size_t records = 0;
  std::size_t projected = 0;
  std::size_t fallbacks = 0;
  std::size_t iterations = 0;

  void add(const ProjectionOutcome& o) {
    ++records;
    if (o.iterations_used > 0) ++projected;
    if (o.fallback_used) ++fallbacks;
    iterations += o.iterations_used;
  }
};

Eigen::VectorXd dataset_nearest_action(const SupportModel& m, const Eigen::VectorXd& s_next, const FixedDataset& d,
                                       Rng& rng, double* conf_out) {
  const auto idx = sample_indices(d.size(), std::min(kNearestCandidates, d.size()), rng);
  const auto cand = d.gather(idx);
  const Eigen::MatrixXd s_rep = s_next.replicate(1, cand.a.cols());
  const Eigen::VectorXd conf = confidence_batch(m, s_rep, cand.a);
  Eigen::Index best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < conf.size(); ++j) {
    const double dist = (cand.s.col(j) - s_next).squaredNorm();
    if (conf(j) > conf(best) || (conf(j) == conf(best) && dist < best_dist)) {
      best = j;
      best_dist = dist;
    }
  }
  *conf_out = conf(best);
  return cand.a.col(best);
}

// Lockstep projection over records; record j draws only from rngs[j].
std::vector<ProjectionOutcome> project_records(const SupportModel& m, const Eigen::MatrixXd& s_next,
                                               const Eigen::MatrixXd& a_proposed, const ProjectionParams& params,
                                               const std::function<Rng&(std::size_t)>& rng_for,
                                               const FixedDataset* dataset) {
  const auto n = static_cast<std::size_t>(a_proposed.cols());
  if (static_cast<std::size_t>(s_next.cols()) != n) throw DimensionError("lr_project: state/action count mismatch");
  if (a_proposed.rows() != params.action_low.size()) throw DimensionError("lr_project: action dim mismatch");
  std::vector<ProjectionOutcome> out(n);
  const Eigen::VectorXd c0 = confidence_batch(m, s_next, a_proposed);

  std::vector<std::size_t> active;
  std::vector<Eigen::VectorXd> current(n);
  std::vector<double> best_conf(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    out[j].action = a_proposed.col(col);
    out[j].final_confidence = c0(col);
    if (c0(col) < params.p) {
      active.push_back(j);
      current[j] = out[j].action;
      best_conf[j] = c0(col);
    }
  }

  const auto ad = a_proposed.rows();
  for (std::size_t k = 1; k <= params.k_max && !active.empty(); ++k) {
    Eigen::MatrixXd s_act(s_next.rows(), static_cast<Eigen::Index>(active.size()));
    Eigen::MatrixXd a_act(ad, static_cast<Eigen::Index>(active.size()));
    for (std::size_t i = 0; i < active.size(); ++i) {
      const auto j = active[i];
      Rng& rng = rng_for(j);
      for (Eigen::Index r = 0; r < ad; ++r) current[j](r) += params.sigma(r) * standard_normal(rng);
      current[j] = current[j].cwiseMax(params.action_low).cwiseMin(params.action_high);
      s_act.col(static_cast<Eigen::Index>(i)) = s_next.col(static_cast<Eigen::Index>(j));
      a_act.col(static_cast<Eigen::Index>(i)) = current[j];
    }
    const Eigen::VectorXd conf = confidence_batch(m, s_act, a_act);
    std::vector<std::size_t> still;
    for (std::size_t i = 0; i < active.size(); ++i) {
      const auto j = active[i];
      const double c = conf(static_cast<Eigen::Index>(i));
      out[j].iterations_used = k;
      if (c >= params.p) {
        out[j].action = current[j];
        out[j].final_confidence = c;
        continue;
      }
      if (c > best_conf[j]) {
        best_conf[j] = c;
        out[j].action = current[j];
        out[j].final_confidence = c;
      }
      still.push_back(j);
    }
    active = std::move(still);
  }

  // Cap reached. out[j] already holds the best visited candidate.
  for (auto j : active) {
    out[j].fallback_used = true;
    out[j].iterations_used = params.k_max;
    if (params.fallback == Fallback::dataset_nearest && dataset != nullptr) {
      double c = 0.0;
      out[j].action = dataset_nearest_action(m, s_next.col(static_cast<Eigen::Index>(j)), *dataset, rng_for(j), &c);
      out[j].final_confidence = c;
    }
  }
  return out;
}

using GateFn = std::function<Eigen::MatrixXd(std::size_t step, const Eigen::MatrixXd& s_next,
                                             const Eigen::MatrixXd& proposed, GateTally& tally)>;
using PullFn = std::function<std::optional<ActorPull>(std::size_t step, const Eigen::MatrixXd& s, const DdpgAgent&)>;

struct IntervalAccum {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double target_y = 0.0;
  std::size_t steps = 0;
  GateTally tally;
};

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

TrainRecord close_interval(std::size_t step, IntervalAccum& acc, const DdpgAgent& agent, const FixedDataset& d,
                           bool has_critic, const EvalHook& eval) {
  TrainRecord r{};
  r.step = step;
  const double k = static_cast<double>(std::max<std::size_t>(acc.steps, 1));
  r.critic_loss = has_critic ? acc.critic_loss / k : nan();
  r.actor_loss = acc.actor_loss / k;
  r.mean_target_y = has_critic ? acc.target_y / k : nan();
  if (has_critic) {
    const Eigen::VectorXd q = critic_values(agent, d.all().s, d.all().a, false).cwiseAbs();
    r.mean_abs_q = q.mean();
    r.max_abs_q = q.maxCoeff();
  } else {
    r.mean_abs_q = nan();
    r.max_abs_q = nan();
  }
  const auto& t = acc.tally;
  const double recs = static_cast<double>(std::max<std::size_t>(t.records, 1));
  r.projection_rate = static_cast<double>(t.projected) / recs;
  r.fallback_rate = static_cast<double>(t.fallbacks) / recs;
  r.mean_iterations = static_cast<double>(t.iterations) / recs;
  if (eval) {
    const auto [mean, sd] = eval(agent);
    r.eval_mean = mean;
    r.eval_std = sd;
  }
  acc = IntervalAccum{};
  return r;
}

bool record_due(std::size_t done, const DdpgConfig& cfg) {
  return done % cfg.metrics_every == 0 || done == cfg.total_steps;
}

void check_dataset(const FixedDataset& d, const DdpgConfig& cfg) {
  const auto& spec = mdp_spec(d.meta().env_id);
  if (d.meta().state_dim != spec.state_dim || d.meta().action_dim != spec.action_dim) {
    throw DimensionError("dataset dims do not match its environment");
  }
  if (cfg.batch_n > d.size()) throw ConfigError("batch_n exceeds dataset size");
}

// The one training loop shared by LR-DDPG and naive DDPG. The only difference
// between the two is `gate` (empty means identity) and the optional actor pull.
TrainResult run_offline_ddpg(const FixedDataset& d, const DdpgConfig& cfg, std::uint64_t seed, const GateFn& gate,
                             const PullFn& pull, const EvalHook& eval) {
  cfg.validate();
  check_dataset(d, cfg);
  Rng init_rng(derive_seed(seed, {1}));
  Rng sample_rng(derive_seed(seed, {2}));
  TrainResult res{make_agent(mdp_spec(d.meta().env_id), cfg, init_rng), {}, std::nullopt};
  DdpgAgent& agent = res.agent;
  AdamHyper critic_h;
  critic_h.lr = cfg.lr_critic;
  AdamHyper actor_h;
  actor_h.lr = cfg.lr_actor;
  auto critic_opt = make_adam_state(agent.q_spec, critic_h);
  auto actor_opt = make_adam_state(agent.pi_spec, actor_h);

  IntervalAccum acc;
  for (std::size_t step = 0; step < cfg.total_steps; ++step) {
    try {
      const auto idx = sample_indices(d.size(), cfg.batch_n, sample_rng);
      const auto batch = d.gather(idx);

      NextActionSelector selector;
      if (gate) {
        selector = [&](const Eigen::MatrixXd& s_next, const Eigen::MatrixXd& proposed) {
          return gate(step, s_next, proposed, acc.tally);
        };
      }
      const Eigen::VectorXd y = critic_target(agent, batch, cfg.gamma, selector, cfg.terminal_masking);
      acc.critic_loss += critic_update(agent, batch, y, critic_opt);
      acc.target_y += y.mean();

      std::optional<ActorPull> p;
      if (pull) p = pull(step, batch.s, agent);
      acc.actor_loss += -actor_update(agent, batch, actor_opt, p ? &*p : nullptr);

      soft_update(agent, cfg.tau);
      ++acc.steps;
    } catch (const Error& e) {
      throw Error("training step " + std::to_string(step) + ": " + e.what());
    }
    if (record_due(step + 1, cfg)) {
      res.metrics.gated_records += acc.tally.records;
      res.metrics.projected_records += acc.tally.projected;
      res.metrics.fallback_records += acc.tally.fallbacks;
      res.metrics.records.push_back(close_interval(step + 1, acc, agent, d, true, eval));
    }
  }
  return res;
}

TrainResult run_behavior_clone(const FixedDataset& d, const DdpgConfig& cfg, std::uint64_t seed,
                               const EvalHook& eval) {
  cfg.validate();
  check_dataset(d, cfg);
  Rng init_rng(derive_seed(seed, {1}));
  Rng sample_rng(derive_seed(seed, {2}));
  TrainResult res{make_agent(mdp_spec(d.meta().env_id), cfg, init_rng), {}, std::nullopt};
  AdamHyper h;
  h.lr = cfg.lr_actor;
  auto opt = make_adam_state(res.agent.pi_spec, h);
  IntervalAccum acc;
  for (std::size_t step = 0; step < cfg.total_steps; ++step) {
    const auto idx = sample_indices(d.size(), cfg.batch_n, sample_rng);
    try {
      acc.actor_loss += bc_update(res.agent, d.gather(idx), opt);
    } catch (const Error& e) {
      throw Error("training step " + std::to_string(step) + ": " + e.what());
    }
    ++acc.steps;
    if (record_due(step + 1, cfg)) res.metrics.records.push_back(close_interval(step + 1, acc, res.agent, d, false, eval));
  }
  res.agent.pi_target = res.agent.pi;
  return res;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

std::string_view to_string(Fallback f) { return f == Fallback::best_seen ? "best_seen" : "dataset_nearest"; }

Fallback parse_fallback(std::string_view name) {
  if (name == "best_seen") return Fallback::best_seen;
  if (name == "dataset_nearest") return Fallback::dataset_nearest;
  throw ConfigError("unknown fallback '" + std::string(name) + "'");
}

void LrConfig::validate() const {
  if (!(p.value >= 0.0 && p.value <= 1.0)) throw ConfigError("lr: p must be in [0,1]");
  if (sigma && !(*sigma > 0.0)) throw ConfigError("lr: sigma must be positive");
  if (k_max == 0) throw ConfigError("lr: k_max must be >= 1");
}

nlohmann::ordered_json to_json(const LrConfig& c) {
  nlohmann::ordered_json j;
  if (c.p.mode == ThresholdSpec::Mode::quantile) {
    j["quantile"] = c.p.value;
  } else {
    j["p"] = c.p.value;
  }
  if (c.sigma) j["sigma"] = *c.sigma;
  j["k_max"] = c.k_max;
  j["fallback"] = std::string(to_string(c.fallback));
  j["constrain_actor"] = c.constrain_actor;
  return j;
}

LrConfig lr_config_from_json(const nlohmann::json& j, LrConfig c) {
  if (!j.is_object()) throw ConfigError("lr config must be an object");
  try {
    if (j.contains("p") && j.contains("quantile")) throw ConfigError("lr config: give either p or quantile, not both");
    if (j.contains("p")) c.p = ThresholdSpec::absolute(j["p"].get<double>());
    if (j.contains("quantile")) c.p = ThresholdSpec::quantile(j["quantile"].get<double>());
    if (j.contains("sigma")) c.sigma = j["sigma"].get<double>();
    if (j.contains("k_max")) c.k_max = j["k_max"].get<std::size_t>();
    if (j.contains("fallback")) c.fallback = parse_fallback(j["fallback"].get<std::string>());
    if (j.contains("constrain_actor")) c.constrain_actor = j["constrain_actor"].get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("lr config: ") + e.what());
  }
  c.validate();
  return c;
}

ProjectionParams make_projection_params(double p, const LrConfig& cfg, const MdpSpec& mdp) {
  cfg.validate();
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("lr: resolved threshold must be in [0,1]");
  Eigen::VectorXd sigma = cfg.sigma ? Eigen::VectorXd::Constant(static_cast<Eigen::Index>(mdp.action_dim), *cfg.sigma)
                                    : Eigen::VectorXd(0.1 * mdp.action_half_width());
  return ProjectionParams{p, std::move(sigma), cfg.k_max, cfg.fallback, mdp.action_low, mdp.action_high};
}

ProjectionParams resolve_projection(const LrConfig& cfg, const SupportModel& m, const FixedDataset& d) {
  const double p = cfg.p.mode == ThresholdSpec::Mode::quantile ? calibrate_threshold(m, d, cfg.p.value) : cfg.p.value;
  return make_projection_params(p, cfg, mdp_spec(d.meta().env_id));
}

ProjectionOutcome lr_project(const SupportModel& m, const Eigen::VectorXd& s_next, const Eigen::VectorXd& a_proposed,
                             const ProjectionParams& params, Rng& rng, const FixedDataset* dataset) {
  auto out = project_records(m, s_next, a_proposed, params, [&](std::size_t) -> Rng& { return rng; }, dataset);
  return std::move(out.front());
}

std::vector<ProjectionOutcome> lr_project_batch(const SupportModel& m, const Eigen::MatrixXd& s_next,
                                                const Eigen::MatrixXd& a_proposed, const ProjectionParams& params,
                                                const std::vector<std::uint64_t>& seeds, const FixedDataset* dataset) {
  if (seeds.size() != static_cast<std::size_t>(a_proposed.cols())) throw DimensionError("one seed per record required");
  std::vector<std::optional<Rng>> rngs(seeds.size());
  return project_records(
      m, s_next, a_proposed, params,
      [&](std::size_t j) -> Rng& {
        if (!rngs[j]) rngs[j].emplace(seeds[j]);
        return *rngs[j];
      },
      dataset);
}

double TrainMetrics::max_abs_q() const {
  double m = 0.0;
  for (const auto& r : records)
    if (std::isfinite(r.max_abs_q)) m = std::max(m, r.max_abs_q);
  return m;
}

std::string metrics_csv(const TrainMetrics& m) {
  std::string out = std::string(kMetricsCsvHeader) + "\n";
  for (const auto& r : m.records) {
    out += std::to_string(r.step) + "," + fmt(r.critic_loss) + "," + fmt(r.actor_loss) + "," + fmt(r.mean_target_y) +
           "," + fmt(r.mean_abs_q) + "," + fmt(r.max_abs_q) + "," + fmt(r.projection_rate) + "," +
           fmt(r.fallback_rate) + "," + fmt(r.mean_iterations) + "," + (r.eval_mean ? fmt(*r.eval_mean) : "") + "," +
           (r.eval_std ? fmt(*r.eval_std) : "") + "\n";
  }
  return out;
}

nlohmann::ordered_json metrics_summary(const TrainMetrics& m) {
  nlohmann::ordered_json j;
  j["records"] = m.records.size();
  j["gated_records"] = m.gated_records;
  j["projection_rate"] = m.overall_projection_rate();
  j["fallback_rate"] = m.overall_fallback_rate();
  j["max_abs_q"] = m.max_abs_q();
  if (!m.records.empty()) {
    const auto& r = m.records.back();
    j["final_step"] = r.step;
    j["final_critic_loss"] = std::isfinite(r.critic_loss) ? nlohmann::ordered_json(r.critic_loss) : nullptr;
    j["final_actor_loss"] = r.actor_loss;
    j["final_max_abs_q"] = std::isfinite(r.max_abs_q) ? nlohmann::ordered_json(r.max_abs_q) : nullptr;
  }
  return j;
}

TrainResult train_lr_ddpg(const FixedDataset& d, const SupportModel& m, const DdpgConfig& dcfg, const LrConfig& lcfg,
                          std::uint64_t seed, const EvalHook& eval) {
  if (m.state_dim != d.meta().state_dim || m.action_dim != d.meta().action_dim) {
    throw DimensionError("support model dims do not match dataset");
  }
  const ProjectionParams params = resolve_projection(lcfg, m, d);

  auto project = [&, params](std::uint64_t tag, std::size_t step, const Eigen::MatrixXd& s,
                             const Eigen::MatrixXd& a) {
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(a.cols()));
    for (std::size_t j = 0; j < seeds.size(); ++j) seeds[j] = derive_seed(seed, {tag, step, j});
    return lr_project_batch(m, s, a, params, seeds, &d);
  };

  GateFn gate = [&](std::size_t step, const Eigen::MatrixXd& s_next, const Eigen::MatrixXd& proposed,
                    GateTally& tally) {
    const auto outcomes = project(3, step, s_next, proposed);
    Eigen::MatrixXd chosen(proposed.rows(), proposed.cols());
    for (std::size_t j = 0; j < outcomes.size(); ++j) {
      tally.add(outcomes[j]);
      chosen.col(static_cast<Eigen::Index>(j)) = outcomes[j].action;
    }
    return chosen;
  };

  PullFn pull;
  if (lcfg.constrain_actor) {
    pull = [&](std::size_t step, const Eigen::MatrixXd& s, const DdpgAgent& agent) -> std::optional<ActorPull> {
      const Eigen::MatrixXd a = policy_actions(agent, s, false);
      const auto outcomes = project(4, step, s, a);
      ActorPull p{Eigen::MatrixXd(a.rows(), a.cols()), std::vector<bool>(outcomes.size())};
      for (std::size_t j = 0; j < outcomes.size(); ++j) {
        p.target_actions.col(static_cast<Eigen::Index>(j)) = outcomes[j].action;
        p.active[j] = outcomes[j].iterations_used > 0;
      }
      return p;
    };
  }

  auto res = run_offline_ddpg(d, dcfg, seed, gate, pull, eval);
  res.threshold = params.p;
  return res;
}

TrainResult train_baseline(const FixedDataset& d, BaselineAlgo algo, const DdpgConfig& dcfg, std::uint64_t seed,
                           const EvalHook& eval) {
  if (algo == BaselineAlgo::behavior_clone) return run_behavior_clone(d, dcfg, seed, eval);
  return run_offline_ddpg(d, dcfg, seed, GateFn{}, PullFn{}, eval);
}

}  // namespace lr
