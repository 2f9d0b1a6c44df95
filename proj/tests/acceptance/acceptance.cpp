// One PASS/FAIL line per acceptance criterion, plus INFO lines.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "lr/bench.hpp"
#include "lr/binary_io.hpp"
#include "lr/cli.hpp"
#include "lr/ddpg.hpp"
#include "lr/lr.hpp"
#include "lr/support_gan.hpp"

using namespace lr;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void verdict(int id, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

void info(const std::string& line) {
  std::printf("INFO %s\n", line.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

FixedDataset make_data(EnvId env, std::size_t n, std::uint64_t seed) {
  return generate_dataset(env, BehaviorPolicy::preset(BehaviorKind::suboptimal_pd, env), n, seed);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Largest relative FD error over every scalar in `params`.
double fd_worst(MlpParams& params, const MlpParams& grads, const std::function<double()>& loss) {
  const double h = 1e-5;
  auto theta = flatten(params);
  const auto g = flatten(grads);
  double worst = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    auto t = theta;
    t[k] += h;
    assign_flat(params, t);
    const double fp = loss();
    t[k] -= 2 * h;
    assign_flat(params, t);
    const double fm = loss();
    worst = std::max(worst, testing::rel_err(g[k], (fp - fm) / (2 * h)));
  }
  assign_flat(params, theta);
  return worst;
}

void fill_normal(Eigen::MatrixXd& m, Rng& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng);
}

void criterion1() {
  const auto t0 = Clock::now();
  const int draws = 100;
  Rng rng(2024);
  double worst_critic = 0, worst_actor = 0, worst_dis = 0, worst_gen = 0;
  const auto& mdp = mdp_spec(EnvId::point_mass_1d);
  for (int draw = 0; draw < draws; ++draw) {
    DdpgConfig dc;
    dc.actor_hidden = {16, 16};
    dc.critic_hidden = {16, 16};
    auto agent = make_agent(mdp, dc, rng);
    // Smooth hidden units so central differences never straddle a kink.
    agent.q_spec = MlpSpec({3, 16, 16, 1}, Activation::tanh, Activation::identity);
    agent.pi_spec = MlpSpec({2, 16, 16, 1}, Activation::tanh, Activation::tanh);
    agent.q = init_params(agent.q_spec, rng);
    agent.pi = init_params(agent.pi_spec, rng);

    TransitionBatch b;
    b.s.resize(2, 8);
    b.a.resize(1, 8);
    b.s_next.resize(2, 8);
    b.r = Eigen::VectorXd::Zero(8);
    b.done = Eigen::VectorXd::Zero(8);
    fill_normal(b.s, rng);
    fill_normal(b.s_next, rng);
    for (Eigen::Index j = 0; j < 8; ++j) b.a(0, j) = uniform_real(rng, -1, 1);
    Eigen::VectorXd y(8);
    for (Eigen::Index j = 0; j < 8; ++j) y(j) = 3.0 * standard_normal(rng);

    worst_critic = std::max(worst_critic, fd_worst(agent.q, critic_loss(agent, b, y).grads,
                                                   [&] { return critic_loss(agent, b, y).loss; }));
    worst_actor = std::max(worst_actor, fd_worst(agent.pi, actor_objective(agent, b.s).grads,
                                                 [&] { return -actor_objective(agent, b.s).mean_q; }));

    GanConfig gc;
    gc.dis_hidden = {16, 16};
    gc.gen_hidden = {16};
    gc.latent_dim = 2;
    gc.dis_activation = Activation::tanh;
    gc.gen_activation = Activation::tanh;
    auto m = make_zero_support_model(2, 1, gc);
    m.dis_params = init_params(m.dis_spec, rng);
    m.gen_params = init_params(m.gen_spec, rng);
    m.gen_center = Eigen::VectorXd::Zero(3);
    m.gen_half = Eigen::VectorXd::Constant(3, 1.5);
    Eigen::MatrixXd real(3, 8), fake(3, 8), box(3, 4), z(2, 8);
    for (auto* x : {&real, &fake, &box, &z}) fill_normal(*x, rng);
    worst_dis = std::max(worst_dis, fd_worst(m.dis_params, dis_loss(m, real, fake, box).grads,
                                             [&] { return dis_loss(m, real, fake, box).loss; }));
    worst_gen = std::max(worst_gen, fd_worst(m.gen_params, gen_loss(m, z).grads, [&] { return gen_loss(m, z).loss; }));
  }
  const double secs = seconds_since(t0);
  const double worst = std::max({worst_critic, worst_actor, worst_dis, worst_gen});
  verdict(1, worst <= 1e-4 && secs < 30.0,
          fmt("%d draws, worst rel err critic %.2e actor %.2e disc %.2e gen %.2e (<= 1e-4), %.1fs (< 30s)", draws,
              worst_critic, worst_actor, worst_dis, worst_gen, secs));
}

const FixedDataset& bandit_data() {
  static const FixedDataset d = make_data(EnvId::narrow_support_bandit, 20000, 1);
  return d;
}

double bandit_gan_seconds = 0.0;

const SupportModel& bandit_model() {
  static const SupportModel m = [] {
    const auto t0 = Clock::now();
    auto model = train_gan(bandit_data(), GanConfig{}, 1);
    bandit_gan_seconds = seconds_since(t0);
    return model;
  }();
  return m;
}

std::string checkpoint_bytes(const DdpgAgent& a) {
  return encode_checkpoint(a.q) + encode_checkpoint(a.pi) + encode_checkpoint(a.q_target) +
         encode_checkpoint(a.pi_target);
}

void criterion2() {
  const auto t0 = Clock::now();
  DdpgConfig dc;
  dc.total_steps = 2000;
  LrConfig lc;
  lc.p = ThresholdSpec::absolute(0.0);
  const auto gated = train_lr_ddpg(bandit_data(), bandit_model(), dc, lc, 1);
  const auto naive = train_baseline(bandit_data(), BaselineAlgo::naive_ddpg, dc, 1);
  const bool same = checkpoint_bytes(gated.agent) == checkpoint_bytes(naive.agent);
  const double secs = seconds_since(t0);
  verdict(2, same && gated.metrics.projected_records == 0 && secs < 120.0,
          fmt("p = 0 vs naive DDPG after %zu steps: checkpoints %s, %zu projected records, %.1fs (< 120s)", dc.total_steps,
              same ? "bitwise identical" : "DIFFER", gated.metrics.projected_records, secs));
}

struct ProjectionStats {
  double fallback_rate = 0.0;
  bool in_box = true;
  bool threshold_met = true;  // confidence >= p unless flagged
  double mean_iterations = 0.0;
};

ProjectionStats rare_projections(std::size_t k_max) {
  const auto& m = bandit_model();
  LrConfig lc;
  lc.k_max = k_max;
  const auto params = resolve_projection(lc, m, bandit_data());
  Rng rng(derive_seed(3, {0}));
  const int n = 1000;
  const Eigen::VectorXd s = Eigen::VectorXd::Zero(1);
  ProjectionStats st;
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd a(1);
    a << uniform_real(rng, 0.6, 1.0);
    Rng call_rng(derive_seed(3, {1, static_cast<std::uint64_t>(j)}));
    const auto o = lr_project(m, s, a, params, call_rng);
    st.fallback_rate += o.fallback_used ? 1.0 / n : 0.0;
    st.mean_iterations += static_cast<double>(o.iterations_used) / n;
    st.threshold_met = st.threshold_met && (o.fallback_used || confidence(m, s, o.action) >= params.p);
    st.in_box = st.in_box && (o.action.array() >= params.action_low.array()).all() &&
                (o.action.array() <= params.action_high.array()).all();
  }
  return st;
}

void criterion3() {
  const auto t0 = Clock::now();
  const auto& m = bandit_model();
  LrConfig lc;
  const auto params = resolve_projection(lc, m, bandit_data());

  // No-op property over a dense action grid.
  Rng rng(1);
  std::size_t checked = 0, violations = 0;
  for (int i = 0; i <= 20000; ++i) {
    Eigen::VectorXd a(1);
    a << -1.0 + i * 1e-4;
    const Eigen::VectorXd s = Eigen::VectorXd::Zero(1);
    if (confidence(m, s, a) < params.p) continue;
    ++checked;
    const auto o = lr_project(m, s, a, params, rng);
    violations += o.iterations_used != 0 || o.action != a;
  }

  const auto capped = rare_projections(lc.k_max);
  info(fmt("criterion 3 at default k_max=%zu: fallback %.1f%%, mean iterations %.1f", lc.k_max,
           100 * capped.fallback_rate, capped.mean_iterations));
  const std::size_t k_long = 1000;
  const auto st = rare_projections(k_long);
  verdict(3, st.fallback_rate <= 0.05 && st.in_box && st.threshold_met && violations == 0 && checked > 0,
          fmt("1000 projections from [0.6, 1.0] at k_max=%zu: fallback %.1f%% (<= 5%%), rest above p: %s, all in box: %s; no-op "
              "check %zu/%zu grid points unchanged; p=%.4f, %.1fs",
              k_long, 100 * st.fallback_rate, st.threshold_met ? "yes" : "NO", st.in_box ? "yes" : "NO", checked - violations, checked, params.p,
              seconds_since(t0)));
}

void criterion4() {
  const auto& m = bandit_model();
  const auto hold = make_data(EnvId::narrow_support_bandit, 5000, 101);
  Rng rng(4);
  PairSet out{Eigen::MatrixXd::Zero(1, 5000), Eigen::MatrixXd(1, 5000)};
  for (Eigen::Index j = 0; j < 5000; ++j) out.a(0, j) = uniform_real(rng, 0.6, 1.0);
  const double auc = support_auc(m, PairSet{hold.all().s, hold.all().a}, out);
  verdict(4, auc >= 0.9 && bandit_gan_seconds <= 120.0,
          fmt("AUC held-out support vs [0.6, 1.0] = %.4f (>= 0.9), training %.1fs (<= 120s)", auc,
              bandit_gan_seconds));
}

void criterion5() {
  const auto t0 = Clock::now();
  const auto& mdp = mdp_spec(EnvId::narrow_support_bandit);
  DdpgConfig dc;
  dc.gamma = 0.99;
  dc.total_steps = 20000;
  dc.terminal_masking = false;
  const double bound = q_bound(dc.gamma, mdp.reward_low, mdp.reward_high) + 1.0;
  int ok_seeds = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto d = make_data(EnvId::narrow_support_bandit, 20000, seed);
    const auto m = train_gan(d, GanConfig{}, seed);
    const auto gated = train_lr_ddpg(d, m, dc, LrConfig{}, seed);
    const auto naive = train_baseline(d, BaselineAlgo::naive_ddpg, dc, seed);
    const double lr_max = gated.metrics.max_abs_q();
    const double lr_final = gated.metrics.records.back().max_abs_q;
    const double naive_max = naive.metrics.max_abs_q();
    const double naive_final = naive.metrics.records.back().max_abs_q;
    const bool ok = lr_max <= bound && (naive_max > bound || naive_final >= 2.0 * lr_final);
    ok_seeds += ok;
    info(fmt("criterion 5 seed %llu: LR max|Q| %.2f (final %.2f), naive max|Q| %.2f (final %.2f), ratio %.2f -> %s",
             static_cast<unsigned long long>(seed), lr_max, lr_final, naive_max, naive_final, naive_final / lr_final,
             ok ? "ok" : "miss"));
  }
  const double secs = seconds_since(t0);
  verdict(5, ok_seeds >= 4 && secs <= 600.0,
          fmt("%d/5 seeds with LR max|Q| <= %.2f and naive above the bound or >= 2x LR (need 4), %.1fs (<= 600s)",
              ok_seeds, bound, secs));
}

void criterion6() {
  const auto t0 = Clock::now();
  const auto env = EnvId::point_mass_1d;
  const auto& mdp = mdp_spec(env);
  DdpgConfig dc;
  const auto behavior = BehaviorPolicy::preset(BehaviorKind::suboptimal_pd, env);
  std::vector<double> lr_ret, naive_ret, beh_ret;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto d = make_data(env, 50000, seed);
    const auto m = train_gan(d, GanConfig{}, seed);
    const auto gated = train_lr_ddpg(d, m, dc, LrConfig{}, seed);
    const auto naive = train_baseline(d, BaselineAlgo::naive_ddpg, dc, seed);
    const std::uint64_t eval_seed = 1000;
    lr_ret.push_back(evaluate_policy(env, actor_policy(gated.agent), 20, mdp.horizon_default, dc.gamma, eval_seed)
                         .mean_return);
    naive_ret.push_back(evaluate_policy(env, actor_policy(naive.agent), 20, mdp.horizon_default, dc.gamma, eval_seed)
                            .mean_return);
    beh_ret.push_back(
        evaluate_policy(env, behavior_policy(behavior, eval_seed), 20, mdp.horizon_default, dc.gamma, eval_seed)
            .mean_return);
    info(fmt("criterion 6 seed %llu: LR %.2f naive %.2f behavior %.2f", static_cast<unsigned long long>(seed),
             lr_ret.back(), naive_ret.back(), beh_ret.back()));
  }
  const double lr_med = median(lr_ret), naive_med = median(naive_ret), beh_med = median(beh_ret);
  const double secs = seconds_since(t0);
  verdict(6, lr_med >= beh_med && lr_med >= naive_med && secs <= 1200.0,
          fmt("median return LR %.2f vs behavior %.2f and naive %.2f over 5 seeds, %.1fs (<= 1200s)", lr_med, beh_med,
              naive_med, secs));
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = io::read_file(e.path());
  return out;
}

bool run_pipeline(const fs::path& dir) {
  const std::vector<std::string> common = {"--env", "narrow_support_bandit", "--n", "3000", "--seed", "5",
                                           "--output-dir", dir.string(), "--gan-steps", "300", "--steps", "200",
                                           "--episodes", "5"};
  auto call = [&](std::vector<std::string> args) {
    args.insert(args.end(), common.begin(), common.end());
    std::ostringstream out, err;
    const int s = cli::dispatch(args, out, err);
    if (s != 0) info("criterion 7 command failed: " + err.str());
    return s == 0;
  };
  bool ok = call({"gen-data"}) && call({"train-support"});
  for (std::string algo : {"lr-ddpg", "ddpg", "bc"}) ok = ok && call({"train", "--algo", algo}) && call({"eval", "--algo", algo});
  const auto report_cfg = dir / "report_cfg.json";
  io::write_file_atomic(report_cfg, R"({"report": {"algos": ["lr-ddpg", "ddpg", "bc"]}})");
  return ok && call({"report", "--config", report_cfg.string()});
}

void criterion7() {
  const auto t0 = Clock::now();
  testing::TempDir a("accept_a"), b("accept_b");
  const bool ran = run_pipeline(a.path()) && run_pipeline(b.path());
  const auto ta = tree_bytes(a.path()), tb = tree_bytes(b.path());
  std::size_t differing = 0;
  for (const auto& [name, bytes] : ta) {
    const auto it = tb.find(name);
    if (it == tb.end() || it->second != bytes) {
      ++differing;
      info("criterion 7 differs: " + name);
    }
  }
  verdict(7, ran && differing == 0 && ta.size() == tb.size(),
          fmt("two CLI runs of gen-data/train-support/train/eval/report: %zu artifacts, %zu differing, %.1fs",
              ta.size(), differing, seconds_since(t0)));
}

// Exact values of a deterministic stationary policy on the two-state chain.
std::array<double, 2> chain_values(const std::array<int, 2>& choice, double gamma) {
  std::array<double, 2> v{0.0, 0.0};
  for (int it = 0; it < 100000; ++it) {
    std::array<double, 2> nv;
    for (int s = 0; s < 2; ++s) nv[s] = two_state::kReward[s][choice[s]] + gamma * v[choice[s]];
    const double delta = std::max(std::abs(nv[0] - v[0]), std::abs(nv[1] - v[1]));
    v = nv;
    if (delta < 1e-14) break;
  }
  return v;
}

void criterion8() {
  const double gamma = 0.9;
  const auto env = EnvId::two_state_chain;
  double worst = 0.0;
  for (int c0 = 0; c0 < 2; ++c0) {
    for (int c1 = 0; c1 < 2; ++c1) {
      const std::array<int, 2> choice{c0, c1};
      Policy pol = [choice](const EnvState& s) {
        Eigen::VectorXd a(1);
        a << (choice[s.state(0) > 0.5 ? 1 : 0] ? 0.5 : -0.5);
        return a;
      };
      const auto v = chain_values(choice, gamma);
      const auto r = evaluate_policy(env, pol, 10, two_state::kHorizon, gamma, 7);
      for (std::size_t i = 0; i < r.episode_seeds.size(); ++i) {
        const int start = static_cast<int>(env_reset(env, r.episode_seeds[i]).state(0));
        worst = std::max(worst, std::abs(r.disc_returns[i] - v[start]));
      }
    }
  }
  verdict(8, worst <= 1e-6,
          fmt("evaluator vs value iteration on the two-state chain (gamma 0.9, horizon 1000): max |diff| %.2e (<= 1e-6)",
              worst));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6();
  criterion7();
  criterion8();
  info(fmt("total %.1fs, %d failing", seconds_since(t0), failures));
  return failures == 0 ? 0 : 1;
}
