#include <doctest.h>

#include <cmath>
#include <cstring>

#include "helpers.hpp"
#include "lr/error.hpp"
#include "lr/lr.hpp"

using namespace lr;
using lr::testing::vec;

namespace {

FixedDataset bandit_sample(std::size_t n, std::uint64_t seed) {
  const auto env = EnvId::narrow_support_bandit;
  return generate_dataset(env, BehaviorPolicy::preset(BehaviorKind::suboptimal_pd, env), n, seed);
}

const FixedDataset& bandit_data() {
  static const FixedDataset d = bandit_sample(20000, 1);
  return d;
}

const SupportModel& bandit_model() {
  static const SupportModel m = train_gan(bandit_data(), GanConfig{}, 1);
  return m;
}

ProjectionParams params_for(double p, std::size_t k_max) {
  LrConfig c;
  c.k_max = k_max;
  return make_projection_params(p, c, mdp_spec(EnvId::narrow_support_bandit));
}

DdpgConfig short_run(std::size_t steps) {
  DdpgConfig c;
  c.total_steps = steps;
  c.batch_n = 32;
  c.actor_hidden = {16, 16};
  c.critic_hidden = {16, 16};
  c.metrics_every = 10;
  return c;
}

bool same_agent_bits(const DdpgAgent& a, const DdpgAgent& b) {
  auto eq = [](const MlpParams& x, const MlpParams& y) {
    const auto fx = flatten(x), fy = flatten(y);
    return fx.size() == fy.size() && std::memcmp(fx.data(), fy.data(), fx.size() * sizeof(double)) == 0;
  };
  return eq(a.q, b.q) && eq(a.pi, b.pi) && eq(a.q_target, b.q_target) && eq(a.pi_target, b.pi_target);
}

}  // namespace

TEST_SUITE("lr") {
  TEST_CASE("supported proposals pass through untouched") {
    const auto& m = bandit_model();
    const double p = calibrate_threshold(m, bandit_data(), 0.1);
    const auto params = params_for(p, 100);
    Rng rng(1);
    int passed = 0;
    for (int i = 0; i <= 2000; ++i) {
      const Eigen::VectorXd a = vec({-1.0 + i * 0.001});
      if (confidence(m, vec({0}), a) < p) continue;
      const auto o = lr_project(m, vec({0}), a, params, rng);
      CHECK(o.iterations_used == 0);
      CHECK(o.action == a);
      CHECK_FALSE(o.fallback_used);
      ++passed;
    }
    CHECK(passed > 0);
  }

  TEST_CASE("unreachable threshold exhausts the cap and falls back") {
    const auto m = make_zero_support_model(1, 1);
    const auto params = params_for(0.6, 5);
    Rng rng(2);
    const auto o = lr_project(m, vec({0}), vec({0.9}), params, rng);
    CHECK(o.fallback_used);
    CHECK(o.iterations_used == 5);
    CHECK(o.action == vec({0.9}));
    CHECK(o.final_confidence == 0.5);
  }

  TEST_CASE("projection stays in the box and meets the threshold unless it falls back") {
    const auto& m = bandit_model();
    const double p = calibrate_threshold(m, bandit_data(), 0.1);
    const auto params = params_for(p, 100);
    Rng rng(3);
    for (int i = 0; i < 300; ++i) {
      const auto o = lr_project(m, vec({0}), vec({uniform_real(rng, -1, 1)}), params, rng);
      CHECK(o.action(0) >= -1.0);
      CHECK(o.action(0) <= 1.0);
      CHECK((o.final_confidence >= p || o.fallback_used));
      CHECK(o.final_confidence == confidence(m, vec({0}), o.action));
    }
  }

  TEST_CASE("batch results do not depend on grouping") {
    const auto& m = bandit_model();
    const auto params = params_for(calibrate_threshold(m, bandit_data(), 0.1), 100);
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(1, 8), a(1, 8);
    std::vector<std::uint64_t> seeds;
    for (int j = 0; j < 8; ++j) {
      a(0, j) = -1.0 + 0.25 * j;
      seeds.push_back(100 + j);
    }
    const auto all = lr_project_batch(m, s, a, params, seeds);
    for (int j = 0; j < 8; ++j) {
      Rng rng(seeds[j]);
      const auto one = lr_project(m, s.col(j), a.col(j), params, rng);
      CHECK(one.action == all[j].action);
      CHECK(one.iterations_used == all[j].iterations_used);
    }
    const auto half = lr_project_batch(m, s.rightCols(4), a.rightCols(4), params,
                                       std::vector<std::uint64_t>(seeds.begin() + 4, seeds.end()));
    for (int j = 0; j < 4; ++j) CHECK(half[j].action == all[j + 4].action);
    CHECK_THROWS_AS(lr_project_batch(m, s, a, params, {1, 2}), DimensionError);
  }

  TEST_CASE("dataset_nearest fallback returns a dataset action") {
    const auto m = make_zero_support_model(1, 1);
    LrConfig c;
    c.k_max = 3;
    c.fallback = Fallback::dataset_nearest;
    const auto params = make_projection_params(0.9, c, mdp_spec(EnvId::narrow_support_bandit));
    const auto d = lr::testing::bandit_dataset({lr::testing::make_transition(0, 0.11, 0, 0, true),
                                                lr::testing::make_transition(0, -0.07, 0, 0, true)});
    Rng rng(4);
    const auto o = lr_project(m, vec({0}), vec({0.95}), params, rng, &d);
    CHECK(o.fallback_used);
    CHECK((o.action(0) == 0.11 || o.action(0) == -0.07));
  }

  TEST_CASE("rare actions are pulled back into the data support") {
    const auto& m = bandit_model();
    const auto params = params_for(calibrate_threshold(m, bandit_data(), 0.1), 1000);
    Rng rng(5);
    int inside = 0;
    const int calls = 200;
    for (int i = 0; i < calls; ++i) {
      const auto o = lr_project(m, vec({0}), vec({0.9}), params, rng);
      inside += std::abs(o.action(0)) <= 0.4;
    }
    CHECK(inside >= 0.95 * calls);
  }

  TEST_CASE("zero training steps return the initialization") {
    const auto& d = bandit_data();
    const auto cfg = short_run(0);
    Rng init(derive_seed(7, {1}));
    const auto fresh = make_agent(mdp_spec(EnvId::narrow_support_bandit), cfg, init);
    const auto naive = train_baseline(d, BaselineAlgo::naive_ddpg, cfg, 7);
    CHECK(same_agent_bits(naive.agent, fresh));
    CHECK(naive.metrics.records.empty());
    const auto gated = train_lr_ddpg(d, bandit_model(), cfg, LrConfig{}, 7);
    CHECK(same_agent_bits(gated.agent, fresh));
  }

  TEST_CASE("training is deterministic") {
    const auto& d = bandit_data();
    const auto cfg = short_run(40);
    LrConfig lc;
    const auto a = train_lr_ddpg(d, bandit_model(), cfg, lc, 11);
    const auto b = train_lr_ddpg(d, bandit_model(), cfg, lc, 11);
    CHECK(same_agent_bits(a.agent, b.agent));
    CHECK(metrics_csv(a.metrics) == metrics_csv(b.metrics));
    const auto c = train_lr_ddpg(d, bandit_model(), cfg, lc, 12);
    CHECK_FALSE(a.agent.q == c.agent.q);
  }

  TEST_CASE("zero threshold reproduces naive DDPG bit for bit") {
    const auto& d = bandit_data();
    const auto cfg = short_run(60);
    LrConfig lc;
    lc.p = ThresholdSpec::absolute(0.0);
    const auto lr_run = train_lr_ddpg(d, bandit_model(), cfg, lc, 3);
    const auto naive = train_baseline(d, BaselineAlgo::naive_ddpg, cfg, 3);
    CHECK(same_agent_bits(lr_run.agent, naive.agent));
    CHECK(lr_run.metrics.projected_records == 0);
    CHECK(*lr_run.threshold == 0.0);
  }

  TEST_CASE("gated runs record projection statistics") {
    const auto& d = bandit_data();
    const auto cfg = short_run(30);
    LrConfig lc;
    lc.constrain_actor = true;
    const auto r = train_lr_ddpg(d, bandit_model(), cfg, lc, 5);
    CHECK(r.metrics.gated_records == 30 * 32);
    CHECK(r.threshold.has_value());
    CHECK(r.agent.q.all_finite());
    CHECK(r.agent.pi.all_finite());
  }

  TEST_CASE("behavior cloning recovers a noiseless expert") {
    const auto env = EnvId::point_mass_1d;
    const BehaviorPolicy expert{BehaviorKind::expert_pd, 0.0, 1.0};
    const auto d = generate_dataset(env, expert, 4000, 1);
    DdpgConfig cfg;
    cfg.total_steps = 4000;
    cfg.lr_actor = 1e-3;
    cfg.metrics_every = 1000;
    const auto r = train_baseline(d, BaselineAlgo::behavior_clone, cfg, 1);
    CHECK(std::isnan(r.metrics.records.back().critic_loss));

    const auto held = generate_dataset(env, expert, 1000, 99);
    const auto all = held.all();
    const Eigen::MatrixXd pred = policy_actions(r.agent, all.s, false);
    CHECK((pred - all.a).cwiseAbs().mean() <= 0.05);
  }

  TEST_CASE("metrics csv layout") {
    TrainMetrics m;
    m.records.push_back(TrainRecord{10, 0.5, -1.0, 2.0, 1.0, 3.0, 0.25, 0.0, 1.5, 7.0, 0.5});
    m.records.push_back(TrainRecord{20, 0.25, -1.0, 2.0, 1.0, 4.0, 0.0, 0.0, 0.0, std::nullopt, std::nullopt});
    const auto csv = metrics_csv(m);
    CHECK(csv.starts_with(std::string(kMetricsCsvHeader) + "\n"));
    CHECK(csv.find("10,0.5,-1,2,1,3,0.25,0,1.5,7,0.5\n") != std::string::npos);
    CHECK(csv.ends_with("20,0.25,-1,2,1,4,0,0,0,,\n"));
    CHECK(m.max_abs_q() == 4.0);
    CHECK(metrics_summary(m)["final_step"] == 20);
  }

  TEST_CASE("config json and validation") {
    LrConfig c;
    c.p = ThresholdSpec::absolute(0.4);
    c.sigma = 0.2;
    c.fallback = Fallback::dataset_nearest;
    const auto back = lr_config_from_json(nlohmann::json::parse(to_json(c).dump()));
    CHECK(back.p.mode == ThresholdSpec::Mode::absolute);
    CHECK(back.p.value == 0.4);
    CHECK(*back.sigma == 0.2);
    CHECK(back.fallback == Fallback::dataset_nearest);
    CHECK_THROWS_AS(lr_config_from_json(nlohmann::json{{"p", 0.1}, {"quantile", 0.1}}), ConfigError);
    CHECK_THROWS_AS(lr_config_from_json(nlohmann::json{{"k_max", 0}}), ConfigError);
    CHECK_THROWS_AS(parse_fallback("closest"), ConfigError);
    const auto params = make_projection_params(0.3, LrConfig{}, mdp_spec(EnvId::point_mass_1d));
    CHECK(params.sigma(0) == doctest::Approx(0.1));
  }
}
