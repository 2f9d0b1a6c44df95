#include "lr/env.hpp"

#include <algorithm>
#include <cmath>

#include "lr/error.hpp"

namespace lr {

namespace {

MdpSpec make_spec(EnvId id) {
  switch (id) {
    case EnvId::point_mass_1d: {
      const double worst = (point_mass::kWall + point_mass::kGoal) * (point_mass::kWall + point_mass::kGoal);
      return MdpSpec{id, 2, 1, Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0),
                     point_mass::kHorizon, -(worst + point_mass::kActionCost), 0.0};
    }
    case EnvId::narrow_support_bandit: {
      const double far = 1.0 + bandit::kOptimum;
      return MdpSpec{id, 1, 1, Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0), 1,
                     1.0 - far * far, 1.0};
    }
    case EnvId::two_state_chain:
      return MdpSpec{id, 1, 1, Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0),
                     two_state::kHorizon, 0.0, 1.0};
  }
  throw ConfigError("unknown env id");
}

}  // namespace

std::string_view to_string(EnvId id) {
  switch (id) {
    case EnvId::point_mass_1d:
      return "point_mass_1d";
    case EnvId::narrow_support_bandit:
      return "narrow_support_bandit";
    case EnvId::two_state_chain:
      return "two_state_chain";
  }
  return "unknown";
}

EnvId parse_env_id(std::string_view name) {
  if (name == "point_mass_1d") return EnvId::point_mass_1d;
  if (name == "narrow_support_bandit") return EnvId::narrow_support_bandit;
  if (name == "two_state_chain") return EnvId::two_state_chain;
  throw ConfigError("unknown env id '" + std::string(name) + "'");
}

const MdpSpec& mdp_spec(EnvId id) {
  static const MdpSpec specs[] = {make_spec(EnvId::point_mass_1d), make_spec(EnvId::narrow_support_bandit),
                                  make_spec(EnvId::two_state_chain)};
  return specs[static_cast<int>(id)];
}

EnvState env_reset(EnvId id, std::uint64_t seed) {
  const auto& spec = mdp_spec(id);
  EnvState st{id, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.state_dim)), 0};
  switch (id) {
    case EnvId::point_mass_1d: {
      Rng rng(derive_seed(seed, {0x5e7}));
      st.state(0) = uniform_real(rng, -1.0, 1.0);
      st.state(1) = 0.0;
      break;
    }
    case EnvId::narrow_support_bandit:
      break;
    case EnvId::two_state_chain:
      st.state(0) = static_cast<double>(seed % 2);
      break;
  }
  return st;
}

StepResult env_step(const EnvState& state, const Eigen::VectorXd& action) {
  const auto& spec = mdp_spec(state.env_id);
  if (static_cast<std::size_t>(state.state.size()) != spec.state_dim) {
    throw DimensionError("env_step: state has size " + std::to_string(state.state.size()) + ", expected " +
                         std::to_string(spec.state_dim));
  }
  if (static_cast<std::size_t>(action.size()) != spec.action_dim) {
    throw DimensionError("env_step: action has size " + std::to_string(action.size()) + ", expected " +
                         std::to_string(spec.action_dim));
  }
  const Eigen::VectorXd a = spec.clip(action);
  StepResult out{state, 0.0, false};
  out.next.step_index = state.step_index + 1;

  switch (state.env_id) {
    case EnvId::point_mass_1d: {
      using namespace point_mass;
      const double pos = state.state(0);
      const double vel = state.state(1);
      double pos_next = pos + kDt * vel;
      double vel_next = vel + kDt * (a(0) - kDrag * vel);
      if (pos_next > kWall || pos_next < -kWall) {
        pos_next = std::clamp(pos_next, -kWall, kWall);
        vel_next = 0.0;
      }
      out.next.state(0) = pos_next;
      out.next.state(1) = vel_next;
      out.reward = -(pos_next - kGoal) * (pos_next - kGoal) - kActionCost * a(0) * a(0);
      out.done = out.next.step_index == spec.horizon_default;
      break;
    }
    case EnvId::narrow_support_bandit: {
      const double d = a(0) - bandit::kOptimum;
      out.reward = 1.0 - d * d;
      out.done = true;
      break;
    }
    case EnvId::two_state_chain: {
      const int s = state.state(0) >= 0.5 ? 1 : 0;
      const int c = two_state::choice(a(0));
      out.reward = two_state::kReward[s][c];
      out.next.state(0) = static_cast<double>(c);
      out.done = out.next.step_index == spec.horizon_default;
      break;
    }
  }
  return out;
}

std::string_view to_string(BehaviorKind k) {
  switch (k) {
    case BehaviorKind::uniform_random:
      return "uniform_random";
    case BehaviorKind::suboptimal_pd:
      return "suboptimal_pd";
    case BehaviorKind::expert_pd:
      return "expert_pd";
  }
  return "unknown";
}

BehaviorKind parse_behavior_kind(std::string_view name) {
  if (name == "uniform_random") return BehaviorKind::uniform_random;
  if (name == "suboptimal_pd") return BehaviorKind::suboptimal_pd;
  if (name == "expert_pd") return BehaviorKind::expert_pd;
  throw ConfigError("unknown behavior kind '" + std::string(name) + "'");
}

BehaviorPolicy BehaviorPolicy::preset(BehaviorKind kind, EnvId env) {
  switch (kind) {
    case BehaviorKind::uniform_random:
      return {kind, 0.0, 1.0};
    case BehaviorKind::expert_pd:
      return {kind, 0.1, 1.0};
    case BehaviorKind::suboptimal_pd:
      // The bandit's suboptimal data is deliberately narrow around a = 0.
      return {kind, env == EnvId::narrow_support_bandit ? 0.1 : 0.3, 0.3};
  }
  return {};
}

Eigen::VectorXd behavior_action(const BehaviorPolicy& policy, const EnvState& state, Rng& rng) {
  const auto& spec = mdp_spec(state.env_id);
  const auto dim = static_cast<Eigen::Index>(spec.action_dim);
  Eigen::VectorXd a(dim);
  if (policy.kind == BehaviorKind::uniform_random) {
    for (Eigen::Index i = 0; i < dim; ++i) a(i) = uniform_real(rng, spec.action_low(i), spec.action_high(i));
    return a;
  }
  if (state.env_id == EnvId::point_mass_1d) {
    const double pos = state.state(0);
    const double vel = state.state(1);
    a(0) = policy.gain_scale * (2.0 * (point_mass::kGoal - pos) - 1.0 * vel);
  } else {
    a.setZero();
  }
  if (policy.noise_std > 0.0) {
    for (Eigen::Index i = 0; i < dim; ++i) a(i) += policy.noise_std * standard_normal(rng);
  }
  return spec.clip(a);
}

Episode rollout_from(EnvState start, const Policy& policy, int horizon, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("rollout: gamma must be in [0,1]");
  Episode ep;
  EnvState st = std::move(start);
  double discount = 1.0;
  for (int t = 0; t < horizon; ++t) {
    Eigen::VectorXd a = mdp_spec(st.env_id).clip(policy(st));
    auto step = env_step(st, a);
    ep.discounted_return += discount * step.reward;
    ep.undiscounted_return += step.reward;
    discount *= gamma;
    ep.transitions.push_back(Transition{st.state, a, step.reward, step.next.state, step.done});
    st = std::move(step.next);
    if (step.done) break;
  }
  return ep;
}

Episode rollout(EnvId id, const Policy& policy, int horizon, double gamma, std::uint64_t seed) {
  return rollout_from(env_reset(id, seed), policy, horizon, gamma);
}

}  // namespace lr
