#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "lr/rng.hpp"

namespace lr {

// point_mass_1d: state (position, velocity), one force action, 200-step episodes.
// narrow_support_bandit: a single state, one action, one-step episodes.
// two_state_chain: a tabular two-state, two-action deterministic MDP embedded
// in the continuous interface (action >= 0 selects "go to state 1").
enum class EnvId { point_mass_1d, narrow_support_bandit, two_state_chain };

std::string_view to_string(EnvId id);
EnvId parse_env_id(std::string_view name);

struct MdpSpec {
  EnvId id;
  std::size_t state_dim;
  std::size_t action_dim;
  Eigen::VectorXd action_low;
  Eigen::VectorXd action_high;
  int horizon_default;
  double reward_low;
  double reward_high;

  Eigen::VectorXd action_center() const { return 0.5 * (action_low + action_high); }
  Eigen::VectorXd action_half_width() const { return 0.5 * (action_high - action_low); }
  Eigen::VectorXd clip(const Eigen::VectorXd& a) const { return a.cwiseMax(action_low).cwiseMin(action_high); }
};

const MdpSpec& mdp_spec(EnvId id);

namespace point_mass {
inline constexpr double kDt = 0.05;
inline constexpr double kDrag = 0.1;
inline constexpr double kGoal = 0.5;
inline constexpr double kActionCost = 0.001;
// Inelastic walls: position is clamped here and velocity zeroed on contact.
inline constexpr double kWall = 2.0;
inline constexpr int kHorizon = 200;
}  // namespace point_mass

namespace bandit {
inline constexpr double kOptimum = 0.8;
}

namespace two_state {
// reward[state][choice], choice 1 moves to state 1, choice 0 to state 0.
inline constexpr double kReward[2][2] = {{0.1, 0.0}, {0.5, 1.0}};
inline constexpr int kHorizon = 1000;
inline int choice(double action) { return action >= 0.0 ? 1 : 0; }
}  // namespace two_state

struct EnvState {
  EnvId env_id;
  Eigen::VectorXd state;
  int step_index = 0;
};

EnvState env_reset(EnvId id, std::uint64_t seed);

struct StepResult {
  EnvState next;
  double reward;
  bool done;
};

// Actions are clipped to the action box before use.
StepResult env_step(const EnvState& state, const Eigen::VectorXd& action);

enum class BehaviorKind { uniform_random, suboptimal_pd, expert_pd };

std::string_view to_string(BehaviorKind k);
BehaviorKind parse_behavior_kind(std::string_view name);

struct BehaviorPolicy {
  BehaviorKind kind = BehaviorKind::uniform_random;
  double noise_std = 0.0;
  double gain_scale = 1.0;

  // Documented per-environment defaults for each kind.
  static BehaviorPolicy preset(BehaviorKind kind, EnvId env);
};

Eigen::VectorXd behavior_action(const BehaviorPolicy& policy, const EnvState& state, Rng& rng);

struct Transition {
  Eigen::VectorXd s;
  Eigen::VectorXd a;
  double r = 0.0;
  Eigen::VectorXd s_next;
  bool done = false;

  bool operator==(const Transition& o) const {
    return s.size() == o.s.size() && a.size() == o.a.size() && s_next.size() == o.s_next.size() && s == o.s &&
           a == o.a && r == o.r && s_next == o.s_next && done == o.done;
  }
};

using Policy = std::function<Eigen::VectorXd(const EnvState&)>;

struct Episode {
  std::vector<Transition> transitions;
  double discounted_return = 0.0;
  double undiscounted_return = 0.0;
};

// Runs at most `horizon` steps from env_reset(id, seed), stopping early when the
// environment signals done.
Episode rollout(EnvId id, const Policy& policy, int horizon, double gamma, std::uint64_t seed);

// Same, from an explicit start state.
Episode rollout_from(EnvState start, const Policy& policy, int horizon, double gamma);

}  // namespace lr
