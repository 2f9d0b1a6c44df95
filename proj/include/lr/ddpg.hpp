#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "lr/adam.hpp"
#include "lr/dataset.hpp"
#include "lr/env.hpp"
#include "lr/mlp.hpp"

namespace lr {

struct DdpgConfig {
  double gamma = 0.99;
  // Target update follows theta' <- tau * theta' + (1 - tau) * theta, so tau
  // close to 1 means slow tracking.
  double tau = 0.995;
  double lr_actor = 1e-4;
  double lr_critic = 1e-3;
  std::size_t batch_n = 128;
  std::size_t total_steps = 20000;
  std::vector<std::size_t> actor_hidden{64, 64};
  std::vector<std::size_t> critic_hidden{64, 64};
  // y = r when done. Disable to treat every record as continuing.
  bool terminal_masking = true;
  // Metrics are recorded every this many steps (and at the last step).
  std::size_t metrics_every = 500;

  void validate() const;
};

nlohmann::ordered_json to_json(const DdpgConfig& cfg);
DdpgConfig ddpg_config_from_json(const nlohmann::json& j, DdpgConfig base = {});

struct DdpgAgent {
  std::size_t state_dim;
  std::size_t action_dim;
  Eigen::VectorXd action_center;
  Eigen::VectorXd action_half;
  MlpSpec q_spec;   // (s, a) -> Q, identity output
  MlpSpec pi_spec;  // s -> tanh, scaled to the action box
  MlpParams q;
  MlpParams pi;
  MlpParams q_target;
  MlpParams pi_target;

  bool operator==(const DdpgAgent& o) const {
    return q_spec == o.q_spec && pi_spec == o.pi_spec && q == o.q && pi == o.pi && q_target == o.q_target &&
           pi_target == o.pi_target && action_center == o.action_center && action_half == o.action_half;
  }
};

// Random online networks; targets start as exact copies.
DdpgAgent make_agent(const MdpSpec& mdp, const DdpgConfig& cfg, Rng& rng);
// All-zero networks (actor emits the box center, critic returns 0).
DdpgAgent make_zero_agent(const MdpSpec& mdp, const DdpgConfig& cfg);

Eigen::VectorXd policy_action(const DdpgAgent& agent, const Eigen::VectorXd& s, bool use_target);
Eigen::MatrixXd policy_actions(const DdpgAgent& agent, const Eigen::MatrixXd& s, bool use_target);
Eigen::VectorXd critic_values(const DdpgAgent& agent, const Eigen::MatrixXd& s, const Eigen::MatrixXd& a,
                              bool use_target);

// Maps (s', proposed a') columns to the a' used in the backup.
using NextActionSelector = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& s_next, const Eigen::MatrixXd& proposed)>;

// y = r + gamma * (1 - done) * Q'(s', selector(s', pi'(s'))). Only target
// networks are evaluated. An empty selector is the identity.
Eigen::VectorXd critic_target(const DdpgAgent& agent, const TransitionBatch& batch, double gamma,
                              const NextActionSelector& selector, bool terminal_masking = true);

struct CriticLoss {
  double loss;
  MlpParams grads;
};

// Mean squared error against y and its gradient in the online critic params.
CriticLoss critic_loss(const DdpgAgent& agent, const TransitionBatch& batch, const Eigen::VectorXd& y);

// One Adam step on mean squared error; returns the loss before the step.
double critic_update(DdpgAgent& agent, const TransitionBatch& batch, const Eigen::VectorXd& y, AdamState& opt);

// Records flagged in `active` replace the -Q objective by a squared pull
// towards `target_actions`.
struct ActorPull {
  Eigen::MatrixXd target_actions;
  std::vector<bool> active;
};

struct ActorObjective {
  double mean_q;
  MlpParams grads;  // gradient of the minimized loss (-mean Q) w.r.t. actor params
};

ActorObjective actor_objective(const DdpgAgent& agent, const Eigen::MatrixXd& s, const ActorPull* pull = nullptr);

// Ascends mean Q(s, pi(s)) with the critic frozen. Returns mean Q before the step.
double actor_update(DdpgAgent& agent, const TransitionBatch& batch, AdamState& opt, const ActorPull* pull = nullptr);

// Behavior-cloning regression of pi(s) onto dataset actions; returns the loss before the step.
double bc_update(DdpgAgent& agent, const TransitionBatch& batch, AdamState& opt);

void soft_update(DdpgAgent& agent, double tau);

// q.lrnn, pi.lrnn, q_target.lrnn, pi_target.lrnn and manifest.json in `dir`.
// With actor_only only pi.lrnn is written.
void save_agent(const std::filesystem::path& dir, const DdpgAgent& agent, const nlohmann::ordered_json& manifest,
                bool actor_only = false);

struct LoadedAgent {
  DdpgAgent agent;
  nlohmann::json manifest;
};

LoadedAgent load_agent(const std::filesystem::path& dir);

}  // namespace lr
