#include "lr/ddpg.hpp"

#include <cmath>

#include "lr/binary_io.hpp"
#include "lr/error.hpp"

namespace lr {

namespace {

std::vector<std::size_t> layers(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> v{in};
  v.insert(v.end(), hidden.begin(), hidden.end());
  v.push_back(out);
  return v;
}

Eigen::MatrixXd concat_rows(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
  Eigen::MatrixXd x(top.rows() + bottom.rows(), top.cols());
  x.topRows(top.rows()) = top;
  x.bottomRows(bottom.rows()) = bottom;
  return x;
}

Eigen::MatrixXd scale_to_box(const DdpgAgent& agent, const Eigen::MatrixXd& unit) {
  return (unit.array().colwise() * agent.action_half.array()).colwise() + agent.action_center.array();
}

void check_states(const DdpgAgent& agent, const Eigen::MatrixXd& s) {
  if (static_cast<std::size_t>(s.rows()) != agent.state_dim) {
    throw DimensionError("agent expects states of size " + std::to_string(agent.state_dim) + ", got " +
                         std::to_string(s.rows()));
  }
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void DdpgConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("ddpg: gamma must be in [0,1]");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("ddpg: tau must be in [0,1]");
  if (!(lr_actor >= 0.0) || !(lr_critic >= 0.0)) throw ConfigError("ddpg: learning rates must be non-negative");
  if (batch_n == 0) throw ConfigError("ddpg: batch_n must be positive");
  if (metrics_every == 0) throw ConfigError("ddpg: metrics_every must be positive");
  for (auto h : actor_hidden)
    if (h == 0) throw ConfigError("ddpg: hidden widths must be positive");
  for (auto h : critic_hidden)
    if (h == 0) throw ConfigError("ddpg: hidden widths must be positive");
}

nlohmann::ordered_json to_json(const DdpgConfig& c) {
  nlohmann::ordered_json j;
  j["gamma"] = c.gamma;
  j["tau"] = c.tau;
  j["lr_actor"] = c.lr_actor;
  j["lr_critic"] = c.lr_critic;
  j["batch_n"] = c.batch_n;
  j["total_steps"] = c.total_steps;
  j["actor_hidden"] = c.actor_hidden;
  j["critic_hidden"] = c.critic_hidden;
  j["terminal_masking"] = c.terminal_masking;
  j["metrics_every"] = c.metrics_every;
  return j;
}

DdpgConfig ddpg_config_from_json(const nlohmann::json& j, DdpgConfig c) {
  if (!j.is_object()) throw ConfigError("ddpg config must be an object");
  try {
    if (j.contains("gamma")) c.gamma = j["gamma"].get<double>();
    if (j.contains("tau")) c.tau = j["tau"].get<double>();
    if (j.contains("lr_actor")) c.lr_actor = j["lr_actor"].get<double>();
    if (j.contains("lr_critic")) c.lr_critic = j["lr_critic"].get<double>();
    if (j.contains("batch_n")) c.batch_n = j["batch_n"].get<std::size_t>();
    if (j.contains("total_steps")) c.total_steps = j["total_steps"].get<std::size_t>();
    if (j.contains("actor_hidden")) c.actor_hidden = j["actor_hidden"].get<std::vector<std::size_t>>();
    if (j.contains("critic_hidden")) c.critic_hidden = j["critic_hidden"].get<std::vector<std::size_t>>();
    if (j.contains("terminal_masking")) c.terminal_masking = j["terminal_masking"].get<bool>();
    if (j.contains("metrics_every")) c.metrics_every = j["metrics_every"].get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("ddpg config: ") + e.what());
  }
  c.validate();
  return c;
}

DdpgAgent make_zero_agent(const MdpSpec& mdp, const DdpgConfig& cfg) {
  cfg.validate();
  MlpSpec q_spec(layers(mdp.state_dim + mdp.action_dim, cfg.critic_hidden, 1), Activation::relu, Activation::identity);
  MlpSpec pi_spec(layers(mdp.state_dim, cfg.actor_hidden, mdp.action_dim), Activation::relu, Activation::tanh);
  auto q = zero_params(q_spec);
  auto pi = zero_params(pi_spec);
  return DdpgAgent{mdp.state_dim, mdp.action_dim, mdp.action_center(), mdp.action_half_width(),
                   std::move(q_spec), std::move(pi_spec), q, pi, q, pi};
}

DdpgAgent make_agent(const MdpSpec& mdp, const DdpgConfig& cfg, Rng& rng) {
  DdpgAgent a = make_zero_agent(mdp, cfg);
  a.q = init_params(a.q_spec, rng);
  a.pi = init_params(a.pi_spec, rng);
  a.q_target = a.q;
  a.pi_target = a.pi;
  return a;
}

Eigen::MatrixXd policy_actions(const DdpgAgent& agent, const Eigen::MatrixXd& s, bool use_target) {
  check_states(agent, s);
  return scale_to_box(agent, predict_batch(agent.pi_spec, use_target ? agent.pi_target : agent.pi, s));
}

Eigen::VectorXd policy_action(const DdpgAgent& agent, const Eigen::VectorXd& s, bool use_target) {
  return policy_actions(agent, s, use_target).col(0);
}

Eigen::VectorXd critic_values(const DdpgAgent& agent, const Eigen::MatrixXd& s, const Eigen::MatrixXd& a,
                              bool use_target) {
  check_states(agent, s);
  if (static_cast<std::size_t>(a.rows()) != agent.action_dim || a.cols() != s.cols()) {
    throw DimensionError("critic expects actions of size " + std::to_string(agent.action_dim));
  }
  return predict_batch(agent.q_spec, use_target ? agent.q_target : agent.q, concat_rows(s, a)).row(0).transpose();
}

Eigen::VectorXd critic_target(const DdpgAgent& agent, const TransitionBatch& batch, double gamma,
                              const NextActionSelector& selector, bool terminal_masking) {
  if (batch.size() == 0) throw DimensionError("critic_target: empty batch");
  const Eigen::MatrixXd proposed = policy_actions(agent, batch.s_next, true);
  Eigen::MatrixXd next_a;
  if (selector) {
    try {
      next_a = selector(batch.s_next, proposed);
    } catch (const Error& e) {
      throw Error(std::string("critic_target: next-action selector failed: ") + e.what());
    }
    if (next_a.rows() != proposed.rows() || next_a.cols() != proposed.cols()) {
      throw DimensionError("critic_target: selector changed the action batch shape");
    }
  } else {
    next_a = proposed;
  }
  const Eigen::VectorXd q_next = critic_values(agent, batch.s_next, next_a, true);
  Eigen::VectorXd cont = Eigen::VectorXd::Ones(batch.r.size());
  if (terminal_masking) cont -= batch.done;
  return batch.r.array() + gamma * cont.array() * q_next.array();
}

CriticLoss critic_loss(const DdpgAgent& agent, const TransitionBatch& batch, const Eigen::VectorXd& y) {
  if (batch.size() == 0) throw DimensionError("critic_loss: empty batch");
  if (y.size() != batch.r.size()) throw DimensionError("critic_loss: target count does not match batch");
  const auto n = static_cast<double>(batch.size());
  const auto trace = forward_batch(agent.q_spec, agent.q, concat_rows(batch.s, batch.a));
  const Eigen::RowVectorXd diff = trace.output().row(0) - y.transpose();
  const double loss = diff.squaredNorm() / n;
  const Eigen::MatrixXd upstream = (2.0 / n) * diff;
  return CriticLoss{loss, backward_batch(agent.q_spec, agent.q, trace, upstream).param_grads};
}

double critic_update(DdpgAgent& agent, const TransitionBatch& batch, const Eigen::VectorXd& y, AdamState& opt) {
  auto l = critic_loss(agent, batch, y);
  if (!std::isfinite(l.loss)) throw NonFiniteError("critic_update: non-finite loss");
  adam_step(agent.q, l.grads, opt);
  return l.loss;
}

ActorObjective actor_objective(const DdpgAgent& agent, const Eigen::MatrixXd& s, const ActorPull* pull) {
  check_states(agent, s);
  const auto n = static_cast<double>(s.cols());
  const auto pi_trace = forward_batch(agent.pi_spec, agent.pi, s);
  const Eigen::MatrixXd a = scale_to_box(agent, pi_trace.output());
  const auto q_trace = forward_batch(agent.q_spec, agent.q, concat_rows(s, a));
  const double mean_q = q_trace.output().mean();

  const Eigen::MatrixXd up_q = Eigen::MatrixXd::Constant(1, s.cols(), -1.0 / n);
  const auto gq = backward_batch(agent.q_spec, agent.q, q_trace, up_q, UpstreamKind::output, false);
  Eigen::MatrixXd da = gq.input_grad.bottomRows(static_cast<Eigen::Index>(agent.action_dim));
  if (pull != nullptr) {
    if (pull->active.size() != static_cast<std::size_t>(s.cols()) || pull->target_actions.cols() != s.cols()) {
      throw DimensionError("actor pull does not match batch");
    }
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      if (pull->active[static_cast<std::size_t>(j)]) da.col(j) = (2.0 / n) * (a.col(j) - pull->target_actions.col(j));
    }
  }
  const Eigen::MatrixXd up_pi = da.array().colwise() * agent.action_half.array();
  auto gp = backward_batch(agent.pi_spec, agent.pi, pi_trace, up_pi);
  return ActorObjective{mean_q, std::move(gp.param_grads)};
}

double actor_update(DdpgAgent& agent, const TransitionBatch& batch, AdamState& opt, const ActorPull* pull) {
  if (batch.size() == 0) throw DimensionError("actor_update: empty batch");
  auto obj = actor_objective(agent, batch.s, pull);
  if (!std::isfinite(obj.mean_q)) throw NonFiniteError("actor_update: non-finite objective");
  adam_step(agent.pi, obj.grads, opt);
  return obj.mean_q;
}

double bc_update(DdpgAgent& agent, const TransitionBatch& batch, AdamState& opt) {
  if (batch.size() == 0) throw DimensionError("bc_update: empty batch");
  const auto n = static_cast<double>(batch.size());
  const auto trace = forward_batch(agent.pi_spec, agent.pi, batch.s);
  const Eigen::MatrixXd diff = scale_to_box(agent, trace.output()) - batch.a;
  const double loss = diff.squaredNorm() / n;
  if (!std::isfinite(loss)) throw NonFiniteError("bc_update: non-finite loss");
  const Eigen::MatrixXd up = ((2.0 / n) * diff).array().colwise() * agent.action_half.array();
  const auto g = backward_batch(agent.pi_spec, agent.pi, trace, up);
  adam_step(agent.pi, g.param_grads, opt);
  return loss;
}

void soft_update(DdpgAgent& agent, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("soft_update: tau must be in [0,1]");
  blend_into(agent.q_target, agent.q, tau);
  blend_into(agent.pi_target, agent.pi, tau);
}

void save_agent(const std::filesystem::path& dir, const DdpgAgent& agent, const nlohmann::ordered_json& manifest,
                bool actor_only) {
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "pi.lrnn", agent.pi);
  if (!actor_only) {
    save_checkpoint(dir / "q.lrnn", agent.q);
    save_checkpoint(dir / "q_target.lrnn", agent.q_target);
    save_checkpoint(dir / "pi_target.lrnn", agent.pi_target);
  }
  nlohmann::ordered_json j = manifest;
  nlohmann::ordered_json net;
  net["state_dim"] = agent.state_dim;
  net["action_dim"] = agent.action_dim;
  net["action_center"] = to_vec(agent.action_center);
  net["action_half"] = to_vec(agent.action_half);
  net["q_spec"] = to_json(agent.q_spec);
  net["pi_spec"] = to_json(agent.pi_spec);
  net["actor_only"] = actor_only;
  j["networks"] = std::move(net);
  io::write_file_atomic(dir / "manifest.json", j.dump(2) + "\n");
}

LoadedAgent load_agent(const std::filesystem::path& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest.json: ") + e.what());
  }
  try {
    const auto& net = j.at("networks");
    auto q_spec = mlp_spec_from_json(net.at("q_spec"));
    auto pi_spec = mlp_spec_from_json(net.at("pi_spec"));
    const bool actor_only = net.at("actor_only").get<bool>();
    auto pi = load_checkpoint(dir / "pi.lrnn", pi_spec);
    MlpParams q = zero_params(q_spec);
    MlpParams q_t = q;
    MlpParams pi_t = pi;
    if (!actor_only) {
      q = load_checkpoint(dir / "q.lrnn", q_spec);
      q_t = load_checkpoint(dir / "q_target.lrnn", q_spec);
      pi_t = load_checkpoint(dir / "pi_target.lrnn", pi_spec);
    }
    DdpgAgent agent{net.at("state_dim").get<std::size_t>(),
                    net.at("action_dim").get<std::size_t>(),
                    from_vec(net.at("action_center").get<std::vector<double>>()),
                    from_vec(net.at("action_half").get<std::vector<double>>()),
                    std::move(q_spec),
                    std::move(pi_spec),
                    std::move(q),
                    std::move(pi),
                    std::move(q_t),
                    std::move(pi_t)};
    return LoadedAgent{std::move(agent), std::move(j)};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest.json: ") + e.what());
  }
}

}  // namespace lr
