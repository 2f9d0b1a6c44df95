#include "lr/adam.hpp"

#include <cmath>

#include "lr/error.hpp"

namespace lr {

void AdamHyper::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("adam lr must be finite and non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam beta1 must be in [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam beta2 must be in [0,1)");
  if (!(eps > 0.0)) throw ConfigError("adam eps must be positive");
}

AdamState make_adam_state(const MlpSpec& spec, AdamHyper hyper) {
  hyper.validate();
  return AdamState{zero_params(spec), zero_params(spec), 0, hyper};
}

void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state) {
  if (grads.weights.size() != params.weights.size() || state.first_moment.weights.size() != params.weights.size()) {
    throw DimensionError("adam: gradient/state layer count does not match params");
  }
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    if (grads.weights[l].rows() != params.weights[l].rows() || grads.weights[l].cols() != params.weights[l].cols() ||
        grads.biases[l].size() != params.biases[l].size()) {
      throw DimensionError("adam: gradient shape mismatch at layer " + std::to_string(l));
    }
  }
  if (!grads.all_finite()) throw NonFiniteError("adam: non-finite gradient, update skipped");

  const auto& h = state.hyper;
  const std::uint64_t t = state.step_count + 1;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));

  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = h.beta1 * m + (1.0 - h.beta1) * g;
    v = h.beta2 * v + (1.0 - h.beta2) * g.cwiseProduct(g);
    p.array() -= h.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + h.eps);
  };
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    update(params.weights[l], grads.weights[l], state.first_moment.weights[l], state.second_moment.weights[l]);
    update(params.biases[l], grads.biases[l], state.first_moment.biases[l], state.second_moment.biases[l]);
  }
  state.step_count = t;
  if (!params.all_finite()) throw NonFiniteError("adam: parameters became non-finite");
}

}  // namespace lr
