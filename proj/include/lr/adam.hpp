#pragma once

#include <cstdint>

#include "lr/mlp.hpp"

namespace lr {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

struct AdamState {
  MlpParams first_moment;
  MlpParams second_moment;
  std::uint64_t step_count = 0;
  AdamHyper hyper;
};

AdamState make_adam_state(const MlpSpec& spec, AdamHyper hyper);

// One bias-corrected Adam step. Rejects non-finite gradients before touching
// params or state.
void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state);

}  // namespace lr
