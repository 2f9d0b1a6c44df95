#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "lr/rng.hpp"

namespace lr {

enum class Activation { identity, tanh, relu, sigmoid };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

// Feed-forward architecture. layer_sizes = {input, hidden..., output}.
// Hidden layers use `hidden` (tanh or relu); the last layer uses `output`
// (identity, tanh or sigmoid).
class MlpSpec {
 public:
  MlpSpec(std::vector<std::size_t> layer_sizes, Activation hidden, Activation output);

  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t num_layers() const { return sizes_.size() - 1; }
  Activation hidden_activation() const { return hidden_; }
  Activation output_activation() const { return output_; }
  Activation activation(std::size_t layer) const { return layer + 1 == num_layers() ? output_ : hidden_; }

  bool operator==(const MlpSpec&) const = default;

 private:
  std::vector<std::size_t> sizes_;
  Activation hidden_;
  Activation output_;
};

// Per-layer weights (fan_out x fan_in) and biases (fan_out).
struct MlpParams {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  std::size_t num_scalars() const;
  bool all_finite() const;
  // Exact elementwise equality (bitwise for non-NaN values).
  bool operator==(const MlpParams& other) const;
};

MlpParams zero_params(const MlpSpec& spec);

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
MlpParams init_params(const MlpSpec& spec, Rng& rng);

// Throws DimensionError naming the first offending layer.
void check_shapes(const MlpSpec& spec, const MlpParams& params);

Eigen::VectorXd mlp_forward(const MlpSpec& spec, const MlpParams& params, const Eigen::VectorXd& input);

struct Gradients {
  Eigen::VectorXd input_grad;
  MlpParams param_grads;
};

// Gradients of dot(upstream_grad, output) with respect to input and parameters.
Gradients mlp_backward(const MlpSpec& spec, const MlpParams& params, const Eigen::VectorXd& input,
                       const Eigen::VectorXd& upstream_grad);

// Batched evaluation: each column of `inputs` is one sample.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> pre;   // pre-activation per layer
  std::vector<Eigen::MatrixXd> post;  // post[0] = inputs, post[l + 1] = output of layer l

  const Eigen::MatrixXd& output() const { return post.back(); }
  // Pre-activation of the last layer (logits for a sigmoid head).
  const Eigen::MatrixXd& output_preactivation() const { return pre.back(); }
};

ForwardTrace forward_batch(const MlpSpec& spec, const MlpParams& params, const Eigen::MatrixXd& inputs);
Eigen::MatrixXd predict_batch(const MlpSpec& spec, const MlpParams& params, const Eigen::MatrixXd& inputs);

enum class UpstreamKind { output, preactivation };

struct BatchGradients {
  Eigen::MatrixXd input_grad;
  MlpParams param_grads;  // summed over columns
};

// upstream is output_dim x batch. With UpstreamKind::preactivation the
// upstream is taken with respect to the last layer's pre-activation, which
// avoids the saturating derivative of a sigmoid head.
BatchGradients backward_batch(const MlpSpec& spec, const MlpParams& params, const ForwardTrace& trace,
                              const Eigen::MatrixXd& upstream, UpstreamKind kind = UpstreamKind::output,
                              bool want_param_grads = true);

// In-place parameter arithmetic.
void axpy(double alpha, const MlpParams& x, MlpParams& y);  // y += alpha * x
void scale(MlpParams& p, double alpha);
// target <- tau * target + (1 - tau) * source
void blend_into(MlpParams& target, const MlpParams& source, double tau);

std::vector<double> flatten(const MlpParams& p);
void assign_flat(MlpParams& p, const std::vector<double>& flat);

// Checkpoint: "LRNN" + version u32 + layer count u32 + (rows u32, cols u32)
// per layer, then every weight matrix (row-major) in layer order, then every
// bias vector in layer order, as little-endian f64.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const MlpParams& params);
MlpParams decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const MlpParams& params);
MlpParams load_checkpoint(const std::filesystem::path& path);
// Loads and validates against `spec`.
MlpParams load_checkpoint(const std::filesystem::path& path, const MlpSpec& spec);

nlohmann::ordered_json to_json(const MlpSpec& spec);
MlpSpec mlp_spec_from_json(const nlohmann::json& j);

}  // namespace lr
