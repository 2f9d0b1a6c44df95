#include "lr/mlp.hpp"

#include <cmath>

#include "lr/binary_io.hpp"
#include "lr/error.hpp"

namespace lr {

namespace {

constexpr std::string_view kMagic = "LRNN";

void apply_activation(Activation a, const Eigen::MatrixXd& pre, Eigen::MatrixXd& post) {
  switch (a) {
    case Activation::identity:
      post = pre;
      break;
    case Activation::tanh:
      post = pre.array().tanh();
      break;
    case Activation::relu:
      post = pre.array().max(0.0);
      break;
    case Activation::sigmoid:
      // Split by sign so exp never overflows.
      post = pre.unaryExpr([](double z) {
        if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
        const double e = std::exp(z);
        return e / (1.0 + e);
      });
      break;
  }
}

// d post / d pre, elementwise, multiplied into g.
void mul_activation_derivative(Activation a, const Eigen::MatrixXd& pre, const Eigen::MatrixXd& post,
                               Eigen::MatrixXd& g) {
  switch (a) {
    case Activation::identity:
      break;
    case Activation::tanh:
      g.array() *= 1.0 - post.array().square();
      break;
    case Activation::relu:
      g.array() *= (pre.array() > 0.0).cast<double>();
      break;
    case Activation::sigmoid:
      g.array() *= post.array() * (1.0 - post.array());
      break;
  }
}

void check_input(const MlpSpec& spec, const Eigen::MatrixXd& inputs) {
  if (static_cast<std::size_t>(inputs.rows()) != spec.input_dim()) {
    throw DimensionError("layer 0: expected input of size " + std::to_string(spec.input_dim()) + ", got " +
                         std::to_string(inputs.rows()));
  }
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity:
      return "identity";
    case Activation::tanh:
      return "tanh";
    case Activation::relu:
      return "relu";
    case Activation::sigmoid:
      return "sigmoid";
  }
  return "identity";
}

Activation parse_activation(std::string_view name) {
  if (name == "identity") return Activation::identity;
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

MlpSpec::MlpSpec(std::vector<std::size_t> layer_sizes, Activation hidden, Activation output)
    : sizes_(std::move(layer_sizes)), hidden_(hidden), output_(output) {
  if (sizes_.size() < 2) throw DimensionError("MlpSpec needs at least an input and an output size");
  for (std::size_t i = 0; i < sizes_.size(); ++i) {
    if (sizes_[i] == 0) throw DimensionError("MlpSpec layer size " + std::to_string(i) + " is zero");
  }
  if (hidden_ != Activation::tanh && hidden_ != Activation::relu) {
    throw ConfigError("hidden activation must be tanh or relu");
  }
  if (output_ == Activation::relu) throw ConfigError("output activation must be identity, tanh or sigmoid");
}

std::size_t MlpParams::num_scalars() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
  for (const auto& b : biases) n += static_cast<std::size_t>(b.size());
  return n;
}

bool MlpParams::all_finite() const {
  for (const auto& w : weights)
    if (!w.allFinite()) return false;
  for (const auto& b : biases)
    if (!b.allFinite()) return false;
  return true;
}

bool MlpParams::operator==(const MlpParams& other) const {
  if (weights.size() != other.weights.size() || biases.size() != other.biases.size()) return false;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != other.weights[l].rows() || weights[l].cols() != other.weights[l].cols()) return false;
    if (weights[l] != other.weights[l]) return false;
  }
  for (std::size_t l = 0; l < biases.size(); ++l) {
    if (biases[l].size() != other.biases[l].size() || biases[l] != other.biases[l]) return false;
  }
  return true;
}

MlpParams zero_params(const MlpSpec& spec) {
  MlpParams p;
  const auto& s = spec.layer_sizes();
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    p.weights.push_back(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s[l + 1]), static_cast<Eigen::Index>(s[l])));
    p.biases.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s[l + 1])));
  }
  return p;
}

MlpParams init_params(const MlpSpec& spec, Rng& rng) {
  MlpParams p = zero_params(spec);
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.layer_sizes()[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto& w = p.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = dist(rng);
    for (Eigen::Index r = 0; r < p.biases[l].size(); ++r) p.biases[l](r) = dist(rng);
  }
  return p;
}

void check_shapes(const MlpSpec& spec, const MlpParams& params) {
  if (params.weights.size() != spec.num_layers() || params.biases.size() != spec.num_layers()) {
    throw DimensionError("expected " + std::to_string(spec.num_layers()) + " layers, params have " +
                         std::to_string(params.weights.size()));
  }
  const auto& s = spec.layer_sizes();
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const auto rows = static_cast<Eigen::Index>(s[l + 1]);
    const auto cols = static_cast<Eigen::Index>(s[l]);
    if (params.weights[l].rows() != rows || params.weights[l].cols() != cols || params.biases[l].size() != rows) {
      throw DimensionError("layer " + std::to_string(l) + ": expected weights " + std::to_string(rows) + "x" +
                           std::to_string(cols) + ", got " + std::to_string(params.weights[l].rows()) + "x" +
                           std::to_string(params.weights[l].cols()));
    }
  }
}

ForwardTrace forward_batch(const MlpSpec& spec, const MlpParams& params, const Eigen::MatrixXd& inputs) {
  check_shapes(spec, params);
  check_input(spec, inputs);
  ForwardTrace t;
  t.pre.resize(spec.num_layers());
  t.post.resize(spec.num_layers() + 1);
  t.post[0] = inputs;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    t.pre[l].noalias() = params.weights[l] * t.post[l];
    t.pre[l].colwise() += params.biases[l];
    apply_activation(spec.activation(l), t.pre[l], t.post[l + 1]);
  }
  return t;
}

Eigen::MatrixXd predict_batch(const MlpSpec& spec, const MlpParams& params, const Eigen::MatrixXd& inputs) {
  check_shapes(spec, params);
  check_input(spec, inputs);
  Eigen::MatrixXd x = inputs;
  Eigen::MatrixXd z;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    z.noalias() = params.weights[l] * x;
    z.colwise() += params.biases[l];
    apply_activation(spec.activation(l), z, x);
  }
  return x;
}

BatchGradients backward_batch(const MlpSpec& spec, const MlpParams& params, const ForwardTrace& trace,
                              const Eigen::MatrixXd& upstream, UpstreamKind kind, bool want_param_grads) {
  check_shapes(spec, params);
  const std::size_t L = spec.num_layers();
  if (trace.pre.size() != L || trace.post.size() != L + 1) throw DimensionError("forward trace does not match spec");
  const auto& out = trace.output();
  if (upstream.rows() != out.rows() || upstream.cols() != out.cols()) {
    throw DimensionError("layer " + std::to_string(L - 1) + ": upstream gradient is " +
                         std::to_string(upstream.rows()) + "x" + std::to_string(upstream.cols()) + ", output is " +
                         std::to_string(out.rows()) + "x" + std::to_string(out.cols()));
  }

  BatchGradients g;
  if (want_param_grads) {
    g.param_grads.weights.resize(L);
    g.param_grads.biases.resize(L);
  }
  Eigen::MatrixXd delta = upstream;
  if (kind == UpstreamKind::output) mul_activation_derivative(spec.activation(L - 1), trace.pre[L - 1], out, delta);
  for (std::size_t l = L; l-- > 0;) {
    if (want_param_grads) {
      g.param_grads.weights[l].noalias() = delta * trace.post[l].transpose();
      g.param_grads.biases[l] = delta.rowwise().sum();
    }
    Eigen::MatrixXd prev = params.weights[l].transpose() * delta;
    if (l > 0) mul_activation_derivative(spec.activation(l - 1), trace.pre[l - 1], trace.post[l], prev);
    delta = std::move(prev);
  }
  g.input_grad = std::move(delta);
  return g;
}

Eigen::VectorXd mlp_forward(const MlpSpec& spec, const MlpParams& params, const Eigen::VectorXd& input) {
  return predict_batch(spec, params, input).col(0);
}

Gradients mlp_backward(const MlpSpec& spec, const MlpParams& params, const Eigen::VectorXd& input,
                       const Eigen::VectorXd& upstream_grad) {
  if (static_cast<std::size_t>(upstream_grad.size()) != spec.output_dim()) {
    throw DimensionError("layer " + std::to_string(spec.num_layers() - 1) + ": upstream gradient has size " +
                         std::to_string(upstream_grad.size()) + ", output has " + std::to_string(spec.output_dim()));
  }
  const auto trace = forward_batch(spec, params, input);
  auto bg = backward_batch(spec, params, trace, upstream_grad);
  return Gradients{bg.input_grad.col(0), std::move(bg.param_grads)};
}

void axpy(double alpha, const MlpParams& x, MlpParams& y) {
  for (std::size_t l = 0; l < y.weights.size(); ++l) {
    y.weights[l] += alpha * x.weights[l];
    y.biases[l] += alpha * x.biases[l];
  }
}

void scale(MlpParams& p, double alpha) {
  for (auto& w : p.weights) w *= alpha;
  for (auto& b : p.biases) b *= alpha;
}

void blend_into(MlpParams& target, const MlpParams& source, double tau) {
  if (tau == 1.0) return;
  if (tau == 0.0) {
    target = source;
    return;
  }
  // t + (1 - tau)(s - t) is exact when s == t; the clamp keeps rounding inside [t, s].
  auto mix = [tau](auto& t, const auto& s) {
    const auto lo = t.array().min(s.array()).eval();
    const auto hi = t.array().max(s.array()).eval();
    t = (t.array() + (1.0 - tau) * (s.array() - t.array())).max(lo).min(hi).matrix();
  };
  for (std::size_t l = 0; l < target.weights.size(); ++l) {
    mix(target.weights[l], source.weights[l]);
    mix(target.biases[l], source.biases[l]);
  }
}

std::vector<double> flatten(const MlpParams& p) {
  std::vector<double> out;
  out.reserve(p.num_scalars());
  for (const auto& w : p.weights)
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) out.push_back(w(r, c));
  for (const auto& b : p.biases)
    for (Eigen::Index r = 0; r < b.size(); ++r) out.push_back(b(r));
  return out;
}

void assign_flat(MlpParams& p, const std::vector<double>& flat) {
  if (flat.size() != p.num_scalars()) throw DimensionError("flat parameter vector has wrong length");
  std::size_t i = 0;
  for (auto& w : p.weights)
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = flat[i++];
  for (auto& b : p.biases)
    for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = flat[i++];
}

std::string encode_checkpoint(const MlpParams& params) {
  io::Writer w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.weights.size()));
  for (const auto& m : params.weights) {
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
  }
  for (const auto& m : params.weights)
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) w.f64(m(r, c));
  for (const auto& b : params.biases)
    for (Eigen::Index r = 0; r < b.size(); ++r) w.f64(b(r));
  return w.buffer();
}

MlpParams decode_checkpoint(std::string_view bytes) {
  io::Reader rd(bytes);
  if (rd.remaining() < kMagic.size() || rd.bytes(kMagic.size()) != kMagic) {
    throw MagicMismatchError("not a network checkpoint (bad magic)");
  }
  const auto version = rd.u32();
  if (version != kCheckpointVersion) {
    throw VersionMismatchError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto layers = rd.u32();
  if (layers == 0) throw DimMismatchError("checkpoint declares zero layers");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes(layers);
  for (auto& [rows, cols] : shapes) {
    rows = rd.u32();
    cols = rd.u32();
    if (rows == 0 || cols == 0) throw DimMismatchError("checkpoint declares an empty layer");
  }
  for (std::size_t l = 1; l < shapes.size(); ++l) {
    if (shapes[l].second != shapes[l - 1].first) {
      throw DimMismatchError("checkpoint layer " + std::to_string(l) + " fan-in does not match previous fan-out");
    }
  }
  MlpParams p;
  for (const auto& [rows, cols] : shapes) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rd.f64();
    p.weights.push_back(std::move(m));
  }
  for (const auto& [rows, cols] : shapes) {
    Eigen::VectorXd b(rows);
    for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = rd.f64();
    p.biases.push_back(std::move(b));
  }
  if (!rd.at_end()) throw DimMismatchError("trailing bytes after checkpoint payload");
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const MlpParams& params) {
  io::write_file_atomic(path, encode_checkpoint(params));
}

MlpParams load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

MlpParams load_checkpoint(const std::filesystem::path& path, const MlpSpec& spec) {
  auto p = load_checkpoint(path);
  try {
    check_shapes(spec, p);
  } catch (const DimensionError& e) {
    throw DimMismatchError(path.string() + ": " + e.what());
  }
  return p;
}

nlohmann::ordered_json to_json(const MlpSpec& spec) {
  nlohmann::ordered_json j;
  j["layer_sizes"] = spec.layer_sizes();
  j["hidden_activation"] = std::string(to_string(spec.hidden_activation()));
  j["output_activation"] = std::string(to_string(spec.output_activation()));
  return j;
}

MlpSpec mlp_spec_from_json(const nlohmann::json& j) {
  return MlpSpec(j.at("layer_sizes").get<std::vector<std::size_t>>(),
                 parse_activation(j.at("hidden_activation").get<std::string>()),
                 parse_activation(j.at("output_activation").get<std::string>()));
}

}  // namespace lr
