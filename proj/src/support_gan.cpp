#include "lr/support_gan.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lr/adam.hpp"
#include "lr/binary_io.hpp"
#include "lr/error.hpp"

namespace lr {

namespace {

// Generator coverage beyond the data bounding box, per side, as a fraction of its width.
constexpr double kGenMargin = 0.25;

std::vector<std::size_t> layers(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> v{in};
  v.insert(v.end(), hidden.begin(), hidden.end());
  v.push_back(out);
  return v;
}

MlpSpec dis_spec_for(std::size_t dim, const GanConfig& cfg) {
  return MlpSpec(layers(dim, cfg.dis_hidden, 1), cfg.dis_activation, Activation::sigmoid);
}

MlpSpec gen_spec_for(std::size_t dim, const GanConfig& cfg) {
  return MlpSpec(layers(cfg.latent_dim, cfg.gen_hidden, dim), cfg.gen_activation, Activation::tanh);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void GanConfig::validate() const {
  if (latent_dim == 0 || batch == 0) throw ConfigError("gan: latent_dim and batch must be positive");
  for (auto h : gen_hidden)
    if (h == 0) throw ConfigError("gan: hidden widths must be positive");
  for (auto h : dis_hidden)
    if (h == 0) throw ConfigError("gan: hidden widths must be positive");
  if (!(lr > 0.0)) throw ConfigError("gan: lr must be positive");
  if (!(label_smoothing >= 0.0 && label_smoothing < 0.5)) throw ConfigError("gan: label_smoothing must be in [0, 0.5)");
  if (!(box_negatives >= 0.0 && box_negatives < 1.0)) throw ConfigError("gan: box_negatives must be in [0, 1)");
}

SupportModel make_zero_support_model(std::size_t state_dim, std::size_t action_dim, const GanConfig& cfg) {
  cfg.validate();
  const std::size_t dim = state_dim + action_dim;
  auto ds = dis_spec_for(dim, cfg);
  auto gs = gen_spec_for(dim, cfg);
  auto dp = zero_params(ds);
  auto gp = zero_params(gs);
  return SupportModel{state_dim,
                      action_dim,
                      std::move(ds),
                      std::move(dp),
                      std::move(gs),
                      std::move(gp),
                      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim)),
                      Eigen::VectorXd::Ones(static_cast<Eigen::Index>(dim)),
                      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim)),
                      Eigen::VectorXd::Ones(static_cast<Eigen::Index>(dim)),
                      {},
                      cfg,
                      0};
}

Eigen::MatrixXd generate(const SupportModel& m, const Eigen::MatrixXd& z) {
  const Eigen::MatrixXd t = predict_batch(m.gen_spec, m.gen_params, z);
  return (t.array().colwise() * m.gen_half.array()).colwise() + m.gen_center.array();
}

GanLoss dis_loss(const SupportModel& m, const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake,
                 const Eigen::MatrixXd& box) {
  if (real.cols() == 0 || fake.cols() == 0) throw DimensionError("dis_loss: empty batch");
  const double real_target = 1.0 - m.config.label_smoothing;
  const double lam = box.cols() > 0 ? m.config.box_negatives : 0.0;
  GanLoss out{0.0, zero_params(m.dis_spec)};
  // Mean binary cross-entropy on logits z, weighted by w, against target t.
  auto term = [&](const Eigen::MatrixXd& x, double t, double w) {
    const auto trace = forward_batch(m.dis_spec, m.dis_params, x);
    const Eigen::RowVectorXd zl = trace.output_preactivation().row(0);
    const double inv = w / static_cast<double>(x.cols());
    Eigen::MatrixXd up(1, x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      out.loss += (softplus(zl(j)) - t * zl(j)) * inv;
      up(0, j) = (sigmoid(zl(j)) - t) * inv;
    }
    axpy(1.0, backward_batch(m.dis_spec, m.dis_params, trace, up, UpstreamKind::preactivation).param_grads, out.grads);
  };
  term(real, real_target, 1.0);
  term(fake, 0.0, 1.0 - lam);
  if (lam > 0.0) term(box, 0.0, lam);
  return out;
}

GanLoss gen_loss(const SupportModel& m, const Eigen::MatrixXd& z) {
  if (z.cols() == 0) throw DimensionError("gen_loss: empty batch");
  const auto gen_trace = forward_batch(m.gen_spec, m.gen_params, z);
  const Eigen::MatrixXd fake =
      (gen_trace.output().array().colwise() * m.gen_half.array()).colwise() + m.gen_center.array();
  const auto trace = forward_batch(m.dis_spec, m.dis_params, fake);
  const Eigen::RowVectorXd zl = trace.output_preactivation().row(0);
  const double inv = 1.0 / static_cast<double>(z.cols());
  GanLoss out{0.0, {}};
  Eigen::MatrixXd up(1, z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    out.loss += softplus(-zl(j)) * inv;
    up(0, j) = (sigmoid(zl(j)) - 1.0) * inv;
  }
  const auto gx = backward_batch(m.dis_spec, m.dis_params, trace, up, UpstreamKind::preactivation, false);
  const Eigen::MatrixXd up_g = gx.input_grad.array().colwise() * m.gen_half.array();
  out.grads = backward_batch(m.gen_spec, m.gen_params, gen_trace, up_g).param_grads;
  return out;
}

SupportModel train_gan(const FixedDataset& d, const GanConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (d.size() < cfg.batch) {
    throw ConfigError("train_gan: dataset has " + std::to_string(d.size()) + " records, fewer than batch " +
                      std::to_string(cfg.batch));
  }
  const std::size_t sd = d.meta().state_dim;
  const std::size_t ad = d.meta().action_dim;
  SupportModel m = make_zero_support_model(sd, ad, cfg);
  m.seed = seed;

  const auto& all = d.all();
  Eigen::MatrixXd raw(static_cast<Eigen::Index>(sd + ad), all.s.cols());
  raw.topRows(static_cast<Eigen::Index>(sd)) = all.s;
  raw.bottomRows(static_cast<Eigen::Index>(ad)) = all.a;
  m.norm_mean = raw.rowwise().mean();
  const Eigen::MatrixXd centered = raw.colwise() - m.norm_mean;
  m.norm_std = (centered.array().square().rowwise().sum() / static_cast<double>(raw.cols())).sqrt();
  m.norm_std = m.norm_std.cwiseMax(SupportModel::kStdFloor);
  const Eigen::MatrixXd data = centered.array().colwise() / m.norm_std.array();

  Eigen::VectorXd lo = data.rowwise().minCoeff();
  Eigen::VectorXd hi = data.rowwise().maxCoeff();
  const Eigen::VectorXd pad = (hi - lo) * kGenMargin;
  lo -= pad;
  hi += pad;
  // Fakes also span the whole action box so the rare region gets scored.
  const auto& mdp = mdp_spec(d.meta().env_id);
  const auto sd_i = static_cast<Eigen::Index>(sd);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(ad); ++i) {
    const double mu = m.norm_mean(sd_i + i), sigma = m.norm_std(sd_i + i);
    lo(sd_i + i) = std::min(lo(sd_i + i), (mdp.action_low(i) - mu) / sigma);
    hi(sd_i + i) = std::max(hi(sd_i + i), (mdp.action_high(i) - mu) / sigma);
  }
  m.gen_center = 0.5 * (lo + hi);
  m.gen_half = 0.5 * (hi - lo);

  Rng init_rng(derive_seed(seed, {10}));
  m.dis_params = init_params(m.dis_spec, init_rng);
  m.gen_params = init_params(m.gen_spec, init_rng);
  AdamHyper hyper;
  hyper.lr = cfg.lr;
  hyper.beta1 = 0.5;
  auto dis_opt = make_adam_state(m.dis_spec, hyper);
  auto gen_opt = make_adam_state(m.gen_spec, hyper);

  Rng rng(derive_seed(seed, {11}));
  const auto B = static_cast<Eigen::Index>(cfg.batch);
  Eigen::MatrixXd real(data.rows(), B);
  Eigen::MatrixXd z(static_cast<Eigen::Index>(cfg.latent_dim), B);
  Eigen::MatrixXd box(data.rows(), cfg.box_negatives > 0.0 ? B : 0);
  m.curve.reserve(cfg.steps);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto idx = sample_indices(d.size(), cfg.batch, rng);
    for (Eigen::Index j = 0; j < B; ++j) real.col(j) = data.col(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(j)]));
    for (Eigen::Index j = 0; j < B; ++j)
      for (Eigen::Index i = 0; i < z.rows(); ++i) z(i, j) = standard_normal(rng);
    if (cfg.box_negatives > 0.0) {
      for (Eigen::Index j = 0; j < B; ++j)
        for (Eigen::Index i = 0; i < box.rows(); ++i)
          box(i, j) = m.gen_center(i) + m.gen_half(i) * uniform_real(rng, -1.0, 1.0);
    }

    const Eigen::MatrixXd fake = generate(m, z);
    const auto dl = dis_loss(m, real, fake, box);
    if (std::isfinite(dl.loss)) adam_step(m.dis_params, dl.grads, dis_opt);
    // Generator step against the updated discriminator.
    const auto gl = gen_loss(m, z);
    if (!std::isfinite(dl.loss) || !std::isfinite(gl.loss)) {
      std::ostringstream msg;
      msg << "train_gan: non-finite loss at step " << step << " (dis_loss=" << dl.loss << ", gen_loss=" << gl.loss
          << ")";
      throw NonFiniteError(msg.str());
    }
    adam_step(m.gen_params, gl.grads, gen_opt);
    m.curve.push_back({step, dl.loss, gl.loss});
  }
  return m;
}

Eigen::MatrixXd support_inputs(const SupportModel& m, const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) {
  if (static_cast<std::size_t>(s.rows()) != m.state_dim || static_cast<std::size_t>(a.rows()) != m.action_dim ||
      s.cols() != a.cols()) {
    throw DimensionError("support model expects (" + std::to_string(m.state_dim) + ", " +
                         std::to_string(m.action_dim) + ") columns, got (" + std::to_string(s.rows()) + ", " +
                         std::to_string(a.rows()) + ")");
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(m.input_dim()), s.cols());
  x.topRows(s.rows()) = s;
  x.bottomRows(a.rows()) = a;
  x.colwise() -= m.norm_mean;
  x.array().colwise() /= m.norm_std.array();
  return x;
}

Eigen::VectorXd confidence_batch(const SupportModel& m, const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) {
  return predict_batch(m.dis_spec, m.dis_params, support_inputs(m, s, a)).row(0).transpose();
}

double confidence(const SupportModel& m, const Eigen::VectorXd& s, const Eigen::VectorXd& a) {
  return confidence_batch(m, s, a)(0);
}

double empirical_quantile(std::vector<double> values, double quantile) {
  if (values.empty()) throw ConfigError("quantile of an empty set");
  if (!(quantile >= 0.0 && quantile <= 1.0)) throw ConfigError("quantile must be in [0,1]");
  std::sort(values.begin(), values.end());
  const double pos = quantile * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return frac == 0.0 ? values[lo] : values[lo] + frac * (values[hi] - values[lo]);
}

double calibrate_threshold(const SupportModel& m, const FixedDataset& d, double quantile) {
  const auto c = confidence_batch(m, d.all().s, d.all().a);
  return empirical_quantile(to_vec(c), quantile);
}

double auc_from_scores(const std::vector<double>& in_scores, const std::vector<double>& out_scores) {
  if (in_scores.empty() || out_scores.empty()) throw ConfigError("support_auc: both pair sets must be non-empty");
  // Average ranks over the pooled sample; ties share their mean rank.
  std::vector<std::pair<double, bool>> pooled;
  pooled.reserve(in_scores.size() + out_scores.size());
  for (double s : in_scores) pooled.emplace_back(s, true);
  for (double s : out_scores) pooled.emplace_back(s, false);
  std::sort(pooled.begin(), pooled.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  double rank_sum_in = 0.0;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].first == pooled[i].first) ++j;
    const double mean_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (pooled[k].second) rank_sum_in += mean_rank;
    i = j;
  }
  const double n_in = static_cast<double>(in_scores.size());
  const double n_out = static_cast<double>(out_scores.size());
  return (rank_sum_in - n_in * (n_in + 1.0) / 2.0) / (n_in * n_out);
}

double support_auc(const SupportModel& m, const PairSet& in_pairs, const PairSet& out_pairs) {
  if (in_pairs.s.cols() == 0 || out_pairs.s.cols() == 0) {
    throw ConfigError("support_auc: both pair sets must be non-empty");
  }
  return auc_from_scores(to_vec(confidence_batch(m, in_pairs.s, in_pairs.a)),
                         to_vec(confidence_batch(m, out_pairs.s, out_pairs.a)));
}

nlohmann::ordered_json to_json(const GanConfig& cfg) {
  nlohmann::ordered_json j;
  j["latent_dim"] = cfg.latent_dim;
  j["gen_hidden"] = cfg.gen_hidden;
  j["dis_hidden"] = cfg.dis_hidden;
  j["gen_activation"] = std::string(to_string(cfg.gen_activation));
  j["dis_activation"] = std::string(to_string(cfg.dis_activation));
  j["lr"] = cfg.lr;
  j["batch"] = cfg.batch;
  j["steps"] = cfg.steps;
  j["label_smoothing"] = cfg.label_smoothing;
  j["box_negatives"] = cfg.box_negatives;
  return j;
}

GanConfig gan_config_from_json(const nlohmann::json& j, GanConfig c) {
  if (!j.is_object()) throw ConfigError("gan config must be an object");
  try {
    if (j.contains("latent_dim")) c.latent_dim = j["latent_dim"].get<std::size_t>();
    if (j.contains("gen_hidden")) c.gen_hidden = j["gen_hidden"].get<std::vector<std::size_t>>();
    if (j.contains("dis_hidden")) c.dis_hidden = j["dis_hidden"].get<std::vector<std::size_t>>();
    if (j.contains("gen_activation")) c.gen_activation = parse_activation(j["gen_activation"].get<std::string>());
    if (j.contains("dis_activation")) c.dis_activation = parse_activation(j["dis_activation"].get<std::string>());
    if (j.contains("lr")) c.lr = j["lr"].get<double>();
    if (j.contains("batch")) c.batch = j["batch"].get<std::size_t>();
    if (j.contains("steps")) c.steps = j["steps"].get<std::size_t>();
    if (j.contains("label_smoothing")) c.label_smoothing = j["label_smoothing"].get<double>();
    if (j.contains("box_negatives")) c.box_negatives = j["box_negatives"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("gan config: ") + e.what());
  }
  c.validate();
  return c;
}

void save_support_model(const std::filesystem::path& dir, const SupportModel& m) {
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "dis.lrnn", m.dis_params);
  save_checkpoint(dir / "gen.lrnn", m.gen_params);
  nlohmann::ordered_json j;
  j["state_dim"] = m.state_dim;
  j["action_dim"] = m.action_dim;
  j["norm_mean"] = to_vec(m.norm_mean);
  j["norm_std"] = to_vec(m.norm_std);
  j["gen_center"] = to_vec(m.gen_center);
  j["gen_half"] = to_vec(m.gen_half);
  j["dis_spec"] = to_json(m.dis_spec);
  j["gen_spec"] = to_json(m.gen_spec);
  j["config"] = to_json(m.config);
  j["seed"] = m.seed;
  if (!m.curve.empty()) {
    j["final_dis_loss"] = m.curve.back().dis_loss;
    j["final_gen_loss"] = m.curve.back().gen_loss;
  }
  io::write_file_atomic(dir / "support.json", j.dump(2) + "\n");
  std::ostringstream csv;
  csv.precision(17);
  csv << "step,dis_loss,gen_loss\n";
  for (const auto& p : m.curve) csv << p.step << ',' << p.dis_loss << ',' << p.gen_loss << '\n';
  io::write_file_atomic(dir / "curve.csv", csv.str());
}

SupportModel load_support_model(const std::filesystem::path& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(dir / "support.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("support.json: ") + e.what());
  }
  try {
    auto ds = mlp_spec_from_json(j.at("dis_spec"));
    auto gs = mlp_spec_from_json(j.at("gen_spec"));
    auto dp = load_checkpoint(dir / "dis.lrnn", ds);
    auto gp = load_checkpoint(dir / "gen.lrnn", gs);
    SupportModel m{j.at("state_dim").get<std::size_t>(),
                   j.at("action_dim").get<std::size_t>(),
                   std::move(ds),
                   std::move(dp),
                   std::move(gs),
                   std::move(gp),
                   from_vec(j.at("gen_center").get<std::vector<double>>()),
                   from_vec(j.at("gen_half").get<std::vector<double>>()),
                   from_vec(j.at("norm_mean").get<std::vector<double>>()),
                   from_vec(j.at("norm_std").get<std::vector<double>>()),
                   {},
                   gan_config_from_json(j.at("config")),
                   j.at("seed").get<std::uint64_t>()};
    if (m.dis_spec.input_dim() != m.input_dim() || static_cast<std::size_t>(m.norm_mean.size()) != m.input_dim() ||
        static_cast<std::size_t>(m.norm_std.size()) != m.input_dim()) {
      throw DimMismatchError("support model dims are inconsistent");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("support.json: ") + e.what());
  }
}

}  // namespace lr
