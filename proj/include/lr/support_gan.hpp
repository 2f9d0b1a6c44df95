#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "lr/dataset.hpp"
#include "lr/mlp.hpp"

namespace lr {

struct GanConfig {
  std::size_t latent_dim = 8;
  std::vector<std::size_t> gen_hidden{64, 64};
  std::vector<std::size_t> dis_hidden{64, 64};
  Activation gen_activation = Activation::relu;
  Activation dis_activation = Activation::relu;
  double lr = 1e-3;
  std::size_t batch = 128;
  std::size_t steps = 5000;
  double label_smoothing = 0.1;
  // Weight of uniform samples over the generator's output box in the fake
  // term of the discriminator loss. 0 gives the plain GAN.
  double box_negatives = 0.25;

  void validate() const;
};

struct GanLossPoint {
  std::size_t step;
  double dis_loss;
  double gen_loss;
};

// Trained discriminator (plus the generator it was trained against) over
// normalized concatenated (s, a) vectors.
struct SupportModel {
  std::size_t state_dim;
  std::size_t action_dim;
  MlpSpec dis_spec;
  MlpParams dis_params;
  MlpSpec gen_spec;
  MlpParams gen_params;
  // Generator tanh output is mapped to gen_center + gen_half * tanh(.) in
  // normalized coordinates.
  Eigen::VectorXd gen_center;
  Eigen::VectorXd gen_half;
  Eigen::VectorXd norm_mean;
  Eigen::VectorXd norm_std;  // floored at kStdFloor
  std::vector<GanLossPoint> curve;
  GanConfig config;
  std::uint64_t seed = 0;

  static constexpr double kStdFloor = 1e-6;

  std::size_t input_dim() const { return state_dim + action_dim; }
};

// A model whose networks are all zero: confidence is exactly 0.5 everywhere.
SupportModel make_zero_support_model(std::size_t state_dim, std::size_t action_dim, const GanConfig& cfg = {});

SupportModel train_gan(const FixedDataset& d, const GanConfig& cfg, std::uint64_t seed);

struct GanLoss {
  double loss;
  MlpParams grads;
};

// Generator samples in normalized coordinates, one column per latent column.
Eigen::MatrixXd generate(const SupportModel& m, const Eigen::MatrixXd& z);
// Discriminator cross-entropy on normalized batches and its gradient in the
// discriminator params. `box` may have zero columns.
GanLoss dis_loss(const SupportModel& m, const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake,
                 const Eigen::MatrixXd& box);
// Non-saturating generator loss -log D(G(z)) and its gradient in the generator params.
GanLoss gen_loss(const SupportModel& m, const Eigen::MatrixXd& z);

// Normalized concatenation of (s, a) columns.
Eigen::MatrixXd support_inputs(const SupportModel& m, const Eigen::MatrixXd& s, const Eigen::MatrixXd& a);

double confidence(const SupportModel& m, const Eigen::VectorXd& s, const Eigen::VectorXd& a);
Eigen::VectorXd confidence_batch(const SupportModel& m, const Eigen::MatrixXd& s, const Eigen::MatrixXd& a);

// Linear-interpolated empirical quantile of confidence over all dataset pairs.
double calibrate_threshold(const SupportModel& m, const FixedDataset& d, double quantile);
double empirical_quantile(std::vector<double> values, double quantile);

struct PairSet {
  Eigen::MatrixXd s;
  Eigen::MatrixXd a;
};

// Rank AUC (Mann-Whitney), ties count one half.
double auc_from_scores(const std::vector<double>& in_scores, const std::vector<double>& out_scores);
double support_auc(const SupportModel& m, const PairSet& in_pairs, const PairSet& out_pairs);

// dis.lrnn + gen.lrnn + support.json (+ curve.csv).
void save_support_model(const std::filesystem::path& dir, const SupportModel& m);
SupportModel load_support_model(const std::filesystem::path& dir);

nlohmann::ordered_json to_json(const GanConfig& cfg);
GanConfig gan_config_from_json(const nlohmann::json& j, GanConfig base = {});

}  // namespace lr
