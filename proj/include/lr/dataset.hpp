#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "lr/env.hpp"
#include "lr/rng.hpp"

namespace lr {

struct DatasetMeta {
  EnvId env_id = EnvId::point_mass_1d;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::string behavior;
  std::uint64_t seed = 0;

  bool operator==(const DatasetMeta&) const = default;
};

// Column-major views of a set of transitions; column i is record i.
struct TransitionBatch {
  Eigen::MatrixXd s;
  Eigen::MatrixXd a;
  Eigen::VectorXd r;
  Eigen::MatrixXd s_next;
  Eigen::VectorXd done;  // 1.0 or 0.0

  std::size_t size() const { return static_cast<std::size_t>(r.size()); }
};

// Immutable offline corpus.
class FixedDataset {
 public:
  FixedDataset(DatasetMeta meta, std::vector<Transition> transitions);

  const DatasetMeta& meta() const { return meta_; }
  std::size_t size() const { return transitions_.size(); }
  const std::vector<Transition>& transitions() const { return transitions_; }
  const Transition& operator[](std::size_t i) const { return transitions_[i]; }

  // All records as one batch.
  const TransitionBatch& all() const { return all_; }
  TransitionBatch gather(std::span<const std::size_t> indices) const;

  bool operator==(const FixedDataset& o) const { return meta_ == o.meta_ && transitions_ == o.transitions_; }

 private:
  DatasetMeta meta_;
  std::vector<Transition> transitions_;
  TransitionBatch all_;
};

// Concatenates full episodes (the last one truncated) until n records exist.
FixedDataset generate_dataset(EnvId env, const BehaviorPolicy& behavior, std::size_t n, std::uint64_t seed);

// Uniform with replacement.
std::vector<std::size_t> sample_indices(std::size_t dataset_size, std::size_t n, Rng& rng);
std::vector<Transition> sample_minibatch(const FixedDataset& d, std::size_t n, Rng& rng);

inline constexpr std::uint32_t kDatasetVersion = 1;

std::string encode_dataset(const FixedDataset& d);
FixedDataset decode_dataset(std::string_view bytes);
void write_dataset(const std::filesystem::path& path, const FixedDataset& d);
FixedDataset read_dataset(const std::filesystem::path& path);

struct DatasetStats {
  std::size_t size = 0;
  double reward_mean = 0.0;
  double reward_min = 0.0;
  double reward_max = 0.0;
  static constexpr std::size_t kBins = 20;
  // Per action dim: bin edges span the action box, counts per bin.
  std::vector<std::vector<std::size_t>> action_histogram;
  std::vector<double> histogram_low;
  std::vector<double> histogram_high;
  std::size_t episode_count = 0;
  double mean_episode_return = 0.0;  // over complete (done-terminated) episodes
};

DatasetStats dataset_stats(const FixedDataset& d);
nlohmann::ordered_json to_json(const DatasetStats& stats);

}  // namespace lr
