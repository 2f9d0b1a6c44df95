#include "lr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lr/binary_io.hpp"
#include "lr/error.hpp"

namespace lr {

namespace {

constexpr std::string_view kMagic = "LRDS";

TransitionBatch build_batch(const std::vector<Transition>& ts, std::span<const std::size_t> idx, std::size_t sd,
                            std::size_t ad) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  TransitionBatch b;
  b.s.resize(static_cast<Eigen::Index>(sd), n);
  b.a.resize(static_cast<Eigen::Index>(ad), n);
  b.r.resize(n);
  b.s_next.resize(static_cast<Eigen::Index>(sd), n);
  b.done.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& t = ts[idx[static_cast<std::size_t>(j)]];
    b.s.col(j) = t.s;
    b.a.col(j) = t.a;
    b.r(j) = t.r;
    b.s_next.col(j) = t.s_next;
    b.done(j) = t.done ? 1.0 : 0.0;
  }
  return b;
}

}  // namespace

FixedDataset::FixedDataset(DatasetMeta meta, std::vector<Transition> transitions)
    : meta_(std::move(meta)), transitions_(std::move(transitions)) {
  if (transitions_.empty()) throw DimensionError("a dataset needs at least one transition");
  const auto sd = static_cast<Eigen::Index>(meta_.state_dim);
  const auto ad = static_cast<Eigen::Index>(meta_.action_dim);
  for (std::size_t i = 0; i < transitions_.size(); ++i) {
    const auto& t = transitions_[i];
    if (t.s.size() != sd || t.s_next.size() != sd || t.a.size() != ad) {
      throw DimensionError("transition " + std::to_string(i) + " does not match dataset dims");
    }
    if (!std::isfinite(t.r)) throw NonFiniteError("transition " + std::to_string(i) + " has a non-finite reward");
  }
  std::vector<std::size_t> idx(transitions_.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  all_ = build_batch(transitions_, idx, meta_.state_dim, meta_.action_dim);
}

TransitionBatch FixedDataset::gather(std::span<const std::size_t> indices) const {
  for (auto i : indices)
    if (i >= size()) throw DimensionError("record index " + std::to_string(i) + " out of range");
  return build_batch(transitions_, indices, meta_.state_dim, meta_.action_dim);
}

FixedDataset generate_dataset(EnvId env, const BehaviorPolicy& behavior, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("generate_dataset: n_transitions must be >= 1");
  const auto& spec = mdp_spec(env);
  Rng rng(derive_seed(seed, {1}));
  const Policy policy = [&](const EnvState& s) { return behavior_action(behavior, s, rng); };
  std::vector<Transition> out;
  out.reserve(n);
  for (std::uint64_t episode = 0; out.size() < n; ++episode) {
    const int remaining = static_cast<int>(std::min<std::size_t>(n - out.size(), std::numeric_limits<int>::max()));
    auto ep = rollout(env, policy, std::min(spec.horizon_default, remaining), 1.0, derive_seed(seed, {2, episode}));
    for (auto& t : ep.transitions) out.push_back(std::move(t));
  }
  DatasetMeta meta{env, spec.state_dim, spec.action_dim, std::string(to_string(behavior.kind)), seed};
  return FixedDataset(std::move(meta), std::move(out));
}

std::vector<std::size_t> sample_indices(std::size_t dataset_size, std::size_t n, Rng& rng) {
  if (n == 0) throw ConfigError("minibatch size must be >= 1");
  if (n > dataset_size) {
    throw ConfigError("minibatch size " + std::to_string(n) + " exceeds dataset size " + std::to_string(dataset_size));
  }
  std::uniform_int_distribution<std::size_t> dist(0, dataset_size - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = dist(rng);
  return idx;
}

std::vector<Transition> sample_minibatch(const FixedDataset& d, std::size_t n, Rng& rng) {
  std::vector<Transition> out;
  for (auto i : sample_indices(d.size(), n, rng)) out.push_back(d[i]);
  return out;
}

std::string encode_dataset(const FixedDataset& d) {
  const auto& m = d.meta();
  io::Writer w;
  w.bytes(kMagic);
  w.u32(kDatasetVersion);
  w.str(to_string(m.env_id));
  w.u32(static_cast<std::uint32_t>(m.state_dim));
  w.u32(static_cast<std::uint32_t>(m.action_dim));
  w.str(m.behavior);
  w.u64(m.seed);
  w.u64(d.size());
  for (const auto& t : d.transitions()) {
    for (Eigen::Index i = 0; i < t.s.size(); ++i) w.f64(t.s(i));
    for (Eigen::Index i = 0; i < t.a.size(); ++i) w.f64(t.a(i));
    w.f64(t.r);
    for (Eigen::Index i = 0; i < t.s_next.size(); ++i) w.f64(t.s_next(i));
    w.u8(t.done ? 1 : 0);
  }
  return w.buffer();
}

FixedDataset decode_dataset(std::string_view bytes) {
  io::Reader rd(bytes);
  if (rd.remaining() < kMagic.size() || rd.bytes(kMagic.size()) != kMagic) {
    throw MagicMismatchError("not a dataset file (bad magic)");
  }
  const auto version = rd.u32();
  if (version != kDatasetVersion) throw VersionMismatchError("unsupported dataset version " + std::to_string(version));
  DatasetMeta meta;
  const auto env_name = rd.str();
  try {
    meta.env_id = parse_env_id(env_name);
  } catch (const ConfigError&) {
    throw FormatError("dataset names unknown env '" + env_name + "'");
  }
  meta.state_dim = rd.u32();
  meta.action_dim = rd.u32();
  const auto& spec = mdp_spec(meta.env_id);
  if (meta.state_dim != spec.state_dim || meta.action_dim != spec.action_dim) {
    throw DimMismatchError("dataset dims (" + std::to_string(meta.state_dim) + ", " + std::to_string(meta.action_dim) +
                           ") do not match env " + env_name);
  }
  meta.behavior = rd.str();
  meta.seed = rd.u64();
  const auto size = rd.u64();
  if (size == 0) throw DimMismatchError("dataset declares zero records");
  const std::size_t record_bytes = 8 * (2 * meta.state_dim + meta.action_dim + 1) + 1;
  if (rd.remaining() / record_bytes < size) {
    throw TruncatedFileError("dataset truncated: header declares " + std::to_string(size) + " records, payload holds " +
                             std::to_string(rd.remaining() / record_bytes));
  }
  if (rd.remaining() != size * record_bytes) throw DimMismatchError("dataset payload size does not match header");
  std::vector<Transition> ts(size);
  const auto sd = static_cast<Eigen::Index>(meta.state_dim);
  const auto ad = static_cast<Eigen::Index>(meta.action_dim);
  for (auto& t : ts) {
    t.s.resize(sd);
    t.a.resize(ad);
    t.s_next.resize(sd);
    for (Eigen::Index i = 0; i < sd; ++i) t.s(i) = rd.f64();
    for (Eigen::Index i = 0; i < ad; ++i) t.a(i) = rd.f64();
    t.r = rd.f64();
    for (Eigen::Index i = 0; i < sd; ++i) t.s_next(i) = rd.f64();
    const auto done = rd.u8();
    if (done > 1) throw FormatError("invalid done flag");
    t.done = done == 1;
  }
  return FixedDataset(std::move(meta), std::move(ts));
}

void write_dataset(const std::filesystem::path& path, const FixedDataset& d) {
  io::write_file_atomic(path, encode_dataset(d));
}

FixedDataset read_dataset(const std::filesystem::path& path) { return decode_dataset(io::read_file(path)); }

DatasetStats dataset_stats(const FixedDataset& d) {
  const auto& spec = mdp_spec(d.meta().env_id);
  DatasetStats st;
  st.size = d.size();
  st.reward_min = std::numeric_limits<double>::infinity();
  st.reward_max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (const auto& t : d.transitions()) {
    sum += t.r;
    st.reward_min = std::min(st.reward_min, t.r);
    st.reward_max = std::max(st.reward_max, t.r);
  }
  st.reward_mean = sum / static_cast<double>(d.size());

  st.action_histogram.assign(d.meta().action_dim, std::vector<std::size_t>(DatasetStats::kBins, 0));
  for (std::size_t k = 0; k < d.meta().action_dim; ++k) {
    const double lo = spec.action_low(static_cast<Eigen::Index>(k));
    const double hi = spec.action_high(static_cast<Eigen::Index>(k));
    st.histogram_low.push_back(lo);
    st.histogram_high.push_back(hi);
    for (const auto& t : d.transitions()) {
      const double u = (t.a(static_cast<Eigen::Index>(k)) - lo) / (hi - lo);
      auto bin = static_cast<long>(std::floor(u * static_cast<double>(DatasetStats::kBins)));
      bin = std::clamp<long>(bin, 0, static_cast<long>(DatasetStats::kBins) - 1);
      ++st.action_histogram[k][static_cast<std::size_t>(bin)];
    }
  }

  double episode_sum = 0.0;
  double total = 0.0;
  for (const auto& t : d.transitions()) {
    episode_sum += t.r;
    if (t.done) {
      total += episode_sum;
      episode_sum = 0.0;
      ++st.episode_count;
    }
  }
  st.mean_episode_return = st.episode_count > 0 ? total / static_cast<double>(st.episode_count) : 0.0;
  return st;
}

nlohmann::ordered_json to_json(const DatasetStats& st) {
  nlohmann::ordered_json j;
  j["size"] = st.size;
  j["reward_mean"] = st.reward_mean;
  j["reward_min"] = st.reward_min;
  j["reward_max"] = st.reward_max;
  j["episode_count"] = st.episode_count;
  j["mean_episode_return"] = st.mean_episode_return;
  auto hist = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < st.action_histogram.size(); ++k) {
    nlohmann::ordered_json h;
    h["low"] = st.histogram_low[k];
    h["high"] = st.histogram_high[k];
    h["counts"] = st.action_histogram[k];
    hist.push_back(std::move(h));
  }
  j["action_histogram"] = std::move(hist);
  return j;
}

}  // namespace lr
