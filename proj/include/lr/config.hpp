#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lr/ddpg.hpp"
#include "lr/env.hpp"
#include "lr/lr.hpp"
#include "lr/support_gan.hpp"

namespace lr {

enum class Algo { lr_ddpg, ddpg, bc };

std::string_view to_string(Algo a);
Algo parse_algo(std::string_view name);

struct EvalConfig {
  std::size_t episodes = 20;
  // Shared by every algorithm so all policies face the same start states.
  std::uint64_t seed = 1000;
  int horizon = 0;  // 0 = environment default
};

struct RunConfig {
  EnvId env = EnvId::point_mass_1d;
  BehaviorKind behavior = BehaviorKind::suboptimal_pd;
  std::size_t n = 20000;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds;  // report aggregation; empty = {seed}
  Algo algo = Algo::lr_ddpg;
  std::vector<Algo> report_algos;  // empty = {algo}

  std::filesystem::path output_dir;
  // Unset paths fall back to locations under output_dir.
  std::optional<std::filesystem::path> dataset;
  std::optional<std::filesystem::path> support;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> eval_out;
  std::optional<std::filesystem::path> report_out;  // prefix, .json and .csv appended
  std::vector<std::filesystem::path> report_inputs;

  GanConfig gan;
  DdpgConfig ddpg;
  LrConfig lr;
  EvalConfig eval;

  void validate() const;

  std::filesystem::path dataset_path() const;
  std::filesystem::path stats_path() const;
  std::filesystem::path support_path() const;
  std::filesystem::path checkpoint_path() const { return checkpoint_path(algo, seed); }
  std::filesystem::path checkpoint_path(Algo a, std::uint64_t s) const;
  std::filesystem::path eval_path() const { return eval_path(algo, seed); }
  std::filesystem::path eval_path(Algo a, std::uint64_t s) const;
  std::filesystem::path report_prefix() const;
};

// LR_OUTPUT_DIR when set, else "lr_runs".
std::filesystem::path default_output_dir();

// Unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});
nlohmann::ordered_json to_json(const RunConfig& c);

}  // namespace lr
