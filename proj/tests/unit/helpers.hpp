#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include <unistd.h>

#include <Eigen/Dense>

#include "lr/dataset.hpp"
#include "lr/env.hpp"
#include "lr/mlp.hpp"

namespace lr::testing {

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("lr_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// |a - b| relative to the larger magnitude, with a small absolute floor.
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline Transition make_transition(double s, double a, double r, double s_next, bool done) {
  return Transition{vec({s}), vec({a}), r, vec({s_next}), done};
}

inline FixedDataset bandit_dataset(std::vector<Transition> ts) {
  DatasetMeta meta{EnvId::narrow_support_bandit, 1, 1, "hand", 0};
  return FixedDataset(meta, std::move(ts));
}

}  // namespace lr::testing
