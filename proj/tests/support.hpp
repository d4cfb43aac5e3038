#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "workbench/scene.hpp"
#include "workbench/urdf.hpp"

namespace wb_test {

inline std::filesystem::path data_path(const std::string& rel) { return std::filesystem::path(WORKBENCH_DATA_DIR) / rel; }

inline std::string read_file(const std::string& rel) { return workbench::detail::read_text_file(data_path(rel)); }

inline workbench::RobotModel load_model(const std::string& rel) { return workbench::parse_urdf(read_file(rel)); }

/// Seeded generator for property tests; every case is reproducible from its seed.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  std::vector<double> vector(std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = uniform(lo, hi);
    return v;
  }

  workbench::Pose pose(double reach) {
    return workbench::Pose::from_xyz_rpy({uniform(-reach, reach), uniform(-reach, reach), uniform(-reach, reach)},
                                         {uniform(-M_PI, M_PI), uniform(-1.5, 1.5), uniform(-M_PI, M_PI)});
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace wb_test
