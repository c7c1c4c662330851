// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "mgpc/geometry.hpp"
#include "mgpc/rng.hpp"

namespace mgpc::testing {

inline PointCloud random_cloud(Rng& rng, std::size_t n, double extent = 1.0) {
  std::uniform_real_distribution<double> u(-extent, extent);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.emplace_back(u(rng), u(rng), u(rng));
  return c;
}

inline PointCloud cloud_of(std::initializer_list<Vec3> pts) { return PointCloud(std::vector<Vec3>(pts)); }

/// Exhaustive greedy max-min selection evaluated from scratch at every step.
inline std::vector<std::size_t> fps_oracle(const PointCloud& c, std::size_t k, std::size_t seed) {
  std::vector<std::size_t> chosen{seed};
  while (chosen.size() < k) {
    double best = -1.0;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (std::find(chosen.begin(), chosen.end(), i) != chosen.end()) continue;
      double m = std::numeric_limits<double>::infinity();
      for (std::size_t j : chosen) m = std::min(m, (c[i] - c[j]).norm());
      if (m > best) {
        best = m;
        arg = i;
      }
    }
    chosen.push_back(arg);
  }
  return chosen;
}

/// Brute-force directed nearest distances (unsquared), from -> to.
inline std::vector<double> nn_oracle(const PointCloud& from, const PointCloud& to) {
  std::vector<double> out;
  for (const Vec3& p : from.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& q : to.points) {
      const double dx = p.x() - q.x(), dy = p.y() - q.y(), dz = p.z() - q.z();
      best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
    }
    out.push_back(best);
  }
  return out;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Brute-force metric oracles built on nn_oracle.
inline double oracle_l2(const PointCloud& a, const PointCloud& b) {
  auto sq = [](std::vector<double> v) {
    for (double& x : v) x *= x;
    return v;
  };
  return mean_of(sq(nn_oracle(a, b))) + mean_of(sq(nn_oracle(b, a)));
}

inline double oracle_l1(const PointCloud& a, const PointCloud& b) {
  return 0.5 * (mean_of(nn_oracle(a, b)) + mean_of(nn_oracle(b, a)));
}

inline double oracle_hyper(const PointCloud& a, const PointCloud& b, double alpha) {
  auto h = [alpha](std::vector<double> v) {
    for (double& x : v) x = std::log(1.0 + alpha * x + std::sqrt((alpha * x) * (alpha * x + 2.0)));
    return v;
  };
  return mean_of(h(nn_oracle(a, b))) + mean_of(h(nn_oracle(b, a)));
}

inline double oracle_f(const PointCloud& pred, const PointCloud& gt, double t) {
  auto frac = [t](const std::vector<double>& v) {
    double n = 0;
    for (double x : v) n += x <= t ? 1.0 : 0.0;
    return n / static_cast<double>(v.size());
  };
  const double p = frac(nn_oracle(pred, gt));
  const double r = frac(nn_oracle(gt, pred));
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Comma-separated rows without the header line.
inline std::vector<std::vector<std::string>> read_csv_rows(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mgpc_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace mgpc::testing
