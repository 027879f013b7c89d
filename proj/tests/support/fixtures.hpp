#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dualglob/autograd.hpp"
#include "dualglob/corpus.hpp"
#include "oracles.hpp"

namespace fixture {

using dualglob::F0Contour;
using dualglob::nn::Tensor;
using dualglob::nn::Var;

inline oracle::Rows random_rows(std::size_t n, std::size_t d, std::mt19937_64& rng, bool unit = true) {
  std::normal_distribution<double> g(0.0, 1.0);
  oracle::Rows rows(n, std::vector<double>(d));
  for (auto& r : rows) {
    for (auto& v : r) v = g(rng);
    if (unit) {
      const double norm = std::sqrt(oracle::dot(r, r));
      for (auto& v : r) v /= norm;
    }
  }
  return rows;
}

template <typename T = double>
Var<T> to_var(const oracle::Rows& rows, bool requires_grad = false) {
  const std::size_t n = rows.size(), d = rows.empty() ? 0 : rows[0].size();
  Tensor<T> t({n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) t.at(i, k) = static_cast<T>(rows[i][k]);
  return Var<T>(std::move(t), requires_grad);
}

template <typename T>
oracle::Rows to_rows(const Var<T>& v) {
  const std::size_t n = v.shape()[0], d = v.shape()[1];
  oracle::Rows rows(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) rows[i][k] = static_cast<double>(v.value().at(i, k));
  return rows;
}

inline std::vector<int> random_labels(std::size_t n, int classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, classes - 1);
  std::vector<int> y(n);
  for (auto& v : y) v = pick(rng);
  return y;
}

// Normalized contour with a voiced prefix, random interior gaps and padding.
inline F0Contour random_contour(std::size_t frames, std::mt19937_64& rng, double gap_prob = 0.1) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  F0Contour c;
  c.values.assign(frames, 0.0);
  c.mask.assign(frames, 0);
  const auto voiced = static_cast<std::size_t>(frames * (0.5 + 0.5 * u(rng)));
  const double a = u(rng), b = u(rng);
  for (std::size_t t = 0; t < voiced; ++t) {
    if (u(rng) < gap_prob) continue;
    c.mask[t] = 1;
    const double x = static_cast<double>(t) / static_cast<double>(frames);
    c.values[t] = std::clamp(a + (b - a) * x + 0.05 * std::sin(9.0 * x + a), 0.0, 1.0);
  }
  return c;
}

inline F0Contour constant_contour(std::size_t frames, double value) {
  F0Contour c;
  c.values.assign(frames, value);
  c.mask.assign(frames, 1);
  return c;
}

// Fresh scratch directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() /
           ("dualglob_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

}  // namespace fixture
