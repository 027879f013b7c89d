#pragma once

// Central finite differences against reverse-mode gradients, 64-bit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "dualglob/autograd.hpp"

namespace gradcheck {

inline constexpr double kStep = 1e-5;
inline constexpr double kTolerance = 1e-4;
// Gradients smaller than this in both estimates are compared absolutely;
// central-difference round-off is ~1e-10 for losses of order one.
inline constexpr double kFloor = 1e-6;

struct Result {
  double max_rel = 0.0;
  std::size_t checked = 0;
  bool ok() const { return max_rel < kTolerance; }
};

inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kFloor});
}

// `loss` rebuilds the graph from the current values of `inputs`. Each input
// gets at most `per_input` coordinates checked (all when 0), chosen by `seed`.
inline Result run(std::vector<dualglob::nn::Var<double>> inputs,
                  const std::function<dualglob::nn::Var<double>()>& loss, std::size_t per_input = 0,
                  unsigned seed = 1, double step = kStep) {
  for (auto& v : inputs) v.zero_grad();
  dualglob::nn::backward(loss());
  std::vector<dualglob::nn::Tensor<double>> analytic;
  for (auto& v : inputs) analytic.push_back(v.grad());

  std::mt19937 rng(seed);
  Result r;
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    auto& value = inputs[n].mutable_value();
    std::vector<std::size_t> coords(value.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (per_input && coords.size() > per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(per_input);
    }
    for (auto i : coords) {
      const double saved = value[i];
      value[i] = saved + step;
      const double up = loss().item();
      value[i] = saved - step;
      const double down = loss().item();
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      r.max_rel = std::max(r.max_rel, rel_error(analytic[n][i], numeric));
      ++r.checked;
    }
  }
  return r;
}

}  // namespace gradcheck
