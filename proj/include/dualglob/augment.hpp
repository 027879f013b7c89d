#pragma once

// Stochastic contour transforms and the D1-D6 selection strategies that
// compose them into an augmented view. All transforms leave invalid frames
// alone, never re-validate a frame, and clamp voiced values to [0, 1].

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dualglob/corpus.hpp"
#include "dualglob/rng.hpp"

namespace dualglob {

struct AugmentParams {
  double jitter_sd = 0.02;
  std::pair<double, double> scale_range{0.8, 1.2};
  double mask_ratio = 0.2;
  std::pair<double, double> shift_range{-0.1, 0.1};
  // Apply the shift to log-values (a multiplicative change) instead of the
  // normalized values themselves.
  bool shift_in_log_space = false;
  int warp_knots = 4;
  double warp_sd = 0.2;

  void validate() const;
  // Parameters under which every transform is the identity map.
  static AugmentParams identity();
};

enum class Transform { jitter, scale, mask, magnitude_shift, time_warp };

std::string_view to_string(Transform t);

enum class StrategyId { D1, D2, D3, D4, D5, D6 };

struct SelectionStrategy {
  StrategyId id = StrategyId::D4;

  int min_count() const;
  int max_count() const;
  std::vector<Transform> pool() const;

  static SelectionStrategy parse(std::string_view name);
  std::string name() const;
};

F0Contour jitter(const F0Contour& c, double sd, Rng& rng);
F0Contour scale(const F0Contour& c, std::pair<double, double> range, Rng& rng);
F0Contour mask_aug(const F0Contour& c, double ratio, Rng& rng);
F0Contour magnitude_shift(const F0Contour& c, std::pair<double, double> range, Rng& rng,
                          bool log_space = false);
F0Contour time_warp(const F0Contour& c, int knots, double sd, Rng& rng);

// Warp knot positions (source coordinates) for a contour of `frames`
// frames; nondecreasing, first = 0, last = frames - 1.
std::vector<double> warp_knots(std::size_t frames, int knots, double sd, Rng& rng);

F0Contour jitter(const F0Contour& c, double sd, std::uint64_t seed);
F0Contour scale(const F0Contour& c, std::pair<double, double> range, std::uint64_t seed);
F0Contour mask_aug(const F0Contour& c, double ratio, std::uint64_t seed);
F0Contour magnitude_shift(const F0Contour& c, std::pair<double, double> range,
                          std::uint64_t seed, bool log_space = false);
F0Contour time_warp(const F0Contour& c, int knots, double sd, std::uint64_t seed);

F0Contour apply_transform(const F0Contour& c, Transform t, const AugmentParams& params,
                          Rng& rng);

// Draws the transform count, samples that many distinct transforms from the
// strategy's pool, and applies them in draw order. `applied`, when given,
// receives the drawn sequence.
F0Contour compose(const F0Contour& c, const SelectionStrategy& strategy,
                  const AugmentParams& params, std::uint64_t seed,
                  std::vector<Transform>* applied = nullptr);

}  // namespace dualglob
