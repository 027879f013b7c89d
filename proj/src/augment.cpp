#include "dualglob/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dualglob/error.hpp"

namespace dualglob {

namespace {

void clamp_voiced(F0Contour& c) {
  for (std::size_t t = 0; t < c.size(); ++t)
    if (c.voiced(t)) c.values[t] = std::clamp(c.values[t], 0.0, 1.0);
}

double draw_uniform(std::pair<double, double> range, Rng& rng) {
  if (range.first == range.second) return range.first;
  return std::uniform_real_distribution<double>(range.first, range.second)(rng);
}

}  // namespace

void AugmentParams::validate() const {
  if (jitter_sd < 0.0) throw ConfigError("augment: jitter_sd must be >= 0");
  if (scale_range.first > scale_range.second) throw ConfigError("augment: empty scale range");
  if (!(0.0 <= mask_ratio && mask_ratio <= 1.0))
    throw ConfigError("augment: mask_ratio must lie in [0, 1]");
  if (shift_range.first > shift_range.second) throw ConfigError("augment: empty shift range");
  if (warp_knots < 2) throw ConfigError("augment: warp needs at least 2 knots");
  if (warp_sd < 0.0) throw ConfigError("augment: warp_sd must be >= 0");
}

AugmentParams AugmentParams::identity() {
  AugmentParams p;
  p.jitter_sd = 0.0;
  p.scale_range = {1.0, 1.0};
  p.mask_ratio = 0.0;
  p.shift_range = {0.0, 0.0};
  p.warp_sd = 0.0;
  return p;
}

std::string_view to_string(Transform t) {
  switch (t) {
    case Transform::jitter: return "jitter";
    case Transform::scale: return "scale";
    case Transform::mask: return "mask";
    case Transform::magnitude_shift: return "magnitude_shift";
    case Transform::time_warp: return "time_warp";
  }
  return "?";
}

int SelectionStrategy::min_count() const {
  switch (id) {
    case StrategyId::D1: case StrategyId::D5: return 1;
    case StrategyId::D2: case StrategyId::D4: case StrategyId::D6: return 2;
    case StrategyId::D3: return 3;
  }
  return 1;
}

int SelectionStrategy::max_count() const {
  switch (id) {
    case StrategyId::D1: case StrategyId::D5: return 1;
    case StrategyId::D2: case StrategyId::D6: return 2;
    case StrategyId::D3: case StrategyId::D4: return 3;
  }
  return 1;
}

std::vector<Transform> SelectionStrategy::pool() const {
  if (id == StrategyId::D5 || id == StrategyId::D6)
    return {Transform::jitter, Transform::scale, Transform::mask};
  return {Transform::jitter, Transform::scale, Transform::mask, Transform::magnitude_shift,
          Transform::time_warp};
}

SelectionStrategy SelectionStrategy::parse(std::string_view name) {
  static constexpr std::string_view names[] = {"D1", "D2", "D3", "D4", "D5", "D6"};
  for (int i = 0; i < 6; ++i) {
    std::string lower(names[i]);
    lower[0] = 'd';
    if (name == names[i] || name == lower) return {static_cast<StrategyId>(i)};
  }
  throw ConfigError("unknown augmentation strategy '" + std::string(name) + "'");
}

std::string SelectionStrategy::name() const {
  return "D" + std::to_string(static_cast<int>(id) + 1);
}

F0Contour jitter(const F0Contour& c, double sd, Rng& rng) {
  F0Contour out = c;
  if (sd > 0.0) {
    std::normal_distribution<double> noise(0.0, sd);
    for (std::size_t t = 0; t < out.size(); ++t)
      if (out.voiced(t)) out.values[t] += noise(rng);
  }
  clamp_voiced(out);
  return out;
}

F0Contour scale(const F0Contour& c, std::pair<double, double> range, Rng& rng) {
  F0Contour out = c;
  const double f = draw_uniform(range, rng);
  for (std::size_t t = 0; t < out.size(); ++t)
    if (out.voiced(t)) out.values[t] *= f;
  clamp_voiced(out);
  return out;
}

F0Contour mask_aug(const F0Contour& c, double ratio, Rng& rng) {
  F0Contour out = c;
  std::vector<std::size_t> voiced;
  for (std::size_t t = 0; t < out.size(); ++t)
    if (out.voiced(t)) voiced.push_back(t);
  const auto n = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(voiced.size())));
  // partial Fisher-Yates: the first n entries are a uniform n-subset
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, voiced.size() - 1);
    std::swap(voiced[i], voiced[pick(rng)]);
    out.values[voiced[i]] = 0.0;
    out.mask[voiced[i]] = 0;
  }
  return out;
}

F0Contour magnitude_shift(const F0Contour& c, std::pair<double, double> range, Rng& rng,
                          bool log_space) {
  F0Contour out = c;
  const double b = draw_uniform(range, rng);
  const double factor = std::exp(b);
  for (std::size_t t = 0; t < out.size(); ++t) {
    if (!out.voiced(t)) continue;
    if (log_space) {
      out.values[t] *= factor;
    } else {
      out.values[t] += b;
    }
  }
  clamp_voiced(out);
  return out;
}

std::vector<double> warp_knots(std::size_t frames, int knots, double sd, Rng& rng) {
  if (knots < 2) throw ConfigError("augment: warp needs at least 2 knots");
  const double last = static_cast<double>(frames - 1);
  const double spacing = last / static_cast<double>(knots - 1);
  std::vector<double> w(static_cast<std::size_t>(knots));
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int j = 0; j < knots; ++j) {
    double pos = spacing * j;
    if (j > 0 && j + 1 < knots && sd > 0.0) pos += sd * spacing * noise(rng);
    w[static_cast<std::size_t>(j)] = std::clamp(pos, 0.0, last);
  }
  w.front() = 0.0;
  w.back() = last;
  std::sort(w.begin(), w.end());
  return w;
}

F0Contour time_warp(const F0Contour& c, int knots, double sd, Rng& rng) {
  const std::size_t n = c.size();
  if (n < 2) return c;
  const auto w = warp_knots(n, knots, sd, rng);
  const double last = static_cast<double>(n - 1);
  const double spacing = last / static_cast<double>(knots - 1);

  F0Contour out;
  out.values.assign(n, 0.0);
  out.mask.assign(n, 0);
  for (std::size_t t = 0; t < n; ++t) {
    const double u = static_cast<double>(t);
    auto seg = static_cast<std::size_t>(std::floor(u / spacing));
    seg = std::min<std::size_t>(seg, w.size() - 2);
    const double f = (u - spacing * static_cast<double>(seg)) / spacing;
    double src = w[seg] + f * (w[seg + 1] - w[seg]);
    // snap rounding noise so an identity warp is exact
    if (std::abs(src - std::round(src)) < 1e-9) src = std::round(src);
    src = std::clamp(src, 0.0, last);
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t i1 = std::min(i0 + 1, n - 1);
    const double frac = src - static_cast<double>(i0);
    const std::size_t nearest = frac < 0.5 ? i0 : i1;
    if (!c.voiced(nearest)) continue;
    out.mask[t] = 1;
    if (frac == 0.0) {
      out.values[t] = c.values[i0];
    } else if (c.voiced(i0) && c.voiced(i1)) {
      out.values[t] = c.values[i0] + frac * (c.values[i1] - c.values[i0]);
    } else {
      out.values[t] = c.values[nearest];
    }
  }
  clamp_voiced(out);
  return out;
}

F0Contour jitter(const F0Contour& c, double sd, std::uint64_t seed) {
  Rng rng(seed);
  return jitter(c, sd, rng);
}
F0Contour scale(const F0Contour& c, std::pair<double, double> range, std::uint64_t seed) {
  Rng rng(seed);
  return scale(c, range, rng);
}
F0Contour mask_aug(const F0Contour& c, double ratio, std::uint64_t seed) {
  Rng rng(seed);
  return mask_aug(c, ratio, rng);
}
F0Contour magnitude_shift(const F0Contour& c, std::pair<double, double> range,
                          std::uint64_t seed, bool log_space) {
  Rng rng(seed);
  return magnitude_shift(c, range, rng, log_space);
}
F0Contour time_warp(const F0Contour& c, int knots, double sd, std::uint64_t seed) {
  Rng rng(seed);
  return time_warp(c, knots, sd, rng);
}

F0Contour apply_transform(const F0Contour& c, Transform t, const AugmentParams& p, Rng& rng) {
  switch (t) {
    case Transform::jitter: return jitter(c, p.jitter_sd, rng);
    case Transform::scale: return scale(c, p.scale_range, rng);
    case Transform::mask: return mask_aug(c, p.mask_ratio, rng);
    case Transform::magnitude_shift:
      return magnitude_shift(c, p.shift_range, rng, p.shift_in_log_space);
    case Transform::time_warp: return time_warp(c, p.warp_knots, p.warp_sd, rng);
  }
  return c;
}

F0Contour compose(const F0Contour& c, const SelectionStrategy& strategy,
                  const AugmentParams& params, std::uint64_t seed,
                  std::vector<Transform>* applied) {
  Rng rng(seed);
  auto pool = strategy.pool();
  std::uniform_int_distribution<int> count_dist(strategy.min_count(), strategy.max_count());
  const auto count = static_cast<std::size_t>(count_dist(rng));
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(std::min(count, pool.size()));
  if (applied) *applied = pool;

  F0Contour out = c;
  for (Transform t : pool) out = apply_transform(out, t, params, rng);
  return out;
}

}  // namespace dualglob
