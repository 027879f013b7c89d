#pragma once

// Two-view batches and per-row encodings shared by the objective tests and
// the acceptance runner.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "dualglob/model.hpp"
#include "dualglob/objectives.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace fixture {

using dualglob::F0Contour;
using dualglob::ViewBatch;
using dualglob::nn::ContourBatch;
using dualglob::nn::EncoderConfig;
using dualglob::nn::Model;

inline EncoderConfig tiny_encoder() {
  EncoderConfig c;
  c.layers = {{3, 4, 1}, {4, 3, 2}, {6, 3, 1}};
  c.head_hidden = 5;
  c.head_out = 4;
  return c;
}

inline ViewBatch random_view_batch(std::size_t rows, std::size_t frames, bool duplicate, std::mt19937_64& rng,
                            bool identity_aug = false) {
  ViewBatch b;
  for (std::size_t r = 0; r < rows; ++r) {
    b.clean.push_back(random_contour(frames, rng));
    b.labels.push_back(static_cast<int>(r % 3));
    b.source.push_back(r);
  }
  if (duplicate) {
    for (std::size_t r = 0; r < rows; ++r) {
      b.clean.push_back(b.clean[r]);
      b.labels.push_back(b.labels[r]);
      b.source.push_back(r);
    }
  }
  std::uniform_real_distribution<double> phase(0.0, 6.0);
  for (const auto& c : b.clean) {
    auto a = c;
    const double ph = phase(rng);
    if (!identity_aug)
      for (std::size_t t = 0; t < a.size(); ++t)
        if (a.voiced(t)) a.values[t] = std::clamp(a.values[t] + 0.1 * std::sin(0.7 * static_cast<double>(t) + ph), 0.0, 1.0);
    b.augmented.push_back(a);
  }
  return b;
}

// Encodes one row at a time so no batching or deduplication is shared with
// the library path.
inline oracle::Rows per_row(const Model<double>& m, const std::vector<F0Contour>& cs, std::size_t begin,
                     std::size_t end, bool predict) {
  oracle::Rows out;
  for (const auto& c : cs) {
    std::vector<F0Contour> one{c};
    auto z = m.encode(ContourBatch<double>::from(one, begin, end));
    out.push_back(to_rows(predict ? m.predict(z) : m.project(z))[0]);
  }
  return out;
}

}  // namespace fixture
