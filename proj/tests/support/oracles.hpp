#pragma once

// Test-side reference implementations. Each loss is a direct double loop over
// the printed formula with explicit cosine similarity; none of it shares code
// with the library's masked kernel.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

namespace oracle {

using Rows = std::vector<std::vector<double>>;

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  return dot(a, b) / (std::sqrt(dot(a, a)) * std::sqrt(dot(b, b)));
}

// Clean-view SupCon: positives j != i with y_j == y_i, denominator k != i.
// Mean over anchors with at least one positive; 0 when none have any.
inline double supcon_clean(const Rows& p, const std::vector<int>& y, double tau) {
  const std::size_t B = p.size();
  double total = 0.0;
  std::size_t anchors = 0;
  for (std::size_t i = 0; i < B; ++i) {
    double den = 0.0;
    for (std::size_t k = 0; k < B; ++k)
      if (k != i) den += std::exp(dot(p[i], p[k]) / tau);
    double acc = 0.0;
    std::size_t np = 0;
    for (std::size_t j = 0; j < B; ++j) {
      if (j == i || y[j] != y[i]) continue;
      acc += std::log(std::exp(dot(p[i], p[j]) / tau) / den);
      ++np;
    }
    if (np == 0) continue;
    total += -acc / static_cast<double>(np);
    ++anchors;
  }
  return anchors ? total / static_cast<double>(anchors) : 0.0;
}

// Augmented anchor a_i against clean rows; P(i) are clean rows of y_i other
// than i, the denominator runs over clean k != i.
inline double supcon_aug(const Rows& a, const Rows& c, const std::vector<int>& y, double tau) {
  const std::size_t B = a.size();
  double total = 0.0;
  std::size_t anchors = 0;
  for (std::size_t i = 0; i < B; ++i) {
    double den = 0.0;
    for (std::size_t k = 0; k < B; ++k)
      if (k != i) den += std::exp(dot(a[i], c[k]) / tau);
    double acc = 0.0;
    std::size_t np = 0;
    for (std::size_t j = 0; j < B; ++j) {
      if (j == i || y[j] != y[i]) continue;
      acc += std::log(std::exp(dot(a[i], c[j]) / tau) / den);
      ++np;
    }
    if (np == 0) continue;
    total += -acc / static_cast<double>(np);
    ++anchors;
  }
  return anchors ? total / static_cast<double>(anchors) : 0.0;
}

// Cross-view: for each clean z_i, positives are every augmented z'_p with
// y_p == y_i (p = i included); denominator sums all augmented rows.
inline double cross_view(const Rows& z, const Rows& za, const std::vector<int>& y, double tau) {
  const std::size_t B = z.size();
  double total = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    double den = 0.0;
    for (std::size_t a = 0; a < B; ++a) den += std::exp(cosine(z[i], za[a]) / tau);
    double acc = 0.0;
    std::size_t np = 0;
    for (std::size_t p = 0; p < B; ++p) {
      if (y[p] != y[i]) continue;
      acc += std::log(std::exp(cosine(z[i], za[p]) / tau) / den);
      ++np;
    }
    total += -acc / static_cast<double>(np);
  }
  return total / static_cast<double>(B);
}

// Unified: J = clean rows then augmented rows, labels duplicated; SupCon
// over J with self-exclusion in both sums.
inline double unified(const Rows& z, const Rows& za, const std::vector<int>& y, double tau) {
  Rows all = z;
  all.insert(all.end(), za.begin(), za.end());
  std::vector<int> yy = y;
  yy.insert(yy.end(), y.begin(), y.end());
  const std::size_t J = all.size();
  double total = 0.0;
  std::size_t anchors = 0;
  for (std::size_t i = 0; i < J; ++i) {
    double den = 0.0;
    for (std::size_t j = 0; j < J; ++j)
      if (j != i) den += std::exp(cosine(all[i], all[j]) / tau);
    double acc = 0.0;
    std::size_t np = 0;
    for (std::size_t p = 0; p < J; ++p) {
      if (p == i || yy[p] != yy[i]) continue;
      acc += std::log(std::exp(cosine(all[i], all[p]) / tau) / den);
      ++np;
    }
    if (np == 0) continue;
    total += -acc / static_cast<double>(np);
    ++anchors;
  }
  return anchors ? total / static_cast<double>(anchors) : 0.0;
}

// InfoNCE with in-batch negatives: row i's positives are target rows whose
// instance id equals id_i; the denominator is every target row.
inline double info_nce(const Rows& pred, const Rows& target, const std::vector<std::size_t>& id,
                       double tau) {
  const std::size_t B = pred.size();
  double total = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    double den = 0.0;
    for (std::size_t k = 0; k < B; ++k) den += std::exp(dot(pred[i], target[k]) / tau);
    double acc = 0.0;
    std::size_t np = 0;
    for (std::size_t j = 0; j < B; ++j) {
      if (id[j] != id[i]) continue;
      acc += std::log(std::exp(dot(pred[i], target[j]) / tau) / den);
      ++np;
    }
    total += -acc / static_cast<double>(np);
  }
  return total / static_cast<double>(B);
}

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> precision, recall, f1;
  std::vector<std::size_t> support;
};

// Counts tp / fp / fn per class by scanning all pairs; 0 on a zero
// denominator; macro over all `classes` classes.
inline Metrics metrics(const std::vector<int>& truth, const std::vector<int>& pred, int classes) {
  Metrics m;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == pred[i];
  m.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
  for (int c = 0; c < classes; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (pred[i] == c && truth[i] == c) ++tp;
      if (pred[i] == c && truth[i] != c) ++fp;
      if (pred[i] != c && truth[i] == c) ++fn;
    }
    const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double f = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    m.precision.push_back(p);
    m.recall.push_back(r);
    m.f1.push_back(f);
    m.support.push_back(tp + fn);
  }
  double s = 0.0;
  for (double f : m.f1) s += f;
  m.macro_f1 = s / static_cast<double>(classes);
  return m;
}

}  // namespace oracle
