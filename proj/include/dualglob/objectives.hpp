#pragma once

// Contrastive and predictive objectives. All SupCon-style losses average
// over anchors that have at least one positive.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dualglob/autograd.hpp"
#include "dualglob/corpus.hpp"
#include "dualglob/model.hpp"

namespace dualglob {

enum class ObjectiveKind { DualGlob, GlobClean, GlobAugment, CrossView, Unified, PredC, PredA, Hybrid };

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::DualGlob;
  double tau = 0.1;
  double lambda1 = 1.0;
  double lambda2 = 1.0;

  void validate() const;
};

ObjectiveKind parse_objective(std::string_view name);
std::string_view objective_key(ObjectiveKind k);   // e.g. "dualglob"
std::string_view objective_title(ObjectiveKind k);  // e.g. "Dual-Glob"

// Whether the objective consumes an augmented view.
bool uses_augmented_view(ObjectiveKind k);

// Rows of a training step. `clean[r]` and `augmented[r]` belong to row r;
// rows with equal `source` are copies of one sample (batch duplication).
struct ViewBatch {
  std::vector<F0Contour> clean;
  std::vector<F0Contour> augmented;
  std::vector<int> labels;
  std::vector<std::size_t> source;

  std::size_t rows() const { return labels.size(); }
};

namespace objectives {

// Clean SupCon: anchors and candidates are the clean projections; positives
// are other rows with the same label; the denominator excludes the anchor.
template <typename T>
nn::Var<T> supcon_clean(const nn::Var<T>& clean, std::span<const int> labels, double tau);

// Augmented anchors against clean candidates; positives are clean rows of
// the same label other than the anchor's index, denominator excludes it.
template <typename T>
nn::Var<T> supcon_aug(const nn::Var<T>& augmented, const nn::Var<T>& clean,
                      std::span<const int> labels, double tau);

// lambda1 * supcon_clean + lambda2 * supcon_aug
template <typename T>
nn::Var<T> total_loss(const nn::Var<T>& clean, const nn::Var<T>& augmented,
                      std::span<const int> labels, const ObjectiveSpec& spec);

// Clean anchors against augmented candidates; positives are every
// augmented row of the anchor's class (its own copy included); the
// denominator runs over all augmented rows.
template <typename T>
nn::Var<T> cross_view_supcon(const nn::Var<T>& clean, const nn::Var<T>& augmented,
                             std::span<const int> labels, double tau);

// SupCon over the 2B-row concatenation [clean; augmented] with duplicated
// labels and self-exclusion.
template <typename T>
nn::Var<T> unified_supcon(const nn::Var<T>& clean, const nn::Var<T>& augmented,
                          std::span<const int> labels, double tau);

// InfoNCE between predictions and targets: row i's positives are the
// target rows with the same instance id; the denominator is every target.
template <typename T>
nn::Var<T> info_nce(const nn::Var<T>& predicted, const nn::Var<T>& target,
                     std::span<const std::size_t> ids, double tau);

// Pred-C / Pred-A: each contour is split into past and future halves that
// are encoded separately. Pred-C predicts clean future from clean past.
// Pred-A averages clean->clean, augmented past->clean future and clean
// past->augmented future.
template <typename T>
nn::Var<T> predictive_loss(const nn::Model<T>& model, const ViewBatch& batch,
                           const ObjectiveSpec& spec);

// supcon_aug + InfoNCE(clean future -> augmented future).
template <typename T>
nn::Var<T> hybrid_loss(const nn::Model<T>& model, const ViewBatch& batch,
                       const ObjectiveSpec& spec);

// Encodes the views the objective needs and evaluates it.
template <typename T>
nn::Var<T> evaluate(const nn::Model<T>& model, const ViewBatch& batch, const ObjectiveSpec& spec);

}  // namespace objectives

}  // namespace dualglob
