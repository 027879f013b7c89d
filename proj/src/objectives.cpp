#include "dualglob/objectives.hpp"

#include <algorithm>
#include <map>

#include "dualglob/error.hpp"

namespace dualglob {

namespace {

struct ObjectiveName {
  ObjectiveKind kind;
  std::string_view key;
  std::string_view title;
};

constexpr ObjectiveName kObjectiveNames[] = {
    {ObjectiveKind::DualGlob, "dualglob", "Dual-Glob"},
    {ObjectiveKind::GlobClean, "globclean", "Glob-Clean"},
    {ObjectiveKind::GlobAugment, "globaugment", "Glob-Augment"},
    {ObjectiveKind::CrossView, "crossview", "Cross-View SupCon"},
    {ObjectiveKind::Unified, "unified", "Unified SupCon"},
    {ObjectiveKind::PredC, "predc", "Pred-C"},
    {ObjectiveKind::PredA, "preda", "Pred-A"},
    {ObjectiveKind::Hybrid, "hybrid", "Hybrid"},
};

using Mask = std::vector<std::uint8_t>;

void require_rows(std::size_t rows, std::size_t labels, const char* what) {
  if (rows != labels)
    throw ContractError(std::string(what) + ": " + std::to_string(rows) + " rows but " +
                        std::to_string(labels) + " labels");
}

}  // namespace

void ObjectiveSpec::validate() const {
  if (!(tau > 0.0)) throw ConfigError("objective temperature must be positive");
  if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("loss weights must be non-negative");
}

ObjectiveKind parse_objective(std::string_view name) {
  std::string lower;
  for (char ch : name)
    if (ch != '-' && ch != '_' && ch != ' ') lower += static_cast<char>(std::tolower(ch));
  for (const auto& n : kObjectiveNames)
    if (n.key == lower) return n.kind;
  if (lower == "crossviewsupcon") return ObjectiveKind::CrossView;
  if (lower == "unifiedsupcon") return ObjectiveKind::Unified;
  throw ConfigError("unknown objective '" + std::string(name) + "'");
}

std::string_view objective_key(ObjectiveKind k) {
  for (const auto& n : kObjectiveNames)
    if (n.kind == k) return n.key;
  return "?";
}

std::string_view objective_title(ObjectiveKind k) {
  for (const auto& n : kObjectiveNames)
    if (n.kind == k) return n.title;
  return "?";
}

bool uses_augmented_view(ObjectiveKind k) {
  return k != ObjectiveKind::GlobClean && k != ObjectiveKind::PredC;
}

namespace objectives {

template <typename T>
nn::Var<T> supcon_clean(const nn::Var<T>& clean, std::span<const int> labels, double tau) {
  const std::size_t B = clean.shape().at(0);
  require_rows(B, labels.size(), "supcon_clean");
  if (B < 2) throw ContractError("supcon_clean: loss is undefined for fewer than 2 rows");
  Mask pos(B * B, 0), den(B * B, 0);
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < B; ++j) {
      if (i == j) continue;
      den[i * B + j] = 1;
      pos[i * B + j] = labels[i] == labels[j];
    }
  return nn::supcon(clean, clean, pos, den, tau);
}

template <typename T>
nn::Var<T> supcon_aug(const nn::Var<T>& augmented, const nn::Var<T>& clean,
                      std::span<const int> labels, double tau) {
  const std::size_t B = clean.shape().at(0);
  if (augmented.shape() != clean.shape())
    throw ContractError("supcon_aug: augmented " + nn::shape_str(augmented.shape()) +
                        " vs clean " + nn::shape_str(clean.shape()));
  require_rows(B, labels.size(), "supcon_aug");
  if (B < 2) throw ContractError("supcon_aug: loss is undefined for fewer than 2 rows");
  Mask pos(B * B, 0), den(B * B, 0);
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < B; ++j) {
      if (i == j) continue;
      den[i * B + j] = 1;
      pos[i * B + j] = labels[i] == labels[j];
    }
  return nn::supcon(augmented, clean, pos, den, tau);
}

template <typename T>
nn::Var<T> total_loss(const nn::Var<T>& clean, const nn::Var<T>& augmented,
                      std::span<const int> labels, const ObjectiveSpec& spec) {
  spec.validate();
  return nn::add(nn::scale(supcon_clean(clean, labels, spec.tau), spec.lambda1),
                 nn::scale(supcon_aug(augmented, clean, labels, spec.tau), spec.lambda2));
}

template <typename T>
nn::Var<T> cross_view_supcon(const nn::Var<T>& clean, const nn::Var<T>& augmented,
                             std::span<const int> labels, double tau) {
  const std::size_t B = clean.shape().at(0);
  if (augmented.shape() != clean.shape())
    throw ContractError("cross_view_supcon: view shapes differ");
  require_rows(B, labels.size(), "cross_view_supcon");
  Mask pos(B * B, 0), den(B * B, 1);
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t p = 0; p < B; ++p) pos[i * B + p] = labels[i] == labels[p];
  return nn::supcon(clean, augmented, pos, den, tau);
}

template <typename T>
nn::Var<T> unified_supcon(const nn::Var<T>& clean, const nn::Var<T>& augmented,
                          std::span<const int> labels, double tau) {
  const std::size_t B = clean.shape().at(0);
  if (augmented.shape() != clean.shape())
    throw ContractError("unified_supcon: view shapes differ");
  require_rows(B, labels.size(), "unified_supcon");
  const std::size_t J = 2 * B;
  auto label = [&](std::size_t i) { return labels[i % B]; };
  Mask pos(J * J, 0), den(J * J, 0);
  for (std::size_t i = 0; i < J; ++i)
    for (std::size_t a = 0; a < J; ++a) {
      if (i == a) continue;
      den[i * J + a] = 1;
      pos[i * J + a] = label(i) == label(a);
    }
  auto all = nn::concat_rows(clean, augmented);
  return nn::supcon(all, all, pos, den, tau);
}

template <typename T>
nn::Var<T> info_nce(const nn::Var<T>& predicted, const nn::Var<T>& target,
                    std::span<const std::size_t> ids, double tau) {
  const std::size_t B = predicted.shape().at(0);
  if (target.shape() != predicted.shape())
    throw ContractError("info_nce: prediction and target shapes differ");
  if (ids.size() != B) throw ContractError("info_nce: one instance id per row required");
  Mask pos(B * B, 0), den(B * B, 1);
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < B; ++j) pos[i * B + j] = ids[i] == ids[j];
  return nn::supcon(predicted, target, pos, den, tau);
}

namespace {

// Encodes each distinct source contour once and expands back to rows.
template <typename T>
nn::Var<T> encode_rows(const nn::Model<T>& model, const std::vector<F0Contour>& contours,
                       std::span<const std::size_t> source, bool shared_rows, std::size_t begin,
                       std::size_t end) {
  if (!shared_rows) {
    return model.encode(nn::ContourBatch<T>::from(std::span<const F0Contour>(contours), begin, end));
  }
  std::map<std::size_t, std::size_t> first;
  std::vector<const F0Contour*> unique;
  std::vector<std::size_t> expand(source.size());
  for (std::size_t r = 0; r < source.size(); ++r) {
    auto [it, inserted] = first.try_emplace(source[r], unique.size());
    if (inserted) unique.push_back(&contours[r]);
    expand[r] = it->second;
  }
  auto z = model.encode(nn::ContourBatch<T>::from(std::span<const F0Contour* const>(unique), begin, end));
  if (unique.size() == source.size()) {
    bool identity = true;
    for (std::size_t r = 0; r < expand.size(); ++r) identity = identity && expand[r] == r;
    if (identity) return z;
  }
  return nn::gather_rows(z, expand);
}

void check_batch(const ViewBatch& b, bool needs_aug) {
  if (b.rows() == 0) throw ContractError("empty training batch");
  if (b.clean.size() != b.rows() || b.source.size() != b.rows())
    throw ContractError("view batch rows are inconsistent");
  if (needs_aug && b.augmented.size() != b.rows())
    throw ContractError("objective needs an augmented view for every row");
}

std::size_t half_point(const ViewBatch& b) {
  const std::size_t T = b.clean.front().size();
  if (T % 2 != 0) throw ShapeError("predictive objectives need an even frame count, got " + std::to_string(T));
  return T / 2;
}

}  // namespace

template <typename T>
nn::Var<T> predictive_loss(const nn::Model<T>& model, const ViewBatch& batch,
                           const ObjectiveSpec& spec) {
  spec.validate();
  const bool bidirectional = spec.kind == ObjectiveKind::PredA;
  check_batch(batch, bidirectional);
  const std::size_t half = half_point(batch);
  const std::size_t T_ = batch.clean.front().size();
  auto cp = encode_rows(model, batch.clean, batch.source, true, 0, half);
  auto cf = encode_rows(model, batch.clean, batch.source, true, half, T_);
  auto loss = info_nce(model.predict(cp), model.project(cf), batch.source, spec.tau);
  if (!bidirectional) return loss;

  auto ap = encode_rows(model, batch.augmented, batch.source, false, 0, half);
  auto af = encode_rows(model, batch.augmented, batch.source, false, half, T_);
  auto a_to_c = info_nce(model.predict(ap), model.project(cf), batch.source, spec.tau);
  auto c_to_a = info_nce(model.predict(cp), model.project(af), batch.source, spec.tau);
  return nn::scale(nn::add(nn::add(loss, a_to_c), c_to_a), 1.0 / 3.0);
}

template <typename T>
nn::Var<T> hybrid_loss(const nn::Model<T>& model, const ViewBatch& batch,
                       const ObjectiveSpec& spec) {
  spec.validate();
  check_batch(batch, true);
  const std::size_t half = half_point(batch);
  const std::size_t T_ = batch.clean.front().size();
  auto zc = encode_rows(model, batch.clean, batch.source, true, 0, T_);
  auto za = encode_rows(model, batch.augmented, batch.source, false, 0, T_);
  auto aug_term = supcon_aug(model.project(za), model.project(zc), batch.labels, spec.tau);
  auto cf = encode_rows(model, batch.clean, batch.source, true, half, T_);
  auto af = encode_rows(model, batch.augmented, batch.source, false, half, T_);
  auto pred_term = info_nce(model.predict(cf), model.project(af), batch.source, spec.tau);
  return nn::add(aug_term, pred_term);
}

template <typename T>
nn::Var<T> evaluate(const nn::Model<T>& model, const ViewBatch& batch, const ObjectiveSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case ObjectiveKind::PredC:
    case ObjectiveKind::PredA: return predictive_loss(model, batch, spec);
    case ObjectiveKind::Hybrid: return hybrid_loss(model, batch, spec);
    default: break;
  }
  const bool needs_aug = uses_augmented_view(spec.kind);
  check_batch(batch, needs_aug);
  const std::size_t T_ = batch.clean.front().size();
  auto pc = model.project(encode_rows(model, batch.clean, batch.source, true, 0, T_));
  if (spec.kind == ObjectiveKind::GlobClean) return supcon_clean(pc, batch.labels, spec.tau);
  auto pa = model.project(encode_rows(model, batch.augmented, batch.source, false, 0, T_));
  switch (spec.kind) {
    case ObjectiveKind::DualGlob: return total_loss(pc, pa, batch.labels, spec);
    case ObjectiveKind::GlobAugment: return supcon_aug(pa, pc, batch.labels, spec.tau);
    case ObjectiveKind::CrossView: return cross_view_supcon(pc, pa, batch.labels, spec.tau);
    case ObjectiveKind::Unified: return unified_supcon(pc, pa, batch.labels, spec.tau);
    default: break;
  }
  throw ContractError("unhandled objective kind");
}

#define DUALGLOB_INSTANTIATE_OBJECTIVES(T)                                                        \
  template nn::Var<T> supcon_clean<T>(const nn::Var<T>&, std::span<const int>, double);         \
  template nn::Var<T> supcon_aug<T>(const nn::Var<T>&, const nn::Var<T>&, std::span<const int>, \
                                    double);                                                    \
  template nn::Var<T> total_loss<T>(const nn::Var<T>&, const nn::Var<T>&, std::span<const int>, \
                                    const ObjectiveSpec&);                                      \
  template nn::Var<T> cross_view_supcon<T>(const nn::Var<T>&, const nn::Var<T>&,                \
                                           std::span<const int>, double);                       \
  template nn::Var<T> unified_supcon<T>(const nn::Var<T>&, const nn::Var<T>&,                   \
                                        std::span<const int>, double);                          \
  template nn::Var<T> info_nce<T>(const nn::Var<T>&, const nn::Var<T>&,                         \
                                  std::span<const std::size_t>, double);                        \
  template nn::Var<T> predictive_loss<T>(const nn::Model<T>&, const ViewBatch&,                 \
                                         const ObjectiveSpec&);                                 \
  template nn::Var<T> hybrid_loss<T>(const nn::Model<T>&, const ViewBatch&,                     \
                                     const ObjectiveSpec&);                                     \
  template nn::Var<T> evaluate<T>(const nn::Model<T>&, const ViewBatch&, const ObjectiveSpec&);

DUALGLOB_INSTANTIATE_OBJECTIVES(float)
DUALGLOB_INSTANTIATE_OBJECTIVES(double)

#undef DUALGLOB_INSTANTIATE_OBJECTIVES

}  // namespace objectives

}  // namespace dualglob
