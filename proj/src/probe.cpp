#include "dualglob/probe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dualglob/error.hpp"

namespace dualglob {

namespace {

constexpr int kC = static_cast<int>(kNumClasses);

void check_labels(std::span<const int> labels) {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0 || labels[i] >= kC)
      throw InputError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                       " is outside the 16-class set");
}

FeatureMatrix take_rows(const FeatureMatrix& x, std::span<const std::size_t> rows) {
  FeatureMatrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

std::vector<int> take(std::span<const int> v, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(v[r]);
  return out;
}

struct Objective {
  const FeatureMatrix& x;
  const Eigen::MatrixXd& y;  // one-hot [N, C]
  double l2;

  // Loss at (w, b); fills the gradient when asked.
  double operator()(const Eigen::MatrixXd& w, const Eigen::RowVectorXd& b, Eigen::MatrixXd* gw,
                    Eigen::RowVectorXd* gb) const {
    const double n = static_cast<double>(x.rows());
    Eigen::MatrixXd z = x * w;
    z.rowwise() += b;
    const Eigen::VectorXd zmax = z.rowwise().maxCoeff();
    z.colwise() -= zmax;
    Eigen::MatrixXd p = z.array().exp().matrix();
    const Eigen::VectorXd norm = p.rowwise().sum();
    const Eigen::VectorXd lse = norm.array().log().matrix();
    double ce = lse.sum() - (z.cwiseProduct(y)).sum();
    const double loss = ce / n + 0.5 * l2 * (w.squaredNorm() + b.squaredNorm());
    if (gw) {
      p.array().colwise() /= norm.array();
      p -= y;
      *gw = x.transpose() * p / n + l2 * w;
      *gb = p.colwise().sum() / n + l2 * b;
    }
    return loss;
  }
};

double grad_norm(const Eigen::MatrixXd& gw, const Eigen::RowVectorXd& gb) {
  return std::sqrt(gw.squaredNorm() + gb.squaredNorm());
}

}  // namespace

void ProbeConfig::validate() const {
  if (!(l2_strength >= 0.0)) throw ConfigError("probe l2_strength must be >= 0");
  if (!(tol > 0.0)) throw ConfigError("probe tol must be > 0");
  if (max_iters < 0) throw ConfigError("probe max_iters must be >= 0");
}

Standardizer Standardizer::fit(const FeatureMatrix& x) {
  Standardizer s;
  const double n = static_cast<double>(x.rows());
  s.mean = x.colwise().mean();
  s.sd = Eigen::RowVectorXd::Ones(x.cols());
  if (x.rows() < 2) return s;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double var = (x.col(c).array() - s.mean(c)).square().sum() / n;
    if (var > 0.0) s.sd(c) = std::sqrt(var);
  }
  return s;
}

FeatureMatrix Standardizer::apply(const FeatureMatrix& x) const {
  if (x.cols() != mean.size()) throw ContractError("standardizer width mismatch");
  FeatureMatrix out = x;
  out.rowwise() -= mean;
  out.array().rowwise() /= sd.array();
  return out;
}

Eigen::MatrixXd ProbeModel::logits(const FeatureMatrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != dim())
    throw ContractError("probe expects " + std::to_string(dim()) + " features, got " +
                        std::to_string(x.cols()));
  Eigen::MatrixXd z = (scaler ? scaler->apply(x) : x) * weights;
  z.rowwise() += bias;
  return z;
}

std::vector<int> ProbeModel::predict(const FeatureMatrix& x) const {
  const Eigen::MatrixXd z = logits(x);
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    int best = 0;
    for (int c = 1; c < z.cols(); ++c)
      if (z(r, c) > z(r, best)) best = c;
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

double probe_objective(const ProbeModel& model, const FeatureMatrix& standardized,
                       std::span<const int> labels, double l2) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(standardized.rows(), kC);
  for (std::size_t i = 0; i < labels.size(); ++i) y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  const double penalty = std::isinf(l2) ? 0.0 : l2;
  return Objective{standardized, y, penalty}(model.weights, model.bias, nullptr, nullptr);
}

ProbeModel fit_logistic(const FeatureMatrix& features, std::span<const int> labels,
                        const ProbeConfig& config) {
  config.validate();
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    throw ContractError("probe: features and labels differ in row count");
  if (labels.size() < kNumClasses)
    throw InputError("probe needs at least " + std::to_string(kNumClasses) + " training rows");
  if (!features.allFinite()) throw InputError("probe features contain non-finite values");
  check_labels(labels);

  ProbeModel m;
  if (config.standardize) m.scaler = Standardizer::fit(features);
  const FeatureMatrix x = m.scaler ? m.scaler->apply(features) : features;
  m.weights = Eigen::MatrixXd::Zero(x.cols(), kC);
  m.bias = Eigen::RowVectorXd::Zero(kC);

  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(x.rows(), kC);
  for (std::size_t i = 0; i < labels.size(); ++i) y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;

  if (std::isinf(config.l2_strength)) {
    m.initial_loss = m.final_loss = Objective{x, y, 0.0}(m.weights, m.bias, nullptr, nullptr);
    return m;
  }

  const Objective f{x, y, config.l2_strength};
  Eigen::MatrixXd gw, gw_new;
  Eigen::RowVectorXd gb, gb_new;
  double loss = f(m.weights, m.bias, &gw, &gb);
  m.initial_loss = loss;
  double step = 1.0;
  constexpr double kArmijo = 1e-4;
  int it = 0;
  for (; it < config.max_iters; ++it) {
    const double g2 = gw.squaredNorm() + gb.squaredNorm();
    if (std::sqrt(g2) < config.tol) break;
    Eigen::MatrixXd w_new;
    Eigen::RowVectorXd b_new;
    double loss_new = 0.0;
    for (int bt = 0;; ++bt) {
      w_new = m.weights - step * gw;
      b_new = m.bias - step * gb;
      loss_new = f(w_new, b_new, &gw_new, &gb_new);
      if (loss_new <= loss - kArmijo * step * g2 || bt >= 60) break;
      step *= 0.5;
    }
    if (!(loss_new <= loss)) break;
    // Barzilai-Borwein: s.s / s.y with s the parameter step, y the gradient change.
    const double ss = (w_new - m.weights).squaredNorm() + (b_new - m.bias).squaredNorm();
    const double sy = ((w_new - m.weights).cwiseProduct(gw_new - gw)).sum() +
                      ((b_new - m.bias).cwiseProduct(gb_new - gb)).sum();
    m.weights = std::move(w_new);
    m.bias = std::move(b_new);
    gw = gw_new;
    gb = gb_new;
    loss = loss_new;
    step = sy > 0.0 ? std::clamp(ss / sy, 1e-10, 1e10) : 1.0;
  }
  m.final_loss = loss;
  m.grad_norm = grad_norm(gw, gb);
  m.iterations = it;
  return m;
}

std::size_t MetricsReport::total() const {
  std::size_t n = 0;
  for (const auto& row : confusion) n += std::accumulate(row.begin(), row.end(), std::size_t{0});
  return n;
}

MetricsReport evaluate_predictions(std::span<const int> truth, std::span<const int> predicted,
                                   std::optional<std::span<const int>> classes) {
  if (truth.size() != predicted.size())
    throw ContractError("truth and prediction lengths differ");
  check_labels(truth);
  check_labels(predicted);
  MetricsReport r;
  r.confusion.assign(kNumClasses, std::vector<std::size_t>(kNumClasses, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++r.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
    correct += truth[i] == predicted[i];
  }
  r.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    ClassMetrics m;
    m.label = tone_from_index(static_cast<int>(c));
    std::size_t tp = r.confusion[c][c], col = 0;
    for (std::size_t t = 0; t < kNumClasses; ++t) col += r.confusion[t][c];
    m.support = std::accumulate(r.confusion[c].begin(), r.confusion[c].end(), std::size_t{0});
    m.precision = col ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
    m.recall = m.support ? static_cast<double>(tp) / static_cast<double>(m.support) : 0.0;
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    r.per_class.push_back(m);
  }
  if (classes) {
    r.macro_classes.assign(classes->begin(), classes->end());
    check_labels(r.macro_classes);
  } else {
    r.macro_classes.resize(kNumClasses);
    std::iota(r.macro_classes.begin(), r.macro_classes.end(), 0);
  }
  double sum = 0.0;
  for (int c : r.macro_classes) sum += r.per_class[static_cast<std::size_t>(c)].f1;
  r.macro_f1 = r.macro_classes.empty() ? 0.0 : sum / static_cast<double>(r.macro_classes.size());
  r.fold_accuracy = {r.accuracy};
  r.fold_macro_f1 = {r.macro_f1};
  r.accuracy_folds = {r.accuracy, 0.0};
  r.macro_f1_folds = {r.macro_f1, 0.0};
  return r;
}

MetricsReport evaluate(const ProbeModel& model, const FeatureMatrix& features, std::span<const int> labels) {
  const auto pred = model.predict(features);
  return evaluate_predictions(labels, pred);
}

MetricSummary summarize(std::span<const double> values) {
  MetricSummary s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

FeatureMatrix fuse_syllable(const FeatureMatrix& features, std::span<const int> syllable_counts) {
  if (static_cast<std::size_t>(features.rows()) != syllable_counts.size())
    throw ContractError("fuse_syllable: one syllable count per row required");
  FeatureMatrix out = FeatureMatrix::Zero(features.rows(), features.cols() + 4);
  out.leftCols(features.cols()) = features;
  for (std::size_t i = 0; i < syllable_counts.size(); ++i) {
    const int n = syllable_counts[i];
    if (n < 1) throw InputError("syllable count must be >= 1, got " + std::to_string(n) + " at row " + std::to_string(i));
    out(static_cast<Eigen::Index>(i), features.cols() + std::min(n, 4) - 1) = 1.0;
  }
  return out;
}

namespace {

struct CoreOptions {
  // Test rows to score; empty means the whole test fold.
  std::vector<std::uint8_t> test_keep;
  std::optional<std::vector<int>> macro_classes;
};

MetricsReport crossval_core(const Dataset& dataset, const std::vector<std::vector<FeatureMatrix>>& features,
                            const FoldAssignment& folds, const ProbeConfig& config,
                            const CrossValOptions& options, const CoreOptions& core) {
  if (features.size() != static_cast<std::size_t>(folds.k))
    throw ProtocolError("expected features for " + std::to_string(folds.k) + " folds, got " +
                        std::to_string(features.size()));
  const auto labels = dataset.labels();
  const auto counts = dataset.syllable_counts();
  std::optional<std::span<const int>> classes;
  if (core.macro_classes) classes = std::span<const int>(*core.macro_classes);

  std::vector<int> pooled_truth, pooled_pred;
  MetricsReport out;
  for (int f = 0; f < folds.k; ++f) {
    if (features[static_cast<std::size_t>(f)].empty())
      throw ProtocolError("no checkpoint for fold " + std::to_string(f));
    const auto train = folds.train_indices(f);
    std::vector<std::size_t> test;
    for (auto i : folds.test_indices(f))
      if (core.test_keep.empty() || core.test_keep[i]) test.push_back(i);
    const auto ytr = take(labels, train);
    const auto yte = take(labels, test);

    const auto& per_ck = features[static_cast<std::size_t>(f)];
    const std::size_t first = options.average_retained ? 0 : per_ck.size() - 1;
    double acc = 0.0, f1 = 0.0;
    for (std::size_t c = first; c < per_ck.size(); ++c) {
      if (static_cast<std::size_t>(per_ck[c].rows()) != dataset.size())
        throw ContractError("feature matrix rows differ from dataset size");
      FeatureMatrix x = options.fuse_syllables ? fuse_syllable(per_ck[c], counts) : per_ck[c];
      const auto model = fit_logistic(take_rows(x, train), ytr, config);
      const auto pred = model.predict(take_rows(x, test));
      const auto rep = evaluate_predictions(yte, pred, classes);
      acc += rep.accuracy;
      f1 += rep.macro_f1;
      if (c + 1 == per_ck.size()) {
        pooled_truth.insert(pooled_truth.end(), yte.begin(), yte.end());
        pooled_pred.insert(pooled_pred.end(), pred.begin(), pred.end());
      }
    }
    const double n = static_cast<double>(per_ck.size() - first);
    out.fold_accuracy.push_back(acc / n);
    out.fold_macro_f1.push_back(f1 / n);
  }
  auto pooled = evaluate_predictions(pooled_truth, pooled_pred, classes);
  pooled.fold_accuracy = out.fold_accuracy;
  pooled.fold_macro_f1 = out.fold_macro_f1;
  pooled.accuracy_folds = summarize(pooled.fold_accuracy);
  pooled.macro_f1_folds = summarize(pooled.fold_macro_f1);
  if (config.standardize) pooled.notes.push_back("probe inputs z-scored with training-split statistics");
  return pooled;
}

std::vector<int> present_classes(const Dataset& d) {
  std::vector<int> seen(kNumClasses, 0);
  for (int l : d.labels()) seen[static_cast<std::size_t>(l)] = 1;
  std::vector<int> out;
  for (int c = 0; c < kC; ++c)
    if (seen[static_cast<std::size_t>(c)]) out.push_back(c);
  return out;
}

std::string absent_note(const std::vector<int>& present) {
  std::string names;
  for (int c = 0, p = 0; c < kC; ++c) {
    if (p < static_cast<int>(present.size()) && present[static_cast<std::size_t>(p)] == c) {
      ++p;
      continue;
    }
    names += (names.empty() ? "" : ",") + std::string(to_string(tone_from_index(c)));
  }
  return std::to_string(kNumClasses - present.size()) + " classes absent and excluded from macro-F1" +
         (names.empty() ? "" : " (" + names + ")");
}

std::vector<std::vector<FeatureMatrix>> features_for(
    const Dataset& dataset, const std::vector<std::vector<EncoderCheckpoint>>& checkpoints,
    const FoldAssignment& folds, const CrossValOptions& options) {
  if (checkpoints.size() != static_cast<std::size_t>(folds.k))
    throw ProtocolError("expected checkpoints for " + std::to_string(folds.k) + " folds, got " +
                        std::to_string(checkpoints.size()));
  std::vector<std::vector<FeatureMatrix>> out(checkpoints.size());
  for (std::size_t f = 0; f < checkpoints.size(); ++f) {
    if (checkpoints[f].empty()) throw ProtocolError("missing checkpoint for fold " + std::to_string(f));
    const std::size_t first = options.average_retained ? 0 : checkpoints[f].size() - 1;
    for (std::size_t c = first; c < checkpoints[f].size(); ++c)
      out[f].push_back(extract_features(checkpoints[f][c], dataset.samples));
  }
  return out;
}

}  // namespace

MetricsReport crossval_features(const Dataset& dataset, const std::vector<std::vector<FeatureMatrix>>& features,
                                const FoldAssignment& folds, const ProbeConfig& config,
                                const CrossValOptions& options) {
  return crossval_core(dataset, features, folds, config, options, {});
}

MetricsReport crossval_probe(const Dataset& dataset,
                             const std::vector<std::vector<EncoderCheckpoint>>& checkpoints,
                             const FoldAssignment& folds, const ProbeConfig& config,
                             const CrossValOptions& options) {
  CrossValOptions trimmed = options;
  const auto feats = features_for(dataset, checkpoints, folds, options);
  trimmed.average_retained = true;  // features_for already dropped unused checkpoints
  return crossval_core(dataset, feats, folds, config, trimmed, {});
}

std::string_view to_string(SubgroupMode m) {
  return m == SubgroupMode::unified ? "Unified Model" : "Gender-Specific Model";
}

std::vector<SubgroupReport> subgroup_protocols(const SubgroupInputs& in, const ProbeConfig& config,
                                               const CrossValOptions& options) {
  if (!in.dataset || !in.folds) throw ContractError("subgroup_protocols needs a dataset and folds");
  const Dataset& d = *in.dataset;
  std::vector<SubgroupReport> out;

  if (in.unified) {
    CrossValOptions trimmed = options;
    const auto feats = features_for(d, *in.unified, *in.folds, options);
    trimmed.average_retained = true;
    for (Gender g : {Gender::male, Gender::female}) {
      CoreOptions core;
      core.test_keep.resize(d.size());
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < d.size(); ++i) {
        core.test_keep[i] = d.samples[i].gender == g;
        if (core.test_keep[i]) members.push_back(i);
      }
      if (members.empty()) continue;
      const auto present = present_classes(d.subset(members));
      core.macro_classes = present;
      SubgroupReport r{SubgroupMode::unified, g, crossval_core(d, feats, *in.folds, config, trimmed, core)};
      if (present.size() < kNumClasses) r.report.notes.push_back(absent_note(present));
      out.push_back(std::move(r));
    }
  }

  if (in.train_gender) {
    for (Gender g : {Gender::male, Gender::female}) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < d.size(); ++i)
        if (d.samples[i].gender == g) members.push_back(i);
      if (members.empty()) continue;
      const Dataset part = d.subset(members);
      const FoldAssignment part_folds = stratified_folds(part, in.folds->k, in.folds->seed);
      const auto checkpoints = in.train_gender(part, part_folds);
      CrossValOptions trimmed = options;
      const auto feats = features_for(part, checkpoints, part_folds, options);
      trimmed.average_retained = true;
      CoreOptions core;
      const auto present = present_classes(part);
      core.macro_classes = present;
      SubgroupReport r{SubgroupMode::gender_specific, g,
                       crossval_core(part, feats, part_folds, config, trimmed, core)};
      for (const auto& w : part_folds.warnings) r.report.notes.push_back(w);
      if (present.size() < kNumClasses) r.report.notes.push_back(absent_note(present));
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace dualglob
