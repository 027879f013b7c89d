#pragma once

// Linear evaluation of frozen features: multinomial logistic regression,
// classification metrics, the k-fold protocol, gender subgroups and
// syllable-count fusion.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dualglob/corpus.hpp"
#include "dualglob/trainer.hpp"

namespace dualglob {

struct ProbeConfig {
  double l2_strength = 1e-2;
  int max_iters = 2000;
  double tol = 1e-4;
  std::uint64_t seed = 42;  // recorded in manifests; the fit draws no randomness
  bool standardize = true;

  void validate() const;
};

// Per-dimension z-score fitted on one matrix; zero spread maps to unit sd.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd sd;

  static Standardizer fit(const FeatureMatrix& x);
  FeatureMatrix apply(const FeatureMatrix& x) const;
};

struct ProbeModel {
  Eigen::MatrixXd weights;  // [D, C]
  Eigen::RowVectorXd bias;  // [C]
  std::optional<Standardizer> scaler;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;

  std::size_t dim() const { return static_cast<std::size_t>(weights.rows()); }
  Eigen::MatrixXd logits(const FeatureMatrix& x) const;
  // argmax of the logits; ties go to the lowest class index.
  std::vector<int> predict(const FeatureMatrix& x) const;
};

// Minimizes mean cross-entropy + l2/2 (|W|^2 + |b|^2) over kNumClasses
// outputs by full-batch gradient descent with Barzilai-Borwein steps and
// Armijo backtracking, starting from zero. Stops once the gradient norm is
// below tol or after max_iters. An infinite l2 yields the all-zero model.
ProbeModel fit_logistic(const FeatureMatrix& features, std::span<const int> labels,
                        const ProbeConfig& config);

// The objective fit_logistic minimizes, evaluated on standardized inputs.
double probe_objective(const ProbeModel& model, const FeatureMatrix& standardized,
                       std::span<const int> labels, double l2);

struct ClassMetrics {
  ToneLabel label = ToneLabel::H;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct MetricSummary {
  double mean = 0.0;
  double sd = 0.0;  // sample sd across folds; 0 for a single fold
};

struct MetricsReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassMetrics> per_class;  // all sixteen classes, index order
  std::vector<std::vector<std::size_t>> confusion;  // [true][pred]
  std::vector<int> macro_classes;  // classes averaged into macro_f1
  MetricSummary accuracy_folds;
  MetricSummary macro_f1_folds;
  std::vector<double> fold_accuracy;
  std::vector<double> fold_macro_f1;
  std::vector<std::string> notes;

  std::size_t total() const;
};

// Precision, recall and F1 are 0 whenever their denominator is 0. Without
// `classes`, macro-F1 averages all sixteen classes.
MetricsReport evaluate_predictions(std::span<const int> truth, std::span<const int> predicted,
                                   std::optional<std::span<const int>> classes = std::nullopt);
MetricsReport evaluate(const ProbeModel& model, const FeatureMatrix& features,
                       std::span<const int> labels);

MetricSummary summarize(std::span<const double> values);

// [z ; onehot(min(count, 4))] over the categories 1, 2, 3, >=4.
FeatureMatrix fuse_syllable(const FeatureMatrix& features, std::span<const int> syllable_counts);

struct CrossValOptions {
  bool fuse_syllables = false;
  // Average metrics over every retained checkpoint rather than the last.
  bool average_retained = true;
};

// checkpoints[f] holds fold f's retained checkpoints. Per fold and per
// checkpoint: extract features, fit on the training split, score the
// held-out split. Fold metrics are averaged over checkpoints and summarized
// as mean and sd across folds. accuracy, macro_f1, per_class and confusion
// describe the predictions of each fold's last checkpoint pooled over folds,
// so trace/total equals accuracy.
MetricsReport crossval_probe(const Dataset& dataset,
                             const std::vector<std::vector<EncoderCheckpoint>>& checkpoints,
                             const FoldAssignment& folds, const ProbeConfig& config,
                             const CrossValOptions& options = {});

// Same protocol over precomputed features; features[f][c] covers the whole
// dataset for fold f, checkpoint c.
MetricsReport crossval_features(const Dataset& dataset,
                                const std::vector<std::vector<FeatureMatrix>>& features,
                                const FoldAssignment& folds, const ProbeConfig& config,
                                const CrossValOptions& options = {});

enum class SubgroupMode { unified, gender_specific };

struct SubgroupReport {
  SubgroupMode mode = SubgroupMode::unified;
  Gender gender = Gender::female;
  MetricsReport report;
};

// Mode A: the unified encoders from `unified` scored on each gender's part
// of every test fold. Mode B: `train_gender` runs the whole pipeline on one
// gender's samples and returns its per-fold checkpoints; those are scored on
// the same gender's test folds. Classes absent from a gender's data are left
// out of that gender's macro-F1 with a note.
struct SubgroupInputs {
  const Dataset* dataset = nullptr;
  const FoldAssignment* folds = nullptr;
  const std::vector<std::vector<EncoderCheckpoint>>* unified = nullptr;
  std::function<std::vector<std::vector<EncoderCheckpoint>>(const Dataset&, const FoldAssignment&)>
      train_gender;
};

std::vector<SubgroupReport> subgroup_protocols(const SubgroupInputs& inputs, const ProbeConfig& config,
                                               const CrossValOptions& options = {});

std::string_view to_string(SubgroupMode m);

}  // namespace dualglob
