#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "dualglob/checkpoint.hpp"
#include "dualglob/config.hpp"
#include "dualglob/corpus.hpp"
#include "dualglob/objectives.hpp"

namespace dualglob {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Rows `indices` (in order), followed by the same rows again when
// batch_duplication is on. Row r's augmented view is
// compose(clean_r, strategy, params, derive_seed(seed, r)); duplicate rows
// therefore get different views of the same contour.
ViewBatch assemble_batch(std::span<const Sample> samples, std::span<const std::size_t> indices,
                         const TrainConfig& config, std::uint64_t seed);

// Seeded shuffle of all samples, first batch_size taken, then assembled.
ViewBatch make_batch(std::span<const Sample> samples, const TrainConfig& config, std::uint64_t seed);

struct FoldTraining {
  // Checkpoints of the trailing keep_last epochs, oldest first. With zero
  // epochs this holds the initialization alone (epoch 0).
  std::vector<EncoderCheckpoint> retained;
  std::vector<double> loss_history;

  const EncoderCheckpoint& final() const { return retained.back(); }
};

struct TrainHooks {
  std::function<void(int fold, int epoch, double loss)> on_epoch;
  // Where a diverged run leaves fold{f}_diverged.ckpt; empty keeps none.
  std::filesystem::path diagnostic_dir;
};

// Trains a fresh encoder on every sample outside `fold`. Each epoch visits
// the training split once in a seeded order, in chunks of batch_size.
// Throws DivergenceError on a non-finite loss.
FoldTraining train_fold(const Dataset& dataset, const FoldAssignment& folds, int fold,
                        const TrainConfig& config, const TrainHooks& hooks = {});

// z = masked_gap(encoder(x)) for every sample in dataset order; no heads, no
// augmentation, no gradient recording.
FeatureMatrix extract_features(const EncoderCheckpoint& checkpoint, std::span<const Sample> samples,
                               std::optional<std::size_t> expected_d_emb = std::nullopt);

}  // namespace dualglob
