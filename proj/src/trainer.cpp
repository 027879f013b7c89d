#include "dualglob/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dualglob/error.hpp"
#include "dualglob/optim.hpp"
#include "dualglob/rng.hpp"

namespace dualglob {

ViewBatch assemble_batch(std::span<const Sample> samples, std::span<const std::size_t> indices,
                         const TrainConfig& config, std::uint64_t seed) {
  ViewBatch b;
  const std::size_t copies = config.batch_duplication ? 2 : 1;
  const std::size_t rows = indices.size() * copies;
  b.clean.reserve(rows);
  b.labels.reserve(rows);
  b.source.reserve(rows);
  for (std::size_t c = 0; c < copies; ++c)
    for (std::size_t i : indices) {
      if (i >= samples.size()) throw ContractError("batch index out of range");
      b.clean.push_back(samples[i].contour);
      b.labels.push_back(class_index(samples[i].label));
      b.source.push_back(i);
    }
  if (uses_augmented_view(config.objective.kind)) {
    b.augmented.resize(rows);
    for (std::size_t r = 0; r < rows; ++r)
      b.augmented[r] = compose(b.clean[r], config.strategy, config.params, derive_seed(seed, r));
  }
  return b;
}

ViewBatch make_batch(std::span<const Sample> samples, const TrainConfig& config, std::uint64_t seed) {
  if (samples.empty()) throw EmptyDatasetError("make_batch: no samples");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, Stream::shuffle));
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(std::min(order.size(), config.batch_size));
  return assemble_batch(samples, order, config, derive_seed(seed, Stream::augment));
}

namespace {

template <typename T>
EncoderCheckpoint snapshot(const nn::Model<T>& model, int fold, int epoch, const std::string& hash,
                           const std::vector<double>& history) {
  auto ck = EncoderCheckpoint::capture(model);
  ck.fold = fold;
  ck.epoch = epoch;
  ck.config_hash = hash;
  ck.loss_history = history;
  return ck;
}

template <typename T>
FoldTraining run_fold(const Dataset& dataset, const FoldAssignment& folds, int fold,
                      const TrainConfig& config, const TrainHooks& hooks) {
  const std::string hash = config_hash(config);
  const auto train = folds.train_indices(fold);
  if (train.empty()) throw EmptyDatasetError("fold " + std::to_string(fold) + " has no training samples");

  nn::Model<T> model(nn::EncoderConfig::standard(config.d_emb), derive_seed(config.seed, static_cast<std::uint64_t>(fold)));
  nn::RAdamLookahead<T> opt(model.parameters(), config.optimizer());
  const std::span<const Sample> samples(dataset.samples);

  const std::uint64_t fold_seed = derive_seed(config.seed, static_cast<std::uint64_t>(fold));
  const std::uint64_t shuffle_seed = derive_seed(fold_seed, Stream::shuffle);
  const std::uint64_t augment_seed = derive_seed(fold_seed, Stream::augment);

  FoldTraining out;
  if (config.epochs == 0) {
    out.retained.push_back(snapshot(model, fold, 0, hash, out.loss_history));
    return out;
  }

  std::vector<std::size_t> order = train;
  std::uint64_t step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng rng(derive_seed(shuffle_seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const std::span<const std::size_t> chunk(order.data() + begin, end - begin);
      if (chunk.size() * (config.batch_duplication ? 2 : 1) < 2) continue;
      const ViewBatch batch = assemble_batch(samples, chunk, config, derive_seed(augment_seed, step++));
      auto loss = objectives::evaluate(model, batch, config.objective);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        if (!hooks.diagnostic_dir.empty()) {
          std::filesystem::create_directories(hooks.diagnostic_dir);
          save_checkpoint(snapshot(model, fold, epoch, hash, out.loss_history),
                          hooks.diagnostic_dir / ("fold" + std::to_string(fold) + "_diverged.ckpt"));
        }
        throw DivergenceError("non-finite loss in fold " + std::to_string(fold) + ", epoch " +
                              std::to_string(epoch) + ", step " + std::to_string(step));
      }
      opt.zero_grad();
      nn::backward(loss);
      opt.step();
      total += value;
      ++batches;
    }
    out.loss_history.push_back(batches ? total / static_cast<double>(batches) : 0.0);
    if (hooks.on_epoch) hooks.on_epoch(fold, epoch, out.loss_history.back());
    if (epoch > config.epochs - config.keep_last)
      out.retained.push_back(snapshot(model, fold, epoch, hash, out.loss_history));
  }
  return out;
}

template <typename T>
FeatureMatrix features_with(const EncoderCheckpoint& ck, std::span<const Sample> samples) {
  const auto model = ck.restore<T>();
  nn::NoGradGuard no_grad;
  FeatureMatrix out(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(ck.d_emb()));
  constexpr std::size_t kChunk = 256;
  std::vector<const F0Contour*> ptrs;
  for (std::size_t begin = 0; begin < samples.size(); begin += kChunk) {
    const std::size_t end = std::min(samples.size(), begin + kChunk);
    ptrs.clear();
    for (std::size_t i = begin; i < end; ++i) ptrs.push_back(&samples[i].contour);
    const auto z = model.encode(nn::ContourBatch<T>::from(std::span<const F0Contour* const>(ptrs)));
    const auto& v = z.value();
    const std::size_t d = v.dim(1);
    for (std::size_t r = 0; r < end - begin; ++r)
      for (std::size_t c = 0; c < d; ++c)
        out(static_cast<Eigen::Index>(begin + r), static_cast<Eigen::Index>(c)) = v[r * d + c];
  }
  return out;
}

}  // namespace

FoldTraining train_fold(const Dataset& dataset, const FoldAssignment& folds, int fold,
                        const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (folds.fold_of.size() != dataset.size())
    throw ContractError("fold assignment covers " + std::to_string(folds.fold_of.size()) +
                        " samples, dataset has " + std::to_string(dataset.size()));
  if (fold < 0 || fold >= folds.k) throw ContractError("fold index out of range");
  if (config.precision == Precision::f64) return run_fold<double>(dataset, folds, fold, config, hooks);
  return run_fold<float>(dataset, folds, fold, config, hooks);
}

FeatureMatrix extract_features(const EncoderCheckpoint& checkpoint, std::span<const Sample> samples,
                               std::optional<std::size_t> expected_d_emb) {
  if (expected_d_emb && *expected_d_emb != checkpoint.d_emb())
    throw ContractError("checkpoint has d_emb " + std::to_string(checkpoint.d_emb()) + ", expected " +
                        std::to_string(*expected_d_emb));
  if (samples.empty()) return FeatureMatrix(0, static_cast<Eigen::Index>(checkpoint.d_emb()));
  if (checkpoint.dtype == Precision::f64) return features_with<double>(checkpoint, samples);
  return features_with<float>(checkpoint, samples);
}

}  // namespace dualglob
