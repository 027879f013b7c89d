#pragma once

// Experiment configuration and its canonical JSON form. The config hash is
// FNV-1a 64 over the canonical dump, so two configs hash equal exactly when
// every field is equal.

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "dualglob/augment.hpp"
#include "dualglob/objectives.hpp"
#include "dualglob/optim.hpp"

namespace dualglob {

enum class Precision { f32, f64 };

std::string_view to_string(Precision p);
Precision parse_precision(std::string_view s);

struct TrainConfig {
  ObjectiveSpec objective;
  SelectionStrategy strategy;
  AugmentParams params;
  std::size_t d_emb = 64;
  double lr = 1e-2;
  double weight_decay = 1e-4;
  std::size_t batch_size = 64;
  int epochs = 50;
  std::uint64_t seed = 42;
  bool batch_duplication = true;
  int folds = 5;
  std::uint64_t fold_seed = 42;
  int keep_last = 5;  // trailing epoch checkpoints retained per fold
  Precision precision = Precision::f32;

  void validate() const;
  nn::OptimizerConfig optimizer() const;
};

nlohmann::json to_json(const TrainConfig& c);
// Missing keys keep their defaults; unknown keys are a ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j);

std::uint64_t fnv1a64(std::string_view bytes);
// 16 lowercase hex digits.
std::string config_hash(const TrainConfig& c);
std::string hex64(std::uint64_t v);

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace dualglob
