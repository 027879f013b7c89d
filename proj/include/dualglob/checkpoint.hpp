#pragma once

// Encoder checkpoints. On disk: the magic "DGCKPT01", a little-endian u64
// header length, a JSON header (shapes, names, dtype, fold, epoch, config
// hash, loss history) and the parameter arrays back to back in header order.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dualglob/config.hpp"
#include "dualglob/model.hpp"

namespace dualglob {

struct EncoderCheckpoint {
  nn::EncoderConfig encoder;
  int fold = 0;
  int epoch = 0;
  std::string config_hash;
  Precision dtype = Precision::f32;
  std::vector<double> loss_history;  // mean loss of epochs 1..epoch
  std::vector<std::string> names;
  std::vector<nn::Shape> shapes;
  std::vector<std::vector<double>> params;

  std::size_t d_emb() const { return encoder.d_emb(); }

  template <typename T>
  static EncoderCheckpoint capture(const nn::Model<T>& model);
  // Fresh model holding these parameters; ContractError on shape mismatch.
  template <typename T>
  nn::Model<T> restore() const;

  // FNV-1a over the raw parameter bytes.
  std::uint64_t parameter_digest() const;
};

void save_checkpoint(const EncoderCheckpoint& ck, const std::filesystem::path& path);
// Rejects a config-hash mismatch with ConfigError unless `force` is set.
// An empty `expected_hash` skips the check.
EncoderCheckpoint load_checkpoint(const std::filesystem::path& path,
                                  const std::string& expected_hash = {}, bool force = false);

}  // namespace dualglob
