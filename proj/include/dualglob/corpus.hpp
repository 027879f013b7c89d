#pragma once

// Accentual-phrase corpus: contours, CSV ingestion, speaker-wise min-max
// normalization, length fixing, stratified folds, and the schematic-contour
// generator used for desk-scale experiments.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dualglob/tone.hpp"

namespace dualglob {

inline constexpr std::size_t kFrames = 200;

// Pitch contour with a per-frame validity mask. Invalid frames hold 0.
struct F0Contour {
  std::vector<double> values;
  std::vector<std::uint8_t> mask;

  std::size_t size() const { return values.size(); }
  std::size_t voiced_count() const;
  bool voiced(std::size_t i) const { return mask[i] != 0; }
};

enum class Gender { male, female };

std::string_view to_string(Gender g);
Gender parse_gender(std::string_view s);

struct Sample {
  F0Contour contour;
  ToneLabel label = ToneLabel::H;
  std::string speaker_id;
  Gender gender = Gender::female;
  int syllable_count = 1;
};

struct SpeakerRange {
  double min_hz = 0.0;
  double max_hz = 0.0;
  std::size_t voiced_frames = 0;

  bool degenerate() const { return !(max_hz > min_hz); }
};

using SpeakerStats = std::map<std::string, SpeakerRange>;

struct Dataset {
  std::vector<Sample> samples;
  SpeakerStats speaker_stats;
  std::vector<std::string> warnings;

  std::size_t size() const { return samples.size(); }
  std::vector<int> labels() const;
  std::vector<int> syllable_counts() const;
  Dataset subset(std::span<const std::size_t> indices) const;
};

// Resamples or pads to `frames`. Longer inputs are linearly interpolated
// between voiced neighbours and the mask is taken from the nearest source
// frame; shorter inputs are right-padded with invalid frames.
F0Contour fix_length(std::span<const double> raw_values,
                     std::span<const std::uint8_t> raw_mask,
                     std::size_t frames = kFrames);

// Voiced-frame min/max per speaker. With `subset`, only those samples
// contribute (speakers absent from the subset are omitted).
SpeakerStats compute_speaker_stats(
    std::span<const Sample> samples,
    std::optional<std::span<const std::size_t>> subset = std::nullopt);

// Reads the `speaker_id,gender,syllable_count,label,f0_0,...` schema.
// If `<stem>.mask.csv` sits next to the file, its mask is used verbatim
// and values are taken as already normalized.
Dataset load_dataset(const std::filesystem::path& path,
                     std::size_t frames = kFrames);
Dataset parse_dataset(std::istream& in, std::size_t frames = kFrames,
                      std::istream* mask_in = nullptr);

// Companion mask file path for a dataset CSV (`d.csv` -> `d.mask.csv`).
std::filesystem::path mask_path_for(const std::filesystem::path& csv);

// Writes the dataset CSV. When `with_mask` is set, invalid frames are
// written as 0 and a companion mask file is emitted; otherwise invalid
// frames are left empty. `comment` lines are prefixed with '#'.
void write_dataset(const Dataset& d, const std::filesystem::path& path,
                   bool with_mask, const std::string& comment = {});

// x' = (x - min_k) / (max_k - min_k) per speaker over voiced frames.
// `stats_from` restricts the statistics to a sample subset (per-fold
// normalization); values are then clamped to [0, 1]. Degenerate speakers
// map to 0.5 with a warning.
Dataset normalize_speaker(
    Dataset dataset,
    std::optional<std::span<const std::size_t>> stats_from = std::nullopt);

struct FoldAssignment {
  int k = 5;
  std::uint64_t seed = 42;
  std::vector<int> fold_of;
  std::vector<std::string> warnings;

  std::vector<std::size_t> train_indices(int fold) const;
  std::vector<std::size_t> test_indices(int fold) const;
};

// Per-class seeded shuffle followed by round-robin assignment; the
// round-robin offset carries across classes so fold totals also balance.
FoldAssignment stratified_folds(const Dataset& dataset, int k = 5,
                                std::uint64_t seed = 42);
FoldAssignment stratified_folds(std::span<const int> labels, int k,
                                std::uint64_t seed);

struct SpeakerProfile {
  std::string id;
  Gender gender = Gender::female;
  double min_hz = 0.0;
  double max_hz = 0.0;
};

enum class SpanMode {
  // voiced span grows with the number of tonal targets
  proportional,
  // voiced span is independent of the pattern length
  fixed,
};

struct SynthSpec {
  int per_class = 100;
  std::vector<ToneLabel> labels;  // empty: all sixteen
  double tone_low = 0.2;
  double tone_high = 0.8;
  double target_jitter_sd = 0.02;
  double duration_jitter = 0.3;
  double unvoiced_dropout = 0.05;
  SpanMode span_mode = SpanMode::proportional;
  int frames_per_target = 40;  // proportional mode
  int span_frames = 160;       // fixed mode
  std::size_t frames = kFrames;
  std::vector<SpeakerProfile> speaker_pool = default_speaker_pool();

  static std::vector<SpeakerProfile> default_speaker_pool();
  void validate() const;
};

// Piecewise-linear schematic contours in Hz, deterministic given `seed`.
Dataset synth_generate(const SynthSpec& spec, std::uint64_t seed);

}  // namespace dualglob
