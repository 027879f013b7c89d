#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

namespace dualglob {

// The sixteen K-ToBI accentual-phrase tone patterns. The enumerator order is
// the class index used everywhere (alphabetical, as in per-class reports).
enum class ToneLabel : int {
  H, HH, HHL, HHLH, HHLL, HL, HLH, HLL,
  L, LH, LHH, LHL, LHLH, LHLL, LL, LLH,
};

inline constexpr std::size_t kNumClasses = 16;

inline constexpr std::array<std::string_view, kNumClasses> kToneNames = {
    "H", "HH", "HHL", "HHLH", "HHLL", "HL", "HLH", "HLL",
    "L", "LH", "LHH", "LHL", "LHLH", "LHLL", "LL", "LLH",
};

constexpr int class_index(ToneLabel t) { return static_cast<int>(t); }

constexpr ToneLabel tone_from_index(int i) { return static_cast<ToneLabel>(i); }

constexpr std::string_view to_string(ToneLabel t) {
  return kToneNames[static_cast<std::size_t>(t)];
}

// Case-sensitive; throws LabelError for anything outside the sixteen names.
ToneLabel parse_tone(std::string_view s);

// Number of tonal targets in the pattern (length of its name).
inline std::size_t tone_length(ToneLabel t) { return to_string(t).size(); }

}  // namespace dualglob
