#include "dualglob/tone.hpp"

#include "dualglob/error.hpp"

namespace dualglob {

ToneLabel parse_tone(std::string_view s) {
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (kToneNames[i] == s) return tone_from_index(static_cast<int>(i));
  }
  throw LabelError("unknown tone label '" + std::string(s) + "'");
}

}  // namespace dualglob
