#include "dualglob/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "dualglob/error.hpp"
#include "dualglob/rng.hpp"

namespace dualglob {

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

// Next non-comment, non-blank line.
bool next_line(std::istream& in, std::string& line, std::size_t& line_no) {
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    return true;
  }
  return false;
}

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string row_context(std::size_t row, std::size_t line) {
  return "row " + std::to_string(row) + " (line " + std::to_string(line) + ")";
}

}  // namespace

std::size_t F0Contour::voiced_count() const {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(),
                                                [](std::uint8_t m) { return m != 0; }));
}

std::string_view to_string(Gender g) { return g == Gender::male ? "male" : "female"; }

Gender parse_gender(std::string_view s) {
  s = trim(s);
  if (s == "male" || s == "M" || s == "m") return Gender::male;
  if (s == "female" || s == "F" || s == "f") return Gender::female;
  throw InputError("unknown gender '" + std::string(s) + "'");
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(class_index(s.label));
  return out;
}

std::vector<int> Dataset::syllable_counts() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.syllable_count);
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.samples.reserve(indices.size());
  for (auto i : indices) out.samples.push_back(samples.at(i));
  for (const auto& s : out.samples) {
    auto it = speaker_stats.find(s.speaker_id);
    if (it != speaker_stats.end()) out.speaker_stats[s.speaker_id] = it->second;
  }
  return out;
}

F0Contour fix_length(std::span<const double> raw_values,
                     std::span<const std::uint8_t> raw_mask, std::size_t frames) {
  if (raw_values.empty()) throw InputError("empty contour");
  if (raw_values.size() != raw_mask.size())
    throw ShapeError("contour values and mask differ in length");
  if (frames == 0) throw ConfigError("frame count must be positive");

  F0Contour out;
  out.values.assign(frames, 0.0);
  out.mask.assign(frames, 0);
  const std::size_t n = raw_values.size();

  if (n <= frames) {
    for (std::size_t i = 0; i < n; ++i) {
      out.mask[i] = raw_mask[i] ? 1 : 0;
      out.values[i] = raw_mask[i] ? raw_values[i] : 0.0;
    }
    return out;
  }

  const double step = frames > 1 ? static_cast<double>(n - 1) / static_cast<double>(frames - 1) : 0.0;
  for (std::size_t p = 0; p < frames; ++p) {
    const double pos = static_cast<double>(p) * step;
    const auto i0 = static_cast<std::size_t>(std::floor(pos));
    const std::size_t i1 = std::min(i0 + 1, n - 1);
    const double frac = pos - static_cast<double>(i0);
    const std::size_t nearest = frac < 0.5 ? i0 : i1;
    if (!raw_mask[nearest]) continue;
    out.mask[p] = 1;
    if (raw_mask[i0] && raw_mask[i1]) {
      out.values[p] = raw_values[i0] + frac * (raw_values[i1] - raw_values[i0]);
    } else {
      out.values[p] = raw_values[nearest];
    }
  }
  return out;
}

SpeakerStats compute_speaker_stats(std::span<const Sample> samples,
                                   std::optional<std::span<const std::size_t>> subset) {
  SpeakerStats stats;
  auto visit = [&](const Sample& s) {
    auto [it, inserted] = stats.try_emplace(s.speaker_id);
    auto& r = it->second;
    for (std::size_t t = 0; t < s.contour.size(); ++t) {
      if (!s.contour.voiced(t)) continue;
      const double v = s.contour.values[t];
      if (r.voiced_frames == 0) {
        r.min_hz = r.max_hz = v;
      } else {
        r.min_hz = std::min(r.min_hz, v);
        r.max_hz = std::max(r.max_hz, v);
      }
      ++r.voiced_frames;
    }
  };
  if (subset) {
    for (auto i : *subset) visit(samples[i]);
  } else {
    for (const auto& s : samples) visit(s);
  }
  return stats;
}

std::filesystem::path mask_path_for(const std::filesystem::path& csv) {
  auto p = csv;
  p.replace_extension();
  p += ".mask.csv";
  return p;
}

Dataset parse_dataset(std::istream& in, std::size_t frames, std::istream* mask_in) {
  std::string line;
  std::size_t line_no = 0;
  if (!next_line(in, line, line_no)) throw SchemaError("missing header row");

  const auto header = split_csv(line);
  auto find_col = [&](std::string_view name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (trim(header[i]) == name) return i;
    throw SchemaError("missing column '" + std::string(name) + "'");
  };
  const std::size_t c_speaker = find_col("speaker_id");
  const std::size_t c_gender = find_col("gender");
  const std::size_t c_syl = find_col("syllable_count");
  const std::size_t c_label = find_col("label");

  std::vector<std::pair<long, std::size_t>> f0_cols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto h = trim(header[i]);
    if (h.substr(0, 3) != "f0_") continue;
    long idx = 0;
    const auto rest = h.substr(3);
    const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), idx);
    if (ec != std::errc() || ptr != rest.data() + rest.size())
      throw SchemaError("malformed frame column '" + std::string(h) + "'");
    f0_cols.emplace_back(idx, i);
  }
  if (f0_cols.empty()) throw SchemaError("missing column 'f0_0'");
  std::sort(f0_cols.begin(), f0_cols.end());

  std::string mask_line;
  std::size_t mask_line_no = 0;
  if (mask_in && !next_line(*mask_in, mask_line, mask_line_no))
    throw SchemaError("mask file has no header");

  Dataset d;
  std::size_t row = 0;
  std::vector<double> raw(f0_cols.size());
  std::vector<std::uint8_t> raw_mask(f0_cols.size());
  while (next_line(in, line, line_no)) {
    ++row;
    const auto fields = split_csv(line);
    if (fields.size() != header.size())
      throw SchemaError(row_context(row, line_no) + ": expected " +
                        std::to_string(header.size()) + " fields, got " +
                        std::to_string(fields.size()));
    Sample s;
    s.speaker_id = std::string(trim(fields[c_speaker]));
    try {
      s.gender = parse_gender(fields[c_gender]);
    } catch (const InputError& e) {
      throw SchemaError(row_context(row, line_no) + ": " + e.what());
    }
    const auto syl = parse_number(fields[c_syl]);
    if (!syl || *syl < 1 || std::floor(*syl) != *syl)
      throw SchemaError(row_context(row, line_no) + ": syllable_count must be a positive integer");
    s.syllable_count = static_cast<int>(*syl);
    try {
      s.label = parse_tone(trim(fields[c_label]));
    } catch (const LabelError& e) {
      throw LabelError(row_context(row, line_no) + ": " + e.what());
    }

    if (mask_in) {
      if (!next_line(*mask_in, mask_line, mask_line_no))
        throw SchemaError("mask file ends before " + row_context(row, line_no));
      const auto mf = split_csv(mask_line);
      if (mf.size() != f0_cols.size())
        throw SchemaError("mask file " + row_context(row, mask_line_no) + ": wrong width");
      for (std::size_t j = 0; j < f0_cols.size(); ++j) {
        raw_mask[j] = trim(mf[j]) == "1" ? 1 : 0;
        const auto v = parse_number(fields[f0_cols[j].second]);
        raw[j] = raw_mask[j] && v ? *v : 0.0;
        if (raw_mask[j] && !v) raw_mask[j] = 0;
      }
    } else {
      for (std::size_t j = 0; j < f0_cols.size(); ++j) {
        const auto v = parse_number(fields[f0_cols[j].second]);
        const bool ok = v && *v > 0.0;
        raw_mask[j] = ok ? 1 : 0;
        raw[j] = ok ? *v : 0.0;
      }
    }
    s.contour = fix_length(raw, raw_mask, frames);
    if (tone_length(s.label) > static_cast<std::size_t>(s.syllable_count)) {
      d.warnings.push_back(row_context(row, line_no) + ": label " +
                           std::string(to_string(s.label)) + " has more tones than its " +
                           std::to_string(s.syllable_count) + " syllable(s)");
    }
    d.samples.push_back(std::move(s));
  }
  if (d.samples.empty()) throw EmptyDatasetError("dataset has no rows");
  d.speaker_stats = compute_speaker_stats(d.samples);
  return d;
}

Dataset load_dataset(const std::filesystem::path& path, std::size_t frames) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset '" + path.string() + "'");
  const auto mpath = mask_path_for(path);
  if (std::filesystem::exists(mpath)) {
    std::ifstream min(mpath);
    if (!min) throw InputError("cannot open mask file '" + mpath.string() + "'");
    return parse_dataset(in, frames, &min);
  }
  return parse_dataset(in, frames, nullptr);
}

void write_dataset(const Dataset& d, const std::filesystem::path& path, bool with_mask,
                   const std::string& comment) {
  if (d.samples.empty()) throw EmptyDatasetError("refusing to write an empty dataset");
  const std::size_t frames = d.samples.front().contour.size();
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  std::ofstream mout;
  if (with_mask) {
    mout.open(mask_path_for(path));
    if (!mout) throw InputError("cannot write mask file for '" + path.string() + "'");
  }
  auto put_comment = [&](std::ostream& os) {
    if (comment.empty()) return;
    std::istringstream ss(comment);
    std::string l;
    while (std::getline(ss, l)) os << "# " << l << '\n';
  };
  put_comment(out);
  out << "speaker_id,gender,syllable_count,label";
  for (std::size_t t = 0; t < frames; ++t) out << ",f0_" << t;
  out << '\n';
  if (with_mask) {
    put_comment(mout);
    for (std::size_t t = 0; t < frames; ++t) mout << (t ? "," : "") << "mask_" << t;
    mout << '\n';
  }
  for (const auto& s : d.samples) {
    if (s.contour.size() != frames) throw ShapeError("samples differ in frame count");
    out << s.speaker_id << ',' << to_string(s.gender) << ',' << s.syllable_count << ','
        << to_string(s.label);
    for (std::size_t t = 0; t < frames; ++t) {
      out << ',';
      if (s.contour.voiced(t)) {
        out << format_number(s.contour.values[t]);
      } else if (with_mask) {
        out << '0';
      }
    }
    out << '\n';
    if (with_mask) {
      for (std::size_t t = 0; t < frames; ++t)
        mout << (t ? "," : "") << (s.contour.voiced(t) ? '1' : '0');
      mout << '\n';
    }
  }
}

Dataset normalize_speaker(Dataset dataset,
                          std::optional<std::span<const std::size_t>> stats_from) {
  const SpeakerStats stats =
      stats_from ? compute_speaker_stats(dataset.samples, stats_from) : dataset.speaker_stats;
  const bool clamp = stats_from.has_value();

  std::set<std::string> warned;
  for (auto& s : dataset.samples) {
    auto it = stats.find(s.speaker_id);
    const SpeakerRange* range = nullptr;
    if (it != stats.end() && it->second.voiced_frames > 0) {
      range = &it->second;
    } else {
      auto g = dataset.speaker_stats.find(s.speaker_id);
      if (g != dataset.speaker_stats.end() && g->second.voiced_frames > 0) range = &g->second;
      if (range && stats_from && warned.insert(s.speaker_id + "#fallback").second) {
        dataset.warnings.push_back("speaker " + s.speaker_id +
                                   " absent from the statistics subset; using global range");
      }
    }
    if (!range) continue;  // speaker without voiced frames: nothing to scale
    if (range->degenerate()) {
      if (warned.insert(s.speaker_id).second) {
        dataset.warnings.push_back("speaker " + s.speaker_id +
                                   " has a degenerate pitch range; voiced values set to 0.5");
      }
      for (std::size_t t = 0; t < s.contour.size(); ++t)
        if (s.contour.voiced(t)) s.contour.values[t] = 0.5;
      continue;
    }
    const double lo = range->min_hz;
    const double span = range->max_hz - range->min_hz;
    for (std::size_t t = 0; t < s.contour.size(); ++t) {
      if (!s.contour.voiced(t)) continue;
      double v = (s.contour.values[t] - lo) / span;
      if (clamp) v = std::clamp(v, 0.0, 1.0);
      s.contour.values[t] = v;
    }
  }
  dataset.speaker_stats = compute_speaker_stats(dataset.samples);
  return dataset;
}

std::vector<std::size_t> FoldAssignment::train_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] != fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldAssignment::test_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] == fold) out.push_back(i);
  return out;
}

FoldAssignment stratified_folds(std::span<const int> labels, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("fold count must be at least 2");
  FoldAssignment fa;
  fa.k = k;
  fa.seed = seed;
  fa.fold_of.assign(labels.size(), -1);

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  Rng rng(derive_seed(seed, Stream::folds));
  std::size_t offset = 0;
  std::vector<std::string> sparse;
  for (auto& [cls, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t p = 0; p < idx.size(); ++p)
      fa.fold_of[idx[p]] = static_cast<int>((offset + p) % static_cast<std::size_t>(k));
    offset += idx.size();
    if (idx.size() < static_cast<std::size_t>(k)) {
      const bool known = cls >= 0 && cls < static_cast<int>(kNumClasses);
      sparse.push_back(known ? std::string(to_string(tone_from_index(cls))) : std::to_string(cls));
    }
  }
  if (!sparse.empty()) {
    std::string msg = "classes with fewer samples than folds:";
    for (const auto& c : sparse) msg += " " + c;
    fa.warnings.push_back(msg);
  }
  return fa;
}

FoldAssignment stratified_folds(const Dataset& dataset, int k, std::uint64_t seed) {
  const auto labels = dataset.labels();
  return stratified_folds(std::span<const int>(labels), k, seed);
}

std::vector<SpeakerProfile> SynthSpec::default_speaker_pool() {
  return {
      {"F01", Gender::female, 170.0, 340.0}, {"F02", Gender::female, 185.0, 390.0},
      {"F03", Gender::female, 160.0, 310.0}, {"M01", Gender::male, 85.0, 170.0},
      {"M02", Gender::male, 95.0, 185.0},    {"M03", Gender::male, 80.0, 150.0},
  };
}

void SynthSpec::validate() const {
  if (speaker_pool.empty()) throw ConfigError("synth: speaker pool is empty");
  if (per_class < 0) throw ConfigError("synth: per-class count must be non-negative");
  if (!(0.0 <= tone_low && tone_low < tone_high && tone_high <= 1.0))
    throw ConfigError("synth: need 0 <= tone_low < tone_high <= 1");
  if (target_jitter_sd < 0.0) throw ConfigError("synth: target jitter must be >= 0");
  if (!(0.0 <= duration_jitter && duration_jitter < 1.0))
    throw ConfigError("synth: duration jitter must lie in [0, 1)");
  if (!(0.0 <= unvoiced_dropout && unvoiced_dropout <= 1.0))
    throw ConfigError("synth: unvoiced dropout must be a probability");
  if (frames == 0 || frames_per_target < 1 || span_frames < 1)
    throw ConfigError("synth: frame counts must be positive");
  for (const auto& sp : speaker_pool)
    if (!(sp.min_hz > 0.0 && sp.min_hz < sp.max_hz))
      throw ConfigError("synth: speaker " + sp.id + " needs 0 < min_hz < max_hz");
}

Dataset synth_generate(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<ToneLabel> labels = spec.labels;
  if (labels.empty())
    for (std::size_t c = 0; c < kNumClasses; ++c) labels.push_back(tone_from_index(static_cast<int>(c)));

  const double T = static_cast<double>(spec.frames);
  const std::uint64_t base = derive_seed(seed, Stream::synth);
  Dataset d;
  d.samples.reserve(labels.size() * static_cast<std::size_t>(spec.per_class));
  std::size_t serial = 0;
  for (ToneLabel label : labels) {
    const auto tones = to_string(label);
    const std::size_t n = tones.size();
    for (int rep = 0; rep < spec.per_class; ++rep, ++serial) {
      Rng rng(derive_seed(base, serial));
      std::uniform_int_distribution<std::size_t> pick(0, spec.speaker_pool.size() - 1);
      const auto& speaker = spec.speaker_pool[pick(rng)];
      std::uniform_real_distribution<double> stretch(1.0 - spec.duration_jitter,
                                                     1.0 + spec.duration_jitter);
      std::normal_distribution<double> jitter(0.0, 1.0);
      std::uniform_real_distribution<double> coin(0.0, 1.0);

      std::vector<double> seg(n);
      if (spec.span_mode == SpanMode::proportional) {
        for (auto& s : seg) s = spec.frames_per_target * stretch(rng);
      } else {
        const double total = spec.span_frames * stretch(rng);
        double wsum = 0.0;
        for (auto& s : seg) wsum += (s = stretch(rng));
        for (auto& s : seg) s *= total / wsum;
      }
      double total = std::accumulate(seg.begin(), seg.end(), 0.0);
      if (total > T) {
        for (auto& s : seg) s *= T / total;
        total = T;
      }
      std::vector<double> centers(n), targets(n);
      double start = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        centers[i] = start + seg[i] / 2.0;
        start += seg[i];
        const double level = tones[i] == 'H' ? spec.tone_high : spec.tone_low;
        const double noise = spec.target_jitter_sd > 0.0 ? spec.target_jitter_sd * jitter(rng) : 0.0;
        targets[i] = std::clamp(level + noise, 0.0, 1.0);
      }

      const auto voiced = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(total)), 1,
                                                  spec.frames);
      Sample s;
      s.label = label;
      s.speaker_id = speaker.id;
      s.gender = speaker.gender;
      s.syllable_count = static_cast<int>(n);
      s.contour.values.assign(spec.frames, 0.0);
      s.contour.mask.assign(spec.frames, 0);
      for (std::size_t t = 0; t < voiced; ++t) {
        const double x = static_cast<double>(t) + 0.5;
        double v;
        if (x <= centers.front()) {
          v = targets.front();
        } else if (x >= centers.back()) {
          v = targets.back();
        } else {
          std::size_t i = 0;
          while (x > centers[i + 1]) ++i;
          const double f = (x - centers[i]) / (centers[i + 1] - centers[i]);
          v = targets[i] + f * (targets[i + 1] - targets[i]);
        }
        const bool dropped = spec.unvoiced_dropout > 0.0 && coin(rng) < spec.unvoiced_dropout;
        if (dropped) continue;
        s.contour.mask[t] = 1;
        s.contour.values[t] = speaker.min_hz + v * (speaker.max_hz - speaker.min_hz);
      }
      d.samples.push_back(std::move(s));
    }
  }
  if (d.samples.empty()) throw EmptyDatasetError("synth: spec produced no samples");
  d.speaker_stats = compute_speaker_stats(d.samples);
  return d;
}

}  // namespace dualglob
