#include <doctest.h>

#include <set>
#include <sstream>

#include "dualglob/corpus.hpp"
#include "dualglob/error.hpp"
#include "support/fixtures.hpp"

using namespace dualglob;

namespace {

std::string header(std::size_t frames) {
  std::string h = "speaker_id,gender,syllable_count,label";
  for (std::size_t t = 0; t < frames; ++t) h += ",f0_" + std::to_string(t);
  return h + "\n";
}

std::string row(const std::string& spk, const std::string& label, int syl,
                const std::vector<std::string>& frames) {
  std::string r = spk + ",female," + std::to_string(syl) + "," + label;
  for (const auto& f : frames) r += "," + f;
  return r + "\n";
}

Dataset parse(const std::string& text, std::size_t frames) {
  std::istringstream in(text);
  return parse_dataset(in, frames);
}

}  // namespace

TEST_CASE("tone labels: sixteen names round-trip") {
  std::set<std::string_view> seen;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const auto t = tone_from_index(static_cast<int>(c));
    CHECK(parse_tone(to_string(t)) == t);
    seen.insert(to_string(t));
  }
  CHECK(seen.size() == 16);
  CHECK_THROWS_AS(parse_tone("lh"), LabelError);
  CHECK_THROWS_AS(parse_tone("HLHL"), LabelError);
}

TEST_CASE("load: LHLH row with 200 frames") {
  std::vector<std::string> f(200, "150");
  auto d = parse(header(200) + row("S1", "LHLH", 4, f), 200);
  REQUIRE(d.size() == 1);
  CHECK(d.samples[0].label == ToneLabel::LHLH);
  CHECK(d.samples[0].contour.size() == 200);
  CHECK(d.samples[0].contour.voiced_count() == 200);
}

TEST_CASE("load: all-NaN row is fully masked and excluded from speaker stats") {
  std::vector<std::string> nan(4, "NaN"), v{"100", "", "300", "-5"};
  auto d = parse(header(4) + row("S", "H", 1, nan) + row("S", "L", 1, v), 4);
  CHECK(d.samples[0].contour.voiced_count() == 0);
  for (double x : d.samples[0].contour.values) CHECK(x == 0.0);
  CHECK(d.speaker_stats.at("S").min_hz == 100.0);
  CHECK(d.speaker_stats.at("S").max_hz == 300.0);
  CHECK(d.samples[1].contour.voiced_count() == 2);
}

TEST_CASE("load: schema, label and emptiness errors") {
  CHECK_THROWS_AS(parse("speaker_id,gender,label,f0_0\nS,female,H,1\n", 1), SchemaError);
  try {
    parse("speaker_id,gender,label,f0_0\nS,female,H,1\n", 1);
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("syllable_count") != std::string::npos);
  }
  try {
    parse(header(1) + row("S", "H", 1, {"1"}) + row("S", "HX", 1, {"1"}), 1);
    FAIL("expected a label error");
  } catch (const LabelError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse(header(3), 3), EmptyDatasetError);
}

TEST_CASE("load: label longer than syllable count warns but loads") {
  auto d = parse(header(2) + row("S", "LHL", 2, {"100", "200"}), 2);
  CHECK(d.size() == 1);
  CHECK(d.warnings.size() == 1);
}

TEST_CASE("fix_length: identity, padding, resampling") {
  std::mt19937_64 rng(3);
  auto c = fixture::random_contour(200, rng);
  auto same = fix_length(c.values, c.mask, 200);
  CHECK(same.values == c.values);
  CHECK(same.mask == c.mask);

  std::vector<double> v(100, 0.7);
  std::vector<std::uint8_t> m(100, 1);
  auto padded = fix_length(v, m, 200);
  for (std::size_t t = 100; t < 200; ++t) {
    CHECK(padded.mask[t] == 0);
    CHECK(padded.values[t] == 0.0);
  }

  std::vector<double> ramp(400);
  std::vector<std::uint8_t> all(400, 1);
  for (std::size_t i = 0; i < 400; ++i) ramp[i] = static_cast<double>(i) / 399.0;
  auto r = fix_length(ramp, all, 200);
  for (std::size_t p = 0; p < 200; ++p) {
    // linear interpolation of a linear ramp reproduces it at the target grid
    CHECK(r.values[p] == doctest::Approx(static_cast<double>(p) / 199.0).epsilon(1e-12));
    if (p) CHECK(r.values[p] >= r.values[p - 1]);
  }
  CHECK_THROWS_AS(fix_length(std::vector<double>{}, std::vector<std::uint8_t>{}, 200), InputError);
}

TEST_CASE("normalize_speaker: endpoints and midpoint") {
  auto d = parse(header(3) + row("S", "H", 1, {"100", "200", "300"}), 3);
  auto n = normalize_speaker(d);
  CHECK(n.samples[0].contour.values == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(n.samples[0].contour.mask == d.samples[0].contour.mask);
}

TEST_CASE("normalize_speaker: degenerate speaker maps to 0.5 with a warning") {
  auto d = parse(header(3) + row("S", "H", 1, {"150", "150", ""}), 3);
  auto n = normalize_speaker(d);
  CHECK(n.samples[0].contour.values == std::vector<double>{0.5, 0.5, 0.0});
  CHECK(n.warnings.size() == 1);
}

TEST_CASE("normalize_speaker: per-speaker voiced range becomes exactly [0, 1]") {
  auto d = synth_generate(SynthSpec{.per_class = 6}, 11);
  auto n = normalize_speaker(d);
  for (const auto& [spk, r] : compute_speaker_stats(n.samples)) {
    CAPTURE(spk);
    CHECK(r.min_hz == 0.0);
    CHECK(r.max_hz == 1.0);
  }
  for (const auto& s : n.samples)
    for (std::size_t t = 0; t < s.contour.size(); ++t)
      if (!s.contour.voiced(t)) CHECK(s.contour.values[t] == 0.0);
}

TEST_CASE("masked frames never reach statistics or normalization") {
  auto d = synth_generate(SynthSpec{.per_class = 2}, 5);
  auto poisoned = d;
  for (auto& s : poisoned.samples)
    for (std::size_t t = 0; t < s.contour.size(); ++t)
      if (!s.contour.voiced(t)) s.contour.values[t] = 1e6;
  poisoned.speaker_stats = compute_speaker_stats(poisoned.samples);
  for (const auto& [spk, r] : d.speaker_stats) {
    CHECK(poisoned.speaker_stats.at(spk).min_hz == r.min_hz);
    CHECK(poisoned.speaker_stats.at(spk).max_hz == r.max_hz);
  }
  auto a = normalize_speaker(d), b = normalize_speaker(poisoned);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t t = 0; t < a.samples[i].contour.size(); ++t)
      if (a.samples[i].contour.voiced(t))
        CHECK(a.samples[i].contour.values[t] == b.samples[i].contour.values[t]);
}

TEST_CASE("stratified_folds: divisibility, remainder, determinism") {
  std::vector<int> ten(10, 3);
  auto f = stratified_folds(ten, 5, 42);
  std::vector<int> count(5, 0);
  for (int k : f.fold_of) ++count[static_cast<std::size_t>(k)];
  CHECK(count == std::vector<int>{2, 2, 2, 2, 2});

  std::vector<int> ll(8, class_index(ToneLabel::LL));
  auto g = stratified_folds(ll, 5, 42);
  std::vector<int> c2(5, 0);
  for (int k : g.fold_of) ++c2[static_cast<std::size_t>(k)];
  std::sort(c2.begin(), c2.end());
  CHECK(c2 == std::vector<int>{1, 1, 2, 2, 2});

  std::vector<int> sparse{1, 1, 0, 0, 0, 0, 0};
  auto w = stratified_folds(sparse, 5, 42);
  REQUIRE(w.warnings.size() == 1);
  CHECK(w.warnings[0].find("HH") != std::string::npos);

  std::mt19937_64 rng(9);
  auto labels = fixture::random_labels(321, 16, rng);
  CHECK(stratified_folds(labels, 5, 42).fold_of == stratified_folds(labels, 5, 42).fold_of);
  CHECK(stratified_folds(labels, 5, 42).fold_of != stratified_folds(labels, 5, 43).fold_of);
  CHECK_THROWS_AS(stratified_folds(labels, 1, 42), ConfigError);
}

TEST_CASE("stratified_folds: per-class fold sizes differ by at most one") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + trial % 6;
    auto labels = fixture::random_labels(20 + trial * 7, 2 + trial % 15, rng);
    auto f = stratified_folds(labels, k, static_cast<std::uint64_t>(trial));
    std::map<int, std::vector<int>> per;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto& v = per[labels[i]];
      v.resize(static_cast<std::size_t>(k));
      REQUIRE(f.fold_of[i] >= 0);
      REQUIRE(f.fold_of[i] < k);
      ++v[static_cast<std::size_t>(f.fold_of[i])];
    }
    for (auto& [c, v] : per) CHECK(*std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end()) <= 1);
  }
}

TEST_CASE("synth: flat H, rising LH, counting, determinism") {
  SynthSpec flat{.per_class = 3, .labels = {ToneLabel::H}, .target_jitter_sd = 0.0, .unvoiced_dropout = 0.0};
  auto d = synth_generate(flat, 1);
  for (const auto& s : d.samples) {
    const auto& sp = *std::find_if(flat.speaker_pool.begin(), flat.speaker_pool.end(),
                                   [&](const SpeakerProfile& p) { return p.id == s.speaker_id; });
    const double expect = sp.min_hz + 0.8 * (sp.max_hz - sp.min_hz);
    for (std::size_t t = 0; t < s.contour.size(); ++t)
      if (s.contour.voiced(t)) CHECK(s.contour.values[t] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(s.syllable_count == 1);
  }

  SynthSpec rise{.per_class = 5, .labels = {ToneLabel::LH}, .target_jitter_sd = 0.0, .unvoiced_dropout = 0.0};
  for (const auto& s : synth_generate(rise, 2).samples) {
    double prev = -1.0;
    for (std::size_t t = 0; t < s.contour.size(); ++t) {
      if (!s.contour.voiced(t)) continue;
      CHECK(s.contour.values[t] >= prev);
      prev = s.contour.values[t];
    }
    CHECK(s.syllable_count == 2);
  }

  auto full = synth_generate(SynthSpec{}, 7);
  CHECK(full.size() == 1600);
  std::vector<int> per(16, 0);
  for (int y : full.labels()) ++per[static_cast<std::size_t>(y)];
  for (int c : per) CHECK(c == 100);

  auto again = synth_generate(SynthSpec{}, 7);
  for (std::size_t i = 0; i < full.size(); ++i) {
    REQUIRE(full.samples[i].contour.values == again.samples[i].contour.values);
    REQUIRE(full.samples[i].contour.mask == again.samples[i].contour.mask);
    REQUIRE(full.samples[i].speaker_id == again.samples[i].speaker_id);
  }
  CHECK_THROWS_AS(synth_generate(SynthSpec{.speaker_pool = {}}, 1), ConfigError);
}

TEST_CASE("write/load round trip with mask file") {
  fixture::TempDir dir("corpus");
  auto d = normalize_speaker(synth_generate(SynthSpec{.per_class = 2}, 3));
  write_dataset(d, dir / "n.csv", true, "config_hash=abc");
  auto back = load_dataset(dir / "n.csv");
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back.samples[i].contour.mask == d.samples[i].contour.mask);
    CHECK(back.samples[i].contour.values == d.samples[i].contour.values);
    CHECK(back.samples[i].label == d.samples[i].label);
    CHECK(back.samples[i].gender == d.samples[i].gender);
  }
}
