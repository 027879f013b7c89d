#include <doctest.h>

#include <numeric>

#include "dualglob/objectives.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "support/views.hpp"

using namespace dualglob;
using namespace dualglob::nn;
namespace obj = dualglob::objectives;

namespace {

constexpr double kOracleTol = 1e-10;

double clean(const oracle::Rows& p, const std::vector<int>& y, double tau) {
  return obj::supcon_clean(fixture::to_var(p), y, tau).item();
}

oracle::Rows unit_axes(std::initializer_list<int> axes, std::size_t d) {
  oracle::Rows out;
  for (int a : axes) {
    std::vector<double> r(d, 0.0);
    r[static_cast<std::size_t>(a)] = 1.0;
    out.push_back(r);
  }
  return out;
}

template <typename V>
V permuted(const V& r, const std::vector<std::size_t>& perm) {
  V out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = r[perm[i]];
  return out;
}

using fixture::per_row;
using fixture::random_view_batch;
using fixture::tiny_encoder;

}  // namespace

TEST_CASE("objective names") {
  for (auto k : {ObjectiveKind::DualGlob, ObjectiveKind::GlobClean, ObjectiveKind::GlobAugment,
                 ObjectiveKind::CrossView, ObjectiveKind::Unified, ObjectiveKind::PredC, ObjectiveKind::PredA,
                 ObjectiveKind::Hybrid}) {
    CHECK(parse_objective(objective_key(k)) == k);
    CHECK(parse_objective(objective_title(k)) == k);
  }
  CHECK(parse_objective("Dual_Glob") == ObjectiveKind::DualGlob);
  CHECK_THROWS_AS(parse_objective("simclr"), ConfigError);
  CHECK_FALSE(uses_augmented_view(ObjectiveKind::PredC));
  CHECK(uses_augmented_view(ObjectiveKind::Hybrid));
  ObjectiveSpec s;
  s.tau = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("supcon_clean: worked examples") {
  // two same-class identical rows: the lone positive is the whole denominator
  std::mt19937_64 rng(1);
  auto r = fixture::random_rows(1, 8, rng);
  for (double tau : {0.05, 0.1, 1.0, 7.0}) CHECK(clean({r[0], r[0]}, {4, 4}, tau) == doctest::Approx(0.0).epsilon(1e-12));

  // anchor with one positive at similarity 1 and a negative at 0, tau = 1
  auto rows = unit_axes({0, 0, 1}, 3);
  CHECK(clean(rows, {0, 0, 1}, 1.0) == doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
  CHECK(std::log(1.0 + std::exp(-1.0)) == doctest::Approx(0.3133).epsilon(1e-4));

  // every row its own class: no contributing anchor
  CHECK(clean(fixture::random_rows(5, 4, rng), {0, 1, 2, 3, 4}, 0.1) == 0.0);
  CHECK_THROWS_AS(clean(fixture::random_rows(1, 4, rng), {0}, 0.1), ContractError);
}

TEST_CASE("supcon_aug: substitution and worked examples") {
  std::mt19937_64 rng(2);
  auto c = fixture::random_rows(9, 6, rng);
  auto y = fixture::random_labels(9, 3, rng);
  auto vc = fixture::to_var(c);
  CHECK(obj::supcon_aug(vc, vc, y, 0.1).item() == obj::supcon_clean(vc, y, 0.1).item());

  auto two = fixture::random_rows(2, 5, rng);
  oracle::Rows a{two[1], two[0]};
  // anchor 0 equals its only positive, clean row 1, which is also the whole denominator
  CHECK(oracle::supcon_aug(a, two, {2, 2}, 0.1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(obj::supcon_aug(fixture::to_var(a), fixture::to_var(two), std::vector<int>{2, 2}, 0.1).item() ==
        doctest::Approx(0.0).epsilon(1e-12));

  CHECK_THROWS_AS(obj::supcon_aug(fixture::to_var(fixture::random_rows(3, 5, rng)), fixture::to_var(two),
                                  std::vector<int>{0, 0}, 0.1),
                  ContractError);
}

TEST_CASE("total_loss: weight toggles and identity augmentation") {
  std::mt19937_64 rng(3);
  auto c = fixture::to_var(fixture::random_rows(10, 6, rng));
  auto a = fixture::to_var(fixture::random_rows(10, 6, rng));
  auto y = fixture::random_labels(10, 3, rng);
  ObjectiveSpec s;
  s.lambda1 = 1.0, s.lambda2 = 0.0;
  CHECK(obj::total_loss(c, a, y, s).item() == obj::supcon_clean(c, y, s.tau).item());
  s.lambda1 = 0.0, s.lambda2 = 1.0;
  CHECK(obj::total_loss(c, a, y, s).item() == obj::supcon_aug(a, c, y, s.tau).item());
  s.lambda1 = s.lambda2 = 1.0;
  CHECK(obj::total_loss(c, c, y, s).item() == 2.0 * obj::supcon_clean(c, y, s.tau).item());
}

TEST_CASE("cross-view and unified: worked examples and symmetries") {
  std::mt19937_64 rng(4);
  auto one = fixture::to_var(fixture::random_rows(1, 5, rng));
  CHECK(obj::cross_view_supcon(one, one, std::vector<int>{3}, 0.1).item() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(obj::unified_supcon(one, one, std::vector<int>{3}, 0.1).item() == doctest::Approx(0.0).epsilon(1e-12));

  auto z = fixture::random_rows(8, 5, rng), za = fixture::random_rows(8, 5, rng);
  auto y = fixture::random_labels(8, 3, rng);
  CHECK(obj::unified_supcon(fixture::to_var(z), fixture::to_var(za), y, 0.2).item() ==
        doctest::Approx(obj::unified_supcon(fixture::to_var(za), fixture::to_var(z), y, 0.2).item()).epsilon(1e-12));
}

TEST_CASE("losses match naive double loops on random batches") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> bsize(2, 16), dim(2, 12);
  std::uniform_int_distribution<int> cls(2, 16);
  std::uniform_real_distribution<double> taus(0.05, 1.5);
  for (int trial = 0; trial < 60; ++trial) {
    CAPTURE(trial);
    const auto B = bsize(rng), d = dim(rng);
    const double tau = taus(rng);
    auto c = fixture::random_rows(B, d, rng), a = fixture::random_rows(B, d, rng);
    auto y = fixture::random_labels(B, cls(rng), rng);
    auto vc = fixture::to_var(c), va = fixture::to_var(a);
    CHECK(obj::supcon_clean(vc, y, tau).item() == doctest::Approx(oracle::supcon_clean(c, y, tau)).epsilon(kOracleTol));
    CHECK(obj::supcon_aug(va, vc, y, tau).item() == doctest::Approx(oracle::supcon_aug(a, c, y, tau)).epsilon(kOracleTol));
    CHECK(obj::cross_view_supcon(vc, va, y, tau).item() == doctest::Approx(oracle::cross_view(c, a, y, tau)).epsilon(kOracleTol));
    CHECK(obj::unified_supcon(vc, va, y, tau).item() == doctest::Approx(oracle::unified(c, a, y, tau)).epsilon(kOracleTol));
    std::vector<std::size_t> ids(B);
    for (std::size_t i = 0; i < B; ++i) ids[i] = i % (B / 2 + 1);
    CHECK(obj::info_nce(vc, va, ids, tau).item() == doctest::Approx(oracle::info_nce(c, a, ids, tau)).epsilon(kOracleTol));
  }
}

TEST_CASE("losses are invariant to a joint permutation of rows and labels") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t B = 12;
    auto c = fixture::random_rows(B, 6, rng), a = fixture::random_rows(B, 6, rng);
    auto y = fixture::random_labels(B, 4, rng);
    std::vector<std::size_t> perm(B);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    auto pc = fixture::to_var(permuted(c, perm)), pa = fixture::to_var(permuted(a, perm));
    auto py = permuted(y, perm);
    auto vc = fixture::to_var(c), va = fixture::to_var(a);
    const double eps = 1e-12;
    CHECK(obj::supcon_clean(pc, py, 0.1).item() == doctest::Approx(obj::supcon_clean(vc, y, 0.1).item()).epsilon(eps));
    CHECK(obj::supcon_aug(pa, pc, py, 0.1).item() == doctest::Approx(obj::supcon_aug(va, vc, y, 0.1).item()).epsilon(eps));
    CHECK(obj::cross_view_supcon(pc, pa, py, 0.1).item() ==
          doctest::Approx(obj::cross_view_supcon(vc, va, y, 0.1).item()).epsilon(eps));
    CHECK(obj::unified_supcon(pc, pa, py, 0.1).item() ==
          doctest::Approx(obj::unified_supcon(vc, va, y, 0.1).item()).epsilon(eps));
    for (auto v : {obj::supcon_clean(vc, y, 0.1).item(), obj::supcon_aug(va, vc, y, 0.1).item(),
                   obj::cross_view_supcon(vc, va, y, 0.1).item(), obj::unified_supcon(vc, va, y, 0.1).item()})
      CHECK(v >= 0.0);
  }
}

TEST_CASE("scaling every similarity by c equals dividing tau by c") {
  std::mt19937_64 rng(7);
  auto c = fixture::random_rows(10, 6, rng);
  auto y = fixture::random_labels(10, 3, rng);
  for (double k : {0.25, 2.0, 9.0}) {
    auto s = c;
    for (auto& r : s)
      for (auto& v : r) v *= std::sqrt(k);
    CHECK(clean(s, y, 0.3) == doctest::Approx(clean(c, y, 0.3 / k)).epsilon(1e-12));
  }
}

TEST_CASE("loss gradients with respect to projections") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 4; ++trial) {
    const std::size_t B = 4 + static_cast<std::size_t>(trial) * 3;
    auto c = Var<double>::parameter(fixture::to_var(fixture::random_rows(B, 5, rng, false)).value());
    auto a = Var<double>::parameter(fixture::to_var(fixture::random_rows(B, 5, rng, false)).value());
    auto y = fixture::random_labels(B, 3, rng);
    std::vector<std::size_t> ids(B);
    for (std::size_t i = 0; i < B; ++i) ids[i] = i / 2;
    auto nc = [&] { return l2_normalize_rows(c); };
    auto na = [&] { return l2_normalize_rows(a); };
    ObjectiveSpec s;
    s.tau = 0.5;
    CHECK(gradcheck::run({c}, [&] { return obj::supcon_clean(nc(), y, 0.5); }).ok());
    CHECK(gradcheck::run({c, a}, [&] { return obj::supcon_aug(na(), nc(), y, 0.5); }).ok());
    CHECK(gradcheck::run({c, a}, [&] { return obj::total_loss(nc(), na(), y, s); }).ok());
    CHECK(gradcheck::run({c, a}, [&] { return obj::cross_view_supcon(nc(), na(), y, 0.5); }).ok());
    CHECK(gradcheck::run({c, a}, [&] { return obj::unified_supcon(nc(), na(), y, 0.5); }).ok());
    CHECK(gradcheck::run({c, a}, [&] { return obj::info_nce(nc(), na(), ids, 0.5); }).ok());
  }
}

TEST_CASE("info_nce worked examples") {
  auto one = fixture::to_var(unit_axes({2}, 4));
  CHECK(obj::info_nce(one, one, std::vector<std::size_t>{0}, 0.1).item() == doctest::Approx(0.0).epsilon(1e-12));
  auto p = fixture::to_var(unit_axes({0, 1}, 3));
  CHECK(obj::info_nce(p, p, std::vector<std::size_t>{0, 1}, 1.0).item() ==
        doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 1.0))).epsilon(1e-12));
}

TEST_CASE("predictive losses compose per-row encodings exactly") {
  std::mt19937_64 rng(9);
  Model<double> m(tiny_encoder(), 3);
  for (bool dup : {false, true}) {
    auto b = random_view_batch(5, 24, dup, rng);
    ObjectiveSpec s;
    s.tau = 0.3;
    s.kind = ObjectiveKind::PredC;
    const auto cp = per_row(m, b.clean, 0, 12, true), cf = per_row(m, b.clean, 12, 24, false);
    const double predc = oracle::info_nce(cp, cf, b.source, s.tau);
    CHECK(obj::predictive_loss(m, b, s).item() == doctest::Approx(predc).epsilon(kOracleTol));

    s.kind = ObjectiveKind::PredA;
    const auto ap = per_row(m, b.augmented, 0, 12, true), af = per_row(m, b.augmented, 12, 24, false);
    const double preda =
        (predc + oracle::info_nce(ap, cf, b.source, s.tau) + oracle::info_nce(cp, af, b.source, s.tau)) / 3.0;
    CHECK(obj::predictive_loss(m, b, s).item() == doctest::Approx(preda).epsilon(kOracleTol));

    s.kind = ObjectiveKind::Hybrid;
    const auto zc = per_row(m, b.clean, 0, 24, false), za = per_row(m, b.augmented, 0, 24, false);
    const auto cfp = per_row(m, b.clean, 12, 24, true);
    const double hybrid = oracle::supcon_aug(za, zc, b.labels, s.tau) + oracle::info_nce(cfp, af, b.source, s.tau);
    CHECK(obj::hybrid_loss(m, b, s).item() == doctest::Approx(hybrid).epsilon(kOracleTol));
  }
}

TEST_CASE("predictive losses: identity augmentation, single row, odd length") {
  std::mt19937_64 rng(10);
  Model<double> m(tiny_encoder(), 4);
  auto b = random_view_batch(6, 20, true, rng, true);
  ObjectiveSpec s;
  s.kind = ObjectiveKind::PredC;
  const double c = obj::predictive_loss(m, b, s).item();
  s.kind = ObjectiveKind::PredA;
  CHECK(obj::predictive_loss(m, b, s).item() == doctest::Approx(c).epsilon(1e-12));

  s.kind = ObjectiveKind::Hybrid;
  auto zc = m.project(m.encode(ContourBatch<double>::from(b.clean)));
  auto cf = m.encode(ContourBatch<double>::from(b.clean, 10, 20));
  const double expect = obj::supcon_clean(zc, b.labels, s.tau).item() +
                        obj::info_nce(m.predict(cf), m.project(cf), b.source, s.tau).item();
  CHECK(obj::hybrid_loss(m, b, s).item() == doctest::Approx(expect).epsilon(1e-12));

  auto single = random_view_batch(1, 20, false, rng);
  s.kind = ObjectiveKind::PredC;
  CHECK(obj::predictive_loss(m, single, s).item() == doctest::Approx(0.0).epsilon(1e-12));

  auto odd = random_view_batch(3, 21, false, rng);
  CHECK_THROWS_AS(obj::predictive_loss(m, odd, s), ShapeError);
}

TEST_CASE("hybrid without its predictive term is Glob-Augment") {
  std::mt19937_64 rng(11);
  Model<double> m(tiny_encoder(), 5);
  auto b = random_view_batch(5, 20, true, rng);
  ObjectiveSpec s;
  s.kind = ObjectiveKind::Hybrid;
  auto cf = m.encode(ContourBatch<double>::from(b.clean, 10, 20));
  auto af = m.encode(ContourBatch<double>::from(b.augmented, 10, 20));
  const double pred = obj::info_nce(m.predict(cf), m.project(af), b.source, s.tau).item();
  s.kind = ObjectiveKind::GlobAugment;
  const double aug = obj::evaluate(m, b, s).item();
  s.kind = ObjectiveKind::Hybrid;
  CHECK(obj::hybrid_loss(m, b, s).item() - pred == doctest::Approx(aug).epsilon(1e-12));
}

TEST_CASE("evaluate dispatches to the matching loss") {
  std::mt19937_64 rng(12);
  Model<double> m(tiny_encoder(), 6);
  auto b = random_view_batch(6, 20, true, rng);
  auto pc = m.project(m.encode(ContourBatch<double>::from(b.clean)));
  auto pa = m.project(m.encode(ContourBatch<double>::from(b.augmented)));
  ObjectiveSpec s;
  auto eval = [&](ObjectiveKind k) {
    s.kind = k;
    return obj::evaluate(m, b, s).item();
  };
  const double eps = 1e-12;
  CHECK(eval(ObjectiveKind::GlobClean) == doctest::Approx(obj::supcon_clean(pc, b.labels, s.tau).item()).epsilon(eps));
  CHECK(eval(ObjectiveKind::GlobAugment) == doctest::Approx(obj::supcon_aug(pa, pc, b.labels, s.tau).item()).epsilon(eps));
  CHECK(eval(ObjectiveKind::DualGlob) == doctest::Approx(obj::total_loss(pc, pa, b.labels, s).item()).epsilon(eps));
  CHECK(eval(ObjectiveKind::CrossView) == doctest::Approx(obj::cross_view_supcon(pc, pa, b.labels, s.tau).item()).epsilon(eps));
  CHECK(eval(ObjectiveKind::Unified) == doctest::Approx(obj::unified_supcon(pc, pa, b.labels, s.tau).item()).epsilon(eps));

  ViewBatch no_aug = b;
  no_aug.augmented.clear();
  s.kind = ObjectiveKind::GlobClean;
  CHECK_NOTHROW(obj::evaluate(m, no_aug, s));
  s.kind = ObjectiveKind::DualGlob;
  CHECK_THROWS_AS(obj::evaluate(m, no_aug, s), ContractError);
}

TEST_CASE("objective gradients through a small encoder") {
  std::mt19937_64 rng(13);
  Model<double> m(tiny_encoder(), 7);
  std::normal_distribution<double> g(0.0, 0.1);
  for (auto& p : m.parameters())
    if (p.shape().size() == 1)
      for (auto& v : p.mutable_value().vec()) v = g(rng);
  auto b = random_view_batch(3, 16, true, rng);
  for (auto k : {ObjectiveKind::DualGlob, ObjectiveKind::PredA, ObjectiveKind::Hybrid}) {
    CAPTURE(objective_key(k));
    ObjectiveSpec s;
    s.kind = k;
    s.tau = 0.5;
    CHECK(gradcheck::run(m.parameters(), [&] { return obj::evaluate(m, b, s); }, 6).ok());
  }
}
