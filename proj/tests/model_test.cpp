#include <doctest.h>

#include "dualglob/model.hpp"
#include "dualglob/optim.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"

using namespace dualglob;
using namespace dualglob::nn;

namespace {

EncoderConfig tiny_encoder() {
  EncoderConfig c;
  c.layers = {{3, 4, 1}, {4, 3, 2}, {5, 3, 1}};
  c.head_hidden = 4;
  c.head_out = 3;
  return c;
}

std::vector<F0Contour> contours(std::size_t n, std::size_t frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<F0Contour> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(fixture::random_contour(frames, rng, 0.2));
  return out;
}

void randomize_biases(Model<double>& m, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 0.1);
  auto names = m.parameter_names();
  auto params = m.parameters();
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].shape().size() == 1)
      for (auto& v : params[i].mutable_value().vec()) v = g(rng);
}

}  // namespace

TEST_CASE("encoder: 200 frames reach a latent length of 50, z is [B, d_emb]") {
  for (std::size_t d : kEmbeddingSizes) {
    auto cfg = EncoderConfig::standard(d);
    CHECK(cfg.latent_length(200) == 50);
    if (d > 128) continue;  // wide variants only need the arithmetic
    Model<float> m(cfg, 1);
    auto batch = ContourBatch<float>::from(contours(3, 200, 2));
    auto z = m.encode(batch);
    CHECK(z.shape() == Shape{3, d});
    CHECK(m.project(z).shape() == Shape{3, 64});
  }
  CHECK_THROWS_AS(EncoderConfig::standard(100), ConfigError);
}

TEST_CASE("encoder: unit projections, determinism, mask invariance") {
  Model<double> m(EncoderConfig::standard(64), 3);
  auto cs = contours(4, 200, 5);
  cs[1] = cs[0];
  auto z = m.encode(ContourBatch<double>::from(cs));
  auto p = m.project(z);
  auto q = m.predict(z);
  for (std::size_t i = 0; i < 4; ++i) {
    double np = 0.0, nq = 0.0;
    for (std::size_t k = 0; k < 64; ++k) {
      np += p.value().at(i, k) * p.value().at(i, k);
      nq += q.value().at(i, k) * q.value().at(i, k);
    }
    CHECK(std::abs(std::sqrt(np) - 1.0) < 1e-6);
    CHECK(std::abs(std::sqrt(nq) - 1.0) < 1e-6);
  }
  for (std::size_t k = 0; k < 64; ++k) {
    CHECK(z.value().at(0, k) == z.value().at(1, k));
    CHECK(p.value().at(0, k) == p.value().at(1, k));
  }

  auto poisoned = cs;
  for (auto& c : poisoned)
    for (std::size_t t = 0; t < c.size(); ++t)
      if (!c.voiced(t)) c.values[t] = 123.0;
  auto z2 = m.encode(ContourBatch<double>::from(poisoned));
  CHECK(z2.value().vec() == z.value().vec());

  Model<double> again(EncoderConfig::standard(64), 3);
  CHECK(again.encode(ContourBatch<double>::from(cs)).value().vec() == z.value().vec());
}

TEST_CASE("encoder: clone is deep") {
  Model<double> m(tiny_encoder(), 4);
  auto c = m.clone();
  m.parameters()[0].mutable_value()[0] += 1.0;
  CHECK(c.parameters()[0].value()[0] != m.parameters()[0].value()[0]);
  CHECK(c.parameter_count() == m.parameter_count());
}

TEST_CASE("gradients: random 2-layer net and a small encoder with both heads") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 4; ++trial) {
    CAPTURE(trial);
    auto x = Var<double>(fixture::to_var(fixture::random_rows(5, 4, rng, false)).value());
    auto w1 = Var<double>::parameter(fixture::to_var(fixture::random_rows(6, 4, rng, false)).value());
    auto w2 = Var<double>::parameter(fixture::to_var(fixture::random_rows(3, 6, rng, false)).value());
    auto b1 = Var<double>::parameter(Tensor<double>({6}, 0.1));
    auto b2 = Var<double>::parameter(Tensor<double>({3}, -0.2));
    const auto loss = [&] { return sum(mul(linear(relu(linear(x, w1, b1)), w2, b2), linear(relu(linear(x, w1, b1)), w2, b2))); };
    CHECK(gradcheck::run({w1, b1, w2, b2}, loss).ok());
  }

  Model<double> m(tiny_encoder(), 7);
  randomize_biases(m, rng);
  auto batch = ContourBatch<double>::from(contours(3, 16, 8));
  Tensor<double> wp({3, 3}), wq({3, 3});
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& v : wp.vec()) v = g(rng);
  for (auto& v : wq.vec()) v = g(rng);
  const auto loss = [&] {
    auto z = m.encode(batch);
    return add(sum(mul(m.project(z), Var<double>(wp))), sum(mul(m.predict(z), Var<double>(wq))));
  };
  auto r = gradcheck::run(m.parameters(), loss);
  CHECK(r.max_rel < gradcheck::kTolerance);
}

namespace {

// Direct evaluation of the update rule, one parameter vector.
struct RecurrenceOracle {
  OptimizerConfig c;
  std::vector<double> w, m, v, slow;
  int t = 0;

  void step(const std::vector<double>& g) {
    ++t;
    const double rho_inf = 2.0 / (1.0 - c.beta2) - 1.0;
    const double b2t = std::pow(c.beta2, t);
    const double rho = rho_inf - 2.0 * t * b2t / (1.0 - b2t);
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = w[i] * (1.0 - c.lr * c.weight_decay);
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double mhat = m[i] / (1.0 - std::pow(c.beta1, t));
      if (rho > 4.0) {
        const double rt = std::sqrt((rho - 4.0) * (rho - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho));
        const double vhat = std::sqrt(v[i] / (1.0 - b2t));
        w[i] -= c.lr * rt * mhat / (vhat + c.eps);
      } else {
        w[i] -= c.lr * mhat;
      }
    }
    if (t % c.lookahead_k == 0)
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = slow[i] = slow[i] + c.lookahead_alpha * (w[i] - slow[i]);
  }
};

// loss = 1/2 |w - target|^2 + 1/4 sum w^4, so gradients vary over steps.
Var<double> quartic(const Var<double>& w, const Tensor<double>& target) {
  Tensor<double> neg(target.shape());
  for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -target[i];
  auto d = add(w, Var<double>(neg));
  auto w2 = mul(w, w);
  return add(scale(sum(mul(d, d)), 0.5), scale(sum(mul(w2, w2)), 0.25));
}

std::vector<double> quartic_grad(const std::vector<double>& w, const Tensor<double>& target) {
  std::vector<double> g(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) g[i] = (w[i] - target[i]) + w[i] * w[i] * w[i];
  return g;
}

}  // namespace

TEST_CASE("optimizer: matches the recurrence, both branches, with lookahead") {
  OptimizerConfig cfg;
  cfg.lr = 0.05;
  Tensor<double> init({7}), target({7});
  for (std::size_t i = 0; i < 7; ++i) {
    init[i] = 0.3 * static_cast<double>(i) - 1.0;
    target[i] = std::sin(static_cast<double>(i));
  }
  auto w = Var<double>::parameter(init);
  RAdamLookahead<double> opt({w}, cfg);
  RecurrenceOracle o{cfg, init.vec(), std::vector<double>(7, 0.0), std::vector<double>(7, 0.0), init.vec()};
  for (int s = 0; s < 23; ++s) {
    opt.zero_grad();
    backward(quartic(w, target));
    opt.step();
    o.step(quartic_grad(o.w, target));
    for (std::size_t i = 0; i < 7; ++i) CHECK(w.value()[i] == doctest::Approx(o.w[i]).epsilon(1e-12));
  }
  CHECK(opt.steps() == 23);
  CHECK(RAdamLookahead<double>::rectification(0.999, 1) == 0.0);
  CHECK(RAdamLookahead<double>::rectification(0.999, 4) == 0.0);
  CHECK(RAdamLookahead<double>::rectification(0.999, 6) > 0.0);
}

TEST_CASE("optimizer: first step is -lr * m_hat") {
  OptimizerConfig cfg;
  cfg.weight_decay = 0.0;
  Tensor<double> init({3}, std::vector<double>{1.0, -2.0, 0.5});
  auto w = Var<double>::parameter(init);
  RAdamLookahead<double> opt({w}, cfg);
  backward(sum(mul(w, w)));
  opt.step();
  // m_hat at t=1 equals the gradient 2w
  for (std::size_t i = 0; i < 3; ++i) CHECK(w.value()[i] == doctest::Approx(init[i] - cfg.lr * 2.0 * init[i]).epsilon(1e-15));
}

TEST_CASE("optimizer: lookahead endpoints") {
  Tensor<double> init({4}, std::vector<double>{0.2, -0.4, 1.0, 0.0}), target({4}, 0.5);
  auto run = [&](double alpha, int k, int steps) {
    OptimizerConfig cfg;
    cfg.lookahead_alpha = alpha;
    cfg.lookahead_k = k;
    auto w = Var<double>::parameter(init);
    RAdamLookahead<double> opt({w}, cfg);
    for (int s = 0; s < steps; ++s) {
      opt.zero_grad();
      backward(quartic(w, target));
      opt.step();
    }
    return std::make_pair(w.value().vec(), opt.slow_weights()[0].vec());
  };
  // alpha = 1: slow copies fast, so lookahead is invisible
  CHECK(run(1.0, 5, 17).first == run(1.0, 1000, 17).first);
  // alpha = 0: slow never moves and every k-th step resets fast to it
  auto [fast, slow] = run(0.0, 5, 10);
  CHECK(slow == init.vec());
  CHECK(fast == init.vec());
}

TEST_CASE("optimizer: decoupled weight decay alone shrinks by (1 - lr wd)") {
  OptimizerConfig cfg;
  cfg.weight_decay = 0.1;
  auto w = Var<double>::parameter(Tensor<double>({2}, std::vector<double>{1.0, -3.0}));
  RAdamLookahead<double> opt({w}, cfg);
  backward(scale(sum(w), 0.0));
  opt.step();
  CHECK(w.value()[0] == doctest::Approx(1.0 * (1 - cfg.lr * 0.1)).epsilon(1e-15));
  CHECK(w.value()[1] == doctest::Approx(-3.0 * (1 - cfg.lr * 0.1)).epsilon(1e-15));

  OptimizerConfig bad;
  bad.lookahead_alpha = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
