#pragma once

#include <cstdint>
#include <vector>

#include "dualglob/autograd.hpp"

namespace dualglob::nn {

struct OptimizerConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;  // decoupled
  int lookahead_k = 5;
  double lookahead_alpha = 0.9;

  void validate() const;
};

// Rectified Adam wrapped in Lookahead. Each step():
//   p <- p - lr * wd * p
//   m <- b1 m + (1 - b1) g,   v <- b2 v + (1 - b2) g^2,   m^ = m / (1 - b1^t)
//   rho_t = rho_inf - 2 t b2^t / (1 - b2^t),   rho_inf = 2 / (1 - b2) - 1
//   rho_t > 4:  p <- p - lr * r_t * m^ / (sqrt(v / (1 - b2^t)) + eps)
//   otherwise:  p <- p - lr * m^
// and every k-th step: slow <- slow + alpha (fast - slow), fast <- slow.
template <typename T>
class RAdamLookahead {
 public:
  RAdamLookahead(std::vector<Var<T>> params, OptimizerConfig config);

  void step();
  void zero_grad();

  std::int64_t steps() const { return step_; }
  const std::vector<Tensor<T>>& slow_weights() const { return slow_; }
  const OptimizerConfig& config() const { return config_; }

  // Variance rectification term r_t, or 0 when the SGD branch applies.
  static double rectification(double beta2, std::int64_t t);

 private:
  std::vector<Var<T>> params_;
  OptimizerConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::vector<Tensor<T>> slow_;
  std::int64_t step_ = 0;
};

}  // namespace dualglob::nn
