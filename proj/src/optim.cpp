#include "dualglob/optim.hpp"

#include <cmath>

#include "dualglob/error.hpp"

namespace dualglob::nn {

void OptimizerConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(0.0 <= beta1 && beta1 < 1.0 && 0.0 <= beta2 && beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
  if (lookahead_k < 1) throw ConfigError("lookahead k must be >= 1");
  if (!(0.0 <= lookahead_alpha && lookahead_alpha <= 1.0))
    throw ConfigError("lookahead alpha must lie in [0, 1]");
}

template <typename T>
RAdamLookahead<T>::RAdamLookahead(std::vector<Var<T>> params, OptimizerConfig config)
    : params_(std::move(params)), config_(config) {
  config_.validate();
  for (const auto& p : params_) {
    m_.emplace_back(p.value().size(), 0.0);
    v_.emplace_back(p.value().size(), 0.0);
    slow_.push_back(p.value());
  }
}

template <typename T>
double RAdamLookahead<T>::rectification(double beta2, std::int64_t t) {
  const double rho_inf = 2.0 / (1.0 - beta2) - 1.0;
  const double b2t = std::pow(beta2, static_cast<double>(t));
  const double rho = rho_inf - 2.0 * static_cast<double>(t) * b2t / (1.0 - b2t);
  if (!(rho > 4.0)) return 0.0;
  return std::sqrt((rho - 4.0) * (rho - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho));
}

template <typename T>
void RAdamLookahead<T>::step() {
  ++step_;
  const auto& c = config_;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  const double r = rectification(c.beta2, step_);

  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (!p.has_grad()) continue;
    const Tensor<T>& g = p.node()->grad;
    Tensor<T>& w = p.mutable_value();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      double wi = w[i];
      wi -= c.lr * c.weight_decay * wi;
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      if (r > 0.0) {
        wi -= c.lr * r * mhat / (std::sqrt(v[i] / bc2) + c.eps);
      } else {
        wi -= c.lr * mhat;
      }
      w[i] = static_cast<T>(wi);
    }
  }

  if (step_ % c.lookahead_k == 0) {
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Tensor<T>& w = params_[k].mutable_value();
      Tensor<T>& s = slow_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (c.lookahead_alpha == 1.0) {
          s[i] = w[i];
        } else {
          s[i] = static_cast<T>(s[i] + c.lookahead_alpha * (double(w[i]) - s[i]));
        }
        w[i] = s[i];
      }
    }
  }
}

template <typename T>
void RAdamLookahead<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template class RAdamLookahead<float>;
template class RAdamLookahead<double>;

}  // namespace dualglob::nn
