#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "faithrl/error.hpp"

namespace faithrl {

/// Adam with decoupled weight decay.
template <typename T>
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
  };

  AdamW(std::size_t n, Options opt) : opt_{opt}, m_(n, T(0)), v_(n, T(0)) {}
  explicit AdamW(std::size_t n) : AdamW(n, Options{}) {}

  void step(std::span<T> params, std::span<const T> grad, double lr) {
    if (params.size() != m_.size() || grad.size() != m_.size()) throw Error("AdamW: size mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = static_cast<double>(grad[i]);
      m_[i] = static_cast<T>(opt_.beta1 * m_[i] + (1 - opt_.beta1) * g);
      v_[i] = static_cast<T>(opt_.beta2 * v_[i] + (1 - opt_.beta2) * g * g);
      const double mhat = m_[i] / c1;
      const double vhat = v_[i] / c2;
      double p = static_cast<double>(params[i]);
      p -= lr * opt_.weight_decay * p;
      p -= lr * mhat / (std::sqrt(vhat) + opt_.eps);
      params[i] = static_cast<T>(p);
    }
  }

  long long steps() const { return t_; }

 private:
  Options opt_;
  std::vector<T> m_, v_;
  long long t_ = 0;
};

}  // namespace faithrl
