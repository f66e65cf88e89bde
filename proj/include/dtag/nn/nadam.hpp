#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "dtag/nn/tensor.hpp"

namespace dtag::nn {

struct NadamConfig {
  double lr = 0.0015;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moments, one pair per parameter, plus the step count.
template <typename S>
struct NadamState {
  std::vector<Mat<S>> m;
  std::vector<Mat<S>> v;
  std::uint64_t step = 0;

  void init(const ParamList<S>& params) {
    m.clear();
    v.clear();
    for (const auto* p : params) {
      m.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
      v.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
    }
    step = 0;
  }
};

/// Nesterov-accelerated Adam with a constant momentum schedule. With
/// t = step + 1:
///   m = b1 m + (1-b1) g,   v = b2 v + (1-b2) g^2
///   m_hat = b1 m / (1 - b1^(t+1)) + (1-b1) g / (1 - b1^t)
///   v_hat = v / (1 - b2^t)
///   theta -= lr m_hat / (sqrt(v_hat) + eps)
/// Non-finite gradients or updated values raise DivergenceError.
template <typename S>
void nadam_step(const ParamList<S>& params, NadamState<S>& st, const NadamConfig& cfg) {
  if (st.m.size() != params.size()) throw std::logic_error("optimizer state does not match parameters");
  for (const auto* p : params) {
    if (!p->grad.allFinite()) throw DivergenceError("non-finite gradient in parameter '" + p->name + "'");
  }
  const double t = static_cast<double>(st.step + 1);
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const S c_m = static_cast<S>(b1 / (1.0 - std::pow(b1, t + 1)));
  const S c_g = static_cast<S>((1.0 - b1) / (1.0 - std::pow(b1, t)));
  const S c_v = static_cast<S>(1.0 / (1.0 - std::pow(b2, t)));
  const S lr = static_cast<S>(cfg.lr), eps = static_cast<S>(cfg.eps);
  const S sb1 = static_cast<S>(b1), sb2 = static_cast<S>(b2);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    auto m = st.m[k].array();
    auto v = st.v[k].array();
    const auto g = p.grad.array();
    m = sb1 * m + (S(1) - sb1) * g;
    v = sb2 * v + (S(1) - sb2) * g * g;
    p.value.array() -= lr * (c_m * m + c_g * g) / ((c_v * v).sqrt() + eps);
    if (!p.value.allFinite()) throw DivergenceError("non-finite value in parameter '" + p.name + "' after update");
  }
  ++st.step;
}

}  // namespace dtag::nn
