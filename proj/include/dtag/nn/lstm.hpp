#pragma once

#include <cmath>
#include <string>

#include "dtag/nn/tensor.hpp"

namespace dtag::nn {

/// One LSTM direction. Gate blocks in every weight and bias are ordered
/// input, forget, cell candidate, output:
///   z_t = W x_t + U h_prev + b
///   c_t = f * c_prev + i * g,  h_t = o * tanh(c_t)
template <typename S>
class Lstm {
 public:
  struct Cache {
    Mat<S> x;      // D x T input as seen
    Mat<S> gates;  // 4H x T post-activation
    Mat<S> c;      // H x T
    Mat<S> h;      // H x T
  };

  Lstm() = default;
  Lstm(const std::string& name, int input_dim, int hidden, bool reverse)
      : w(name + ".W", 4 * hidden, input_dim),
        u(name + ".U", 4 * hidden, hidden),
        b(name + ".b", 4 * hidden, 1),
        hidden_(hidden),
        reverse_(reverse) {}

  int hidden() const { return hidden_; }
  bool reverse() const { return reverse_; }

  /// Uniform +-1/sqrt(H) weights, zero bias except +1 on the forget gate.
  void init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_));
    fill_uniform(w.value, rng, bound);
    fill_uniform(u.value, rng, bound);
    b.value.setZero();
    b.value.block(hidden_, 0, hidden_, 1).setConstant(S(1));
  }

  ParamList<S> parameters() { return {&w, &u, &b}; }

  /// Hidden states H x T, column t aligned with input column t.
  Mat<S> forward(const Mat<S>& x, Cache* cache = nullptr) const {
    const auto n = x.cols();
    const auto h4 = 4 * hidden_;
    Mat<S> zx = w.value * x;
    zx.colwise() += b.value.col(0);
    Mat<S> gates(h4, n), c(hidden_, n), h(hidden_, n);
    Vec<S> h_prev = Vec<S>::Zero(hidden_), c_prev = Vec<S>::Zero(hidden_);
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto t = reverse_ ? n - 1 - k : k;
      Vec<S> z = zx.col(t) + u.value * h_prev;
      for (int j = 0; j < hidden_; ++j) {
        z(j) = sigmoid(z(j));
        z(hidden_ + j) = sigmoid(z(hidden_ + j));
        z(2 * hidden_ + j) = std::tanh(z(2 * hidden_ + j));
        z(3 * hidden_ + j) = sigmoid(z(3 * hidden_ + j));
      }
      const auto i = z.segment(0, hidden_).array();
      const auto f = z.segment(hidden_, hidden_).array();
      const auto g = z.segment(2 * hidden_, hidden_).array();
      const auto o = z.segment(3 * hidden_, hidden_).array();
      c_prev = (f * c_prev.array() + i * g).matrix();
      h_prev = (o * c_prev.array().tanh()).matrix();
      gates.col(t) = z;
      c.col(t) = c_prev;
      h.col(t) = h_prev;
    }
    if (cache) *cache = {x, std::move(gates), std::move(c), h};
    return h;
  }

  /// Accumulates parameter gradients and returns dL/dx.
  Mat<S> backward(const Cache& cache, const Mat<S>& dh_out) {
    const auto n = cache.x.cols();
    const int hd = hidden_;
    Mat<S> dz(4 * hd, n), h_prev_all = Mat<S>::Zero(hd, n);
    Vec<S> dh_next = Vec<S>::Zero(hd), dc_next = Vec<S>::Zero(hd);
    for (Eigen::Index k = n - 1; k >= 0; --k) {
      const auto t = reverse_ ? n - 1 - k : k;
      const bool first = k == 0;
      const auto prev = reverse_ ? t + 1 : t - 1;
      const auto i = cache.gates.col(t).segment(0, hd).array();
      const auto f = cache.gates.col(t).segment(hd, hd).array();
      const auto g = cache.gates.col(t).segment(2 * hd, hd).array();
      const auto o = cache.gates.col(t).segment(3 * hd, hd).array();
      const Eigen::Array<S, Eigen::Dynamic, 1> tc = cache.c.col(t).array().tanh();
      const Eigen::Array<S, Eigen::Dynamic, 1> c_prev =
          first ? Eigen::Array<S, Eigen::Dynamic, 1>::Zero(hd) : Eigen::Array<S, Eigen::Dynamic, 1>(cache.c.col(prev).array());
      const Eigen::Array<S, Eigen::Dynamic, 1> dh = dh_out.col(t).array() + dh_next.array();
      const Eigen::Array<S, Eigen::Dynamic, 1> dc = dh * o * (S(1) - tc * tc) + dc_next.array();
      dz.col(t).segment(0, hd) = (dc * g * i * (S(1) - i)).matrix();
      dz.col(t).segment(hd, hd) = (dc * c_prev * f * (S(1) - f)).matrix();
      dz.col(t).segment(2 * hd, hd) = (dc * i * (S(1) - g * g)).matrix();
      dz.col(t).segment(3 * hd, hd) = (dh * tc * o * (S(1) - o)).matrix();
      dc_next = (dc * f).matrix();
      dh_next = u.value.transpose() * dz.col(t);
      if (!first) h_prev_all.col(t) = cache.h.col(prev);
    }
    w.grad.noalias() += dz * cache.x.transpose();
    u.grad.noalias() += dz * h_prev_all.transpose();
    b.grad.col(0) += dz.rowwise().sum();
    return w.value.transpose() * dz;
  }

  Parameter<S> w;
  Parameter<S> u;
  Parameter<S> b;

 private:
  int hidden_ = 0;
  bool reverse_ = false;
};

/// Forward and backward LSTMs over the same input; output rows are
/// [forward; backward] (2H x T).
template <typename S>
class BiLstm {
 public:
  struct Cache {
    typename Lstm<S>::Cache fwd, bwd;
  };

  BiLstm() = default;
  BiLstm(const std::string& name, int input_dim, int hidden)
      : fwd(name + ".fwd", input_dim, hidden, false), bwd(name + ".bwd", input_dim, hidden, true) {}

  void init(Rng& rng) {
    fwd.init(rng);
    bwd.init(rng);
  }

  ParamList<S> parameters() {
    auto out = fwd.parameters();
    for (auto* p : bwd.parameters()) out.push_back(p);
    return out;
  }

  Mat<S> forward(const Mat<S>& x, Cache* cache = nullptr) const {
    const auto hd = fwd.hidden();
    Mat<S> out(2 * hd, x.cols());
    out.topRows(hd) = fwd.forward(x, cache ? &cache->fwd : nullptr);
    out.bottomRows(hd) = bwd.forward(x, cache ? &cache->bwd : nullptr);
    return out;
  }

  Mat<S> backward(const Cache& cache, const Mat<S>& dout) {
    const auto hd = fwd.hidden();
    Mat<S> dx = fwd.backward(cache.fwd, dout.topRows(hd));
    dx += bwd.backward(cache.bwd, dout.bottomRows(hd));
    return dx;
  }

  Lstm<S> fwd;
  Lstm<S> bwd;
};

}  // namespace dtag::nn
