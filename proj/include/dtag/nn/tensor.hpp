#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dtag/util.hpp"

namespace dtag::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// A named learnable tensor and its gradient accumulator.
template <typename S>
struct Parameter {
  std::string name;
  Mat<S> value;
  Mat<S> grad;

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Mat<S>::Zero(rows, cols)), grad(Mat<S>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename S>
using ParamList = std::vector<Parameter<S>*>;

template <typename S>
void fill_uniform(Mat<S>& m, Rng& rng, double bound) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<S>(uniform(rng, -bound, bound));
  }
}

template <typename S>
S sigmoid(S x) {
  return x >= 0 ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
}

/// Column-wise softmax.
template <typename S>
Mat<S> softmax_cols(const Mat<S>& logits) {
  Mat<S> out(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.cols(); ++t) {
    const S mx = logits.col(t).maxCoeff();
    out.col(t) = (logits.col(t).array() - mx).exp().matrix();
    out.col(t) /= out.col(t).sum();
  }
  return out;
}

/// Column-wise log-softmax.
template <typename S>
Mat<S> log_softmax_cols(const Mat<S>& logits) {
  Mat<S> out(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.cols(); ++t) {
    const S mx = logits.col(t).maxCoeff();
    const S lse = mx + std::log((logits.col(t).array() - mx).exp().sum());
    out.col(t) = logits.col(t).array() - lse;
  }
  return out;
}

template <typename S>
bool all_finite(const Mat<S>& m) {
  return m.allFinite();
}

}  // namespace dtag::nn
