#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dtag/nn/tensor.hpp"

namespace dtag::nn {

struct GradCheckResult {
  std::string name;
  double rel_error = 0;  // |analytic - numeric| / max(|analytic|, |numeric|), over the whole tensor
  double analytic_norm = 0;
  double numeric_norm = 0;
};

/// Central finite differences for every entry of every parameter.
/// `loss` must be a deterministic function of the parameter values;
/// `analytic` holds the gradients to check, in the order of `params`.
template <typename S>
std::vector<GradCheckResult> check_gradients(const ParamList<S>& params, const std::vector<Mat<S>>& analytic,
                                             const std::function<S()>& loss, double h = 1e-6) {
  std::vector<GradCheckResult> out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    Mat<S> numeric(p.value.rows(), p.value.cols());
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const S orig = p.value.data()[i];
      p.value.data()[i] = orig + static_cast<S>(h);
      const S up = loss();
      p.value.data()[i] = orig - static_cast<S>(h);
      const S down = loss();
      p.value.data()[i] = orig;
      numeric.data()[i] = (up - down) / static_cast<S>(2 * h);
    }
    GradCheckResult r;
    r.name = p.name;
    r.analytic_norm = static_cast<double>(analytic[k].norm());
    r.numeric_norm = static_cast<double>(numeric.norm());
    const double denom = std::max(r.analytic_norm, r.numeric_norm);
    r.rel_error = denom > 0 ? static_cast<double>((analytic[k] - numeric).norm()) / denom : 0.0;
    out.push_back(r);
  }
  return out;
}

}  // namespace dtag::nn
