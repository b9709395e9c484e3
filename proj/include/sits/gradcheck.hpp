#pragma once

#include <cmath>
#include <functional>
#include <span>

namespace sits::nn {

struct FdReport {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
};

/// Central-difference check of an analytic gradient. `loss` must recompute
/// the scalar from the current contents of `values`; the step is
/// 1e-5 * max(1, |x|) per coordinate and the relative error is
/// |fd - analytic| / max(1, |fd|, |analytic|).
inline FdReport finite_diff_check(const std::function<double()>& loss, std::span<double> values,
                                  std::span<const double> analytic) {
  FdReport rep;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    const double h = 1e-5 * std::max(1.0, std::abs(saved));
    values[i] = saved + h;
    const double up = loss();
    values[i] = saved - h;
    const double down = loss();
    values[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    const double err = std::abs(fd - analytic[i]) / std::max({1.0, std::abs(fd), std::abs(analytic[i])});
    if (err > rep.max_rel_err) {
      rep.max_rel_err = err;
      rep.worst_index = i;
    }
  }
  return rep;
}

}  // namespace sits::nn
