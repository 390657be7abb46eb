#pragma once

// Type-I discrete cosine transform with trapezoid end weights, backed by
// FFTW's REDFT00:
//
//   Y[m] = x[0]/2 + (-1)^m x[n-1]/2 + sum_{j=1}^{n-2} x[j] cos(pi j m / (n-1))

#include "nvfim/common.hpp"

#include <fftw3.h>

#include <mutex>
#include <span>
#include <vector>

namespace nvfim {

namespace detail {
// The FFTW planner is not re-entrant; plan execution is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

inline std::vector<double> dct1_trapezoid(std::span<const double> input) {
  const std::size_t n = input.size();
  require(n >= 2, ErrorCode::InvalidArgument, "DCT-I needs at least 2 samples");

  double* buf = fftw_alloc_real(n);
  fftw_plan plan;
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    plan = fftw_plan_r2r_1d(static_cast<int>(n), buf, buf, FFTW_REDFT00, FFTW_ESTIMATE);
  }
  std::copy(input.begin(), input.end(), buf);
  fftw_execute(plan);
  std::vector<double> out(buf, buf + n);
  for (double& v : out) v *= 0.5;
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(buf);
  return out;
}

}  // namespace nvfim
