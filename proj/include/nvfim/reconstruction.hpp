#pragma once

// Real-space reconstruction of K-space records and peak fitting.

#include "nvfim/acquisition.hpp"
#include "nvfim/common.hpp"
#include "nvfim/dct.hpp"
#include "nvfim/levenberg_marquardt.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace nvfim {

enum class Window { None, Hann };

inline std::string to_string(Window w) { return w == Window::Hann ? "hann" : "none"; }

struct RealSpaceProfile {
  std::vector<double> x_grid;     // nm
  std::vector<double> amplitude;  // normalised so a unit DC input gives 1 at x = 0
  double pixel_size = 0.0;        // 1/(2 k_max), before zero padding
  double k_max = 0.0;             // nm^-1
  Window window = Window::None;
  int zero_pad_factor = 1;
  /// Spacing of the uniform K grid the transform ran on (stride * full-grid
  /// step for strided records), nm^-1.
  double k_spacing = 0.0;
  /// Number of K grid points before padding.
  std::size_t k_points = 0;

  double grid_spacing() const { return pixel_size / zero_pad_factor; }
  /// Period of the alias pattern in x, nm.
  double alias_period() const { return 1.0 / k_spacing; }
};

struct PeakFit {
  double center = 0.0;     // nm
  double fwhm = 0.0;       // nm
  double amplitude = 0.0;
  double offset = 0.0;
  /// One-sigma uncertainties of center, fwhm, amplitude, offset.
  double center_err = 0.0;
  double fwhm_err = 0.0;
  double amplitude_err = 0.0;
  double offset_err = 0.0;
  double residual_norm = 0.0;
  int iterations = 0;
  std::size_t points = 0;

  double half_width() const { return fwhm / 2.0; }
  double evaluate(double x) const {
    const double w = half_width();
    return amplitude * w * w / ((x - center) * (x - center) + w * w) + offset;
  }
};

struct CosineFit {
  double frequency = 0.0;  // cycles per mA
  double phase = 0.0;      // rad
  double amplitude = 0.0;
  double offset = 0.0;
  double implied_position = 0.0;  // nm
  double frequency_err = 0.0;
  double implied_position_err = 0.0;
  double residual_norm = 0.0;
  bool degenerate = false;
};

// ---------------------------------------------------------------------------
// Grid handling

struct DenseKGrid {
  std::vector<double> signal;  // zero-filled
  double spacing = 0.0;        // nm^-1
};

/// Places record samples on the uniform grid implied by their indices.
/// Strided records land on the coarser stride grid, gaps are zero-filled.
inline DenseKGrid dense_k_grid(const KSpaceRecord& record) {
  const std::size_t m = record.size();
  require(m > 0, ErrorCode::EmptyRecord, "K-space record is empty");
  require(record.signals.size() == m, ErrorCode::InvalidArgument,
          "record arrays have different lengths");

  std::vector<std::size_t> idx = record.metadata.mask;
  if (idx.empty()) {
    idx.resize(m);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
  }
  require(idx.size() == m, ErrorCode::MetadataError,
          "record mask length does not match the number of samples");

  double step = record.metadata.k_step;
  if (!(step > 0.0)) {
    require(m >= 2 && idx.back() > idx.front(), ErrorCode::NonUniformK,
            "cannot infer the K grid spacing from a single sample");
    step = (record.k_values.back() - record.k_values.front()) /
           static_cast<double>(idx.back() - idx.front());
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double expected = static_cast<double>(idx[i]) * step;
    if (!(std::abs(record.k_values[i] - expected) <= 1e-9 * step))
      fail(ErrorCode::NonUniformK, "K value at entry " + std::to_string(i) +
                                       " is off the uniform grid (relative spacing error > 1e-9)");
  }

  std::size_t g = 0;
  for (std::size_t v : idx) g = std::gcd(g, v);
  if (g == 0) g = 1;
  const std::size_t length = idx.back() / g + 1;
  require(length >= 2, ErrorCode::InvalidArgument,
          "reconstruction needs samples at two or more distinct K values");

  DenseKGrid grid;
  grid.signal.assign(length, 0.0);
  for (std::size_t i = 0; i < m; ++i) grid.signal[idx[i] / g] = record.signals[i];
  grid.spacing = step * static_cast<double>(g);
  return grid;
}

inline double window_weight(Window window, double k, double k_max) {
  if (window == Window::Hann) return 0.5 * (1.0 + std::cos(std::numbers::pi * k / k_max));
  return 1.0;
}

/// Cosine-transform magnitude profile over x in [0, 1/(2 dK)].
///
/// A(x) = |sum_j t_j h_j s_j cos(2 pi k_j x)| / sum_j t_j, with t the
/// trapezoid weights of the unpadded grid and h the window.
inline RealSpaceProfile fourier_reconstruct(const KSpaceRecord& record, Window window = Window::None,
                                            int zero_pad_factor = 4) {
  require(zero_pad_factor >= 1, ErrorCode::InvalidArgument, "zero_pad_factor must be >= 1");
  DenseKGrid grid = dense_k_grid(record);
  const std::size_t n = grid.signal.size();
  const double k_max = grid.spacing * static_cast<double>(n - 1);

  for (std::size_t j = 0; j < n; ++j)
    grid.signal[j] *= window_weight(window, grid.spacing * static_cast<double>(j), k_max);

  const std::size_t padded = (n - 1) * static_cast<std::size_t>(zero_pad_factor) + 1;
  std::vector<double> buf(padded, 0.0);
  std::copy(grid.signal.begin(), grid.signal.end(), buf.begin());
  // Keep the half weight on the last measured sample once it is interior.
  if (padded > n) buf[n - 1] *= 0.5;

  const std::vector<double> y = dct1_trapezoid(buf);
  const double norm = static_cast<double>(n - 1);

  RealSpaceProfile p;
  p.window = window;
  p.zero_pad_factor = zero_pad_factor;
  p.k_max = k_max;
  p.k_spacing = grid.spacing;
  p.k_points = n;
  p.pixel_size = 1.0 / (2.0 * k_max);
  p.x_grid.resize(padded);
  p.amplitude.resize(padded);
  const double dx = p.pixel_size / zero_pad_factor;
  for (std::size_t i = 0; i < padded; ++i) {
    p.x_grid[i] = static_cast<double>(i) * dx;
    p.amplitude[i] = std::abs(y[i]) / norm;
  }
  return p;
}

/// Point-spread magnitude of the profile's K grid at offset dx (nm),
/// normalised to 1 at dx = 0.
inline double point_spread(const RealSpaceProfile& p, double dx) {
  const std::size_t n = p.k_points;
  const double k_max = p.k_max;
  double acc = 0.0;
  double norm = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double k = p.k_spacing * static_cast<double>(j);
    const double t = (j == 0 || j + 1 == n) ? 0.5 : 1.0;
    const double h = t * window_weight(p.window, k, k_max);
    acc += h * std::cos(2.0 * std::numbers::pi * k * dx);
    norm += h;
  }
  return std::abs(acc) / norm;
}

// ---------------------------------------------------------------------------
// Lorentzian

struct XRange {
  double lo = 0.0;
  double hi = 0.0;
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

inline std::size_t argmax_lowest(std::span<const double> v, std::size_t lo, std::size_t hi) {
  std::size_t best = lo;
  for (std::size_t i = lo; i < hi; ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace detail

/// Index of the global maximum, lowest x on ties.
inline std::size_t peak_index(const RealSpaceProfile& p) {
  require(!p.amplitude.empty(), ErrorCode::EmptyRecord, "profile is empty");
  return detail::argmax_lowest(p.amplitude, 0, p.amplitude.size());
}

/// Fit window used by default: +-1.5 pixels around the tallest bin, widened
/// to at least five grid points on unpadded profiles.
inline XRange default_peak_window(const RealSpaceProfile& p, double half_width_pixels = 1.5) {
  const double x = p.x_grid[peak_index(p)];
  const double half = std::max(half_width_pixels * p.pixel_size, 2.01 * p.grid_spacing());
  return {x - half, x + half};
}

/// Least-squares fit of A w^2 / ((x - x0)^2 + w^2) + c inside `window`.
/// The profile is even in x, so a window reaching below zero is filled with
/// the mirror image.
inline PeakFit fit_lorentzian(const RealSpaceProfile& profile, XRange window,
                              const LmOptions& options = {}) {
  const auto& xs = profile.x_grid;
  const auto& ys = profile.amplitude;
  require(!xs.empty() && xs.size() == ys.size(), ErrorCode::EmptyRecord, "profile is empty");
  require(window.hi > window.lo, ErrorCode::InvalidArgument, "fit window is empty");

  std::vector<double> fx;
  std::vector<double> fy;
  for (std::size_t i = xs.size(); i-- > 1;) {
    if (-xs[i] >= window.lo && -xs[i] <= window.hi) {
      fx.push_back(-xs[i]);
      fy.push_back(ys[i]);
    }
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] >= window.lo && xs[i] <= window.hi) {
      fx.push_back(xs[i]);
      fy.push_back(ys[i]);
    }
  }
  // ... and about the far edge 1/(2 dK), where the folding repeats.
  const double edge = xs.back();
  for (std::size_t i = xs.size() - 1; i-- > 0;) {
    const double x = 2.0 * edge - xs[i];
    if (x >= window.lo && x <= window.hi) {
      fx.push_back(x);
      fy.push_back(ys[i]);
    }
  }
  require(fx.size() >= 5, ErrorCode::NoPeakFound, "fewer than 5 profile points in the fit window");

  const std::size_t top = detail::argmax_lowest(fy, 0, fy.size());
  const double ymax = fy[top];
  const double ymin = *std::min_element(fy.begin(), fy.end());
  if (!(ymax - ymin > 1e-12 * std::max(1.0, std::abs(ymax))))
    fail(ErrorCode::NoPeakFound, "profile is flat inside the fit window");
  if (top == 0 || top + 1 == fx.size())
    fail(ErrorCode::NoPeakFound, "no interior local maximum inside the fit window");

  const double c0 = detail::median(ys);
  const double a0 = ymax - c0;
  const double h = fx[top + 1] - fx[top];
  const double curvature = (fy[top - 1] - 2.0 * ymax + fy[top + 1]) / (2.0 * h * h);
  double w0 = curvature < 0.0 ? std::sqrt(a0 / -curvature) : h;
  if (!std::isfinite(w0) || w0 <= 0.0) w0 = h;

  const auto m = static_cast<Eigen::Index>(fx.size());
  auto model = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r, Eigen::MatrixXd& jac) {
    const double amp = q[0], x0 = q[1], w = q[2], c = q[3];
    r.resize(m);
    jac.resize(m, 4);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double dx = fx[static_cast<std::size_t>(i)] - x0;
      const double den = dx * dx + w * w;
      const double shape = w * w / den;
      r[i] = amp * shape + c - fy[static_cast<std::size_t>(i)];
      jac(i, 0) = shape;
      jac(i, 1) = amp * w * w * 2.0 * dx / (den * den);
      jac(i, 2) = amp * 2.0 * w * dx * dx / (den * den);
      jac(i, 3) = 1.0;
    }
  };
  Eigen::VectorXd q0(4);
  q0 << a0, fx[top], w0, c0;
  const LmResult res = levenberg_marquardt(model, q0, options);
  if (!res.converged || !res.params.allFinite())
    fail(ErrorCode::NonConvergence, "Lorentzian fit did not converge");

  PeakFit fit;
  fit.amplitude = res.params[0];
  fit.center = res.params[1];
  fit.fwhm = 2.0 * std::abs(res.params[2]);
  fit.offset = res.params[3];
  auto sd = [&](int k) { return std::sqrt(std::max(res.covariance(k, k), 0.0)); };
  fit.amplitude_err = sd(0);
  fit.center_err = sd(1);
  fit.fwhm_err = 2.0 * sd(2);
  fit.offset_err = sd(3);
  fit.residual_norm = res.residual_norm;
  fit.iterations = res.iterations;
  fit.points = fx.size();
  if (!(fit.fwhm > 0.0)) fail(ErrorCode::NonConvergence, "Lorentzian fit collapsed to zero width");
  return fit;
}

inline PeakFit fit_lorentzian(const RealSpaceProfile& profile) {
  return fit_lorentzian(profile, default_peak_window(profile));
}

// ---------------------------------------------------------------------------
// Aliasing

struct PositionEstimate {
  double center = 0.0;  // nm
  double sigma = 0.0;   // nm
};

/// Unfolds a position measured on a strided (aliased) grid. The cosine
/// signal is even and periodic in x with the alias period P, so the true
/// position is one of n P +- x_folded; the candidate nearest the coarse
/// estimate wins.
inline double disambiguate_alias(const PositionEstimate& coarse, double fine_folded,
                                 double alias_period, std::size_t stride) {
  if (stride <= 1) return fine_folded;
  require(alias_period > 0.0, ErrorCode::InvalidArgument, "alias period must be > 0");
  if (coarse.sigma > alias_period / 2.0)
    fail(ErrorCode::Ambiguity, "coarse uncertainty exceeds half an alias period");
  const double base = std::round(coarse.center / alias_period);
  double best = fine_folded;
  double best_dist = std::numeric_limits<double>::infinity();
  for (double n = base - 1.0; n <= base + 1.0; n += 1.0) {
    for (double sign : {-1.0, 1.0}) {
      const double candidate = n * alias_period + sign * fine_folded;
      const double dist = std::abs(candidate - coarse.center);
      if (dist < best_dist) {
        best_dist = dist;
        best = candidate;
      }
    }
  }
  return best;
}

/// Profile-level wrapper: fits both peaks, uses the coarse half width as
/// the coarse uncertainty and the fine profile's own K spacing for P.
inline double disambiguate_alias(const RealSpaceProfile& coarse, const RealSpaceProfile& fine_folded,
                                 std::size_t stride) {
  const PeakFit c = fit_lorentzian(coarse);
  const PeakFit f = fit_lorentzian(fine_folded);
  return disambiguate_alias({c.center, c.half_width()}, std::abs(f.center),
                            fine_folded.alias_period(), stride);
}

// ---------------------------------------------------------------------------
// Cosine fit in current

inline CosineFit fit_cosine(const KSpaceRecord& record, const LmOptions& options = {}) {
  const std::size_t n = record.size();
  require(n >= 6, ErrorCode::InsufficientSpan, "cosine fit needs at least 6 points");
  const auto& xi = record.currents;
  const auto& yi = record.signals;
  const double lo = *std::min_element(xi.begin(), xi.end());
  const double hi = *std::max_element(xi.begin(), xi.end());
  const double span = hi - lo;
  require(span > 0.0, ErrorCode::InsufficientSpan, "currents do not span a range");

  CosineFit out;
  const double mean = std::accumulate(yi.begin(), yi.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double y : yi) var += (y - mean) * (y - mean);
  if (!(var > 1e-24 * static_cast<double>(n))) {
    out.offset = mean;
    out.degenerate = true;
    return out;
  }

  // Periodogram, 8x oversampled, up to the mean-spacing Nyquist limit.
  constexpr int kOversample = 8;
  const double df = 1.0 / (span * kOversample);
  const double f_nyq = static_cast<double>(n - 1) / (2.0 * span);
  double best_f = df;
  double best_power = -1.0;
  for (double f = df; f <= f_nyq + 0.5 * df; f += df) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      acc += (yi[i] - mean) * std::polar(1.0, -2.0 * std::numbers::pi * f * xi[i]);
    const double power = std::norm(acc);
    if (power > best_power) {
      best_power = power;
      best_f = f;
    }
  }
  if (best_f * span < 1.0 - 1e-9)
    fail(ErrorCode::InsufficientSpan, "data spans less than one oscillation period");

  // y = a cos(2 pi f I) + b sin(2 pi f I) + c
  const auto m = static_cast<Eigen::Index>(n);
  auto model = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r, Eigen::MatrixXd& jac) {
    r.resize(m);
    jac.resize(m, 4);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double x = xi[static_cast<std::size_t>(i)];
      const double arg = 2.0 * std::numbers::pi * q[0] * x;
      const double cs = std::cos(arg), sn = std::sin(arg);
      r[i] = q[1] * cs + q[2] * sn + q[3] - yi[static_cast<std::size_t>(i)];
      jac(i, 0) = 2.0 * std::numbers::pi * x * (-q[1] * sn + q[2] * cs);
      jac(i, 1) = cs;
      jac(i, 2) = sn;
      jac(i, 3) = 1.0;
    }
  };
  // Linear least squares for a, b, c at the periodogram frequency.
  Eigen::MatrixXd design(m, 3);
  Eigen::VectorXd rhs(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double arg = 2.0 * std::numbers::pi * best_f * xi[static_cast<std::size_t>(i)];
    design(i, 0) = std::cos(arg);
    design(i, 1) = std::sin(arg);
    design(i, 2) = 1.0;
    rhs[i] = yi[static_cast<std::size_t>(i)];
  }
  const Eigen::Vector3d lin = design.colPivHouseholderQr().solve(rhs);
  Eigen::VectorXd q0(4);
  q0 << best_f, lin[0], lin[1], lin[2];
  LmOptions opt = options;
  opt.relative_step_tol = std::min(opt.relative_step_tol, 1e-12);
  const LmResult res = levenberg_marquardt(model, q0, opt);
  if (!res.converged || !res.params.allFinite())
    fail(ErrorCode::NonConvergence, "cosine fit did not converge");

  double f = res.params[0];
  double a = res.params[1];
  double b = res.params[2];
  if (f < 0.0) {
    f = -f;
    b = -b;
  }
  out.frequency = f;
  out.amplitude = std::hypot(a, b);
  out.phase = std::atan2(-b, a);
  out.offset = res.params[3];
  out.frequency_err = std::sqrt(std::max(res.covariance(0, 0), 0.0));
  out.residual_norm = res.residual_norm;
  out.degenerate = !(out.amplitude > 1e-9 * std::sqrt(var / static_cast<double>(n)));
  const double kpm = record.k_per_mA();
  if (kpm > 0.0) {
    out.implied_position = out.frequency / kpm;
    out.implied_position_err = out.frequency_err / kpm;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sidebands

struct SidebandPair {
  double offset = 0.0;              // nm, distance from the main peak
  double relative_amplitude = 0.0;  // mean of the pair over the main peak height
  double left_x = 0.0;
  double right_x = 0.0;
};

struct SidebandOptions {
  /// Noise floor is median + mad_factor * MAD of the profile outside the
  /// main-peak exclusion zone.
  double mad_factor = 3.0;
  /// Maxima must also clear leakage_margin times the main peak's own
  /// spectral leakage at that offset.
  double leakage_margin = 2.0;
  /// Half width of the region around the main peak ignored, in pixels.
  double exclusion_pixels = 2.0;
  /// Allowed mismatch of the two offsets, in pixels.
  double symmetry_tolerance_pixels = 0.5;
  /// Smallest allowed ratio of the weaker to the stronger member.
  double min_balance = 0.33;
};

inline std::vector<SidebandPair> sideband_analysis(const RealSpaceProfile& profile,
                                                   const PeakFit& main_peak,
                                                   const SidebandOptions& opt = {}) {
  const auto& xs = profile.x_grid;
  const auto& ys = profile.amplitude;
  const std::size_t n = xs.size();
  std::vector<SidebandPair> out;
  if (n < 3) return out;

  const double x0 = main_peak.center;
  const double exclusion = opt.exclusion_pixels * profile.pixel_size;
  const double peak_height = main_peak.amplitude + main_peak.offset;

  std::vector<double> outside;
  for (std::size_t i = 0; i < n; ++i)
    if (std::abs(xs[i] - x0) > exclusion) outside.push_back(ys[i]);
  const double med = detail::median(outside);
  std::vector<double> dev;
  dev.reserve(outside.size());
  for (double v : outside) dev.push_back(std::abs(v - med));
  const double floor = med + opt.mad_factor * detail::median(dev);

  // Leakage hull: largest point-spread magnitude at or beyond each offset.
  const double dx = profile.grid_spacing();
  const std::size_t hull_len = n;
  std::vector<double> hull(hull_len);
  for (std::size_t i = 0; i < hull_len; ++i) hull[i] = point_spread(profile, i * dx);
  for (std::size_t i = hull_len - 1; i-- > 0;) hull[i] = std::max(hull[i], hull[i + 1]);
  auto leak = [&](double offset) {
    const auto i = static_cast<std::size_t>(std::floor(std::abs(offset) / dx));
    return i < hull_len ? hull[i] : 0.0;
  };

  struct Candidate {
    double x;
    double y;
  };
  std::vector<Candidate> left, right;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(ys[i] > ys[i - 1] && ys[i] >= ys[i + 1])) continue;
    if (std::abs(xs[i] - x0) <= exclusion) continue;
    // Both the peak and its mirror image at -x0 leak into x >= 0.
    const double leakage =
        opt.leakage_margin * peak_height * std::max(leak(xs[i] - x0), leak(xs[i] + x0));
    if (ys[i] <= std::max(floor, leakage)) continue;
    (xs[i] < x0 ? left : right).push_back({xs[i], ys[i]});
  }

  const double tol = opt.symmetry_tolerance_pixels * profile.pixel_size;
  std::vector<bool> used(right.size(), false);
  for (const auto& l : left) {
    const double d = x0 - l.x;
    std::size_t best = right.size();
    double best_err = tol;
    for (std::size_t k = 0; k < right.size(); ++k) {
      if (used[k]) continue;
      const double err = std::abs((right[k].x - x0) - d);
      if (err <= best_err) {
        best_err = err;
        best = k;
      }
    }
    if (best == right.size()) continue;
    const auto& r = right[best];
    const double balance = std::min(l.y, r.y) / std::max(l.y, r.y);
    if (balance < opt.min_balance) continue;
    used[best] = true;
    out.push_back({0.5 * (d + (r.x - x0)), 0.5 * (l.y + r.y) / peak_height, l.x, r.x});
  }
  std::sort(out.begin(), out.end(),
            [](const SidebandPair& a, const SidebandPair& b) { return a.offset < b.offset; });
  return out;
}

}  // namespace nvfim
