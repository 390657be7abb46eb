#pragma once

// Field of the gradient microwire, modelled as an infinitely long thin
// straight conductor, and the calibration of its geometry from ODMR shifts
// measured on several NV centres.

#include "nvfim/common.hpp"
#include "nvfim/levenberg_marquardt.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace nvfim {

/// Perpendicular distance below which a point counts as lying on the wire.
inline constexpr double kMinWireDistanceUm = 1e-6;

inline constexpr double kUnitNormTol = 1e-12;

struct MicrowireModel {
  Vec3 anchor_point = Vec3::Zero();    // um
  Vec3 direction = Vec3::UnitY();      // unit
  double current = 0.0;                // mA, >= 0
  int polarity = +1;                   // +1 / -1

  double signed_current() const { return polarity * current; }

  void validate() const {
    require(std::abs(direction.norm() - 1.0) <= kUnitNormTol, ErrorCode::InvalidArgument,
            "wire direction must have unit norm");
    require(current >= 0.0 && std::isfinite(current), ErrorCode::InvalidArgument,
            "wire current must be finite and >= 0 (sign goes in polarity)");
    require(polarity == 1 || polarity == -1, ErrorCode::InvalidArgument,
            "wire polarity must be +1 or -1");
  }

  /// Same geometry carrying a signed current of `mA`.
  MicrowireModel with_current(double mA) const {
    MicrowireModel w = *this;
    w.current = std::abs(mA);
    w.polarity = mA < 0 ? -1 : 1;
    return w;
  }
};

/// NV quantum axis.
struct NvAxis {
  Vec3 orientation = Vec3::UnitZ();

  static NvAxis from(const Vec3& v) {
    require(v.norm() > 0.0, ErrorCode::InvalidArgument, "NV axis must be nonzero");
    return NvAxis{v.normalized()};
  }

  void validate() const {
    require(std::abs(orientation.norm() - 1.0) <= kUnitNormTol, ErrorCode::InvalidArgument,
            "NV axis must have unit norm");
  }
};

struct FieldSample {
  Vec3 position = Vec3::Zero();      // um
  double b_projected = 0.0;          // G
  double gradient_projected = 0.0;   // G/um
  double delta_f = 0.0;              // MHz
};

namespace detail {

/// Component of (point - anchor) perpendicular to the wire.
inline Vec3 wire_perp(const MicrowireModel& wire, const Vec3& point) {
  const Vec3 rel = point - wire.anchor_point;
  return rel - rel.dot(wire.direction) * wire.direction;
}

inline Vec3 checked_perp(const MicrowireModel& wire, const Vec3& point) {
  const Vec3 perp = wire_perp(wire, point);
  if (!(perp.norm() > kMinWireDistanceUm))
    fail(ErrorCode::DegenerateGeometry,
         "point lies on the wire axis (perpendicular distance <= 1e-6 um)");
  return perp;
}

/// Gradient with respect to perp of  axis . (d x perp) / |perp|^2, i.e. of
/// the projected field per unit prefactor*current.
inline Vec3 projected_kernel_grad(const Vec3& q, const Vec3& perp) {
  const double r2 = perp.squaredNorm();
  return q / r2 - 2.0 * q.dot(perp) * perp / (r2 * r2);
}

}  // namespace detail

/// B at `point` (um) in gauss. |B| = 2 I / r, azimuthal about the wire by
/// the right-hand rule around `direction`, sign set by polarity.
inline Vec3 field_at(const MicrowireModel& wire, const Vec3& point) {
  const Vec3 perp = detail::checked_perp(wire, point);
  const double r2 = perp.squaredNorm();
  return kWirePrefactor * wire.signed_current() * wire.direction.cross(perp) / r2;
}

inline double project_on_axis(const Vec3& b, const NvAxis& axis) {
  return b.dot(axis.orientation);
}

/// m_S = 0 -> +1 line shift in MHz for a projected field in gauss.
inline double odmr_shift(double b_projected) { return kGammaCyclic * b_projected; }

/// Inverse of odmr_shift.
inline double field_from_shift(double delta_f) { return delta_f / kGammaCyclic; }

/// Analytic derivative of the projected field along `imaging_axis`, G/um.
inline double gradient_at(const MicrowireModel& wire, const Vec3& point, const NvAxis& axis,
                          const Vec3& imaging_axis) {
  const Vec3 perp = detail::checked_perp(wire, point);
  const Vec3 q = axis.orientation.cross(wire.direction);
  const Vec3 dperp = imaging_axis - imaging_axis.dot(wire.direction) * wire.direction;
  return kWirePrefactor * wire.signed_current() *
         detail::projected_kernel_grad(q, perp).dot(dperp);
}

inline FieldSample sample_field(const MicrowireModel& wire, const Vec3& point,
                                const NvAxis& axis, const Vec3& imaging_axis) {
  FieldSample s;
  s.position = point;
  s.b_projected = project_on_axis(field_at(wire, point), axis);
  s.gradient_projected = gradient_at(wire, point, axis, imaging_axis);
  s.delta_f = odmr_shift(s.b_projected);
  return s;
}

// ---------------------------------------------------------------------------
// Calibration

struct CalibrationSample {
  Vec3 position = Vec3::Zero();  // um
  double delta_f = 0.0;          // MHz
  double sigma = 1.0;            // MHz
};

struct CalibrationReport {
  MicrowireModel wire;
  /// Perpendicular distance from the fitted wire axis to `reference_point`.
  double standoff_um = 0.0;
  double standoff_uncertainty_um = 0.0;
  /// Wire displacement across the standoff direction; zero unless fitted.
  double lateral_offset_um = 0.0;
  double lateral_offset_uncertainty_um = 0.0;
  double signed_current_mA = 0.0;
  double current_uncertainty_mA = 0.0;
  bool lateral_fitted = false;
  Vec3 reference_point = Vec3::Zero();
  /// Unit vector from the reference point towards the wire.
  Vec3 standoff_direction = Vec3::UnitZ();
  std::vector<double> residuals_mhz;
  double residual_norm = 0.0;  // chi (sigma-weighted)
  int iterations = 0;
  bool converged = false;
};

struct CalibrationOptions {
  /// Also fit the wire's displacement across the standoff direction.
  /// Off by default: five points rarely pin three parameters at 1% noise.
  bool fit_lateral = false;
  LmOptions lm;
};

/// Fits the wire standoff from `reference_point` and the current so the
/// forward model reproduces the measured shifts. The wire direction and the
/// standoff direction come from `initial_guess`.
inline CalibrationReport calibrate_wire(std::span<const CalibrationSample> samples,
                                        const MicrowireModel& initial_guess, const NvAxis& axis,
                                        const Vec3& reference_point = Vec3::Zero(),
                                        const CalibrationOptions& options = {}) {
  initial_guess.validate();
  axis.validate();
  const std::size_t n_params = options.fit_lateral ? 3 : 2;
  require(samples.size() >= 3 && samples.size() >= n_params, ErrorCode::Underdetermined,
          "calibration needs at least 3 samples, got " + std::to_string(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    require(samples[i].sigma > 0.0, ErrorCode::InvalidArgument,
            "sample " + std::to_string(i) + " has nonpositive sigma");
    for (std::size_t k = 0; k < i; ++k)
      require((samples[i].position - samples[k].position).norm() > 0.0,
              ErrorCode::Underdetermined, "calibration samples must be at distinct positions");
  }

  const Vec3 d = initial_guess.direction;
  const Vec3 to_wire = -detail::checked_perp(initial_guess, reference_point);
  const double s0 = to_wire.norm();
  const Vec3 nrm = to_wire / s0;
  const Vec3 lat = d.cross(nrm);
  const Vec3 q = axis.orientation.cross(d);

  // p = (standoff, signed current[, lateral])
  auto anchor_of = [&](const Eigen::VectorXd& p) {
    Vec3 a = reference_point + p[0] * nrm;
    if (options.fit_lateral) a += p[2] * lat;
    return a;
  };
  auto model = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd& jac) {
    const Vec3 anchor = anchor_of(p);
    const double current = p[1];
    const auto m = static_cast<Eigen::Index>(samples.size());
    r.resize(m);
    jac.resize(m, static_cast<Eigen::Index>(n_params));
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& s = samples[static_cast<std::size_t>(i)];
      const Vec3 rel = s.position - anchor;
      const Vec3 perp = rel - rel.dot(d) * d;
      const double r2 = std::max(perp.squaredNorm(), kMinWireDistanceUm * kMinWireDistanceUm);
      const double kernel = q.dot(perp) / r2;
      const double scale = kGammaCyclic * kWirePrefactor / s.sigma;
      r[i] = scale * current * kernel - s.delta_f / s.sigma;
      const Vec3 g = detail::projected_kernel_grad(q, perp);
      // d perp / d anchor-shift = -shift direction
      jac(i, 0) = -scale * current * g.dot(nrm);
      jac(i, 1) = scale * kernel;
      if (options.fit_lateral) jac(i, 2) = -scale * current * g.dot(lat);
    }
  };

  Eigen::VectorXd p0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_params));
  p0[0] = s0;
  p0[1] = initial_guess.signed_current();
  if (p0[1] == 0.0) p0[1] = 1.0;
  const LmResult fit = levenberg_marquardt(model, p0, options.lm);

  auto sd = [&](Eigen::Index k) { return std::sqrt(std::max(fit.covariance(k, k), 0.0)); };
  CalibrationReport rep;
  rep.wire = initial_guess.with_current(fit.params[1]);
  rep.wire.anchor_point = anchor_of(fit.params);
  rep.signed_current_mA = fit.params[1];
  rep.current_uncertainty_mA = sd(1);
  rep.lateral_fitted = options.fit_lateral;
  if (options.fit_lateral) {
    rep.lateral_offset_um = fit.params[2];
    rep.lateral_offset_uncertainty_um = sd(2);
  }
  rep.reference_point = reference_point;
  rep.standoff_direction = nrm;
  rep.standoff_um = detail::wire_perp(rep.wire, reference_point).norm();
  if (rep.standoff_um > 0.0) {
    // standoff = |(s, l)|
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_params));
    grad[0] = fit.params[0] / rep.standoff_um;
    if (options.fit_lateral) grad[2] = fit.params[2] / rep.standoff_um;
    rep.standoff_uncertainty_um = std::sqrt(std::max(0.0, grad.dot(fit.covariance * grad)));
  }
  rep.residuals_mhz.reserve(samples.size());
  for (const auto& s : samples) {
    const Vec3 perp = detail::wire_perp(rep.wire, s.position);
    const double pred = kGammaCyclic * kWirePrefactor * fit.params[1] * q.dot(perp) /
                        perp.squaredNorm();
    rep.residuals_mhz.push_back(pred - s.delta_f);
  }
  rep.residual_norm = fit.residual_norm;
  rep.iterations = fit.iterations;
  rep.converged = fit.converged;
  return rep;
}

}  // namespace nvfim
