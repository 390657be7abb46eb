#pragma once

// K-space sweeps: linear current ramps, undersampling masks, platform drift
// and current noise.

#include "nvfim/common.hpp"
#include "nvfim/field_model.hpp"
#include "nvfim/spin_dynamics.hpp"

#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <variant>
#include <vector>

namespace nvfim {

struct DriftModel {
  double linear_rate = 0.0;            // nm / hour
  double random_walk_sigma = 0.0;      // nm / sqrt(hour)
  double temperature_coupling = 0.0;   // nm / K
  double temperature_amplitude = 0.25; // K
  double temperature_period = 24.0;    // hours
  std::uint64_t seed = 0;

  bool enabled() const {
    return linear_rate != 0.0 || random_walk_sigma != 0.0 || temperature_coupling != 0.0;
  }

  void validate() const {
    require(linear_rate >= 0.0 && random_walk_sigma >= 0.0 && temperature_coupling >= 0.0 &&
                temperature_amplitude >= 0.0,
            ErrorCode::InvalidArgument, "drift magnitudes must be nonnegative");
    require(temperature_period > 0.0, ErrorCode::InvalidArgument,
            "drift.temperature_period must be > 0");
  }
};

struct CurrentNoiseModel {
  double relative_amplitude = 0.0;    // fractional sinusoidal modulation
  double modulation_frequency = 0.0;  // cycles per sweep
  double white_sigma = 0.0;           // fractional

  void validate() const {
    require(relative_amplitude >= 0.0 && modulation_frequency >= 0.0 && white_sigma >= 0.0,
            ErrorCode::InvalidArgument, "current noise parameters must be nonnegative");
  }
};

using Mask = std::vector<std::size_t>;

struct AcquisitionPlan {
  double i_max = 10.0;                 // mA
  std::size_t n_points = 2048;
  Mask mask;                           // empty means every index
  long long shots_per_point = 1000000;
  bool shot_noise = true;
  std::uint64_t seed = 1;
  /// Dead time per shot (laser initialisation and readout), us.
  double readout_overhead = 0.0;
  EchoSequence sequence;
  GradientWaveform waveform_template;
  DriftModel drift;
  CurrentNoiseModel current_noise;
  /// Field-of-view origin in the lab frame (um); x = 0 of the reconstruction.
  Vec3 origin = Vec3::Zero();
  Vec3 imaging_axis = Vec3::UnitX();
  NvAxis nv_axis;
  /// Projected gradient per mA at the origin. When absent it is computed
  /// from the wire model.
  std::optional<double> gradient_per_mA;

  std::vector<std::size_t> sampled_indices() const {
    if (!mask.empty()) return mask;
    std::vector<std::size_t> all(n_points);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }

  double current_at(std::size_t index) const {
    return i_max * static_cast<double>(index) / static_cast<double>(n_points - 1);
  }

  /// Wall-clock duration of one K point, hours.
  double point_duration_hours() const {
    return static_cast<double>(shots_per_point) * (sequence.total_time + readout_overhead) *
           kSecondsPerMicrosecond / kSecondsPerHour;
  }

  void validate() const {
    require(i_max > 0.0, ErrorCode::InvalidArgument, "plan.i_max must be > 0");
    require(n_points >= 2, ErrorCode::InvalidArgument, "plan.n_points must be >= 2");
    require(shots_per_point >= 1, ErrorCode::InvalidArgument, "plan.shots must be >= 1");
    require(readout_overhead >= 0.0, ErrorCode::InvalidArgument,
            "plan.readout_overhead must be >= 0");
    for (std::size_t i = 0; i < mask.size(); ++i) {
      require(mask[i] < n_points, ErrorCode::InvalidArgument,
              "mask index " + std::to_string(mask[i]) + " outside [0, n_points)");
      require(i == 0 || mask[i] > mask[i - 1], ErrorCode::InvalidArgument,
              "mask indices must be strictly increasing");
    }
    require(!gradient_per_mA || std::isfinite(*gradient_per_mA), ErrorCode::InvalidArgument,
            "plan.gradient_per_mA must be finite");
    require(imaging_axis.norm() > 0.0, ErrorCode::InvalidArgument,
            "plan.imaging_axis must be nonzero");
    sequence.validate();
    waveform_template.validate();
    drift.validate();
    current_noise.validate();
    nv_axis.validate();
  }
};

struct KSpaceMetadata {
  double total_time = 0.0;        // 2 tau, us
  double gradient_per_mA = 0.0;   // G/um/mA
  double waveform_factor = 1.0;   // w
  Vec3 origin = Vec3::Zero();
  double i_max = 0.0;
  std::size_t n_points = 0;
  /// K spacing of the full (unmasked) grid, nm^-1.
  double k_step = 0.0;
  Mask mask;                      // grid index of each record entry
  std::uint64_t seed = 0;
  long long shots_per_point = 0;
  bool shot_noise = false;

  bool operator==(const KSpaceMetadata&) const = default;
};

struct KSpaceRecord {
  std::vector<double> k_values;   // nm^-1
  std::vector<double> currents;   // mA
  std::vector<double> signals;    // normalised
  std::vector<double> errors;
  std::vector<double> t_hours;
  KSpaceMetadata metadata;

  std::size_t size() const { return k_values.size(); }

  /// K per mA, nm^-1/mA.
  double k_per_mA() const {
    return metadata.waveform_factor * 2.0 * kGammaCyclic * (metadata.total_time / 2.0) *
           metadata.gradient_per_mA / kNmPerUm;
  }

  bool operator==(const KSpaceRecord&) const = default;
};

// ---------------------------------------------------------------------------

inline double resolve_gradient_per_mA(const AcquisitionPlan& plan,
                                      std::optional<double> gradient_per_mA) {
  if (gradient_per_mA) return *gradient_per_mA;
  if (plan.gradient_per_mA) return *plan.gradient_per_mA;
  fail(ErrorCode::MissingCalibration, "no gradient calibration (G/um per mA) available");
}

/// K = w * 2 gamma tau G(I), nm^-1.
inline double k_of_current(const AcquisitionPlan& plan, double current,
                           std::optional<double> gradient_per_mA = std::nullopt) {
  const double g = resolve_gradient_per_mA(plan, gradient_per_mA);
  const double w = waveform_efficiency(plan.waveform_template, plan.sequence);
  const double tau = plan.sequence.total_time / 2.0;
  return w * 2.0 * kGammaCyclic * tau * std::abs(g) * current / kNmPerUm;
}

/// Gradient per mA at the plan origin from the wire model.
inline double wire_gradient_per_mA(const AcquisitionPlan& plan, const MicrowireModel& wire) {
  return gradient_at(wire.with_current(wire.polarity), plan.origin, plan.nv_axis,
                     plan.imaging_axis.normalized());
}

// ---------------------------------------------------------------------------
// Drift

/// Drift offsets (nm) at ascending times (hours). The random walk is a
/// single Brownian path sampled at those times.
inline std::vector<double> drift_trajectory(const DriftModel& drift,
                                            std::span<const double> times_hours,
                                            std::uint64_t seed) {
  std::vector<double> out(times_hours.size(), 0.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  double walk = 0.0;
  double previous = 0.0;
  for (std::size_t i = 0; i < times_hours.size(); ++i) {
    const double t = times_hours[i];
    require(t >= 0.0 && t >= previous, ErrorCode::InvalidArgument,
            "drift times must be nonnegative and ascending");
    if (drift.random_walk_sigma > 0.0)
      walk += drift.random_walk_sigma * std::sqrt(t - previous) * normal(rng);
    previous = t;
    const double temperature =
        drift.temperature_amplitude * std::sin(2.0 * std::numbers::pi * t / drift.temperature_period);
    out[i] = drift.linear_rate * t + walk + drift.temperature_coupling * temperature;
  }
  return out;
}

inline double apply_drift(const DriftModel& drift, double elapsed_hours, std::uint64_t seed) {
  require(elapsed_hours >= 0.0, ErrorCode::InvalidArgument, "elapsed time must be >= 0");
  const double t[1] = {elapsed_hours};
  return drift_trajectory(drift, t, seed)[0];
}

// ---------------------------------------------------------------------------
// Masks

struct FullSampling {};
struct StrideSampling {
  std::size_t stride = 1;
};
struct BlockSampling {
  std::size_t blocks = 1;
  std::size_t width = 1;
};
using MaskStrategy = std::variant<FullSampling, StrideSampling, BlockSampling>;

inline Mask make_undersampling_mask(std::size_t n_points, const MaskStrategy& strategy) {
  require(n_points > 0, ErrorCode::EmptyMask, "mask over zero points is empty");
  Mask mask;
  if (std::holds_alternative<FullSampling>(strategy)) {
    mask.resize(n_points);
    std::iota(mask.begin(), mask.end(), std::size_t{0});
  } else if (const auto* s = std::get_if<StrideSampling>(&strategy)) {
    require(s->stride >= 1, ErrorCode::InvalidArgument, "stride must be >= 1");
    for (std::size_t i = 0; i < n_points; i += s->stride) mask.push_back(i);
  } else {
    const auto& b = std::get<BlockSampling>(strategy);
    require(b.blocks >= 1 && b.width >= 1, ErrorCode::EmptyMask,
            "block sampling needs at least one block of width >= 1");
    require(b.blocks * b.width <= n_points, ErrorCode::InvalidArgument,
            "blocks * width exceeds n_points");
    // Blocks spread evenly from K = 0 to the end of the ramp.
    const std::size_t span = n_points - b.width;
    for (std::size_t k = 0; k < b.blocks; ++k) {
      const std::size_t start =
          b.blocks == 1 ? 0 : (k * span + (b.blocks - 1) / 2) / (b.blocks - 1);
      for (std::size_t i = 0; i < b.width; ++i) mask.push_back(start + i);
    }
  }
  require(!mask.empty(), ErrorCode::EmptyMask, "undersampling mask is empty");
  return mask;
}

// ---------------------------------------------------------------------------
// Sweep

namespace streams {
inline constexpr std::uint64_t kShot = 0x5407;
inline constexpr std::uint64_t kCurrent = 0xC022;
inline constexpr std::uint64_t kDrift = 0xD41F;
}  // namespace streams

/// Executes the plan. Per-point randomness is keyed on (seed, grid index)
/// so the output does not depend on evaluation order or thread count.
inline KSpaceRecord run_sweep(const AcquisitionPlan& plan, const NvCenter& nv,
                              const MicrowireModel& wire, unsigned threads = 1) {
  plan.validate();
  nv.validate();
  wire.validate();

  const double g_per_mA =
      plan.gradient_per_mA ? *plan.gradient_per_mA : wire_gradient_per_mA(plan, wire);
  const auto indices = plan.sampled_indices();
  const std::size_t m = indices.size();
  require(m > 0, ErrorCode::EmptyMask, "plan samples no points");

  KSpaceRecord rec;
  auto& meta = rec.metadata;
  meta.total_time = plan.sequence.total_time;
  meta.gradient_per_mA = std::abs(g_per_mA);
  meta.waveform_factor = waveform_efficiency(plan.waveform_template, plan.sequence);
  meta.origin = plan.origin;
  meta.i_max = plan.i_max;
  meta.n_points = plan.n_points;
  meta.k_step = k_of_current(plan, plan.current_at(1), g_per_mA);
  meta.mask = plan.mask;
  meta.seed = plan.seed;
  meta.shots_per_point = plan.shots_per_point;
  meta.shot_noise = plan.shot_noise;

  rec.k_values.resize(m);
  rec.currents.resize(m);
  rec.signals.resize(m);
  rec.errors.resize(m);
  rec.t_hours.resize(m);

  const double dt = plan.point_duration_hours();
  for (std::size_t i = 0; i < m; ++i) rec.t_hours[i] = static_cast<double>(i) * dt;
  std::vector<double> drift(m, 0.0);
  if (plan.drift.enabled())
    drift = drift_trajectory(plan.drift, rec.t_hours,
                             derive_seed(plan.seed, streams::kDrift, plan.drift.seed));

  const auto& noise = plan.current_noise;
  auto evaluate = [&](std::size_t i) {
    const std::size_t j = indices[i];
    const double current = plan.current_at(j);
    rec.currents[i] = current;
    rec.k_values[i] = k_of_current(plan, current, g_per_mA);

    double factor = 1.0;
    if (noise.relative_amplitude > 0.0) {
      const double u = static_cast<double>(j) / static_cast<double>(plan.n_points - 1);
      factor += noise.relative_amplitude *
                std::sin(2.0 * std::numbers::pi * noise.modulation_frequency * u);
    }
    if (noise.white_sigma > 0.0) {
      std::mt19937_64 rng(derive_seed(plan.seed, streams::kCurrent, j));
      factor += noise.white_sigma * std::normal_distribution<double>(0.0, 1.0)(rng);
    }

    const double x_nm = nv.x_nm + drift[i];
    const double phase =
        echo_phase(x_nm, g_per_mA * current * factor, plan.sequence, plan.waveform_template);
    const EchoSignal sig = echo_signal(nv, phase, plan.sequence);
    if (!plan.shot_noise) {
      rec.signals[i] = sig.expected_signal;
      rec.errors[i] = 0.0;
      return;
    }
    const CountSample c = sample_counts(sig.expected_counts, plan.shots_per_point,
                                        derive_seed(plan.seed, streams::kShot, j));
    const double alpha = nv.contrast_alpha * plan.sequence.pi_pulse_fidelity;
    rec.signals[i] = counts_to_signal(c.mean, nv, plan.sequence);
    rec.errors[i] = alpha > 0.0 ? c.std_error * (1.0 + alpha) / (alpha * nv.yield_beta) : 0.0;
  };

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(m)));
  if (threads == 1) {
    for (std::size_t i = 0; i < m; ++i) evaluate(i);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < m; i += threads) evaluate(i);
      });
  }
  return rec;
}

}  // namespace nvfim
