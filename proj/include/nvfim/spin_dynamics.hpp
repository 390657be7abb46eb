#pragma once

// Spin-echo phase accumulated by an NV under pulsed field gradients, and the
// resulting optical signal.

#include "nvfim/common.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <cstdint>
#include <functional>
#include <random>
#include <string>

namespace nvfim {

struct NvCenter {
  Vec3 position = Vec3::Zero();     // um, lab frame (used for field evaluation)
  double x_nm = 0.0;                // imaging-axis offset from the field-of-view origin
  double t2 = 1200.0;               // us
  double stretch_p = 1.0;
  double contrast_alpha = 0.08;
  double yield_beta = 0.02;         // photons per readout, bright state

  void validate() const {
    require(t2 > 0.0, ErrorCode::InvalidArgument, "nv.t2 must be > 0");
    require(stretch_p > 0.0, ErrorCode::InvalidArgument, "nv.stretch_p must be > 0");
    require(contrast_alpha > 0.0 && contrast_alpha <= 1.0, ErrorCode::InvalidArgument,
            "nv.contrast_alpha must be in (0, 1]");
    require(yield_beta > 0.0, ErrorCode::InvalidArgument, "nv.yield_beta must be > 0");
  }
};

enum class WaveformShape { Sine, Rectangular };

inline std::string to_string(WaveformShape s) {
  return s == WaveformShape::Sine ? "sine" : "rectangular";
}

/// Gradient current pulse train, normalised so its peak is 1 (the peak
/// current is amplitude_current).
///
/// Each echo half is tiled with cycles of length `period` measured from the
/// outer edge of that half (t = 0 for the first half, t = 2 tau for the
/// second, running backwards). The first active_fraction of every cycle
/// carries a pulse (a half sine lobe or a flat top), the rest is the gap.
/// The second half is therefore the mirror image of the first about the
/// pi pulse when the halves are equal, negated when `antisymmetric`.
struct GradientWaveform {
  WaveformShape shape = WaveformShape::Sine;
  double period = 250.0;           // us
  double active_fraction = 1.0;    // (0, 1]
  double amplitude_current = 0.0;  // mA
  bool antisymmetric = true;

  double active_length() const { return active_fraction * period; }

  void validate() const {
    require(period > 0.0, ErrorCode::InvalidArgument, "waveform.period must be > 0");
    require(active_fraction > 0.0 && active_fraction <= 1.0, ErrorCode::InvalidArgument,
            "waveform.active_fraction must be in (0, 1]");
  }
};

struct EchoSequence {
  double total_time = 500.0;     // 2 tau, us
  double pi_pulse_time = 250.0;  // us
  double sync_offset = 0.0;      // us, MFG delay relative to MW
  double pi_pulse_fidelity = 1.0;

  static EchoSequence symmetric(double total, double offset = 0.0) {
    return EchoSequence{total, total / 2.0, offset, 1.0};
  }

  void validate() const {
    require(total_time > 0.0, ErrorCode::InvalidArgument, "sequence.total_time must be > 0");
    require(pi_pulse_time > 0.0 && pi_pulse_time < total_time, ErrorCode::InvalidArgument,
            "sequence.pi_pulse_time must lie strictly inside (0, total_time)");
    require(std::abs(sync_offset) < total_time / 4.0, ErrorCode::InvalidArgument,
            "sequence.sync_offset must satisfy |offset| < total_time/4");
    require(pi_pulse_fidelity >= 0.0 && pi_pulse_fidelity <= 1.0, ErrorCode::InvalidArgument,
            "sequence.pi_pulse_fidelity must be in [0, 1]");
  }
};

struct EchoSignal {
  double phase = 0.0;
  double coherence_envelope = 1.0;
  double expected_signal = 1.0;
  double expected_counts = 0.0;
};

// ---------------------------------------------------------------------------
// Waveform integrals

namespace detail {

/// Integral over [0, u] of a single pulse pattern, u measured from the
/// outer edge of the echo half and clamped to [0, half_length].
inline double pattern_cumulative(const GradientWaveform& wf, double u, double half_length) {
  u = std::clamp(u, 0.0, half_length);
  const double a = wf.active_length();
  const double lobe = wf.shape == WaveformShape::Sine ? 2.0 * a / std::numbers::pi : a;
  const double cycles = std::floor(u / wf.period);
  const double v = std::min(u - cycles * wf.period, a);
  const double partial = wf.shape == WaveformShape::Sine
                             ? a / std::numbers::pi * (1.0 - std::cos(std::numbers::pi * v / a))
                             : v;
  return cycles * lobe + partial;
}

inline double pattern_value(const GradientWaveform& wf, double u, double half_length) {
  if (u < 0.0 || u > half_length) return 0.0;
  const double a = wf.active_length();
  const double v = u - std::floor(u / wf.period) * wf.period;
  if (v >= a) return 0.0;
  return wf.shape == WaveformShape::Sine ? std::sin(std::numbers::pi * v / a) : 1.0;
}

/// Antiderivative of the normalised waveform g over the sequence, g = 0
/// outside [0, 2 tau].
inline double waveform_antiderivative(const GradientWaveform& wf, const EchoSequence& seq,
                                      double t) {
  const double h1 = seq.pi_pulse_time;
  const double h2 = seq.total_time - seq.pi_pulse_time;
  const double sign2 = wf.antisymmetric ? -1.0 : 1.0;
  if (t <= h1) return pattern_cumulative(wf, t, h1);
  const double first = pattern_cumulative(wf, h1, h1);
  const double total2 = pattern_cumulative(wf, h2, h2);
  return first + sign2 * (total2 - pattern_cumulative(wf, seq.total_time - t, h2));
}

}  // namespace detail

/// Normalised waveform g(t), t in us from the start of the sequence.
inline double waveform_value(const GradientWaveform& wf, const EchoSequence& seq, double t) {
  const double h1 = seq.pi_pulse_time;
  const double h2 = seq.total_time - seq.pi_pulse_time;
  if (t < 0.0 || t > seq.total_time) return 0.0;
  if (t < h1) return detail::pattern_value(wf, t, h1);
  const double sign2 = wf.antisymmetric ? -1.0 : 1.0;
  return sign2 * detail::pattern_value(wf, seq.total_time - t, h2);
}

/// Echo-weighted integral of the delayed normalised waveform,
///   int_0^{t_pi} g(t - dt) dt - int_{t_pi}^{2 tau} g(t - dt) dt   [us].
inline double echo_weighted_integral(const GradientWaveform& wf, const EchoSequence& seq,
                                     double sync_offset) {
  auto big_g = [&](double t) {
    return detail::waveform_antiderivative(wf, seq, std::clamp(t, 0.0, seq.total_time));
  };
  const double t0 = -sync_offset;
  const double tp = seq.pi_pulse_time - sync_offset;
  const double te = seq.total_time - sync_offset;
  return (big_g(tp) - big_g(t0)) - (big_g(te) - big_g(tp));
}

/// Phase-efficiency factor w: the echo-weighted integral relative to a
/// flat-top antisymmetric pulse of the same peak over the whole 2 tau.
/// Evaluated for perfect MW/MFG alignment: this is the nominal factor that
/// maps current onto K.
inline double waveform_efficiency(const GradientWaveform& wf, const EchoSequence& seq) {
  return std::abs(echo_weighted_integral(wf, seq, 0.0)) / seq.total_time;
}

/// active_fraction that gives efficiency w for whole-cycle tilings.
inline double active_fraction_for_efficiency(WaveformShape shape, double w) {
  return shape == WaveformShape::Sine ? w * std::numbers::pi / 2.0 : w;
}

// ---------------------------------------------------------------------------
// Phase and signal

/// Echo phase (rad) for a gradient that is peak_gradient (G/um) times the
/// normalised waveform, analytic for the built-in shapes.
inline double echo_phase(double x_nm, double peak_gradient, const EchoSequence& seq,
                         const GradientWaveform& wf) {
  return kGammaAngular * (x_nm / kNmPerUm) * peak_gradient *
         echo_weighted_integral(wf, seq, seq.sync_offset);
}

inline double echo_phase(const NvCenter& nv, double peak_gradient, const EchoSequence& seq,
                         const GradientWaveform& wf) {
  return echo_phase(nv.x_nm, peak_gradient, seq, wf);
}

using GradientFn = std::function<double(double)>;

/// Echo phase for an arbitrary gradient history G(t) (G/um, t in us),
/// trapezoid rule with the given step. Both halves are sampled at mirror
/// images about the pi pulse so even histories cancel exactly.
inline double echo_phase(double x_nm, const GradientFn& gradient, const EchoSequence& seq,
                         double step) {
  require(step > 0.0, ErrorCode::InvalidArgument, "integration step must be > 0");
  auto half = [&](double length, double dir) {
    const auto n = static_cast<long>(std::ceil(length / step));
    const double h = length / static_cast<double>(n);
    double acc = 0.0;
    for (long i = 0; i <= n; ++i) {
      const double s = static_cast<double>(i) * h;
      const double wgt = (i == 0 || i == n) ? 0.5 : 1.0;
      acc += wgt * gradient(seq.pi_pulse_time + dir * s - seq.sync_offset);
    }
    return acc * h;
  };
  const double first = half(seq.pi_pulse_time, -1.0);
  const double second = half(seq.total_time - seq.pi_pulse_time, +1.0);
  return kGammaAngular * (x_nm / kNmPerUm) * (first - second);
}

/// Signal and mean photon counts. The bright level is fixed at beta; a
/// pi-pulse fidelity below one scales the contrast.
inline EchoSignal echo_signal(const NvCenter& nv, double phase, const EchoSequence& seq) {
  EchoSignal s;
  s.phase = phase;
  s.coherence_envelope = std::exp(-std::pow(seq.total_time / nv.t2, nv.stretch_p));
  s.expected_signal = s.coherence_envelope * std::cos(phase);
  const double alpha = nv.contrast_alpha * seq.pi_pulse_fidelity;
  s.expected_counts = nv.yield_beta * (1.0 + alpha * s.expected_signal) / (1.0 + alpha);
  return s;
}

/// Inverse of the count model in echo_signal.
inline double counts_to_signal(double counts, const NvCenter& nv, const EchoSequence& seq) {
  const double alpha = nv.contrast_alpha * seq.pi_pulse_fidelity;
  if (alpha == 0.0) return 0.0;
  return ((1.0 + alpha) * counts / nv.yield_beta - 1.0) / alpha;
}

struct CountSample {
  double mean = 0.0;        // photons per shot
  double std_error = 0.0;   // of the mean
};

/// 64-bit mixer used to derive independent per-point seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                    std::uint64_t index) {
  return splitmix64(splitmix64(seed ^ splitmix64(stream)) + index);
}

/// Shot-noise average over `shots` Poisson readouts. The per-shot counts
/// are summed exactly (a sum of Poisson draws is Poisson with the summed
/// mean) and the error uses the Poisson variance estimate mean/shots.
inline CountSample sample_counts(double expected_counts, long long shots, std::uint64_t seed) {
  require(shots >= 1, ErrorCode::InvalidArgument, "shots must be >= 1");
  require(expected_counts >= 0.0, ErrorCode::InvalidArgument, "expected counts must be >= 0");
  CountSample out;
  if (expected_counts == 0.0) return out;
  std::mt19937_64 rng(seed);
  const double n = static_cast<double>(shots);
  std::poisson_distribution<long long> law(expected_counts * n);
  const double total = static_cast<double>(law(rng));
  out.mean = total / n;
  out.std_error = std::sqrt(out.mean / n);
  return out;
}

/// Phase error phi(dt) - phi(0) from a MW/MFG timing offset dt (us).
inline double sync_error_phase_distortion(const EchoSequence& seq, const GradientWaveform& wf,
                                          const NvCenter& nv, double peak_gradient) {
  EchoSequence aligned = seq;
  aligned.sync_offset = 0.0;
  return echo_phase(nv, peak_gradient, seq, wf) - echo_phase(nv, peak_gradient, aligned, wf);
}

}  // namespace nvfim
