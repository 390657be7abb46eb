#pragma once

// Resolution and magnetometry figures of merit.

#include "nvfim/common.hpp"
#include "nvfim/reconstruction.hpp"

#include <cmath>
#include <string>

namespace nvfim {

inline double pixel_resolution(double k_max) {
  require(k_max > 0.0, ErrorCode::InvalidArgument, "k_max must be > 0");
  return 1.0 / (2.0 * k_max);
}

/// Which time enters the maximum-slope formula (2 gamma T alpha beta)^-1.
/// Total uses the whole echo 2 tau and is the default; Half uses tau.
enum class EvolutionTimeConvention { Total, Half };

inline std::string to_string(EvolutionTimeConvention c) {
  return c == EvolutionTimeConvention::Total ? "total" : "half";
}

struct SensitivityReport {
  double slope_inverse = 0.0;  // |dB/dS|_max, G
  double eta = 0.0;            // uT / sqrt(Hz)
  double sigma_s = 0.0;        // Hz^1/2
  double alpha = 0.0;
  double beta = 0.0;
  double evolution_time = 0.0;  // us, as supplied (2 tau)
  double slope_time = 0.0;      // us, the time that entered the slope
  EvolutionTimeConvention convention = EvolutionTimeConvention::Total;
  long long n_averages = 0;
  double total_time = 0.0;  // s
  double deviation = 0.0;   // nT
};

inline SensitivityReport sensitivity(double alpha, double beta, double sigma_s,
                                     double evolution_time_us,
                                     EvolutionTimeConvention convention =
                                         EvolutionTimeConvention::Total) {
  require(alpha > 0.0, ErrorCode::InvalidArgument, "alpha must be > 0");
  require(beta > 0.0, ErrorCode::InvalidArgument, "beta must be > 0");
  require(sigma_s > 0.0, ErrorCode::InvalidArgument, "sigma_s must be > 0");
  require(evolution_time_us > 0.0, ErrorCode::InvalidArgument, "evolution time must be > 0");
  SensitivityReport r;
  r.alpha = alpha;
  r.beta = beta;
  r.sigma_s = sigma_s;
  r.evolution_time = evolution_time_us;
  r.convention = convention;
  r.slope_time =
      convention == EvolutionTimeConvention::Total ? evolution_time_us : evolution_time_us / 2.0;
  // gamma in rad/(us G), time in us: the product is per gauss.
  r.slope_inverse = 1.0 / (2.0 * kGammaAngular * r.slope_time * alpha * beta);
  r.eta = r.slope_inverse * sigma_s * kMicroTeslaPerGauss;
  return r;
}

/// Field deviation (nT) after n_averages repetitions of a sequence_time_us
/// long sequence.
inline double deviation_after_averaging(double eta, long long n_averages, double sequence_time_us) {
  require(eta > 0.0, ErrorCode::InvalidArgument, "eta must be > 0");
  require(n_averages > 0, ErrorCode::InvalidArgument, "n_averages must be > 0");
  require(sequence_time_us > 0.0, ErrorCode::InvalidArgument, "sequence time must be > 0");
  const double seconds = static_cast<double>(n_averages) * sequence_time_us * kSecondsPerMicrosecond;
  return eta / std::sqrt(seconds) * kNanoTeslaPerMicroTesla;
}

inline SensitivityReport with_averaging(SensitivityReport r, long long n_averages,
                                        double sequence_time_us) {
  r.n_averages = n_averages;
  r.total_time = static_cast<double>(n_averages) * sequence_time_us * kSecondsPerMicrosecond;
  r.deviation = deviation_after_averaging(r.eta, n_averages, sequence_time_us);
  return r;
}

struct ResolutionReport {
  double fwhm = 0.0;
  double pixel = 0.0;
  double fwhm_over_pixel = 0.0;
};

inline ResolutionReport empirical_resolution(double fwhm, double k_max) {
  ResolutionReport r;
  r.fwhm = fwhm;
  r.pixel = pixel_resolution(k_max);
  r.fwhm_over_pixel = fwhm / r.pixel;
  return r;
}

inline ResolutionReport empirical_resolution(const PeakFit& fit, const RealSpaceProfile& profile) {
  return empirical_resolution(fit.fwhm, profile.k_max);
}

}  // namespace nvfim
