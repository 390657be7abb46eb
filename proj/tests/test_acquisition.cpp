#include "nvfim/acquisition.hpp"
#include "nvfim/reconstruction.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <vector>

using namespace nvfim;

namespace {

constexpr double kPi = std::numbers::pi;

AcquisitionPlan reference_plan() {
  AcquisitionPlan p;
  p.i_max = 10.0;
  p.n_points = 2048;
  p.sequence = EchoSequence::symmetric(500.0);
  p.waveform_template.shape = WaveformShape::Sine;
  p.waveform_template.period = 250.0;
  p.waveform_template.active_fraction = active_fraction_for_efficiency(WaveformShape::Sine, 0.5003);
  p.gradient_per_mA = 0.326;
  p.shot_noise = false;
  return p;
}

NvCenter nv_at(double x_nm) {
  NvCenter nv;
  nv.x_nm = x_nm;
  return nv;
}

MicrowireModel some_wire() {
  MicrowireModel w;
  w.anchor_point = Vec3(0, 0, 1.5);
  w.current = 1.0;
  return w;
}

}  // namespace

TEST(KOfCurrent, RectangularFullDuty) {
  auto p = reference_plan();
  p.waveform_template.shape = WaveformShape::Rectangular;
  p.waveform_template.active_fraction = 1.0;
  EXPECT_NEAR(k_of_current(p, 10.0), 4.564, 1e-12);
}

TEST(KOfCurrent, ReferenceEndpoint) {
  const auto p = reference_plan();
  EXPECT_NEAR(k_of_current(p, 10.0), 2.2834, 0.0001);
  EXPECT_EQ(k_of_current(p, 0.0), 0.0);
}

TEST(KOfCurrent, MissingCalibration) {
  auto p = reference_plan();
  p.gradient_per_mA.reset();
  try {
    k_of_current(p, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingCalibration);
  }
  EXPECT_NEAR(k_of_current(p, 10.0, 0.326), 2.2834, 0.0001);
}

TEST(KOfCurrent, HalfDutyRectangularHalvesK) {
  auto p = reference_plan();
  p.waveform_template.shape = WaveformShape::Rectangular;
  p.waveform_template.active_fraction = 0.5;
  EXPECT_NEAR(k_of_current(p, 10.0), 4.564 / 2.0, 1e-12);
}

TEST(RunSweep, NoiselessMatchesCosinePointwise) {
  const auto p = reference_plan();
  NvCenter nv = nv_at(100.0);
  nv.t2 = 1e300;
  const auto rec = run_sweep(p, nv, some_wire());
  ASSERT_EQ(rec.size(), 2048u);
  for (std::size_t i = 0; i < rec.size(); ++i)
    EXPECT_NEAR(rec.signals[i], std::cos(2.0 * kPi * rec.k_values[i] * 100.0), 1e-12) << i;
}

TEST(RunSweep, NoiselessIncludesEnvelope) {
  const auto p = reference_plan();
  const NvCenter nv = nv_at(37.0);
  const auto rec = run_sweep(p, nv, some_wire());
  const double env = std::exp(-500.0 / nv.t2);
  for (std::size_t i = 0; i < rec.size(); i += 17)
    EXPECT_NEAR(rec.signals[i], env * std::cos(2.0 * kPi * rec.k_values[i] * 37.0), 1e-12);
}

TEST(RunSweep, KAxisExactlyLinear) {
  const auto rec = run_sweep(reference_plan(), nv_at(10.0), some_wire());
  const double step = rec.metadata.k_step;
  EXPECT_NEAR(rec.k_values.back(), 2.2834, 0.0001);
  for (std::size_t i = 0; i < rec.size(); ++i) {
    EXPECT_NEAR(rec.k_values[i], step * static_cast<double>(i), 1e-15 * rec.k_values.back());
    if (i) {
      EXPECT_GT(rec.k_values[i], rec.k_values[i - 1]);
    }
  }
  EXPECT_NEAR(rec.k_per_mA() * 10.0, rec.k_values.back(), 1e-14);
}

TEST(RunSweep, StrideMaskKValues) {
  auto p = reference_plan();
  p.mask = make_undersampling_mask(p.n_points, StrideSampling{4});
  const auto full = run_sweep(reference_plan(), nv_at(5.0), some_wire());
  const auto rec = run_sweep(p, nv_at(5.0), some_wire());
  ASSERT_EQ(rec.size(), p.n_points / 4);
  for (std::size_t i = 0; i < rec.size(); ++i) {
    EXPECT_EQ(rec.k_values[i], full.k_values[4 * i]);
    EXPECT_EQ(rec.signals[i], full.signals[4 * i]);
  }
}

TEST(RunSweep, GradientFromWireWhenUncalibrated) {
  auto p = reference_plan();
  p.gradient_per_mA.reset();
  p.nv_axis = NvAxis::from(Vec3(std::sqrt(2.0 / 3.0), 0.0, std::sqrt(1.0 / 3.0)));
  MicrowireModel w;
  w.anchor_point = Vec3(0.0, 0.0, std::sqrt(2.0 * std::sqrt(1.0 / 3.0) / 0.326));
  w.current = 1.0;
  w.polarity = -1;
  const auto rec = run_sweep(p, nv_at(1.0), w);
  EXPECT_NEAR(rec.metadata.gradient_per_mA, 0.326, 1e-12);
}

TEST(RunSweep, ShortEchoGivesCosineInCurrent) {
  auto p = reference_plan();
  p.sequence = EchoSequence::symmetric(21.0);
  p.waveform_template.period = 10.5;
  p.n_points = 201;
  p.shot_noise = true;
  p.shots_per_point = 1'000'000;
  const auto rec = run_sweep(p, nv_at(40.0), some_wire());
  const auto fit = fit_cosine(rec);
  EXPECT_NEAR(fit.implied_position, 40.0, 0.5);
}

TEST(RunSweep, DeterministicUnderSeed) {
  auto p = reference_plan();
  p.shot_noise = true;
  p.drift.random_walk_sigma = 0.1;
  p.current_noise.white_sigma = 0.01;
  p.n_points = 256;
  const auto a = run_sweep(p, nv_at(3.0), some_wire());
  const auto b = run_sweep(p, nv_at(3.0), some_wire());
  EXPECT_TRUE(a == b);
  p.seed = 2;
  EXPECT_FALSE(a == run_sweep(p, nv_at(3.0), some_wire()));
}

TEST(RunSweep, ParallelBitwiseEqualsSequential) {
  auto p = reference_plan();
  p.shot_noise = true;
  p.current_noise.white_sigma = 0.02;
  p.drift.random_walk_sigma = 0.5;
  const auto seq = run_sweep(p, nv_at(3.0), some_wire(), 1);
  for (unsigned t : {2u, 3u, 8u}) EXPECT_TRUE(seq == run_sweep(p, nv_at(3.0), some_wire(), t));
}

TEST(RunSweep, PointValuesIndependentOfMask) {
  // Per-point shot noise is keyed on the grid index, so a masked sweep
  // reproduces the same draws as the full sweep at shared indices.
  auto p = reference_plan();
  p.shot_noise = true;
  p.n_points = 400;
  const auto full = run_sweep(p, nv_at(2.0), some_wire());
  p.mask = {3, 10, 11, 200, 399};
  const auto part = run_sweep(p, nv_at(2.0), some_wire());
  for (std::size_t i = 0; i < p.mask.size(); ++i)
    EXPECT_EQ(part.signals[i], full.signals[p.mask[i]]);
}

TEST(RunSweep, ShotNoiseErrorBars) {
  auto p = reference_plan();
  p.shot_noise = true;
  p.n_points = 64;
  const NvCenter nv = nv_at(10.0);
  const auto rec = run_sweep(p, nv, some_wire());
  // Signal error ~ sqrt(beta/shots)(1+alpha)/(alpha beta)
  const double expect = std::sqrt(0.02 / 1e6) * 1.08 / (0.08 * 0.02);
  for (double e : rec.errors) EXPECT_NEAR(e, expect, 0.1 * expect);
}

TEST(RunSweep, Timestamps) {
  auto p = reference_plan();
  p.n_points = 10;
  p.shots_per_point = 3600;
  p.readout_overhead = 500.0;
  const auto rec = run_sweep(p, nv_at(1.0), some_wire());
  const double dt = 3600.0 * 1000e-6 / 3600.0;
  for (std::size_t i = 0; i < rec.size(); ++i) EXPECT_NEAR(rec.t_hours[i], i * dt, 1e-15);
}

TEST(RunSweep, InvalidPlan) {
  auto p = reference_plan();
  p.mask = {3, 2};
  EXPECT_THROW(run_sweep(p, nv_at(1.0), some_wire()), Error);
  p.mask = {5000};
  EXPECT_THROW(run_sweep(p, nv_at(1.0), some_wire()), Error);
  p = reference_plan();
  p.i_max = 0.0;
  EXPECT_THROW(run_sweep(p, nv_at(1.0), some_wire()), Error);
}

TEST(ApplyDrift, Examples) {
  DriftModel d;
  for (double t : {0.0, 1.0, 50.0}) EXPECT_EQ(apply_drift(d, t, 3), 0.0);
  d.linear_rate = 0.1;
  EXPECT_NEAR(apply_drift(d, 10.0, 3), 1.0, 1e-15);
  EXPECT_THROW(apply_drift(d, -1.0, 3), Error);
}

TEST(ApplyDrift, TemperatureTerm) {
  DriftModel d;
  d.temperature_coupling = 2.0;
  EXPECT_NEAR(apply_drift(d, 6.0, 0), 2.0 * 0.25, 1e-15);
  EXPECT_NEAR(apply_drift(d, 12.0, 0), 0.0, 1e-12);
}

TEST(ApplyDrift, RandomWalkVarianceGrowsLinearly) {
  DriftModel d;
  d.random_walk_sigma = 0.3;
  const std::vector<double> times{1.0, 2.0, 4.0, 8.0};
  std::vector<double> var(times.size(), 0.0);
  const int seeds = 1000;
  for (int s = 0; s < seeds; ++s) {
    const auto x = drift_trajectory(d, times, static_cast<std::uint64_t>(s));
    for (std::size_t i = 0; i < times.size(); ++i) var[i] += x[i] * x[i] / seeds;
  }
  // Regression of variance on t through the origin: slope sigma^2.
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    sxy += times[i] * var[i];
    sxx += times[i] * times[i];
  }
  EXPECT_NEAR(sxy / sxx, 0.09, 0.09 * 0.15);
  for (std::size_t i = 0; i < times.size(); ++i)
    EXPECT_NEAR(var[i] / times[i], 0.09, 0.09 * 0.2);
}

TEST(ApplyDrift, Deterministic) {
  DriftModel d;
  d.random_walk_sigma = 1.0;
  EXPECT_EQ(apply_drift(d, 3.0, 42), apply_drift(d, 3.0, 42));
  EXPECT_NE(apply_drift(d, 3.0, 42), apply_drift(d, 3.0, 43));
}

TEST(DriftModel, RejectsNegative) {
  DriftModel d;
  d.linear_rate = -1.0;
  EXPECT_THROW(d.validate(), Error);
}

TEST(Mask, Full) {
  const auto m = make_undersampling_mask(100, FullSampling{});
  ASSERT_EQ(m.size(), 100u);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(m[i], i);
}

TEST(Mask, Stride) {
  const auto m = make_undersampling_mask(100, StrideSampling{4});
  ASSERT_EQ(m.size(), 25u);
  EXPECT_EQ(m.front(), 0u);
  EXPECT_EQ(m.back(), 96u);
}

TEST(Mask, Blocks) {
  const auto m = make_undersampling_mask(1000, BlockSampling{5, 20});
  ASSERT_EQ(m.size(), 100u);
  int runs = 1;
  for (std::size_t i = 1; i < m.size(); ++i) {
    ASSERT_GT(m[i], m[i - 1]);
    if (m[i] != m[i - 1] + 1) ++runs;
  }
  EXPECT_EQ(runs, 5);
  EXPECT_EQ(m.front(), 0u);
  EXPECT_EQ(m.back(), 999u);
}

TEST(Mask, Errors) {
  EXPECT_THROW(make_undersampling_mask(0, FullSampling{}), Error);
  try {
    make_undersampling_mask(100, BlockSampling{0, 10});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyMask);
  }
  EXPECT_THROW(make_undersampling_mask(100, BlockSampling{11, 10}), Error);
  EXPECT_THROW(make_undersampling_mask(100, StrideSampling{0}), Error);
}

TEST(CurrentNoise, SinusoidalModulationShiftsPhase) {
  auto p = reference_plan();
  p.n_points = 101;
  p.current_noise.relative_amplitude = 0.05;
  p.current_noise.modulation_frequency = 1.0;
  NvCenter nv = nv_at(50.0);
  nv.t2 = 1e300;
  const auto rec = run_sweep(p, nv, some_wire());
  for (std::size_t j = 0; j < rec.size(); ++j) {
    const double u = static_cast<double>(j) / 100.0;
    const double k = rec.k_values[j] * (1.0 + 0.05 * std::sin(2.0 * kPi * u));
    EXPECT_NEAR(rec.signals[j], std::cos(2.0 * kPi * k * 50.0), 1e-11);
  }
}
