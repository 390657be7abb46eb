#include "nvfim/metrology.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace nvfim;

TEST(PixelResolution, Examples) {
  EXPECT_NEAR(pixel_resolution(2.2834), 0.2190, 0.00005);
  EXPECT_DOUBLE_EQ(pixel_resolution(1.0), 0.5);
  try {
    pixel_resolution(0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
  }
  EXPECT_THROW(pixel_resolution(-1.0), Error);
}

TEST(PixelResolution, StrictlyDecreasing) {
  double prev = pixel_resolution(1e-3);
  for (double k = 2e-3; k < 100.0; k *= 1.37) {
    const double p = pixel_resolution(k);
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(Sensitivity, ReferenceNumbers) {
  const auto r = sensitivity(0.08, 0.02, 0.06, 500.0);
  // Oracle written out in SI: 0.06 / (2 * 2 pi * 2.8e6 Hz/G * 500e-6 s * 0.0016) G, 1 G = 100 uT.
  const double eta_si = 0.06 / (2.0 * 2.0 * std::numbers::pi * 2.8e6 * 500e-6 * 0.08 * 0.02) * 100.0;
  EXPECT_NEAR(r.eta, eta_si, 1e-12 * eta_si);
  EXPECT_NEAR(r.eta, 0.213, 0.0005);
  EXPECT_NEAR(r.eta, 0.2, 0.02);
  EXPECT_EQ(r.convention, EvolutionTimeConvention::Total);
  EXPECT_DOUBLE_EQ(r.slope_time, 500.0);
}

TEST(Sensitivity, HalfConventionDoublesEta) {
  const auto t = sensitivity(0.08, 0.02, 0.06, 500.0, EvolutionTimeConvention::Total);
  const auto h = sensitivity(0.08, 0.02, 0.06, 500.0, EvolutionTimeConvention::Half);
  EXPECT_NEAR(h.eta, 2.0 * t.eta, 1e-15);
  EXPECT_DOUBLE_EQ(h.slope_time, 250.0);
}

TEST(Sensitivity, Scaling) {
  const auto a = sensitivity(0.08, 0.02, 0.06, 500.0);
  EXPECT_NEAR(sensitivity(0.08, 0.02, 0.06, 1000.0).eta, a.eta / 2.0, 1e-15);
  EXPECT_NEAR(sensitivity(0.08, 0.02, 0.12, 500.0).eta, a.eta * 2.0, 1e-15);
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  for (int i = 0; i < 200; ++i) {
    const double sa = u(rng), sb = u(rng), st = u(rng);
    const auto r = sensitivity(0.08 * sa, 0.02 * sb, 0.06, 500.0 * st);
    EXPECT_NEAR(r.eta * sa * sb * st, a.eta, 1e-12 * a.eta);
  }
}

TEST(Sensitivity, RejectsNonpositive) {
  EXPECT_THROW(sensitivity(0.0, 0.02, 0.06, 500.0), Error);
  EXPECT_THROW(sensitivity(0.08, -0.02, 0.06, 500.0), Error);
  EXPECT_THROW(sensitivity(0.08, 0.02, 0.0, 500.0), Error);
  EXPECT_THROW(sensitivity(0.08, 0.02, 0.06, 0.0), Error);
}

TEST(Deviation, Examples) {
  EXPECT_NEAR(deviation_after_averaging(0.2, 1'000'000, 500.0), 0.2 / std::sqrt(500.0) * 1000.0,
              1e-12);
  EXPECT_NEAR(deviation_after_averaging(0.2, 1'000'000, 500.0), 8.94, 0.005);
  EXPECT_NEAR(deviation_after_averaging(0.37, 1, 1e6), 370.0, 1e-10);
  EXPECT_NEAR(deviation_after_averaging(0.2, 4'000'000, 500.0),
              deviation_after_averaging(0.2, 1'000'000, 500.0) / 2.0, 1e-12);
  EXPECT_THROW(deviation_after_averaging(0.2, 0, 500.0), Error);
  EXPECT_THROW(deviation_after_averaging(0.2, 10, 0.0), Error);
  EXPECT_THROW(deviation_after_averaging(0.0, 10, 1.0), Error);
}

TEST(Deviation, ReferenceChain) {
  const auto r = with_averaging(sensitivity(0.08, 0.02, 0.06, 500.0), 1'000'000, 500.0);
  EXPECT_NEAR(r.total_time, 500.0, 1e-9);
  EXPECT_NEAR(r.deviation, r.eta * 1000.0 / std::sqrt(r.total_time), 1e-12);
  EXPECT_NEAR(r.deviation, 9.0, 0.9);
}

TEST(Deviation, MonotoneInEveryParameter) {
  auto dev = [](double a, double b, double t, long long n) {
    return with_averaging(sensitivity(a, b, 0.06, t), n, t).deviation;
  };
  const double base = dev(0.08, 0.02, 500.0, 1000);
  EXPECT_LT(dev(0.09, 0.02, 500.0, 1000), base);
  EXPECT_LT(dev(0.08, 0.03, 500.0, 1000), base);
  EXPECT_LT(dev(0.08, 0.02, 600.0, 1000), base);
  EXPECT_LT(dev(0.08, 0.02, 500.0, 1001), base);
}

TEST(EmpiricalResolution, Examples) {
  const auto r = empirical_resolution(0.28, 2.2834);
  EXPECT_NEAR(r.fwhm_over_pixel, 1.279, 0.0005);
  const double pixel = pixel_resolution(2.2834);
  EXPECT_DOUBLE_EQ(empirical_resolution(pixel, 2.2834).fwhm_over_pixel, 1.0);
}
