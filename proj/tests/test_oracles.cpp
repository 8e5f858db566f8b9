#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cpgrating/oracles.hpp"

using namespace cpgrating;
using namespace cpgrating::oracle;

namespace {

Frequency real_k(double k) { return Frequency::real_axis(k * si::c); }
Frequency imag_k(double k) { return Frequency::imaginary_axis(k * si::c); }

}  // namespace

TEST(FresnelSlab, VacuumSlabDoesNotReflect) {
  for (auto s : {Polarization::E, Polarization::H}) {
    const auto f = fresnel_slab(s, 0.4e6, real_k(1e6), SlabConfig::constant(1.0, 1e-6));
    EXPECT_LT(std::abs(f.r), 1e-15);
    EXPECT_LT(std::abs(f.t - 1.0), 1e-15);
  }
}

TEST(FresnelSlab, ZeroThickness) {
  for (auto s : {Polarization::E, Polarization::H}) {
    const auto f = fresnel_slab(s, 0.4e6, imag_k(1e6), SlabConfig::constant(7.0, 0.0));
    EXPECT_LT(std::abs(f.r), 1e-15);
    EXPECT_LT(std::abs(f.t - 1.0), 1e-15);
  }
}

TEST(FresnelSlab, QuarterWaveMaximum) {
  const double n = 2.0, k0 = 1e7;
  const double h = kPi / (2.0 * n * k0);
  const double expected = (n * n - 1.0) / (n * n + 1.0);
  for (auto s : {Polarization::E, Polarization::H}) {
    const auto f = fresnel_slab(s, 0.0, real_k(k0), SlabConfig::constant(n * n, h));
    EXPECT_NEAR(std::abs(f.r), expected, 1e-12);
  }
  const auto half = fresnel_slab(Polarization::E, 0.0, real_k(k0), SlabConfig::constant(4.0, 2 * h));
  EXPECT_LT(std::abs(half.r), 1e-12);
}

TEST(FresnelSlab, HalfSpaceLimit) {
  // thick absorbing slab -> single interface
  const cdouble eps(4.0, 2.0);
  const double k0 = 1e7;
  const auto f = fresnel_slab(Polarization::E, 0.0, real_k(k0), SlabConfig::constant(eps, 1e-3));
  const cdouble n = std::sqrt(eps);
  EXPECT_LT(std::abs(f.r - (1.0 - n) / (1.0 + n)), 1e-12);
}

TEST(FresnelSlab, LosslessFluxConservation) {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const double k0 = 1e6 * (1.0 + 9.0 * u(rng));
    const double kpar = 0.95 * k0 * u(rng);
    const auto slab = SlabConfig::constant(1.0 + 10.0 * u(rng), 1e-6 * u(rng));
    for (auto s : {Polarization::E, Polarization::H}) {
      const auto f = fresnel_slab(s, kpar, real_k(k0), slab);
      EXPECT_LE(std::abs(f.r), 1.0 + 1e-12);
      EXPECT_NEAR(std::norm(f.r) + std::norm(f.t), 1.0, 1e-10);
    }
  }
}

TEST(FresnelSlab, ImaginaryAxisIsRealAndBounded) {
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const auto slab = SlabConfig{DrudeModel{1.37e16, 5.3e13}, 1e-8 + 1e-6 * u(rng)};
    const double xi_c = 1e5 + 1e7 * u(rng);
    for (auto s : {Polarization::E, Polarization::H}) {
      const cdouble r = fresnel_slab_r(s, 2e7 * u(rng), imag_k(xi_c), slab);
      EXPECT_LT(std::abs(r.imag()), 1e-14);
      EXPECT_LE(std::abs(r), 1.0);
    }
  }
}

TEST(FresnelBlock, NormalPlaneHasNoCrossCoupling) {
  const auto b = fresnel_slab_block(0.6e6, 0.0, real_k(1e6), SlabConfig::constant(3.0, 1e-7));
  EXPECT_LT(std::abs(b.R(0, 1)), 1e-15);
  EXPECT_LT(std::abs(b.R(1, 0)), 1e-15);
}

TEST(PlanarGreen, VacuumSlabVanishes) {
  const auto g = planar_green(1e-6, 1e14, SlabConfig::constant(1.0, 1e-6));
  EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
}

TEST(PlanarGreen, NearMirrorNonRetardedLimit) {
  // xi -> 0 above a perfect conductor: xi^2 G_yy = 2 xi^2 G_xx = -c^2 / (16 pi y^3)
  const double y = 1e-9, xi = 1e12;
  const auto g = planar_green_xi2(y, xi, SlabConfig::constant(1e12, 1e-3));
  const double expected = -si::c * si::c / (16.0 * kPi * y * y * y);
  EXPECT_NEAR(g(1) / expected, 1.0, 1e-3);
  EXPECT_NEAR(g(0) / expected, 0.5, 1e-3);
  EXPECT_EQ(g(0), g(2));
}

TEST(PlanarCp, PerfectMirrorRetardedLimit) {
  const double y = 20e-6;
  const auto atom = presets::rubidium();
  const auto u = planar_cp(y, atom, SlabConfig::constant(1e10, 1e-3));
  const double ref = perfect_mirror_cp(y, polarizability_at(atom, 0.0)(0, 0));
  EXPECT_LT(u.U_total, 0.0);
  EXPECT_NEAR(u.U_total / ref, 1.0, 0.02);
}

TEST(PlanarCp, ZeroPolarizability) {
  const auto u = planar_cp(1e-7, PolarizabilityTensor{}, SlabConfig::constant(4.0, 1e-7));
  EXPECT_EQ(u.U_total, 0.0);
}

TEST(PlanarCp, NormalComponentDominatesAndDecays) {
  const auto slab = SlabConfig{presets::gold_drude(), 20e-9};
  const auto atom = presets::rubidium();
  const auto a = planar_cp(300e-9, atom, slab);
  const auto b = planar_cp(600e-9, atom, slab);
  EXPECT_EQ(a.U_xx, a.U_zz);
  EXPECT_LT(a.U_yy, a.U_xx);
  EXPECT_LT(a.U_total, b.U_total);
  EXPECT_LT(b.U_total, 0.0);
}

TEST(BruteFourier, MatchesClosedForm) {
  const GratingSpec g{4e-6, 20e-9, 1.3e-6, 0.37e-6, presets::gold_drude()};
  const Frequency w = Frequency::imaginary_axis(3e14);
  for (int n = -6; n <= 6; ++n) {
    const cdouble brute = brute_fourier_eps(g, w, n);
    const cdouble closed = fourier_eps_coefficient(g, w, n);
    EXPECT_LT(std::abs(brute - closed), 1e-10 * std::max(1.0, std::abs(closed))) << n;
  }
}

TEST(BruteFourier, HalfPeriodShiftAlternatesSign) {
  const GratingSpec a{1.0, 0.1, 0.3, 0.0, ConstantPermittivity{5.0}};
  GratingSpec b = a;
  b.x0 = 0.5;
  const Frequency w = real_k(1.0);
  for (int n = 1; n <= 5; ++n) {
    const double sign = n % 2 == 0 ? 1.0 : -1.0;
    EXPECT_LT(std::abs(brute_fourier_eps(b, w, n) - sign * brute_fourier_eps(a, w, n)), 1e-12);
  }
}
