#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "cpgrating/cp_potential.hpp"
#include "cpgrating/oracles.hpp"

using namespace cpgrating;

namespace {

GratingSpec metal_grating(double x0 = 0.0) {
  return {1e-6, 100e-9, 0.4e-6, x0, DrudeModel{1.37e16, 5.3e13}};
}

CpQuadrature coarse(int N = 4) {
  CpQuadrature q;
  q.xi.nodes = 16;
  q.green.kx_nodes = 8;
  q.green.kz_nodes = 16;
  q.green.trunc = Truncation{N};
  return q;
}

CpOptions no_estimate() {
  CpOptions o;
  o.error_estimate = false;
  o.threads = 1;
  return o;
}

}  // namespace

TEST(CpPotential, ZeroPolarizabilityGivesZero) {
  const auto r = cp_potential(0.0, 300e-9, PolarizabilityTensor{}, metal_grating(), coarse());
  EXPECT_EQ(r.U_total, 0.0);
  EXPECT_EQ(r.U_xx, 0.0);
  EXPECT_EQ(r.error_estimate, 0.0);
}

TEST(CpPotential, VacuumGratingGivesZero) {
  GratingSpec g = metal_grating();
  g.h = 0.0;
  const auto r = cp_potential(0.0, 300e-9, presets::rubidium(), g, coarse());
  EXPECT_EQ(r.U_total, 0.0);
}

TEST(CpPotential, InvalidInputThrows) {
  EXPECT_THROW(cp_potential(0.0, 0.0, presets::rubidium(), metal_grating(), coarse()),
               ConfigError);
  CpQuadrature q = coarse();
  q.xi.nodes = 5;
  EXPECT_THROW(cp_potential(0.0, 1e-7, presets::rubidium(), metal_grating(), q), ConfigError);
  GratingSpec g = metal_grating();
  g.w = 2.0 * g.d;
  EXPECT_THROW(cp_potential(0.0, 1e-7, presets::rubidium(), g, coarse()), ConfigError);
  EXPECT_THROW(cp_integrand(0.0, 1e-7, 0.0, 0.0, 0.0, metal_grating(), Truncation{2}),
               ConfigError);
}

TEST(CpKernel, RealWithKzParity) {
  const auto g = metal_grating();
  const double y = 300e-9, xi = si::c / (2.0 * y);
  for (double kx : {0.0, 0.2 * g.q(), -0.45 * g.q()}) {
    const auto a = cp_integrand(0.1e-6, y, xi, kx, 2e6, g, Truncation{4});
    const auto b = cp_integrand(0.1e-6, y, xi, kx, -2e6, g, Truncation{4});
    EXPECT_LT((a.value.diagonal() - b.value.diagonal()).norm(), 1e-10 * a.value.norm());
  }
  // without kz the E/H blocks decouple and a single node is already real
  for (double kx : {0.0, 0.3 * g.q()}) {
    const auto flat = cp_integrand(0.0, y, xi, kx, 0.0, g, Truncation{4});
    EXPECT_LT(flat.imag_residue, 1e-12);
    EXPECT_LT(flat.value(1, 1), 0.0);
  }
}

TEST(CpKernel, SpecularOnlyAtKzZeroHasNoPolarizationMixing) {
  // with kz = 0 the E and H blocks decouple, so a full-fill slab kernel is diagonal
  const GratingSpec slab{1e-6, 100e-9, 1e-6, 0.0, ConstantPermittivity{5.0}};
  const auto k = cp_integrand(0.0, 300e-9, 5e14, 0.3e6, 0.0, slab, Truncation{3});
  EXPECT_LT(std::abs(k.value(0, 1)) + std::abs(k.value(1, 2)) + std::abs(k.value(0, 2)),
            1e-10 * k.value.norm());
}

TEST(CpPotential, FullFillMatchesPlanarSlab) {
  const double y = 250e-9;
  const GratingSpec g{4.0 * y, 100e-9, 4.0 * y, 0.0, ConstantPermittivity{6.0}};
  CpQuadrature q;
  q.green.trunc = Truncation{8};
  const auto r = cp_potential(0.1 * g.d, y, presets::rubidium(), g, q, no_estimate());
  const auto ref = oracle::planar_cp(y, presets::rubidium(), {g.material, g.h});
  EXPECT_NEAR(r.U_total / ref.U_total, 1.0, 1e-3);
  EXPECT_NEAR(r.U_yy / ref.U_yy, 1.0, 1e-3);
  EXPECT_NEAR(r.U_xx / ref.U_xx, 1.0, 1e-3);
}

TEST(CpPotential, AttractiveAndComponentsSum) {
  const auto r = cp_potential(0.2e-6, 300e-9, presets::rubidium(), metal_grating(), coarse(),
                              no_estimate());
  EXPECT_LT(r.U_total, 0.0);
  EXPECT_LT(r.U_xx, 0.0);
  EXPECT_LT(r.U_yy, 0.0);
  EXPECT_LT(r.U_zz, 0.0);
  EXPECT_DOUBLE_EQ(r.U_total, r.U_xx + r.U_yy + r.U_zz);
  EXPECT_EQ(r.mode, "full");
  EXPECT_EQ(r.truncation, 4);
}

TEST(CpPotential, AnisotropicAtomPicksOneComponent) {
  const auto iso = cp_potential(0.0, 300e-9, presets::rubidium(), metal_grating(), coarse(),
                                no_estimate());
  const auto along_y =
      cp_potential(0.0, 300e-9, PolarizabilityTensor::along(Axis::y, {presets::rubidium_oscillator()}),
                   metal_grating(), coarse(), no_estimate());
  EXPECT_EQ(along_y.U_xx, 0.0);
  EXPECT_EQ(along_y.U_zz, 0.0);
  EXPECT_NEAR(along_y.U_yy / iso.U_yy, 1.0, 1e-12);
}

TEST(CpPotential, SmallPeriodIsLateralIndependent) {
  const auto a = cp_small_period(300e-9, presets::rubidium(), metal_grating(), coarse(),
                                 no_estimate(), 0.0);
  const auto b = cp_small_period(300e-9, presets::rubidium(), metal_grating(), coarse(),
                                 no_estimate(), 0.37e-6);
  EXPECT_EQ(a.U_total, b.U_total);
  EXPECT_EQ(a.mode, "small");
  EXPECT_DOUBLE_EQ(b.x, 0.37e-6);
}

TEST(CpPotential, LateralProfilePeriodicAndSymmetric) {
  const auto g = metal_grating();
  const std::vector<double> xs{-0.3e-6, 0.0, 0.3e-6, 0.7e-6, 1.0e-6};
  const auto p = lateral_profile(250e-9, xs, presets::rubidium(), g, coarse(), no_estimate());
  ASSERT_EQ(p.size(), xs.size());
  EXPECT_NEAR(p[0].U_total / p[2].U_total, 1.0, 1e-10);  // mirror
  EXPECT_NEAR(p[0].U_total / p[3].U_total, 1.0, 1e-10);  // period
  EXPECT_NEAR(p[1].U_total / p[4].U_total, 1.0, 1e-10);
  // above the bar the atom is closer to metal than above the gap
  const auto gap = lateral_profile(250e-9, std::vector<double>{0.5e-6}, presets::rubidium(), g,
                                   coarse(), no_estimate());
  EXPECT_LT(p[1].U_total, gap[0].U_total);
}

TEST(CpPotential, OffsetGratingShiftsProfile) {
  const double shift = 0.23e-6;
  const std::vector<double> xs{0.1e-6};
  const std::vector<double> shifted{0.1e-6 + shift};
  const auto a = lateral_profile(300e-9, xs, presets::rubidium(), metal_grating(), coarse(),
                                 no_estimate());
  const auto b = lateral_profile(300e-9, shifted, presets::rubidium(), metal_grating(shift),
                                 coarse(), no_estimate());
  EXPECT_NEAR(a[0].U_total / b[0].U_total, 1.0, 1e-10);
}

TEST(CpPotential, ProfileModesAgreeWithSingleCalls) {
  const auto g = metal_grating();
  const std::vector<double> xs{0.0, 0.25e-6};
  const auto prof = cp_profile(xs, 300e-9, presets::rubidium(), g, coarse(), {true, true, true},
                               no_estimate());
  const auto f = cp_potential(0.25e-6, 300e-9, presets::rubidium(), g, coarse(), no_estimate());
  const auto s = cp_small_period(300e-9, presets::rubidium(), g, coarse(), no_estimate());
  const auto l = cp_large_period(0.25e-6, 300e-9, presets::rubidium(), g, coarse(), no_estimate());
  EXPECT_EQ(prof.full[1].U_total, f.U_total);
  EXPECT_EQ(prof.small_period[0].U_total, s.U_total);
  EXPECT_EQ(prof.large_period[1].U_total, l.U_total);
  EXPECT_EQ(prof.large_period[1].nodes[1], 1);
}

TEST(CpPotential, FarFieldApproachesSmallPeriod) {
  const auto g = metal_grating();
  const double y = 3.0 * g.d;
  const auto f = cp_potential(0.0, y, presets::rubidium(), g, coarse(), no_estimate());
  const auto s = cp_small_period(y, presets::rubidium(), g, coarse(), no_estimate());
  EXPECT_NEAR(f.U_total / s.U_total, 1.0, 1e-4);
}

TEST(CpPotential, LargePeriodApproachesFullForWideBars) {
  const GratingSpec g{8e-6, 50e-9, 4e-6, 0.0, DrudeModel{1.37e16, 5.3e13}};
  CpQuadrature q = coarse(12);
  q.green.kx_nodes = 16;
  const double y = 300e-9;
  const auto f = cp_potential(0.0, y, presets::rubidium(), g, q, no_estimate());
  const auto l = cp_large_period(0.0, y, presets::rubidium(), g, q, no_estimate());
  EXPECT_NEAR(l.U_total / f.U_total, 1.0, 0.05);
}

TEST(CpPotential, DecaysWithHeight) {
  const auto g = metal_grating();
  double prev = -1.0;
  for (double y : {150e-9, 300e-9, 600e-9}) {
    const auto r = cp_potential(0.0, y, presets::rubidium(), g, coarse(), no_estimate());
    EXPECT_LT(r.U_total, 0.0);
    if (prev < 0.0) {
      EXPECT_GT(r.U_total, prev);
    }
    prev = r.U_total;
  }
}

TEST(CpPotential, ErrorEstimateAndTolerance) {
  CpOptions o;
  o.threads = 1;
  const auto r = cp_potential(0.0, 300e-9, presets::rubidium(), metal_grating(), coarse(), o);
  EXPECT_GT(r.error_estimate, 0.0);
  o.tolerance = 1e-14;
  EXPECT_THROW(cp_potential(0.0, 300e-9, presets::rubidium(), metal_grating(), coarse(), o),
               ConvergenceError);
}

TEST(CpPotential, ImaginaryResidueIsReported) {
  CpOptions o = no_estimate();
  o.imag_tolerance = 1e-300;
  std::vector<std::string> events;
  o.sink = [&](const SolverDiagnostic& d) { events.push_back(d.event); };
  const auto g = metal_grating(0.1e-6);
  const auto r = cp_potential(0.05e-6, 300e-9, presets::rubidium(), g, coarse(), o);
  EXPECT_LT(r.imag_residue, 1e-8);
  if (r.imag_residue > 0.0) {
    EXPECT_FALSE(events.empty());
    o.strict_imag = true;
    EXPECT_THROW(cp_potential(0.05e-6, 300e-9, presets::rubidium(), g, coarse(), o),
                 NumericalBreakdown);
  }
}

TEST(CpPotential, ThreadCountDoesNotChangeResult) {
  CpOptions a = no_estimate();
  CpOptions b = no_estimate();
  b.threads = 3;
  const std::vector<double> xs{0.0, 0.3e-6};
  const auto p = lateral_profile(300e-9, xs, presets::rubidium(), metal_grating(), coarse(), a);
  const auto r = lateral_profile(300e-9, xs, presets::rubidium(), metal_grating(), coarse(), b);
  for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_EQ(p[i].U_total, r[i].U_total);
}
