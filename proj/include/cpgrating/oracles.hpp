#pragma once

// Independent analytic references for the test suites: Fresnel slab coefficients, the
// planar scattering Green tensor, planar and perfect-mirror Casimir-Polder potentials, and
// Fourier coefficients by direct numerical integration. Nothing here calls the grating
// solver, the Green-tensor assembly or the potential engine.

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cpgrating/constants.hpp"
#include "cpgrating/core_physics.hpp"
#include "cpgrating/results.hpp"

namespace cpgrating::oracle {

/// Homogeneous slab of thickness h with vacuum on both sides (a grating with w = d).
struct SlabConfig {
  MaterialModel material = ConstantPermittivity{};
  double h = 0.0;

  static SlabConfig constant(cdouble eps, double h) { return {ConstantPermittivity{eps}, h}; }
  cdouble eps(const Frequency& omega) const { return permittivity(material, omega); }
};

/// Planar s (TE) / p (TM) coefficients. At kz = 0 the grating's E modes are s waves and its
/// H modes are p waves, so Polarization doubles as the planar tag.
struct FresnelPair {
  cdouble r;
  cdouble t;  // transmitted field referenced to y = 0, as exp(-i ky y) continued below the slab
};

inline FresnelPair fresnel_slab(Polarization sigma, double kpar, const Frequency& omega,
                                const SlabConfig& slab) {
  const cdouble k0 = omega.k0();
  const cdouble ky0 = dispersion_ky(kpar, 0.0, omega);
  const cdouble eps = slab.eps(omega);
  const cdouble ky1 = detail::causal_sqrt(eps * k0 * k0 - kpar * kpar, omega.value);
  const cdouble r1 = sigma == Polarization::E ? (ky0 - ky1) / (ky0 + ky1)
                                              : (eps * ky0 - ky1) / (eps * ky0 + ky1);
  const cdouble round_trip = std::exp(2.0 * kI * ky1 * slab.h);
  const cdouble denom = 1.0 - r1 * r1 * round_trip;
  return {r1 * (1.0 - round_trip) / denom,
          (1.0 - r1 * r1) * std::exp(kI * (ky1 - ky0) * slab.h) / denom};
}

inline cdouble fresnel_slab_r(Polarization sigma, double kpar, const Frequency& omega,
                              const SlabConfig& slab) {
  return fresnel_slab(sigma, kpar, omega, slab).r;
}

/// 2x2 reflection and transmission of one diffraction order rotated into the E/H basis.
struct FresnelBlock {
  Eigen::Matrix2cd R;
  Eigen::Matrix2cd T;
};

inline FresnelBlock fresnel_slab_block(double kxm, double kz, const Frequency& omega,
                                       const SlabConfig& slab) {
  const double kpar = std::hypot(kxm, kz);
  const auto s = fresnel_slab(Polarization::E, kpar, omega, slab);
  const auto p = fresnel_slab(Polarization::H, kpar, omega, slab);
  const Eigen::Vector3cd s_hat =
      kpar > 0.0 ? Eigen::Vector3cd(kz / kpar, 0.0, -kxm / kpar) : Eigen::Vector3cd(0, 0, 1);
  const cdouble k0 = omega.k0();
  const cdouble ky = dispersion_ky(kxm, kz, omega);
  const Eigen::Vector3cd k_up = Eigen::Vector3cd(kxm, ky, kz) / k0;
  const Eigen::Vector3cd k_dn = Eigen::Vector3cd(kxm, -ky, kz) / k0;
  const Eigen::Vector3cd p_up = bilinear_cross(s_hat, k_up);
  const Eigen::Vector3cd p_dn = bilinear_cross(s_hat, k_dn);
  const Eigen::Matrix3cd refl = s.r * s_hat * s_hat.transpose() + p.r * p_up * p_dn.transpose();
  const Eigen::Matrix3cd trans = s.t * s_hat * s_hat.transpose() + p.t * p_dn * p_dn.transpose();

  FresnelBlock out;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const auto sa = static_cast<Polarization>(a);
      const auto sb = static_cast<Polarization>(b);
      const auto out_up = polarization_vector(sa, Direction::up, kxm, kz, omega).e;
      const auto out_dn = polarization_vector(sa, Direction::down, kxm, kz, omega).e;
      const auto in_dn = polarization_vector(sb, Direction::down, kxm, kz, omega).e;
      out.R(a, b) = (out_up.transpose() * refl * in_dn)(0, 0);
      out.T(a, b) = (out_dn.transpose() * trans * in_dn)(0, 0);
    }
  }
  return out;
}

/// Diagonal of the planar scattering Green tensor G^(1)(r, r, i xi) times xi^2, with the
/// surface normal along y: (xi^2 G_xx, xi^2 G_yy, xi^2 G_zz) in s^-2 m^-1.
inline Eigen::Vector3d planar_green_xi2(double y, double xi, const SlabConfig& slab,
                                        double tol = 1e-11) {
  const double xi_c = xi / si::c;
  const Frequency w = Frequency::imaginary_axis(xi);
  // u = s / y keeps the exp_sinh abscissae at the scale of the integrand for any height
  auto tangential = [&](double s) {
    const double u = s / y;
    const double kap = xi_c + u;
    if (!(std::exp(-2.0 * kap * y) > 0.0)) return 0.0;
    const double kpar = std::sqrt(std::max(0.0, u * (u + 2.0 * xi_c)));
    const auto rs = fresnel_slab(Polarization::E, kpar, w, slab).r.real();
    const auto rp = fresnel_slab(Polarization::H, kpar, w, slab).r.real();
    return std::exp(-2.0 * kap * y) * (xi * xi * rs - si::c * si::c * kap * kap * rp);
  };
  auto normal = [&](double s) {
    const double u = s / y;
    const double kap = xi_c + u;
    if (!(std::exp(-2.0 * kap * y) > 0.0)) return 0.0;
    const double k2 = std::max(0.0, u * (u + 2.0 * xi_c));
    const auto rp = fresnel_slab(Polarization::H, std::sqrt(k2), w, slab).r.real();
    return std::exp(-2.0 * kap * y) * (-2.0 * si::c * si::c * k2 * rp);
  };
  boost::math::quadrature::exp_sinh<double> integrator;
  const double gt = integrator.integrate(tangential, tol) / (8.0 * kPi * y);
  const double gn = integrator.integrate(normal, tol) / (8.0 * kPi * y);
  return {gt, gn, gt};
}

/// Diagonal of G^(1)(r, r, i xi) above the slab.
inline Eigen::Vector3d planar_green(double y, double xi, const SlabConfig& slab) {
  return planar_green_xi2(y, xi, slab) / (xi * xi);
}

/// Planar Casimir-Polder potential by adaptive integration over xi and the radial wavenumber.
inline PotentialResult planar_cp(double y, const PolarizabilityTensor& atom,
                                 const SlabConfig& slab, double tol = 1e-10) {
  PotentialResult out;
  out.y = y;
  out.mode = "planar";
  if (atom.is_zero()) return out;
  // The xi integrand is finite at xi = 0; evaluate just above it to stay clear of Drude-like
  // poles in user-supplied materials.
  const double xi_floor = 1e-9 * si::c / y;
  auto integrand = [&](double xi, int axis) {
    const double x = std::max(xi, xi_floor);
    const double a = polarizability_at(atom, x)(axis, axis);
    if (a == 0.0) return 0.0;
    return a * planar_green_xi2(y, x, slab, 1e-12)(axis);
  };
  boost::math::quadrature::exp_sinh<double> integrator;
  const double pre = si::hbar * si::mu0 / (2.0 * kPi);
  double u[3];
  for (int axis = 0; axis < 3; ++axis) {
    u[axis] = pre * integrator.integrate([&](double xi) { return integrand(xi, axis); }, tol);
  }
  out.set_components(u[0], u[1], u[2]);
  return out;
}

/// Retarded Casimir-Polder potential of an isotropic atom at a perfect mirror,
/// -3 hbar c alpha(0) / (32 pi^2 eps0 y^4).
inline double perfect_mirror_cp(double y, double static_polarizability) {
  return -3.0 * si::hbar * si::c * static_polarizability /
         (32.0 * kPi * kPi * si::eps0 * std::pow(y, 4));
}

/// (1/d) int_0^d eps(x) exp(-i 2 pi n x / d) dx by adaptive Gauss-Kronrod on each smooth piece.
inline cdouble brute_fourier_eps(const GratingSpec& g, const Frequency& omega, int n) {
  const cdouble eb = permittivity(g.material, omega);
  const double d = g.d;
  auto eps_at = [&](double x) -> cdouble {
    const double rel = std::remainder(x - g.x0, d);
    return std::abs(rel) < 0.5 * g.w ? eb : cdouble(1.0);
  };
  std::vector<double> cuts{0.0, d};
  for (double edge : {g.x0 - 0.5 * g.w, g.x0 + 0.5 * g.w}) {
    const double e = edge - d * std::floor(edge / d);
    if (e > 0.0 && e < d) cuts.push_back(e);
  }
  std::sort(cuts.begin(), cuts.end());
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  double re = 0.0, im = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = cuts[i], b = cuts[i + 1];
    if (b - a <= 0.0) continue;
    const double mid = 0.5 * (a + b);
    const cdouble e = eps_at(mid);
    auto f = [&](double x) { return e * std::polar(1.0, -2.0 * kPi * n * x / d); };
    re += GK::integrate([&](double x) { return f(x).real(); }, a, b, 15, 1e-14);
    im += GK::integrate([&](double x) { return f(x).imag(); }, a, b, 15, 1e-14);
  }
  return cdouble(re, im) / d;
}

}  // namespace cpgrating::oracle
