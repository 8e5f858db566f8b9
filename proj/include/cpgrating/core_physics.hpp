#pragma once

// Shared vocabulary: frequencies, wavevectors, polarization basis, material and
// atomic response models, and the Fourier description of a lamellar grating.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "cpgrating/constants.hpp"
#include "cpgrating/errors.hpp"

namespace cpgrating {

enum class FrequencyAxis { real, imaginary };

/// Angular frequency in rad/s. On the imaginary axis value = i*xi with xi >= 0.
/// Real-axis frequencies may carry a small positive imaginary part (causal limit).
struct Frequency {
  cdouble value;
  FrequencyAxis axis = FrequencyAxis::real;

  static Frequency real_axis(cdouble omega) {
    if (omega.imag() < 0.0) throw ConfigError("real-axis frequency must satisfy Im(omega) >= 0");
    return {omega, FrequencyAxis::real};
  }
  static Frequency imaginary_axis(double xi) {
    if (!(xi >= 0.0)) throw ConfigError("imaginary-axis frequency requires xi >= 0");
    return {cdouble(0.0, xi), FrequencyAxis::imaginary};
  }

  bool is_imaginary() const { return axis == FrequencyAxis::imaginary; }
  double xi() const { return value.imag(); }
  /// Vacuum wavenumber omega/c.
  cdouble k0() const { return value / si::c; }
  /// -omega^*, the argument of the Schwarz reflection principle.
  Frequency reflected() const { return {-std::conj(value), axis}; }
};

/// Lateral wavevector of diffraction order m: k_x^m = kx + m q.
struct TransverseWave {
  double kx = 0.0;
  double kz = 0.0;
  int m = 0;
  double q = 0.0;

  double kxm() const { return kx + m * q; }
  bool in_first_zone() const { return std::abs(kx) <= 0.5 * q; }
};

// --- branch handling -------------------------------------------------------

namespace detail {

/// Square root of k2 on the causal sheet Im >= 0. For a real positive argument the
/// omega -> omega + i0 prescription fixes the sign: +sqrt for Re omega > 0, -sqrt otherwise.
inline cdouble causal_sqrt(cdouble k2, cdouble omega) {
  cdouble r = std::sqrt(k2);
  if (r.imag() < 0.0) r = -r;
  if (r.imag() == 0.0 && k2.real() > 0.0 && omega.real() < 0.0) r = -r;
  return r;
}

/// Imaginary part returned exactly at a real-axis branch point, relative to |omega|/c.
inline constexpr double kBranchPointShift = 1e-8;

}  // namespace detail

/// Normal wavevector component k_y^m = sqrt(omega^2/c^2 - kxm^2 - kz^2), Im >= 0.
inline cdouble dispersion_ky(double kxm, double kz, const Frequency& omega) {
  if (omega.is_imaginary()) {
    const double xi_c = omega.xi() / si::c;
    return kI * std::sqrt(xi_c * xi_c + kxm * kxm + kz * kz);
  }
  const cdouble k0 = omega.k0();
  const cdouble k2 = k0 * k0 - kxm * kxm - kz * kz;
  if (k2 == cdouble(0.0)) return kI * (detail::kBranchPointShift * std::abs(k0));
  return detail::causal_sqrt(k2, omega.value);
}

/// kappa_m = sqrt(xi^2/c^2 + kxm^2 + kz^2); dispersion_ky(kxm, kz, i xi) == i*kappa.
inline double kappa(double kxm, double kz, double xi) {
  const double xi_c = xi / si::c;
  return std::sqrt(xi_c * xi_c + kxm * kxm + kz * kz);
}

// --- polarization basis ----------------------------------------------------

enum class Polarization { E = 0, H = 1 };
enum class Direction { up, down };

inline const char* to_string(Polarization p) { return p == Polarization::E ? "E" : "H"; }

/// Relative threshold on |omega^2/c^2 - kz^2| below which the basis is degenerate.
inline constexpr double kDegenerateTolerance = 1e-12;

struct PolVector {
  Eigen::Vector3cd e;
  Polarization sigma;
  Direction dir;
};

namespace detail {

/// s = sqrt(omega^2/c^2 - kz^2) on the causal sheet; throws when the basis degenerates.
inline cdouble transverse_norm(double kz, const Frequency& omega) {
  const cdouble k0 = omega.k0();
  const cdouble k02 = k0 * k0;
  const cdouble s2 = k02 - kz * kz;
  if (std::abs(s2) <= kDegenerateTolerance * std::abs(k02)) {
    throw DegenerateModeError("degenerate E/H basis: |omega^2/c^2 - kz^2| vanishes (kz = " +
                              std::to_string(kz) + ")");
  }
  return causal_sqrt(s2, omega.value);
}

inline Eigen::Vector3cd e_vector(double kxm, cdouble ky, double kz, cdouble k0, cdouble s,
                                 double sign) {
  const cdouble pre = 1.0 / (k0 * s);
  return pre * Eigen::Vector3cd(-kxm * kz, -sign * ky * kz, s * s);
}

inline Eigen::Vector3cd h_vector(double kxm, cdouble ky, cdouble s, double sign) {
  return Eigen::Vector3cd(-sign * ky, kxm, 0.0) / s;
}

}  // namespace detail

/// Unit (bilinear-normalized) polarization vector of the plane wave with wavevector
/// (kxm, +-ky, kz). The E vector carries E_z, the H vector carries H_z.
inline PolVector polarization_vector(Polarization sigma, Direction dir, double kxm, double kz,
                                     const Frequency& omega) {
  const cdouble s = detail::transverse_norm(kz, omega);
  const cdouble ky = dispersion_ky(kxm, kz, omega);
  const double sign = dir == Direction::up ? 1.0 : -1.0;
  const Eigen::Vector3cd e = sigma == Polarization::E
                                 ? detail::e_vector(kxm, ky, kz, omega.k0(), s, sign)
                                 : detail::h_vector(kxm, ky, s, sign);
  return {e, sigma, dir};
}

/// Wavevector (kxm, +-ky, kz) of the mode.
inline Eigen::Vector3cd wavevector(Direction dir, double kxm, double kz, const Frequency& omega) {
  const cdouble ky = dispersion_ky(kxm, kz, omega);
  return {kxm, dir == Direction::up ? ky : -ky, kz};
}

/// Non-conjugated dot product, the bilinear form the basis is normalized in.
inline cdouble bilinear_dot(const Eigen::Vector3cd& a, const Eigen::Vector3cd& b) {
  return (a.array() * b.array()).sum();
}

/// Cross product without conjugation (Eigen's cross() conjugates complex results).
inline Eigen::Vector3cd bilinear_cross(const Eigen::Vector3cd& a, const Eigen::Vector3cd& b) {
  return {a.y() * b.z() - a.z() * b.y(), a.z() * b.x() - a.x() * b.z(),
          a.x() * b.y() - a.y() * b.x()};
}

// --- materials -------------------------------------------------------------

struct ConstantPermittivity {
  cdouble eps{1.0, 0.0};
};

/// eps(omega) = 1 - wp^2 / (omega (omega + i gamma)).
struct DrudeModel {
  double plasma_frequency = 0.0;  // rad/s
  double damping = 0.0;           // rad/s
};

enum class InterpolationRule { linear, log_linear };

/// eps(i xi) sampled on the imaginary axis, xi strictly increasing.
struct TabulatedPermittivity {
  std::vector<std::pair<double, double>> samples;
  InterpolationRule rule = InterpolationRule::linear;
};

using MaterialModel = std::variant<ConstantPermittivity, DrudeModel, TabulatedPermittivity>;

namespace presets {
/// Gold, Drude parameters from the optical-data literature.
inline MaterialModel gold_drude() { return DrudeModel{1.37e16, 5.3e13}; }
}  // namespace presets

namespace detail {

inline double interpolate_table(const TabulatedPermittivity& t, double xi) {
  const auto& s = t.samples;
  if (s.empty()) throw ConfigError("tabulated permittivity has no samples");
  if (xi <= s.front().first) return s.front().second;
  if (xi >= s.back().first) return s.back().second;
  const auto hi = std::lower_bound(s.begin(), s.end(), xi,
                                   [](const auto& p, double v) { return p.first < v; });
  const auto lo = hi - 1;
  if (t.rule == InterpolationRule::log_linear && lo->first > 0.0) {
    const double u = std::log(xi / lo->first) / std::log(hi->first / lo->first);
    return std::exp((1.0 - u) * std::log(lo->second) + u * std::log(hi->second));
  }
  const double u = (xi - lo->first) / (hi->first - lo->first);
  return (1.0 - u) * lo->second + u * hi->second;
}

}  // namespace detail

inline cdouble permittivity(const MaterialModel& material, const Frequency& omega) {
  return std::visit(
      [&](const auto& m) -> cdouble {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ConstantPermittivity>) {
          return m.eps;
        } else if constexpr (std::is_same_v<T, DrudeModel>) {
          const double wp2 = m.plasma_frequency * m.plasma_frequency;
          if (omega.is_imaginary()) {
            const double xi = omega.xi();
            if (xi == 0.0) throw PoleError("Drude permittivity has a pole at xi = 0");
            return 1.0 + wp2 / (xi * (xi + m.damping));
          }
          const cdouble w = omega.value;
          if (w == cdouble(0.0)) throw PoleError("Drude permittivity has a pole at omega = 0");
          return 1.0 - wp2 / (w * (w + kI * m.damping));
        } else {
          if (!omega.is_imaginary())
            throw ConfigError("tabulated permittivity is only defined on the imaginary axis");
          return detail::interpolate_table(m, omega.xi());
        }
      },
      material);
}

// --- grating ---------------------------------------------------------------

/// Lamellar grating: bars of width w and height h, period d, bar centre at x0.
/// The region -h <= y <= 0 holds eps_bar on the bars and vacuum in the gaps.
struct GratingSpec {
  double d = 0.0;
  double h = 0.0;
  double w = 0.0;
  double x0 = 0.0;
  MaterialModel material = ConstantPermittivity{};

  double q() const { return 2.0 * kPi / d; }

  /// f(-x) = f(x): bar or gap centred at x = 0.
  bool is_mirror_symmetric() const {
    const double r = std::remainder(x0, 0.5 * d);
    return std::abs(r) <= 1e-12 * d;
  }

  void validate() const {
    if (!(d > 0.0)) throw ConfigError("grating period d must be positive");
    if (!(h >= 0.0)) throw ConfigError("grating height h must be non-negative");
    if (!(w >= 0.0) || w > d) throw ConfigError("bar width must satisfy 0 <= w <= d");
  }
};

/// Fourier coefficient n of the profile equal to `inside` on the bar and `outside` elsewhere,
/// expansion in exp(+i 2 pi n x / d).
inline cdouble lamellar_coefficient(const GratingSpec& g, cdouble inside, cdouble outside,
                                    int n) {
  const double fill = g.w / g.d;
  if (n == 0) return outside + (inside - outside) * fill;
  const double pn = kPi * n;
  const double shift = -2.0 * kPi * n * g.x0 / g.d;
  return (inside - outside) * (std::sin(pn * fill) / pn) * std::polar(1.0, shift);
}

inline cdouble fourier_eps_coefficient(const GratingSpec& g, const Frequency& omega, int n) {
  return lamellar_coefficient(g, permittivity(g.material, omega), 1.0, n);
}

/// Fourier coefficient of 1/eps(x), the input of the inverse factorization rule.
inline cdouble fourier_inverse_eps_coefficient(const GratingSpec& g, const Frequency& omega,
                                               int n) {
  return lamellar_coefficient(g, 1.0 / permittivity(g.material, omega), 1.0, n);
}

// --- atom ------------------------------------------------------------------

/// One transition: static contribution `strength` (C^2 m^2 / J) at angular frequency `omega`.
struct Oscillator {
  double strength = 0.0;
  double omega = 0.0;
};

enum class Axis { x = 0, y = 1, z = 2 };

/// Diagonal ground-state polarizability, one oscillator list per Cartesian axis.
struct PolarizabilityTensor {
  std::array<std::vector<Oscillator>, 3> axes;

  static PolarizabilityTensor isotropic(const std::vector<Oscillator>& oscillators) {
    return {{oscillators, oscillators, oscillators}};
  }
  static PolarizabilityTensor along(Axis axis, const std::vector<Oscillator>& oscillators) {
    PolarizabilityTensor t;
    t.axes[static_cast<int>(axis)] = oscillators;
    return t;
  }
  bool is_isotropic() const {
    auto same = [](const std::vector<Oscillator>& a, const std::vector<Oscillator>& b) {
      return std::equal(a.begin(), a.end(), b.begin(), b.end(),
                        [](const Oscillator& p, const Oscillator& r) {
                          return p.strength == r.strength && p.omega == r.omega;
                        });
    };
    return same(axes[0], axes[1]) && same(axes[1], axes[2]);
  }
  bool is_zero() const {
    return std::all_of(axes.begin(), axes.end(), [](const auto& list) {
      return std::all_of(list.begin(), list.end(),
                         [](const Oscillator& o) { return o.strength == 0.0; });
    });
  }
};

namespace presets {
/// Rb ground state as one effective oscillator: 4 pi eps0 * 47.39 A^3 at 2.42e15 rad/s.
inline Oscillator rubidium_oscillator() { return {4.0 * kPi * si::eps0 * 47.39e-30, 2.42e15}; }
inline PolarizabilityTensor rubidium() {
  return PolarizabilityTensor::isotropic({rubidium_oscillator()});
}
}  // namespace presets

/// alpha(i xi): diagonal entries sum_k alpha_k w_k^2 / (w_k^2 + xi^2).
inline Eigen::Matrix3d polarizability_at(const PolarizabilityTensor& alpha, double xi) {
  Eigen::Matrix3d out = Eigen::Matrix3d::Zero();
  for (int a = 0; a < 3; ++a) {
    double sum = 0.0;
    for (const auto& osc : alpha.axes[a]) {
      const double w2 = osc.omega * osc.omega;
      sum += osc.strength * w2 / (w2 + xi * xi);
    }
    out(a, a) = sum;
  }
  return out;
}

}  // namespace cpgrating
