#pragma once

#include <complex>
#include <numbers>

namespace cpgrating {

using cdouble = std::complex<double>;

inline constexpr cdouble kI{0.0, 1.0};
inline constexpr double kPi = std::numbers::pi;

// CODATA 2018, SI.
namespace si {
inline constexpr double c = 299792458.0;
inline constexpr double hbar = 1.054571817e-34;
inline constexpr double mu0 = 1.25663706212e-6;
inline constexpr double eps0 = 1.0 / (mu0 * c * c);
/// Vacuum impedance sqrt(mu0/eps0); the solver works with Z0*H so that E and H share units.
inline constexpr double z0 = mu0 * c;
}  // namespace si

}  // namespace cpgrating
