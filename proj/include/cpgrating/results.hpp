#pragma once

#include <array>
#include <string>

namespace cpgrating {

/// Casimir-Polder potential at one point, split by Cartesian polarizability component.
struct PotentialResult {
  double x = 0.0;  // m, bar-centred frame of the grating's Fourier description
  double y = 0.0;  // m
  double U_xx = 0.0;
  double U_yy = 0.0;
  double U_zz = 0.0;
  double U_total = 0.0;  // J, always U_xx + U_yy + U_zz
  double error_estimate = 0.0;  // J
  /// Largest |Im| of the summed kernel relative to its real part.
  double imag_residue = 0.0;
  int truncation = 0;
  std::array<int, 3> nodes{0, 0, 0};  // xi, kx, kz
  std::string mode = "full";

  void set_components(double xx, double yy, double zz) {
    U_xx = xx;
    U_yy = yy;
    U_zz = zz;
    U_total = xx + yy + zz;
  }
};

}  // namespace cpgrating
