#pragma once

// Scattering Green tensor above the grating, assembled from the polarization-basis Rayleigh
// matrices, plus the small-period (specular order only) and large-period (kx frozen at 0)
// asymptotes.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "cpgrating/constants.hpp"
#include "cpgrating/core_physics.hpp"
#include "cpgrating/errors.hpp"
#include "cpgrating/parallel.hpp"
#include "cpgrating/quadrature.hpp"
#include "cpgrating/rayleigh.hpp"

namespace cpgrating {

/// Discretization of the (kx, kz) integrals.
struct GreenQuadrature {
  int kx_nodes = 24;  // Gauss-Legendre on [-q/2, q/2]
  int kz_nodes = 48;  // kz = scale tan(theta), Gauss-Legendre in theta
  Truncation trunc{10};
  /// kz mapping scale in rad/m; 0 selects hypot(|omega|/c, 1/(y + y')).
  double kz_scale = 0.0;
  /// Real axis: relative imaginary part given to omega when a node lands near a branch point.
  double branch_shift = 1e-8;
  /// Orders with |exp(i ky y)| below this are dropped from the Rayleigh sums.
  double order_cutoff = 1e-14;
  /// Relative error above which scattering_green throws; 0 disables the check.
  double tolerance = 0.0;
  int threads = 1;
  SolverOptions solver;

  void validate() const {
    if (kx_nodes < 2 || kx_nodes % 2 != 0)
      throw ConfigError("kx node count must be even and >= 2 (got " + std::to_string(kx_nodes) +
                        ")");
    if (kz_nodes < 2 || kz_nodes % 2 != 0)
      throw ConfigError("kz node count must be even and >= 2 (got " + std::to_string(kz_nodes) +
                        ")");
    if (trunc.N < 0) throw ConfigError("truncation order must be non-negative");
  }

  GreenQuadrature halved() const {
    GreenQuadrature h = *this;
    h.kx_nodes = std::max(2, 2 * (kx_nodes / 4));
    h.kz_nodes = std::max(2, 2 * (kz_nodes / 4));
    return h;
  }
};

struct FieldPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

struct GreenTensor {
  Eigen::Matrix3cd value = Eigen::Matrix3cd::Zero();
  FieldPoint r;
  FieldPoint rp;
  Frequency omega;
  double error_estimate = 0.0;
};

enum class OrderSet { all, specular };

namespace detail {

/// R(kx, -kz) from R(kx, kz).
inline MatrixXcd kz_image(const MatrixXcd& r, int K) { return signed_blocks(r, K); }

/// R(-kx, kz) from R(kx, kz); valid for f(-x) = f(x).
inline MatrixXcd kx_image(const MatrixXcd& r, int K) { return flip_orders(signed_blocks(r, K), K); }

/// Positive half of a symmetric rule (weights unchanged).
inline quad::Rule positive_half(const quad::Rule& r) {
  quad::Rule out;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (r.nodes[i] > 0.0) {
      out.nodes.push_back(r.nodes[i]);
      out.weights.push_back(r.weights[i]);
    }
  }
  return out;
}

}  // namespace detail

/// Integrand of the Green tensor at one (kx, kz) before the i/(8 pi^2) prefactor:
/// sum_{m,n} exp(i[kx^m x - kx^n x' + ky^m y + ky^n y' + kz (z - z')]) / ky^n
///   sum_{s,s'} e^s_{m+} R^{s s'}_{mn} (e^{s'}_{n-})^T.
inline Eigen::Matrix3cd green_node(const MatrixXcd& R, double kx, double kz,
                                   const Frequency& omega, double q, Truncation t,
                                   const FieldPoint& r, const FieldPoint& rp,
                                   OrderSet orders = OrderSet::all, double cutoff = 1e-14) {
  const int K = t.size();
  Eigen::Matrix<cdouble, 3, Eigen::Dynamic> a = Eigen::Matrix<cdouble, 3, Eigen::Dynamic>::Zero(3, 2 * K);
  Eigen::Matrix<cdouble, 3, Eigen::Dynamic> b = a;
  for (int i = 0; i < K; ++i) {
    if (orders == OrderSet::specular && t.order(i) != 0) continue;
    const double kxm = kx + t.order(i) * q;
    const cdouble ky = dispersion_ky(kxm, kz, omega);
    const cdouble up = std::exp(kI * (kxm * r.x + ky * r.y));
    const cdouble dn = std::exp(kI * (-kxm * rp.x + ky * rp.y)) / ky;
    const bool keep_up = std::exp(-ky.imag() * r.y) >= cutoff;
    const bool keep_dn = std::exp(-ky.imag() * rp.y) >= cutoff;
    for (int s = 0; s < 2; ++s) {
      const auto sigma = static_cast<Polarization>(s);
      if (keep_up) a.col(s * K + i) = polarization_vector(sigma, Direction::up, kxm, kz, omega).e * up;
      if (keep_dn) b.col(s * K + i) = polarization_vector(sigma, Direction::down, kxm, kz, omega).e * dn;
    }
  }
  return std::exp(kI * kz * (r.z - rp.z)) * (a * R * b.transpose());
}

/// One line of constant kx in the (kx, kz) plane. `mirror` adds the image at -kx.
struct KxLine {
  double kx = 0.0;
  double weight = 0.0;
  bool mirror = false;
};

/// kx lines of the full integral: Gauss-Legendre on [-q/2, q/2], folded onto kx > 0 when the
/// grating is mirror symmetric.
inline std::vector<KxLine> kx_lines(const GratingSpec& g, int nodes) {
  const double q = g.q();
  const quad::Rule rule = quad::gauss_legendre(nodes, -0.5 * q, 0.5 * q);
  const bool fold = g.is_mirror_symmetric();
  std::vector<KxLine> lines;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    if (fold && rule.nodes[i] < 0.0) continue;
    lines.push_back({rule.nodes[i], rule.weights[i], fold});
  }
  return lines;
}

/// Positive kz nodes of the symmetric tangent rule; every node also stands for -kz.
inline quad::Rule kz_half_rule(int nodes, double scale) {
  return detail::positive_half(quad::tangent_line(nodes, scale));
}

inline double default_kz_scale(const Frequency& omega, double y_sum) {
  return std::hypot(std::abs(omega.k0()), 1.0 / y_sum);
}

namespace detail {

/// Frequency used at a node: the real-axis branch-point guard of GreenQuadrature.
inline Frequency guarded_frequency(const Frequency& omega, double kx, double kz, double q,
                                   Truncation t, double shift) {
  if (omega.is_imaginary() || shift <= 0.0) return omega;
  const cdouble k02 = omega.k0() * omega.k0();
  for (int i = 0; i < t.size(); ++i) {
    const double kxm = kx + t.order(i) * q;
    if (std::abs(k02 - kxm * kxm - kz * kz) <= shift * std::abs(k02))
      return Frequency{omega.value + kI * shift * std::abs(omega.value), omega.axis};
  }
  return omega;
}

}  // namespace detail

namespace detail {

/// True when every order decays below `cutoff` over the path y + y' at this node.
inline bool negligible_node(double kx, double kz, const Frequency& omega, double q, Truncation t,
                            double y_sum, double cutoff) {
  if (cutoff <= 0.0) return false;
  double kappa = std::numeric_limits<double>::infinity();
  for (int i = 0; i < t.size(); ++i)
    kappa = std::min(kappa, dispersion_ky(kx + t.order(i) * q, kz, omega).imag());
  return std::exp(-kappa * y_sum) < cutoff;
}

}  // namespace detail

/// Solves the Rayleigh problem at every kz node of one kx line and calls
/// visit(R, kx, kz, omega, weight) for each image (+-kz, and -kx when line.mirror).
/// Nodes whose slowest order decays below quad.order_cutoff over y_sum are not solved.
template <class Visit>
void visit_kx_line(const GratingSpec& g, const MaterialBlocks& mb, const KxLine& line,
                   const quad::Rule& kz_half, const GreenQuadrature& quad, double y_sum,
                   Visit&& visit) {
  const Truncation t = mb.trunc;
  const int K = t.size();
  const double q = g.q();
  for (std::size_t j = 0; j < kz_half.size(); ++j) {
    const double kz = kz_half.nodes[j];
    const double w = line.weight * kz_half.weights[j];
    if (detail::negligible_node(line.kx, kz, mb.omega, q, t, y_sum, quad.order_cutoff)) continue;
    const Frequency om =
        detail::guarded_frequency(mb.omega, line.kx, kz, q, t, quad.branch_shift);
    const RayleighMatrices rm = om.value == mb.omega.value
                                    ? solve_rayleigh(line.kx, kz, g, mb, quad.solver)
                                    : solve_rayleigh(line.kx, kz, om, g, t, quad.solver);
    const MatrixXcd& r = rm.polarization.R;
    visit(r, line.kx, kz, om, w);
    visit(detail::kz_image(r, K), line.kx, -kz, om, w);
    if (line.mirror) {
      visit(detail::kx_image(r, K), -line.kx, kz, om, w);
      visit(detail::flip_orders(r, K), -line.kx, -kz, om, w);
    }
  }
}

namespace detail {

inline Eigen::Matrix3cd integrate_green(const FieldPoint& r, const FieldPoint& rp,
                                        const Frequency& omega, const GratingSpec& g,
                                        const GreenQuadrature& quad,
                                        const std::vector<KxLine>& lines, OrderSet orders) {
  if (!(r.y > 0.0) || !(rp.y > 0.0))
    throw ConfigError("Green tensor points must lie above the grating (y > 0)");
  if (omega.value == cdouble(0.0)) throw ConfigError("Green tensor requires omega != 0");
  quad.validate();
  const double scale = quad.kz_scale > 0.0 ? quad.kz_scale : default_kz_scale(omega, r.y + rp.y);
  const quad::Rule kz_half = kz_half_rule(quad.kz_nodes, scale);
  const MaterialBlocks mb = build_material_blocks(g, omega, quad.trunc);
  const double q = g.q();
  const auto parts = parallel_map(lines.size(), quad.threads, [&](std::size_t i) {
    Eigen::Matrix3cd acc = Eigen::Matrix3cd::Zero();
    visit_kx_line(g, mb, lines[i], kz_half, quad, r.y + rp.y,
                  [&](const MatrixXcd& R, double kx, double kz, const Frequency& om, double w) {
                    acc += w * green_node(R, kx, kz, om, q, quad.trunc, r, rp, orders,
                                          quad.order_cutoff);
                  });
    return acc;
  });
  Eigen::Matrix3cd sum = Eigen::Matrix3cd::Zero();
  for (const auto& p : parts) sum += p;
  return (kI / (8.0 * kPi * kPi)) * sum;
}

inline GreenTensor finish(Eigen::Matrix3cd value, Eigen::Matrix3cd coarse, const FieldPoint& r,
                          const FieldPoint& rp, const Frequency& omega,
                          const GreenQuadrature& quad) {
  GreenTensor gt{value, r, rp, omega, (value - coarse).norm()};
  const double norm = value.norm();
  if (quad.tolerance > 0.0 && gt.error_estimate > quad.tolerance * norm) {
    throw ConvergenceError("Green tensor quadrature did not reach the requested tolerance",
                           norm > 0.0 ? gt.error_estimate / norm : gt.error_estimate);
  }
  return gt;
}

}  // namespace detail

inline bool is_vacuum(const GratingSpec& g, const Frequency& omega) {
  return g.h == 0.0 || g.w == 0.0 || permittivity(g.material, omega) == cdouble(1.0);
}

/// G^(1)(r, r', omega) by direct quadrature over the Brillouin zone and kz.
inline GreenTensor scattering_green(const FieldPoint& r, const FieldPoint& rp,
                                    const Frequency& omega, const GratingSpec& g,
                                    const GreenQuadrature& quad = {}) {
  g.validate();
  if (is_vacuum(g, omega)) return {Eigen::Matrix3cd::Zero(), r, rp, omega, 0.0};
  const auto value =
      detail::integrate_green(r, rp, omega, g, quad, kx_lines(g, quad.kx_nodes), OrderSet::all);
  if (quad.tolerance <= 0.0) return {value, r, rp, omega, 0.0};
  const auto h = quad.halved();
  const auto coarse =
      detail::integrate_green(r, rp, omega, g, h, kx_lines(g, h.kx_nodes), OrderSet::all);
  return detail::finish(value, coarse, r, rp, omega, quad);
}

/// Coincidence Green tensor keeping only the specular order m = n = 0; independent of x.
inline GreenTensor green_small_period(const FieldPoint& r, const Frequency& omega,
                                      const GratingSpec& g, const GreenQuadrature& quad = {}) {
  g.validate();
  if (is_vacuum(g, omega)) return {Eigen::Matrix3cd::Zero(), r, r, omega, 0.0};
  const FieldPoint p{0.0, r.y, r.z};
  const auto value =
      detail::integrate_green(p, p, omega, g, quad, kx_lines(g, quad.kx_nodes), OrderSet::specular);
  if (quad.tolerance <= 0.0) return {value, r, r, omega, 0.0};
  const auto h = quad.halved();
  const auto coarse =
      detail::integrate_green(p, p, omega, g, h, kx_lines(g, h.kx_nodes), OrderSet::specular);
  return detail::finish(value, coarse, r, r, omega, quad);
}

/// Large-period form: kx frozen at 0 and the Brillouin-zone integral of exp(i kx (x - x'))
/// evaluated exactly, 2 sin(pi (x - x')/d)/(x - x') -> q at coincidence.
inline double large_period_weight(const GratingSpec& g, double dx) {
  const double u = kPi * dx / g.d;
  if (std::abs(u) < 1e-8) return g.q() * (1.0 - u * u / 6.0);
  return 2.0 * std::sin(u) / dx;
}

inline GreenTensor green_large_period(const FieldPoint& r, const FieldPoint& rp,
                                      const Frequency& omega, const GratingSpec& g,
                                      const GreenQuadrature& quad = {}) {
  g.validate();
  if (is_vacuum(g, omega)) return {Eigen::Matrix3cd::Zero(), r, rp, omega, 0.0};
  const std::vector<KxLine> line{{0.0, large_period_weight(g, r.x - rp.x), false}};
  const auto value = detail::integrate_green(r, rp, omega, g, quad, line, OrderSet::all);
  if (quad.tolerance <= 0.0) return {value, r, rp, omega, 0.0};
  const auto coarse = detail::integrate_green(r, rp, omega, g, quad.halved(), line, OrderSet::all);
  return detail::finish(value, coarse, r, rp, omega, quad);
}

/// Maximum relative violations of the reciprocity and reflection relations of G.
struct GreenSymmetryReport {
  double schwarz = 0.0;        // G(r, r', -omega*) = G*(r, r', omega)
  double onsager = 0.0;        // G(r', r, omega) = G^T(r, r', omega)
  double coincidence_asymmetry = 0.0;  // |G - G^T| / |G| at r = r', imaginary axis
  double coincidence_imag = 0.0;       // |Im G| / |G| at r = r', imaginary axis
  int samples = 0;
};

inline GreenSymmetryReport validate_green_symmetries(
    std::span<const Frequency> omegas, const GratingSpec& g,
    std::span<const std::pair<FieldPoint, FieldPoint>> pairs, const GreenQuadrature& quad = {}) {
  GreenSymmetryReport rep;
  auto rel = [](const Eigen::Matrix3cd& a, const Eigen::Matrix3cd& b) {
    const double scale = std::max(a.norm(), b.norm());
    return scale > 0.0 ? (a - b).norm() / scale : 0.0;
  };
  for (const auto& omega : omegas) {
    for (const auto& [r, rp] : pairs) {
      const auto G = scattering_green(r, rp, omega, g, quad).value;
      const auto Gsw = scattering_green(r, rp, omega.reflected(), g, quad).value;
      rep.schwarz = std::max(rep.schwarz, rel(Gsw, G.conjugate()));
      const auto Gex = scattering_green(rp, r, omega, g, quad).value;
      rep.onsager = std::max(rep.onsager, rel(Gex, G.transpose()));
      if (omega.is_imaginary()) {
        const auto Gc = scattering_green(r, r, omega, g, quad).value;
        const double n = Gc.norm();
        if (n > 0.0) {
          rep.coincidence_asymmetry =
              std::max(rep.coincidence_asymmetry, (Gc - Gc.transpose()).norm() / n);
          rep.coincidence_imag = std::max(rep.coincidence_imag, Gc.imag().norm() / n);
        }
      }
      ++rep.samples;
    }
  }
  return rep;
}

}  // namespace cpgrating
