#pragma once

// Ground-state Casimir-Polder potential above the grating,
// U = (hbar mu0 / 16 pi^3) int dxi xi^2 int dkx int dkz Tr[alpha(i xi) K],
// K = sum_{m,n} exp(i q (m - n) x) exp(-(kappa_m + kappa_n) y)/kappa_n R_mn e_{m+} (x) e_{n-},
// with the small-period (m = n = 0) and large-period (kx = 0) asymptotes.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "cpgrating/constants.hpp"
#include "cpgrating/core_physics.hpp"
#include "cpgrating/errors.hpp"
#include "cpgrating/green.hpp"
#include "cpgrating/parallel.hpp"
#include "cpgrating/quadrature.hpp"
#include "cpgrating/rayleigh.hpp"
#include "cpgrating/results.hpp"

namespace cpgrating {

/// xi = scale (1 - t)/(1 + t), t Gauss-Legendre on (-1, 1); scale 0 selects c/(2y).
struct XiQuadrature {
  int nodes = 40;
  double scale = 0.0;

  double scale_for(double y) const { return scale > 0.0 ? scale : si::c / (2.0 * y); }
  quad::Rule rule(double y) const { return quad::semi_infinite(nodes, scale_for(y)); }
  void validate() const {
    if (nodes < 2 || nodes % 2 != 0)
      throw ConfigError("xi node count must be even and >= 2 (got " + std::to_string(nodes) + ")");
  }
};

struct CpQuadrature {
  XiQuadrature xi;
  GreenQuadrature green;

  void validate() const {
    xi.validate();
    green.validate();
  }
  /// Every node count halved (kept even); used for the error estimate.
  CpQuadrature halved() const {
    CpQuadrature h = *this;
    h.xi.nodes = std::max(2, 2 * (xi.nodes / 4));
    h.green = green.halved();
    return h;
  }
  CpQuadrature doubled() const {
    CpQuadrature d = *this;
    d.xi.nodes *= 2;
    d.green.kx_nodes *= 2;
    d.green.kz_nodes *= 2;
    return d;
  }
};

enum class CpMode { full = 0, small_period = 1, large_period = 2 };

inline const char* to_string(CpMode m) {
  switch (m) {
    case CpMode::full:
      return "full";
    case CpMode::small_period:
      return "small";
    case CpMode::large_period:
      return "large";
  }
  return "?";
}

struct CpOptions {
  int threads = 0;  // 0 = hardware concurrency
  bool error_estimate = true;
  /// Relative imaginary residue of the summed kernel tolerated before reporting.
  double imag_tolerance = 1e-8;
  /// Throw NumericalBreakdown instead of reporting through `sink` when the residue is exceeded.
  bool strict_imag = false;
  /// Relative error above which a ConvergenceError is thrown; 0 disables the check.
  double tolerance = 0.0;
  DiagnosticSink sink;
};

/// Dyadic kernel K at one (xi, kx, kz) node and its imaginary residue.
struct CpKernel {
  Eigen::Matrix3d value = Eigen::Matrix3d::Zero();
  double imag_residue = 0.0;  // max |Im K_ii| / max |Re K_ii|
};

namespace detail {

inline CpKernel to_kernel(const Eigen::Matrix3cd& green_integrand) {
  // K = i * (green integrand): the 1/ky^n of the Green tensor becomes 1/(i kappa_n).
  const Eigen::Matrix3cd k = kI * green_integrand;
  const double re = k.real().diagonal().cwiseAbs().maxCoeff();
  const double im = k.imag().diagonal().cwiseAbs().maxCoeff();
  return {k.real(), re > 0.0 ? im / re : (im > 0.0 ? 1.0 : 0.0)};
}

}  // namespace detail

inline CpKernel cp_integrand(double x, double y, double xi, double kx, double kz,
                             const GratingSpec& g, Truncation N,
                             const SolverOptions& solver = {}) {
  if (!(xi > 0.0)) throw ConfigError("cp_integrand requires xi > 0");
  if (!(y > 0.0)) throw ConfigError("cp_integrand requires y > 0");
  const Frequency omega = Frequency::imaginary_axis(xi);
  const auto rm = solve_rayleigh(kx, kz, omega, g, N, solver);
  const FieldPoint p{x, y, 0.0};
  return detail::to_kernel(green_node(rm.polarization.R, kx, kz, omega, g.q(), N, p, p));
}

/// Potentials of one sweep over lateral positions at fixed height, per requested mode.
struct CpProfile {
  std::vector<PotentialResult> full;
  std::vector<PotentialResult> small_period;
  std::vector<PotentialResult> large_period;

  const std::vector<PotentialResult>& by_mode(CpMode m) const {
    return m == CpMode::full ? full : (m == CpMode::small_period ? small_period : large_period);
  }
};

namespace detail {

/// Kernel diagonals integrated over (kx, kz), per xi node, x position and mode.
struct SweepRaw {
  // [mode][x] -> sum over xi of w_xi xi^2 alpha_ii(xi) K_ii, i = x, y, z
  std::array<std::vector<Eigen::Vector3d>, 3> u;
  std::array<double, 3> imag_abs{0.0, 0.0, 0.0};
  std::array<double, 3> real_abs{0.0, 0.0, 0.0};
};

struct WorkItem {
  int xi_index = 0;
  CpMode kind = CpMode::full;  // full covers both the full and the small-period sums
  KxLine line;
};

struct ItemResult {
  std::vector<Eigen::Vector3d> full;  // per x
  Eigen::Vector3d small = Eigen::Vector3d::Zero();
  std::vector<Eigen::Vector3d> large;  // per x
  double imag_abs = 0.0;
  double real_abs = 0.0;
};

inline SweepRaw sweep(std::span<const double> xs, double y, const PolarizabilityTensor& atom,
                      const GratingSpec& g, const CpQuadrature& quad,
                      const std::array<bool, 3>& modes, const CpOptions& opts) {
  const std::size_t nx = xs.size();
  SweepRaw raw;
  for (auto& v : raw.u) v.assign(nx, Eigen::Vector3d::Zero());

  const quad::Rule xi_rule = quad.xi.rule(y);
  std::vector<Eigen::Vector3d> alpha(xi_rule.size());
  std::vector<MaterialBlocks> blocks;
  std::vector<quad::Rule> kz_rules;
  for (std::size_t i = 0; i < xi_rule.size(); ++i) {
    const double xi = xi_rule.nodes[i];
    alpha[i] = polarizability_at(atom, xi).diagonal();
    const Frequency om = Frequency::imaginary_axis(xi);
    blocks.push_back(build_material_blocks(g, om, quad.green.trunc));
    const double scale =
        quad.green.kz_scale > 0.0 ? quad.green.kz_scale : default_kz_scale(om, 2.0 * y);
    kz_rules.push_back(kz_half_rule(quad.green.kz_nodes, scale));
  }

  std::vector<WorkItem> items;
  const auto lines = kx_lines(g, quad.green.kx_nodes);
  for (int i = 0; i < static_cast<int>(xi_rule.size()); ++i) {
    if (alpha[i].isZero(0.0)) continue;
    if (modes[0] || modes[1])
      for (const auto& l : lines) items.push_back({i, CpMode::full, l});
    if (modes[2])
      items.push_back({i, CpMode::large_period, {0.0, large_period_weight(g, 0.0), false}});
  }

  const double q = g.q();
  const Truncation t = quad.green.trunc;
  const auto results = parallel_map(items.size(), opts.threads, [&](std::size_t k) {
    const WorkItem& item = items[k];
    ItemResult out;
    out.full.assign(item.kind == CpMode::full && modes[0] ? nx : 0, Eigen::Vector3d::Zero());
    out.large.assign(item.kind == CpMode::large_period ? nx : 0, Eigen::Vector3d::Zero());
    auto add = [&](Eigen::Vector3d& acc, const Eigen::Matrix3cd& node, double w) {
      const CpKernel ker = to_kernel(node);
      acc += w * ker.value.diagonal();
      out.real_abs += w * ker.value.diagonal().cwiseAbs().sum();
      out.imag_abs += w * (kI * node).imag().diagonal().cwiseAbs().sum();
    };
    visit_kx_line(g, blocks[item.xi_index], item.line, kz_rules[item.xi_index], quad.green,
                  2.0 * y,
                  [&](const MatrixXcd& R, double kx, double kz, const Frequency& om, double w) {
                    for (std::size_t ix = 0; ix < nx; ++ix) {
                      const FieldPoint p{xs[ix], y, 0.0};
                      if (item.kind == CpMode::large_period) {
                        add(out.large[ix],
                            green_node(R, kx, kz, om, q, t, p, p, OrderSet::all,
                                       quad.green.order_cutoff),
                            w);
                      } else if (modes[0]) {
                        add(out.full[ix],
                            green_node(R, kx, kz, om, q, t, p, p, OrderSet::all,
                                       quad.green.order_cutoff),
                            w);
                      }
                    }
                    if (item.kind == CpMode::full && modes[1]) {
                      const FieldPoint p0{0.0, y, 0.0};
                      add(out.small,
                          green_node(R, kx, kz, om, q, t, p0, p0, OrderSet::specular,
                                     quad.green.order_cutoff),
                          w);
                    }
                  });
    return out;
  });

  for (std::size_t k = 0; k < items.size(); ++k) {
    const WorkItem& item = items[k];
    const ItemResult& r = results[k];
    const double xi = xi_rule.nodes[item.xi_index];
    const Eigen::Vector3d f = xi_rule.weights[item.xi_index] * xi * xi * alpha[item.xi_index];
    const int slot = item.kind == CpMode::large_period ? 2 : 0;
    if (item.kind == CpMode::full) {
      for (std::size_t ix = 0; ix < r.full.size(); ++ix)
        raw.u[0][ix] += f.cwiseProduct(r.full[ix]);
      if (modes[1])
        for (std::size_t ix = 0; ix < nx; ++ix) raw.u[1][ix] += f.cwiseProduct(r.small);
    } else {
      for (std::size_t ix = 0; ix < nx; ++ix) raw.u[2][ix] += f.cwiseProduct(r.large[ix]);
    }
    raw.imag_abs[slot] += r.imag_abs;
    raw.real_abs[slot] += r.real_abs;
  }
  raw.imag_abs[1] = raw.imag_abs[0];
  raw.real_abs[1] = raw.real_abs[0];
  return raw;
}

}  // namespace detail

/// Potentials at every x in `xs` (height y) for the modes flagged in `modes`
/// (full, small period, large period). One set of Rayleigh solves serves all x positions.
inline CpProfile cp_profile(std::span<const double> xs, double y, const PolarizabilityTensor& atom,
                            const GratingSpec& g, const CpQuadrature& quad,
                            const std::array<bool, 3>& modes, const CpOptions& opts = {}) {
  if (!(y > 0.0)) throw ConfigError("atom height y must be positive");
  g.validate();
  quad.validate();
  const double pre = si::hbar * si::mu0 / (16.0 * kPi * kPi * kPi);

  CpProfile out;
  auto fill_empty = [&](std::vector<PotentialResult>& dst, CpMode m) {
    for (double x : xs) {
      PotentialResult r;
      r.x = x;
      r.y = y;
      r.mode = to_string(m);
      r.truncation = quad.green.trunc.N;
      r.nodes = {quad.xi.nodes, m == CpMode::large_period ? 1 : quad.green.kx_nodes,
                 quad.green.kz_nodes};
      dst.push_back(r);
    }
  };
  std::array<std::vector<PotentialResult>*, 3> dst{&out.full, &out.small_period, &out.large_period};
  for (int m = 0; m < 3; ++m)
    if (modes[m]) fill_empty(*dst[m], static_cast<CpMode>(m));

  const bool vacuum = g.h == 0.0 || g.w == 0.0 ||
                      (std::holds_alternative<ConstantPermittivity>(g.material) &&
                       std::get<ConstantPermittivity>(g.material).eps == cdouble(1.0));
  if (atom.is_zero() || vacuum || xs.empty()) return out;

  const auto fine = detail::sweep(xs, y, atom, g, quad, modes, opts);
  detail::SweepRaw coarse;
  if (opts.error_estimate) coarse = detail::sweep(xs, y, atom, g, quad.halved(), modes, opts);

  for (int m = 0; m < 3; ++m) {
    if (!modes[m]) continue;
    const double residue = fine.real_abs[m] > 0.0 ? fine.imag_abs[m] / fine.real_abs[m] : 0.0;
    if (residue > opts.imag_tolerance) {
      std::ostringstream os;
      os << "imaginary residue " << residue << " of the " << to_string(static_cast<CpMode>(m))
         << " Casimir-Polder kernel exceeds " << opts.imag_tolerance << " at y = " << y;
      if (opts.strict_imag) throw NumericalBreakdown(os.str());
      if (opts.sink) opts.sink({os.str(), 0.0, 0.0, {}, residue, 0, {}});
    }
    for (std::size_t ix = 0; ix < xs.size(); ++ix) {
      PotentialResult& r = (*dst[m])[ix];
      const Eigen::Vector3d u = pre * fine.u[m][ix];
      r.set_components(u(0), u(1), u(2));
      r.imag_residue = residue;
      if (opts.error_estimate) r.error_estimate = std::abs(r.U_total - pre * coarse.u[m][ix].sum());
      if (opts.tolerance > 0.0 && r.error_estimate > opts.tolerance * std::abs(r.U_total)) {
        std::ostringstream os;
        os << "Casimir-Polder quadrature error estimate " << r.error_estimate << " J exceeds "
           << opts.tolerance << " relative at x = " << r.x << ", y = " << y;
        throw ConvergenceError(os.str(), r.U_total != 0.0 ? r.error_estimate / std::abs(r.U_total)
                                                          : r.error_estimate);
      }
    }
  }
  return out;
}

inline PotentialResult cp_potential(double x, double y, const PolarizabilityTensor& atom,
                                    const GratingSpec& g, const CpQuadrature& quad = {},
                                    const CpOptions& opts = {}) {
  const double xs[] = {x};
  return cp_profile(xs, y, atom, g, quad, {true, false, false}, opts).full.front();
}

/// Specular-order (x-independent) potential; `x` is only recorded in the result.
inline PotentialResult cp_small_period(double y, const PolarizabilityTensor& atom,
                                       const GratingSpec& g, const CpQuadrature& quad = {},
                                       const CpOptions& opts = {}, double x = 0.0) {
  const double xs[] = {x};
  return cp_profile(xs, y, atom, g, quad, {false, true, false}, opts).small_period.front();
}

inline PotentialResult cp_large_period(double x, double y, const PolarizabilityTensor& atom,
                                       const GratingSpec& g, const CpQuadrature& quad = {},
                                       const CpOptions& opts = {}) {
  const double xs[] = {x};
  return cp_profile(xs, y, atom, g, quad, {false, false, true}, opts).large_period.front();
}

inline std::vector<PotentialResult> lateral_profile(double y, std::span<const double> xs,
                                                    const PolarizabilityTensor& atom,
                                                    const GratingSpec& g,
                                                    const CpQuadrature& quad = {},
                                                    const CpOptions& opts = {}) {
  return cp_profile(xs, y, atom, g, quad, {true, false, false}, opts).full;
}

}  // namespace cpgrating
