#pragma once

// Rayleigh reflection/transmission matrices of a lamellar grating.
//
// Inside -h <= y <= 0 the tangential Fourier amplitudes ([Ex], [Ez], Z0[Hx], Z0[Hz]) obey
// d/dy F = M F with M = i [[0, P], [Q, 0]]. Vectors are ordered n = N ... -N.
// Above and below, the fields are expanded in the E/H plane-wave basis of
// polarization_vector(). The slab is matched to the vacuum half-spaces with an eigenmode
// scattering formulation in which every propagation factor has modulus <= 1.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cpgrating/constants.hpp"
#include "cpgrating/core_physics.hpp"
#include "cpgrating/errors.hpp"

namespace cpgrating {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

/// Orders -N ... N; index i holds order N - i.
struct Truncation {
  int N = 0;

  int size() const { return 2 * N + 1; }
  int order(int index) const { return N - index; }
  int index(int order) const { return N - order; }
};

/// Structured diagnostic emitted by the solver (spectrum, conditioning, route changes).
struct SolverDiagnostic {
  std::string event;
  double kx = 0.0;
  double kz = 0.0;
  cdouble omega;
  double condition = 0.0;
  int sublayers = 0;
  VectorXcd spectrum;
};

using DiagnosticSink = std::function<void(const SolverDiagnostic&)>;

struct SolverOptions {
  /// Eigenvector condition number above which the sublayer route is used.
  double condition_threshold = 1e8;
  int max_sublayers = 64;
  /// Relative agreement required between L and 2L sublayers.
  double sublayer_tolerance = 1e-8;
  bool force_sublayers = false;
  DiagnosticSink sink;
};

// --- modal matrices ----------------------------------------------------------

/// diag(kx + n q) for n = N ... -N.
inline VectorXd build_lambda(double kx, double q, Truncation t) {
  VectorXd out(t.size());
  for (int i = 0; i < t.size(); ++i) out(i) = kx + t.order(i) * q;
  return out;
}

/// Toeplitz matrix with entry (i, j) = eps_{j-i}; `coeffs` holds eps_n for n = -2N ... 2N.
inline MatrixXcd build_toeplitz(std::span<const cdouble> coeffs, Truncation t) {
  const int K = t.size();
  if (static_cast<int>(coeffs.size()) != 4 * t.N + 1) {
    throw ConfigError("Toeplitz construction needs Fourier coefficients for |n| <= 2N (" +
                      std::to_string(4 * t.N + 1) + " values, got " +
                      std::to_string(coeffs.size()) + ")");
  }
  MatrixXcd m(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) m(i, j) = coeffs[(j - i) + 2 * t.N];
  return m;
}

namespace detail {

template <class F>
std::vector<cdouble> coefficient_range(Truncation t, F&& coefficient) {
  std::vector<cdouble> c;
  c.reserve(4 * t.N + 1);
  for (int n = -2 * t.N; n <= 2 * t.N; ++n) c.push_back(coefficient(n));
  return c;
}

}  // namespace detail

/// Fourier-factorized permittivity: [D] = Q [E] with Qxx = ||1/eps||^-1, Qyy = Qzz = ||eps||.
struct QBlocks {
  MatrixXcd xx;
  MatrixXcd yy;
  MatrixXcd zz;
};

/// Frequency-dependent material matrices, shared by every (kx, kz) at one omega.
struct MaterialBlocks {
  Frequency omega;
  Truncation trunc;
  QBlocks q;
  MatrixXcd eps_inverse;  // ||eps||^-1
};

inline MaterialBlocks build_material_blocks(const GratingSpec& g, const Frequency& omega,
                                            Truncation t) {
  const auto eps = detail::coefficient_range(
      t, [&](int n) { return fourier_eps_coefficient(g, omega, n); });
  const auto inv = detail::coefficient_range(
      t, [&](int n) { return fourier_inverse_eps_coefficient(g, omega, n); });
  const MatrixXcd teps = build_toeplitz(eps, t);
  const MatrixXcd tinv = build_toeplitz(inv, t);

  const Eigen::PartialPivLU<MatrixXcd> lu_inv(tinv);
  const Eigen::PartialPivLU<MatrixXcd> lu_eps(teps);
  constexpr double kMinRcond = 1e-14;
  if (!(lu_inv.rcond() > kMinRcond))
    throw NumericalBreakdown("||1/eps|| is singular at this truncation (rcond = " +
                             std::to_string(lu_inv.rcond()) + ")");
  if (!(lu_eps.rcond() > kMinRcond))
    throw NumericalBreakdown("||eps|| is singular at this truncation (rcond = " +
                             std::to_string(lu_eps.rcond()) + ")");
  const MatrixXcd id = MatrixXcd::Identity(t.size(), t.size());
  return {omega, t, {lu_inv.solve(id), teps, teps}, lu_eps.solve(id)};
}

inline QBlocks build_Q(const GratingSpec& g, const Frequency& omega, Truncation t) {
  return build_material_blocks(g, omega, t).q;
}

namespace detail {

/// P and Q of M = i [[0, P], [Q, 0]], acting on ([Hx],[Hz]) and ([Ex],[Ez]).
struct HalfBlocks {
  MatrixXcd p;
  MatrixXcd q;
};

inline HalfBlocks half_blocks(const VectorXd& lambda, double kz, cdouble k0,
                              const MaterialBlocks& mb) {
  const int K = static_cast<int>(lambda.size());
  const MatrixXcd id = MatrixXcd::Identity(K, K);
  const MatrixXcd& einv = mb.eps_inverse;
  const auto L = lambda.cast<cdouble>().asDiagonal();
  HalfBlocks hb{MatrixXcd(2 * K, 2 * K), MatrixXcd(2 * K, 2 * K)};
  hb.p.topLeftCorner(K, K) = -(kz / k0) * (L * einv);
  hb.p.topRightCorner(K, K) = (L * einv * L) / k0 - k0 * id;
  hb.p.bottomLeftCorner(K, K) = -(kz * kz / k0) * einv + k0 * id;
  hb.p.bottomRightCorner(K, K) = (kz / k0) * (einv * L);

  MatrixXcd lam2 = MatrixXcd::Zero(K, K);
  lam2.diagonal() = lambda.array().square().cast<cdouble>();
  hb.q.topLeftCorner(K, K) = (kz / k0) * MatrixXcd(L);
  hb.q.topRightCorner(K, K) = k0 * mb.q.zz - lam2 / k0;
  hb.q.bottomLeftCorner(K, K) = (kz * kz / k0) * id - k0 * mb.q.xx;
  hb.q.bottomRightCorner(K, K) = -(kz / k0) * MatrixXcd(L);
  return hb;
}

}  // namespace detail

inline MatrixXcd build_M(double kx, double kz, const Frequency& omega, const GratingSpec& g,
                         Truncation t) {
  if (omega.value == cdouble(0.0)) throw ConfigError("build_M requires omega != 0");
  const MaterialBlocks mb = build_material_blocks(g, omega, t);
  const auto hb = detail::half_blocks(build_lambda(kx, g.q(), t), kz, omega.k0(), mb);
  const int n = 2 * t.size();
  MatrixXcd m = MatrixXcd::Zero(2 * n, 2 * n);
  m.topRightCorner(n, n) = kI * hb.p;
  m.bottomLeftCorner(n, n) = kI * hb.q;
  return m;
}

/// Modal data of the grating region. Eigenpairs of M come in pairs +-gamma_j with
/// eigenvectors [U; W] and [U; -W], Re gamma >= 0.
struct ModalSystem {
  Truncation trunc;
  VectorXd lambda;
  MatrixXcd toeplitz_eps;
  MatrixXcd inverse_rule;
  MatrixXcd M;
  VectorXcd gamma;
  MatrixXcd U;
  MatrixXcd W;
  bool eigen_ok = false;
  double eigvec_condition = std::numeric_limits<double>::infinity();

  VectorXcd eigenvalues() const {
    VectorXcd v(2 * gamma.size());
    v << gamma, -gamma;
    return v;
  }
  MatrixXcd eigenvectors() const {
    const auto n = U.rows();
    MatrixXcd v(2 * n, 2 * n);
    v << U, U, W, -W;
    return v;
  }
};

namespace detail {

/// -P Q expanded by hand. The products of P and Q carry terms of order (kz/k0)^2 that cancel
/// exactly; with ||eps||^-1 ||eps|| = I the result is block lower triangular:
/// [[L E L Qxx + kz^2 - k0^2 Qxx, 0], [-kz (L - E L Qxx), kz^2 + L^2 - k0^2 Qzz]], E = ||eps||^-1.
struct SquaredBlocks {
  MatrixXcd xx;
  MatrixXcd zx;
  MatrixXcd zz;
};

inline SquaredBlocks squared_blocks(const VectorXd& lambda, double kz, cdouble k0,
                                    const MaterialBlocks& mb) {
  const auto K = lambda.size();
  const MatrixXcd id = MatrixXcd::Identity(K, K);
  const auto L = lambda.cast<cdouble>().asDiagonal();
  const MatrixXcd elq = mb.eps_inverse * L * mb.q.xx;
  SquaredBlocks sq;
  sq.xx = L * elq + (kz * kz) * id - (k0 * k0) * mb.q.xx;
  sq.zx = -kz * (MatrixXcd(L) - elq);
  sq.zz = (kz * kz) * id - (k0 * k0) * mb.q.zz;
  sq.zz.diagonal() += lambda.array().square().cast<cdouble>().matrix();
  return sq;
}

inline bool eigen_pairs(const MatrixXcd& a, VectorXcd& mu, MatrixXcd& v) {
  // On the imaginary axis with real eps the blocks are real; the real solver is several
  // times faster.
  if (a.imag().cwiseAbs().maxCoeff() == 0.0) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(a.real());
    if (es.info() != Eigen::Success) return false;
    mu = es.eigenvalues();
    v = es.eigenvectors();
    return true;
  }
  Eigen::ComplexEigenSolver<MatrixXcd> es(a);
  if (es.info() != Eigen::Success) return false;
  mu = es.eigenvalues();
  v = es.eigenvectors();
  return true;
}

inline void fill_eigen(ModalSystem& ms, const HalfBlocks& hb, const SquaredBlocks& sq) {
  // M^2 = diag(-P Q, -Q P); eigenvalues of M are +-sqrt(eig(-P Q)).
  VectorXcd mu_x, mu_z;
  MatrixXcd vx, vz;
  if (!eigen_pairs(sq.xx, mu_x, vx) || !eigen_pairs(sq.zz, mu_z, vz)) {
    ms.eigen_ok = false;
    return;
  }
  const auto K = mu_x.size();
  const Eigen::PartialPivLU<MatrixXcd> lu_z(vz);
  if (!(lu_z.rcond() > 1e-14)) {
    ms.eigen_ok = false;
    return;
  }
  // Ez part of the Ex-led modes: (mu - A_zz) w = A_zx u, solved in the eigenbasis of A_zz.
  MatrixXcd c = lu_z.solve(sq.zx * vx);
  const double scale = std::max(mu_x.cwiseAbs().maxCoeff(), mu_z.cwiseAbs().maxCoeff());
  for (Eigen::Index j = 0; j < K; ++j) {
    for (Eigen::Index k = 0; k < K; ++k) {
      const cdouble den = mu_x(j) - mu_z(k);
      // exact E/H degeneracy (homogeneous layer): the coupling vanishes with it
      c(k, j) = std::abs(den) <= 1e-12 * scale ? cdouble(0.0) : c(k, j) / den;
    }
  }
  ms.U = MatrixXcd::Zero(2 * K, 2 * K);
  ms.U.topLeftCorner(K, K) = vx;
  ms.U.bottomLeftCorner(K, K) = vz * c;
  ms.U.bottomRightCorner(K, K) = vz;
  ms.U.colwise().normalize();
  VectorXcd mu(2 * K);
  mu << mu_x, mu_z;

  ms.gamma = mu.unaryExpr([](cdouble m) {
    cdouble g = std::sqrt(m);
    if (g.real() < 0.0 || (g.real() == 0.0 && g.imag() < 0.0)) g = -g;
    return g;
  });
  const double gmin = ms.gamma.cwiseAbs().minCoeff();
  const double gmax = ms.gamma.cwiseAbs().maxCoeff();
  if (!(gmin > 1e-10 * gmax)) {
    ms.eigen_ok = false;
    ms.eigvec_condition = std::numeric_limits<double>::infinity();
    return;
  }
  ms.W = kI * hb.q * ms.U * ms.gamma.cwiseInverse().asDiagonal();
  const Eigen::PartialPivLU<MatrixXcd> lu(ms.U);
  const double rc = lu.rcond();
  ms.eigvec_condition = rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
  ms.eigen_ok = std::isfinite(ms.eigvec_condition);
}

}  // namespace detail

inline ModalSystem make_modal_system(double kx, double kz, const GratingSpec& g,
                                     const MaterialBlocks& mb) {
  ModalSystem ms;
  ms.trunc = mb.trunc;
  ms.lambda = build_lambda(kx, g.q(), mb.trunc);
  ms.toeplitz_eps = mb.q.zz;
  ms.inverse_rule = mb.q.xx;
  const auto hb = detail::half_blocks(ms.lambda, kz, mb.omega.k0(), mb);
  const auto sq = detail::squared_blocks(ms.lambda, kz, mb.omega.k0(), mb);
  const int n = 2 * mb.trunc.size();
  ms.M = MatrixXcd::Zero(2 * n, 2 * n);
  ms.M.topRightCorner(n, n) = kI * hb.p;
  ms.M.bottomLeftCorner(n, n) = kI * hb.q;
  detail::fill_eigen(ms, hb, sq);
  return ms;
}

inline ModalSystem make_modal_system(double kx, double kz, const Frequency& omega,
                                     const GratingSpec& g, Truncation t) {
  if (omega.value == cdouble(0.0)) throw ConfigError("modal system requires omega != 0");
  return make_modal_system(kx, kz, g, build_material_blocks(g, omega, t));
}

/// exp(M h) with the number of sublayers used to form it.
struct SlabPropagation {
  MatrixXcd transfer;
  int sublayers = 1;
  double eigvec_condition = 0.0;
};

/// Transfer operator mapping the tangential fields at y = -h to y = 0.
/// Uses the eigendecomposition when it is well conditioned, otherwise exp(M h / L)^L with
/// L doubling up to opts.max_sublayers.
inline SlabPropagation propagate_slab(const ModalSystem& ms, double h,
                                      const SolverOptions& opts = {}) {
  const auto n = ms.M.rows();
  if (h == 0.0) return {MatrixXcd::Identity(n, n), 1, ms.eigvec_condition};
  if (ms.eigen_ok && ms.eigvec_condition <= opts.condition_threshold && !opts.force_sublayers) {
    const MatrixXcd v = ms.eigenvectors();
    const VectorXcd ex = (ms.eigenvalues() * h).array().exp();
    MatrixXcd t = v * ex.asDiagonal() * v.partialPivLu().inverse();
    if (t.allFinite()) return {std::move(t), 1, ms.eigvec_condition};
  }
  const double norm = ms.M.cwiseAbs().colwise().sum().maxCoeff() * h;
  int layers = 1;
  while (norm / layers > 1.0 && layers < opts.max_sublayers) layers *= 2;
  MatrixXcd step = (ms.M * (h / layers)).exp();
  for (int l = 1; l < layers; l *= 2) step = step * step;
  if (!step.allFinite()) {
    if (opts.sink) {
      opts.sink({"propagate_slab: breakdown", 0.0, 0.0, {}, ms.eigvec_condition, layers,
                 ms.eigen_ok ? ms.eigenvalues() : VectorXcd()});
    }
    std::ostringstream os;
    os << "slab propagation broke down: ||M|| h = " << norm << ", sublayers = " << layers
       << ", eigenvector condition = " << ms.eigvec_condition;
    throw NumericalBreakdown(os.str());
  }
  return {std::move(step), layers, ms.eigvec_condition};
}

// --- vacuum modes ------------------------------------------------------------

/// Matrix [[diag a, diag b], [diag c, diag d]]: per-order 2x2 maps between the
/// (E-mode, H-mode) amplitudes and the (x, z) field components.
struct BlockDiag2 {
  VectorXcd a, b, c, d;

  BlockDiag2 inverse() const {
    const VectorXcd det = a.cwiseProduct(d) - b.cwiseProduct(c);
    const VectorXcd inv = det.cwiseInverse();
    return {d.cwiseProduct(inv), -b.cwiseProduct(inv), -c.cwiseProduct(inv),
            a.cwiseProduct(inv)};
  }
  BlockDiag2 operator*(const BlockDiag2& o) const {
    return {a.cwiseProduct(o.a) + b.cwiseProduct(o.c), a.cwiseProduct(o.b) + b.cwiseProduct(o.d),
            c.cwiseProduct(o.a) + d.cwiseProduct(o.c), c.cwiseProduct(o.b) + d.cwiseProduct(o.d)};
  }
  BlockDiag2 operator-(const BlockDiag2& o) const {
    return {a - o.a, b - o.b, c - o.c, d - o.d};
  }
  MatrixXcd operator*(const MatrixXcd& m) const {
    const auto K = a.size();
    MatrixXcd out(2 * K, m.cols());
    out.topRows(K) = a.asDiagonal() * m.topRows(K) + b.asDiagonal() * m.bottomRows(K);
    out.bottomRows(K) = c.asDiagonal() * m.topRows(K) + d.asDiagonal() * m.bottomRows(K);
    return out;
  }
  MatrixXcd dense() const {
    const auto K = a.size();
    MatrixXcd out = MatrixXcd::Zero(2 * K, 2 * K);
    out.topLeftCorner(K, K).diagonal() = a;
    out.topRightCorner(K, K).diagonal() = b;
    out.bottomLeftCorner(K, K).diagonal() = c;
    out.bottomRightCorner(K, K).diagonal() = d;
    return out;
  }
};

/// Plane-wave modes of the vacuum half-spaces at fixed (kx, kz, omega).
struct VacuumModes {
  Truncation trunc;
  Frequency omega;
  double kx = 0.0;
  double kz = 0.0;
  VectorXd kxn;
  VectorXcd ky;
  std::vector<Eigen::Vector3cd> e_up, e_down, h_up, h_down;  // polarization vectors

  const Eigen::Vector3cd& vec(Polarization s, Direction d, int i) const {
    if (s == Polarization::E) return d == Direction::up ? e_up[i] : e_down[i];
    return d == Direction::up ? h_up[i] : h_down[i];
  }

  /// Tangential E (x, z) and Z0 H (x, z) of every mode travelling in `dir`.
  std::pair<BlockDiag2, BlockDiag2> field_maps(Direction dir) const {
    const int K = trunc.size();
    BlockDiag2 e{VectorXcd(K), VectorXcd(K), VectorXcd(K), VectorXcd(K)};
    BlockDiag2 h = e;
    const cdouble k0 = omega.k0();
    for (int i = 0; i < K; ++i) {
      const Eigen::Vector3cd k(kxn(i), dir == Direction::up ? ky(i) : -ky(i), kz);
      const Eigen::Vector3cd& ee = vec(Polarization::E, dir, i);
      const Eigen::Vector3cd& eh = vec(Polarization::H, dir, i);
      const Eigen::Vector3cd he = bilinear_cross(k, ee) / k0;
      const Eigen::Vector3cd hh = bilinear_cross(k, eh) / k0;
      e.a(i) = ee.x(), e.b(i) = eh.x(), e.c(i) = ee.z(), e.d(i) = eh.z();
      h.a(i) = he.x(), h.b(i) = hh.x(), h.c(i) = he.z(), h.d(i) = hh.z();
    }
    return {e, h};
  }

  /// z-component amplitude (E_z for E modes, physical H_z for H modes) per unit mode amplitude.
  VectorXcd z_factors(Direction dir) const {
    const int K = trunc.size();
    auto [e, h] = field_maps(dir);
    VectorXcd f(2 * K);
    f.head(K) = e.c;
    f.tail(K) = h.d / si::z0;
    return f;
  }
};

inline VacuumModes make_vacuum_modes(double kx, double kz, const Frequency& omega, double q,
                                     Truncation t) {
  VacuumModes vm{t, omega, kx, kz, build_lambda(kx, q, t), VectorXcd(t.size()), {}, {}, {}, {}};
  for (int i = 0; i < t.size(); ++i) {
    const double kxm = vm.kxn(i);
    vm.ky(i) = dispersion_ky(kxm, kz, omega);
    vm.e_up.push_back(polarization_vector(Polarization::E, Direction::up, kxm, kz, omega).e);
    vm.e_down.push_back(polarization_vector(Polarization::E, Direction::down, kxm, kz, omega).e);
    vm.h_up.push_back(polarization_vector(Polarization::H, Direction::up, kxm, kz, omega).e);
    vm.h_down.push_back(polarization_vector(Polarization::H, Direction::down, kxm, kz, omega).e);
  }
  return vm;
}

/// 4(2N+1) x 2(2N+1) map from (E-mode, H-mode) amplitudes to ([Ex],[Ez],Z0[Hx],Z0[Hz]).
inline MatrixXcd interface_field_map(Direction dir, double kx, double kz, const Frequency& omega,
                                     double q, Truncation t) {
  const auto vm = make_vacuum_modes(kx, kz, omega, q, t);
  auto [e, h] = vm.field_maps(dir);
  const int n = 2 * t.size();
  MatrixXcd out(2 * n, n);
  out.topRows(n) = e.dense();
  out.bottomRows(n) = h.dense();
  return out;
}

// --- Rayleigh matrices -------------------------------------------------------

enum class Basis { polarization, z_component };

/// Reflection and transmission coefficients, 2(2N+1) square, block layout [[EE, EH], [HE, HH]].
/// Row = outgoing (sigma, n), column = incident (sigma', m). T is referenced to y = 0
/// (transmitted field T exp(i kx^n x - i ky^n y) below the grating).
struct CoefficientSet {
  MatrixXcd R;
  MatrixXcd T;
  Basis basis = Basis::polarization;
};

enum class SolveRoute { eigenmode, sublayers };

struct RayleighMatrices {
  CoefficientSet polarization;
  CoefficientSet z_component;
  VacuumModes modes;
  SolveRoute route = SolveRoute::eigenmode;
  int sublayers = 0;
  double eigvec_condition = 0.0;

  int size() const { return modes.trunc.size(); }

  auto R(Polarization out, Polarization in) const {
    const int K = size();
    return polarization.R.block(static_cast<int>(out) * K, static_cast<int>(in) * K, K, K);
  }
  auto T(Polarization out, Polarization in) const {
    const int K = size();
    return polarization.T.block(static_cast<int>(out) * K, static_cast<int>(in) * K, K, K);
  }
  /// R^{out,in}_{n m} by diffraction order.
  cdouble r(Polarization out, Polarization in, int n, int m) const {
    return R(out, in)(modes.trunc.index(n), modes.trunc.index(m));
  }
};

/// Polarization-basis coefficients to unit-E_z / unit-H_z normalization and back.
inline CoefficientSet to_z_component(const CoefficientSet& pol, const VacuumModes& vm) {
  const VectorXcd fu = vm.z_factors(Direction::up);
  const VectorXcd fd = vm.z_factors(Direction::down);
  return {fu.asDiagonal() * pol.R * fd.cwiseInverse().asDiagonal(),
          fd.asDiagonal() * pol.T * fd.cwiseInverse().asDiagonal(), Basis::z_component};
}

inline CoefficientSet to_polarization(const CoefficientSet& zc, const VacuumModes& vm) {
  const VectorXcd fu = vm.z_factors(Direction::up);
  const VectorXcd fd = vm.z_factors(Direction::down);
  return {fu.cwiseInverse().asDiagonal() * zc.R * fd.asDiagonal(),
          fd.cwiseInverse().asDiagonal() * zc.T * fd.asDiagonal(), Basis::polarization};
}

namespace detail {

inline void check_system(const Eigen::PartialPivLU<MatrixXcd>& lu, const char* what,
                         const VacuumModes& vm) {
  if (!(lu.rcond() > 1e-15)) {
    std::ostringstream os;
    os << "singular matching system (" << what << ", rcond = " << lu.rcond()
       << ") at kx = " << vm.kx << ", kz = " << vm.kz << ", omega = " << vm.omega.value
       << ": resonance or degenerate mode";
    throw NumericalBreakdown(os.str());
  }
}

/// Inverse largest modulus of each row; the vacuum admittances of E and H modes differ by
/// (kappa / k0)^2, so the interface systems are badly row-scaled at large |k|.
inline VectorXcd row_scale(const MatrixXcd& a) {
  return a.cwiseAbs().rowwise().maxCoeff().cwiseMax(1e-300).cwiseInverse().cast<cdouble>();
}

/// Eigenmode route. Slab fields: E = U (e^{G y} c+ + e^{-G (y+h)} c-),
/// Z0 H = W (e^{G y} c+ - e^{-G (y+h)} c-), so every exponential has modulus <= 1.
inline std::pair<MatrixXcd, MatrixXcd> match_eigenmode(const ModalSystem& ms,
                                                       const VacuumModes& vm, double h) {
  auto [de, dh] = vm.field_maps(Direction::down);
  auto [ue, uh] = vm.field_maps(Direction::up);
  const BlockDiag2 de_inv = de.inverse();
  const BlockDiag2 yd = dh * de_inv;
  const BlockDiag2 yu = uh * ue.inverse();
  const VectorXcd x = (-ms.gamma * h).array().exp();
  const auto n = ms.U.rows();
  const MatrixXcd id = MatrixXcd::Identity(n, n);

  const MatrixXcd ydu = yd * ms.U;
  const MatrixXcd bottom = ms.W + ydu;
  const VectorXcd sb = row_scale(bottom);
  const Eigen::PartialPivLU<MatrixXcd> lu_bottom(sb.asDiagonal() * bottom);
  check_system(lu_bottom, "lower interface", vm);
  const MatrixXcd rho = lu_bottom.solve(sb.asDiagonal() * ((ms.W - ydu) * x.asDiagonal()));

  const MatrixXcd xrho = x.asDiagonal() * rho;
  const MatrixXcd utop = ms.U * (id + xrho);
  const MatrixXcd wtop = ms.W * (id - xrho);
  const MatrixXcd top = wtop - yu * utop;
  const VectorXcd st = row_scale(top);
  const Eigen::PartialPivLU<MatrixXcd> lu_top(st.asDiagonal() * top);
  check_system(lu_top, "upper interface", vm);
  const MatrixXcd cplus = lu_top.solve(st.asDiagonal() * (dh - yu * de).dense());

  MatrixXcd r = ue.inverse() * (MatrixXcd(utop * cplus) - de.dense());
  MatrixXcd tp = de_inv * MatrixXcd(ms.U * (x.asDiagonal() * cplus + rho * cplus));
  return {std::move(r), std::move(tp)};
}

struct SMatrix {
  MatrixXcd uu, ud, du, dd;  // outputs (u_top, d_bottom) from inputs (u_bottom, d_top)
};

/// Redheffer star product: `lower` below `upper`.
inline SMatrix redheffer(const SMatrix& lower, const SMatrix& upper) {
  const auto n = lower.uu.rows();
  const MatrixXcd id = MatrixXcd::Identity(n, n);
  const Eigen::PartialPivLU<MatrixXcd> lu1(id - lower.ud * upper.du);
  const Eigen::PartialPivLU<MatrixXcd> lu2(id - upper.du * lower.ud);
  // u1 = (I - A_ud B_du)^-1 (A_uu u_b + A_ud B_dd d_t), d1 = B_du u1 + B_dd d_t
  const MatrixXcd u1_ub = lu1.solve(lower.uu);
  const MatrixXcd u1_dt = lu1.solve(lower.ud * upper.dd);
  // d1 = (I - B_du A_ud)^-1 (B_du A_uu u_b + B_dd d_t)
  const MatrixXcd d1_ub = lu2.solve(upper.du * lower.uu);
  const MatrixXcd d1_dt = lu2.solve(upper.dd);
  return {upper.uu * u1_ub, upper.uu * u1_dt + upper.ud, lower.du + lower.dd * d1_ub,
          lower.dd * d1_dt};
}

/// Sublayer route: exp(M h/L) in the vacuum mode basis, converted to an S-matrix and
/// composed L times.
inline std::pair<MatrixXcd, MatrixXcd> match_sublayers(const ModalSystem& ms,
                                                       const VacuumModes& vm, double h,
                                                       int layers) {
  auto [de, dh] = vm.field_maps(Direction::down);
  auto [ue, uh] = vm.field_maps(Direction::up);
  const auto n = 2 * vm.trunc.size();
  MatrixXcd basis(2 * n, 2 * n);
  basis << ue.dense(), de.dense(), uh.dense(), dh.dense();
  const Eigen::PartialPivLU<MatrixXcd> lub(basis);
  const MatrixXcd step = (ms.M * (h / layers)).exp();
  const MatrixXcd t = lub.solve(step * basis);
  const Eigen::PartialPivLU<MatrixXcd> lu22(t.bottomRightCorner(n, n));
  const MatrixXcd t22inv = lu22.inverse();
  SMatrix s{t.topLeftCorner(n, n) - t.topRightCorner(n, n) * t22inv * t.bottomLeftCorner(n, n),
            t.topRightCorner(n, n) * t22inv, -t22inv * t.bottomLeftCorner(n, n), t22inv};
  SMatrix total = s;
  for (int l = 1; l < layers; l *= 2) total = redheffer(total, total);
  return {total.ud, total.dd};
}

}  // namespace detail

inline RayleighMatrices solve_rayleigh(double kx, double kz, const GratingSpec& g,
                                       const MaterialBlocks& mb, const SolverOptions& opts = {}) {
  const Truncation t = mb.trunc;
  const Frequency& omega = mb.omega;
  RayleighMatrices out;
  out.modes = make_vacuum_modes(kx, kz, omega, g.q(), t);
  const int n = 2 * t.size();

  MatrixXcd r, tp;
  if (g.h == 0.0) {
    r = MatrixXcd::Zero(n, n);
    tp = MatrixXcd::Identity(n, n);
  } else {
    const ModalSystem ms = make_modal_system(kx, kz, g, mb);
    out.eigvec_condition = ms.eigvec_condition;
    const bool eigen_route =
        ms.eigen_ok && ms.eigvec_condition <= opts.condition_threshold && !opts.force_sublayers;
    if (eigen_route) {
      std::tie(r, tp) = detail::match_eigenmode(ms, out.modes, g.h);
    } else {
      if (opts.sink) {
        opts.sink({"solve_rayleigh: sublayer fallback", kx, kz, omega.value, ms.eigvec_condition,
                   0, ms.eigen_ok ? ms.eigenvalues() : VectorXcd()});
      }
      out.route = SolveRoute::sublayers;
      const double norm = ms.M.cwiseAbs().colwise().sum().maxCoeff() * g.h;
      int layers = 1;
      while (norm / layers > 4.0 && 2 * layers < opts.max_sublayers) layers *= 2;
      auto prev = detail::match_sublayers(ms, out.modes, g.h, layers);
      bool converged = false;
      double diff = 0.0;
      while (!converged && layers < opts.max_sublayers) {
        layers *= 2;
        auto next = detail::match_sublayers(ms, out.modes, g.h, layers);
        const double scale = std::max(next.first.cwiseAbs().maxCoeff(), 1e-300);
        diff = (next.first - prev.first).cwiseAbs().maxCoeff() / scale;
        converged = diff <= opts.sublayer_tolerance && next.first.allFinite();
        prev = std::move(next);
      }
      if (!converged) {
        if (opts.sink) {
          opts.sink({"solve_rayleigh: sublayer breakdown", kx, kz, omega.value,
                     ms.eigvec_condition, layers, ms.eigen_ok ? ms.eigenvalues() : VectorXcd()});
        }
        std::ostringstream os;
        os << "sublayer propagation did not converge at L = " << layers << " (change " << diff
           << ", eigenvector condition " << ms.eigvec_condition << ")";
        throw NumericalBreakdown(os.str());
      }
      out.sublayers = layers;
      std::tie(r, tp) = std::move(prev);
    }
  }
  if (!r.allFinite() || !tp.allFinite()) {
    std::ostringstream os;
    os << "non-finite Rayleigh coefficients at kx = " << kx << ", kz = " << kz
       << ", omega = " << omega.value;
    throw NumericalBreakdown(os.str());
  }
  // transmitted amplitudes at y = -h -> reference plane y = 0
  VectorXcd phase(n);
  for (int i = 0; i < t.size(); ++i)
    phase(i) = phase(i + t.size()) = std::exp(-kI * out.modes.ky(i) * g.h);
  out.polarization = {std::move(r), phase.asDiagonal() * tp, Basis::polarization};
  out.z_component = to_z_component(out.polarization, out.modes);
  return out;
}

inline RayleighMatrices solve_rayleigh(double kx, double kz, const Frequency& omega,
                                       const GratingSpec& g, Truncation t,
                                       const SolverOptions& opts = {}) {
  if (omega.value == cdouble(0.0)) throw ConfigError("solve_rayleigh requires omega != 0");
  return solve_rayleigh(kx, kz, g, build_material_blocks(g, omega, t), opts);
}

// --- properties --------------------------------------------------------------

/// Flux-weighted unitarity sum for an incident propagating mode (sigma', order m):
/// sum over propagating outgoing (n, sigma) of Re ky^n / ky^m (|R|^2 + |T|^2).
inline double energy_balance(const RayleighMatrices& rm, Polarization in, int m) {
  const int K = rm.size();
  const int col = static_cast<int>(in) * K + rm.modes.trunc.index(m);
  const double kym = rm.modes.ky(rm.modes.trunc.index(m)).real();
  double sum = 0.0;
  for (int row = 0; row < 2 * K; ++row) {
    const cdouble ky = rm.modes.ky(row % K);
    if (ky.real() <= 0.0 || std::abs(ky.imag()) > 1e-12 * std::abs(ky)) continue;
    sum += ky.real() / kym *
           (std::norm(rm.polarization.R(row, col)) + std::norm(rm.polarization.T(row, col)));
  }
  return sum;
}

struct SymmetrySample {
  double kx = 0.0;
  double kz = 0.0;
  Frequency omega;
};

/// Maximum relative violation of each relation over the samples.
struct SymmetryReport {
  double schwarz = 0.0;      // R_{-m-n}(-kx,-kz,-w*) = R*_{mn}(kx,kz,w)
  double onsager = 0.0;      // R_{-n-m}(-kx,-kz,w)/ky^m = +-R^{s's}_{mn}(kx,kz,w)/ky^n
  double kz_parity = 0.0;    // R(kx,-kz) = +-R(kx,kz)
  double mirror = 0.0;       // R_{-m-n}(-kx,kz) = +-R_{mn}(kx,kz); holds only for f(-x) = f(x)
  bool mirror_expected = false;
  double combined = 0.0;     // R*_{nm}(i xi)/ky^m = +-R^{s's}_{mn}(i xi)/ky^n
  double kz0_cross = 0.0;    // max |R^{EH}|, |R^{HE}| relative to max |R| at kz = 0
  int samples = 0;
  int imaginary_samples = 0;
};

namespace detail {

/// Reverse the order index inside each polarization block (n -> -n).
inline MatrixXcd flip_orders(const MatrixXcd& m, int K) {
  Eigen::PermutationMatrix<Eigen::Dynamic> p(2 * K);
  for (int s = 0; s < 2; ++s)
    for (int i = 0; i < K; ++i) p.indices()(s * K + i) = s * K + (K - 1 - i);
  return p * m * p.transpose();
}

/// +1 on polarization-diagonal blocks, -1 on the cross blocks.
inline MatrixXcd signed_blocks(const MatrixXcd& m, int K) {
  MatrixXcd out = m;
  out.topRightCorner(K, K) *= -1.0;
  out.bottomLeftCorner(K, K) *= -1.0;
  return out;
}

inline double rel_violation(const MatrixXcd& lhs, const MatrixXcd& rhs) {
  const double scale = std::max({lhs.cwiseAbs().maxCoeff(), rhs.cwiseAbs().maxCoeff(), 1e-300});
  return (lhs - rhs).cwiseAbs().maxCoeff() / scale;
}

/// ky duplicated over both polarization blocks.
inline VectorXcd ky_both(const VacuumModes& vm) {
  const auto K = vm.ky.size();
  VectorXcd k(2 * K);
  k << vm.ky, vm.ky;
  return k;
}

}  // namespace detail

inline SymmetryReport check_symmetries(const GratingSpec& g, std::span<const SymmetrySample> samples,
                                       Truncation t, const SolverOptions& opts = {}) {
  SymmetryReport rep;
  const int K = t.size();
  rep.mirror_expected = g.is_mirror_symmetric();
  for (const auto& s : samples) {
    const auto base = solve_rayleigh(s.kx, s.kz, s.omega, g, t, opts);
    const MatrixXcd& r = base.polarization.R;
    const VectorXcd ky = detail::ky_both(base.modes);

    const auto sch = solve_rayleigh(-s.kx, -s.kz, s.omega.reflected(), g, t, opts);
    rep.schwarz = std::max(rep.schwarz, detail::rel_violation(
                                            detail::flip_orders(sch.polarization.R, K), r.conjugate()));

    const auto ons = solve_rayleigh(-s.kx, -s.kz, s.omega, g, t, opts);
    const MatrixXcd p = detail::flip_orders(ons.polarization.R, K);
    rep.onsager = std::max(
        rep.onsager, detail::rel_violation(p.transpose() * ky.asDiagonal(),
                                           detail::signed_blocks(ky.asDiagonal() * r, K)));

    const auto par = solve_rayleigh(s.kx, -s.kz, s.omega, g, t, opts);
    rep.kz_parity = std::max(rep.kz_parity, detail::rel_violation(par.polarization.R,
                                                                  detail::signed_blocks(r, K)));
    const auto mir = solve_rayleigh(-s.kx, s.kz, s.omega, g, t, opts);
    rep.mirror = std::max(rep.mirror,
                          detail::rel_violation(detail::flip_orders(mir.polarization.R, K),
                                                detail::signed_blocks(r, K)));
    if (s.omega.is_imaginary()) {
      rep.combined = std::max(
          rep.combined,
          detail::rel_violation(MatrixXcd(r.adjoint()) * ky.asDiagonal(),
                                detail::signed_blocks(ky.asDiagonal() * r, K)));
      ++rep.imaginary_samples;
    }
    const auto flat = solve_rayleigh(s.kx, 0.0, s.omega, g, t, opts);
    const double scale = std::max(flat.polarization.R.cwiseAbs().maxCoeff(), 1e-300);
    const double cross = std::max(flat.R(Polarization::E, Polarization::H).cwiseAbs().maxCoeff(),
                                  flat.R(Polarization::H, Polarization::E).cwiseAbs().maxCoeff());
    rep.kz0_cross = std::max(rep.kz0_cross, cross / scale);
    ++rep.samples;
  }
  return rep;
}

/// Largest change of R entries with |n|, |m| <= window between truncations N and N + dN,
/// each relative to the largest |R| of its polarization block.
inline double truncation_change(double kx, double kz, const Frequency& omega,
                                const GratingSpec& g, int N, int dN, int window = 2) {
  const auto a = solve_rayleigh(kx, kz, omega, g, Truncation{N});
  const auto b = solve_rayleigh(kx, kz, omega, g, Truncation{N + dN});
  const int w = std::min(window, N);
  double worst = 0.0;
  for (auto so : {Polarization::E, Polarization::H}) {
    for (auto si : {Polarization::E, Polarization::H}) {
      double scale = 0.0;
      for (int n = -w; n <= w; ++n)
        for (int m = -w; m <= w; ++m) scale = std::max(scale, std::abs(b.r(so, si, n, m)));
      if (scale == 0.0) continue;
      for (int n = -w; n <= w; ++n)
        for (int m = -w; m <= w; ++m)
          worst = std::max(worst, std::abs(a.r(so, si, n, m) - b.r(so, si, n, m)) / scale);
    }
  }
  return worst;
}

}  // namespace cpgrating
