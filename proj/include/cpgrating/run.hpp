#pragma once

// Scenario execution for the compute tool: sweeps, asymptote comparison,
// convergence probe, CSV and report output.

#include <rapidjson/ostreamwrapper.h>
#include <rapidjson/prettywriter.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cpgrating/config.hpp"
#include "cpgrating/constants.hpp"
#include "cpgrating/cp_potential.hpp"
#include "cpgrating/parallel.hpp"
#include "cpgrating/rayleigh.hpp"
#include "cpgrating/results.hpp"

namespace cpgrating {

/// Worst deviation of one asymptote from the full potential over a sweep.
struct Deviation {
  std::string mode;
  double max_relative = 0.0;  // max |U_asym - U_full| / |U_full| on U_total
  double at_x = 0.0;
  double at_y = 0.0;
  /// max over components and points of |dU_ii| / max |U_full,ii| over the sweep
  double max_scaled = 0.0;
};

struct ProbeCheck {
  std::string name;  // "truncation" or "nodes"
  double x = 0.0;
  double y = 0.0;
  double change = 0.0;
  double threshold = 0.0;
  bool pass = true;
  std::string detail;
};

struct ProbeReport {
  std::vector<ProbeCheck> checks;
  bool pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const ProbeCheck& c) { return c.pass; });
  }
};

struct RunResult {
  std::vector<PotentialResult> rows;
  std::vector<Deviation> deviations;
  std::optional<ProbeReport> probe;
  std::vector<std::string> warnings;
  double wall_seconds = 0.0;
  int threads = 1;
};

// --- convergence probe -----------------------------------------------------------

/// Worst truncation_change over a few imaginary-axis nodes typical of height y.
inline double probe_truncation_change(const GratingSpec& g, double y, int N, int step) {
  const Frequency omega = Frequency::imaginary_axis(si::c / (2.0 * y));
  double worst = 0.0;
  for (double fx : {0.0, 0.25})
    for (double fz : {0.0, 1.0, 5.0})
      worst = std::max(worst, truncation_change(fx * g.q(), fz / (2.0 * y), omega, g, N, step));
  return worst;
}

/// Relative change of U_total at (x, y) when every node count is doubled.
inline double node_doubling_change(double x, double y, const RunConfig& c) {
  CpOptions o = c.cp_options();
  o.error_estimate = false;
  const auto a = cp_potential(x, y, c.atom, c.grating, c.quad, o);
  const auto b = cp_potential(x, y, c.atom, c.grating, c.quad.doubled(), o);
  if (a.U_total == 0.0) return b.U_total == 0.0 ? 0.0 : 1.0;
  return std::abs(b.U_total - a.U_total) / std::abs(a.U_total);
}

/// Probe points: where |U_total| of the full rows is largest and smallest, or the first and
/// last sweep points when no rows are available.
inline std::vector<std::pair<double, double>> probe_points(
    const RunConfig& c, const std::vector<PotentialResult>* rows = nullptr) {
  std::vector<std::pair<double, double>> pts;
  std::vector<const PotentialResult*> full;
  if (rows)
    for (const auto& r : *rows)
      if (r.mode == "full") full.push_back(&r);
  if (!full.empty()) {
    auto by_mag = [](const PotentialResult* a, const PotentialResult* b) {
      return std::abs(a->U_total) < std::abs(b->U_total);
    };
    const auto lo = *std::min_element(full.begin(), full.end(), by_mag);
    const auto hi = *std::max_element(full.begin(), full.end(), by_mag);
    pts.emplace_back(hi->x, hi->y);
    pts.emplace_back(lo->x, lo->y);
  } else {
    pts.emplace_back(c.sweep.xs.front(), c.sweep.ys.front());
    pts.emplace_back(c.sweep.xs.back(), c.sweep.ys.back());
  }
  if (pts[0] == pts[1]) pts.pop_back();
  return pts;
}

inline ProbeReport convergence_probe(const RunConfig& c,
                                     const std::vector<PotentialResult>* rows = nullptr) {
  ProbeReport rep;
  const int N = c.quad.green.trunc.N;
  const int step = c.probe.truncation_step;
  std::vector<double> ys_done;
  for (const auto& [x, y] : probe_points(c, rows)) {
    if (std::find(ys_done.begin(), ys_done.end(), y) == ys_done.end()) {
      ys_done.push_back(y);
      ProbeCheck t;
      t.name = "truncation";
      t.x = x;
      t.y = y;
      t.change = probe_truncation_change(c.grating, y, N, step);
      t.threshold = c.probe.truncation_tolerance;
      t.pass = t.change < t.threshold;
      t.detail = "max |R(N=" + std::to_string(N + step) + ") - R(N=" + std::to_string(N) +
                 ")| / max |R| per polarization block, |n|,|m| <= 2";
      rep.checks.push_back(t);
    }
    ProbeCheck d;
    d.name = "nodes";
    d.x = x;
    d.y = y;
    d.change = node_doubling_change(x, y, c);
    d.threshold = c.probe.node_tolerance;
    d.pass = d.change < d.threshold;
    d.detail = "|U_total(2x nodes) - U_total| / |U_total|";
    rep.checks.push_back(d);
  }
  return rep;
}

// --- sweep -------------------------------------------------------------------------

inline std::vector<Deviation> compare_deviations(const std::vector<PotentialResult>& rows) {
  std::vector<Deviation> out;
  for (const char* mode : {"small", "large"}) {
    Deviation dev;
    dev.mode = mode;
    std::array<double, 3> scale{0.0, 0.0, 0.0};
    for (const auto& r : rows)
      if (r.mode == "full") {
        scale[0] = std::max(scale[0], std::abs(r.U_xx));
        scale[1] = std::max(scale[1], std::abs(r.U_yy));
        scale[2] = std::max(scale[2], std::abs(r.U_zz));
      }
    bool any = false;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].mode != mode) continue;
      const auto it = std::find_if(rows.begin(), rows.end(), [&](const PotentialResult& f) {
        return f.mode == "full" && f.x == rows[i].x && f.y == rows[i].y;
      });
      if (it == rows.end()) continue;
      const auto& f = *it;
      const auto& a = rows[i];
      const double rel = f.U_total != 0.0 ? std::abs(a.U_total - f.U_total) / std::abs(f.U_total)
                                          : (a.U_total == 0.0 ? 0.0 : 1.0);
      if (!any || rel > dev.max_relative) {
        dev.max_relative = rel;
        dev.at_x = a.x;
        dev.at_y = a.y;
      }
      any = true;
      const double d[3] = {a.U_xx - f.U_xx, a.U_yy - f.U_yy, a.U_zz - f.U_zz};
      for (int k = 0; k < 3; ++k)
        if (scale[k] > 0.0) dev.max_scaled = std::max(dev.max_scaled, std::abs(d[k]) / scale[k]);
    }
    if (any) out.push_back(dev);
  }
  return out;
}

/// Executes the configured sweep. Rows follow the sweep order (y outer, x inner); in compare
/// mode each point yields a full, a small and a large row.
inline RunResult run(const RunConfig& c, bool probe = false) {
  c.validate();
  const auto t0 = std::chrono::steady_clock::now();
  RunResult res;
  res.threads = resolve_threads(c.threads);
  CpOptions opts = c.cp_options();
  opts.sink = [&res](const SolverDiagnostic& d) { res.warnings.push_back(d.event); };

  std::array<bool, 3> modes{false, false, false};
  switch (c.mode) {
    case RunMode::full:
      modes[0] = true;
      break;
    case RunMode::small_period:
      modes[1] = true;
      break;
    case RunMode::large_period:
      modes[2] = true;
      break;
    case RunMode::compare:
      modes = {true, true, true};
      break;
  }

  for (double y : c.sweep.ys) {
    const auto prof = cp_profile(c.sweep.xs, y, c.atom, c.grating, c.quad, modes, opts);
    for (std::size_t i = 0; i < c.sweep.xs.size(); ++i)
      for (int m = 0; m < 3; ++m)
        if (modes[m]) res.rows.push_back(prof.by_mode(static_cast<CpMode>(m))[i]);
  }
  if (c.mode == RunMode::compare) res.deviations = compare_deviations(res.rows);
  if (probe) res.probe = convergence_probe(c, &res.rows);
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

// --- output ------------------------------------------------------------------------

inline constexpr const char* kCsvHeader = "x,y,U_xx,U_yy,U_zz,U_total,err,mode";

/// One row per point, `precision` significant digits in scientific notation.
inline void write_csv(std::ostream& os, const std::vector<PotentialResult>& rows, int precision = 15) {
  if (precision < 12 || precision > 17) throw ConfigError("CSV precision must lie in [12, 17]");
  os << kCsvHeader << '\n';
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.*e", precision - 1, v);
    os << buf;
  };
  for (const auto& r : rows) {
    for (double v : {r.x, r.y, r.U_xx, r.U_yy, r.U_zz, r.U_total, r.error_estimate}) {
      num(v);
      os << ',';
    }
    os << r.mode << '\n';
  }
}

inline std::vector<PotentialResult> read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader)
    throw ConfigError("CSV header must be '" + std::string(kCsvHeader) + "'");
  std::vector<PotentialResult> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    double v[7];
    for (double& d : v) {
      if (!std::getline(ss, cell, ',')) throw ConfigError("CSV line " + std::to_string(lineno) + " is short");
      std::size_t used = 0;
      try {
        d = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cell.size())
        throw ConfigError("CSV line " + std::to_string(lineno) + ": bad number '" + cell + "'");
    }
    PotentialResult r;
    r.x = v[0];
    r.y = v[1];
    r.U_xx = v[2];
    r.U_yy = v[3];
    r.U_zz = v[4];
    r.U_total = v[5];
    r.error_estimate = v[6];
    if (!std::getline(ss, r.mode)) throw ConfigError("CSV line " + std::to_string(lineno) + " has no mode");
    rows.push_back(r);
  }
  return rows;
}

/// U / (2 pi hbar), the potential as a frequency.
inline double to_hertz(double joule) { return joule / (2.0 * kPi * si::hbar); }

inline void write_report(std::ostream& os, const RunConfig& c, const RunResult& r) {
  const auto& g = c.grating;
  os << "grating   d = " << g.d << " m, w = " << g.w << " m, h = " << g.h << " m, x0 = " << g.x0
     << " m\n";
  os << "numerics  N = " << c.quad.green.trunc.N << ", nodes (xi, kx, kz) = (" << c.quad.xi.nodes
     << ", " << c.quad.green.kx_nodes << ", " << c.quad.green.kz_nodes << ")\n";
  os << "sweep     " << to_string(c.sweep.kind) << ", " << c.sweep.size() << " point(s), mode "
     << to_string(c.mode) << "\n";
  os << std::setw(13) << "x [m]" << std::setw(13) << "y [m]" << std::setw(7) << "mode"
     << std::setw(16) << "U_total [J]" << std::setw(16) << "U_total [Hz]" << std::setw(12)
     << "err/|U|" << '\n';
  double worst = 0.0;
  for (const auto& row : r.rows) {
    const double rel = row.U_total != 0.0 ? row.error_estimate / std::abs(row.U_total) : 0.0;
    worst = std::max(worst, rel);
    os << std::setw(13) << std::setprecision(5) << row.x << std::setw(13) << row.y << std::setw(7)
       << row.mode << std::setw(16) << std::setprecision(7) << row.U_total << std::setw(16)
       << to_hertz(row.U_total) << std::setw(12) << std::setprecision(3) << rel << '\n';
  }
  os << std::setprecision(6);
  if (c.error_estimate) os << "max relative error estimate " << worst << '\n';
  for (const auto& d : r.deviations)
    os << "max relative deviation " << d.mode << " vs full: " << d.max_relative << " at x = " << d.at_x
       << " m, y = " << d.at_y << " m (component deviation / profile max: " << d.max_scaled << ")\n";
  if (r.probe) {
    for (const auto& p : r.probe->checks)
      os << "probe " << p.name << " at (x = " << p.x << " m, y = " << p.y << " m): " << p.change
         << (p.pass ? " < " : " >= ") << p.threshold << (p.pass ? "  PASS" : "  FAIL") << "  ["
         << p.detail << "]\n";
    os << "convergence probe " << (r.probe->pass() ? "PASS" : "FAIL") << '\n';
  }
  for (const auto& w : r.warnings) os << "warning: " << w << '\n';
  os << "wall time " << r.wall_seconds << " s on " << r.threads << " thread(s)\n";
}

/// Structured run log (JSON).
inline void write_log(std::ostream& os, const RunConfig& c, const RunResult& r) {
  rapidjson::OStreamWrapper out(os);
  rapidjson::PrettyWriter<rapidjson::OStreamWrapper> w(out);
  w.StartObject();
  w.Key("schema_version");
  w.Int(kConfigSchemaVersion);
  w.Key("preset");
  w.String(c.preset.c_str());
  w.Key("mode");
  w.String(to_string(c.mode));
  w.Key("truncation");
  w.Int(c.quad.green.trunc.N);
  w.Key("nodes");
  w.StartArray();
  w.Int(c.quad.xi.nodes);
  w.Int(c.quad.green.kx_nodes);
  w.Int(c.quad.green.kz_nodes);
  w.EndArray();
  w.Key("threads");
  w.Int(r.threads);
  w.Key("wall_seconds");
  w.Double(r.wall_seconds);
  w.Key("points");
  w.StartArray();
  for (const auto& row : r.rows) {
    w.StartObject();
    w.Key("x");
    w.Double(row.x);
    w.Key("y");
    w.Double(row.y);
    w.Key("mode");
    w.String(row.mode.c_str());
    w.Key("U");
    w.StartArray();
    w.Double(row.U_xx);
    w.Double(row.U_yy);
    w.Double(row.U_zz);
    w.EndArray();
    w.Key("U_total");
    w.Double(row.U_total);
    w.Key("U_total_hz");
    w.Double(to_hertz(row.U_total));
    w.Key("err");
    w.Double(row.error_estimate);
    w.Key("imag_residue");
    w.Double(row.imag_residue);
    w.EndObject();
  }
  w.EndArray();
  w.Key("deviations");
  w.StartArray();
  for (const auto& d : r.deviations) {
    w.StartObject();
    w.Key("mode");
    w.String(d.mode.c_str());
    w.Key("max_relative");
    w.Double(d.max_relative);
    w.Key("x");
    w.Double(d.at_x);
    w.Key("y");
    w.Double(d.at_y);
    w.Key("max_scaled");
    w.Double(d.max_scaled);
    w.EndObject();
  }
  w.EndArray();
  if (r.probe) {
    w.Key("probe");
    w.StartObject();
    w.Key("pass");
    w.Bool(r.probe->pass());
    w.Key("checks");
    w.StartArray();
    for (const auto& p : r.probe->checks) {
      w.StartObject();
      w.Key("name");
      w.String(p.name.c_str());
      w.Key("x");
      w.Double(p.x);
      w.Key("y");
      w.Double(p.y);
      w.Key("change");
      w.Double(p.change);
      w.Key("threshold");
      w.Double(p.threshold);
      w.Key("pass");
      w.Bool(p.pass);
      w.EndObject();
    }
    w.EndArray();
    w.EndObject();
  }
  w.Key("warnings");
  w.StartArray();
  for (const auto& s : r.warnings) w.String(s.c_str());
  w.EndArray();
  w.EndObject();
  os << '\n';
}

}  // namespace cpgrating
