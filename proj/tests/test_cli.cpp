#include <gtest/gtest.h>

#include <rapidjson/document.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cpgrating/config.hpp"
#include "cpgrating/run.hpp"

using namespace cpgrating;

namespace {

std::string message_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

// small enough to run in well under a second
const char* kSmallRun = R"({
  "schema_version": 1,
  "grating": {"period": 1e-6, "height": 100e-9, "width": 0.4e-6,
              "material": {"model": "gold-drude"}},
  "atom": {"preset": "rubidium"},
  "numerics": {"truncation": 2, "xi_nodes": 8, "kx_nodes": 4, "kz_nodes": 8},
  "sweep": {"type": "lateral", "y": 300e-9, "x": [0.0, 0.25e-6, 0.5e-6]},
  "mode": "full",
  "threads": 1
})";

std::string csv_of(const RunResult& r, int precision = 15) {
  std::ostringstream os;
  write_csv(os, r.rows, precision);
  return os.str();
}

}  // namespace

TEST(ParseConfig, PresetFig2) {
  const auto c = parse_config(R"({"schema_version": 1, "preset": "paper-fig2"})");
  EXPECT_DOUBLE_EQ(c.grating.d, 4e-6);
  EXPECT_DOUBLE_EQ(c.grating.w, 2e-6);
  EXPECT_DOUBLE_EQ(c.grating.h, 20e-9);
  EXPECT_DOUBLE_EQ(c.grating.x0, 0.0);
  const auto* au = std::get_if<DrudeModel>(&c.grating.material);
  ASSERT_NE(au, nullptr);
  EXPECT_DOUBLE_EQ(au->plasma_frequency, 1.37e16);
  EXPECT_DOUBLE_EQ(au->damping, 5.3e13);
  for (int a = 0; a < 3; ++a) {
    ASSERT_EQ(c.atom.axes[a].size(), 1u);
    EXPECT_DOUBLE_EQ(c.atom.axes[a][0].omega, 2.42e15);
  }
  EXPECT_EQ(c.sweep.kind, SweepKind::normal);
  EXPECT_DOUBLE_EQ(c.sweep.ys.front(), 200e-9);
  EXPECT_NEAR(c.sweep.ys.back(), 1500e-9, 1e-15);
  EXPECT_EQ(c.sweep.xs, std::vector<double>{0.0});
}

TEST(ParseConfig, PresetFig3IsLateralCompare) {
  const auto c = parse_config(R"({"schema_version": 1, "preset": "paper-fig3"})");
  EXPECT_EQ(c.sweep.kind, SweepKind::lateral);
  EXPECT_EQ(c.mode, RunMode::compare);
  EXPECT_EQ(c.sweep.ys, std::vector<double>{700e-9});
  EXPECT_DOUBLE_EQ(c.sweep.xs.front(), 0.0);
  EXPECT_DOUBLE_EQ(c.sweep.xs.back(), c.grating.d);
}

TEST(ParseConfig, KeysOverridePreset) {
  const auto c = parse_config(R"({"schema_version": 1, "preset": "paper-fig2",
    "grating": {"height": 50e-9}, "atom": {"preset": "rubidium", "axes": ["y"]},
    "numerics": {"truncation": 14}, "mode": "large", "threads": 2})");
  EXPECT_DOUBLE_EQ(c.grating.h, 50e-9);
  EXPECT_DOUBLE_EQ(c.grating.d, 4e-6);
  EXPECT_TRUE(c.atom.axes[0].empty());
  EXPECT_EQ(c.atom.axes[1].size(), 1u);
  EXPECT_EQ(c.quad.green.trunc.N, 14);
  EXPECT_EQ(c.mode, RunMode::large_period);
  EXPECT_EQ(c.threads, 2);
}

TEST(ParseConfig, DefaultsWithoutNumerics) {
  const auto c = parse_config(R"({"schema_version": 1, "preset": "paper-fig2"})");
  EXPECT_EQ(c.quad.green.trunc.N, 10);
  EXPECT_EQ(c.quad.xi.nodes, 40);
  EXPECT_EQ(c.quad.green.kx_nodes, 24);
  EXPECT_EQ(c.quad.green.kz_nodes, 48);
  EXPECT_EQ(c.precision, 15);
  EXPECT_TRUE(c.error_estimate);
}

TEST(ParseConfig, BarWiderThanPeriod) {
  const std::string msg = message_of(R"({"schema_version": 1, "preset": "paper-fig2",
    "grating": {"period": 4e-6, "width": 5e-6}})");
  EXPECT_NE(msg.find("grating.width"), std::string::npos) << msg;
  EXPECT_NE(msg.find("exceeds grating.period"), std::string::npos) << msg;
}

TEST(ParseConfig, UnknownKeyReportsPathAndLine) {
  const std::string msg = message_of("{\n  \"schema_version\": 1,\n  \"preset\": \"paper-fig2\",\n"
                                     "  \"grating\": {\"period\": 4e-6, \"perod\": 1}\n}");
  EXPECT_NE(msg.find("/grating"), std::string::npos) << msg;
  EXPECT_NE(msg.find("line 4"), std::string::npos) << msg;
  EXPECT_NE(msg.find("unknown key"), std::string::npos) << msg;
}

TEST(ParseConfig, SyntaxErrorReportsLine) {
  const std::string msg = message_of("{\n  \"schema_version\": 1,\n  \"preset\" \"paper-fig2\"\n}");
  EXPECT_NE(msg.find("not valid JSON"), std::string::npos) << msg;
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
}

TEST(ParseConfig, SchemaAndPhysicalViolations) {
  EXPECT_FALSE(message_of(R"({"preset": "paper-fig2"})").empty());
  EXPECT_FALSE(message_of(R"({"schema_version": 2, "preset": "paper-fig2"})").empty());
  EXPECT_NE(message_of(R"({"schema_version": 1, "preset": "paper-fig2",
    "numerics": {"kz_nodes": 2}})").find("/numerics/kz_nodes"), std::string::npos);
  EXPECT_NE(message_of(R"({"schema_version": 1, "preset": "paper-fig2",
    "sweep": {"type": "normal", "x": 0.0, "y": [3e-7, 2e-7]}})").find("strictly increasing"),
            std::string::npos);
  EXPECT_NE(message_of(R"({"schema_version": 1})").find("grating.period"), std::string::npos);
  EXPECT_NE(message_of(R"({"schema_version": 1, "preset": "paper-fig2", "mode": "fast"})")
                .find("/mode"),
            std::string::npos);
}

TEST(ParseConfig, ShippedConfigsAreValid) {
  const std::filesystem::path dir = CPGRATING_CONFIG_DIR;
  int n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_config(e.path().string())) << e.path();
    ++n;
  }
  EXPECT_GE(n, 2);
}

TEST(Csv, RoundTripAtEmittedPrecision) {
  std::vector<PotentialResult> rows(2);
  rows[0].x = 1.0 / 3.0 * 1e-6;
  rows[0].y = 3e-7;
  rows[0].U_xx = -1.234567890123456789e-30;
  rows[0].U_yy = 2.0 / 7.0 * 1e-30;
  rows[0].U_zz = -std::sqrt(2.0) * 1e-31;
  rows[0].U_total = rows[0].U_xx + rows[0].U_yy + rows[0].U_zz;
  rows[0].error_estimate = 1e-36;
  rows[0].mode = "full";
  rows[1] = rows[0];
  rows[1].mode = "large";
  for (int precision : {12, 15, 17}) {
    std::stringstream ss;
    write_csv(ss, rows, precision);
    const auto back = read_csv(ss);
    ASSERT_EQ(back.size(), rows.size());
    const double tol = precision == 17 ? 0.0 : std::pow(10.0, 1 - precision);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      EXPECT_EQ(back[i].mode, rows[i].mode);
      const double a[] = {rows[i].x, rows[i].y, rows[i].U_xx, rows[i].U_yy, rows[i].U_zz,
                          rows[i].U_total, rows[i].error_estimate};
      const double b[] = {back[i].x, back[i].y, back[i].U_xx, back[i].U_yy, back[i].U_zz,
                          back[i].U_total, back[i].error_estimate};
      for (int k = 0; k < 7; ++k) EXPECT_LE(std::abs(a[k] - b[k]), tol * std::abs(a[k])) << k;
    }
    std::stringstream again;
    write_csv(again, back, precision);
    std::stringstream first;
    write_csv(first, rows, precision);
    EXPECT_EQ(again.str(), first.str());
  }
}

TEST(Csv, HeaderAndPrecisionEnforced) {
  std::ostringstream os;
  write_csv(os, {});
  EXPECT_EQ(os.str(), std::string(kCsvHeader) + "\n");
  EXPECT_THROW(write_csv(os, {}, 11), ConfigError);
  std::istringstream bad("x,y,U\n1,2,3\n");
  EXPECT_THROW(read_csv(bad), ConfigError);
  std::istringstream garbage(std::string(kCsvHeader) + "\n1,2,3,4,5,6,abc,full\n");
  EXPECT_THROW(read_csv(garbage), ConfigError);
}

TEST(Run, ZeroPolarizabilityGivesZeroColumns) {
  auto c = parse_config(kSmallRun);
  c.atom = PolarizabilityTensor::isotropic({Oscillator{0.0, 2.42e15}});
  const auto r = run(c);
  ASSERT_EQ(r.rows.size(), 3u);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.U_xx, 0.0);
    EXPECT_EQ(row.U_yy, 0.0);
    EXPECT_EQ(row.U_zz, 0.0);
    EXPECT_EQ(row.U_total, 0.0);
  }
}

TEST(Run, RowsFollowSweepOrder) {
  auto c = parse_config(kSmallRun);
  c.mode = RunMode::compare;
  const auto r = run(c);
  ASSERT_EQ(r.rows.size(), 9u);
  const char* modes[] = {"full", "small", "large"};
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    EXPECT_EQ(r.rows[i].mode, modes[i % 3]);
    EXPECT_EQ(r.rows[i].x, c.sweep.xs[i / 3]);
    EXPECT_EQ(r.rows[i].y, 300e-9);
  }
  ASSERT_EQ(r.deviations.size(), 2u);
  EXPECT_EQ(r.deviations[0].mode, "small");
  EXPECT_EQ(r.deviations[1].mode, "large");
  for (const auto& d : r.deviations) EXPECT_GT(d.max_relative, 0.0);
  // small-period rows carry the same potential at every x
  EXPECT_EQ(r.rows[1].U_total, r.rows[4].U_total);
}

TEST(Run, DeterministicCsv) {
  auto c = parse_config(kSmallRun);
  const std::string a = csv_of(run(c));
  const std::string b = csv_of(run(c));
  EXPECT_EQ(a, b);
  c.threads = 3;
  EXPECT_EQ(csv_of(run(c)), a);
}

TEST(Run, ReportAndLog) {
  const auto c = parse_config(kSmallRun);
  const auto r = run(c, true);
  std::ostringstream rep;
  write_report(rep, c, r);
  const std::string text = rep.str();
  EXPECT_NE(text.find("U_total [Hz]"), std::string::npos);
  EXPECT_NE(text.find("max relative error estimate"), std::string::npos);
  EXPECT_NE(text.find("convergence probe"), std::string::npos);
  EXPECT_NE(text.find("wall time"), std::string::npos);
  EXPECT_NE(text.find("1 thread(s)"), std::string::npos);

  std::ostringstream log;
  write_log(log, c, r);
  rapidjson::Document d;
  d.Parse(log.str().c_str());
  ASSERT_FALSE(d.HasParseError());
  EXPECT_EQ(d["schema_version"].GetInt(), kConfigSchemaVersion);
  ASSERT_EQ(d["points"].Size(), 3u);
  EXPECT_DOUBLE_EQ(d["points"][0]["U_total"].GetDouble(), r.rows[0].U_total);
  EXPECT_NEAR(d["points"][0]["U_total_hz"].GetDouble(), to_hertz(r.rows[0].U_total),
              1e-12 * std::abs(to_hertz(r.rows[0].U_total)));
}

TEST(Probe, VacuumGratingPasses) {
  auto c = parse_config(kSmallRun);
  c.grating.h = 0.0;
  const auto rep = convergence_probe(c);
  ASSERT_FALSE(rep.checks.empty());
  for (const auto& chk : rep.checks) EXPECT_EQ(chk.change, 0.0) << chk.name;
  EXPECT_TRUE(rep.pass());
}

TEST(Probe, TinyTruncationFails) {
  auto c = parse_config(kSmallRun);
  c.quad.green.trunc.N = 1;
  const auto rep = convergence_probe(c);
  EXPECT_FALSE(rep.pass());
  bool flagged = false;
  for (const auto& chk : rep.checks)
    if (chk.name == "truncation" && !chk.pass) flagged = true;
  EXPECT_TRUE(flagged);
}

TEST(Probe, PointsAreSweepExtremes) {
  auto c = parse_config(kSmallRun);
  const auto pts = probe_points(c);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0].first, 0.0);
  EXPECT_EQ(pts[1].first, 0.5e-6);
}

#ifdef CPGRATING_COMPUTE_PATH
TEST(ComputeTool, WritesCsvAndReport) {
  const auto dir = std::filesystem::temp_directory_path() / "cpgrating_cli_test";
  std::filesystem::create_directories(dir);
  const auto cfg = dir / "small.json";
  const auto csv = dir / "small.csv";
  const auto out = dir / "report.txt";
  std::ofstream(cfg) << kSmallRun;
  std::filesystem::remove(csv);
  const std::string cmd = std::string("\"") + CPGRATING_COMPUTE_PATH + "\" --config \"" +
                          cfg.string() + "\" --mode compare --threads 1 --out \"" + csv.string() +
                          "\" > \"" + out.string() + "\" 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  std::ifstream in(csv);
  const auto rows = read_csv(in);
  EXPECT_EQ(rows.size(), 9u);
  std::ifstream rep(out);
  const std::string text((std::istreambuf_iterator<char>(rep)), std::istreambuf_iterator<char>());
  EXPECT_NE(text.find("max relative deviation large vs full"), std::string::npos) << text;

  std::ofstream(cfg) << R"({"schema_version": 1, "preset": "paper-fig2", "grating": {"width": 9e-6}})";
  const std::string bad = std::string("\"") + CPGRATING_COMPUTE_PATH + "\" --config \"" +
                          cfg.string() + "\" > \"" + out.string() + "\" 2>&1";
  EXPECT_NE(std::system(bad.c_str()), 0);
  std::filesystem::remove_all(dir);
}
#endif
