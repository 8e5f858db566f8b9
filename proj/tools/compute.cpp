#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>

#include "cpgrating/config.hpp"
#include "cpgrating/run.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Casimir-Polder potential of an atom above a lamellar grating"};
  std::string config_path;
  std::string mode;
  int threads = -1;
  std::string out_path;
  bool probe = false;
  app.add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
  app.add_option("--mode", mode, "full, small, large or compare (overrides the config)")
      ->check(CLI::IsMember({"full", "small", "large", "compare"}));
  app.add_option("--threads", threads, "worker threads, 0 = all hardware threads")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--out", out_path, "CSV output file (overrides the config)");
  app.add_flag("--probe", probe, "run the N -> N+4 and node-doubling convergence probe");
  CLI11_PARSE(app, argc, argv);

  cpgrating::RunConfig cfg;
  try {
    cfg = cpgrating::load_config(config_path);
    if (!mode.empty()) cfg.mode = cpgrating::parse_run_mode(mode);
    if (threads >= 0) cfg.threads = threads;
    if (!out_path.empty()) cfg.output_path = out_path;
  } catch (const cpgrating::Error& e) {
    std::cerr << "compute: " << e.what() << '\n';
    return 1;
  }

  // With no CSV file the table goes to stdout and the report to stderr.
  std::ostream& report = cfg.output_path.empty() ? std::cerr : std::cout;
  cpgrating::RunResult res;
  try {
    res = cpgrating::run(cfg, probe);
  } catch (const cpgrating::ConvergenceError& e) {
    std::cerr << "compute: " << e.what() << " (achieved " << e.achieved() << ")\n";
    return 2;
  } catch (const cpgrating::Error& e) {
    std::cerr << "compute: " << e.what() << '\n';
    return 2;
  }

  if (cfg.output_path.empty()) {
    cpgrating::write_csv(std::cout, res.rows, cfg.precision);
  } else {
    std::ofstream csv(cfg.output_path);
    if (!csv) {
      std::cerr << "compute: cannot write '" << cfg.output_path << "'\n";
      return 1;
    }
    cpgrating::write_csv(csv, res.rows, cfg.precision);
  }
  cpgrating::write_report(report, cfg, res);
  if (!cfg.log_path.empty()) {
    std::ofstream log(cfg.log_path);
    if (!log) {
      std::cerr << "compute: cannot write '" << cfg.log_path << "'\n";
      return 1;
    }
    cpgrating::write_log(log, cfg, res);
  }
  return 0;
}
