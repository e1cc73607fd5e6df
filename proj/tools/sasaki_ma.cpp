// sasaki-ma: command-line front end over sasaki::cli.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sasaki/cli/run.hpp"

namespace {

void apply_thread_env() {
  const char* s = std::getenv("SASAKI_THREADS");
  if (!s || !*s) return;
  char* end = nullptr;
  const long k = std::strtol(s, &end, 10);
  if (*end != '\0' || k < 1) throw sasaki::ConfigError(std::string("SASAKI_THREADS must be a positive integer, got '") + s + "'");
#ifdef _OPENMP
  omp_set_num_threads(static_cast<int>(k));
#endif
}

nlohmann::json read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw sasaki::ConfigError("cannot read report '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw sasaki::ConfigError("report '" + path + "' is not valid JSON: " + e.what());
  }
}

int run_command(const std::string& command, const std::string& config, const std::optional<std::string>& out,
                const std::optional<std::uint64_t>& seed) {
  const auto cfg = sasaki::cli::load_config(config, command, seed, out);
  const auto rep = sasaki::cli::run(cfg);
  sasaki::cli::persist(rep, cfg.outputs);
  for (const auto& a : rep.assertions)
    if (!a.ok) std::cerr << "FAIL " << a.name << ": value " << a.value << " bound " << a.bound << "\n";
  std::cout << rep.command << ": " << (rep.all_ok() ? "ok" : "assertion failure")
            << (rep.nonconvergence ? " (nonconvergence)" : "") << ", report in " << cfg.outputs << "\n";
  return rep.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical laboratory for transverse Monge-Ampere and curvature estimates on Sasakian charts"};
  app.require_subcommand(1);

  std::string config, out_dir;
  std::uint64_t seed = 0;
  std::string report_a, report_b;
  double tol = 0.0;

  const char* commands[] = {"curvature", "solve", "chern", "verify", "royden"};
  for (const char* name : commands) {
    auto* sub = app.add_subcommand(name, std::string("run '") + name + "' from a JSON config");
    sub->add_option("--config", config, "run config")->required();
    sub->add_option("--out", out_dir, "output directory (overrides config outputs)");
    sub->add_option("--seed", seed, "seed (overrides config seed)");
  }
  auto* cmp = app.add_subcommand("compare", "field-wise diff of two report.json files");
  cmp->add_option("report_a", report_a)->required();
  cmp->add_option("report_b", report_b)->required();
  cmp->add_option("--tol", tol, "relative tolerance for numeric fields");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    apply_thread_env();
    auto* sub = app.get_subcommands().front();
    if (sub == cmp) {
      const auto r = sasaki::cli::compare(read_report(report_a), read_report(report_b), tol);
      std::cout << r.diffs.dump(2) << "\n";
      return r.empty() ? 0 : 1;
    }
    std::optional<std::string> out;
    if (sub->count("--out")) out = out_dir;
    std::optional<std::uint64_t> sd;
    if (sub->count("--seed")) sd = seed;
    return run_command(sub->get_name(), config, out, sd);
  } catch (const sasaki::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const sasaki::DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const sasaki::NonconvergenceError& e) {
    std::cerr << "nonconvergence: " << e.what() << "\n";
    return 3;
  } catch (const sasaki::ConeExitError& e) {
    std::cerr << "nonconvergence: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
