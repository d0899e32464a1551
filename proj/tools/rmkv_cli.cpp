#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rmkv/config.hpp"
#include "rmkv/util.hpp"

namespace {

int do_validate(const std::string& config_path) {
  const rmkv::cli::Validation v = rmkv::cli::validate_file(config_path);
  for (const auto& w : v.warnings) std::cout << "warning: " << w << '\n';
  if (!v.ok) {
    for (const auto& e : v.errors) std::cout << "error: " << e << '\n';
    return 2;
  }
  std::cout << rmkv::cli::emit(v.config);
  return 0;
}

int do_run(const std::string& config_path, const std::string& out_dir) {
  const rmkv::cli::Validation v = rmkv::cli::validate_file(config_path);
  for (const auto& w : v.warnings) std::cerr << "warning: " << w << '\n';
  if (!v.ok) {
    for (const auto& e : v.errors) std::cerr << "error: " << e << '\n';
    return 2;
  }
  return rmkv::cli::run(v.config, out_dir);
}

int do_compare(const std::string& dir_a, const std::string& dir_b, double alpha, double beta, double beta_prime,
               double m, double p, const std::string& out_path, bool csv) {
  rmkv::diag::StabilityParams params;
  params.alpha = alpha;
  params.beta = beta;
  params.beta_prime = beta_prime;
  params.m = m;
  params.p = p;
  const rmkv::diag::StabilityReport rep = rmkv::cli::compare_runs(dir_a, dir_b, params);
  const std::string text = csv ? rep.to_csv_row(true) : rep.to_json();
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream os(out_path, std::ios::binary);
    os << text;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rough McKean-Vlasov simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir, dir_a, dir_b, out_path;
  double alpha = 0.45, beta = 0.225, beta_prime = 0.225, m = 2.0, p = 2.0;
  bool csv = false;

  auto* validate = app.add_subcommand("validate", "check a config file and print the normalized form");
  validate->add_option("config", config_path, "config JSON file")->required();

  auto* run = app.add_subcommand("run", "execute the configured pipeline");
  run->add_option("config", config_path, "config JSON file")->required();
  run->add_option("--out", out_dir, "output directory (overrides output.dir)");

  auto* sweep = app.add_subcommand("sweep", "execute a sweep config (alias of run for mode=sweep)");
  sweep->add_option("config", config_path, "config JSON file")->required();
  sweep->add_option("--out", out_dir, "output directory (overrides output.dir)");

  auto* randomize = app.add_subcommand("randomize", "execute a randomization config (alias of run)");
  randomize->add_option("config", config_path, "config JSON file")->required();
  randomize->add_option("--out", out_dir, "output directory (overrides output.dir)");

  auto* compare = app.add_subcommand("compare", "stability report over two completed run directories");
  compare->add_option("dir_a", dir_a, "first run directory")->required();
  compare->add_option("dir_b", dir_b, "second run directory")->required();
  compare->add_option("--alpha", alpha, "Holder exponent of the drivers");
  compare->add_option("--beta", beta, "controlled exponent");
  compare->add_option("--beta-prime", beta_prime, "second controlled exponent");
  compare->add_option("--m", m, "moment order of the omega-norms");
  compare->add_option("--p", p, "initial-condition moment order");
  compare->add_option("--out", out_path, "write the report here instead of stdout");
  compare->add_flag("--csv", csv, "emit a single CSV row instead of JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(validate)) return do_validate(config_path);
    if (app.got_subcommand(run) || app.got_subcommand(sweep) || app.got_subcommand(randomize))
      return do_run(config_path, out_dir);
    if (app.got_subcommand(compare)) return do_compare(dir_a, dir_b, alpha, beta, beta_prime, m, p, out_path, csv);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}
