// uotlab: semi-dual unbalanced optimal transport from the command line.
//
// Subcommands: value | fit | primal | stability | rates | figure1.
// Config schemas are documented in the README; all outputs are UTF-8 and
// byte-identical across reruns with the same config and seed.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "uot/config.hpp"
#include "uot/uot.hpp"

namespace {

using nlohmann::json;

void emit(const json& j, const std::string& out_path) {
  const std::string text = j.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream os(out_path);
    if (!os) throw uot::Error("cannot open output file: " + out_path);
    os << text;
  }
}

uot::SemiDualProblem problem_from_config(const json& cfg) {
  uot::DiscreteMeasure mu = uot::config::measure_from_json(cfg.at("mu"));
  uot::DiscreteMeasure nu = uot::config::measure_from_json(cfg.at("nu"));
  const uot::Entropy entropy = uot::config::entropy_from_json(cfg.at("entropy"));
  double R = cfg.value("R", 0.0);
  R = std::max({R, mu.support_radius(), nu.support_radius()});
  return uot::SemiDualProblem(std::move(mu), std::move(nu), entropy, R);
}

int run_value(const std::string& config_path, const std::string& out_path) {
  const json cfg = uot::config::parse_json_file(config_path);
  const uot::SemiDualProblem p = problem_from_config(cfg);
  std::optional<uot::PotentialClass> cls;
  if (cfg.contains("class")) cls = uot::config::class_from_json(cfg.at("class"));
  const uot::Potential z =
      uot::config::potential_from_json(cfg.at("potential"), cls ? &*cls : nullptr, p.R);
  const double value = uot::semidual_value(p, z);
  emit(json{{"semidual_value", value}, {"uot_value", -value}}, out_path);
  return 0;
}

int run_fit(const std::string& config_path, const std::string& out_path,
            std::optional<std::uint64_t> seed_override) {
  const json cfg = uot::config::parse_json_file(config_path);
  const uot::DiscreteMeasure mu = uot::config::measure_from_json(cfg.at("mu"));
  const uot::DiscreteMeasure nu = uot::config::measure_from_json(cfg.at("nu"));
  const uot::Entropy entropy = uot::config::entropy_from_json(cfg.at("entropy"));
  const uot::PotentialClass cls = uot::config::class_from_json(cfg.at("class"));
  uot::FitConfig fc;
  if (cfg.contains("fit")) fc = uot::config::fit_config_from_json(cfg.at("fit"));
  if (seed_override) fc.seed = uot::Seed{*seed_override};
  const uot::FitResult fr = uot::fit(mu, nu, cls, entropy, fc);
  emit(uot::config::to_json(fr), out_path);
  return 0;
}

int run_primal(const std::string& config_path, const std::string& out_path,
               const std::string& coupling_out) {
  const json cfg = uot::config::parse_json_file(config_path);
  const uot::DiscreteMeasure mu = uot::config::measure_from_json(cfg.at("mu"));
  const uot::DiscreteMeasure nu = uot::config::measure_from_json(cfg.at("nu"));
  const uot::Entropy entropy = uot::config::entropy_from_json(cfg.at("entropy"));
  uot::PrimalOptions opts;
  if (cfg.contains("opts")) {
    const json& o = cfg.at("opts");
    opts.max_iters = o.value("max_iters", opts.max_iters);
    opts.kkt_tol = o.value("kkt_tol", opts.kkt_tol);
    opts.obj_rel_tol = o.value("obj_rel_tol", opts.obj_rel_tol);
  }
  const uot::PrimalSolution sol = uot::solve_primal(mu, nu, entropy, opts);
  emit(uot::config::to_json(sol), out_path);
  if (!coupling_out.empty()) uot::config::write_coupling_csv(sol.coupling, coupling_out);
  return 0;
}

int run_stability(const std::string& config_path, const std::string& out_path) {
  const json cfg = uot::config::parse_json_file(config_path);
  const uot::DiscreteMeasure mu = uot::config::measure_from_json(cfg.at("mu"));
  const uot::Entropy entropy = uot::config::entropy_from_json(cfg.at("entropy"));
  std::optional<uot::PotentialClass> cls;
  if (cfg.contains("class")) cls = uot::config::class_from_json(cfg.at("class"));
  const double default_R = cfg.value("R", 8.0);
  const uot::Potential z0 =
      uot::config::potential_from_json(cfg.at("z0"), cls ? &*cls : nullptr, default_R);
  const uot::Potential z =
      uot::config::potential_from_json(cfg.at("z"), cls ? &*cls : nullptr, default_R);
  const uot::DiscreteMeasure nu = uot::make_consistent_instance(mu, z0, entropy);
  const double R = std::max({cfg.value("R", 0.0), mu.support_radius(), nu.support_radius()});
  const uot::SemiDualProblem p(mu, nu, entropy, R);
  const uot::StabilityReport rep = uot::stability_report(p, z, z0);
  emit(uot::config::to_json(rep), out_path);
  return 0;
}

int run_rates(const std::string& config_path, std::optional<std::uint64_t> seed_override) {
  const json cfg = uot::config::parse_json_file(config_path);
  uot::RateConfig rc = uot::config::rate_config_from_json(cfg);
  if (seed_override) rc.seed = uot::Seed{*seed_override};
  const uot::RateReport rep = uot::rate_experiment(rc);
  std::filesystem::create_directories(rc.out_dir);
  uot::write_rates_csv(rep, rc.out_dir + "/rates.csv");
  std::cout << "slope " << uot::fmt17(rep.slope) << " half_width " << uot::fmt17(rep.half_width)
            << " theory_exponent " << uot::fmt17(rep.theoretical_exponent) << "\n";
  return 0;
}

int run_figure1(const std::string& dims_csv, const std::string& out_dir, double alpha_max,
                int alpha_count) {
  std::vector<int> dims;
  std::stringstream ss(dims_csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) dims.push_back(std::stoi(tok));
  if (dims.empty()) throw uot::config::ConfigError("--dims needs at least one dimension");
  if (alpha_count < 2) throw uot::config::ConfigError("--alpha-count must be >= 2");
  std::vector<double> alpha(static_cast<std::size_t>(alpha_count));
  for (int i = 0; i < alpha_count; ++i)
    alpha[static_cast<std::size_t>(i)] = alpha_max * i / (alpha_count - 1);
  const auto written = uot::figure1(dims, alpha, out_dir);
  for (const auto& path : written) std::cout << path << "\n";
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"semi-dual unbalanced optimal transport toolbox"};
  app.require_subcommand(1);

  std::string config_path, out_path, coupling_out;
  std::string dims_csv = "12,100", fig_out = ".";
  double alpha_max = 100.0;
  int alpha_count = 201;
  std::optional<std::uint64_t> seed_override;

  auto add_config = [&](CLI::App* sub, bool required = true) {
    auto* opt = sub->add_option("--config", config_path, "JSON config file");
    if (required) opt->required();
  };

  CLI::App* value = app.add_subcommand("value", "evaluate the semi-dual objective J(z)");
  add_config(value);
  value->add_option("--out", out_path, "write the JSON result here instead of stdout");

  CLI::App* fit = app.add_subcommand("fit", "fit the empirical potential over a class");
  add_config(fit);
  fit->add_option("--out", out_path, "write the JSON result here instead of stdout");
  fit->add_option("--seed", seed_override, "override the config seed");

  CLI::App* primal = app.add_subcommand("primal", "solve the discrete primal problem");
  add_config(primal);
  primal->add_option("--out", out_path, "write the JSON result here instead of stdout");
  primal->add_option("--coupling-out", coupling_out, "also dump the coupling as CSV (i,j,value)");

  CLI::App* stability = app.add_subcommand("stability", "evaluate the stability inequality");
  add_config(stability);
  stability->add_option("--out", out_path, "write the JSON report here instead of stdout");

  CLI::App* rates = app.add_subcommand("rates", "run a Monte Carlo rate experiment");
  add_config(rates);
  rates->add_option("--seed", seed_override, "override the config seed");

  CLI::App* figure = app.add_subcommand("figure1", "rate-exponent comparison curves");
  figure->add_option("--dims", dims_csv, "comma-separated dimensions (default 12,100)");
  figure->add_option("--out", fig_out, "output directory")->required();
  figure->add_option("--alpha-max", alpha_max, "largest alpha on the grid");
  figure->add_option("--alpha-count", alpha_count, "number of alpha grid points");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (value->parsed()) return run_value(config_path, out_path);
    if (fit->parsed()) return run_fit(config_path, out_path, seed_override);
    if (primal->parsed()) return run_primal(config_path, out_path, coupling_out);
    if (stability->parsed()) return run_stability(config_path, out_path);
    if (rates->parsed()) return run_rates(config_path, seed_override);
    if (figure->parsed()) return run_figure1(dims_csv, fig_out, alpha_max, alpha_count);
  } catch (const uot::config::ConfigError& e) {
    std::cerr << "uotlab: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "uotlab: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

int main(int argc, char** argv) { return cli_main(argc, argv); }
