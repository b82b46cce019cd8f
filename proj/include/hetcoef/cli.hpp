#pragma once

#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "hetcoef/csv.hpp"
#include "hetcoef/error.hpp"
#include "hetcoef/estimation.hpp"
#include "hetcoef/json_io.hpp"
#include "hetcoef/simulation.hpp"

namespace hetcoef::cli {

struct RunConfig {
  std::string subcommand;
  std::string input;
  std::string output;
  std::string mode = "exclusive";
  int bins = 4;
  double overlap_delta = 0.01;
  double lambda_threshold = 1e-6;
  std::size_t min_cell_size = 0;  // 0 = num_treatments + 2
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_override;
  bool strict = false;
  bool emit_config = false;
  std::vector<double> sums;
  int num_seeds = 1;

  Mode parsed_mode() const {
    if (mode == "exclusive") return Mode::kExclusive;
    if (mode == "general") return Mode::kGeneral;
    throw Error("BAD_CONFIG", "mode must be 'exclusive' or 'general', got '" + mode + "'");
  }

  EstimateOptions estimate_options() const {
    EstimateOptions opts;
    opts.lambda_threshold = lambda_threshold;
    opts.min_cell_size = min_cell_size;
    opts.overlap_delta = overlap_delta;
    return opts;
  }
};

namespace detail {

/// DGP description accepted by `simulate` and `sweep`. Discrete controls only;
/// continuous-control DGPs are a library-level feature since their score and
/// coefficient functions cannot be written down in a JSON table.
///
/// {
///   "num_treatments": 2, "n": 1000, "noise_scale": 1.0, "seed": 7,
///   "control": {
///     "type": "discrete",
///     "cells": [
///       {"label": "c0", "weight": 0.5, "gps": [0.3, 0.2],
///        "coef_mean": [1.0, 2.0, 3.0]},
///       ...
///     ]
///   }
/// }
inline std::pair<DgpSpec, Json> load_dgp_spec(const RunConfig& cfg) {
  std::ifstream in(cfg.input);
  if (!in) throw Error("IO_ERROR", "cannot open " + cfg.input);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("BAD_CONFIG", "invalid DGP JSON in " + cfg.input + ": " + e.what());
  }
  try {
    DgpSpec spec;
    spec.num_treatments = j.at("num_treatments").get<int>();
    spec.n = j.at("n").get<std::size_t>();
    spec.noise_scale = j.value("noise_scale", 0.0);
    spec.seed = j.value("seed", std::uint64_t{0});
    if (cfg.seed) spec.seed = *cfg.seed;
    if (cfg.n_override) spec.n = *cfg.n_override;

    const Json& control = j.at("control");
    if (control.at("type").get<std::string>() != "discrete")
      throw Error("BAD_CONFIG", "control.type must be 'discrete' for CLI-driven DGPs");
    DiscreteControlSpec discrete;
    std::map<std::string, std::pair<GpsVector, Vector>> table;
    for (const Json& cell : control.at("cells")) {
      const auto label = cell.at("label").get<std::string>();
      discrete.labels.push_back(label);
      discrete.weights.push_back(cell.at("weight").get<double>());
      const auto gps = cell.at("gps").get<std::vector<double>>();
      const auto coef = cell.at("coef_mean").get<std::vector<double>>();
      Vector alpha(static_cast<Eigen::Index>(coef.size()));
      for (std::size_t i = 0; i < coef.size(); ++i)
        alpha(static_cast<Eigen::Index>(i)) = coef[i];
      table.emplace(label, std::make_pair(GpsVector(gps), std::move(alpha)));
    }
    spec.control = discrete;
    spec.gps_fn = [table](const ControlValue& v) {
      return table.at(std::get<std::string>(v)).first;
    };
    spec.coef_mean_fn = [table](const ControlValue& v) {
      return table.at(std::get<std::string>(v)).second;
    };

    Json resolved = j;
    resolved["seed"] = spec.seed;
    resolved["n"] = spec.n;
    resolved["noise_scale"] = spec.noise_scale;
    return {std::move(spec), std::move(resolved)};
  } catch (const nlohmann::json::exception& e) {
    throw Error("BAD_CONFIG", "bad DGP spec in " + cfg.input + ": " + e.what());
  }
}

inline PartitionScheme scheme_for(const Dataset& data, const RunConfig& cfg) {
  if (data.discrete_controls()) return DiscreteScheme{};
  return QuantileScheme{cfg.bins};
}

inline std::string format_vector(const Vector& v) {
  std::string s = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i > 0) s += ", ";
    s += hetcoef::detail::format_sig12(v(i));
  }
  return s + "]";
}

inline Json config_json(const RunConfig& cfg) {
  Json j;
  j["subcommand"] = cfg.subcommand;
  j["input"] = cfg.input;
  j["output"] = cfg.output;
  j["mode"] = cfg.mode;
  j["bins"] = cfg.bins;
  j["overlap_delta"] = cfg.overlap_delta;
  j["lambda_threshold"] = cfg.lambda_threshold;
  j["min_cell_size"] = cfg.min_cell_size;
  j["seed"] = cfg.seed ? Json(*cfg.seed) : Json(nullptr);
  j["n"] = cfg.n_override ? Json(*cfg.n_override) : Json(nullptr);
  j["strict"] = cfg.strict;
  if (cfg.subcommand == "sweep") {
    Json sums = Json::array();
    for (double s : cfg.sums) sums.push_back(s);
    j["sums"] = std::move(sums);
    j["num_seeds"] = cfg.num_seeds;
  }
  return j;
}

}  // namespace detail

inline int run_simulate(const RunConfig& cfg) {
  auto [spec, resolved] = detail::load_dgp_spec(cfg);
  const SimulationResult sim = simulate(spec);
  write_csv(sim.data, cfg.output);

  Json meta;
  meta["report"] = "simulate";
  meta["spec"] = std::move(resolved);
  meta["true_ate"] = to_json(sim.true_ate);
  meta["true_ate_seed"] = sim.true_ate_seed ? Json(*sim.true_ate_seed) : Json(nullptr);
  meta["data"] = cfg.output;
  write_text_atomic(cfg.output + ".meta.json", dump_json(meta));

  std::cout << "simulate: wrote " << sim.data.size() << " rows to " << cfg.output
            << " (true_ate = " << detail::format_vector(sim.true_ate) << ")\n";
  return 0;
}

inline int run_audit(const RunConfig& cfg) {
  const Dataset data = load_csv(cfg.input, cfg.parsed_mode());
  const IdentificationReport report =
      audit(data, detail::scheme_for(data, cfg), cfg.estimate_options());
  write_text_atomic(cfg.output, dump_json(to_json(report, data.mode())));
  if (report.identified) {
    std::cout << "audit: IDENTIFIED (" << report.n_cells << "/" << report.n_cells
              << " cells identified)\n";
  } else {
    std::cout << "audit: NOT IDENTIFIED (" << report.n_failing << "/" << report.n_cells
              << " cells failing)\n";
  }
  return 0;
}

inline int run_estimate(const RunConfig& cfg) {
  const Dataset data = load_csv(cfg.input, cfg.parsed_mode());
  const AsfEstimate est =
      estimate_asf(data, detail::scheme_for(data, cfg), cfg.estimate_options());
  write_text_atomic(cfg.output, dump_json(to_json(est, data.mode(), data.size())));
  std::cout << "ate = " << detail::format_vector(est.ate)
            << " (trimmed_mass = " << hetcoef::detail::format_sig12(est.trimmed_mass)
            << ")\n";
  if (cfg.strict && est.trimmed_mass > 0.0)
    throw Error("STRICT_TRIMMED",
                "trimmed_mass = " + hetcoef::detail::format_sig12(est.trimmed_mass) +
                    " > 0 under --strict");
  return 0;
}

inline int run_sweep(const RunConfig& cfg) {
  auto [base, resolved] = detail::load_dgp_spec(cfg);
  SweepOptions options;
  options.estimate = cfg.estimate_options();
  options.quantile_bins = cfg.bins;

  const bool multi = cfg.num_seeds > 1;
  std::string out = multi ? "seed,sum,verdict,ate_error\n" : "sum,verdict,ate_error\n";
  for (int r = 0; r < cfg.num_seeds; ++r) {
    DgpSpec spec = base;
    spec.seed = base.seed + static_cast<std::uint64_t>(r);
    for (const SweepPoint& p : failure_sweep(spec, cfg.sums, options)) {
      if (multi) out += std::to_string(spec.seed) + ',';
      out += hetcoef::detail::format_sig12(p.target_sum);
      out += p.identified ? ",IDENTIFIED," : ",NOT_IDENTIFIED,";
      if (p.ate_error) out += hetcoef::detail::format_sig12(*p.ate_error);
      out += '\n';
      if (!multi)
        std::cout << "sweep: sum=" << hetcoef::detail::format_sig12(p.target_sum)
                  << " verdict=" << (p.identified ? "IDENTIFIED" : "NOT_IDENTIFIED")
                  << " ate_error="
                  << (p.ate_error ? hetcoef::detail::format_sig12(*p.ate_error) : "n/a")
                  << '\n';
    }
  }
  write_text_atomic(cfg.output, out);
  std::cout << "sweep: wrote " << cfg.output << " (" << cfg.sums.size() << " sums x "
            << cfg.num_seeds << " seeds)\n";
  return 0;
}

inline int dispatch(const RunConfig& cfg) {
  if (cfg.emit_config) {
    std::cout << dump_json(detail::config_json(cfg));
    return 0;
  }
  if (cfg.subcommand == "simulate") return run_simulate(cfg);
  if (cfg.subcommand == "audit") return run_audit(cfg);
  if (cfg.subcommand == "estimate") return run_estimate(cfg);
  if (cfg.subcommand == "sweep") return run_sweep(cfg);
  throw Error("BAD_CONFIG", "unknown subcommand " + cfg.subcommand);
}

inline int run_cli(int argc, const char* const* argv) {
  RunConfig cfg;
  CLI::App app{"Identification diagnostics and average-treatment-effect estimation "
               "for multi-treatment data with control variables"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from an INI/TOML file ([subcommand] sections)");

  const auto add_analysis_options = [&cfg](CLI::App* sub, bool needs_input_csv) {
    if (needs_input_csv)
      sub->add_option("-i,--input", cfg.input, "Input data CSV")->required();
    sub->add_option("-o,--output", cfg.output, "Output report path")->required();
    sub->add_option("--mode", cfg.mode, "Treatment mode: exclusive | general")
        ->check(CLI::IsMember({"exclusive", "general"}))
        ->capture_default_str();
    sub->add_option("--bins", cfg.bins, "Quantile bins per control coordinate")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--overlap-delta", cfg.overlap_delta,
                    "Overlap margin for propensity scores")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    sub->add_option("--lambda-threshold", cfg.lambda_threshold,
                    "Relative lambda_min threshold on sample moment matrices")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    sub->add_option("--min-cell-size", cfg.min_cell_size,
                    "Minimum rows per cell (0 = num_treatments + 2)")
        ->capture_default_str();
    sub->add_flag("--emit-config", cfg.emit_config,
                  "Print the resolved configuration and exit");
  };

  CLI::App* sim = app.add_subcommand("simulate", "Draw a dataset from a DGP spec");
  sim->add_option("-i,--input", cfg.input, "DGP spec JSON")->required();
  sim->add_option("-o,--output", cfg.output, "Output data CSV (metadata goes to <output>.meta.json)")
      ->required();
  std::uint64_t seed_opt = 0;
  std::size_t n_opt = 0;
  sim->add_option("--seed", seed_opt, "Override the spec seed")
      ->each([&cfg, &seed_opt](const std::string&) { cfg.seed = seed_opt; });
  sim->add_option("--n", n_opt, "Override the spec sample size")
      ->each([&cfg, &n_opt](const std::string&) { cfg.n_override = n_opt; });
  sim->add_flag("--emit-config", cfg.emit_config,
                "Print the resolved configuration and exit");

  CLI::App* aud = app.add_subcommand("audit", "Identification diagnostics per control cell");
  add_analysis_options(aud, true);

  CLI::App* est = app.add_subcommand("estimate", "Estimate the ASF and treatment effects");
  add_analysis_options(est, true);
  est->add_flag("--strict", cfg.strict, "Fail (exit 2) if any cell is trimmed");

  CLI::App* swp = app.add_subcommand("sweep", "Audit/estimate across rescaled gps sums");
  swp->add_option("-i,--input", cfg.input, "DGP spec JSON")->required();
  swp->add_option("-o,--output", cfg.output, "Output sweep CSV")->required();
  swp->add_option("--sums", cfg.sums, "Ascending target gps sums in (0,1]")
      ->required()
      ->delimiter(',');
  swp->add_option("--num-seeds", cfg.num_seeds, "Replications with seeds seed+0..k-1")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  swp->add_option("--seed", seed_opt, "Override the spec seed")
      ->each([&cfg, &seed_opt](const std::string&) { cfg.seed = seed_opt; });
  swp->add_option("--overlap-delta", cfg.overlap_delta, "Overlap margin")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  swp->add_option("--lambda-threshold", cfg.lambda_threshold, "Relative lambda threshold")
      ->capture_default_str();
  swp->add_option("--min-cell-size", cfg.min_cell_size, "Minimum rows per cell")
      ->capture_default_str();
  swp->add_option("--bins", cfg.bins, "Quantile bins per control coordinate")
      ->capture_default_str();
  swp->add_flag("--emit-config", cfg.emit_config,
                "Print the resolved configuration and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  cfg.subcommand = app.get_subcommands().front()->get_name();
  try {
    return dispatch(cfg);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == "NOT_IDENTIFIED_EVERYWHERE" || e.code() == "STRICT_TRIMMED" ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: INTERNAL: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace hetcoef::cli
