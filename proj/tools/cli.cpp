#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "config.hpp"
#include "tcontrol/common.hpp"
#include "tcontrol/covariates.hpp"
#include "tcontrol/eval.hpp"
#include "tcontrol/geojson.hpp"
#include "tcontrol/grid.hpp"
#include "tcontrol/hmm.hpp"
#include "tcontrol/hmrf.hpp"
#include "tcontrol/ingest.hpp"
#include "tcontrol/parallel.hpp"
#include "tcontrol/sim.hpp"

namespace tcontrol::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  unsigned threads = default_threads();

  std::optional<std::string> events, panel, field, truth, params, true_params, covariates;
  std::optional<std::string> mode, beta;
  std::optional<long long> n_states;
  std::optional<int> year;
  bool points = false;
};

class Run {
 public:
  Run(std::string command, json config, const Options& opt, std::ostream& out)
      : command_(std::move(command)), config_(std::move(config)), opt_(opt), out_(out) {
    fs::create_directories(opt.out_dir);
  }

  const json& config() const { return config_; }
  std::uint64_t seed() const { return config_.at("seed").get<std::uint64_t>(); }
  unsigned threads() const { return std::max(1u, opt_.threads); }

  std::string input(const std::string& key) const {
    const auto& in = config_.at("inputs");
    if (!in.contains(key) || !in[key].is_string() || in[key].get<std::string>().empty()) {
      throw ConfigError("inputs." + key + " is required (flag --" + flag_name(key) + ")");
    }
    return in[key].get<std::string>();
  }
  std::optional<std::string> optional_input(const std::string& key) const {
    const auto& in = config_.at("inputs");
    if (!in.contains(key) || !in[key].is_string()) return std::nullopt;
    return in[key].get<std::string>();
  }

  void write(const std::string& name, const std::function<void(std::ostream&)>& body) {
    const fs::path path = fs::path(opt_.out_dir) / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + path.string());
    body(f);
    if (!f) throw ConfigError("failed writing " + path.string());
    outputs_.push_back(name);
  }

  void finish() {
    json manifest;
    manifest["manifest_version"] = 1;
    manifest["tool"] = "tcontrol";
    manifest["version"] = kVersion;
    manifest["command"] = command_;
    manifest["seed"] = seed();
    manifest["config_hash"] = config_hash(config_);
    manifest["config"] = config_;
    manifest["outputs"] = outputs_;
    const fs::path path = fs::path(opt_.out_dir) / "manifest.json";
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + path.string());
    f << manifest.dump(2) << '\n';
    out_ << command_ << ": wrote";
    for (const auto& o : outputs_) out_ << ' ' << o;
    out_ << " manifest.json to " << opt_.out_dir << '\n';
  }

 private:
  static std::string flag_name(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
  }

  std::string command_;
  json config_;
  const Options& opt_;
  std::ostream& out_;
  std::vector<std::string> outputs_;
};

int first_year_of(const json& cfg) { return cfg.at("years").at("first").get<int>(); }

std::size_t n_years_of(const json& cfg) {
  const long long n = cfg.at("years").at("count").get<long long>();
  if (n < 1) throw ConfigError("years.count must be at least 1");
  return static_cast<std::size_t>(n);
}

std::size_t fit_states(const json& fit) {
  const long long K = fit.at("n_states").get<long long>();
  if (K < 1) throw ConfigError("fit.n_states must be at least 1");
  return static_cast<std::size_t>(K);
}

template <typename T>
T as_size(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + "." + key + " is missing");
  const long long v = j.at(key).get<long long>();
  if (v < 0) throw ConfigError(where + "." + key + " must not be negative");
  return static_cast<T>(v);
}

BaumWelchSettings bw_settings(const json& cfg, std::size_t K, unsigned threads) {
  const json& fit = cfg.at("fit");
  BaumWelchSettings s;
  s.n_states = K;
  s.tol = fit.at("tol").get<double>();
  s.max_iter = as_size<std::size_t>(fit, "max_iter", "fit");
  s.restarts = std::max<std::size_t>(1, as_size<std::size_t>(fit, "restarts", "fit"));
  s.seed = cfg.at("seed").get<std::uint64_t>();
  s.threads = threads;
  return s;
}

SimConfig sim_config(const json& cfg, unsigned threads) {
  SimConfig sc;
  sc.grid = grid_from(cfg.at("grid"));
  sc.first_year = first_year_of(cfg);
  sc.n_years = n_years_of(cfg);
  sc.truth = model_from(cfg.at("model"));
  const json& s = cfg.at("simulate");
  sc.beta = s.at("beta").get<double>();
  sc.burn_in_sweeps = as_size<std::size_t>(s, "burn_in_sweeps", "simulate");
  sc.within_year_sweeps = as_size<std::size_t>(s, "within_year_sweeps", "simulate");
  sc.seed = cfg.at("seed").get<std::uint64_t>();
  sc.threads = threads;
  sc.validate();
  return sc;
}

void write_trace(const std::vector<double>& trace, std::ostream& out) {
  out << "iteration,value\n";
  for (std::size_t i = 0; i < trace.size(); ++i) out << i << ',' << format_exact(trace[i]) << '\n';
}

// ---- simulate ----

void cmd_simulate(Run& run) {
  const json& cfg = run.config();
  const SimConfig sc = sim_config(cfg, run.threads());
  const bool points = cfg.at("simulate").value("point_events", false);
  const GroundTruth gt = simulate(sc, points);
  const std::size_t K = sc.truth.n_states();
  run.write("truth_field.csv",
            [&](std::ostream& o) { write_field_csv(gt.field, nullptr, K, sc.first_year, o); });
  run.write("panel.csv", [&](std::ostream& o) { write_panel_csv(gt.panel, o); });
  run.write("truth_params.txt", [&](std::ostream& o) { write_params(sc.truth, o); });
  if (points) {
    const EventSchema schema = schema_from(cfg.at("ingest").at("schema"));
    run.write("events.csv", [&](std::ostream& o) { write_events_csv(gt.events, o, schema); });
  }
}

// ---- ingest ----

void cmd_ingest(Run& run) {
  const json& cfg = run.config();
  const Grid grid(grid_from(cfg.at("grid")));
  const EventSchema schema = schema_from(cfg.at("ingest").at("schema"));
  const FilterPolicy policy = policy_from(cfg.at("ingest").at("policy"));
  const int first = first_year_of(cfg);
  const int last = first + static_cast<int>(n_years_of(cfg)) - 1;

  const ParsedEvents parsed = parse_events(run.input("events"), schema);
  FilterStats stats;
  const auto kept = filter_events(parsed.events, policy, &stats);
  const Aggregated agg = aggregate(kept, grid, first, last);

  run.write("panel.csv", [&](std::ostream& o) { write_panel_csv(agg.panel, o); });
  run.write("ingest_report.txt", [&](std::ostream& o) {
    o << "rows_read " << parsed.report.rows_read << '\n';
    o << "rows_rejected " << parsed.report.errors.size() << '\n';
    o << "events_parsed " << parsed.events.size() << '\n';
    o << "dropped_precision " << stats.dropped_precision << '\n';
    o << "dropped_ged_category " << stats.dropped_ged_category << '\n';
    o << "dropped_gtd_target " << stats.dropped_gtd_target << '\n';
    o << "kept " << stats.kept << '\n';
    o << "gtd_outside_grid " << agg.skipped.gtd_outside_grid << '\n';
    o << "ged_outside_grid " << agg.skipped.ged_outside_grid << '\n';
    o << "gtd_outside_years " << agg.skipped.gtd_outside_years << '\n';
    o << "ged_outside_years " << agg.skipped.ged_outside_years << '\n';
    o << "aggregated_t " << agg.panel.total_t() << '\n';
    o << "aggregated_c " << agg.panel.total_c() << '\n';
    for (const auto& e : parsed.report.errors) o << "row " << e.row << ": " << e.message << '\n';
  });
}

// ---- fit ----

struct Decoded {
  HmmParams params;
  StateField field;
  FieldPosterior posterior;
  std::vector<double> trace;
  std::vector<std::string> notes;
};

FieldPosterior exact_posterior(const HmmParams& params, const CountPanel& panel,
                               const std::vector<Matrix>& per_cell, unsigned threads,
                               StateField& viterbi_states) {
  const std::size_t K = params.n_states();
  FieldPosterior post;
  post.n_cells = panel.n_cells();
  post.n_years = panel.n_years();
  post.n_states = K;
  post.marginal.assign(post.n_cells * post.n_years * K, 0.0);
  viterbi_states = StateField(panel.n_cells(), panel.n_years());
  parallel_for(panel.n_cells(), threads, [&](std::size_t cell) {
    const ObservationView obs = cell_observations(panel, cell);
    const Matrix& A = per_cell.empty() ? params.transition : per_cell[cell];
    const PosteriorMarginals pm = forward_backward(params, obs, A);
    const ViterbiPath path = viterbi(params, obs, A);
    for (std::size_t y = 0; y < panel.n_years(); ++y) {
      viterbi_states.at(cell, y) = path.states[y];
      for (std::size_t k = 0; k < K; ++k) {
        post.marginal[(cell * post.n_years + y) * K + k] = pm.gamma_at(y, k);
      }
    }
  });
  post.last = viterbi_states;
  return post;
}

void cmd_fit(Run& run) {
  const json& cfg = run.config();
  const json& fit = cfg.at("fit");
  const CountPanel panel = read_panel_csv(run.input("panel"));
  const std::size_t K = fit_states(fit);
  const std::string mode = fit.value("mode", std::string("independent"));
  if (mode != "independent" && mode != "coupled") {
    throw ConfigError("fit.mode must be independent or coupled, got '" + mode + "'");
  }

  std::optional<CovariateTable> table;
  std::vector<PerturbationSpec> specs = perturbations_from(fit.value("perturbations", json::array()));
  for (const auto& s : specs) s.validate(K);
  if (auto path = run.optional_input("covariates")) {
    table = read_covariates_csv(*path, panel.n_cells());
  } else if (!specs.empty()) {
    throw ConfigError("fit.perturbations need a covariate table (flag --covariates)");
  }
  std::vector<std::string> cov_warnings;
  if (table) cov_warnings = table->warnings();
  auto per_cell_for = [&](const Matrix& shared) {
    if (!table || specs.empty()) return std::vector<Matrix>{};
    return build_cell_transitions(shared, *table, specs).matrices;
  };

  const BaumWelchSettings bw = bw_settings(cfg, K, run.threads());
  const auto obs = panel_observations(panel);
  const FitResult independent = baum_welch_fit(obs, bw);

  Decoded d;
  double beta_used = 0.0;
  std::vector<double> beta_pl;
  if (mode == "independent") {
    d.params = independent.params;
    d.trace = independent.trace;
    d.posterior = exact_posterior(d.params, panel, per_cell_for(d.params.transition),
                                  run.threads(), d.field);
  } else {
    const Grid grid(grid_from(cfg.at("grid")));
    if (grid.size() != panel.n_cells()) {
      throw ConfigError("grid has " + std::to_string(grid.size()) + " cells but the panel has " +
                        std::to_string(panel.n_cells()));
    }
    const json& beta_cfg = fit.at("beta");
    if (beta_cfg.is_string()) {
      if (beta_cfg.get<std::string>() != "auto") throw ConfigError("fit.beta must be a number or \"auto\"");
      const auto candidates = fit.at("beta_candidates").get<std::vector<double>>();
      if (candidates.empty()) throw ConfigError("fit.beta_candidates must not be empty");
      StateField vit;
      exact_posterior(independent.params, panel, per_cell_for(independent.params.transition),
                      run.threads(), vit);
      const BetaEstimate est = estimate_beta(vit, grid.graph(), independent.params, candidates);
      beta_used = est.beta;
      beta_pl = est.pseudo_loglik;
    } else {
      beta_used = beta_cfg.get<double>();
    }
    McemSettings ms;
    ms.n_states = K;
    ms.beta = beta_used;
    ms.em_iters = as_size<std::size_t>(fit, "em_iters", "fit");
    ms.update_transition = fit.at("update_transition").get<bool>();
    const json& g = fit.at("gibbs");
    ms.gibbs.sweeps = as_size<std::size_t>(g, "sweeps", "fit.gibbs");
    ms.gibbs.burn_in = as_size<std::size_t>(g, "burn_in", "fit.gibbs");
    ms.gibbs.thin = std::max<std::size_t>(1, as_size<std::size_t>(g, "thin", "fit.gibbs"));
    ms.gibbs.seed = run.seed();
    ms.gibbs.threads = run.threads();
    ms.init_fit = bw;
    ms.init = independent.params;
    TransitionBuilder builder;
    if (table && !specs.empty()) builder = per_cell_for;
    McemResult mr = mcem_fit(panel, grid.graph(), ms, builder);
    d.params = mr.params;
    d.trace = mr.trace;
    d.notes = mr.warnings;
    d.posterior = std::move(mr.posterior);
    const auto decoder = fit.at("decoder").get<std::string>();
    if (decoder == "mpm") {
      d.field = d.posterior.mode();
    } else if (decoder == "icm") {
      const HmrfModel model(d.params, PottsParams{beta_used, grid.graph()},
                            per_cell_for(d.params.transition));
      IcmSettings icm;
      icm.max_sweeps = as_size<std::size_t>(fit, "icm_sweeps", "fit");
      d.field = icm_decode(model, panel, d.posterior.mode(), icm).field;
    } else {
      throw ConfigError("fit.decoder must be mpm or icm, got '" + decoder + "'");
    }
  }

  run.write("params.txt", [&](std::ostream& o) { write_params(d.params, o); });
  run.write("field.csv", [&](std::ostream& o) {
    write_field_csv(d.field, &d.posterior, K, panel.first_year(), o);
  });
  run.write("fit_trace.csv", [&](std::ostream& o) { write_trace(d.trace, o); });
  run.write("fit_summary.txt", [&](std::ostream& o) {
    const std::size_t n_obs = panel.n_cells() * panel.n_years();
    o << "mode " << mode << '\n';
    o << "n_states " << K << '\n';
    o << "cells " << panel.n_cells() << '\n';
    o << "years " << panel.n_years() << '\n';
    o << "independent_loglik " << format_exact(independent.loglik()) << '\n';
    o << "independent_iterations " << independent.iterations << '\n';
    o << "independent_converged " << (independent.converged ? "yes" : "no") << '\n';
    o << "aic " << format_exact(aic(independent.loglik(), K)) << '\n';
    o << "bic " << format_exact(bic(independent.loglik(), K, n_obs)) << '\n';
    if (mode == "coupled") {
      o << "beta " << format_exact(beta_used) << '\n';
      for (std::size_t i = 0; i < beta_pl.size(); ++i) {
        o << "beta_pseudo_loglik " << format_exact(fit.at("beta_candidates")[i].get<double>())
          << ' ' << format_exact(beta_pl[i]) << '\n';
      }
      o << "gibbs_samples " << d.posterior.n_samples << '\n';
    }
    for (const auto& w : independent.warnings) o << "warning " << w << '\n';
    for (const auto& w : d.notes) o << "warning " << w << '\n';
    for (const auto& w : cov_warnings) o << "warning " << w << '\n';
  });
}

// ---- sweep ----

void cmd_sweep(Run& run) {
  const json& cfg = run.config();
  const json& sw = cfg.at("sweep");
  SimConfig sc = sim_config(cfg, run.threads());
  const GridSpec base = sc.grid;
  sc.grid.cell_size = sw.at("reference_cell_size").get<double>();
  sc.grid.shape = CellShape::kSquare;
  sc.grid.validate();
  const Grid fine(sc.grid);
  const StateField truth = simulate_field(sc, fine);
  const PointEvents pe =
      simulate_point_events(fine, truth, sc.truth, sc.first_year, {}, sc.seed);
  const auto targets = sweep_targets_from(sw, base);

  SweepSettings settings;
  settings.fit = bw_settings(cfg, sc.truth.n_states(), 1);
  settings.threads = run.threads();
  const SweepResult result =
      resolution_sweep(fine, truth, pe.events, sc.first_year, targets, settings);
  run.write("sweep.csv", [&](std::ostream& o) { write_sweep_csv(result, o); });
  run.write("sweep_summary.txt", [&](std::ostream& o) { write_sweep_text(result, o); });
}

// ---- export-geojson ----

void cmd_export_geojson(Run& run) {
  const json& cfg = run.config();
  const Grid grid(grid_from(cfg.at("grid")));
  const FieldTable table = read_field_csv(run.input("field"));
  if (table.field.n_cells() != grid.size()) {
    throw DataError("field has " + std::to_string(table.field.n_cells()) +
                    " cells but the grid has " + std::to_string(grid.size()));
  }
  const int last = table.first_year + static_cast<int>(table.field.n_years()) - 1;
  int year = last;
  if (cfg.contains("export") && cfg["export"].contains("year") && !cfg["export"]["year"].is_null()) {
    year = cfg["export"]["year"].get<int>();
  }
  if (year < table.first_year || year > last) {
    throw ConfigError("export.year " + std::to_string(year) + " is outside the field's years");
  }
  const auto y = static_cast<std::size_t>(year - table.first_year);
  const json doc = cells_geojson(grid, [&](std::size_t cell, json& props) {
    props["year"] = year;
    props["state"] = table.field.at(cell, y);
    for (std::size_t k = 0; k < table.posterior.n_states; ++k) {
      props["p_" + std::to_string(k)] = table.posterior.p(cell, y, k);
    }
  });
  run.write("field.geojson", [&](std::ostream& o) { o << doc.dump() << '\n'; });
}

// ---- evaluate ----

void cmd_evaluate(Run& run) {
  const FieldTable decoded = read_field_csv(run.input("field"));
  const FieldTable truth = read_field_csv(run.input("truth"));
  std::optional<HmmParams> fitted, true_params;
  if (auto p = run.optional_input("params")) fitted = read_params(*p);
  if (auto p = run.optional_input("true_params")) true_params = read_params(*p);

  std::size_t K = std::max(decoded.posterior.n_states, truth.posterior.n_states);
  if (fitted) K = std::max(K, fitted->n_states());
  if (true_params) K = std::max(K, true_params->n_states());
  const bool has_posterior = decoded.posterior.n_states == K;
  const EvalReport report =
      score(decoded.field, has_posterior ? &decoded.posterior : nullptr, truth.field, K,
            fitted ? &*fitted : nullptr, true_params ? &*true_params : nullptr);
  run.write("report.csv", [&](std::ostream& o) { write_report_csv(report, o); });
  run.write("report.txt", [&](std::ostream& o) { write_report_text(report, o); });
}

void set_input(json& cfg, const std::string& key, const std::optional<std::string>& value) {
  if (value) cfg["inputs"][key] = *value;
}

json resolve(const Options& opt, const std::string& command) {
  json cfg = default_config();
  if (!opt.config_path.empty()) cfg.merge_patch(load_config_file(opt.config_path));
  if (!cfg.contains("inputs") || !cfg["inputs"].is_object()) cfg["inputs"] = json::object();
  if (opt.seed) cfg["seed"] = *opt.seed;
  if (!cfg.contains("seed") || !cfg["seed"].is_number_unsigned()) {
    throw ConfigError("seed must be a non-negative integer");
  }
  set_input(cfg, "events", opt.events);
  set_input(cfg, "panel", opt.panel);
  set_input(cfg, "field", opt.field);
  set_input(cfg, "truth", opt.truth);
  set_input(cfg, "params", opt.params);
  set_input(cfg, "true_params", opt.true_params);
  set_input(cfg, "covariates", opt.covariates);
  if (opt.mode) cfg["fit"]["mode"] = *opt.mode;
  if (opt.beta) {
    if (*opt.beta == "auto") {
      cfg["fit"]["beta"] = "auto";
    } else {
      double b = 0.0;
      try {
        b = parse_double(*opt.beta);
      } catch (const DataError&) {
        throw ConfigError("--beta must be a number or auto");
      }
      if (command == "simulate") cfg["simulate"]["beta"] = b;
      else cfg["fit"]["beta"] = b;
    }
  }
  if (opt.n_states) {
    if (command == "simulate" || command == "sweep") cfg["model"]["n_states"] = *opt.n_states;
    else cfg["fit"]["n_states"] = *opt.n_states;
  }
  if (opt.year) cfg["export"]["year"] = *opt.year;
  if (opt.points) cfg["simulate"]["point_events"] = true;
  return cfg;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent territorial control from gridded event counts.", "tcontrol"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  Options opt;
  app.add_option("--config", opt.config_path, "JSON config file (or a previous run's manifest.json)");
  app.add_option("--seed", opt.seed, "Master random seed");
  app.add_option("--out", opt.out_dir, "Output directory")->capture_default_str();
  app.add_option("--threads", opt.threads, "Worker threads (output does not depend on this)")
      ->check(CLI::PositiveNumber);

  auto* simulate = app.add_subcommand("simulate", "Simulate a ground-truth field and counts");
  simulate->add_option("--K", opt.n_states, "Number of states (model.n_states)");
  simulate->add_option("--beta", opt.beta, "Potts coupling (simulate.beta)");
  simulate->add_flag("--points", opt.points, "Also emit point events (events.csv)");

  auto* ingest = app.add_subcommand("ingest", "Filter events and aggregate them onto the grid");
  ingest->add_option("--events", opt.events, "Events CSV");

  auto* fit = app.add_subcommand("fit", "Fit the model to a count panel and decode states");
  fit->add_option("--panel", opt.panel, "Panel CSV");
  fit->add_option("--mode", opt.mode, "independent | coupled");
  fit->add_option("--K", opt.n_states, "Number of states (fit.n_states)");
  fit->add_option("--beta", opt.beta, "Potts coupling, or auto");
  fit->add_option("--covariates", opt.covariates, "Covariate CSV (cell_id,name,value)");

  auto* sweep = app.add_subcommand("sweep", "Resolution sweep on simulated point events");
  sweep->add_option("--K", opt.n_states, "Number of states (model.n_states)");

  auto* geo = app.add_subcommand("export-geojson", "Write a decoded field year as GeoJSON");
  geo->add_option("--field", opt.field, "Field CSV");
  geo->add_option("--year", opt.year, "Year to export (default: last)");

  auto* evaluate = app.add_subcommand("evaluate", "Score a decoded field against the truth");
  evaluate->add_option("--field", opt.field, "Decoded field CSV");
  evaluate->add_option("--truth", opt.truth, "True field CSV");
  evaluate->add_option("--params", opt.params, "Fitted parameters");
  evaluate->add_option("--true-params", opt.true_params, "True parameters");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    Run r(command, resolve(opt, command), opt, out);
    if (command == "simulate") cmd_simulate(r);
    else if (command == "ingest") cmd_ingest(r);
    else if (command == "fit") cmd_fit(r);
    else if (command == "sweep") cmd_sweep(r);
    else if (command == "export-geojson") cmd_export_geojson(r);
    else cmd_evaluate(r);
    r.finish();
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace tcontrol::cli
