#include "config.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>

#include "tcontrol/common.hpp"

namespace tcontrol::cli {

namespace {

template <typename T>
T get(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + "." + key + " is missing");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

}  // namespace

json default_config() {
  return json::parse(R"({
    "seed": 42,
    "grid": {"min_lon": 0.0, "min_lat": 0.0, "max_lon": 5.0, "max_lat": 5.0,
             "cell_size": 0.5, "shape": "square", "neighborhood": "rook"},
    "years": {"first": 2000, "count": 20},
    "model": {"n_states": 3, "lambda_t": [6.0, 2.0, 0.3], "lambda_c": [0.3, 3.0, 6.0],
              "stay": 0.85},
    "simulate": {"beta": 0.5, "burn_in_sweeps": 500, "within_year_sweeps": 20,
                 "point_events": false},
    "ingest": {
      "schema": {"lon": "lon", "lat": "lat", "year": "year", "source": "source",
                 "category": "category", "target_type": "target_type",
                 "geo_precision": "geo_precision", "ged_label": "GED", "gtd_label": "GTD"},
      "policy": {"max_precision": 3,
                 "ged_excluded_categories": ["violence-against-civilians", "non-state"],
                 "gtd_excluded_target_types": ["military"]}
    },
    "fit": {"mode": "independent", "n_states": 3, "beta": 0.5,
            "beta_candidates": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0,
                                1.2, 1.4, 1.6, 1.8, 2.0],
            "restarts": 10, "tol": 1e-6, "max_iter": 500, "em_iters": 0,
            "update_transition": true, "decoder": "mpm",
            "gibbs": {"sweeps": 250, "burn_in": 50, "thin": 1},
            "icm_sweeps": 50, "perturbations": []},
    "sweep": {"targets": [{"cell_size": 0.25, "shape": "square"},
                          {"cell_size": 0.5, "shape": "square"},
                          {"cell_size": 1.0, "shape": "square"},
                          {"cell_size": 0.5, "shape": "hex"}],
              "reference_cell_size": 0.125},
    "inputs": {}
  })");
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  if (j.contains("manifest_version") && j.contains("config")) return j["config"];
  return j;
}

GridSpec grid_from(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  GridSpec g;
  g.min_lon = get<double>(j, "min_lon", where);
  g.min_lat = get<double>(j, "min_lat", where);
  g.max_lon = get<double>(j, "max_lon", where);
  g.max_lat = get<double>(j, "max_lat", where);
  g.cell_size = get<double>(j, "cell_size", where);
  g.shape = parse_cell_shape(j.value("shape", std::string("square")));
  g.neighborhood = parse_neighborhood(j.value("neighborhood", std::string("rook")));
  g.validate();
  return g;
}

HmmParams model_from(const json& j) {
  const std::string where = "model";
  const long long K = get<long long>(j, "n_states", where);
  if (K < 1) throw ConfigError("model.n_states must be at least 1");
  const auto n = static_cast<std::size_t>(K);
  auto lt = get<std::vector<double>>(j, "lambda_t", where);
  auto lc = get<std::vector<double>>(j, "lambda_c", where);
  if (lt.size() != n) throw ConfigError("model.lambda_t needs n_states entries");
  if (lc.size() != n) throw ConfigError("model.lambda_c needs n_states entries");
  HmmParams p = make_params(std::move(lt), std::move(lc), j.value("stay", 0.85));
  if (j.contains("transition") && !j["transition"].is_null()) {
    const auto rows = get<std::vector<std::vector<double>>>(j, "transition", where);
    if (rows.size() != n) throw ConfigError("model.transition needs n_states rows");
    for (std::size_t i = 0; i < n; ++i) {
      if (rows[i].size() != n) throw ConfigError("model.transition rows need n_states entries");
      for (std::size_t k = 0; k < n; ++k) p.transition(i, k) = rows[i][k];
    }
  }
  if (j.contains("pi") && !j["pi"].is_null()) {
    p.pi = get<std::vector<double>>(j, "pi", where);
    if (p.pi.size() != n) throw ConfigError("model.pi needs n_states entries");
  }
  try {
    p.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return p;
}

EventSchema schema_from(const json& j) {
  EventSchema s;
  s.lon = j.value("lon", s.lon);
  s.lat = j.value("lat", s.lat);
  s.year = j.value("year", s.year);
  s.source = j.value("source", s.source);
  s.category = j.value("category", s.category);
  s.target_type = j.value("target_type", s.target_type);
  s.geo_precision = j.value("geo_precision", s.geo_precision);
  s.ged_label = j.value("ged_label", s.ged_label);
  s.gtd_label = j.value("gtd_label", s.gtd_label);
  return s;
}

FilterPolicy policy_from(const json& j) {
  FilterPolicy p;
  if (j.contains("max_precision")) {
    if (j["max_precision"].is_null()) p.max_precision.reset();
    else p.max_precision = get<int>(j, "max_precision", "ingest.policy");
  }
  if (j.contains("ged_excluded_categories")) {
    const auto v = get<std::vector<std::string>>(j, "ged_excluded_categories", "ingest.policy");
    p.ged_excluded_categories = {v.begin(), v.end()};
  }
  if (j.contains("gtd_excluded_target_types")) {
    const auto v = get<std::vector<std::string>>(j, "gtd_excluded_target_types", "ingest.policy");
    p.gtd_excluded_target_types = {v.begin(), v.end()};
  }
  return p;
}

std::vector<PerturbationSpec> perturbations_from(const json& j) {
  std::vector<PerturbationSpec> out;
  if (j.is_null()) return out;
  if (!j.is_array()) throw ConfigError("fit.perturbations must be an array");
  for (const auto& e : j) {
    const std::string where = "fit.perturbations[]";
    PerturbationSpec s;
    s.covariate = get<std::string>(e, "covariate", where);
    s.from = get<std::size_t>(e, "from", where);
    s.to = get<std::size_t>(e, "to", where);
    s.delta = get<double>(e, "delta", where);
    s.shape = parse_perturbation_shape(e.value("shape", std::string("linear")));
    out.push_back(s);
  }
  return out;
}

std::vector<GridSpec> sweep_targets_from(const json& sweep, const GridSpec& base) {
  std::vector<GridSpec> out;
  if (!sweep.contains("targets") || !sweep["targets"].is_array() || sweep["targets"].empty()) {
    throw ConfigError("sweep.targets must be a non-empty array");
  }
  for (const auto& t : sweep["targets"]) {
    GridSpec g = base;
    g.cell_size = get<double>(t, "cell_size", "sweep.targets[]");
    g.shape = parse_cell_shape(t.value("shape", std::string("square")));
    g.validate();
    out.push_back(g);
  }
  return out;
}

std::string config_hash(const json& config) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : config.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace tcontrol::cli
