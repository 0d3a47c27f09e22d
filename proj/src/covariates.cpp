#include "tcontrol/covariates.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "tcontrol/csv.hpp"

namespace tcontrol {

const std::vector<double>& CovariateTable::values(const std::string& name) const {
  auto it = columns_.find(name);
  if (it == columns_.end()) throw ConfigError("unknown covariate '" + name + "'");
  return it->second;
}

bool CovariateTable::set(const std::string& name, std::size_t cell, double value) {
  if (cell >= n_cells_) throw DataError("covariate cell id out of range: " + std::to_string(cell));
  auto& col = columns_[name];
  auto& seen = present_[name];
  if (col.empty()) {
    col.assign(n_cells_, 0.0);
    seen.assign(n_cells_, 0);
  }
  const double clamped = std::clamp(value, 0.0, 1.0);
  col[cell] = clamped;
  seen[cell] = 1;
  return clamped == value;
}

std::vector<std::string> CovariateTable::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : columns_) out.push_back(name);
  return out;
}

CovariateTable read_covariates_csv(std::istream& in, std::size_t n_cells) {
  CovariateTable table(n_cells);
  std::string line;
  if (!csv::next_line(in, line)) throw DataError("covariate CSV is empty");
  if (csv::split_line(line) != std::vector<std::string>{"cell_id", "name", "value"}) {
    throw DataError("covariate CSV: expected header cell_id,name,value");
  }
  while (csv::next_line(in, line)) {
    const auto f = csv::split_line(line);
    if (f.size() != 3) throw DataError("covariate CSV: 3 fields expected");
    const long long cell = parse_integer(f[0]);
    if (cell < 0) throw DataError("covariate CSV: negative cell id");
    const double v = parse_double(f[2]);
    if (std::isnan(v)) throw DataError("covariate CSV: NaN value");
    if (!table.set(f[1], static_cast<std::size_t>(cell), v)) {
      table.add_warning("covariate '" + f[1] + "' cell " + f[0] + " clamped to [0, 1]");
    }
  }
  for (const auto& [name, seen] : table.present_) {
    const auto missing = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), 0));
    if (missing > 0) {
      table.add_warning("covariate '" + name + "' missing for " + std::to_string(missing) +
                        " cells; defaulted to 0");
    }
  }
  return table;
}

CovariateTable read_covariates_csv(const std::string& path, std::size_t n_cells) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open covariate file: " + path);
  return read_covariates_csv(in, n_cells);
}

PerturbationShape parse_perturbation_shape(const std::string& text) {
  if (text == "linear" || text == "LINEAR") return PerturbationShape::kLinear;
  if (text == "logistic" || text == "LOGISTIC") return PerturbationShape::kLogistic;
  throw ConfigError("perturbation shape must be 'linear' or 'logistic', got '" + text + "'");
}

void PerturbationSpec::validate(std::size_t n_states) const {
  if (from >= n_states || to >= n_states) throw ConfigError("perturbation: state index out of range");
  if (from == to) throw ConfigError("perturbation: from and to must differ");
  if (!(delta >= 0.0 && delta < 1.0)) throw ConfigError("perturbation: delta must be in [0, 1)");
}

double response(PerturbationShape shape, double x) {
  if (shape == PerturbationShape::kLinear) return x;
  auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-10.0 * (v - 0.5))); };
  const double lo = sigmoid(0.0);
  const double hi = sigmoid(1.0);
  return (sigmoid(x) - lo) / (hi - lo);
}

PerturbedMatrix perturb_transition(const Matrix& transition, const PerturbationSpec& spec,
                                   double x) {
  spec.validate(transition.rows());
  if (!(x >= 0.0 && x <= 1.0)) throw ConfigError("perturbation: covariate value outside [0, 1]");
  PerturbedMatrix out{transition, false};
  const double original = transition(spec.from, spec.to);
  if (original <= kTransitionFloor) return out;
  const double target = original - spec.delta * response(spec.shape, x);
  double updated = target;
  if (target < kTransitionFloor) {
    updated = kTransitionFloor;
    out.clamped = true;
  }
  out.transition(spec.from, spec.to) = updated;
  out.transition(spec.from, spec.from) += original - updated;
  return out;
}

CellTransitions build_cell_transitions(const Matrix& transition, const CovariateTable& table,
                                       std::span<const PerturbationSpec> specs) {
  for (const auto& s : specs) {
    if (!table.has(s.covariate)) throw ConfigError("unknown covariate '" + s.covariate + "'");
    s.validate(transition.rows());
  }
  CellTransitions out;
  out.matrices.reserve(table.n_cells());
  for (std::size_t cell = 0; cell < table.n_cells(); ++cell) {
    Matrix m = transition;
    for (const auto& s : specs) {
      PerturbedMatrix p = perturb_transition(m, s, table.values(s.covariate)[cell]);
      if (p.clamped) {
        out.warnings.push_back("cell " + std::to_string(cell) + ": transition " +
                               std::to_string(s.from) + "->" + std::to_string(s.to) +
                               " clamped at floor");
      }
      m = std::move(p.transition);
    }
    out.matrices.push_back(std::move(m));
  }
  return out;
}

}  // namespace tcontrol
