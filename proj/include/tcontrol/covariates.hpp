#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tcontrol/common.hpp"

namespace tcontrol {

/// Named per-cell covariates, each value in [0, 1].
class CovariateTable {
 public:
  explicit CovariateTable(std::size_t n_cells = 0) : n_cells_(n_cells) {}

  std::size_t n_cells() const { return n_cells_; }
  bool has(const std::string& name) const { return columns_.contains(name); }
  const std::vector<double>& values(const std::string& name) const;

  /// Stores the value clamped to [0, 1]; returns false if clamping was needed.
  bool set(const std::string& name, std::size_t cell, double value);

  /// Warnings accumulated while reading (clamps, missing cells).
  const std::vector<std::string>& warnings() const { return warnings_; }
  void add_warning(std::string w) { warnings_.push_back(std::move(w)); }

  std::vector<std::string> names() const;

 private:
  std::size_t n_cells_;
  std::map<std::string, std::vector<double>> columns_;
  std::map<std::string, std::vector<char>> present_;
  std::vector<std::string> warnings_;

  friend CovariateTable read_covariates_csv(std::istream& in, std::size_t n_cells);
};

/// Reads cell_id,name,value rows. Cells absent for a covariate default to 0
/// with a warning; out-of-range values are clamped with a warning.
CovariateTable read_covariates_csv(std::istream& in, std::size_t n_cells);
CovariateTable read_covariates_csv(const std::string& path, std::size_t n_cells);

enum class PerturbationShape { kLinear, kLogistic };

PerturbationShape parse_perturbation_shape(const std::string& text);

/// Dampens the (from -> to) transition by delta * f(x) and moves the removed
/// mass onto the diagonal of row `from`.
struct PerturbationSpec {
  std::string covariate;
  std::size_t from = 0;
  std::size_t to = 1;
  double delta = 0.0;
  PerturbationShape shape = PerturbationShape::kLinear;

  void validate(std::size_t n_states) const;
};

/// Monotone response with f(0) = 0 and f(1) = 1. LOGISTIC is a rescaled
/// sigmoid with midpoint 0.5 and steepness 10.
double response(PerturbationShape shape, double x);

struct PerturbedMatrix {
  Matrix transition;
  /// True when the target entry was held at the 1e-9 floor.
  bool clamped = false;
};

constexpr double kTransitionFloor = 1e-9;

PerturbedMatrix perturb_transition(const Matrix& transition, const PerturbationSpec& spec,
                                   double x);

struct CellTransitions {
  std::vector<Matrix> matrices;
  std::vector<std::string> warnings;
};

/// Applies every spec, in order, to every cell. Throws ConfigError for a
/// covariate missing from the table.
CellTransitions build_cell_transitions(const Matrix& transition, const CovariateTable& table,
                                       std::span<const PerturbationSpec> specs);

}  // namespace tcontrol
