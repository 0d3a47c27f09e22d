#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tcontrol/grid.hpp"
#include "tcontrol/hmm.hpp"
#include "tcontrol/hmrf.hpp"
#include "tcontrol/ingest.hpp"

namespace tcontrol {

/// Generator settings. Year 0 is drawn from the pure Potts prior (uniform
/// when beta = 0) after `burn_in_sweeps` Gibbs sweeps. Every later year
/// moves each cell through its transition matrix and then runs
/// `within_year_sweeps` Gibbs sweeps on the Potts prior conditioned on the
/// previous year.
struct SimConfig {
  GridSpec grid;
  int first_year = 2000;
  std::size_t n_years = 20;
  HmmParams truth;
  double beta = 0.5;
  std::size_t burn_in_sweeps = 500;
  std::size_t within_year_sweeps = 20;
  std::uint64_t seed = 42;
  unsigned threads = 1;
  /// Optional per-cell transitions overriding truth.transition.
  std::vector<Matrix> cell_transitions;

  void validate() const;
};

/// Three-state fixture: lambda_t = (6, 2, 0.3), lambda_c = (0.3, 3, 6),
/// 0.85 on the diagonal, on a 5 x 5 degree box at 0.5 degrees.
SimConfig default_sim_config();

StateField simulate_field(const SimConfig& config, const Grid& grid);

/// T and C drawn independently from the state's Poisson rates.
CountPanel simulate_counts(const StateField& field, const HmmParams& params, int first_year,
                           std::uint64_t seed);

struct PointEvents {
  /// GTD-like for terror counts, GED-like for conventional counts.
  std::vector<EventRecord> events;
  CountPanel fine_panel;
  /// One aggregated panel per requested target spec.
  std::vector<CountPanel> target_panels;
};

/// Draws counts on the (square) fine grid, scatters every event uniformly
/// inside its fine cell and aggregates the same points onto each target.
/// Throws ConfigError unless every target is strictly coarser than `fine`.
PointEvents simulate_point_events(const Grid& fine, const StateField& field,
                                  const HmmParams& params, int first_year,
                                  std::span<const GridSpec> targets, std::uint64_t seed);

struct GroundTruth {
  StateField field;
  CountPanel panel;
  std::vector<EventRecord> events;  // empty unless point mode was requested
};

GroundTruth simulate(const SimConfig& config, bool point_events);

}  // namespace tcontrol
