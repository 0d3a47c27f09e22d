#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "tcontrol/grid.hpp"
#include "tcontrol/hmm.hpp"
#include "tcontrol/hmrf.hpp"
#include "tcontrol/ingest.hpp"

namespace tcontrol {

/// perm[decoded_label] = truth label. Exhaustive over K! permutations for
/// K <= 6 (first maximum in lexicographic order wins); identity above that,
/// relying on both fields using the canonical terror-share labeling.
/// Sites whose truth is negative are ignored.
std::vector<int> align_labels(const StateField& decoded, const StateField& truth,
                              std::size_t n_states);

StateField relabel(const StateField& field, std::span<const int> perm);

struct EvalReport {
  std::size_t n_states = 0;
  std::size_t n_sites = 0;
  double accuracy = 0.0;
  std::vector<int> permutation;
  /// confusion[truth][aligned decoded], counts.
  std::vector<std::vector<std::size_t>> confusion;
  /// Filled when both fitted and true parameters were given.
  std::vector<double> rate_error_t;
  std::vector<double> rate_error_c;
  /// Filled when a posterior was given.
  std::optional<double> mean_true_posterior;
};

EvalReport score(const StateField& decoded, const FieldPosterior* posterior,
                 const StateField& truth, std::size_t n_states,
                 const HmmParams* fitted = nullptr, const HmmParams* true_params = nullptr);

void write_report_csv(const EvalReport& report, std::ostream& out);
void write_report_text(const EvalReport& report, std::ostream& out);

/// Coarse truth by majority vote of the fine cells whose centroids fall in
/// each coarse cell; ties to the lower state; -1 where no fine centroid lands.
StateField majority_downsample(const StateField& fine, const Grid& fine_grid, const Grid& coarse,
                               std::size_t n_states);

struct SweepRecord {
  GridSpec spec;
  std::size_t n_cells = 0;
  std::uint64_t total_events = 0;
  double mean_events_per_cell_year = 0.0;
  double accuracy = 0.0;
  /// sqrt(box area / n_cells), degrees.
  double effective_resolution = 0.0;
  std::size_t scored_sites = 0;
};

struct SweepResult {
  std::vector<SweepRecord> records;
  /// Record with the highest accuracy (first on ties).
  std::size_t best = 0;
};

struct SweepSettings {
  BaumWelchSettings fit;
  unsigned threads = 1;
};

/// For each target: aggregate the shared events, fit an independent HMM,
/// Viterbi-decode every cell and score against the majority-vote truth.
SweepResult resolution_sweep(const Grid& fine, const StateField& truth,
                             std::span<const EventRecord> events, int first_year,
                             std::span<const GridSpec> targets, const SweepSettings& settings);

void write_sweep_csv(const SweepResult& result, std::ostream& out);
void write_sweep_text(const SweepResult& result, std::ostream& out);

}  // namespace tcontrol
