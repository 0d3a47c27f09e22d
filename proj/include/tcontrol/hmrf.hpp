#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tcontrol/grid.hpp"
#include "tcontrol/hmm.hpp"
#include "tcontrol/ingest.hpp"

namespace tcontrol {

/// Within-year Potts interaction between neighboring cells.
struct PottsParams {
  double beta = 0.5;
  NeighborGraph graph;

  void validate() const;
};

/// Hidden state per (cell, year). Negative entries mean "unknown" and are
/// only produced by truth down-sampling in eval.
class StateField {
 public:
  StateField() = default;
  StateField(std::size_t n_cells, std::size_t n_years, int fill = 0)
      : n_cells_(n_cells), n_years_(n_years), s_(n_cells * n_years, fill) {}

  std::size_t n_cells() const { return n_cells_; }
  std::size_t n_years() const { return n_years_; }
  std::size_t size() const { return s_.size(); }

  int& at(std::size_t cell, std::size_t year) { return s_[cell * n_years_ + year]; }
  int at(std::size_t cell, std::size_t year) const { return s_[cell * n_years_ + year]; }

  const std::vector<int>& values() const { return s_; }
  std::vector<int>& values() { return s_; }

  bool operator==(const StateField&) const = default;

 private:
  std::size_t n_cells_ = 0;
  std::size_t n_years_ = 0;
  std::vector<int> s_;
};

/// Monte-Carlo marginals from a Gibbs run.
struct FieldPosterior {
  std::size_t n_cells = 0;
  std::size_t n_years = 0;
  std::size_t n_states = 0;
  std::vector<double> marginal;  // cell x year x K
  std::size_t n_samples = 0;
  std::size_t sweeps = 0;
  std::size_t burn_in = 0;
  std::size_t thin = 1;
  /// State of the chain after the final sweep.
  StateField last;

  double p(std::size_t cell, std::size_t year, std::size_t k) const {
    return marginal[(cell * n_years + year) * n_states + k];
  }
  /// Per-site argmax of the marginals, ties to the lower state.
  StateField mode() const;

  bool operator==(const FieldPosterior&) const = default;
};

/// HMM parameters shared by all cells, optional per-cell transition
/// matrices (from covariates), and the Potts coupling.
class HmrfModel {
 public:
  HmrfModel(HmmParams params, PottsParams potts, std::vector<Matrix> cell_transitions = {});

  const HmmParams& params() const { return params_; }
  const PottsParams& potts() const { return potts_; }
  std::size_t n_states() const { return params_.n_states(); }
  const Matrix& transition(std::size_t cell) const {
    return cell_transitions_.empty() ? params_.transition : cell_transitions_[cell];
  }
  bool has_cell_transitions() const { return !cell_transitions_.empty(); }

 private:
  HmmParams params_;
  PottsParams potts_;
  std::vector<Matrix> cell_transitions_;
};

/// Normalized distribution of s[cell][year] given every other site.
std::vector<double> full_conditional(const HmrfModel& model, const CountPanel& panel,
                                     const StateField& field, std::size_t cell, std::size_t year);

/// Unnormalized joint log-score: chain log-probabilities plus emissions
/// plus beta times the number of same-state neighbor pairs in each year.
double joint_log_score(const HmrfModel& model, const CountPanel& panel, const StateField& field);

/// Greedy coloring in cell order; color[i] differs from every neighbor.
std::vector<int> greedy_coloring(const NeighborGraph& graph);

struct GibbsSettings {
  std::size_t sweeps = 250;
  std::size_t burn_in = 50;
  std::size_t thin = 1;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

using SampleVisitor = std::function<void(const StateField&)>;

/// Systematic-scan Gibbs sampler in chromatic order within each year. Sweep
/// s is retained when s >= burn_in and (s - burn_in) % thin == 0. Output is
/// a pure function of the inputs and seed, whatever the thread count.
FieldPosterior gibbs_sample(const HmrfModel& model, const CountPanel& panel,
                            const StateField& init, const GibbsSettings& settings,
                            const SampleVisitor& visit = {});

struct IcmSettings {
  std::size_t max_sweeps = 50;
  /// Recompute the joint score after every change and throw
  /// std::logic_error if it ever drops. Quadratic cost; tests only.
  bool check_monotone = false;
};

struct IcmResult {
  StateField field;
  std::size_t sweeps = 0;
  bool converged = false;
  double score = 0.0;
};

/// Iterated conditional modes. A site moves only to a strictly better state.
IcmResult icm_decode(const HmrfModel& model, const CountPanel& panel, const StateField& init,
                     const IcmSettings& settings = {});

struct McemSettings {
  std::size_t n_states = 3;
  double beta = 0.5;
  std::size_t em_iters = 20;
  GibbsSettings gibbs;
  double rate_floor = 1e-6;
  /// Used to obtain starting parameters when `init` is empty.
  BaumWelchSettings init_fit;
  std::optional<HmmParams> init;
  /// When false the transition matrix stays at its starting value and only
  /// the initial distribution and rates are re-estimated.
  bool update_transition = true;
};

struct McemResult {
  HmmParams params;
  FieldPosterior posterior;
  /// Mean complete-data log-score of the retained samples, per iteration.
  std::vector<double> trace;
  std::vector<std::string> warnings;
};

/// Maps the shared transition matrix to per-cell matrices (covariates).
using TransitionBuilder = std::function<std::vector<Matrix>(const Matrix& shared)>;

/// Monte-Carlo EM: Gibbs E-step, closed-form M-step on sampled states.
/// The returned posterior is a final E-step under the returned parameters,
/// and everything is canonically relabeled. When `cell_transitions` is set,
/// sampling uses the per-cell matrices it derives from the current shared
/// matrix; the M-step still updates the shared matrix only.
McemResult mcem_fit(const CountPanel& panel, const NeighborGraph& graph,
                    const McemSettings& settings, const TransitionBuilder& cell_transitions = {});

/// Per-cell Viterbi decoding assembled into a field.
StateField viterbi_field(const HmrfModel& model, const CountPanel& panel, unsigned threads = 1);

/// Potts pseudo-log-likelihood of a field (spatial, within each year).
double potts_pseudo_loglik(const StateField& field, const NeighborGraph& graph,
                           std::size_t n_states, double beta);

/// Pseudo-log-likelihood with each site also conditioned on its own chain
/// (initial distribution and transitions to and from adjacent years).
double potts_pseudo_loglik(const StateField& field, const NeighborGraph& graph,
                           const HmmParams& chain, double beta);

struct BetaEstimate {
  double beta = 0.0;
  std::vector<double> pseudo_loglik;  // one per candidate
};

/// Candidate maximizing the pseudo-likelihood; ties go to the smaller beta.
BetaEstimate estimate_beta(const StateField& field, const NeighborGraph& graph,
                           std::size_t n_states, std::span<const double> candidates);
BetaEstimate estimate_beta(const StateField& field, const NeighborGraph& graph,
                           const HmmParams& chain, std::span<const double> candidates);

/// cell_id,year,state,p_0..p_{K-1}. Posterior may be null (probabilities
/// written as a one-hot of the state).
void write_field_csv(const StateField& field, const FieldPosterior* posterior,
                     std::size_t n_states, int first_year, std::ostream& out);

struct FieldTable {
  StateField field;
  FieldPosterior posterior;  // one-hot when the file had no p_ columns
  int first_year = 0;
};

FieldTable read_field_csv(std::istream& in);
FieldTable read_field_csv(const std::string& path);

}  // namespace tcontrol
