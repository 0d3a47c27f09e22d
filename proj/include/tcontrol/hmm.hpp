#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tcontrol/common.hpp"
#include "tcontrol/ingest.hpp"

namespace tcontrol {

/// Discrete-state HMM with independent Poisson emissions for terror (T)
/// and conventional (C) counts.
///
/// Canonical state order is by decreasing terror share
/// lambda_t / (lambda_t + lambda_c), so state 0 is the most terrorism-heavy
/// (weakest rebel control) and state K-1 the most conventional.
struct HmmParams {
  std::vector<double> pi;
  Matrix transition;
  std::vector<double> lambda_t;
  std::vector<double> lambda_c;

  std::size_t n_states() const { return pi.size(); }

  /// Checks shapes, nonnegativity and stochasticity (1e-9). Throws
  /// ConfigError naming the failing field.
  void validate() const;

  bool operator==(const HmmParams&) const = default;
};

/// pi uniform, diagonal `stay` with the remainder spread evenly.
HmmParams make_params(std::vector<double> lambda_t, std::vector<double> lambda_c, double stay);

/// Non-owning (T, C) series for one cell; one step per year.
struct ObservationView {
  std::span<const std::uint32_t> t;
  std::span<const std::uint32_t> c;

  std::size_t size() const { return t.size(); }
};

struct ObservationSequence {
  std::vector<std::uint32_t> t;
  std::vector<std::uint32_t> c;

  ObservationView view() const { return {t, c}; }
  operator ObservationView() const { return view(); }
};

ObservationView cell_observations(const CountPanel& panel, std::size_t cell);
std::vector<ObservationView> panel_observations(const CountPanel& panel);

/// Raised when no state can emit the observation at `step`.
class ImpossibleObservation : public DataError {
 public:
  explicit ImpossibleObservation(std::size_t step);
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// log Pois(t; lambda_t[k]) + log Pois(c; lambda_c[k]); a zero rate emits
/// zero with probability one and anything else with log-probability -inf.
double emission_loglik(const HmmParams& params, std::uint32_t t, std::uint32_t c, std::size_t k);

double poisson_logpmf(std::uint32_t n, double rate);

struct PosteriorMarginals {
  std::size_t steps = 0;
  std::size_t n_states = 0;
  std::vector<double> gamma;  // steps x K
  std::vector<double> xi;     // (steps - 1) x K x K
  double loglik = 0.0;

  double gamma_at(std::size_t step, std::size_t k) const { return gamma[step * n_states + k]; }
  double xi_at(std::size_t step, std::size_t i, std::size_t j) const {
    return xi[(step * n_states + i) * n_states + j];
  }
};

/// Scaled forward-backward. The optional transition replaces params.transition
/// (used for covariate-perturbed cells).
PosteriorMarginals forward_backward(const HmmParams& params, ObservationView obs);
PosteriorMarginals forward_backward(const HmmParams& params, ObservationView obs,
                                    const Matrix& transition);

struct ViterbiPath {
  std::vector<int> states;
  double log_prob = 0.0;
};

/// Most probable state path. Ties go to the lower state index both for the
/// final state and at every backtrack step.
ViterbiPath viterbi(const HmmParams& params, ObservationView obs);
ViterbiPath viterbi(const HmmParams& params, ObservationView obs, const Matrix& transition);

/// order[new_index] = old_index under the canonical terror-share ordering.
std::vector<std::size_t> canonical_order(const HmmParams& params);
HmmParams permute_states(const HmmParams& params, std::span<const std::size_t> order);
HmmParams canonicalize(const HmmParams& params);

struct BaumWelchSettings {
  std::size_t n_states = 3;
  double tol = 1e-6;
  std::size_t max_iter = 500;
  /// Restart 0 is the quantile-split initialization; the rest jitter it.
  std::size_t restarts = 10;
  std::uint64_t seed = 0;
  /// Distinguishes independent fits that share a seed (e.g. a cell id).
  std::uint64_t stream = 0;
  unsigned threads = 1;
  double rate_floor = 1e-6;
};

struct FitResult {
  HmmParams params;
  /// Log-likelihood before each M-step; trace.back() belongs to params.
  std::vector<double> trace;
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t best_restart = 0;
  std::vector<std::string> warnings;

  double loglik() const { return trace.empty() ? 0.0 : trace.back(); }
};

/// Quantile-split starting point: observations sorted by terror dominance
/// (t - c), cut into K equal groups, group means as rates.
HmmParams initial_params(std::span<const ObservationView> obs_set, std::size_t n_states,
                         double rate_floor);

/// EM from a fixed starting point. Rates are floored at settings.rate_floor;
/// the result is canonically relabeled.
FitResult baum_welch_from(std::span<const ObservationView> obs_set, const HmmParams& init,
                          const BaumWelchSettings& settings);

/// Best of settings.restarts EM runs. Throws ConfigError for an empty
/// sequence set, zero states, or an empty sequence.
FitResult baum_welch_fit(std::span<const ObservationView> obs_set,
                         const BaumWelchSettings& settings);

std::size_t free_parameter_count(std::size_t n_states);
double aic(double loglik, std::size_t n_states);
double bic(double loglik, std::size_t n_states, std::size_t n_observations);

/// Versioned key-value text with 17 significant digits; reload is bit-exact.
void write_params(const HmmParams& params, std::ostream& out);
HmmParams read_params(std::istream& in);
HmmParams read_params(const std::string& path);

}  // namespace tcontrol
