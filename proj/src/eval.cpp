#include "tcontrol/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "tcontrol/parallel.hpp"

namespace tcontrol {

namespace {

void check_same_shape(const StateField& a, const StateField& b) {
  if (a.n_cells() != b.n_cells() || a.n_years() != b.n_years()) {
    throw ConfigError("decoded and true fields differ in shape");
  }
}

}  // namespace

std::vector<int> align_labels(const StateField& decoded, const StateField& truth,
                              std::size_t n_states) {
  check_same_shape(decoded, truth);
  std::vector<int> perm(n_states);
  std::iota(perm.begin(), perm.end(), 0);
  if (n_states > 6) return perm;

  // agree[d][k] = sites with decoded d and truth k
  std::vector<std::vector<std::size_t>> agree(n_states, std::vector<std::size_t>(n_states, 0));
  for (std::size_t i = 0; i < decoded.size(); ++i) {
    const int k = truth.values()[i];
    const int d = decoded.values()[i];
    if (k < 0 || d < 0) continue;
    if (static_cast<std::size_t>(k) >= n_states || static_cast<std::size_t>(d) >= n_states) {
      throw ConfigError("label outside [0, K) in alignment");
    }
    ++agree[static_cast<std::size_t>(d)][static_cast<std::size_t>(k)];
  }
  std::vector<int> best = perm;
  std::size_t best_hits = 0;
  bool first = true;
  do {
    std::size_t hits = 0;
    for (std::size_t d = 0; d < n_states; ++d) hits += agree[d][static_cast<std::size_t>(perm[d])];
    if (first || hits > best_hits) {
      best_hits = hits;
      best = perm;
      first = false;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

StateField relabel(const StateField& field, std::span<const int> perm) {
  StateField out = field;
  for (std::size_t cell = 0; cell < field.n_cells(); ++cell)
    for (std::size_t y = 0; y < field.n_years(); ++y) {
      const int s = field.at(cell, y);
      out.at(cell, y) = s < 0 ? s : perm[static_cast<std::size_t>(s)];
    }
  return out;
}

EvalReport score(const StateField& decoded, const FieldPosterior* posterior,
                 const StateField& truth, std::size_t n_states, const HmmParams* fitted,
                 const HmmParams* true_params) {
  check_same_shape(decoded, truth);
  EvalReport r;
  r.n_states = n_states;
  r.permutation = align_labels(decoded, truth, n_states);
  r.confusion.assign(n_states, std::vector<std::size_t>(n_states, 0));

  std::vector<std::size_t> inverse(n_states);
  for (std::size_t d = 0; d < n_states; ++d) inverse[static_cast<std::size_t>(r.permutation[d])] = d;

  std::size_t hits = 0;
  double posterior_sum = 0.0;
  for (std::size_t cell = 0; cell < truth.n_cells(); ++cell) {
    for (std::size_t y = 0; y < truth.n_years(); ++y) {
      const int k = truth.at(cell, y);
      if (k < 0) continue;
      const int aligned = r.permutation[static_cast<std::size_t>(decoded.at(cell, y))];
      ++r.n_sites;
      ++r.confusion[static_cast<std::size_t>(k)][static_cast<std::size_t>(aligned)];
      hits += aligned == k;
      if (posterior) posterior_sum += posterior->p(cell, y, inverse[static_cast<std::size_t>(k)]);
    }
  }
  r.accuracy = r.n_sites == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(r.n_sites);
  if (posterior && r.n_sites > 0) r.mean_true_posterior = posterior_sum / static_cast<double>(r.n_sites);

  if (fitted && true_params && fitted->n_states() == n_states && true_params->n_states() == n_states) {
    for (std::size_t k = 0; k < n_states; ++k) {
      const std::size_t d = inverse[k];
      auto rel = [](double est, double truth_v) {
        return truth_v == 0.0 ? std::fabs(est) : std::fabs(est - truth_v) / truth_v;
      };
      r.rate_error_t.push_back(rel(fitted->lambda_t[d], true_params->lambda_t[k]));
      r.rate_error_c.push_back(rel(fitted->lambda_c[d], true_params->lambda_c[k]));
    }
  }
  return r;
}

void write_report_csv(const EvalReport& r, std::ostream& out) {
  out << "metric,state,value\n";
  out << "accuracy,," << format_exact(r.accuracy) << '\n';
  out << "n_sites,," << r.n_sites << '\n';
  if (r.mean_true_posterior) out << "mean_true_posterior,," << format_exact(*r.mean_true_posterior) << '\n';
  for (std::size_t d = 0; d < r.permutation.size(); ++d) {
    out << "permutation," << d << ',' << r.permutation[d] << '\n';
  }
  for (std::size_t k = 0; k < r.confusion.size(); ++k) {
    for (std::size_t j = 0; j < r.confusion[k].size(); ++j) {
      out << "confusion_" << j << ',' << k << ',' << r.confusion[k][j] << '\n';
    }
  }
  for (std::size_t k = 0; k < r.rate_error_t.size(); ++k) {
    out << "rate_error_t," << k << ',' << format_exact(r.rate_error_t[k]) << '\n';
    out << "rate_error_c," << k << ',' << format_exact(r.rate_error_c[k]) << '\n';
  }
}

void write_report_text(const EvalReport& r, std::ostream& out) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "aligned accuracy: %.4f over %zu sites\n", r.accuracy, r.n_sites);
  out << buf;
  if (r.mean_true_posterior) {
    std::snprintf(buf, sizeof(buf), "mean posterior on true state: %.4f\n", *r.mean_true_posterior);
    out << buf;
  }
  out << "label map (decoded -> truth):";
  for (std::size_t d = 0; d < r.permutation.size(); ++d) out << ' ' << d << "->" << r.permutation[d];
  out << "\nconfusion (rows = truth, cols = decoded):\n";
  for (const auto& row : r.confusion) {
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "\t" : "  ") << row[j];
    out << '\n';
  }
  for (std::size_t k = 0; k < r.rate_error_t.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "state %zu rate error: T %.4f  C %.4f\n", k, r.rate_error_t[k],
                  r.rate_error_c[k]);
    out << buf;
  }
}

StateField majority_downsample(const StateField& fine, const Grid& fine_grid, const Grid& coarse,
                               std::size_t n_states) {
  if (fine.n_cells() != fine_grid.size()) throw ConfigError("fine field does not match its grid");
  std::vector<std::vector<std::size_t>> members(coarse.size());
  for (const auto& g : fine_grid.cells()) {
    if (auto c = coarse.locate(g.centroid.lon, g.centroid.lat)) members[c->value].push_back(g.id.value);
  }
  StateField out(coarse.size(), fine.n_years(), -1);
  std::vector<std::size_t> votes(n_states);
  for (std::size_t c = 0; c < coarse.size(); ++c) {
    if (members[c].empty()) continue;
    for (std::size_t y = 0; y < fine.n_years(); ++y) {
      std::fill(votes.begin(), votes.end(), 0);
      for (std::size_t f : members[c]) ++votes[static_cast<std::size_t>(fine.at(f, y))];
      std::size_t best = 0;
      for (std::size_t k = 1; k < n_states; ++k)
        if (votes[k] > votes[best]) best = k;
      out.at(c, y) = static_cast<int>(best);
    }
  }
  return out;
}

SweepResult resolution_sweep(const Grid& fine, const StateField& truth,
                             std::span<const EventRecord> events, int first_year,
                             std::span<const GridSpec> targets, const SweepSettings& settings) {
  const std::size_t K = settings.fit.n_states;
  const int last_year = first_year + static_cast<int>(truth.n_years()) - 1;
  SweepResult result;
  result.records.resize(targets.size());
  parallel_for(targets.size(), settings.threads, [&](std::size_t i) {
    const GridSpec& spec = targets[i];
    if (!(spec.cell_size > fine.spec().cell_size)) {
      throw ConfigError("sweep target must be coarser than the reference grid");
    }
    const Grid grid(spec);
    const CountPanel panel = aggregate(events, grid, first_year, last_year).panel;
    SweepRecord& rec = result.records[i];
    rec.spec = spec;
    rec.n_cells = grid.size();
    rec.total_events = panel.total_t() + panel.total_c();
    rec.mean_events_per_cell_year = static_cast<double>(rec.total_events) /
                                    static_cast<double>(grid.size() * truth.n_years());
    const double box_area = (spec.max_lon - spec.min_lon) * (spec.max_lat - spec.min_lat);
    rec.effective_resolution = std::sqrt(box_area / static_cast<double>(grid.size()));

    BaumWelchSettings fit = settings.fit;
    fit.threads = 1;
    fit.stream = i;
    const auto obs = panel_observations(panel);
    const FitResult fitted = baum_welch_fit(obs, fit);
    StateField decoded(grid.size(), truth.n_years());
    for (std::size_t cell = 0; cell < grid.size(); ++cell) {
      const ViterbiPath path = viterbi(fitted.params, obs[cell]);
      for (std::size_t y = 0; y < truth.n_years(); ++y) decoded.at(cell, y) = path.states[y];
    }
    const StateField coarse_truth = majority_downsample(truth, fine, grid, K);
    const EvalReport rep = score(decoded, nullptr, coarse_truth, K);
    rec.accuracy = rep.accuracy;
    rec.scored_sites = rep.n_sites;
  });
  for (std::size_t i = 1; i < result.records.size(); ++i) {
    if (result.records[i].accuracy > result.records[result.best].accuracy) result.best = i;
  }
  return result;
}

void write_sweep_csv(const SweepResult& result, std::ostream& out) {
  out << "cell_size,shape,n_cells,total_events,mean_events_per_cell_year,accuracy,"
         "effective_resolution,scored_sites\n";
  for (const auto& r : result.records) {
    out << format_exact(r.spec.cell_size) << ',' << to_string(r.spec.shape) << ',' << r.n_cells
        << ',' << r.total_events << ',' << format_exact(r.mean_events_per_cell_year) << ','
        << format_exact(r.accuracy) << ',' << format_exact(r.effective_resolution) << ','
        << r.scored_sites << '\n';
  }
}

void write_sweep_text(const SweepResult& result, std::ostream& out) {
  char buf[160];
  out << "cell_size  shape   cells  events/cell-yr  accuracy\n";
  for (const auto& r : result.records) {
    std::snprintf(buf, sizeof(buf), "%9.4f  %-6s %6zu  %14.4f  %8.4f\n", r.spec.cell_size,
                  to_string(r.spec.shape).c_str(), r.n_cells, r.mean_events_per_cell_year,
                  r.accuracy);
    out << buf;
  }
  if (!result.records.empty()) {
    const auto& b = result.records[result.best];
    std::snprintf(buf, sizeof(buf), "best: %s cells of %.4f degrees (accuracy %.4f)\n",
                  to_string(b.spec.shape).c_str(), b.spec.cell_size, b.accuracy);
    out << buf;
  }
}

}  // namespace tcontrol
