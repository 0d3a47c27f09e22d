#include "tcontrol/hmrf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "tcontrol/csv.hpp"
#include "tcontrol/parallel.hpp"
#include "tcontrol/random.hpp"

namespace tcontrol {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

// Cached log-terms for repeated conditional evaluation.
class SiteKernel {
 public:
  SiteKernel(const HmrfModel& model, const CountPanel& panel)
      : model_(model), K_(model.n_states()), years_(panel.n_years()) {
    if (panel.n_cells() != model.potts().graph.size()) {
      throw ConfigError("panel has " + std::to_string(panel.n_cells()) +
                        " cells but the neighbor graph has " +
                        std::to_string(model.potts().graph.size()));
    }
    emission_.resize(panel.n_cells() * years_ * K_);
    for (std::size_t cell = 0; cell < panel.n_cells(); ++cell)
      for (std::size_t y = 0; y < years_; ++y)
        for (std::size_t k = 0; k < K_; ++k)
          emission_[(cell * years_ + y) * K_ + k] =
              emission_loglik(model.params(), panel.t(cell, y), panel.c(cell, y), k);
    log_pi_.resize(K_);
    for (std::size_t k = 0; k < K_; ++k) log_pi_[k] = safe_log(model.params().pi[k]);
    const std::size_t n_mats = model.has_cell_transitions() ? panel.n_cells() : 1;
    log_a_.resize(n_mats * K_ * K_);
    for (std::size_t m = 0; m < n_mats; ++m) {
      const Matrix& A = model.transition(m);
      for (std::size_t i = 0; i < K_; ++i)
        for (std::size_t j = 0; j < K_; ++j) log_a_[(m * K_ + i) * K_ + j] = safe_log(A(i, j));
    }
  }

  std::size_t n_states() const { return K_; }

  double log_a(std::size_t cell, int from, int to) const {
    const std::size_t m = model_.has_cell_transitions() ? cell : 0;
    return log_a_[(m * K_ + static_cast<std::size_t>(from)) * K_ + static_cast<std::size_t>(to)];
  }

  double emission(std::size_t cell, std::size_t year, std::size_t k) const {
    return emission_[(cell * years_ + year) * K_ + k];
  }

  double log_pi(std::size_t k) const { return log_pi_[k]; }

  // Normalized conditional written into `out` (size K).
  void conditional(const StateField& field, std::size_t cell, std::size_t year,
                   std::span<double> out) const {
    const double beta = model_.potts().beta;
    const auto& nbrs = model_.potts().graph.neighbors(cell);
    double chain_max = kNegInf;
    double full_max = kNegInf;
    for (std::size_t k = 0; k < K_; ++k) {
      const int ki = static_cast<int>(k);
      double chain = year == 0 ? log_pi_[k] : log_a(cell, field.at(cell, year - 1), ki);
      if (year + 1 < years_) chain += log_a(cell, ki, field.at(cell, year + 1));
      const double em = emission(cell, year, k);
      std::size_t same = 0;
      for (std::size_t n : nbrs) same += field.at(n, year) == ki;
      const double spatial = beta * static_cast<double>(same);
      out[k] = chain + spatial + em;
      chain_max = std::max(chain_max, out[k]);
      // Without the chain terms, for the fallback below.
      full_max = std::max(full_max, spatial + em);
    }
    if (chain_max == kNegInf) {
      // The neighbors in time admit no state (possible only with
      // zero-probability transitions); fall back to spatial + emission.
      for (std::size_t k = 0; k < K_; ++k) {
        std::size_t same = 0;
        for (std::size_t n : nbrs) same += field.at(n, year) == static_cast<int>(k);
        out[k] = beta * static_cast<double>(same) + emission(cell, year, k);
      }
      chain_max = full_max;
    }
    double total = 0.0;
    for (std::size_t k = 0; k < K_; ++k) {
      out[k] = out[k] == kNegInf ? 0.0 : std::exp(out[k] - chain_max);
      total += out[k];
    }
    if (!(total > 0.0)) {
      for (std::size_t k = 0; k < K_; ++k) out[k] = 1.0 / static_cast<double>(K_);
      return;
    }
    for (std::size_t k = 0; k < K_; ++k) out[k] /= total;
  }

  // Unnormalized log weights (no fallback), used by ICM.
  void log_weights(const StateField& field, std::size_t cell, std::size_t year,
                   std::span<double> out) const {
    const double beta = model_.potts().beta;
    const auto& nbrs = model_.potts().graph.neighbors(cell);
    for (std::size_t k = 0; k < K_; ++k) {
      const int ki = static_cast<int>(k);
      double v = year == 0 ? log_pi_[k] : log_a(cell, field.at(cell, year - 1), ki);
      if (year + 1 < years_) v += log_a(cell, ki, field.at(cell, year + 1));
      std::size_t same = 0;
      for (std::size_t n : nbrs) same += field.at(n, year) == ki;
      out[k] = v + beta * static_cast<double>(same) + emission(cell, year, k);
    }
  }

  double joint(const StateField& field) const {
    const auto& graph = model_.potts().graph;
    double score = 0.0;
    for (std::size_t cell = 0; cell < field.n_cells(); ++cell) {
      for (std::size_t y = 0; y < years_; ++y) {
        const int s = field.at(cell, y);
        score += y == 0 ? log_pi_[static_cast<std::size_t>(s)] : log_a(cell, field.at(cell, y - 1), s);
        score += emission(cell, y, static_cast<std::size_t>(s));
      }
    }
    std::size_t same = 0;
    for (std::size_t cell = 0; cell < graph.size(); ++cell)
      for (std::size_t n : graph.neighbors(cell))
        if (n > cell)
          for (std::size_t y = 0; y < years_; ++y) same += field.at(cell, y) == field.at(n, y);
    return score + model_.potts().beta * static_cast<double>(same);
  }

 private:
  const HmrfModel& model_;
  std::size_t K_;
  std::size_t years_;
  std::vector<double> emission_;
  std::vector<double> log_pi_;
  std::vector<double> log_a_;
};

void check_field(const StateField& field, const CountPanel& panel, std::size_t K) {
  if (field.n_cells() != panel.n_cells() || field.n_years() != panel.n_years()) {
    throw ConfigError("state field dimensions do not match the count panel");
  }
  for (int s : field.values()) {
    if (s < 0 || static_cast<std::size_t>(s) >= K) {
      throw ConfigError("state field holds a label outside [0, K)");
    }
  }
}

}  // namespace

void PottsParams::validate() const {
  if (!std::isfinite(beta) || beta < 0.0) throw ConfigError("beta must be finite and >= 0");
}

StateField FieldPosterior::mode() const {
  StateField f(n_cells, n_years);
  for (std::size_t cell = 0; cell < n_cells; ++cell) {
    for (std::size_t y = 0; y < n_years; ++y) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < n_states; ++k)
        if (p(cell, y, k) > p(cell, y, best)) best = k;
      f.at(cell, y) = static_cast<int>(best);
    }
  }
  return f;
}

HmrfModel::HmrfModel(HmmParams params, PottsParams potts, std::vector<Matrix> cell_transitions)
    : params_(std::move(params)), potts_(std::move(potts)),
      cell_transitions_(std::move(cell_transitions)) {
  params_.validate();
  potts_.validate();
  if (!cell_transitions_.empty() && cell_transitions_.size() != potts_.graph.size()) {
    throw ConfigError("need one transition matrix per cell");
  }
}

std::vector<double> full_conditional(const HmrfModel& model, const CountPanel& panel,
                                     const StateField& field, std::size_t cell, std::size_t year) {
  check_field(field, panel, model.n_states());
  const SiteKernel kernel(model, panel);
  std::vector<double> out(model.n_states());
  kernel.conditional(field, cell, year, out);
  return out;
}

double joint_log_score(const HmrfModel& model, const CountPanel& panel, const StateField& field) {
  check_field(field, panel, model.n_states());
  return SiteKernel(model, panel).joint(field);
}

std::vector<int> greedy_coloring(const NeighborGraph& graph) {
  std::vector<int> color(graph.size(), -1);
  std::vector<char> used;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    used.assign(graph.neighbors(i).size() + 1, 0);
    for (std::size_t n : graph.neighbors(i)) {
      const int c = color[n];
      if (c >= 0 && static_cast<std::size_t>(c) < used.size()) used[static_cast<std::size_t>(c)] = 1;
    }
    int c = 0;
    while (used[static_cast<std::size_t>(c)]) ++c;
    color[i] = c;
  }
  return color;
}

FieldPosterior gibbs_sample(const HmrfModel& model, const CountPanel& panel,
                            const StateField& init, const GibbsSettings& settings,
                            const SampleVisitor& visit) {
  const std::size_t K = model.n_states();
  check_field(init, panel, K);
  if (settings.sweeps <= settings.burn_in) throw ConfigError("gibbs: sweeps must exceed burn_in");
  if (settings.thin < 1) throw ConfigError("gibbs: thin must be at least 1");

  const SiteKernel kernel(model, panel);
  const std::vector<int> color = greedy_coloring(model.potts().graph);
  const int n_colors = color.empty() ? 0 : *std::max_element(color.begin(), color.end()) + 1;
  std::vector<std::vector<std::size_t>> classes(static_cast<std::size_t>(n_colors));
  for (std::size_t i = 0; i < color.size(); ++i) classes[static_cast<std::size_t>(color[i])].push_back(i);

  FieldPosterior post;
  post.n_cells = panel.n_cells();
  post.n_years = panel.n_years();
  post.n_states = K;
  post.sweeps = settings.sweeps;
  post.burn_in = settings.burn_in;
  post.thin = settings.thin;
  post.marginal.assign(post.n_cells * post.n_years * K, 0.0);
  StateField field = init;

  // Parallel updates only pay off for large color classes.
  constexpr std::size_t kParallelMin = 512;
  for (std::size_t sweep = 0; sweep < settings.sweeps; ++sweep) {
    for (std::size_t y = 0; y < panel.n_years(); ++y) {
      for (const auto& cls : classes) {
        auto update = [&](std::size_t idx) {
          const std::size_t cell = cls[idx];
          double buf[16];
          std::vector<double> heap;
          std::span<double> probs;
          if (K <= 16) {
            probs = std::span<double>(buf, K);
          } else {
            heap.resize(K);
            probs = heap;
          }
          kernel.conditional(field, cell, y, probs);
          KeyedStream rng(settings.seed, {tag(StreamTag::kGibbs), sweep, cell, y});
          field.at(cell, y) = static_cast<int>(rng.categorical(probs));
        };
        const unsigned threads = cls.size() >= kParallelMin ? settings.threads : 1;
        parallel_for(cls.size(), threads, update);
      }
    }
    if (sweep >= settings.burn_in && (sweep - settings.burn_in) % settings.thin == 0) {
      ++post.n_samples;
      for (std::size_t cell = 0; cell < post.n_cells; ++cell)
        for (std::size_t y = 0; y < post.n_years; ++y)
          post.marginal[(cell * post.n_years + y) * K + static_cast<std::size_t>(field.at(cell, y))] += 1.0;
      if (visit) visit(field);
    }
  }
  const double n = static_cast<double>(post.n_samples);
  for (double& m : post.marginal) m /= n;
  post.last = std::move(field);
  return post;
}

IcmResult icm_decode(const HmrfModel& model, const CountPanel& panel, const StateField& init,
                     const IcmSettings& settings) {
  const std::size_t K = model.n_states();
  check_field(init, panel, K);
  if (settings.max_sweeps < 1) throw ConfigError("icm: max_sweeps must be at least 1");
  const SiteKernel kernel(model, panel);
  IcmResult result{init, 0, false, 0.0};
  StateField& field = result.field;
  std::vector<double> w(K);
  double score = settings.check_monotone ? kernel.joint(field) : 0.0;

  for (std::size_t sweep = 0; sweep < settings.max_sweeps; ++sweep) {
    bool changed = false;
    for (std::size_t y = 0; y < panel.n_years(); ++y) {
      for (std::size_t cell = 0; cell < panel.n_cells(); ++cell) {
        kernel.log_weights(field, cell, y, w);
        const int cur = field.at(cell, y);
        int best = cur;
        for (std::size_t k = 0; k < K; ++k)
          if (w[k] > w[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
        if (best == cur) continue;
        field.at(cell, y) = best;
        changed = true;
        if (settings.check_monotone) {
          const double next = kernel.joint(field);
          if (next < score - 1e-9 * std::max(1.0, std::fabs(score))) {
            throw std::logic_error("icm: joint score decreased");
          }
          score = next;
        }
      }
    }
    result.sweeps = sweep + 1;
    if (!changed) {
      result.converged = true;
      break;
    }
  }
  result.score = kernel.joint(field);
  return result;
}

StateField viterbi_field(const HmrfModel& model, const CountPanel& panel, unsigned threads) {
  StateField field(panel.n_cells(), panel.n_years());
  parallel_for(panel.n_cells(), threads, [&](std::size_t cell) {
    const ViterbiPath path =
        viterbi(model.params(), cell_observations(panel, cell), model.transition(cell));
    for (std::size_t y = 0; y < panel.n_years(); ++y) field.at(cell, y) = path.states[y];
  });
  return field;
}

namespace {

struct SampledStats {
  std::size_t K;
  std::vector<double> initial, transitions, occupancy, weighted_t, weighted_c;
  double score_sum = 0.0;
  std::size_t samples = 0;

  explicit SampledStats(std::size_t k)
      : K(k), initial(k, 0.0), transitions(k * k, 0.0), occupancy(k, 0.0), weighted_t(k, 0.0),
        weighted_c(k, 0.0) {}

  void add(const StateField& f, const CountPanel& panel) {
    ++samples;
    for (std::size_t cell = 0; cell < f.n_cells(); ++cell) {
      initial[static_cast<std::size_t>(f.at(cell, 0))] += 1.0;
      for (std::size_t y = 0; y < f.n_years(); ++y) {
        const auto s = static_cast<std::size_t>(f.at(cell, y));
        occupancy[s] += 1.0;
        weighted_t[s] += panel.t(cell, y);
        weighted_c[s] += panel.c(cell, y);
        if (y + 1 < f.n_years()) transitions[s * K + static_cast<std::size_t>(f.at(cell, y + 1))] += 1.0;
      }
    }
  }
};

HmmParams sampled_maximization(const SampledStats& st, const HmmParams& previous,
                               double rate_floor, std::vector<std::string>& warnings) {
  const std::size_t K = st.K;
  HmmParams p = previous;
  double n0 = 0.0;
  for (double v : st.initial) n0 += v;
  for (std::size_t k = 0; k < K; ++k) p.pi[k] = st.initial[k] / n0;
  for (std::size_t i = 0; i < K; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < K; ++j) row += st.transitions[i * K + j];
    if (row <= 0.0) continue;  // state never left in any sample: keep previous row
    for (std::size_t j = 0; j < K; ++j) p.transition(i, j) = st.transitions[i * K + j] / row;
  }
  for (std::size_t k = 0; k < K; ++k) {
    if (st.occupancy[k] < 1e-12) {
      warnings.push_back("state " + std::to_string(k) +
                         " was never sampled; rates set to the floor");
      p.lambda_t[k] = rate_floor;
      p.lambda_c[k] = rate_floor;
      continue;
    }
    p.lambda_t[k] = std::max(st.weighted_t[k] / st.occupancy[k], rate_floor);
    p.lambda_c[k] = std::max(st.weighted_c[k] / st.occupancy[k], rate_floor);
  }
  return p;
}

}  // namespace

McemResult mcem_fit(const CountPanel& panel, const NeighborGraph& graph,
                    const McemSettings& settings, const TransitionBuilder& cell_transitions) {
  const std::size_t K = settings.init ? settings.init->n_states() : settings.n_states;
  if (K == 0) throw ConfigError("n_states must be at least 1");
  McemResult result;

  if (settings.init) {
    result.params = *settings.init;
  } else {
    BaumWelchSettings bw = settings.init_fit;
    bw.n_states = K;
    bw.rate_floor = settings.rate_floor;
    const auto obs = panel_observations(panel);
    FitResult fit = baum_welch_fit(obs, bw);
    result.params = std::move(fit.params);
    for (auto& w : fit.warnings) result.warnings.push_back(std::move(w));
  }
  PottsParams potts{settings.beta, graph};
  auto make_model = [&] {
    std::vector<Matrix> per_cell;
    if (cell_transitions) per_cell = cell_transitions(result.params.transition);
    return HmrfModel(result.params, potts, std::move(per_cell));
  };
  StateField field = viterbi_field(make_model(), panel, settings.gibbs.threads);

  auto e_step = [&](std::size_t iteration, SampledStats* stats) {
    const HmrfModel model = make_model();
    GibbsSettings gs = settings.gibbs;
    gs.seed = KeyedStream::mix(settings.gibbs.seed ^ KeyedStream::mix(iteration + 1));
    SampleVisitor visit;
    if (stats) {
      visit = [&](const StateField& f) {
        stats->add(f, panel);
        stats->score_sum += joint_log_score(model, panel, f);
      };
    }
    FieldPosterior post = gibbs_sample(model, panel, field, gs, visit);
    field = post.last;
    return post;
  };

  for (std::size_t it = 0; it < settings.em_iters; ++it) {
    SampledStats stats(K);
    e_step(it, &stats);
    result.trace.push_back(stats.score_sum / static_cast<double>(stats.samples));
    HmmParams next = sampled_maximization(stats, result.params, settings.rate_floor, result.warnings);
    if (!settings.update_transition) next.transition = result.params.transition;
    result.params = std::move(next);
  }
  result.posterior = e_step(settings.em_iters, nullptr);

  if (settings.em_iters == 0) return result;

  const auto order = canonical_order(result.params);
  result.params = permute_states(result.params, order);
  std::vector<int> relabel(K);
  for (std::size_t n = 0; n < K; ++n) relabel[order[n]] = static_cast<int>(n);
  FieldPosterior& post = result.posterior;
  std::vector<double> remapped(post.marginal.size());
  for (std::size_t site = 0; site < post.n_cells * post.n_years; ++site)
    for (std::size_t k = 0; k < K; ++k)
      remapped[site * K + static_cast<std::size_t>(relabel[k])] = post.marginal[site * K + k];
  post.marginal = std::move(remapped);
  for (std::size_t cell = 0; cell < post.n_cells; ++cell)
    for (std::size_t y = 0; y < post.n_years; ++y)
      post.last.at(cell, y) = relabel[static_cast<std::size_t>(post.last.at(cell, y))];
  return result;
}

double potts_pseudo_loglik(const StateField& field, const NeighborGraph& graph,
                           std::size_t n_states, double beta) {
  double total = 0.0;
  std::vector<double> counts(n_states);
  for (std::size_t y = 0; y < field.n_years(); ++y) {
    for (std::size_t cell = 0; cell < field.n_cells(); ++cell) {
      std::fill(counts.begin(), counts.end(), 0.0);
      for (std::size_t n : graph.neighbors(cell)) counts[static_cast<std::size_t>(field.at(n, y))] += 1.0;
      double m = kNegInf;
      for (double c : counts) m = std::max(m, beta * c);
      double z = 0.0;
      for (double c : counts) z += std::exp(beta * c - m);
      total += beta * counts[static_cast<std::size_t>(field.at(cell, y))] - (m + std::log(z));
    }
  }
  return total;
}

double potts_pseudo_loglik(const StateField& field, const NeighborGraph& graph,
                           const HmmParams& chain, double beta) {
  const std::size_t K = chain.n_states();
  const std::size_t T = field.n_years();
  double total = 0.0;
  std::vector<double> w(K);
  for (std::size_t y = 0; y < T; ++y) {
    for (std::size_t cell = 0; cell < field.n_cells(); ++cell) {
      std::fill(w.begin(), w.end(), 0.0);
      for (std::size_t n : graph.neighbors(cell)) w[static_cast<std::size_t>(field.at(n, y))] += beta;
      for (std::size_t k = 0; k < K; ++k) {
        w[k] += y == 0 ? std::log(chain.pi[k])
                       : std::log(chain.transition(static_cast<std::size_t>(field.at(cell, y - 1)), k));
        if (y + 1 < T) w[k] += std::log(chain.transition(k, static_cast<std::size_t>(field.at(cell, y + 1))));
      }
      const double m = *std::max_element(w.begin(), w.end());
      if (m == kNegInf) continue;
      double z = 0.0;
      for (double v : w) z += std::exp(v - m);
      total += w[static_cast<std::size_t>(field.at(cell, y))] - (m + std::log(z));
    }
  }
  return total;
}

namespace {

template <class Score>
BetaEstimate best_candidate(std::span<const double> candidates, Score score) {
  if (candidates.empty()) throw ConfigError("estimate_beta: candidate list is empty");
  BetaEstimate est;
  bool have = false;
  double best = kNegInf;
  for (double b : candidates) {
    const double pl = score(b);
    est.pseudo_loglik.push_back(pl);
    if (!have || pl > best || (pl == best && b < est.beta)) {
      best = pl;
      est.beta = b;
      have = true;
    }
  }
  return est;
}

}  // namespace

BetaEstimate estimate_beta(const StateField& field, const NeighborGraph& graph,
                           std::size_t n_states, std::span<const double> candidates) {
  return best_candidate(candidates, [&](double b) { return potts_pseudo_loglik(field, graph, n_states, b); });
}

BetaEstimate estimate_beta(const StateField& field, const NeighborGraph& graph,
                           const HmmParams& chain, std::span<const double> candidates) {
  return best_candidate(candidates, [&](double b) { return potts_pseudo_loglik(field, graph, chain, b); });
}

void write_field_csv(const StateField& field, const FieldPosterior* posterior,
                     std::size_t n_states, int first_year, std::ostream& out) {
  out << "cell_id,year,state";
  for (std::size_t k = 0; k < n_states; ++k) out << ",p_" << k;
  out << '\n';
  for (std::size_t cell = 0; cell < field.n_cells(); ++cell) {
    for (std::size_t y = 0; y < field.n_years(); ++y) {
      out << cell << ',' << first_year + static_cast<int>(y) << ',' << field.at(cell, y);
      for (std::size_t k = 0; k < n_states; ++k) {
        const double p = posterior ? posterior->p(cell, y, k)
                                   : (field.at(cell, y) == static_cast<int>(k) ? 1.0 : 0.0);
        out << ',' << format_exact(p);
      }
      out << '\n';
    }
  }
}

FieldTable read_field_csv(std::istream& in) {
  std::string line;
  if (!csv::next_line(in, line)) throw DataError("field CSV is empty");
  const auto header = csv::split_line(line);
  if (header.size() < 3 || header[0] != "cell_id" || header[1] != "year" || header[2] != "state") {
    throw DataError("field CSV: expected header starting cell_id,year,state");
  }
  const std::size_t n_prob = header.size() - 3;
  for (std::size_t k = 0; k < n_prob; ++k) {
    if (header[3 + k] != "p_" + std::to_string(k)) throw DataError("field CSV: bad probability column");
  }
  struct Row {
    long long cell, year;
    int state;
    std::vector<double> p;
  };
  std::vector<Row> rows;
  long long max_cell = -1, min_year = 0, max_year = 0;
  int max_state = 0;
  while (csv::next_line(in, line)) {
    const auto f = csv::split_line(line);
    if (f.size() != header.size()) throw DataError("field CSV: wrong field count");
    Row r{parse_integer(f[0]), parse_integer(f[1]), static_cast<int>(parse_integer(f[2])), {}};
    for (std::size_t k = 0; k < n_prob; ++k) r.p.push_back(parse_double(f[3 + k]));
    if (r.cell < 0) throw DataError("field CSV: negative cell id");
    if (rows.empty()) min_year = max_year = r.year;
    min_year = std::min(min_year, r.year);
    max_year = std::max(max_year, r.year);
    max_cell = std::max(max_cell, r.cell);
    max_state = std::max(max_state, r.state);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw DataError("field CSV has no rows");
  const auto n_cells = static_cast<std::size_t>(max_cell + 1);
  const auto n_years = static_cast<std::size_t>(max_year - min_year + 1);
  if (rows.size() != n_cells * n_years) throw DataError("field CSV is not dense");
  const std::size_t K = n_prob > 0 ? n_prob : static_cast<std::size_t>(max_state + 1);

  FieldTable table;
  table.first_year = static_cast<int>(min_year);
  table.field = StateField(n_cells, n_years);
  FieldPosterior& post = table.posterior;
  post.n_cells = n_cells;
  post.n_years = n_years;
  post.n_states = K;
  post.n_samples = 1;
  post.marginal.assign(n_cells * n_years * K, 0.0);
  for (const auto& r : rows) {
    const auto cell = static_cast<std::size_t>(r.cell);
    const auto y = static_cast<std::size_t>(r.year - min_year);
    if (r.state >= static_cast<int>(K)) throw DataError("field CSV: state outside [0, K)");
    table.field.at(cell, y) = r.state;
    for (std::size_t k = 0; k < K; ++k) {
      post.marginal[(cell * n_years + y) * K + k] =
          n_prob > 0 ? r.p[k] : (r.state == static_cast<int>(k) ? 1.0 : 0.0);
    }
  }
  post.last = table.field;
  return table;
}

FieldTable read_field_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open field file: " + path);
  return read_field_csv(in);
}

}  // namespace tcontrol
