#include "tcontrol/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "tcontrol/parallel.hpp"
#include "tcontrol/random.hpp"

namespace tcontrol {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kStochasticTol = 1e-9;

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

// Emission log-likelihoods for every (step, state), shifted per step by the
// step maximum so that exp() stays in range. Returns the shifts.
std::vector<double> scaled_emissions(const HmmParams& params, ObservationView obs,
                                     std::vector<double>& scaled) {
  const std::size_t K = params.n_states();
  const std::size_t T = obs.size();
  scaled.assign(T * K, 0.0);
  std::vector<double> shift(T);
  for (std::size_t t = 0; t < T; ++t) {
    double m = kNegInf;
    for (std::size_t k = 0; k < K; ++k) {
      const double v = emission_loglik(params, obs.t[t], obs.c[t], k);
      scaled[t * K + k] = v;
      m = std::max(m, v);
    }
    if (m == kNegInf) throw ImpossibleObservation(t);
    shift[t] = m;
    for (std::size_t k = 0; k < K; ++k) scaled[t * K + k] = std::exp(scaled[t * K + k] - m);
  }
  return shift;
}

void check_observations(ObservationView obs) {
  if (obs.t.size() != obs.c.size()) throw ConfigError("observation series lengths differ");
  if (obs.t.empty()) throw ConfigError("observation sequence is empty");
}

}  // namespace

void HmmParams::validate() const {
  const std::size_t K = pi.size();
  if (K == 0) throw ConfigError("n_states must be at least 1");
  if (transition.rows() != K || transition.cols() != K) {
    throw ConfigError("transition must be n_states x n_states");
  }
  if (lambda_t.size() != K || lambda_c.size() != K) {
    throw ConfigError("lambda_t and lambda_c need one rate per state");
  }
  double sum = 0.0;
  for (double p : pi) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError("pi has a negative or non-finite entry");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > kStochasticTol) throw ConfigError("pi does not sum to 1");
  for (std::size_t i = 0; i < K; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < K; ++j) {
      const double a = transition(i, j);
      if (!(a >= 0.0) || !std::isfinite(a)) {
        throw ConfigError("transition has a negative or non-finite entry");
      }
      row += a;
    }
    if (std::fabs(row - 1.0) > kStochasticTol) {
      throw ConfigError("transition row " + std::to_string(i) + " does not sum to 1");
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    if (!(lambda_t[k] >= 0.0) || !std::isfinite(lambda_t[k]) || !(lambda_c[k] >= 0.0) ||
        !std::isfinite(lambda_c[k])) {
      throw ConfigError("Poisson rates must be finite and nonnegative");
    }
  }
}

HmmParams make_params(std::vector<double> lambda_t, std::vector<double> lambda_c, double stay) {
  const std::size_t K = lambda_t.size();
  HmmParams p;
  p.pi.assign(K, 1.0 / static_cast<double>(K));
  p.transition = Matrix(K, K);
  for (std::size_t i = 0; i < K; ++i) {
    for (std::size_t j = 0; j < K; ++j) {
      p.transition(i, j) = K == 1 ? 1.0 : (i == j ? stay : (1.0 - stay) / static_cast<double>(K - 1));
    }
  }
  p.lambda_t = std::move(lambda_t);
  p.lambda_c = std::move(lambda_c);
  return p;
}

ObservationView cell_observations(const CountPanel& panel, std::size_t cell) {
  return {panel.t_series(cell), panel.c_series(cell)};
}

std::vector<ObservationView> panel_observations(const CountPanel& panel) {
  std::vector<ObservationView> out;
  out.reserve(panel.n_cells());
  for (std::size_t cell = 0; cell < panel.n_cells(); ++cell) {
    out.push_back(cell_observations(panel, cell));
  }
  return out;
}

ImpossibleObservation::ImpossibleObservation(std::size_t step)
    : DataError("observation at step " + std::to_string(step) +
                " has zero probability under every state"),
      step_(step) {}

double poisson_logpmf(std::uint32_t n, double rate) {
  if (rate == 0.0) return n == 0 ? 0.0 : kNegInf;
  const double x = static_cast<double>(n);
  return x * std::log(rate) - rate - std::lgamma(x + 1.0);
}

double emission_loglik(const HmmParams& params, std::uint32_t t, std::uint32_t c, std::size_t k) {
  const double lt = poisson_logpmf(t, params.lambda_t[k]);
  if (lt == kNegInf) return kNegInf;
  return lt + poisson_logpmf(c, params.lambda_c[k]);
}

PosteriorMarginals forward_backward(const HmmParams& params, ObservationView obs) {
  return forward_backward(params, obs, params.transition);
}

PosteriorMarginals forward_backward(const HmmParams& params, ObservationView obs,
                                    const Matrix& A) {
  check_observations(obs);
  const std::size_t K = params.n_states();
  const std::size_t T = obs.size();

  std::vector<double> e;
  const std::vector<double> shift = scaled_emissions(params, obs, e);

  std::vector<double> alpha(T * K), scale(T);
  PosteriorMarginals out;
  out.steps = T;
  out.n_states = K;

  for (std::size_t t = 0; t < T; ++t) {
    double sum = 0.0;
    for (std::size_t j = 0; j < K; ++j) {
      double a;
      if (t == 0) {
        a = params.pi[j];
      } else {
        a = 0.0;
        for (std::size_t i = 0; i < K; ++i) a += alpha[(t - 1) * K + i] * A(i, j);
      }
      a *= e[t * K + j];
      alpha[t * K + j] = a;
      sum += a;
    }
    if (!(sum > 0.0)) throw ImpossibleObservation(t);
    scale[t] = sum;
    for (std::size_t j = 0; j < K; ++j) alpha[t * K + j] /= sum;
    out.loglik += std::log(sum) + shift[t];
  }

  std::vector<double> beta(T * K, 1.0);
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t i = 0; i < K; ++i) {
      double b = 0.0;
      for (std::size_t j = 0; j < K; ++j) {
        b += A(i, j) * e[(t + 1) * K + j] * beta[(t + 1) * K + j];
      }
      beta[t * K + i] = b / scale[t + 1];
    }
  }

  out.gamma.resize(T * K);
  for (std::size_t t = 0; t < T; ++t) {
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      out.gamma[t * K + k] = alpha[t * K + k] * beta[t * K + k];
      sum += out.gamma[t * K + k];
    }
    for (std::size_t k = 0; k < K; ++k) out.gamma[t * K + k] /= sum;
  }

  out.xi.resize(T > 0 ? (T - 1) * K * K : 0);
  for (std::size_t t = 0; t + 1 < T; ++t) {
    double sum = 0.0;
    double* x = &out.xi[t * K * K];
    for (std::size_t i = 0; i < K; ++i) {
      for (std::size_t j = 0; j < K; ++j) {
        x[i * K + j] = alpha[t * K + i] * A(i, j) * e[(t + 1) * K + j] * beta[(t + 1) * K + j];
        sum += x[i * K + j];
      }
    }
    for (std::size_t ij = 0; ij < K * K; ++ij) x[ij] /= sum;
  }
  return out;
}

ViterbiPath viterbi(const HmmParams& params, ObservationView obs) {
  return viterbi(params, obs, params.transition);
}

ViterbiPath viterbi(const HmmParams& params, ObservationView obs, const Matrix& A) {
  check_observations(obs);
  const std::size_t K = params.n_states();
  const std::size_t T = obs.size();

  Matrix logA(K, K);
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = 0; j < K; ++j) logA(i, j) = safe_log(A(i, j));

  std::vector<double> delta(K), next(K);
  std::vector<int> back(T * K, 0);
  for (std::size_t t = 0; t < T; ++t) {
    double column_best = kNegInf;
    bool emittable = false;
    for (std::size_t j = 0; j < K; ++j) {
      const double em = emission_loglik(params, obs.t[t], obs.c[t], j);
      if (em != kNegInf) emittable = true;
      double best = kNegInf;
      int arg = 0;
      if (t == 0) {
        best = safe_log(params.pi[j]);
      } else {
        for (std::size_t i = 0; i < K; ++i) {
          const double v = delta[i] + logA(i, j);
          if (v > best) {
            best = v;
            arg = static_cast<int>(i);
          }
        }
      }
      next[j] = best + em;
      back[t * K + j] = arg;
      column_best = std::max(column_best, next[j]);
    }
    if (!emittable || column_best == kNegInf) throw ImpossibleObservation(t);
    std::swap(delta, next);
  }

  ViterbiPath path;
  path.states.resize(T);
  int state = 0;
  path.log_prob = delta[0];
  for (std::size_t k = 1; k < K; ++k) {
    if (delta[k] > path.log_prob) {
      path.log_prob = delta[k];
      state = static_cast<int>(k);
    }
  }
  for (std::size_t t = T; t-- > 0;) {
    path.states[t] = state;
    state = back[t * K + static_cast<std::size_t>(state)];
  }
  return path;
}

std::vector<std::size_t> canonical_order(const HmmParams& params) {
  const std::size_t K = params.n_states();
  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), 0);
  auto share = [&](std::size_t k) {
    return params.lambda_t[k] / (params.lambda_t[k] + params.lambda_c[k] + 1e-12);
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (share(a) != share(b)) return share(a) > share(b);
    if (params.lambda_t[a] != params.lambda_t[b]) return params.lambda_t[a] > params.lambda_t[b];
    return params.lambda_c[a] < params.lambda_c[b];
  });
  return order;
}

HmmParams permute_states(const HmmParams& params, std::span<const std::size_t> order) {
  const std::size_t K = params.n_states();
  HmmParams out;
  out.pi.resize(K);
  out.lambda_t.resize(K);
  out.lambda_c.resize(K);
  out.transition = Matrix(K, K);
  for (std::size_t n = 0; n < K; ++n) {
    const std::size_t o = order[n];
    out.pi[n] = params.pi[o];
    out.lambda_t[n] = params.lambda_t[o];
    out.lambda_c[n] = params.lambda_c[o];
    for (std::size_t m = 0; m < K; ++m) out.transition(n, m) = params.transition(o, order[m]);
  }
  return out;
}

HmmParams canonicalize(const HmmParams& params) {
  const auto order = canonical_order(params);
  return permute_states(params, order);
}

namespace {

struct SufficientStats {
  double loglik = 0.0;
  std::vector<double> initial;      // K
  std::vector<double> transitions;  // K x K
  std::vector<double> occupancy;    // K
  std::vector<double> weighted_t;   // K
  std::vector<double> weighted_c;   // K

  explicit SufficientStats(std::size_t K)
      : initial(K, 0.0), transitions(K * K, 0.0), occupancy(K, 0.0), weighted_t(K, 0.0),
        weighted_c(K, 0.0) {}

  void add(const SufficientStats& o) {
    loglik += o.loglik;
    for (std::size_t i = 0; i < initial.size(); ++i) {
      initial[i] += o.initial[i];
      occupancy[i] += o.occupancy[i];
      weighted_t[i] += o.weighted_t[i];
      weighted_c[i] += o.weighted_c[i];
    }
    for (std::size_t i = 0; i < transitions.size(); ++i) transitions[i] += o.transitions[i];
  }
};

SufficientStats expectation(const HmmParams& params, std::span<const ObservationView> obs_set,
                            unsigned threads) {
  const std::size_t K = params.n_states();
  std::vector<SufficientStats> per_seq(obs_set.size(), SufficientStats(K));
  parallel_for(obs_set.size(), threads, [&](std::size_t s) {
    const ObservationView obs = obs_set[s];
    const PosteriorMarginals post = forward_backward(params, obs);
    SufficientStats& st = per_seq[s];
    st.loglik = post.loglik;
    for (std::size_t k = 0; k < K; ++k) st.initial[k] = post.gamma_at(0, k);
    for (std::size_t t = 0; t < post.steps; ++t) {
      for (std::size_t k = 0; k < K; ++k) {
        const double g = post.gamma_at(t, k);
        st.occupancy[k] += g;
        st.weighted_t[k] += g * obs.t[t];
        st.weighted_c[k] += g * obs.c[t];
      }
    }
    for (std::size_t x = 0; x < post.xi.size(); ++x) st.transitions[x % (K * K)] += post.xi[x];
  });
  // Fixed-order reduction keeps the sum independent of the thread count.
  SufficientStats total(K);
  for (const auto& st : per_seq) total.add(st);
  return total;
}

HmmParams maximization(const SufficientStats& st, std::size_t n_sequences, double rate_floor,
                       const HmmParams& previous, std::vector<std::string>& warnings) {
  const std::size_t K = st.initial.size();
  HmmParams p;
  p.pi.resize(K);
  p.lambda_t.resize(K);
  p.lambda_c.resize(K);
  p.transition = Matrix(K, K);
  for (std::size_t k = 0; k < K; ++k) p.pi[k] = st.initial[k] / static_cast<double>(n_sequences);

  for (std::size_t i = 0; i < K; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < K; ++j) row += st.transitions[i * K + j];
    for (std::size_t j = 0; j < K; ++j) {
      p.transition(i, j) = row > 0.0 ? st.transitions[i * K + j] / row : previous.transition(i, j);
    }
  }

  for (std::size_t k = 0; k < K; ++k) {
    if (st.occupancy[k] < 1e-12) {
      warnings.push_back("state " + std::to_string(k) +
                         " has negligible responsibility; rates set to the floor");
      p.lambda_t[k] = rate_floor;
      p.lambda_c[k] = rate_floor;
      continue;
    }
    p.lambda_t[k] = std::max(st.weighted_t[k] / st.occupancy[k], rate_floor);
    p.lambda_c[k] = std::max(st.weighted_c[k] / st.occupancy[k], rate_floor);
  }
  return p;
}

HmmParams floored(HmmParams p, double rate_floor) {
  for (auto& v : p.lambda_t) v = std::max(v, rate_floor);
  for (auto& v : p.lambda_c) v = std::max(v, rate_floor);
  return p;
}

void check_obs_set(std::span<const ObservationView> obs_set, std::size_t K) {
  if (K == 0) throw ConfigError("n_states must be at least 1");
  if (obs_set.empty()) throw ConfigError("baum_welch_fit: empty observation set");
  for (const auto& obs : obs_set) check_observations(obs);
}

}  // namespace

HmmParams initial_params(std::span<const ObservationView> obs_set, std::size_t n_states,
                         double rate_floor) {
  check_obs_set(obs_set, n_states);
  struct Pair {
    std::uint32_t t, c;
  };
  std::vector<Pair> all;
  for (const auto& obs : obs_set)
    for (std::size_t i = 0; i < obs.size(); ++i) all.push_back({obs.t[i], obs.c[i]});
  std::stable_sort(all.begin(), all.end(), [](const Pair& a, const Pair& b) {
    const long long da = static_cast<long long>(a.t) - a.c;
    const long long db = static_cast<long long>(b.t) - b.c;
    if (da != db) return da > db;
    return a.t > b.t;
  });
  std::vector<double> lt(n_states, 0.0), lc(n_states, 0.0);
  const std::size_t n = all.size();
  for (std::size_t k = 0; k < n_states; ++k) {
    const std::size_t begin = n * k / n_states;
    const std::size_t end = std::max(begin + 1, n * (k + 1) / n_states);
    double st = 0.0, sc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = begin; i < std::min(end, n); ++i, ++count) {
      st += all[i].t;
      sc += all[i].c;
    }
    if (count > 0) {
      lt[k] = st / static_cast<double>(count);
      lc[k] = sc / static_cast<double>(count);
    }
  }
  return floored(make_params(std::move(lt), std::move(lc), 0.8), rate_floor);
}

FitResult baum_welch_from(std::span<const ObservationView> obs_set, const HmmParams& init,
                          const BaumWelchSettings& settings) {
  check_obs_set(obs_set, init.n_states());
  init.validate();
  FitResult result;
  HmmParams current = floored(init, settings.rate_floor);
  double previous = kNegInf;
  for (std::size_t it = 0;; ++it) {
    const SufficientStats st = expectation(current, obs_set, settings.threads);
    result.trace.push_back(st.loglik);
    if (it > 0) {
      const double rel = (st.loglik - previous) / std::max(std::fabs(previous), 1e-300);
      if (rel < settings.tol) {
        result.converged = true;
        break;
      }
    }
    if (it >= settings.max_iter) break;
    previous = st.loglik;
    current = maximization(st, obs_set.size(), settings.rate_floor, current, result.warnings);
    result.iterations = it + 1;
  }
  result.params = canonicalize(current);
  return result;
}

FitResult baum_welch_fit(std::span<const ObservationView> obs_set,
                         const BaumWelchSettings& settings) {
  const std::size_t K = settings.n_states;
  const HmmParams base = initial_params(obs_set, K, settings.rate_floor);
  const std::size_t restarts = std::max<std::size_t>(1, settings.restarts);

  FitResult best;
  bool have_best = false;
  for (std::size_t r = 0; r < restarts; ++r) {
    HmmParams init = base;
    if (r > 0) {
      KeyedStream rng(settings.seed, {tag(StreamTag::kRestart), settings.stream, r});
      for (std::size_t k = 0; k < K; ++k) {
        // Log-uniform jitter in [1/4, 4).
        init.lambda_t[k] *= std::exp((2.0 * rng.uniform() - 1.0) * std::log(4.0));
        init.lambda_c[k] *= std::exp((2.0 * rng.uniform() - 1.0) * std::log(4.0));
      }
      double total = 0.0;
      for (auto& p : init.pi) total += (p = 0.5 + rng.uniform());
      for (auto& p : init.pi) p /= total;
      if (K > 1) {
        for (std::size_t i = 0; i < K; ++i) {
          const double stay = 0.6 + 0.35 * rng.uniform();
          for (std::size_t j = 0; j < K; ++j)
            init.transition(i, j) = i == j ? stay : (1.0 - stay) / static_cast<double>(K - 1);
        }
      }
    }
    FitResult run = baum_welch_from(obs_set, init, settings);
    if (!have_best || run.loglik() > best.loglik()) {
      best = std::move(run);
      best.best_restart = r;
      have_best = true;
    }
  }
  return best;
}

std::size_t free_parameter_count(std::size_t K) { return (K - 1) + K * (K - 1) + 2 * K; }

double aic(double loglik, std::size_t K) {
  return 2.0 * static_cast<double>(free_parameter_count(K)) - 2.0 * loglik;
}

double bic(double loglik, std::size_t K, std::size_t n_observations) {
  return static_cast<double>(free_parameter_count(K)) *
             std::log(static_cast<double>(n_observations)) -
         2.0 * loglik;
}

// Field order: format_version, n_states, pi, transition_0 .. transition_{K-1},
// lambda_t, lambda_c.
void write_params(const HmmParams& params, std::ostream& out) {
  const std::size_t K = params.n_states();
  auto row = [&out](const std::string& key, auto values) {
    out << key;
    for (double v : values) out << ' ' << format_exact(v);
    out << '\n';
  };
  out << "# tcontrol hmm parameters\n";
  out << "format_version 1\n";
  out << "n_states " << K << '\n';
  row("pi", params.pi);
  for (std::size_t i = 0; i < K; ++i) {
    std::vector<double> r(K);
    for (std::size_t j = 0; j < K; ++j) r[j] = params.transition(i, j);
    row("transition_" + std::to_string(i), r);
  }
  row("lambda_t", params.lambda_t);
  row("lambda_c", params.lambda_c);
}

HmmParams read_params(std::istream& in) {
  std::vector<std::pair<std::string, std::vector<std::string>>> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string key, tok;
    ss >> key;
    std::vector<std::string> values;
    while (ss >> tok) values.push_back(tok);
    lines.emplace_back(key, std::move(values));
  }
  std::size_t pos = 0;
  auto expect = [&](const std::string& key) -> const std::vector<std::string>& {
    if (pos >= lines.size() || lines[pos].first != key) {
      throw DataError("params file: expected key '" + key + "'");
    }
    return lines[pos++].second;
  };
  const auto& version = expect("format_version");
  if (version.size() != 1 || version[0] != "1") throw DataError("params file: unsupported version");
  const auto& ks = expect("n_states");
  if (ks.size() != 1) throw DataError("params file: bad n_states");
  const long long K = parse_integer(ks[0]);
  if (K < 1) throw DataError("params file: n_states must be positive");
  const auto n = static_cast<std::size_t>(K);
  auto doubles = [&](const std::string& key) {
    const auto& v = expect(key);
    if (v.size() != n) throw DataError("params file: '" + key + "' needs " + std::to_string(n) + " values");
    std::vector<double> out;
    for (const auto& s : v) out.push_back(parse_double(s));
    return out;
  };
  HmmParams p;
  p.pi = doubles("pi");
  p.transition = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = doubles("transition_" + std::to_string(i));
    for (std::size_t j = 0; j < n; ++j) p.transition(i, j) = r[j];
  }
  p.lambda_t = doubles("lambda_t");
  p.lambda_c = doubles("lambda_c");
  if (pos != lines.size()) throw DataError("params file: unexpected trailing keys");
  return p;
}

HmmParams read_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open params file: " + path);
  return read_params(in);
}

}  // namespace tcontrol
