#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "tcontrol/hmm.hpp"
#include "tcontrol/sim.hpp"

using namespace tcontrol;

namespace {

ObservationSequence random_obs(std::size_t T, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::uint32_t> u(0, 7);
  ObservationSequence o;
  for (std::size_t i = 0; i < T; ++i) {
    o.t.push_back(u(rng));
    o.c.push_back(u(rng));
  }
  return o;
}

}  // namespace

TEST_SUITE("hmm") {

TEST_CASE("emission log-likelihood") {
  HmmParams p = make_params({0.0, 1.0}, {0.0, 1.0}, 0.9);
  CHECK(emission_loglik(p, 0, 0, 0) == 0.0);
  CHECK(emission_loglik(p, 2, 0, 1) == doctest::Approx(-2.0 - std::log(2.0)).epsilon(1e-14));
  CHECK(emission_loglik(p, 1, 3, 0) == -std::numeric_limits<double>::infinity());
  for (std::uint32_t n : {0u, 1u, 5u, 40u}) {
    CHECK(std::exp(poisson_logpmf(n, 3.7)) == doctest::Approx(oracle::poisson_pmf(n, 3.7)).epsilon(1e-12));
  }
}

TEST_CASE("parameter validation") {
  HmmParams p = make_params({1, 2}, {2, 1}, 0.8);
  CHECK_NOTHROW(p.validate());
  p.transition(0, 0) = 0.5;
  CHECK_THROWS(p.validate());
  p = make_params({1, 2}, {2, 1}, 0.8);
  p.pi = {0.7, 0.4};
  CHECK_THROWS(p.validate());
  p = make_params({1, -2}, {2, 1}, 0.8);
  CHECK_THROWS(p.validate());
}

TEST_CASE("single state: gamma is one and loglik is the emission sum") {
  const HmmParams p = make_params({2.5}, {0.7}, 1.0);
  ObservationSequence o{{1, 4, 0, 2}, {0, 1, 3, 0}};
  const auto fb = forward_backward(p, o);
  double sum = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(fb.gamma_at(i, 0) == doctest::Approx(1.0).epsilon(1e-14));
    sum += emission_loglik(p, o.t[i], o.c[i], 0);
  }
  CHECK(fb.loglik == doctest::Approx(sum).epsilon(1e-13));
}

TEST_CASE("two states, three steps: loglik equals the sum over eight paths") {
  HmmParams p = make_params({3.0, 0.5}, {0.4, 2.0}, 0.7);
  p.pi = {0.6, 0.4};
  p.transition(0, 1) = 0.2;
  p.transition(0, 0) = 0.8;
  ObservationSequence o{{2, 0, 4}, {1, 3, 0}};
  const auto fb = forward_backward(p, o);
  const auto ex = oracle::enumerate_chain(p, o.t, o.c);
  CHECK(oracle::rel_diff(fb.loglik, std::log(ex.likelihood)) < 1e-10);
  for (std::size_t i = 0; i < ex.gamma.size(); ++i) CHECK(std::fabs(fb.gamma[i] - ex.gamma[i]) < 1e-10);
  for (std::size_t i = 0; i < ex.xi.size(); ++i) CHECK(std::fabs(fb.xi[i] - ex.xi[i]) < 1e-10);
}

TEST_CASE("symmetric model with t = c everywhere gives one half") {
  HmmParams p = make_params({1.0, 3.0}, {3.0, 1.0}, 0.75);
  ObservationSequence o{{2, 1, 5, 0}, {2, 1, 5, 0}};
  const auto fb = forward_backward(p, o);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(fb.gamma_at(i, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(fb.gamma_at(i, 1) == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("forward-backward and viterbi against enumeration on random models") {
  std::mt19937_64 rng(2024);
  for (int rep = 0; rep < 40; ++rep) {
    const std::size_t K = 1 + rng() % 3;
    const std::size_t T = 1 + rng() % 6;
    const HmmParams p = oracle::random_params(K, rng);
    const auto o = random_obs(T, rng);
    const auto fb = forward_backward(p, o);
    const auto ex = oracle::enumerate_chain(p, o.t, o.c);
    CHECK(oracle::rel_diff(fb.loglik, std::log(ex.likelihood)) < 1e-10);
    for (std::size_t i = 0; i < ex.gamma.size(); ++i) CHECK(std::fabs(fb.gamma[i] - ex.gamma[i]) < 1e-10);
    const auto v = viterbi(p, o);
    CHECK(v.states == ex.best_path);
    CHECK(oracle::rel_diff(v.log_prob, std::log(ex.best_prob)) < 1e-10);
  }
}

TEST_CASE("long sequences stay finite") {
  std::mt19937_64 rng(5);
  const HmmParams p = make_params({40.0, 0.1}, {0.1, 40.0}, 0.95);
  ObservationSequence o;
  for (int i = 0; i < 5000; ++i) {
    o.t.push_back(i % 50 < 25 ? 40 : 0);
    o.c.push_back(i % 50 < 25 ? 0 : 40);
  }
  const auto fb = forward_backward(p, o);
  CHECK(std::isfinite(fb.loglik));
  for (double g : fb.gamma) CHECK(std::isfinite(g));
}

TEST_CASE("viterbi reads off states from disjoint zero patterns") {
  const HmmParams p = make_params({3.0, 0.0, 0.0}, {0.0, 3.0, 0.0}, 0.5);
  ObservationSequence o{{2, 0, 0, 1}, {0, 4, 0, 0}};
  CHECK(viterbi(p, o).states == std::vector<int>{0, 1, 2, 0});
}

TEST_CASE("a fully symmetric tie decodes to the lowest state") {
  const HmmParams p = make_params({2.0, 2.0}, {1.0, 1.0}, 0.5);
  ObservationSequence o{{1, 3, 0}, {2, 0, 1}};
  CHECK(viterbi(p, o).states == std::vector<int>{0, 0, 0});
}

TEST_CASE("impossible observations raise") {
  const HmmParams p = make_params({0.0}, {1.0}, 1.0);
  ObservationSequence o{{0, 2}, {1, 1}};
  try {
    forward_backward(p, o);
    FAIL("expected ImpossibleObservation");
  } catch (const ImpossibleObservation& e) {
    CHECK(e.step() == 1);
  }
}

TEST_CASE("canonical order sorts by terror share") {
  const HmmParams p = make_params({0.3, 6.0, 2.0}, {6.0, 0.3, 3.0}, 0.8);
  CHECK(canonical_order(p) == std::vector<std::size_t>{1, 2, 0});
  const HmmParams c = canonicalize(p);
  CHECK(c.lambda_t == std::vector<double>{6.0, 2.0, 0.3});
  CHECK(canonicalize(c) == c);
}

TEST_CASE("single-state fit recovers sample means") {
  ObservationSequence a{{1, 2, 3}, {0, 0, 9}};
  ObservationSequence b{{4, 0}, {1, 2}};
  std::vector<ObservationView> set = {a, b};
  BaumWelchSettings s;
  s.n_states = 1;
  const FitResult f = baum_welch_fit(set, s);
  CHECK(f.params.lambda_t[0] == doctest::Approx(10.0 / 5.0).epsilon(1e-12));
  CHECK(f.params.lambda_c[0] == doctest::Approx(12.0 / 5.0).epsilon(1e-12));
  CHECK(f.converged);
}

TEST_CASE("EM log-likelihood trace never decreases") {
  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 6; ++rep) {
    SimConfig sc = default_sim_config();
    sc.seed = rng();
    sc.n_years = 12;
    sc.beta = 0.0;
    const GroundTruth gt = simulate(sc, false);
    const auto obs = panel_observations(gt.panel);
    BaumWelchSettings s;
    s.n_states = 2 + static_cast<std::size_t>(rep % 3);
    s.restarts = 3;
    s.seed = rng();
    const FitResult f = baum_welch_fit(obs, s);
    for (std::size_t i = 1; i < f.trace.size(); ++i) CHECK(f.trace[i] >= f.trace[i - 1] - 1e-8);
  }
}

TEST_CASE("fits are reproducible and thread-count independent") {
  SimConfig sc = default_sim_config();
  sc.n_years = 10;
  const GroundTruth gt = simulate(sc, false);
  const auto obs = panel_observations(gt.panel);
  BaumWelchSettings s;
  s.restarts = 4;
  s.seed = 3;
  s.threads = 1;
  const FitResult one = baum_welch_fit(obs, s);
  s.threads = 4;
  const FitResult four = baum_welch_fit(obs, s);
  CHECK(one.params == four.params);
  CHECK(one.trace == four.trace);
}

TEST_CASE("parameter file round-trips bit-exactly") {
  std::mt19937_64 rng(11);
  const HmmParams p = oracle::random_params(3, rng);
  std::stringstream ss;
  write_params(p, ss);
  CHECK(read_params(ss) == p);
  std::istringstream bad("# tcontrol hmm parameters\nformat_version 9\n");
  CHECK_THROWS_AS(read_params(bad), DataError);
}

TEST_CASE("information criteria") {
  CHECK(free_parameter_count(3) == 2 + 6 + 6);
  CHECK(aic(-100.0, 2) == doctest::Approx(200.0 + 2.0 * 7));
  CHECK(bic(-100.0, 2, 50) == doctest::Approx(200.0 + 7 * std::log(50.0)));
}

}
