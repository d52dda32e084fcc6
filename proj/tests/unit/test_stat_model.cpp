#include <doctest.h>

#include <cmath>
#include <random>

#include "casbench/error.hpp"
#include "casbench/keyed_rng.hpp"
#include "casbench/metrics.hpp"
#include "casbench/stat_model.hpp"
#include "oracles.hpp"

using namespace casbench;

TEST_SUITE("stat_model") {

TEST_CASE("keyed draws are pure functions of key and counters") {
  CHECK(keyed_uniform(5, {1, 2}) == keyed_uniform(5, {1, 2}));
  CHECK(keyed_uniform(5, {1, 2}) != keyed_uniform(5, {2, 1}));
  CHECK(keyed_uniform(5, {1, 2}) != keyed_uniform(6, {1, 2}));
  KeyedStream a(99), b(99);
  for (int i = 0; i < 100; ++i) CHECK(a.beta(2, 5) == b.beta(2, 5));
}

TEST_CASE("keyed stream beta draws have the right mean") {
  KeyedStream s(3);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) sum += s.beta(2.0, 5.0);
  // sd of Beta(2,5) is about 0.16
  CHECK(std::abs(sum / n - 2.0 / 7.0) < 3 * 0.16 / std::sqrt(n));
}

TEST_CASE("population parsing and validation") {
  CHECK(PromptPopulation::parse("beta(2,5)").is_beta());
  CHECK(PromptPopulation::parse("point(0.5)").as_mixture().atoms.size() == 1);
  const auto mix = PromptPopulation::parse("mixture(1:0.7,0.5:0.3)");
  CHECK(mix.as_mixture().atoms.size() == 2);
  CHECK(PromptPopulation::parse(mix.to_string()).to_string() == mix.to_string());
  CHECK_THROWS_AS(PromptPopulation::beta(0.0, 1.0), DomainError);
  CHECK_THROWS_AS(PromptPopulation::point_mass(1.5), DomainError);
  CHECK_THROWS_AS(PromptPopulation::mixture({{0.2, 0.5}, {0.4, 0.4}}), DomainError);
  CHECK_THROWS(PromptPopulation::parse("gauss(0,1)"));
}

TEST_CASE("sample_trials degenerate populations") {
  for (const auto& t : sample_trials(PromptPopulation::point_mass(1.0), 20, 7, 1)) {
    for (Verdict v : t.trials) CHECK(v == Verdict::kHarmful);
  }
  for (const auto& t : sample_trials(PromptPopulation::point_mass(0.0), 20, 7, 1)) {
    for (Verdict v : t.trials) CHECK(v == Verdict::kSafe);
  }
}

TEST_CASE("sample_trials is deterministic in its key") {
  const auto pop = PromptPopulation::beta(2, 2);
  const auto a = sample_trials(pop, 50, 5, 42);
  const auto b = sample_trials(pop, 50, 5, 42);
  const auto c = sample_trials(pop, 50, 5, 43);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].trials == b[i].trials);
    differs = differs || a[i].trials != c[i].trials;
  }
  CHECK(differs);
}

TEST_CASE("sample_trials from Beta(1,1) with m=1 averages one half") {
  const std::size_t n = 10000;
  const auto trials = sample_trials(PromptPopulation::beta(1, 1), n, 1, 2026);
  std::size_t s = 0;
  for (const auto& t : trials) s += t.trials[0] == Verdict::kHarmful ? 1 : 0;
  const double rate = static_cast<double>(s) / n;
  CHECK(std::abs(rate - 0.5) < 3 * std::sqrt(0.25 / n));
}

TEST_CASE("and_success examples and agreement with cas") {
  TrialOutcome t{"p", verdicts_from_string("11")};
  CHECK(and_success(t, 2));
  t.trials = verdicts_from_string("10");
  CHECK_FALSE(and_success(t, 2));
  CHECK(and_success(t, 1));
  CHECK_THROWS_AS(and_success(t, 3), RangeError);
  CHECK_THROWS_AS(and_success(t, 0), RangeError);
  for (const auto& o : sample_trials(PromptPopulation::beta(1, 1), 300, 8, 9)) {
    for (std::size_t k = 1; k <= 8; ++k) CHECK(and_success(o, k) == cas(o.trials, k));
  }
}

TEST_CASE("Beta(1,1) moments are exactly 1/(k+1)") {
  const auto pop = PromptPopulation::beta(1, 1);
  for (std::size_t k = 1; k <= 20; ++k) {
    CHECK(expected_asr_exact(pop, k) == 1.0 / static_cast<double>(k + 1));
  }
  CHECK(expected_asr_exact(pop, 9) == 0.1);
}

TEST_CASE("Beta moments agree with numerical integration") {
  for (auto [a, b] : {std::pair{1.0, 1.0}, {2.0, 2.0}, {2.0, 5.0}, {0.5, 0.7}, {3.3, 1.2}}) {
    const auto pop = PromptPopulation::beta(a, b);
    for (unsigned k = 1; k <= 12; ++k) {
      CHECK(expected_asr_exact(pop, k) ==
            doctest::Approx(oracle::beta_moment_quadrature(a, b, k)).epsilon(1e-9));
    }
  }
}

TEST_CASE("mixture moments") {
  const auto mix = PromptPopulation::mixture({{1.0, 0.7}, {0.5, 0.3}});
  CHECK(expected_asr_exact(mix, 1) == doctest::Approx(0.85).epsilon(1e-15));
  CHECK(expected_asr_exact(mix, 10) == doctest::Approx(0.7 + 0.3 * std::pow(0.5, 10)));
  const auto q = PromptPopulation::mixture({{1.0, 0.25}, {0.9, 0.5}, {0.3, 0.25}});
  CHECK(std::abs(expected_asr_exact(q, 1000) - 0.25) <= 1e-12);
}

TEST_CASE("decay curve examples") {
  const auto d = decay_curve(PromptPopulation::beta(1, 1), 4);
  REQUIRE(d.size() == 4);
  CHECK(d[0].second == 0.5);
  CHECK(d[1].second == doctest::Approx(1.0 / 3));
  CHECK(d[2].second == 0.25);
  CHECK(d[3].second == 0.2);
  for (const auto& [k, r] : decay_curve(PromptPopulation::point_mass(1.0), 6)) CHECK(r == 1.0);
  const auto g = decay_curve(PromptPopulation::point_mass(0.5), 3);
  CHECK(g[0].second == 0.5);
  CHECK(g[1].second == 0.25);
  CHECK(g[2].second == 0.125);
}

TEST_CASE("decay curves never increase") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.05, 8.0);
  for (int i = 0; i < 30; ++i) {
    const auto d = decay_curve(PromptPopulation::beta(u(gen), u(gen)), 40);
    for (std::size_t j = 1; j < d.size(); ++j) CHECK(d[j].second <= d[j - 1].second);
  }
}

TEST_CASE("estimators on all-success and all-failure sets") {
  for (Estimator m : {Estimator::kBetaFit, Estimator::kUnbiasedCombinatorial, Estimator::kPlugIn}) {
    const auto ones = sample_trials(PromptPopulation::point_mass(1.0), 30, 6, 1);
    const auto zeros = sample_trials(PromptPopulation::point_mass(0.0), 30, 6, 1);
    for (std::size_t k = 1; k <= 6; ++k) {
      CHECK(estimate_asr_at_k(ones, k, m).rate == 1.0);
      CHECK(estimate_asr_at_k(zeros, k, m).rate == 0.0);
    }
  }
  const auto ones = sample_trials(PromptPopulation::point_mass(1.0), 30, 6, 1);
  CHECK(estimate_asr_at_k(ones, 3, Estimator::kBetaFit).degenerate_fallback);
}

TEST_CASE("unbiased estimator needs m >= k") {
  const auto t = sample_trials(PromptPopulation::beta(2, 2), 10, 3, 1);
  CHECK_THROWS_AS(estimate_asr_at_k(t, 4, Estimator::kUnbiasedCombinatorial), DomainError);
  CHECK_NOTHROW(estimate_asr_at_k(t, 4, Estimator::kPlugIn));
  CHECK_NOTHROW(estimate_asr_at_k(t, 4, Estimator::kBetaFit));
}

TEST_CASE("unbiased estimator equals the binomial-coefficient ratio") {
  const auto t = sample_trials(PromptPopulation::beta(2, 2), 200, 12, 5);
  for (unsigned k : {1u, 3u, 7u, 12u}) {
    double expected = 0.0;
    for (const auto& o : t) {
      unsigned s = 0;
      for (Verdict v : o.trials) s += is_harmful(v) ? 1 : 0;
      expected += oracle::comb_ratio(s, 12, k);
    }
    expected /= static_cast<double>(t.size());
    CHECK(estimate_asr_at_k(t, k, Estimator::kUnbiasedCombinatorial).rate ==
          doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("unbiased estimator on Beta(2,2), m=20, k=10 is within 3 standard errors") {
  const auto pop = PromptPopulation::beta(2, 2);
  const auto t = sample_trials(pop, 5000, 20, 77);
  // per-prompt standard error from the sample of C(s,k)/C(m,k) terms
  std::vector<double> terms;
  for (const auto& o : t) {
    unsigned s = 0;
    for (Verdict v : o.trials) s += is_harmful(v) ? 1 : 0;
    terms.push_back(oracle::comb_ratio(s, 20, 10));
  }
  double mean = 0.0;
  for (double x : terms) mean += x;
  mean /= terms.size();
  double var = 0.0;
  for (double x : terms) var += (x - mean) * (x - mean);
  var /= terms.size() - 1;
  const double se = std::sqrt(var / terms.size());
  const double est = estimate_asr_at_k(t, 10, Estimator::kUnbiasedCombinatorial).rate;
  CHECK(std::abs(est - oracle::beta_moment_quadrature(2, 2, 10)) < 3 * se);
}

TEST_CASE("beta fit recovers parameters from many trials per prompt") {
  const auto t = sample_trials(PromptPopulation::beta(2, 5), 4000, 400, 3);
  const auto e = estimate_asr_at_k(t, 3, Estimator::kBetaFit);
  CHECK_FALSE(e.degenerate_fallback);
  // binomial noise inflates the variance by E[p(1-p)]/m, small at m=400
  CHECK(e.alpha == doctest::Approx(2.0).epsilon(0.15));
  CHECK(e.beta == doctest::Approx(5.0).epsilon(0.15));
}

TEST_CASE("estimator names round-trip") {
  for (Estimator m : {Estimator::kBetaFit, Estimator::kUnbiasedCombinatorial, Estimator::kPlugIn}) {
    CHECK(parse_estimator(to_string(m)) == m);
  }
  CHECK_THROWS_AS(parse_estimator("mle"), DomainError);
}

}  // TEST_SUITE
