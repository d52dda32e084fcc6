#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "casbench/metrics.hpp"

namespace casbench {

// Latent per-prompt success probabilities: either a finite mixture of point
// masses or a Beta distribution.
class PromptPopulation {
 public:
  struct Atom {
    double p = 0.0;
    double weight = 0.0;
  };
  struct Mixture {
    std::vector<Atom> atoms;
  };
  struct Beta {
    double alpha = 1.0;
    double beta = 1.0;
  };

  // DomainError if a probability lies outside [0,1] or weights do not sum to 1
  // within 1e-12.
  static PromptPopulation mixture(std::vector<Atom> atoms);
  static PromptPopulation point_mass(double p) { return mixture({{p, 1.0}}); }
  // DomainError unless alpha > 0 and beta > 0.
  static PromptPopulation beta(double alpha, double beta);

  // Textual form used by configs and the CLI:
  //   "point(0.5)", "beta(2,5)", "mixture(1:0.7,0.5:0.3)"  (p:weight pairs)
  static PromptPopulation parse(std::string_view text);
  std::string to_string() const;

  bool is_beta() const noexcept { return std::holds_alternative<Beta>(dist_); }
  const Beta& as_beta() const { return std::get<Beta>(dist_); }
  const Mixture& as_mixture() const { return std::get<Mixture>(dist_); }

  // One draw of p given a stream key.
  double draw(std::uint64_t key) const;

 private:
  explicit PromptPopulation(std::variant<Mixture, Beta> d) : dist_(std::move(d)) {}
  std::variant<Mixture, Beta> dist_;
};

struct TrialOutcome {
  std::string prompt_id;
  std::vector<Verdict> trials;
};

// For prompt i: p_i ~ pop, then m Bernoulli(p_i) trials. Every draw is keyed by
// (rng_key, i, trial index), so the result does not depend on evaluation order.
std::vector<TrialOutcome> sample_trials(const PromptPopulation& pop, std::size_t n_prompts,
                                        std::size_t m, std::uint64_t rng_key);

// AND of the first k trials. RangeError unless 1 <= k <= m.
bool and_success(const TrialOutcome& t, std::size_t k);

// E_{p~P}[p^k].
double expected_asr_exact(const PromptPopulation& pop, std::size_t k);

// expected_asr_exact at k = 1..k_max.
std::vector<std::pair<std::size_t, double>> decay_curve(const PromptPopulation& pop,
                                                         std::size_t k_max);

enum class Estimator { kBetaFit, kUnbiasedCombinatorial, kPlugIn };

std::string_view to_string(Estimator e) noexcept;
Estimator parse_estimator(std::string_view name);

struct AsrEstimate {
  double rate = 0.0;
  Estimator method = Estimator::kUnbiasedCombinatorial;
  // Beta fit only: the moment equations had no valid solution and the
  // estimate fell back to mean(p_hat)^k.
  bool degenerate_fallback = false;
  double alpha = 0.0;
  double beta = 0.0;
};

// Predicts the AND-aggregated ASR at k_target from m trials per prompt.
// DomainError for an empty or ragged set, or when the unbiased estimator is
// asked for k_target > m.
AsrEstimate estimate_asr_at_k(std::span<const TrialOutcome> trials, std::size_t k_target,
                              Estimator method);

}  // namespace casbench
