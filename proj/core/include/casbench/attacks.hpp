#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace casbench {

struct Transcript;

// Probabilities of the three Best-of-N text operators. Defaults are
// configuration, not calibrated values.
struct AugmentationSpec {
  double scramble_prob = 0.6;  // per interior character pair of a word
  double caps_prob = 0.6;      // per character
  double noise_prob = 0.06;    // per character
  std::string noise_alphabet = default_noise_alphabet();

  static std::string default_noise_alphabet();
  // DomainError on a probability outside [0,1] or an empty alphabet while
  // noise_prob > 0.
  void validate() const;
  bool is_identity() const noexcept {
    return scramble_prob == 0.0 && caps_prob == 0.0 && noise_prob == 0.0;
  }
};

// One operator application. Positions index Unicode scalar values of the text
// as it was when the operator ran.
struct AugmentationStep {
  std::string op;  // "scramble" | "caps" | "noise"
  std::vector<std::size_t> positions;
  std::u32string replacements;  // noise only, parallel to positions
};

struct AttackCandidate {
  std::string prompt_text;
  std::vector<AugmentationStep> augmentation_trace;
  std::size_t index = 0;  // 1-based position in the candidate stream
};

// Applies scramble, then caps, then noise, each driven by (rng_key, index).
// DomainError on an empty prompt.
AttackCandidate augment(const std::string& base_prompt, const AugmentationSpec& spec,
                        std::uint64_t rng_key, std::size_t index);

// Re-applies a recorded trace to the base prompt.
std::string replay_trace(const std::string& base_prompt,
                         const std::vector<AugmentationStep>& trace);

// Candidate stream for one generation run. Implementations may condition on
// the transcript so far (attacker-LLM attacks do); Best-of-N ignores it.
class AttackState {
 public:
  virtual ~AttackState() = default;
  // nullopt once the budget is exhausted.
  virtual std::optional<AttackCandidate> next(const Transcript& history) = 0;
  virtual std::size_t produced() const noexcept = 0;
};

class Attack {
 public:
  virtual ~Attack() = default;
  virtual std::string kind() const = 0;
  // Whether the reporting checklist requires the search-time judge temperature.
  virtual bool uses_judge_search() const noexcept = 0;
  virtual std::unique_ptr<AttackState> start(const std::string& base_prompt, std::size_t budget,
                                             std::int64_t seed) const = 0;
};

// Independently augmented versions of the base prompt.
class BestOfNAttack final : public Attack {
 public:
  explicit BestOfNAttack(AugmentationSpec spec);

  std::string kind() const override { return "best-of-n"; }
  bool uses_judge_search() const noexcept override { return true; }
  std::unique_ptr<AttackState> start(const std::string& base_prompt, std::size_t budget,
                                     std::int64_t seed) const override;

  const AugmentationSpec& spec() const noexcept { return spec_; }
  // Key of the candidate stream for (base_prompt, seed).
  static std::uint64_t stream_key(const std::string& base_prompt, std::int64_t seed) noexcept;

 private:
  AugmentationSpec spec_;
};

// Control condition: the unmodified prompt, repeated up to the budget.
class DirectAttack final : public Attack {
 public:
  std::string kind() const override { return "direct"; }
  bool uses_judge_search() const noexcept override { return false; }
  std::unique_ptr<AttackState> start(const std::string& base_prompt, std::size_t budget,
                                     std::int64_t seed) const override;
};

}  // namespace casbench
