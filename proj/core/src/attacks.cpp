#include "casbench/attacks.hpp"

#include "casbench/error.hpp"
#include "casbench/keyed_rng.hpp"
#include "casbench/utf8.hpp"

namespace casbench {

namespace {

enum OpTag : std::uint64_t { kScrambleTag = 1, kCapsTag = 2, kNoiseTag = 3, kNoisePickTag = 4 };

bool is_space(char32_t c) { return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r'; }

char32_t flip_case(char32_t c) {
  if (c >= U'a' && c <= U'z') return c - U'a' + U'A';
  if (c >= U'A' && c <= U'Z') return c - U'A' + U'a';
  return c;
}

bool has_case(char32_t c) { return flip_case(c) != c; }

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw DomainError(std::string(name) + " must lie in [0,1]");
  }
}

void apply(std::u32string& text, const AugmentationStep& step) {
  if (step.op == "scramble") {
    for (std::size_t pos : step.positions) std::swap(text.at(pos), text.at(pos + 1));
  } else if (step.op == "caps") {
    for (std::size_t pos : step.positions) text.at(pos) = flip_case(text.at(pos));
  } else if (step.op == "noise") {
    for (std::size_t i = 0; i < step.positions.size(); ++i) {
      text.at(step.positions[i]) = step.replacements.at(i);
    }
  } else {
    throw DomainError("unknown augmentation operator '" + step.op + "'");
  }
}

class BestOfNState final : public AttackState {
 public:
  BestOfNState(const AugmentationSpec& spec, std::string base, std::size_t budget,
               std::uint64_t key)
      : spec_(spec), base_(std::move(base)), budget_(budget), key_(key) {}

  std::optional<AttackCandidate> next(const Transcript&) override {
    if (produced_ >= budget_) return std::nullopt;
    ++produced_;
    return augment(base_, spec_, key_, produced_);
  }
  std::size_t produced() const noexcept override { return produced_; }

 private:
  const AugmentationSpec& spec_;
  std::string base_;
  std::size_t budget_;
  std::uint64_t key_;
  std::size_t produced_ = 0;
};

class DirectState final : public AttackState {
 public:
  DirectState(std::string base, std::size_t budget) : base_(std::move(base)), budget_(budget) {}

  std::optional<AttackCandidate> next(const Transcript&) override {
    if (produced_ >= budget_) return std::nullopt;
    ++produced_;
    return AttackCandidate{base_, {}, produced_};
  }
  std::size_t produced() const noexcept override { return produced_; }

 private:
  std::string base_;
  std::size_t budget_;
  std::size_t produced_ = 0;
};

}  // namespace

std::string AugmentationSpec::default_noise_alphabet() {
  std::string out;
  for (char c = '!'; c <= '~'; ++c) out.push_back(c);
  return out;
}

void AugmentationSpec::validate() const {
  check_probability(scramble_prob, "scramble_prob");
  check_probability(caps_prob, "caps_prob");
  check_probability(noise_prob, "noise_prob");
  if (noise_prob > 0.0 && utf8_decode(noise_alphabet).empty()) {
    throw DomainError("noise_alphabet must be non-empty when noise_prob > 0");
  }
}

AttackCandidate augment(const std::string& base_prompt, const AugmentationSpec& spec,
                        std::uint64_t rng_key, std::size_t index) {
  if (base_prompt.empty()) throw DomainError("cannot augment an empty prompt");
  spec.validate();

  std::u32string text = utf8_decode(base_prompt);
  AttackCandidate cand;
  cand.index = index;

  // Swap adjacent interior characters of each word; the first and last
  // character of a word stay in place.
  AugmentationStep scramble{"scramble", {}, {}};
  if (spec.scramble_prob > 0.0) {
    std::size_t i = 0;
    while (i < text.size()) {
      if (is_space(text[i])) {
        ++i;
        continue;
      }
      std::size_t end = i;
      while (end < text.size() && !is_space(text[end])) ++end;
      // interior is [i + 1, end - 1)
      for (std::size_t pos = i + 1; pos + 2 < end; ++pos) {
        if (keyed_uniform(rng_key, {index, kScrambleTag, pos}) < spec.scramble_prob) {
          std::swap(text[pos], text[pos + 1]);
          scramble.positions.push_back(pos);
          ++pos;
        }
      }
      i = end;
    }
  }
  cand.augmentation_trace.push_back(std::move(scramble));

  AugmentationStep caps{"caps", {}, {}};
  if (spec.caps_prob > 0.0) {
    for (std::size_t pos = 0; pos < text.size(); ++pos) {
      if (has_case(text[pos]) &&
          keyed_uniform(rng_key, {index, kCapsTag, pos}) < spec.caps_prob) {
        text[pos] = flip_case(text[pos]);
        caps.positions.push_back(pos);
      }
    }
  }
  cand.augmentation_trace.push_back(std::move(caps));

  AugmentationStep noise{"noise", {}, {}};
  if (spec.noise_prob > 0.0) {
    const std::u32string alphabet = utf8_decode(spec.noise_alphabet);
    for (std::size_t pos = 0; pos < text.size(); ++pos) {
      if (keyed_uniform(rng_key, {index, kNoiseTag, pos}) < spec.noise_prob) {
        const auto pick = static_cast<std::size_t>(
            keyed_uniform(rng_key, {index, kNoisePickTag, pos}) *
            static_cast<double>(alphabet.size()));
        text[pos] = alphabet[pick];
        noise.positions.push_back(pos);
        noise.replacements.push_back(alphabet[pick]);
      }
    }
  }
  cand.augmentation_trace.push_back(std::move(noise));

  cand.prompt_text = utf8_encode(text);
  return cand;
}

std::string replay_trace(const std::string& base_prompt,
                         const std::vector<AugmentationStep>& trace) {
  std::u32string text = utf8_decode(base_prompt);
  for (const AugmentationStep& step : trace) apply(text, step);
  return utf8_encode(text);
}

BestOfNAttack::BestOfNAttack(AugmentationSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

std::uint64_t BestOfNAttack::stream_key(const std::string& base_prompt,
                                        std::int64_t seed) noexcept {
  return derive_key(static_cast<std::uint64_t>(seed),
                    {hash_text("best-of-n"), hash_text(base_prompt)});
}

std::unique_ptr<AttackState> BestOfNAttack::start(const std::string& base_prompt,
                                                  std::size_t budget, std::int64_t seed) const {
  if (base_prompt.empty()) throw DomainError("cannot attack an empty prompt");
  return std::make_unique<BestOfNState>(spec_, base_prompt, budget,
                                        stream_key(base_prompt, seed));
}

std::unique_ptr<AttackState> DirectAttack::start(const std::string& base_prompt,
                                                 std::size_t budget, std::int64_t) const {
  if (base_prompt.empty()) throw DomainError("cannot attack an empty prompt");
  return std::make_unique<DirectState>(base_prompt, budget);
}

}  // namespace casbench
