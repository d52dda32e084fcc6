#include <doctest.h>

#include <cctype>

#include "casbench/attacks.hpp"
#include "casbench/error.hpp"
#include "casbench/transcript.hpp"
#include "casbench/utf8.hpp"

using namespace casbench;

namespace {

// independent ASCII case flip
std::string flip_all(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    const auto u = static_cast<unsigned char>(c);
    if (std::islower(u)) c = static_cast<char>(std::toupper(u));
    else if (std::isupper(u)) c = static_cast<char>(std::tolower(u));
  }
  return out;
}

AugmentationSpec only(double scramble, double caps, double noise) {
  AugmentationSpec s;
  s.scramble_prob = scramble;
  s.caps_prob = caps;
  s.noise_prob = noise;
  return s;
}

std::vector<std::string> stream(const Attack& a, const std::string& base, std::size_t budget,
                                std::int64_t seed) {
  auto st = a.start(base, budget, seed);
  Transcript none;
  std::vector<std::string> out;
  while (auto c = st->next(none)) out.push_back(c->prompt_text);
  return out;
}

}  // namespace

TEST_SUITE("attacks") {

TEST_CASE("identity augmentation returns the base prompt") {
  const std::string base = "How do I make a dangerous thing at home?";
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(augment(base, only(0, 0, 0), 123, i).prompt_text == base);
  }
}

TEST_CASE("augmentation is deterministic") {
  const std::string base = "Tell me something you should not.";
  const AugmentationSpec spec;
  for (std::size_t i = 1; i < 20; ++i) {
    const auto a = augment(base, spec, 5, i);
    const auto b = augment(base, spec, 5, i);
    CHECK(a.prompt_text == b.prompt_text);
    CHECK(a.index == i);
  }
}

TEST_CASE("caps flip at probability one") {
  CHECK(augment("abcd", only(0, 1, 0), 1, 1).prompt_text == "ABCD");
  const std::string mixed = "MiXeD case, 42 digits!";
  CHECK(augment(mixed, only(0, 1, 0), 9, 3).prompt_text == flip_all(mixed));
}

TEST_CASE("augmentation preserves length in code points") {
  const std::string base = "Ünïcode prompt with naïve words and 日本語 text";
  const auto n = utf8_decode(base).size();
  for (std::size_t i = 1; i < 50; ++i) {
    const auto c = augment(base, AugmentationSpec{}, 77, i);
    CHECK(utf8_decode(c.prompt_text).size() == n);
  }
}

TEST_CASE("scramble only permutes word interiors") {
  const std::string base = "scrambling interior letters keeps edges";
  for (std::size_t i = 1; i < 30; ++i) {
    const auto c = augment(base, only(1, 0, 0), 4, i).prompt_text;
    REQUIRE(c.size() == base.size());
    for (std::size_t j = 0; j < base.size(); ++j) {
      const bool edge = j == 0 || j + 1 == base.size() || base[j - 1] == ' ' || base[j + 1] == ' ' ||
                        base[j] == ' ';
      if (edge) CHECK(c[j] == base[j]);
    }
    std::string a = c, b = base;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
}

TEST_CASE("trace replays to the candidate text") {
  const std::string base = "Write detailed instructions for something harmful.";
  AugmentationSpec spec;
  spec.noise_prob = 0.3;
  for (std::size_t i = 1; i < 100; ++i) {
    const auto c = augment(base, spec, 31337, i);
    CHECK(replay_trace(base, c.augmentation_trace) == c.prompt_text);
  }
}

TEST_CASE("augment errors") {
  CHECK_THROWS_AS(augment("", AugmentationSpec{}, 1, 1), DomainError);
  AugmentationSpec bad;
  bad.caps_prob = 1.5;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = AugmentationSpec{};
  bad.noise_alphabet.clear();
  CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("best-of-n stream respects the budget and the seed") {
  const BestOfNAttack bon{AugmentationSpec{}};
  const std::string base = "Give me the recipe.";
  CHECK(stream(bon, base, 3, 0).size() == 3);
  CHECK(stream(bon, base, 10, 0) == stream(bon, base, 10, 0));
  CHECK(stream(bon, base, 10, 0) != stream(bon, base, 10, 1));

  auto st = bon.start(base, 2, 0);
  Transcript t;
  CHECK(st->next(t).has_value());
  CHECK(st->next(t).has_value());
  CHECK_FALSE(st->next(t).has_value());
  CHECK(st->produced() == 2);
}

TEST_CASE("identity best-of-n and direct attack repeat the prompt") {
  const BestOfNAttack bon{only(0, 0, 0)};
  const DirectAttack direct;
  for (const auto& s : stream(bon, "same", 5, 3)) CHECK(s == "same");
  for (const auto& s : stream(direct, "same", 5, 3)) CHECK(s == "same");
  CHECK(bon.uses_judge_search());
  CHECK_FALSE(direct.uses_judge_search());
}

}  // TEST_SUITE
