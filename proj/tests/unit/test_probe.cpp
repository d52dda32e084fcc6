#include <doctest.h>

#include <random>

#include "casbench/error.hpp"
#include "casbench/probe.hpp"
#include "oracles.hpp"
#include "sweep_fixtures.hpp"

using namespace casbench;

namespace {

// Returns texts from a fixed cycle, one per call.
class CyclingModel final : public ChatModel {
 public:
  explicit CyclingModel(std::vector<std::string> texts) : texts_(std::move(texts)) {}
  std::string chat(const ChatRequest& req, const CallContext&) override {
    seen_temperatures.push_back(req.temperature);
    seen_seeds.push_back(req.seed.has_value());
    const std::size_t i = calls_++;
    if (fail_every && (i + 1) % fail_every == 0) throw TransportError("timeout");
    return texts_[i % texts_.size()];
  }
  std::string identity() const override { return "cycle"; }
  std::size_t fail_every = 0;
  std::vector<double> seen_temperatures;
  std::vector<bool> seen_seeds;

 private:
  std::vector<std::string> texts_;
  std::size_t calls_ = 0;
};

std::u32string random_text(std::mt19937_64& gen, std::size_t max_len) {
  // small alphabet so collisions and near-misses are common; includes non-ASCII
  static const std::u32string alphabet = U"abcé日🙂";
  std::u32string s(gen() % (max_len + 1), U'a');
  for (auto& c : s) c = alphabet[gen() % alphabet.size()];
  return s;
}

ProbeCorpus one_prompt() {
  return ProbeCorpus::parse("id\tcategory\tprompt\nfactual_01\tfactual\tCapital of France?\n");
}

}  // namespace

TEST_SUITE("probe") {

TEST_CASE("levenshtein examples") {
  CHECK(levenshtein("", "abc") == 3);
  CHECK(levenshtein("abc", "") == 3);
  CHECK(levenshtein("kitten", "sitting") == 3);
  CHECK(levenshtein("same", "same") == 0);
  CHECK(levenshtein("é", "e") == 1);
  CHECK(levenshtein("日本", "日本語") == 1);
}

TEST_CASE("levenshtein matches the full DP table and obeys the metric axioms") {
  std::mt19937_64 gen(99);
  for (int i = 0; i < 3000; ++i) {
    const auto a = random_text(gen, 12), b = random_text(gen, 12), c = random_text(gen, 12);
    const auto ea = oracle::encode(a), eb = oracle::encode(b), ec = oracle::encode(c);
    const std::size_t ab = levenshtein(ea, eb);
    CHECK(ab == oracle::levenshtein_table(a, b));
    CHECK(levenshtein(std::u32string_view(a), std::u32string_view(b)) == ab);
    CHECK(levenshtein(eb, ea) == ab);
    CHECK((ab == 0) == (a == b));
    CHECK(levenshtein(ea, ec) <= ab + levenshtein(eb, ec));
  }
}

TEST_CASE("corpus parsing") {
  const auto bundled = ProbeCorpus::bundled();
  CHECK(bundled.entries.size() == 20);
  std::map<std::string, int> per;
  for (const auto& e : bundled.entries) ++per[e.category];
  CHECK(per.size() == 5);

  CHECK_THROWS_AS(ProbeCorpus::parse("id\tprompt\nx\ty\n"), ConfigError);
  CHECK_THROWS_AS(ProbeCorpus::parse("id\tcategory\tprompt\nx_01\tpoetry\ty\n"), ConfigError);
  try {
    ProbeCorpus::load(CASBENCH_FIXTURE_DIR "/corpus_dup.tsv");
    FAIL("expected duplicate id error");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 4);
  }
}

TEST_CASE("constant responses give rate one") {
  CyclingModel m({"Paris."});
  const auto r = probe(m, one_prompt(), 5);
  REQUIRE(r.prompts.size() == 1);
  CHECK(*r.prompts[0].exact_match_rate == 1.0);
  CHECK(*r.aggregate_exact_match_rate == 1.0);
  for (const auto& row : r.prompts[0].distance_matrix)
    for (auto d : row) CHECK(d == 0);
  for (double t : m.seen_temperatures) CHECK(t == 0.0);
  for (bool s : m.seen_seeds) CHECK_FALSE(s);
}

TEST_CASE("alternating responses over four repeats give 2/6") {
  CyclingModel m({"Paris.", "Paris is the capital."});
  const auto r = probe(m, one_prompt(), 4);
  CHECK(*r.prompts[0].exact_match_rate == 2.0 / 6.0);
}

TEST_CASE("distance matrix is symmetric with a zero diagonal") {
  CyclingModel m({"alpha", "alpine", "beta", "alpha"});
  const auto r = probe(m, one_prompt(), 7);
  const auto& d = r.prompts[0].distance_matrix;
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(d[i][i] == 0);
    for (std::size_t j = 0; j < d.size(); ++j) {
      CHECK(d[i][j] == d[j][i]);
      for (std::size_t k = 0; k < d.size(); ++k) CHECK(d[i][k] <= d[i][j] + d[j][k]);
    }
  }
}

TEST_CASE("failed repetitions are disclosed, not fatal") {
  CyclingModel m({"same"});
  m.fail_every = 3;
  const auto r = probe(m, one_prompt(), 6);
  CHECK(r.prompts[0].requested == 6);
  CHECK(r.prompts[0].completed == 4);
  CHECK(*r.prompts[0].exact_match_rate == 1.0);
  CHECK_THROWS_AS(probe(m, one_prompt(), 1), DomainError);
}

TEST_CASE("analysis of stored responses is bit-identical") {
  const auto dir = fixtures::scratch("probe");
  CyclingModel m({"a", "b", "a", "c"});
  m.fail_every = 5;
  const auto collected = collect_probe_responses(m, ProbeCorpus::bundled(), 4);
  save_probe_responses(dir / "r.jsonl", collected);
  const auto again = load_probe_responses(dir / "r.jsonl");
  CHECK(analyze_probe(again).to_json().dump() == analyze_probe(collected).to_json().dump());
  CHECK(analyze_probe(again).to_json().dump().find("unordered response pairs") != std::string::npos);
}

TEST_CASE("exact_match_rate is one iff all distances vanish") {
  CHECK(*exact_match_rate({{0, 0}, {0, 0}}) == 1.0);
  CHECK(*exact_match_rate({{0, 1}, {1, 0}}) == 0.0);
  CHECK_FALSE(exact_match_rate({{0}}).has_value());
}

}  // TEST_SUITE
