#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "casbench/model_client.hpp"

namespace casbench {

// Minimal insert/delete/substitute count between two UTF-8 texts, measured
// over Unicode scalar values.
std::size_t levenshtein(std::string_view a, std::string_view b);
std::size_t levenshtein(std::u32string_view a, std::u32string_view b);

struct ProbeEntry {
  std::string id;
  std::string category;  // factual | math | code | creative | reasoning
  std::string prompt;
};

struct ProbeCorpus {
  std::vector<ProbeEntry> entries;

  // UTF-8, tab-separated, header row "id<TAB>category<TAB>prompt".
  // ConfigError on a bad header, a malformed row, an unknown category or a
  // duplicate id (with the offending line number).
  static ProbeCorpus parse(std::string_view tsv);
  static ProbeCorpus load(const std::filesystem::path& path);
  // The 20-prompt corpus shipped with the library.
  static ProbeCorpus bundled();
};

// Responses collected for one prompt; nullopt marks a failed repetition.
struct ProbeResponses {
  std::string id;
  std::string category;
  std::vector<std::optional<std::string>> responses;
};

struct PromptDeterminism {
  std::string id;
  std::string category;
  std::size_t requested = 0;
  std::size_t completed = 0;
  std::vector<std::string> responses;  // completed ones, in order
  std::vector<std::vector<std::size_t>> distance_matrix;
  // Fraction of unordered pairs of completed responses at distance 0;
  // nullopt with fewer than two completed responses.
  std::optional<double> exact_match_rate;
};

struct DeterminismReport {
  std::vector<PromptDeterminism> prompts;
  // Mean of the per-prompt rates that are defined.
  std::optional<double> aggregate_exact_match_rate;
  static constexpr std::string_view kRateDefinition =
      "exact_match_rate = fraction of unordered response pairs with Levenshtein distance 0";

  nlohmann::json to_json() const;
};

// Exact-match rate over the unordered pairs of a distance matrix.
std::optional<double> exact_match_rate(const std::vector<std::vector<std::size_t>>& matrix);

// Collection: n_repeats sequential temperature-0 queries per prompt, no seed
// sent. A repetition whose call fails is recorded as missing.
std::vector<ProbeResponses> collect_probe_responses(ChatModel& model, const ProbeCorpus& corpus,
                                                    std::size_t n_repeats);

// Analysis: a pure function of the collected responses.
DeterminismReport analyze_probe(const std::vector<ProbeResponses>& collected);

// collect then analyze. DomainError when n_repeats < 2.
DeterminismReport probe(ChatModel& model, const ProbeCorpus& corpus, std::size_t n_repeats);

// JSON-lines persistence of collected responses, one prompt per line.
void save_probe_responses(const std::filesystem::path& path,
                          const std::vector<ProbeResponses>& collected);
std::vector<ProbeResponses> load_probe_responses(const std::filesystem::path& path);

}  // namespace casbench
