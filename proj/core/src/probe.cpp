#include "casbench/probe.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "casbench/error.hpp"
#include "casbench/utf8.hpp"
#include "embedded_assets.hpp"

namespace casbench {

namespace {

using nlohmann::json;

const std::set<std::string> kCategories = {"factual", "math", "code", "creative", "reasoning"};

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == '\t') {
      out.emplace_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

}  // namespace

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> prev(b.size() + 1);
  std::vector<std::size_t> cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  return levenshtein(std::u32string_view(utf8_decode(a)), std::u32string_view(utf8_decode(b)));
}

ProbeCorpus ProbeCorpus::parse(std::string_view tsv) {
  ProbeCorpus corpus;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < tsv.size()) {
    auto nl = tsv.find('\n', start);
    if (nl == std::string_view::npos) nl = tsv.size();
    std::string_view line = tsv.substr(start, nl - start);
    start = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1) {
      if (line.size() >= 3 && line.substr(0, 3) == "\xEF\xBB\xBF") line.remove_prefix(3);
      if (line != "id\tcategory\tprompt") {
        throw ConfigError("corpus", 1, "header must be id<TAB>category<TAB>prompt");
      }
      continue;
    }
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() != 3 || cols[0].empty() || cols[2].empty()) {
      throw ConfigError("corpus", static_cast<int>(line_no), "expected three non-empty columns");
    }
    if (!kCategories.contains(cols[1])) {
      throw ConfigError("corpus", static_cast<int>(line_no), "unknown category '" + cols[1] + "'");
    }
    if (!ids.insert(cols[0]).second) {
      throw ConfigError("corpus", static_cast<int>(line_no), "duplicate id '" + cols[0] + "'");
    }
    corpus.entries.push_back({cols[0], cols[1], cols[2]});
  }
  if (line_no == 0) throw ConfigError("corpus", 1, "corpus is empty");
  return corpus;
}

ProbeCorpus ProbeCorpus::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("corpus", 0, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

ProbeCorpus ProbeCorpus::bundled() { return parse(assets::kDeterminismCorpus); }

std::optional<double> exact_match_rate(const std::vector<std::vector<std::size_t>>& matrix) {
  const std::size_t n = matrix.size();
  if (n < 2) return std::nullopt;
  std::size_t zero = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) zero += matrix[i][j] == 0 ? 1 : 0;
  }
  return static_cast<double>(zero) / static_cast<double>(n * (n - 1) / 2);
}

std::vector<ProbeResponses> collect_probe_responses(ChatModel& model, const ProbeCorpus& corpus,
                                                    std::size_t n_repeats) {
  if (n_repeats < 2) throw DomainError("determinism probe needs at least 2 repeats");
  std::vector<ProbeResponses> out;
  out.reserve(corpus.entries.size());
  for (const ProbeEntry& e : corpus.entries) {
    ProbeResponses pr{e.id, e.category, {}};
    for (std::size_t r = 0; r < n_repeats; ++r) {
      ChatRequest req;
      req.messages.push_back({Role::kUser, e.prompt});
      req.temperature = 0.0;
      try {
        pr.responses.emplace_back(model.chat(req, CallContext{e.id}));
      } catch (const TransportError&) {
        pr.responses.emplace_back(std::nullopt);
      } catch (const RequestError&) {
        pr.responses.emplace_back(std::nullopt);
      }
    }
    out.push_back(std::move(pr));
  }
  return out;
}

DeterminismReport analyze_probe(const std::vector<ProbeResponses>& collected) {
  DeterminismReport report;
  double total = 0.0;
  std::size_t defined = 0;
  for (const ProbeResponses& pr : collected) {
    PromptDeterminism pd;
    pd.id = pr.id;
    pd.category = pr.category;
    pd.requested = pr.responses.size();
    for (const auto& r : pr.responses) {
      if (r) pd.responses.push_back(*r);
    }
    pd.completed = pd.responses.size();
    std::vector<std::u32string> decoded;
    decoded.reserve(pd.completed);
    for (const auto& r : pd.responses) decoded.push_back(utf8_decode(r));
    pd.distance_matrix.assign(pd.completed, std::vector<std::size_t>(pd.completed, 0));
    for (std::size_t i = 0; i < pd.completed; ++i) {
      for (std::size_t j = i + 1; j < pd.completed; ++j) {
        const std::size_t d = levenshtein(std::u32string_view(decoded[i]), std::u32string_view(decoded[j]));
        pd.distance_matrix[i][j] = d;
        pd.distance_matrix[j][i] = d;
      }
    }
    pd.exact_match_rate = exact_match_rate(pd.distance_matrix);
    if (pd.exact_match_rate) {
      total += *pd.exact_match_rate;
      ++defined;
    }
    report.prompts.push_back(std::move(pd));
  }
  if (defined > 0) report.aggregate_exact_match_rate = total / static_cast<double>(defined);
  return report;
}

DeterminismReport probe(ChatModel& model, const ProbeCorpus& corpus, std::size_t n_repeats) {
  return analyze_probe(collect_probe_responses(model, corpus, n_repeats));
}

json DeterminismReport::to_json() const {
  json prompts_json = json::array();
  for (const PromptDeterminism& pd : prompts) {
    prompts_json.push_back({{"id", pd.id},
                            {"category", pd.category},
                            {"requested", pd.requested},
                            {"completed", pd.completed},
                            {"distance_matrix", pd.distance_matrix},
                            {"exact_match_rate", pd.exact_match_rate
                                                     ? json(*pd.exact_match_rate)
                                                     : json(nullptr)}});
  }
  return json{{"definition", std::string(kRateDefinition)},
              {"aggregate_exact_match_rate",
               aggregate_exact_match_rate ? json(*aggregate_exact_match_rate) : json(nullptr)},
              {"prompts", std::move(prompts_json)}};
}

void save_probe_responses(const std::filesystem::path& path,
                          const std::vector<ProbeResponses>& collected) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("out", 0, "cannot write " + path.string());
  for (const ProbeResponses& pr : collected) {
    json responses = json::array();
    for (const auto& r : pr.responses) responses.push_back(r ? json(*r) : json(nullptr));
    out << json{{"id", pr.id}, {"category", pr.category}, {"responses", responses}}.dump() << '\n';
  }
}

std::vector<ProbeResponses> load_probe_responses(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("responses", 0, "cannot open " + path.string());
  std::vector<ProbeResponses> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      ProbeResponses pr{j.at("id").get<std::string>(), j.at("category").get<std::string>(), {}};
      for (const auto& r : j.at("responses")) {
        pr.responses.push_back(r.is_null() ? std::nullopt
                                           : std::optional<std::string>(r.get<std::string>()));
      }
      out.push_back(std::move(pr));
    } catch (const json::exception& e) {
      throw ConfigError("responses", line_no, e.what());
    }
  }
  return out;
}

}  // namespace casbench
