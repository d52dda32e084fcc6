#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "casbench/metrics.hpp"

namespace casbench {

struct TargetQueryEvent {
  std::string prompt;
  double temperature = 0.0;
  std::optional<std::int64_t> seed;
};

struct TargetResponseEvent {
  std::string text;
};

struct JudgeQueryEvent {
  std::string user;
  std::string assistant;
  double temperature = 0.0;
  std::int64_t seed = 0;
};

struct JudgeVerdictEvent {
  Verdict verdict = Verdict::kSafe;
  std::string raw_label;
  bool ambiguous = false;
};

using TranscriptEvent =
    std::variant<TargetQueryEvent, TargetResponseEvent, JudgeQueryEvent, JudgeVerdictEvent>;

// Every model and judge exchange of one CAS-gen or CAS-eval run, in order.
struct Transcript {
  std::vector<TranscriptEvent> events;

  template <typename Event>
  void add(Event e) {
    events.emplace_back(std::move(e));
  }

  // Verdicts in recorded order.
  std::vector<Verdict> verdicts() const;
  // Verdicts recomputed by re-parsing each recorded raw label.
  std::vector<Verdict> replay_verdicts() const;
  // Every verdict follows a judge query and every target response follows a
  // target query.
  bool well_formed() const;

  nlohmann::json to_json() const;
  static Transcript from_json(const nlohmann::json& j);
};

}  // namespace casbench
