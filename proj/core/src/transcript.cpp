#include "casbench/transcript.hpp"

#include "casbench/error.hpp"
#include "casbench/model_client.hpp"

namespace casbench {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

std::vector<Verdict> Transcript::verdicts() const {
  std::vector<Verdict> out;
  for (const auto& e : events) {
    if (const auto* v = std::get_if<JudgeVerdictEvent>(&e)) out.push_back(v->verdict);
  }
  return out;
}

std::vector<Verdict> Transcript::replay_verdicts() const {
  std::vector<Verdict> out;
  for (const auto& e : events) {
    if (const auto* v = std::get_if<JudgeVerdictEvent>(&e)) {
      out.push_back(parse_judge_output(v->raw_label).verdict);
    }
  }
  return out;
}

bool Transcript::well_formed() const {
  bool pending_target = false;
  bool pending_judge = false;
  for (const auto& e : events) {
    const bool ok = std::visit(
        Overloaded{
            [&](const TargetQueryEvent&) {
              if (pending_target || pending_judge) return false;
              pending_target = true;
              return true;
            },
            [&](const TargetResponseEvent&) {
              if (!pending_target) return false;
              pending_target = false;
              return true;
            },
            [&](const JudgeQueryEvent&) {
              if (pending_target || pending_judge) return false;
              pending_judge = true;
              return true;
            },
            [&](const JudgeVerdictEvent&) {
              if (!pending_judge) return false;
              pending_judge = false;
              return true;
            },
        },
        e);
    if (!ok) return false;
  }
  return true;
}

nlohmann::json Transcript::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : events) {
    out.push_back(std::visit(
        Overloaded{
            [](const TargetQueryEvent& q) {
              nlohmann::json j = {{"event", "target-query"},
                                  {"prompt", q.prompt},
                                  {"temperature", q.temperature}};
              j["seed"] = q.seed ? nlohmann::json(*q.seed) : nlohmann::json(nullptr);
              return j;
            },
            [](const TargetResponseEvent& r) {
              return nlohmann::json{{"event", "target-response"}, {"text", r.text}};
            },
            [](const JudgeQueryEvent& q) {
              return nlohmann::json{{"event", "judge-query"},
                                    {"user", q.user},
                                    {"assistant", q.assistant},
                                    {"temperature", q.temperature},
                                    {"seed", q.seed}};
            },
            [](const JudgeVerdictEvent& v) {
              return nlohmann::json{{"event", "judge-verdict"},
                                    {"verdict", is_harmful(v.verdict) ? 1 : 0},
                                    {"raw_label", v.raw_label},
                                    {"ambiguous", v.ambiguous}};
            },
        },
        e));
  }
  return out;
}

Transcript Transcript::from_json(const nlohmann::json& j) {
  Transcript t;
  try {
    for (const auto& e : j) {
      const std::string kind = e.at("event").get<std::string>();
      if (kind == "target-query") {
        TargetQueryEvent q{e.at("prompt").get<std::string>(), e.at("temperature").get<double>(),
                           std::nullopt};
        if (!e.at("seed").is_null()) q.seed = e.at("seed").get<std::int64_t>();
        t.add(std::move(q));
      } else if (kind == "target-response") {
        t.add(TargetResponseEvent{e.at("text").get<std::string>()});
      } else if (kind == "judge-query") {
        t.add(JudgeQueryEvent{e.at("user").get<std::string>(), e.at("assistant").get<std::string>(),
                              e.at("temperature").get<double>(), e.at("seed").get<std::int64_t>()});
      } else if (kind == "judge-verdict") {
        t.add(JudgeVerdictEvent{to_verdict(e.at("verdict").get<int>() == 1),
                                e.at("raw_label").get<std::string>(),
                                e.at("ambiguous").get<bool>()});
      } else {
        throw DomainError("unknown transcript event '" + kind + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("malformed transcript: ") + e.what());
  }
  return t;
}

}  // namespace casbench
