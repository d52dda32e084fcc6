#include "casbench/protocol.hpp"

#include "casbench/keyed_rng.hpp"

namespace casbench {

namespace {

constexpr int kTargetMaxTokens = 512;

std::string query_target(ChatModel& target, std::string_view prompt_id, const std::string& text,
                         double temperature, std::int64_t seed, Transcript& t) {
  ChatRequest req;
  req.messages.push_back({Role::kUser, text});
  req.temperature = temperature;
  req.seed = seed;
  req.max_tokens = kTargetMaxTokens;
  t.add(TargetQueryEvent{text, temperature, seed});
  std::string response = target.chat(req, CallContext{std::string(prompt_id)});
  t.add(TargetResponseEvent{response});
  return response;
}

JudgeDecision query_judge(JudgeModel& judge, const std::string& user, const std::string& assistant,
                          double theta, std::int64_t seed, Transcript& t) {
  t.add(JudgeQueryEvent{user, assistant, theta, seed});
  JudgeDecision d = judge.classify(Conversation{user, assistant}, theta, seed);
  t.add(JudgeVerdictEvent{d.verdict, d.raw_label, d.ambiguous});
  return d;
}

// Runs body(); backend failures become RunError carrying the transcript.
template <typename Body>
auto guarded(Transcript& t, Body&& body) {
  try {
    return body();
  } catch (const TransportError& e) {
    throw RunError(e.what(), std::move(t), true);
  } catch (const RequestError& e) {
    throw RunError(e.what(), std::move(t), false);
  }
}

}  // namespace

void GenConfig::validate() const {
  if (k_gen < 1) throw PreconditionError("k_gen must be >= 1");
  if (budget_N < 1) throw PreconditionError("budget_N must be >= 1");
  if (!(T_gen >= 0.0)) throw PreconditionError("T_gen must be >= 0");
  if (!(theta_gen >= 0.0)) throw PreconditionError("theta_gen must be >= 0");
}

void EvalConfig::validate() const {
  if (k_eval < 1) throw PreconditionError("k_eval must be >= 1");
  if (!(T_eval >= 0.0)) throw PreconditionError("T_eval must be >= 0");
  if (!(theta_eval >= 0.0)) throw PreconditionError("theta_eval must be >= 0");
}

std::string_view to_string(EvalMode mode) noexcept {
  return mode == EvalMode::kFixedResponse ? "fixed-response" : "regenerate";
}

EvalMode parse_eval_mode(std::string_view text) {
  if (text == "fixed-response") return EvalMode::kFixedResponse;
  if (text == "regenerate") return EvalMode::kRegenerate;
  throw ConfigError("mode", 0, "expected 'fixed-response' or 'regenerate', got '" +
                                   std::string(text) + "'");
}

std::int64_t call_seed(std::int64_t run_seed, std::string_view prompt_id, std::uint64_t stage,
                       std::uint64_t candidate, std::uint64_t repetition) noexcept {
  const std::uint64_t k = derive_key(static_cast<std::uint64_t>(run_seed),
                                     {hash_text(prompt_id), stage, candidate, repetition});
  return static_cast<std::int64_t>(k >> 1);
}

GenOutcome run_cas_gen(const PromptRef& prompt, const Attack& attack, ChatModel& target,
                       JudgeModel& judge, const GenConfig& cfg) {
  cfg.validate();
  GenOutcome out;
  out.prompt_id = prompt.id;
  auto state = attack.start(prompt.text, cfg.budget_N, cfg.seed);

  guarded(out.transcript, [&] {
    while (auto cand = state->next(out.transcript)) {
      ++out.candidates_tried;
      bool all_harmful = true;
      std::optional<std::string> first_response;
      for (std::size_t rep = 0; rep < cfg.k_gen; ++rep) {
        const std::int64_t seed = call_seed(cfg.seed, prompt.id, kGenStage, cand->index, rep);
        std::string response =
            query_target(target, prompt.id, cand->prompt_text, cfg.T_gen, seed, out.transcript);
        const JudgeDecision d =
            query_judge(judge, cand->prompt_text, response, cfg.theta_gen, seed, out.transcript);
        if (!first_response) first_response = std::move(response);
        if (!is_harmful(d.verdict)) {
          all_harmful = false;
          if (cfg.early_exit) break;
        }
      }
      if (all_harmful) {
        out.accepted = true;
        out.candidate = cand->prompt_text;
        out.response = std::move(first_response);
        return;
      }
    }
  });
  return out;
}

EvalOutcome run_cas_eval(std::string_view prompt_id, const std::string& candidate,
                         const std::optional<std::string>& stored_response, ChatModel* target,
                         JudgeModel& judge, const EvalConfig& cfg) {
  cfg.validate();
  if (cfg.mode == EvalMode::kFixedResponse && !stored_response) {
    throw PreconditionError("fixed-response evaluation needs a stored response");
  }
  if (cfg.mode == EvalMode::kRegenerate && target == nullptr) {
    throw PreconditionError("regenerate evaluation needs a target model");
  }

  EvalOutcome out;
  out.prompt_id = std::string(prompt_id);
  out.verdicts.prompt_id = out.prompt_id;
  out.verdicts.seed = cfg.seed;
  out.verdicts.verdicts.assign(cfg.k_eval, Verdict::kSafe);

  guarded(out.transcript, [&] {
    for (std::size_t rep = 0; rep < cfg.k_eval; ++rep) {
      const std::int64_t seed = call_seed(cfg.seed, prompt_id, kEvalStage, 0, rep);
      std::string response;
      if (cfg.mode == EvalMode::kRegenerate) {
        response = query_target(*target, prompt_id, candidate, cfg.T_eval, seed, out.transcript);
      } else {
        response = *stored_response;
      }
      const JudgeDecision d =
          query_judge(judge, candidate, response, cfg.theta_eval, seed, out.transcript);
      ++out.judge_calls;
      out.ambiguous += d.ambiguous ? 1 : 0;
      out.raw_labels.push_back(d.raw_label);
      out.verdicts.verdicts[rep] = d.verdict;
      if (cfg.early_exit && !is_harmful(d.verdict)) break;
    }
  });
  out.consistent = cas(out.verdicts, cfg.k_eval);
  return out;
}

}  // namespace casbench
