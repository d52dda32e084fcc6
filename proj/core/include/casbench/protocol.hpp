#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "casbench/attacks.hpp"
#include "casbench/error.hpp"
#include "casbench/metrics.hpp"
#include "casbench/model_client.hpp"
#include "casbench/transcript.hpp"

namespace casbench {

struct PromptRef {
  std::string id;
  std::string text;
};

struct GenConfig {
  std::size_t k_gen = 1;
  double T_gen = 0.0;
  double theta_gen = 0.0;
  std::size_t budget_N = 10000;
  std::int64_t seed = 0;
  // Stop judging a candidate at its first safe verdict. Turning this off
  // spends all k_gen judge calls per candidate without changing the outcome.
  bool early_exit = true;

  void validate() const;
};

enum class EvalMode { kFixedResponse, kRegenerate };

std::string_view to_string(EvalMode mode) noexcept;
EvalMode parse_eval_mode(std::string_view text);

struct EvalConfig {
  std::size_t k_eval = 1;
  double T_eval = 0.0;
  double theta_eval = 0.0;
  EvalMode mode = EvalMode::kFixedResponse;
  std::int64_t seed = 0;
  // Skip judge calls after the first safe verdict; the skipped slots are
  // recorded as safe, which leaves cas() unchanged for every k.
  bool early_exit = true;

  void validate() const;
};

struct GenOutcome {
  std::string prompt_id;
  bool accepted = false;
  std::optional<std::string> candidate;
  // Target response to the accepted candidate (first of its k_gen queries).
  std::optional<std::string> response;
  std::size_t candidates_tried = 0;
  Transcript transcript;
};

struct EvalOutcome {
  std::string prompt_id;
  bool consistent = false;
  VerdictVector verdicts;
  std::size_t judge_calls = 0;
  std::size_t ambiguous = 0;
  std::vector<std::string> raw_labels;  // one per judge call, in order
  Transcript transcript;
};

// A backend call failed after its retries. Carries what was recorded so far.
class RunError : public Error {
 public:
  RunError(const std::string& message, Transcript partial, bool transport)
      : Error(message), partial_(std::move(partial)), transport_(transport) {}
  const Transcript& partial_transcript() const noexcept { return partial_; }
  bool is_transport() const noexcept { return transport_; }

 private:
  Transcript partial_;
  bool transport_;
};

// Seed sent with one backend call, derived from the run seed and the call's
// coordinates. Non-negative.
std::int64_t call_seed(std::int64_t run_seed, std::string_view prompt_id, std::uint64_t stage,
                       std::uint64_t candidate, std::uint64_t repetition) noexcept;

inline constexpr std::uint64_t kGenStage = 1;
inline constexpr std::uint64_t kEvalStage = 2;

// Draws candidates from the attack until one collects k_gen consecutive
// harmful verdicts (each verdict on a fresh target response at T_gen, judged
// at theta_gen). A safe verdict rejects only the current candidate.
GenOutcome run_cas_gen(const PromptRef& prompt, const Attack& attack, ChatModel& target,
                       JudgeModel& judge, const GenConfig& cfg);

// Judges a candidate k_eval times. Fixed-response mode re-judges the stored
// response; regenerate mode re-queries the target at T_eval before each judgement.
// PreconditionError when the mode's input is missing.
EvalOutcome run_cas_eval(std::string_view prompt_id, const std::string& candidate,
                         const std::optional<std::string>& stored_response, ChatModel* target,
                         JudgeModel& judge, const EvalConfig& cfg);

}  // namespace casbench
