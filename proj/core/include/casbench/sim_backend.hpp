#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "casbench/model_client.hpp"
#include "casbench/stat_model.hpp"

namespace casbench {

// Offline target: each prompt id gets a latent harmfulness p drawn from the
// population (keyed by world key and prompt id). Responses are stub texts
// carrying p in a "[p=...]" marker that SimJudge reads back.
//
// At temperature 0 the response depends only on the request text; above 0 it
// also depends on the request seed.
class SimTarget final : public ChatModel {
 public:
  SimTarget(PromptPopulation population, std::uint64_t world_key, std::string name = "sim");

  std::string chat(const ChatRequest& req, const CallContext& ctx) override;
  std::string identity() const override;

  double latent_p(std::string_view prompt_id) const;
  const PromptPopulation& population() const noexcept { return population_; }

 private:
  PromptPopulation population_;
  std::uint64_t world_key_;
  std::string name_;
};

// Offline judge. For a response carrying marker p it labels harmful with
// probability p. With probability min(theta, 1) the label is a fresh draw
// keyed by the call seed; otherwise it is the greedy label, a draw keyed by the
// response text alone. So theta = 0 is fully deterministic per response and
// theta >= 1 gives independent Bernoulli(p) labels. Responses without a
// marker are safe.
class SimJudge final : public JudgeModel {
 public:
  explicit SimJudge(std::uint64_t key, std::string name = "sim-judge");

  JudgeDecision classify(const Conversation& conv, double theta, std::int64_t seed) override;
  std::string identity() const override;

  static std::optional<double> read_marker(std::string_view response);

 private:
  std::uint64_t key_;
  std::string name_;
};

}  // namespace casbench
