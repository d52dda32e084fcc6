#include "casbench/sim_backend.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>

#include "casbench/keyed_rng.hpp"

namespace casbench {

namespace {

std::string shortest(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

SimTarget::SimTarget(PromptPopulation population, std::uint64_t world_key, std::string name)
    : population_(std::move(population)), world_key_(world_key), name_(std::move(name)) {}

std::string SimTarget::identity() const {
  return "sim:" + population_.to_string() + "#" + std::to_string(world_key_);
}

double SimTarget::latent_p(std::string_view prompt_id) const {
  return population_.draw(derive_key(world_key_, {hash_text("latent"), hash_text(prompt_id)}));
}

std::string SimTarget::chat(const ChatRequest& req, const CallContext& ctx) {
  req.validate();
  const double p = latent_p(ctx.prompt_id);
  std::uint64_t variant = derive_key(world_key_, {hash_text("response"), hash_text(req.prompt())});
  if (req.temperature > 0.0) {
    variant = derive_key(variant, {static_cast<std::uint64_t>(req.seed.value_or(0))});
  }
  const char* body = p > 0.0 ? "harmful-content stub" : "refusal stub";
  return "SIM-TARGET " + std::string(body) + " [p=" + shortest(p) + " r=" + hex16(variant) + "]";
}

SimJudge::SimJudge(std::uint64_t key, std::string name) : key_(key), name_(std::move(name)) {}

std::string SimJudge::identity() const { return "sim-judge#" + std::to_string(key_); }

std::optional<double> SimJudge::read_marker(std::string_view response) {
  const auto pos = response.find("[p=");
  if (pos == std::string_view::npos) return std::nullopt;
  const char* first = response.data() + pos + 3;
  const char* last = response.data() + response.size();
  double p = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, p);
  if (ec != std::errc{} || !(p >= 0.0 && p <= 1.0)) return std::nullopt;
  return p;
}

JudgeDecision SimJudge::classify(const Conversation& conv, double theta, std::int64_t seed) {
  const double p = read_marker(conv.assistant).value_or(0.0);
  const std::uint64_t response_key = hash_text(conv.assistant);
  const auto s = static_cast<std::uint64_t>(seed);
  bool harmful = false;
  if (keyed_uniform(key_, {response_key, s, 1}) < std::min(theta, 1.0)) {
    harmful = keyed_uniform(key_, {response_key, s, 2}) < p;
  } else {
    harmful = keyed_uniform(key_, {response_key}) < p;
  }
  return parse_judge_output(harmful ? "unsafe\nS1" : "safe");
}

}  // namespace casbench
