#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "casbench/metrics.hpp"

namespace casbench {

struct EndpointConfig {
  std::string base_url;     // e.g. http://localhost:8000/v1
  std::string model_name;
  std::string api_key_env;  // empty: no Authorization header
  double timeout_s = 60.0;
  int max_retries = 3;
  double backoff_base_s = 0.5;
  int max_in_flight = 4;

  // ConfigError when timeout <= 0, retries < 0 or the URL has no scheme.
  void validate() const;
};

enum class Role { kSystem, kUser, kAssistant };

std::string_view to_string(Role role) noexcept;

struct ChatMessage {
  Role role = Role::kUser;
  std::string content;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  std::optional<std::int64_t> seed;
  int max_tokens = 512;

  // PreconditionError without a user message or with a negative temperature.
  void validate() const;
  // Content of the last user message.
  const std::string& prompt() const;
};

// Single-turn exchange handed to a judge.
struct Conversation {
  std::string user;
  std::string assistant;
};

struct JudgeDecision {
  Verdict verdict = Verdict::kSafe;
  std::string raw_label;  // full judge output, verbatim
  std::vector<std::string> categories;
  bool ambiguous = false;
};

// Guard output grammar: the first non-empty line is "safe" or "unsafe"
// (case-insensitive, surrounding whitespace ignored); after "unsafe" the next
// non-empty line is a comma-separated category list. Anything else is
// ambiguous and maps to a safe verdict with the flag set.
JudgeDecision parse_judge_output(std::string_view raw);

// Identifies the caller's cell so simulated backends can look up per-prompt
// latent state. Live clients only use it for diagnostics.
struct CallContext {
  std::string prompt_id;
};

class ChatModel {
 public:
  virtual ~ChatModel() = default;
  virtual std::string chat(const ChatRequest& req, const CallContext& ctx) = 0;
  virtual std::string identity() const = 0;
};

class JudgeModel {
 public:
  virtual ~JudgeModel() = default;
  virtual JudgeDecision classify(const Conversation& conv, double theta, std::int64_t seed) = 0;
  virtual std::string identity() const = 0;
};

// The guard classification prompt. The template is a versioned asset whose
// SHA-256 goes into every result header.
std::string_view guard_template();
std::string guard_template_sha256();
std::string format_guard_prompt(const Conversation& conv);

// Blocks while max in-flight requests are outstanding.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(int limit) : limit_(limit < 1 ? 1 : limit) {}
  void acquire();
  void release();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int limit_;
  int active_ = 0;
};

using Sleeper = std::function<void(double seconds)>;

// One OpenAI-compatible chat-completions call with retry. 5xx, 429 and
// transport failures are retried with exponential backoff (the r-th retry
// waits backoff_base * 2^(r-1));
// other 4xx statuses raise RequestError at once. After max_retries the last
// failure is raised as TransportError.
std::string chat(const EndpointConfig& ep, const ChatRequest& req, const Sleeper& sleep = {});

class HttpChatModel final : public ChatModel {
 public:
  explicit HttpChatModel(EndpointConfig ep, Sleeper sleep = {});
  std::string chat(const ChatRequest& req, const CallContext& ctx) override;
  std::string identity() const override { return ep_.model_name + "@" + ep_.base_url; }
  const EndpointConfig& endpoint() const noexcept { return ep_; }

 private:
  EndpointConfig ep_;
  Sleeper sleep_;
  InFlightLimiter limiter_;
};

// How a live judge receives the exchange.
enum class JudgeFormat {
  kTemplate,      // guard template rendered into one user message
  kConversation,  // raw user/assistant turns; the server applies its chat template
};

JudgeDecision judge_classify(const EndpointConfig& ep, const Conversation& conv, double theta,
                             std::int64_t seed, JudgeFormat format = JudgeFormat::kTemplate,
                             const Sleeper& sleep = {});

class HttpJudge final : public JudgeModel {
 public:
  HttpJudge(EndpointConfig ep, JudgeFormat format, Sleeper sleep = {});
  JudgeDecision classify(const Conversation& conv, double theta, std::int64_t seed) override;
  std::string identity() const override { return ep_.model_name + "@" + ep_.base_url; }

 private:
  EndpointConfig ep_;
  JudgeFormat format_;
  Sleeper sleep_;
  InFlightLimiter limiter_;
};

}  // namespace casbench
