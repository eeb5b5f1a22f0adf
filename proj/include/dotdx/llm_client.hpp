#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <semaphore>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "dotdx/prompts.hpp"

namespace dotdx {

struct ChatRequest {
  std::string model_id;
  Conversation messages;
  double temperature = 1.0;
  int max_tokens = 1024;
  /// Strategy, run index and example id. Part of the cache key so that
  /// repeated sampled runs are stored separately.
  std::string run_tag;

  /// Throws std::invalid_argument on a negative temperature, max_tokens < 1
  /// or an empty transcript.
  void validate() const;
};

enum class FinishReason { kStop, kLength, kError };

std::string_view to_string(FinishReason r);
FinishReason parse_finish_reason(std::string_view s);

struct ChatResponse {
  std::string text;
  int prompt_tokens = 0;
  int completion_tokens = 0;
  /// kLength means the text was cut off by max_tokens.
  FinishReason finish_reason = FinishReason::kStop;

  bool operator==(const ChatResponse&) const = default;
};

class LlmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Credentials rejected. Never retried.
class AuthError : public LlmError {
 public:
  using LlmError::LlmError;
};

/// Still rate limited after the last retry.
class RateLimitError : public LlmError {
 public:
  using LlmError::LlmError;
};

/// The conversation no longer fits the model's context window.
class TokenLimitError : public LlmError {
 public:
  using LlmError::LlmError;
};

/// Strict replay found no cached response for a request.
class ReplayMissError : public LlmError {
 public:
  using LlmError::LlmError;
};

/// Network failure, server error or unexpected status after retries.
class TransportError : public LlmError {
 public:
  using LlmError::LlmError;
};

/// A scripted client had no rule for the request.
class ScriptError : public LlmError {
 public:
  using LlmError::LlmError;
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

// --- HTTP ------------------------------------------------------------------

struct HttpResponse {
  int status = 0;  // 0: the request never got a response
  std::string body;
  std::string transport_error;
  std::optional<double> retry_after_seconds;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  /// `path` is appended to the transport's base URL path.
  virtual HttpResponse post_json(const std::string& path,
                                 const std::map<std::string, std::string>& headers,
                                 const std::string& body) = 0;
};

/// cpp-httplib transport. `base_url` is scheme://host[:port][/prefix]; a
/// fresh connection is used per call so one transport serves many threads.
std::unique_ptr<HttpTransport> make_http_transport(const std::string& base_url,
                                                   std::chrono::seconds timeout);

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{1000};
  double factor = 2.0;
  std::chrono::milliseconds max_delay{30000};
  double jitter = 0.25;  // +/- fraction of the nominal delay

  /// Delay before retry number `retry` (1-based).
  std::chrono::milliseconds delay_for(int retry, std::mt19937_64& rng) const;
};

struct EndpointConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string chat_path = "/chat/completions";
  std::string api_key;
  std::size_t max_in_flight = 4;
  RetryPolicy retry;
};

/// Reads the credential named by `env_var`; throws AuthError when unset.
std::string api_key_from_env(const std::string& env_var);

/// Client for OpenAI-style /chat/completions endpoints.
class OpenAICompatibleClient : public ChatClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  OpenAICompatibleClient(EndpointConfig config, std::unique_ptr<HttpTransport> transport,
                         Sleeper sleeper = {});

  ChatResponse complete(const ChatRequest& request) override;

  static nlohmann::json build_payload(const ChatRequest& request);
  static ChatResponse parse_response(const std::string& body);

  /// True when an error body describes a context-length overflow.
  static bool is_context_length_error(int status, const std::string& body);

 private:
  EndpointConfig config_;
  std::unique_ptr<HttpTransport> transport_;
  Sleeper sleeper_;
  std::counting_semaphore<> in_flight_;
  std::mutex rng_mutex_;
  std::mt19937_64 rng_;
};

// --- record / replay -------------------------------------------------------

enum class CacheMode { kOff, kRecord, kReplay, kStrictReplay };

std::string_view to_string(CacheMode mode);
std::optional<CacheMode> parse_cache_mode(std::string_view s);

/// Canonical JSON of the keyed request fields (model, transcript,
/// temperature, run tag) with sorted keys.
std::string canonical_request(const ChatRequest& request);
/// Lowercase hex SHA-256 of canonical_request().
std::string request_digest(const ChatRequest& request);

/// Append-only JSONL store of responses keyed by request digest. Each line
/// holds digest, request, response and timestamp. Safe for concurrent use.
class ReplayCache {
 public:
  /// Loads `path` if it exists. An empty path gives an in-memory cache.
  explicit ReplayCache(std::string path = {});

  std::optional<ChatResponse> find(const std::string& digest) const;
  /// Appends a new entry; returns false (and writes nothing) when the
  /// digest is already present.
  bool insert(const ChatRequest& request, const ChatResponse& response);
  std::size_t size() const;
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  mutable std::mutex mutex_;
  std::map<std::string, ChatResponse> entries_;
};

/// Cache decorator. Token-limit rejections are cached as error entries and
/// rethrown on replay so that skips replay identically.
class CachingClient : public ChatClient {
 public:
  CachingClient(std::shared_ptr<ReplayCache> cache, CacheMode mode,
                std::shared_ptr<ChatClient> live);

  ChatResponse complete(const ChatRequest& request) override;

  std::size_t hits() const;
  std::size_t live_calls() const;

 private:
  std::shared_ptr<ReplayCache> cache_;
  CacheMode mode_;
  std::shared_ptr<ChatClient> live_;
  mutable std::mutex mutex_;
  std::size_t hits_ = 0;
  std::size_t live_calls_ = 0;
};

// --- scripted test double --------------------------------------------------

struct ScriptRule {
  enum class Action { kRespond, kTokenLimit, kTransportFailure };

  /// Substring the last user turn must contain; empty matches anything.
  std::string match;
  std::string response;
  bool one_shot = false;
  /// Optional extra condition on the request's run tag.
  std::string run_tag_contains;
  Action action = Action::kRespond;
  FinishReason finish_reason = FinishReason::kStop;
};

/// Answers with the first rule whose matcher hits the last user turn.
/// One-shot rules are consumed when used.
class ScriptedClient : public ChatClient {
 public:
  /// Throws std::invalid_argument for an empty script.
  explicit ScriptedClient(std::vector<ScriptRule> script);

  ChatResponse complete(const ChatRequest& request) override;

  std::size_t calls() const;
  std::vector<ChatRequest> requests() const;

 private:
  mutable std::mutex mutex_;
  std::vector<ScriptRule> rules_;
  std::vector<bool> consumed_;
  std::vector<ChatRequest> log_;
};

std::shared_ptr<ScriptedClient> scripted_client(std::vector<ScriptRule> script);

}  // namespace dotdx
