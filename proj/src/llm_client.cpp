#include "dotdx/llm_client.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "dotdx/text.hpp"

namespace dotdx {

using nlohmann::json;

void ChatRequest::validate() const {
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  if (max_tokens < 1) throw std::invalid_argument("max_tokens must be >= 1");
  if (messages.messages.empty()) throw std::invalid_argument("request has no messages");
}

std::string_view to_string(FinishReason r) {
  switch (r) {
    case FinishReason::kStop: return "stop";
    case FinishReason::kLength: return "length";
    case FinishReason::kError: return "error";
  }
  return "error";
}

FinishReason parse_finish_reason(std::string_view s) {
  if (s == "length") return FinishReason::kLength;
  if (s == "error") return FinishReason::kError;
  return FinishReason::kStop;
}

// --- transport -------------------------------------------------------------

namespace {

class HttplibTransport : public HttpTransport {
 public:
  HttplibTransport(std::string origin, std::string prefix, std::chrono::seconds timeout)
      : origin_(std::move(origin)), prefix_(std::move(prefix)), timeout_(timeout) {}

  HttpResponse post_json(const std::string& path,
                         const std::map<std::string, std::string>& headers,
                         const std::string& body) override {
    httplib::Client cli(origin_);
    cli.set_connection_timeout(timeout_);
    cli.set_read_timeout(timeout_);
    cli.set_write_timeout(timeout_);
    httplib::Headers h;
    for (const auto& [k, v] : headers) {
      if (k != "Content-Type") h.emplace(k, v);
    }
    auto res = cli.Post(prefix_ + path, h, body, "application/json");
    HttpResponse out;
    if (!res) {
      out.transport_error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    if (res->has_header("Retry-After")) {
      char* end = nullptr;
      auto v = res->get_header_value("Retry-After");
      double secs = std::strtod(v.c_str(), &end);
      if (end != v.c_str()) out.retry_after_seconds = secs;
    }
    return out;
  }

 private:
  std::string origin_;
  std::string prefix_;
  std::chrono::seconds timeout_;
};

}  // namespace

std::unique_ptr<HttpTransport> make_http_transport(const std::string& base_url,
                                                   std::chrono::seconds timeout) {
  auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw std::invalid_argument("endpoint URL needs a scheme: " + base_url);
  }
  auto path_start = base_url.find('/', scheme_end + 3);
  std::string origin = base_url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return std::make_unique<HttplibTransport>(std::move(origin), std::move(prefix), timeout);
}

// --- retry -----------------------------------------------------------------

std::chrono::milliseconds RetryPolicy::delay_for(int retry, std::mt19937_64& rng) const {
  double nominal = static_cast<double>(base_delay.count()) * std::pow(factor, retry - 1);
  nominal = std::min(nominal, static_cast<double>(max_delay.count()));
  std::uniform_real_distribution<double> dist(-jitter, jitter);
  double jittered = nominal * (1.0 + dist(rng));
  return std::chrono::milliseconds(static_cast<std::int64_t>(std::max(0.0, jittered)));
}

std::string api_key_from_env(const std::string& env_var) {
  const char* v = std::getenv(env_var.c_str());
  if (v == nullptr || *v == '\0') {
    throw AuthError("credential environment variable '" + env_var + "' is not set");
  }
  return v;
}

// --- client ----------------------------------------------------------------

OpenAICompatibleClient::OpenAICompatibleClient(EndpointConfig config,
                                               std::unique_ptr<HttpTransport> transport,
                                               Sleeper sleeper)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      sleeper_(std::move(sleeper)),
      in_flight_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, config_.max_in_flight))),
      rng_(std::random_device{}()) {
  if (!sleeper_) {
    sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
  if (config_.retry.max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
}

json OpenAICompatibleClient::build_payload(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages.messages) {
    messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  return {{"model", request.model_id},
          {"messages", std::move(messages)},
          {"temperature", request.temperature},
          {"max_tokens", request.max_tokens}};
}

ChatResponse OpenAICompatibleClient::parse_response(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw LlmError(std::string("response is not JSON: ") + e.what());
  }
  const auto& choices = j.value("choices", json::array());
  if (!choices.is_array() || choices.empty()) throw LlmError("response has no choices");
  const auto& choice = choices.front();
  ChatResponse out;
  const auto& content = choice.value("message", json::object()).value("content", json());
  if (!content.is_string()) throw LlmError("response choice has no text content");
  out.text = content.get<std::string>();
  if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
    out.finish_reason = parse_finish_reason(choice["finish_reason"].get<std::string>());
  }
  if (auto usage = j.find("usage"); usage != j.end() && usage->is_object()) {
    out.prompt_tokens = usage->value("prompt_tokens", 0);
    out.completion_tokens = usage->value("completion_tokens", 0);
  }
  return out;
}

bool OpenAICompatibleClient::is_context_length_error(int status, const std::string& body) {
  if (status != 400 && status != 413 && status != 422) return false;
  std::string code;
  std::string message = body;
  try {
    auto j = json::parse(body);
    if (auto err = j.find("error"); err != j.end() && err->is_object()) {
      if (err->contains("code") && (*err)["code"].is_string()) code = (*err)["code"];
      if (err->contains("message") && (*err)["message"].is_string()) message = (*err)["message"];
    }
  } catch (const json::exception&) {
  }
  if (code == "context_length_exceeded") return true;
  auto lower = text::normalize_key(message);
  return lower.find("maximum context length") != std::string::npos ||
         lower.find("context length") != std::string::npos ||
         lower.find("context window") != std::string::npos ||
         lower.find("too many tokens") != std::string::npos;
}

namespace {

std::string error_message(const HttpResponse& r) {
  if (r.status == 0) return "transport error: " + r.transport_error;
  std::string snippet = r.body.substr(0, 300);
  return "HTTP " + std::to_string(r.status) + ": " + snippet;
}

bool is_retryable(int status) {
  return status == 0 || status == 408 || status == 409 || status == 429 || status >= 500;
}

}  // namespace

ChatResponse OpenAICompatibleClient::complete(const ChatRequest& request) {
  request.validate();
  const std::string body = build_payload(request).dump();
  const std::map<std::string, std::string> headers = {
      {"Authorization", "Bearer " + config_.api_key}, {"Content-Type", "application/json"}};

  HttpResponse last;
  for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
    if (attempt > 1) {
      std::chrono::milliseconds delay;
      {
        std::lock_guard lock(rng_mutex_);
        delay = config_.retry.delay_for(attempt - 1, rng_);
      }
      if (last.retry_after_seconds) {
        delay = std::max(delay, std::chrono::milliseconds(
                                    static_cast<std::int64_t>(*last.retry_after_seconds * 1000)));
      }
      spdlog::debug("retrying {} in {} ms ({})", request.run_tag, delay.count(),
                    error_message(last));
      sleeper_(delay);
    }

    in_flight_.acquire();
    try {
      last = transport_->post_json(config_.chat_path, headers, body);
    } catch (...) {
      in_flight_.release();
      throw;
    }
    in_flight_.release();

    if (last.status >= 200 && last.status < 300) return parse_response(last.body);
    if (last.status == 401 || last.status == 403) throw AuthError(error_message(last));
    if (is_context_length_error(last.status, last.body)) {
      throw TokenLimitError(error_message(last));
    }
    if (!is_retryable(last.status)) throw TransportError(error_message(last));
  }
  if (last.status == 429) {
    throw RateLimitError("rate limited after " + std::to_string(config_.retry.max_attempts) +
                         " attempts: " + error_message(last));
  }
  throw TransportError("gave up after " + std::to_string(config_.retry.max_attempts) +
                       " attempts: " + error_message(last));
}

}  // namespace dotdx
