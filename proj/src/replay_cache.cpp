#include <chrono>
#include <filesystem>
#include <fstream>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "dotdx/llm_client.hpp"
#include "dotdx/text.hpp"

namespace dotdx {

using nlohmann::json;

std::string_view to_string(CacheMode mode) {
  switch (mode) {
    case CacheMode::kOff: return "off";
    case CacheMode::kRecord: return "record";
    case CacheMode::kReplay: return "replay";
    case CacheMode::kStrictReplay: return "strict-replay";
  }
  return "off";
}

std::optional<CacheMode> parse_cache_mode(std::string_view s) {
  for (auto m : {CacheMode::kOff, CacheMode::kRecord, CacheMode::kReplay,
                 CacheMode::kStrictReplay}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

namespace {

json transcript_json(const Conversation& c) {
  json arr = json::array();
  for (const auto& m : c.messages) arr.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return arr;
}

json response_json(const ChatResponse& r) {
  return {{"text", r.text},
          {"prompt_tokens", r.prompt_tokens},
          {"completion_tokens", r.completion_tokens},
          {"finish_reason", to_string(r.finish_reason)}};
}

ChatResponse response_from_json(const json& j) {
  ChatResponse r;
  r.text = j.at("text").get<std::string>();
  r.prompt_tokens = j.value("prompt_tokens", 0);
  r.completion_tokens = j.value("completion_tokens", 0);
  r.finish_reason = parse_finish_reason(j.value("finish_reason", std::string("stop")));
  return r;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  std::string hex;
  hex.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

}  // namespace

std::string canonical_request(const ChatRequest& request) {
  json j = {{"model_id", request.model_id},
            {"messages", transcript_json(request.messages)},
            {"temperature", request.temperature},
            {"run_tag", request.run_tag}};
  return j.dump();
}

std::string request_digest(const ChatRequest& request) {
  return sha256_hex(canonical_request(request));
}

ReplayCache::ReplayCache(std::string path) : path_(std::move(path)) {
  if (path_.empty() || !std::filesystem::exists(path_)) return;
  std::size_t line_no = 0;
  for (const auto& line : text::split_lines(text::read_file(path_))) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      auto j = json::parse(line);
      entries_.emplace(j.at("digest").get<std::string>(), response_from_json(j.at("response")));
    } catch (const json::exception& e) {
      throw std::runtime_error(fmt::format("cache {} line {}: {}", path_, line_no, e.what()));
    }
  }
}

std::optional<ChatResponse> ReplayCache::find(const std::string& digest) const {
  std::lock_guard lock(mutex_);
  if (auto it = entries_.find(digest); it != entries_.end()) return it->second;
  return std::nullopt;
}

bool ReplayCache::insert(const ChatRequest& request, const ChatResponse& response) {
  auto digest = request_digest(request);
  std::lock_guard lock(mutex_);
  if (entries_.contains(digest)) return false;
  if (!path_.empty()) {
    json entry = {{"digest", digest},
                  {"request",
                   {{"model_id", request.model_id},
                    {"messages", transcript_json(request.messages)},
                    {"temperature", request.temperature},
                    {"max_tokens", request.max_tokens},
                    {"run_tag", request.run_tag}}},
                  {"response", response_json(response)},
                  {"timestamp", fmt::format("{:%Y-%m-%dT%H:%M:%SZ}",
                                            fmt::gmtime(std::chrono::system_clock::to_time_t(
                                                std::chrono::system_clock::now())))}};
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw std::runtime_error("cannot append to cache " + path_);
    out << entry.dump() << '\n';
    out.flush();
  }
  entries_.emplace(std::move(digest), response);
  return true;
}

std::size_t ReplayCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

CachingClient::CachingClient(std::shared_ptr<ReplayCache> cache, CacheMode mode,
                             std::shared_ptr<ChatClient> live)
    : cache_(std::move(cache)), mode_(mode), live_(std::move(live)) {
  if (mode_ != CacheMode::kOff && !cache_) throw std::invalid_argument("cache mode needs a cache");
  if (mode_ != CacheMode::kStrictReplay && !live_) {
    throw std::invalid_argument("cache mode '" + std::string(to_string(mode_)) +
                                "' needs a live client");
  }
}

ChatResponse CachingClient::complete(const ChatRequest& request) {
  if (mode_ != CacheMode::kOff) {
    if (auto hit = cache_->find(request_digest(request))) {
      {
        std::lock_guard lock(mutex_);
        ++hits_;
      }
      if (hit->finish_reason == FinishReason::kError) throw TokenLimitError(hit->text);
      return *hit;
    }
    if (mode_ == CacheMode::kStrictReplay) {
      throw ReplayMissError("no cached response for " + request.run_tag + " (digest " +
                            request_digest(request).substr(0, 12) + ")");
    }
  }

  {
    std::lock_guard lock(mutex_);
    ++live_calls_;
  }
  try {
    auto response = live_->complete(request);
    if (mode_ == CacheMode::kRecord) cache_->insert(request, response);
    return response;
  } catch (const TokenLimitError& e) {
    if (mode_ == CacheMode::kRecord) {
      cache_->insert(request, ChatResponse{e.what(), 0, 0, FinishReason::kError});
    }
    throw;
  }
}

std::size_t CachingClient::hits() const {
  std::lock_guard lock(mutex_);
  return hits_;
}

std::size_t CachingClient::live_calls() const {
  std::lock_guard lock(mutex_);
  return live_calls_;
}

}  // namespace dotdx
