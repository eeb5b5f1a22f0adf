#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <deque>
#include <thread>

// Same configuration as the library build of this header.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dotdx/llm_client.hpp"
#include "dotdx/text.hpp"
#include "test_support.hpp"

namespace dotdx {
namespace {

using nlohmann::json;
using testing::TempDir;

ChatRequest sample_request(std::string tag = "dot:s1+s2+s3:sequential/run1/e01") {
  ChatRequest r;
  r.model_id = "gpt-3.5-turbo";
  r.messages.messages = {{Role::kSystem, "You are helpful."},
                         {Role::kUser, "Patient's speech: I always fail."}};
  r.run_tag = std::move(tag);
  return r;
}

std::string ok_body(const std::string& text, const std::string& finish = "stop") {
  return json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}},
                            {"finish_reason", finish}}}},
              {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 3}}}}
      .dump();
}

const std::string kContextLengthBody =
    R"({"error":{"message":"This model's maximum context length is 4097 tokens. However, your messages resulted in 5000 tokens.","type":"invalid_request_error","param":"messages","code":"context_length_exceeded"}})";

/// Transport replaying a fixed queue of responses.
class QueueTransport : public HttpTransport {
 public:
  explicit QueueTransport(std::deque<HttpResponse> responses) : responses_(std::move(responses)) {}

  HttpResponse post_json(const std::string& path, const std::map<std::string, std::string>& headers,
                         const std::string& body) override {
    ++*calls_;
    last_path_ = path;
    last_headers_ = headers;
    last_body_ = body;
    if (responses_.empty()) return {500, "exhausted", "", std::nullopt};
    auto r = responses_.front();
    if (responses_.size() > 1) responses_.pop_front();
    return r;
  }

  std::shared_ptr<std::atomic<int>> calls_ = std::make_shared<std::atomic<int>>(0);
  std::string last_path_;
  std::map<std::string, std::string> last_headers_;
  std::string last_body_;

 private:
  std::deque<HttpResponse> responses_;
};

struct ClientHarness {
  std::shared_ptr<std::atomic<int>> calls;
  std::shared_ptr<std::vector<std::chrono::milliseconds>> sleeps =
      std::make_shared<std::vector<std::chrono::milliseconds>>();
  QueueTransport* transport = nullptr;
  std::unique_ptr<OpenAICompatibleClient> client;

  explicit ClientHarness(std::deque<HttpResponse> responses, int attempts = 5) {
    auto t = std::make_unique<QueueTransport>(std::move(responses));
    transport = t.get();
    calls = t->calls_;
    EndpointConfig cfg;
    cfg.api_key = "sk-test";
    cfg.retry.max_attempts = attempts;
    auto sleeps_ref = sleeps;
    client = std::make_unique<OpenAICompatibleClient>(
        cfg, std::move(t), [sleeps_ref](std::chrono::milliseconds d) { sleeps_ref->push_back(d); });
  }
};

TEST(OpenAIClient, PayloadShape) {
  auto req = sample_request();
  req.temperature = 0.7;
  req.max_tokens = 256;
  auto p = OpenAICompatibleClient::build_payload(req);
  EXPECT_EQ(p["model"], "gpt-3.5-turbo");
  EXPECT_EQ(p["temperature"], 0.7);
  EXPECT_EQ(p["max_tokens"], 256);
  ASSERT_EQ(p["messages"].size(), 2u);
  EXPECT_EQ(p["messages"][0]["role"], "system");
  EXPECT_EQ(p["messages"][1]["content"], "Patient's speech: I always fail.");
}

TEST(OpenAIClient, ParseResponse) {
  auto r = OpenAICompatibleClient::parse_response(ok_body("Yes"));
  EXPECT_EQ(r.text, "Yes");
  EXPECT_EQ(r.prompt_tokens, 11);
  EXPECT_EQ(r.completion_tokens, 3);
  EXPECT_EQ(r.finish_reason, FinishReason::kStop);
  EXPECT_EQ(OpenAICompatibleClient::parse_response(ok_body("cut", "length")).finish_reason,
            FinishReason::kLength);
  EXPECT_THROW(OpenAICompatibleClient::parse_response("not json"), LlmError);
  EXPECT_THROW(OpenAICompatibleClient::parse_response(R"({"choices":[]})"), LlmError);
}

TEST(OpenAIClient, ContextLengthDetection) {
  EXPECT_TRUE(OpenAICompatibleClient::is_context_length_error(400, kContextLengthBody));
  EXPECT_TRUE(OpenAICompatibleClient::is_context_length_error(
      400, R"({"error":{"message":"Input is too long for the context window"}})"));
  EXPECT_FALSE(OpenAICompatibleClient::is_context_length_error(400, R"({"error":{"message":"bad"}})"));
  EXPECT_FALSE(OpenAICompatibleClient::is_context_length_error(500, kContextLengthBody));
}

TEST(OpenAIClient, SendsAuthAndPath) {
  ClientHarness h({{200, ok_body("hi"), "", std::nullopt}});
  auto r = h.client->complete(sample_request());
  EXPECT_EQ(r.text, "hi");
  EXPECT_EQ(h.transport->last_path_, "/chat/completions");
  EXPECT_EQ(h.transport->last_headers_.at("Authorization"), "Bearer sk-test");
  EXPECT_EQ(json::parse(h.transport->last_body_)["model"], "gpt-3.5-turbo");
}

TEST(OpenAIClient, RetriesTransientThenSucceeds) {
  ClientHarness h({{429, "slow down", "", std::nullopt},
                   {0, "", "connection refused", std::nullopt},
                   {503, "unavailable", "", std::nullopt},
                   {200, ok_body("done"), "", std::nullopt}});
  EXPECT_EQ(h.client->complete(sample_request()).text, "done");
  EXPECT_EQ(*h.calls, 4);
  ASSERT_EQ(h.sleeps->size(), 3u);
  // Base 1s, factor 2, jitter 25%.
  EXPECT_GE((*h.sleeps)[0].count(), 750);
  EXPECT_LE((*h.sleeps)[0].count(), 1250);
  EXPECT_GE((*h.sleeps)[2].count(), 3000);
  EXPECT_LE((*h.sleeps)[2].count(), 5000);
}

TEST(OpenAIClient, RateLimitExhaustion) {
  ClientHarness h({{429, "slow down", "", std::nullopt}});
  EXPECT_THROW(h.client->complete(sample_request()), RateLimitError);
  EXPECT_EQ(*h.calls, 5);
  EXPECT_EQ(h.sleeps->size(), 4u);
}

TEST(OpenAIClient, ServerErrorExhaustion) {
  ClientHarness h({{502, "bad gateway", "", std::nullopt}}, 3);
  EXPECT_THROW(h.client->complete(sample_request()), TransportError);
  EXPECT_EQ(*h.calls, 3);
}

TEST(OpenAIClient, RetryAfterHeaderRaisesDelay) {
  ClientHarness h({{429, "wait", "", 7.0}, {200, ok_body("ok"), "", std::nullopt}});
  h.client->complete(sample_request());
  ASSERT_EQ(h.sleeps->size(), 1u);
  EXPECT_GE((*h.sleeps)[0].count(), 7000);
}

TEST(OpenAIClient, AuthFailureIsNotRetried) {
  ClientHarness h({{401, R"({"error":{"message":"bad key"}})", "", std::nullopt}});
  EXPECT_THROW(h.client->complete(sample_request()), AuthError);
  EXPECT_EQ(*h.calls, 1);
  EXPECT_TRUE(h.sleeps->empty());
}

TEST(OpenAIClient, ContextLengthIsTokenLimitAndNotRetried) {
  ClientHarness h({{400, kContextLengthBody, "", std::nullopt}});
  EXPECT_THROW(h.client->complete(sample_request()), TokenLimitError);
  EXPECT_EQ(*h.calls, 1);
}

TEST(OpenAIClient, OtherClientErrorsFailFast) {
  ClientHarness h({{404, "no such model", "", std::nullopt}});
  EXPECT_THROW(h.client->complete(sample_request()), TransportError);
  EXPECT_EQ(*h.calls, 1);
}

TEST(OpenAIClient, InvalidRequestRejectedBeforeSending) {
  ClientHarness h({{200, ok_body("x"), "", std::nullopt}});
  auto req = sample_request();
  req.temperature = -1.0;
  EXPECT_THROW(h.client->complete(req), std::invalid_argument);
  req = sample_request();
  req.max_tokens = 0;
  EXPECT_THROW(h.client->complete(req), std::invalid_argument);
  EXPECT_EQ(*h.calls, 0);
}

TEST(OpenAIClient, InFlightBound) {
  class SlowTransport : public HttpTransport {
   public:
    HttpResponse post_json(const std::string&, const std::map<std::string, std::string>&,
                           const std::string&) override {
      const int now = ++active;
      int prev = peak.load();
      while (now > prev && !peak.compare_exchange_weak(prev, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
      --active;
      return {200, ok_body("x"), "", std::nullopt};
    }
    std::atomic<int> active{0};
    std::atomic<int> peak{0};
  };
  auto transport = std::make_unique<SlowTransport>();
  auto* raw = transport.get();
  EndpointConfig cfg;
  cfg.api_key = "k";
  cfg.max_in_flight = 2;
  OpenAICompatibleClient client(cfg, std::move(transport));
  {
    std::vector<std::jthread> threads;
    for (int i = 0; i < 8; ++i) threads.emplace_back([&] { client.complete(sample_request()); });
  }
  EXPECT_LE(raw->peak.load(), 2);
  EXPECT_GE(raw->peak.load(), 1);
}

TEST(RetryPolicy, DelayIsCappedAndJittered) {
  RetryPolicy p;
  std::mt19937_64 rng(1);
  for (int retry = 1; retry <= 10; ++retry) {
    for (int k = 0; k < 20; ++k) {
      auto d = p.delay_for(retry, rng).count();
      const double nominal = std::min(1000.0 * std::pow(2.0, retry - 1), 30000.0);
      EXPECT_GE(d, static_cast<long>(nominal * 0.75) - 1);
      EXPECT_LE(d, static_cast<long>(nominal * 1.25) + 1);
    }
  }
}

TEST(Credentials, FromEnvironment) {
  ::setenv("DOTDX_TEST_KEY", "secret", 1);
  EXPECT_EQ(api_key_from_env("DOTDX_TEST_KEY"), "secret");
  ::unsetenv("DOTDX_TEST_KEY");
  EXPECT_THROW(api_key_from_env("DOTDX_TEST_KEY"), AuthError);
}

// Stub endpoint on localhost exercising the real HTTP transport.
class StubServer {
 public:
  StubServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      last_auth = req.get_header_value("Authorization");
      auto body = json::parse(req.body);
      const std::string last = body["messages"].back()["content"];
      if (req.get_header_value("Authorization") != "Bearer good-key") {
        res.status = 401;
        res.set_content(R"({"error":{"message":"Incorrect API key provided"}})", "application/json");
      } else if (last.find("LONG") != std::string::npos) {
        res.status = 400;
        res.set_content(kContextLengthBody, "application/json");
      } else {
        res.set_content(ok_body("echo: " + last), "application/json");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

  std::atomic<int> hits{0};
  std::string last_auth;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

OpenAICompatibleClient stub_client(const StubServer& s, const std::string& key) {
  EndpointConfig cfg;
  cfg.base_url = s.base_url();
  cfg.api_key = key;
  return OpenAICompatibleClient(cfg, make_http_transport(cfg.base_url, std::chrono::seconds(5)),
                                [](std::chrono::milliseconds) {});
}

TEST(HttpStub, RoundTrip) {
  StubServer server;
  auto client = stub_client(server, "good-key");
  auto r = client.complete(sample_request());
  EXPECT_EQ(r.text, "echo: Patient's speech: I always fail.");
  EXPECT_EQ(server.last_auth, "Bearer good-key");
}

TEST(HttpStub, ContextLengthSurfacesTokenLimitWithoutRetry) {
  StubServer server;
  auto client = stub_client(server, "good-key");
  auto req = sample_request();
  req.messages.messages.back().content = "LONG speech";
  EXPECT_THROW(client.complete(req), TokenLimitError);
  EXPECT_EQ(server.hits.load(), 1);
}

TEST(HttpStub, AuthFailureIsFatal) {
  StubServer server;
  auto client = stub_client(server, "bad-key");
  EXPECT_THROW(client.complete(sample_request()), AuthError);
  EXPECT_EQ(server.hits.load(), 1);
}

TEST(HttpStub, ConnectionRefusedIsRetriedThenFails) {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }  // closed again: nothing listens there now
  EndpointConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
  cfg.retry.max_attempts = 2;
  int sleeps = 0;
  OpenAICompatibleClient client(cfg, make_http_transport(cfg.base_url, std::chrono::seconds(1)),
                                [&](std::chrono::milliseconds) { ++sleeps; });
  EXPECT_THROW(client.complete(sample_request()), TransportError);
  EXPECT_EQ(sleeps, 1);
}

TEST(HttpTransport, RejectsUrlWithoutScheme) {
  EXPECT_THROW(make_http_transport("localhost:8080", std::chrono::seconds(1)),
               std::invalid_argument);
}

// --- cache ------------------------------------------------------------------

TEST(ReplayCache, CanonicalRequestAndDigestAreStable) {
  auto req = sample_request();
  req.max_tokens = 99;  // not part of the key
  EXPECT_EQ(canonical_request(req),
            R"({"messages":[{"content":"You are helpful.","role":"system"},{"content":"Patient's speech: I always fail.","role":"user"}],"model_id":"gpt-3.5-turbo","run_tag":"dot:s1+s2+s3:sequential/run1/e01","temperature":1.0})");
  // Independent SHA-256 of the string above.
  EXPECT_EQ(request_digest(req), "113930c9f93888eaddcf7633ee491f1b9d3a1b043f8ca7c4a48883a8fec0d701");
}

TEST(ReplayCache, DigestSeparatesRuns) {
  EXPECT_NE(request_digest(sample_request("dot/run1/e01")), request_digest(sample_request("dot/run2/e01")));
  auto a = sample_request();
  auto b = sample_request();
  b.temperature = 0.5;
  EXPECT_NE(request_digest(a), request_digest(b));
  b = sample_request();
  b.messages.messages.push_back({Role::kAssistant, "x"});
  EXPECT_NE(request_digest(a), request_digest(b));
}

TEST(ReplayCache, ModesNames) {
  for (auto m : {CacheMode::kOff, CacheMode::kRecord, CacheMode::kReplay, CacheMode::kStrictReplay}) {
    EXPECT_EQ(parse_cache_mode(to_string(m)), m);
  }
  EXPECT_FALSE(parse_cache_mode("replay-strict").has_value());
}

TEST(ReplayCache, RecordThenReplayWithoutNetwork) {
  TempDir dir;
  const auto path = dir.file("cache.jsonl");
  auto live = scripted_client({{"", "live answer"}});
  {
    CachingClient rec(std::make_shared<ReplayCache>(path), CacheMode::kRecord, live);
    EXPECT_EQ(rec.complete(sample_request()).text, "live answer");
    EXPECT_EQ(rec.complete(sample_request()).text, "live answer");  // hit
    EXPECT_EQ(rec.live_calls(), 1u);
    EXPECT_EQ(rec.hits(), 1u);
  }
  // One line per distinct request, with the documented fields.
  auto lines = text::split_lines(text::read_file(path));
  ASSERT_EQ(lines.size(), 2u);  // trailing newline gives an empty last piece
  auto entry = json::parse(lines[0]);
  for (const char* k : {"digest", "request", "response", "timestamp"}) EXPECT_TRUE(entry.contains(k)) << k;
  EXPECT_EQ(entry["request"]["messages"].size(), 2u);

  CachingClient strict(std::make_shared<ReplayCache>(path), CacheMode::kStrictReplay, nullptr);
  EXPECT_EQ(strict.complete(sample_request()).text, "live answer");
  EXPECT_EQ(strict.live_calls(), 0u);
  EXPECT_THROW(strict.complete(sample_request("other/run1/x")), ReplayMissError);
}

TEST(ReplayCache, ReplayMissCallsLiveWithoutWriting) {
  TempDir dir;
  const auto path = dir.file("cache.jsonl");
  auto live = scripted_client({{"", "fresh"}});
  auto cache = std::make_shared<ReplayCache>(path);
  CachingClient replay(cache, CacheMode::kReplay, live);
  EXPECT_EQ(replay.complete(sample_request()).text, "fresh");
  EXPECT_EQ(cache->size(), 0u);
  EXPECT_FALSE(std::filesystem::exists(path));
}

TEST(ReplayCache, TokenLimitIsRecordedAndReplayed) {
  TempDir dir;
  const auto path = dir.file("cache.jsonl");
  ScriptRule rule;
  rule.action = ScriptRule::Action::kTokenLimit;
  auto live = scripted_client({rule});
  {
    CachingClient rec(std::make_shared<ReplayCache>(path), CacheMode::kRecord, live);
    EXPECT_THROW(rec.complete(sample_request()), TokenLimitError);
  }
  CachingClient strict(std::make_shared<ReplayCache>(path), CacheMode::kStrictReplay, nullptr);
  EXPECT_THROW(strict.complete(sample_request()), TokenLimitError);
}

TEST(ReplayCache, InsertNeverDuplicates) {
  TempDir dir;
  ReplayCache cache(dir.file("c.jsonl"));
  EXPECT_TRUE(cache.insert(sample_request(), {"a", 1, 1, FinishReason::kStop}));
  EXPECT_FALSE(cache.insert(sample_request(), {"b", 1, 1, FinishReason::kStop}));
  EXPECT_EQ(cache.find(request_digest(sample_request()))->text, "a");
  ReplayCache reloaded(dir.file("c.jsonl"));
  EXPECT_EQ(reloaded.size(), 1u);
}

TEST(ReplayCache, RetriedLiveCallStoresOneEntry) {
  TempDir dir;
  auto transport = std::make_unique<QueueTransport>(std::deque<HttpResponse>{
      {503, "busy", "", std::nullopt}, {200, ok_body("after retry"), "", std::nullopt}});
  EndpointConfig cfg;
  cfg.api_key = "k";
  auto live = std::make_shared<OpenAICompatibleClient>(cfg, std::move(transport),
                                                       [](std::chrono::milliseconds) {});
  auto cache = std::make_shared<ReplayCache>(dir.file("c.jsonl"));
  CachingClient rec(cache, CacheMode::kRecord, live);
  EXPECT_EQ(rec.complete(sample_request()).text, "after retry");
  EXPECT_EQ(cache->size(), 1u);
  EXPECT_EQ(text::split_lines(text::trim(text::read_file(dir.file("c.jsonl")))).size(), 1u);
}

TEST(ReplayCache, ConstructionChecks) {
  EXPECT_THROW(CachingClient(nullptr, CacheMode::kRecord, scripted_client({{"", "x"}})),
               std::invalid_argument);
  EXPECT_THROW(CachingClient(std::make_shared<ReplayCache>(), CacheMode::kReplay, nullptr),
               std::invalid_argument);
}

TEST(ReplayCache, CorruptFileReportsLine) {
  TempDir dir;
  text::write_file(dir.file("c.jsonl"), "{\"digest\":\"x\",\"response\":{\"text\":\"t\"}}\nnot json\n");
  try {
    ReplayCache cache(dir.file("c.jsonl"));
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

// --- scripted client ----------------------------------------------------------

ChatRequest user_turn(const std::string& content) {
  ChatRequest r;
  r.model_id = "m";
  r.messages.messages = {{Role::kUser, content}};
  return r;
}

TEST(ScriptedClient, MatchesLastUserTurn) {
  auto c = scripted_client({{"what is the situation", "S1 rationale"}, {"", "fallback"}});
  EXPECT_EQ(c->complete(user_turn("1. what is the situation? ...")).text, "S1 rationale");
  EXPECT_EQ(c->complete(user_turn("something else")).text, "fallback");
  EXPECT_EQ(c->calls(), 2u);
}

TEST(ScriptedClient, OneShotRulesConsumeInOrder) {
  ScriptRule first{"q", "first"};
  first.one_shot = true;
  ScriptRule second{"q", "second"};
  second.one_shot = true;
  auto c = scripted_client({first, second});
  EXPECT_EQ(c->complete(user_turn("q")).text, "first");
  EXPECT_EQ(c->complete(user_turn("q")).text, "second");
  EXPECT_THROW(c->complete(user_turn("q")), ScriptError);
}

TEST(ScriptedClient, UnmatchedTurnIsNamed) {
  auto c = scripted_client({{"alpha", "a"}});
  try {
    c->complete(user_turn("beta gamma"));
    FAIL();
  } catch (const ScriptError& e) {
    EXPECT_NE(std::string(e.what()).find("beta gamma"), std::string::npos);
  }
  EXPECT_THROW(scripted_client({}), std::invalid_argument);
}

TEST(ScriptedClient, RunTagConditionAndActions) {
  ScriptRule limit;
  limit.run_tag_contains = "/run1/";
  limit.action = ScriptRule::Action::kTokenLimit;
  auto c = scripted_client({limit, {"", "fine"}});
  auto req = user_turn("x");
  req.run_tag = "dot/run1/e";
  EXPECT_THROW(c->complete(req), TokenLimitError);
  req.run_tag = "dot/run2/e";
  EXPECT_EQ(c->complete(req).text, "fine");
}

}  // namespace
}  // namespace dotdx
