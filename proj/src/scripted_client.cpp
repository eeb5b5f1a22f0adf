#include "dotdx/llm_client.hpp"
#include "dotdx/text.hpp"

namespace dotdx {

ScriptedClient::ScriptedClient(std::vector<ScriptRule> script)
    : rules_(std::move(script)), consumed_(rules_.size(), false) {
  if (rules_.empty()) throw std::invalid_argument("script must contain at least one rule");
}

ChatResponse ScriptedClient::complete(const ChatRequest& request) {
  const auto* last = request.messages.last_user_turn();
  const std::string turn = last ? last->content : std::string{};

  std::lock_guard lock(mutex_);
  log_.push_back(request);
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    if (consumed_[i]) continue;
    const auto& rule = rules_[i];
    if (!rule.match.empty() && turn.find(rule.match) == std::string::npos) continue;
    if (!rule.run_tag_contains.empty() &&
        request.run_tag.find(rule.run_tag_contains) == std::string::npos) {
      continue;
    }
    if (rule.one_shot) consumed_[i] = true;
    switch (rule.action) {
      case ScriptRule::Action::kTokenLimit:
        throw TokenLimitError("scripted context length exceeded for " + request.run_tag);
      case ScriptRule::Action::kTransportFailure:
        throw TransportError("scripted transport failure for " + request.run_tag);
      case ScriptRule::Action::kRespond:
        break;
    }
    std::size_t prompt_tokens = 0;
    for (const auto& m : request.messages.messages) {
      prompt_tokens += text::split_whitespace(m.content).size();
    }
    return ChatResponse{rule.response, static_cast<int>(prompt_tokens),
                        static_cast<int>(text::split_whitespace(rule.response).size()),
                        rule.finish_reason};
  }
  std::string shown = turn.size() > 160 ? turn.substr(turn.size() - 160) : turn;
  throw ScriptError("no script rule matches last user turn: \"" + shown + "\"");
}

std::size_t ScriptedClient::calls() const {
  std::lock_guard lock(mutex_);
  return log_.size();
}

std::vector<ChatRequest> ScriptedClient::requests() const {
  std::lock_guard lock(mutex_);
  return log_;
}

std::shared_ptr<ScriptedClient> scripted_client(std::vector<ScriptRule> script) {
  return std::make_shared<ScriptedClient>(std::move(script));
}

}  // namespace dotdx
