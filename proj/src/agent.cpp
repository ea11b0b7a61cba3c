// SPDX-License-Identifier: Apache-2.0
#include "agentbias/agent.hpp"

#include <chrono>
#include <ctime>
#include <stdexcept>

namespace agentbias {

Agent::Agent(Character persona, std::string system_prompt, BackendPtr backend)
    : persona_(std::move(persona)), system_prompt_(std::move(system_prompt)), backend_(std::move(backend)) {
  if (!backend_) throw std::invalid_argument("agent " + persona_.name + " has no backend");
}

void Agent::observe(ChatMessage msg) {
  if (msg.role != Role::System && msg.content.empty()) {
    throw std::invalid_argument("agent " + persona_.name + ": empty observed message");
  }
  memory_.push_back(std::move(msg));
}

std::vector<ChatMessage> Agent::build_messages(const std::string& prompt) const {
  std::vector<ChatMessage> msgs;
  msgs.reserve(memory_.size() + 2);
  msgs.push_back({Role::System, system_prompt_});
  msgs.insert(msgs.end(), memory_.begin(), memory_.end());
  msgs.push_back({Role::User, prompt});
  return msgs;
}

std::string Agent::respond(const std::string& prompt, const CallContext& ctx, TranscriptSink& sink) {
  if (prompt.empty()) throw std::invalid_argument("agent " + persona_.name + ": empty prompt");
  auto msgs = build_messages(prompt);
  std::string response = backend_->complete(msgs, ctx);

  TranscriptEvent e;
  e.cell = ctx.cell;
  e.run_id = ctx.run_id;
  e.scenario_id = ctx.scenario_id;
  e.run_index = ctx.run_index;
  e.round = ctx.round;
  e.attempt = ctx.attempt;
  e.agent = persona_.name;
  e.prompt = msgs;
  e.response = response;
  e.backend_kind = std::string(to_string(backend_->config().kind));
  e.backend_model = backend_->config().model;
  if (!backend_->deterministic()) e.timestamp = utc_timestamp();
  sink.append(std::move(e));

  memory_.push_back({Role::User, prompt});
  memory_.push_back({Role::Assistant, response.empty() ? std::string("(empty response)") : response});
  return response;
}

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::now();
  auto t = std::chrono::system_clock::to_time_t(now);
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03lldZ", buf, static_cast<long long>(ms));
  return out;
}

}  // namespace agentbias
