// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "agentbias/chat.hpp"
#include "agentbias/scenario.hpp"
#include "agentbias/transcript.hpp"

namespace agentbias {

/// A persona with private, append-only memory and its own backend handle.
class Agent {
 public:
  Agent(Character persona, std::string system_prompt, BackendPtr backend);

  [[nodiscard]] const Character& persona() const { return persona_; }
  [[nodiscard]] const std::string& name() const { return persona_.name; }
  [[nodiscard]] std::span<const ChatMessage> memory() const { return memory_; }
  [[nodiscard]] const std::string& system_prompt() const { return system_prompt_; }

  /// Appends to this agent's memory only.
  void observe(ChatMessage msg);

  /// The message list a call with `prompt` would send: persona system
  /// message, memory in order, then the prompt.
  [[nodiscard]] std::vector<ChatMessage> build_messages(const std::string& prompt) const;

  /// Sends build_messages(prompt), records the call in `sink` before the
  /// response is used, then appends prompt and response to memory.
  std::string respond(const std::string& prompt, const CallContext& ctx, TranscriptSink& sink);

 private:
  Character persona_;
  std::string system_prompt_;
  BackendPtr backend_;
  std::vector<ChatMessage> memory_;
};

/// UTC wall-clock timestamp, ISO-8601 with milliseconds.
std::string utc_timestamp();

}  // namespace agentbias
