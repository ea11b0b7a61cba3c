// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "agentbias/chat.hpp"

namespace agentbias {

/// One backend call, recorded exactly as sent and received.
struct TranscriptEvent {
  std::uint64_t seq = 0;
  std::string cell;
  std::string run_id;
  std::string scenario_id;
  int run_index = 0;
  std::string round;
  int attempt = 0;
  std::string agent;
  std::vector<ChatMessage> prompt;
  std::string response;
  std::string timestamp;
  std::string backend_kind;
  std::string backend_model;

  friend bool operator==(const TranscriptEvent&, const TranscriptEvent&) = default;
};

nlohmann::json to_json(const TranscriptEvent& e);
TranscriptEvent transcript_event_from_json(const nlohmann::json& j);

/// Append-only event channel; safe for concurrent producers.
class TranscriptSink {
 public:
  /// Assigns the next sequence number and stores the event.
  std::uint64_t append(TranscriptEvent e);
  [[nodiscard]] std::vector<TranscriptEvent> events() const;
  [[nodiscard]] std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::vector<TranscriptEvent> events_;
};

/// JSON-lines, one event per line.
void write_transcript(std::span<const TranscriptEvent> events, const std::filesystem::path& path);
std::vector<TranscriptEvent> read_transcript(const std::filesystem::path& path);
std::string transcript_to_jsonl(std::span<const TranscriptEvent> events);

/// Serves recorded responses for prompts whose canonical hash matches the
/// recording. Lookup is by (cell, scenario, run, agent, prompt hash) first, then by
/// prompt hash alone; identical prompts replay in recorded order. A prompt
/// not in the recording throws BackendError(ReplayMiss).
class ReplayBackend final : public ChatBackend {
 public:
  ReplayBackend(std::span<const TranscriptEvent> events, BackendConfig cfg = {});
  static std::shared_ptr<ReplayBackend> from_file(const std::filesystem::path& path, BackendConfig cfg = {});

  std::string complete(std::span<const ChatMessage> messages, const CallContext& ctx) override;
  [[nodiscard]] const BackendConfig& config() const override { return cfg_; }

 private:
  using Key = std::tuple<std::string, std::string, int, std::string, std::string>;
  BackendConfig cfg_;
  std::mutex mu_;
  std::map<Key, std::vector<std::string>> by_position_;
  std::map<Key, std::size_t> position_cursor_;
  std::map<std::string, std::vector<std::string>> by_hash_;
  std::map<std::string, std::size_t> hash_cursor_;
};

}  // namespace agentbias
