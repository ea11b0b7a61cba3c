// SPDX-License-Identifier: Apache-2.0
#include "agentbias/transcript.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace agentbias {

using json = nlohmann::json;

json to_json(const TranscriptEvent& e) {
  return {{"seq", e.seq},
          {"cell", e.cell},
          {"run_id", e.run_id},
          {"scenario_id", e.scenario_id},
          {"run_index", e.run_index},
          {"round", e.round},
          {"attempt", e.attempt},
          {"agent", e.agent},
          {"prompt", to_json(std::span<const ChatMessage>(e.prompt))},
          {"prompt_hash", prompt_hash(e.prompt)},
          {"response", e.response},
          {"timestamp", e.timestamp},
          {"backend", {{"kind", e.backend_kind}, {"model", e.backend_model}}}};
}

TranscriptEvent transcript_event_from_json(const json& j) {
  TranscriptEvent e;
  e.seq = j.at("seq").get<std::uint64_t>();
  e.cell = j.value("cell", std::string{});
  e.run_id = j.at("run_id").get<std::string>();
  e.scenario_id = j.at("scenario_id").get<std::string>();
  e.run_index = j.at("run_index").get<int>();
  e.round = j.at("round").get<std::string>();
  e.attempt = j.value("attempt", 0);
  e.agent = j.at("agent").get<std::string>();
  e.prompt = messages_from_json(j.at("prompt"));
  e.response = j.at("response").get<std::string>();
  e.timestamp = j.value("timestamp", std::string{});
  if (auto it = j.find("backend"); it != j.end()) {
    e.backend_kind = it->value("kind", std::string{});
    e.backend_model = it->value("model", std::string{});
  }
  return e;
}

std::uint64_t TranscriptSink::append(TranscriptEvent e) {
  std::lock_guard lock(mu_);
  e.seq = events_.size();
  if (e.timestamp.empty()) e.timestamp = "logical:" + std::to_string(e.seq);
  events_.push_back(std::move(e));
  return events_.back().seq;
}

std::vector<TranscriptEvent> TranscriptSink::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::size_t TranscriptSink::size() const {
  std::lock_guard lock(mu_);
  return events_.size();
}

std::string transcript_to_jsonl(std::span<const TranscriptEvent> events) {
  std::string out;
  for (const auto& e : events) {
    out += to_json(e).dump();
    out += '\n';
  }
  return out;
}

void write_transcript(std::span<const TranscriptEvent> events, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write transcript " + path.string());
  out << transcript_to_jsonl(events);
}

std::vector<TranscriptEvent> read_transcript(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open transcript " + path.string());
  std::vector<TranscriptEvent> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(transcript_event_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

ReplayBackend::ReplayBackend(std::span<const TranscriptEvent> events, BackendConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.kind = BackendKind::Replay;
  if (cfg_.model.empty()) cfg_.model = "replay";
  for (const auto& e : events) {
    if (e.prompt.empty()) continue;  // run-abort markers carry no prompt
    auto h = prompt_hash(e.prompt);
    by_position_[{e.cell, e.scenario_id, e.run_index, e.agent, h}].push_back(e.response);
    by_hash_[h].push_back(e.response);
  }
}

std::shared_ptr<ReplayBackend> ReplayBackend::from_file(const std::filesystem::path& path, BackendConfig cfg) {
  auto events = read_transcript(path);
  return std::make_shared<ReplayBackend>(events, std::move(cfg));
}

std::string ReplayBackend::complete(std::span<const ChatMessage> messages, const CallContext& ctx) {
  if (messages.empty()) throw std::invalid_argument("complete: empty message list");
  auto h = prompt_hash(messages);
  std::lock_guard lock(mu_);
  Key key{ctx.cell, ctx.scenario_id, ctx.run_index, ctx.agent, h};
  if (auto it = by_position_.find(key); it != by_position_.end()) {
    auto& cursor = position_cursor_[key];
    if (cursor < it->second.size()) return it->second[cursor++];
  } else if (auto hit = by_hash_.find(h); hit != by_hash_.end()) {
    auto& cursor = hash_cursor_[h];
    if (cursor < hit->second.size()) return hit->second[cursor++];
  }
  throw BackendError(BackendError::Kind::ReplayMiss, "replay miss: prompt " + h + " (agent \"" + ctx.agent +
                                                         "\", round \"" + ctx.round +
                                                         "\") differs from the recording");
}

}  // namespace agentbias
