// SPDX-License-Identifier: Apache-2.0
#include "agentbias/chat.hpp"

#include <fstream>

#include <json.hpp>

#include "agentbias/text.hpp"
#include "agentbias/transcript.hpp"

namespace agentbias {

using json = nlohmann::json;

std::string_view to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

std::optional<Role> parse_role(std::string_view s) {
  for (Role r : {Role::System, Role::User, Role::Assistant}) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

json to_json(std::span<const ChatMessage> messages) {
  json arr = json::array();
  for (const auto& m : messages) arr.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return arr;
}

std::vector<ChatMessage> messages_from_json(const json& j) {
  std::vector<ChatMessage> out;
  for (const auto& m : j) {
    auto role = parse_role(m.at("role").get<std::string>());
    if (!role) throw std::invalid_argument("unknown message role " + m.at("role").dump());
    out.push_back({*role, m.at("content").get<std::string>()});
  }
  return out;
}

std::string prompt_hash(std::span<const ChatMessage> messages) {
  return text::hex64(text::fnv1a64(to_json(messages).dump()));
}

std::string_view to_string(BackendKind k) {
  switch (k) {
    case BackendKind::Remote: return "remote";
    case BackendKind::Scripted: return "scripted";
    case BackendKind::Replay: return "replay";
  }
  return "scripted";
}

void BackendConfig::validate() const {
  if (temperature < 0) throw std::invalid_argument("backend temperature must be >= 0");
  if (max_tokens <= 0) throw std::invalid_argument("backend max_tokens must be > 0");
  if (retry.max_attempts < 1) throw std::invalid_argument("retry max_attempts must be >= 1");
  if (max_in_flight < 1) throw std::invalid_argument("max_in_flight must be >= 1");
  if (kind == BackendKind::Remote && endpoint.empty()) throw std::invalid_argument("remote backend needs an endpoint");
  if (kind == BackendKind::Replay && transcript_path.empty()) {
    throw std::invalid_argument("replay backend needs a transcript path");
  }
}

json to_json(const BackendConfig& c) {
  json j{{"kind", to_string(c.kind)},
         {"model", c.model},
         {"temperature", c.temperature},
         {"top_p", c.top_p},
         {"max_tokens", c.max_tokens},
         {"retry",
          {{"max_attempts", c.retry.max_attempts},
           {"initial_backoff_ms", c.retry.initial_backoff_ms},
           {"backoff_multiplier", c.retry.backoff_multiplier}}}};
  if (!c.label.empty()) j["label"] = c.label;
  if (!c.endpoint.empty()) j["endpoint"] = c.endpoint;
  if (c.kind == BackendKind::Remote) {
    j["api_key_env"] = c.api_key_env;
    j["max_in_flight"] = c.max_in_flight;
    j["timeout_seconds"] = c.timeout_seconds;
  }
  if (!c.script_path.empty()) j["script"] = c.script_path;
  if (!c.transcript_path.empty()) j["transcript"] = c.transcript_path;
  return j;
}

BackendConfig backend_config_from_json(const json& j) {
  BackendConfig c;
  auto kind = j.value("kind", std::string("scripted"));
  if (kind == "remote") c.kind = BackendKind::Remote;
  else if (kind == "scripted") c.kind = BackendKind::Scripted;
  else if (kind == "replay") c.kind = BackendKind::Replay;
  else throw std::invalid_argument("unknown backend kind \"" + kind + "\"");
  c.label = j.value("label", std::string{});
  c.endpoint = j.value("endpoint", std::string{});
  c.model = j.value("model", std::string{});
  c.temperature = j.value("temperature", c.temperature);
  c.top_p = j.value("top_p", c.top_p);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  if (auto it = j.find("retry"); it != j.end()) {
    c.retry.max_attempts = it->value("max_attempts", c.retry.max_attempts);
    c.retry.initial_backoff_ms = it->value("initial_backoff_ms", c.retry.initial_backoff_ms);
    c.retry.backoff_multiplier = it->value("backoff_multiplier", c.retry.backoff_multiplier);
  }
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
  c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
  c.script_path = j.value("script", std::string{});
  c.transcript_path = j.value("transcript", std::string{});
  if (j.contains("api_key")) {
    throw std::invalid_argument("backend configs must not carry credentials; set " + c.api_key_env + " instead");
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// ScriptedBackend

ScriptedBackend::ScriptedBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.kind = BackendKind::Scripted;
  if (cfg_.model.empty()) cfg_.model = "scripted";
}

void ScriptedBackend::queue(std::string scenario_id, std::string agent, std::string round, std::string text) {
  std::lock_guard lock(mu_);
  int& next = queued_[{scenario_id, agent, round}];
  Entry e;
  e.scenario_id = std::move(scenario_id);
  e.agent = std::move(agent);
  e.round = std::move(round);
  e.occurrence = next++;
  e.text = std::move(text);
  entries_.push_back(std::move(e));
}

void ScriptedBackend::add(Entry e) {
  std::lock_guard lock(mu_);
  entries_.push_back(std::move(e));
}

void ScriptedBackend::set_responder(Responder r) {
  std::lock_guard lock(mu_);
  responder_ = std::move(r);
}

std::size_t ScriptedBackend::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::string ScriptedBackend::complete(std::span<const ChatMessage> messages, const CallContext& ctx) {
  if (messages.empty()) throw std::invalid_argument("complete: empty message list");
  Responder responder;
  int occurrence = 0;
  {
    std::lock_guard lock(mu_);
    ++calls_;
    occurrence = seen_[{ctx.run_id, ctx.run_index, ctx.scenario_id, ctx.agent, ctx.round}]++;
    const Entry* best = nullptr;
    int best_score = -1;
    for (const auto& e : entries_) {
      if (e.round != ctx.round) continue;
      if (e.scenario_id != "*" && e.scenario_id != ctx.scenario_id) continue;
      if (e.agent != "*" && e.agent != ctx.agent) continue;
      if (e.occurrence && *e.occurrence != occurrence) continue;
      if (e.run_index && *e.run_index != ctx.run_index) continue;
      int score = (e.scenario_id != "*") + (e.agent != "*") + 2 * e.occurrence.has_value() +
                  4 * e.run_index.has_value();
      if (score > best_score) {
        best = &e;
        best_score = score;
      }
    }
    if (best != nullptr) return best->text;
    responder = responder_;
  }
  if (responder) {
    if (auto r = responder(messages, ctx, occurrence)) return *r;
  }
  throw BackendError(BackendError::Kind::ScriptExhausted,
                     "script exhausted: no response for scenario \"" + ctx.scenario_id + "\", agent \"" +
                         ctx.agent + "\", round \"" + ctx.round + "\", occurrence " + std::to_string(occurrence) +
                         ", run " + std::to_string(ctx.run_index));
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_json(const json& j, BackendConfig cfg) {
  auto backend = std::make_shared<ScriptedBackend>(std::move(cfg));
  const json& list = j.is_array() ? j : j.at("responses");
  for (const auto& item : list) {
    Entry e;
    e.scenario_id = item.value("scenario_id", std::string("*"));
    e.agent = item.value("agent", std::string("*"));
    e.round = item.at("round").get<std::string>();
    if (item.contains("occurrence")) e.occurrence = item.at("occurrence").get<int>();
    if (item.contains("run")) e.run_index = item.at("run").get<int>();
    e.text = item.at("text").get<std::string>();
    backend->add(std::move(e));
  }
  return backend;
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path, BackendConfig cfg) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open script file " + path.string());
  return from_json(json::parse(in), std::move(cfg));
}

BackendPtr make_backend(const BackendConfig& cfg) {
  cfg.validate();
  switch (cfg.kind) {
    case BackendKind::Remote: return std::make_shared<RemoteBackend>(cfg);
    case BackendKind::Scripted:
      if (cfg.script_path.empty()) return std::make_shared<ScriptedBackend>(cfg);
      return ScriptedBackend::from_file(cfg.script_path, cfg);
    case BackendKind::Replay: return ReplayBackend::from_file(cfg.transcript_path, cfg);
  }
  throw std::invalid_argument("unknown backend kind");
}

}  // namespace agentbias
