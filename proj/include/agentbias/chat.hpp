// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

namespace agentbias {

enum class Role { System, User, Assistant };

std::string_view to_string(Role r);
std::optional<Role> parse_role(std::string_view s);

struct ChatMessage {
  Role role = Role::User;
  std::string content;
  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

nlohmann::json to_json(std::span<const ChatMessage> messages);
std::vector<ChatMessage> messages_from_json(const nlohmann::json& j);

/// Hash of the canonical serialization of a message list (hex). Any change
/// in role, content or order changes it.
std::string prompt_hash(std::span<const ChatMessage> messages);

struct RetryPolicy {
  int max_attempts = 3;
  int initial_backoff_ms = 500;
  double backoff_multiplier = 2.0;
};

enum class BackendKind { Remote, Scripted, Replay };

std::string_view to_string(BackendKind k);

/// Sampling defaults follow the reference setup: temperature 0.7,
/// top_p 0.95, max_tokens 500.
struct BackendConfig {
  BackendKind kind = BackendKind::Scripted;
  std::string label;  ///< model label used in reports; defaults to `model`
  std::string endpoint;
  std::string model;
  double temperature = 0.7;
  double top_p = 0.95;
  int max_tokens = 500;
  RetryPolicy retry;
  std::string api_key_env = "OPENAI_API_KEY";
  int max_in_flight = 4;
  int timeout_seconds = 120;
  std::string script_path;      ///< scripted
  std::string transcript_path;  ///< replay

  [[nodiscard]] std::string display_label() const { return label.empty() ? model : label; }
  /// Throws std::invalid_argument on temperature < 0, max_tokens <= 0 or
  /// missing kind-specific fields.
  void validate() const;
};

nlohmann::json to_json(const BackendConfig& c);
BackendConfig backend_config_from_json(const nlohmann::json& j);

/// Identifies one backend call within a session.
struct CallContext {
  std::string cell;
  std::string run_id;
  std::string scenario_id;
  int run_index = 0;
  std::string agent;
  std::string round;  ///< "goal", "first", "discussion_1", "final", ...
  int attempt = 0;
};

class BackendError : public std::runtime_error {
 public:
  enum class Kind { Transport, Http, ScriptExhausted, ReplayMiss, Protocol };
  BackendError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  [[nodiscard]] Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  /// One chat completion for `messages` (non-empty).
  virtual std::string complete(std::span<const ChatMessage> messages, const CallContext& ctx) = 0;
  [[nodiscard]] virtual const BackendConfig& config() const = 0;
  /// Deterministic backends get logical transcript timestamps.
  [[nodiscard]] virtual bool deterministic() const { return true; }
};

using BackendPtr = std::shared_ptr<ChatBackend>;

/// Serves canned responses keyed by (scenario, agent, round, occurrence).
///
/// The occurrence index counts earlier calls with the same key inside the
/// same run, so concurrent runs never disturb each other. Entries may use "*"
/// for scenario or agent and may omit occurrence or run; the most specific
/// matching entry wins. A responder callback, when set, handles calls that no
/// entry covers. Anything else throws BackendError(ScriptExhausted).
class ScriptedBackend final : public ChatBackend {
 public:
  struct Entry {
    std::string scenario_id = "*";
    std::string agent = "*";
    std::string round;
    std::optional<int> occurrence;
    std::optional<int> run_index;
    std::string text;
  };
  using Responder =
      std::function<std::optional<std::string>(std::span<const ChatMessage>, const CallContext&, int occurrence)>;

  explicit ScriptedBackend(BackendConfig cfg = {});

  /// Appends a response for the next unscripted occurrence of the key.
  void queue(std::string scenario_id, std::string agent, std::string round, std::string text);
  void add(Entry e);
  void set_responder(Responder r);

  static std::shared_ptr<ScriptedBackend> from_file(const std::filesystem::path& path, BackendConfig cfg = {});
  static std::shared_ptr<ScriptedBackend> from_json(const nlohmann::json& j, BackendConfig cfg = {});

  std::string complete(std::span<const ChatMessage> messages, const CallContext& ctx) override;
  [[nodiscard]] const BackendConfig& config() const override { return cfg_; }
  [[nodiscard]] std::size_t calls() const;

 private:
  BackendConfig cfg_;
  mutable std::mutex mu_;
  std::vector<Entry> entries_;
  std::map<std::tuple<std::string, std::string, std::string>, int> queued_;
  std::map<std::tuple<std::string, int, std::string, std::string, std::string>, int> seen_;
  Responder responder_;
  std::size_t calls_ = 0;
};

/// OpenAI-compatible chat-completions client over HTTP(S).
class RemoteBackend final : public ChatBackend {
 public:
  explicit RemoteBackend(BackendConfig cfg);
  ~RemoteBackend() override;
  RemoteBackend(const RemoteBackend&) = delete;
  RemoteBackend& operator=(const RemoteBackend&) = delete;

  std::string complete(std::span<const ChatMessage> messages, const CallContext& ctx) override;
  [[nodiscard]] const BackendConfig& config() const override { return cfg_; }
  [[nodiscard]] bool deterministic() const override { return false; }

  /// Request body sent for `messages`.
  [[nodiscard]] nlohmann::json request_body(std::span<const ChatMessage> messages) const;

 private:
  struct Impl;
  BackendConfig cfg_;
  std::unique_ptr<Impl> impl_;
};

/// Builds the backend a config describes (replay reads its transcript file).
BackendPtr make_backend(const BackendConfig& cfg);

}  // namespace agentbias
