// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "agentbias/assignment.hpp"
#include "agentbias/chat.hpp"
#include "agentbias/mitigation_config.hpp"
#include "agentbias/scenario.hpp"
#include "agentbias/transcript.hpp"

namespace agentbias {

enum class Setting { NoInteraction, InteractionNoGoal, InteractionGoal };

std::string_view to_string(Setting s);
Setting parse_setting(std::string_view s);

/// How assignments become metric data: every agent's assignment, or the most
/// common mapping per (scenario, run).
enum class Population { PerAgent, Majority };

std::string_view to_string(Population p);

struct SessionConfig {
  Setting setting = Setting::InteractionNoGoal;
  int n_runs = 5;
  std::uint64_t seed = 0;
  int discussion_rounds = 2;
  /// Unset: the first stereotypically-male task in corpus order.
  std::optional<std::string> goal_task;
  MitigationConfig mitigation;
  int parse_retry_limit = 2;
  std::string profile = "standard";
  /// Broadcast peers' first answers verbatim; false broadcasts the canonical
  /// rendering of the parsed assignment instead.
  bool broadcast_first_verbatim = true;
  Population population = Population::PerAgent;
  std::string cell;  ///< label prefixed to run ids

  void validate() const;
  [[nodiscard]] ReflectionTiming reflection_timing() const;
  /// Rounds that produce assignments under this config, in protocol order.
  [[nodiscard]] std::vector<Round> assignment_rounds() const;
};

nlohmann::json to_json(const SessionConfig& c);
SessionConfig session_config_from_json(const nlohmann::json& j);

inline constexpr std::string_view kModelAuthor = "model";
inline constexpr std::string_view kBackendErrorReason = "backend_error";

struct Exclusion {
  int run_index = 0;
  std::string agent;
  Round round = Round::First;
  std::string reason;  ///< parse diagnosis, "reflection_unparseable" or "backend_error"
  std::string detail;
};

struct ReflectionRecord {
  std::string agent;
  bool bias_present = false;
  std::string reason;
  bool revised = false;
};

struct RunRecord {
  int run_index = 0;
  std::vector<std::string> order;
  std::vector<Assignment> assignments;
  std::vector<ReflectionRecord> reflections;
  std::optional<std::string> aborted;
};

struct SessionResult {
  std::string scenario_id;
  SessionConfig config;
  std::size_t n_agents = 0;
  std::vector<RunRecord> runs;
  std::vector<Exclusion> exclusions;
  std::vector<TranscriptEvent> transcript;

  [[nodiscard]] std::vector<Assignment> assignments(Round r) const;
  [[nodiscard]] std::size_t successful_runs() const;
  [[nodiscard]] std::size_t exclusion_count(Round r) const;
};

/// Thrown when no run of a session succeeds; carries the partial result
/// (aborted runs, exclusions, transcript) for persistence.
class SessionError : public std::runtime_error {
 public:
  SessionError(const std::string& what, SessionResult partial)
      : std::runtime_error(what), partial_(std::make_shared<SessionResult>(std::move(partial))) {}
  [[nodiscard]] const SessionResult& partial() const { return *partial_; }

 private:
  std::shared_ptr<const SessionResult> partial_;
};

/// Resolves the backend handle for each agent.
using BackendFactory = std::function<BackendPtr(const Character&)>;

/// Uniform permutation of 0..n-1, a pure function of (seed, run_index).
std::vector<std::size_t> shuffle_order(std::size_t n, std::uint64_t seed, int run_index);
std::vector<std::string> shuffle_order(const std::vector<std::string>& agents, std::uint64_t seed, int run_index);

/// Task id every agent is privately asked to claim in the goal setting.
std::string goal_task_id(const Scenario& s, const SessionConfig& cfg);

/// Runs the protocol n_runs times: optional private goal turn, first
/// assignment in isolation, broadcast, optional self-reflection, discussion
/// rounds, final assignment. In the no-interaction setting a single "model"
/// agent answers once. Backend errors abort only the run in which they occur;
/// SessionError is thrown when no run succeeds.
SessionResult run_session(const Scenario& scenario, const SessionConfig& cfg, const BackendFactory& backends);
SessionResult run_session(const Scenario& scenario, const SessionConfig& cfg, const BackendPtr& backend);

/// Builds the run id used in transcripts: "<cell>/<scenario>/<run>".
std::string make_run_id(std::string_view cell, std::string_view scenario_id, int run_index);

}  // namespace agentbias
