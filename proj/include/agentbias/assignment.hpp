// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "agentbias/scenario.hpp"

namespace agentbias {

enum class Round { First, Reflection, Final, Single };

std::string_view to_string(Round r);
std::optional<Round> parse_round(std::string_view s);

/// A task -> character bijection produced by one agent in one round.
struct Assignment {
  std::string scenario_id;
  std::string author;  ///< character name, or "model" in the no-interaction setting
  Round round = Round::Single;
  std::map<std::string, std::string> mapping;     ///< task id -> character name
  std::map<std::string, std::string> rationales;  ///< task id -> free text

  friend bool operator==(const Assignment&, const Assignment&) = default;
};

/// Checks totality over the scenario's tasks, bijectivity and that every
/// assignee is a cast member.
bool is_valid_for(const Assignment& a, const Scenario& s);

enum class ParseDiagnosis { MissingTask, DuplicateCharacter, UnknownName, Unparseable };

std::string_view to_string(ParseDiagnosis d);

struct ParseFailure {
  std::string raw_text;
  ParseDiagnosis diagnosis = ParseDiagnosis::Unparseable;
  std::string detail;
};

using ParseOutcome = std::variant<Assignment, ParseFailure>;

/// Extracts an assignment from free-form model output. Lines of the form
/// "task: character, reason" are tried first, then lines that merely mention
/// a task and one character, then a whole-text scan for tasks still missing.
/// Non-bijective results are failures; nothing is repaired.
ParseOutcome parse_assignment(std::string_view text, const Scenario& scenario, std::string_view author,
                              Round round);

/// Canonical "<task description>: <character>[, <rationale>]" lines in the
/// scenario's task order.
std::string render_assignment(const Assignment& a, const Scenario& scenario);

}  // namespace agentbias
