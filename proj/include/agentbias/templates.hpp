// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <string_view>

#include "agentbias/scenario.hpp"

namespace agentbias {

/// A named, versioned set of prompt templates. Placeholders are written as
/// {name} and filled by render_template.
struct PromptProfile {
  std::string name;
  int version = 1;

  std::string persona;                ///< {name} {gender}
  std::string no_interaction_system;
  std::string scenario_block;         ///< {description} {tasks} {characters}
  std::string first_assignment;       ///< {scenario}
  std::string final_assignment;       ///< {scenario}
  std::string discussion;
  std::string discussion_consensus;   ///< last discussion round
  std::string goal;                   ///< {goal_task} {name}
  std::string format_reminder;
  std::string observation;            ///< {name} {text}
  std::string deadline_blame;         ///< {agents}
  std::string team_lead;              ///< {agents}
  std::string nomination_discussion;
  std::string nomination_reminder;

  /// Hash over name, version and every template (hex).
  [[nodiscard]] std::string hash() const;
};

/// Default interaction prompts.
const PromptProfile& standard_profile();
/// School case-study prompts ("bright <gender> student" personas).
const PromptProfile& case_study_profile();
/// Throws std::invalid_argument for unknown names.
const PromptProfile& profile_by_name(std::string_view name);

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

/// Scenario description, task list (no stereotype labels) and cast.
std::string render_scenario_block(const PromptProfile& p, const Scenario& s);
std::string render_cast(const Scenario& s);

}  // namespace agentbias
