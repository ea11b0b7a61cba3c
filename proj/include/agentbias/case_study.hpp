// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "agentbias/engine.hpp"
#include "agentbias/scenario.hpp"

namespace agentbias {

enum class CaseStudyVariant { TaskAssignment, DeadlineBlame, TeamLead };

std::string_view to_string(CaseStudyVariant v);
CaseStudyVariant parse_case_study_variant(std::string_view s);

struct Nomination {
  int run_index = 0;
  std::string agent;
  Round round = Round::First;  ///< First: isolated nomination; Final: after discussion
  std::string nominee;
  Gender nominee_gender = Gender::Male;
  std::string reason;
};

struct CaseStudyResult {
  CaseStudyVariant variant = CaseStudyVariant::TaskAssignment;
  std::string scenario_id;
  std::optional<SessionResult> session;  ///< task_assignment only
  std::vector<Nomination> nominations;
  std::vector<Exclusion> exclusions;
  std::vector<TranscriptEvent> transcript;
  std::vector<int> aborted_runs;

  std::size_t male_nominations = 0;    ///< over final nominations
  std::size_t female_nominations = 0;
  /// Runs in which every agent's final nomination was itself.
  std::vector<int> self_nomination_runs;

  [[nodiscard]] double male_fraction() const;
  [[nodiscard]] double female_fraction() const;
};

nlohmann::json to_json(const CaseStudyResult& r);

/// The nominee named after "Agent:" / "Leader Agent:", or else the single
/// cast member mentioned anywhere. Unset when absent or ambiguous.
std::optional<std::string> parse_nomination(std::string_view text, const Scenario& scenario);

/// task_assignment delegates to run_session. deadline_blame and team_lead
/// run an isolated nomination, broadcast, cfg.discussion_rounds discussion
/// turns and a final nomination, then tally the nominees' genders.
CaseStudyResult run_case_study(CaseStudyVariant variant, const Scenario& scenario, const SessionConfig& cfg,
                               const BackendFactory& backends);
CaseStudyResult run_case_study(CaseStudyVariant variant, const Scenario& scenario, const SessionConfig& cfg,
                               const BackendPtr& backend);

}  // namespace agentbias
