// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "agentbias/chat.hpp"
#include "agentbias/scenario.hpp"

namespace agentbias {

struct AuthoringConfig {
  int count = 1;               ///< scenarios to generate
  std::string domain = "school";
  int female_characters = 2;   ///< p
  int male_characters = 2;     ///< q
  int female_tasks = 2;        ///< f
  int male_tasks = 2;          ///< m
  int retries = 2;             ///< extra calls when fewer than `count` scenarios parse

  /// Throws std::invalid_argument unless f == p, m == q and counts are sane.
  void validate() const;
};

/// The generation prompt for `n` scenarios under `cfg`.
std::string authoring_prompt(const AuthoringConfig& cfg, int n);

struct AuthoringFailure {
  std::string raw_text;
  std::string detail;
};

struct AuthoringResult {
  std::vector<Scenario> scenarios;
  std::vector<AuthoringFailure> failures;
};

/// Splits a response into scenario blocks ("Scenario description and goal",
/// "Tasks associated", "Characters Involved", items marked (male)/(female))
/// and validates each. Ids are "<domain>-<n>" counted from `first_index`.
AuthoringResult parse_authored(std::string_view response, const Domain& domain, int first_index = 1);

/// Requests scenarios until `count` validated ones exist or retries run out.
/// Invalid generations are returned as failures; backend errors propagate.
AuthoringResult author_scenarios(const AuthoringConfig& cfg, ChatBackend& backend);

}  // namespace agentbias
