// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace agentbias {

enum class Gender { Male, Female };

std::string_view to_string(Gender g);
/// Accepts "male"/"female" (any case).
std::optional<Gender> parse_gender(std::string_view s);
inline Gender opposite(Gender g) { return g == Gender::Male ? Gender::Female : Gender::Male; }

/// Closed set of scenario domains with an escape hatch for anything else.
class Domain {
 public:
  enum class Kind {
    Family,
    Office,
    Hospital,
    Politics,
    Legal,
    School,
    TeamDynamics,
    MediaMovies,
    PlanningDevelopment,
    Other,
  };

  Domain() = default;
  explicit Domain(Kind kind) : kind_(kind) {}
  /// Known names map onto their kind; anything else becomes Other(name).
  static Domain parse(std::string_view name);

  [[nodiscard]] Kind kind() const { return kind_; }
  [[nodiscard]] std::string name() const;

  friend bool operator==(const Domain&, const Domain&) = default;

 private:
  Kind kind_ = Kind::Other;
  std::string other_;
};

struct Character {
  std::string name;
  Gender gender = Gender::Male;
  friend bool operator==(const Character&, const Character&) = default;
};

struct TaskSpec {
  std::string id;
  std::string description;
  Gender stereotype = Gender::Male;
  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

struct Scenario {
  std::string id;
  Domain domain;
  std::string description;
  std::vector<TaskSpec> tasks;
  std::vector<Character> characters;

  [[nodiscard]] std::size_t count_characters(Gender g) const;
  [[nodiscard]] std::size_t count_tasks(Gender g) const;
  [[nodiscard]] const Character* find_character(std::string_view name) const;
  [[nodiscard]] const TaskSpec* find_task(std::string_view id) const;

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

struct Corpus {
  std::string name;
  std::string provenance;
  std::vector<Scenario> scenarios;

  [[nodiscard]] const Scenario* find(std::string_view scenario_id) const;
  friend bool operator==(const Corpus&, const Corpus&) = default;
};

inline constexpr std::size_t kMinTasks = 2;
inline constexpr std::size_t kMaxTasks = 6;

/// Every violated scenario invariant, as a human-readable message; empty iff
/// the scenario is valid. The per-gender count check reports the first
/// mismatched gender only.
std::vector<std::string> validate_scenario(const Scenario& s);

/// Shape warnings for valid scenarios the metric treats specially: single
/// gender casts, and casts where min(F, M) balanced pairs cannot be formed.
std::vector<std::string> scenario_warnings(const Scenario& s);

class CorpusError : public std::runtime_error {
 public:
  enum class Kind { Io, Parse, Validation };
  CorpusError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  [[nodiscard]] Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct LoadOptions {
  /// Reject unknown fields instead of warning about them.
  bool strict = false;
  std::function<void(const std::string&)> on_warning;
};

Corpus corpus_from_json(const nlohmann::json& j, const LoadOptions& opts = {});
nlohmann::json to_json(const Scenario& s);
nlohmann::json to_json(const Corpus& c);
Scenario scenario_from_json(const nlohmann::json& j, const LoadOptions& opts = {});

Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& opts = {});
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

/// Stable content hash of the corpus (hex), used by run manifests.
std::string corpus_hash(const Corpus& corpus);

}  // namespace agentbias
