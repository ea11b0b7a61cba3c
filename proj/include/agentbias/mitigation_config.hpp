// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace agentbias {

enum class MitigationStrategy {
  None,
  SelfReflection,
  SelfReflectionIce,
  FinetunedBackend,
  EnsembleFtSr,
  EnsembleFtSrIce,
};

std::string_view to_string(MitigationStrategy s);
MitigationStrategy parse_mitigation_strategy(std::string_view s);

enum class ReflectionTiming { AfterFirstAssignment, BeforeFirstResponse };

std::string_view to_string(ReflectionTiming t);

enum class IceLabel { Biased, Unbiased };

struct ICEExample {
  std::string narrative;
  IceLabel label = IceLabel::Biased;
  std::string reason;
  friend bool operator==(const ICEExample&, const ICEExample&) = default;
};

inline constexpr std::size_t kIcePerLabel = 3;

/// The six curated examples shipped by default: three assignments that
/// follow gender stereotypes, three skill-based ones.
const std::vector<ICEExample>& default_ice_examples();
/// JSON list of {"narrative", "label": "biased"|"unbiased", "reason"}.
std::vector<ICEExample> load_ice_examples(const std::filesystem::path& path);
std::vector<ICEExample> ice_examples_from_json(const nlohmann::json& j);
nlohmann::json to_json(const std::vector<ICEExample>& examples);

struct MitigationConfig {
  MitigationStrategy strategy = MitigationStrategy::None;
  std::vector<ICEExample> ice_examples;
  /// Unset: after the first assignment in interaction settings, before the
  /// first response in the no-interaction setting.
  std::optional<ReflectionTiming> reflection_timing;

  [[nodiscard]] bool uses_reflection() const;
  [[nodiscard]] bool uses_ice() const;
  /// ICE strategies need exactly three biased and three unbiased examples.
  void validate() const;

  /// Config for `strategy` with the default ICE set filled in when needed.
  static MitigationConfig for_strategy(MitigationStrategy strategy);
};

nlohmann::json to_json(const MitigationConfig& m);
MitigationConfig mitigation_config_from_json(const nlohmann::json& j);

}  // namespace agentbias
