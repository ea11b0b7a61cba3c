// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "agentbias/assignment.hpp"
#include "agentbias/chat.hpp"
#include "agentbias/engine.hpp"
#include "agentbias/mitigation_config.hpp"
#include "agentbias/scenario.hpp"

namespace agentbias {

/// Definition of implicit gender bias in task assignment, shared by the
/// reflection prompts.
std::string_view implicit_bias_definition();

/// Self-reflection prompt: the definition, the agent's own first assignment,
/// the ICE blocks when configured, and the answer format (verdict line plus
/// a re-assignment when bias is present). Throws std::invalid_argument when
/// the strategy does not reflect or ICE examples are missing.
std::string build_reflection_prompt(const Assignment& first, const Scenario& scenario, const MitigationConfig& cfg);

/// Guidance prepended to the first prompt when reflecting before the first
/// response (no-interaction setting).
std::string build_reflection_preamble(const MitigationConfig& cfg);

/// Number of "Example N (biased|unbiased):" blocks in a prompt, per label.
std::pair<std::size_t, std::size_t> count_ice_blocks(std::string_view prompt);

struct Reflection {
  bool bias_present = false;
  std::string reason;
  std::optional<Assignment> revised;
};

struct ReflectionFailure {
  std::string raw_text;
  std::string detail;
};

using ReflectionOutcome = std::variant<Reflection, ReflectionFailure>;

/// Reads "Implicit Bias in the previous assignment: Present|Absent" plus the
/// reason, and a revised assignment when one parses from the rest.
ReflectionOutcome parse_reflection(std::string_view text, const Scenario& scenario, std::string_view author);

// ---------------------------------------------------------------------------
// Fine-tune corpus

enum class FinetuneVariant { Full, Half };

struct FinetuneRecord {
  std::string scenario_id;
  std::string user_content;
  std::string assistant_content;
  IceLabel variant = IceLabel::Biased;
  std::optional<Assignment> assignment;  ///< embedded assignment, when built here
};

/// Curated replacement reasons per scenario id.
struct ReasonOverride {
  std::string biased;
  std::string unbiased;
};

class FinetuneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stereotype-following bijection: every task to a character of its
/// stereotype gender, in corpus order.
Assignment stereotypical_assignment(const Scenario& s);

/// First Neutral bijection in lexicographic order over a seeded shuffle of
/// the cast. Throws FinetuneError naming the scenario when none exists.
Assignment neutral_assignment(const Scenario& s, std::uint64_t seed);

/// Full: one biased and one unbiased record per scenario. Half: unbiased only.
std::vector<FinetuneRecord> build_finetune_corpus(const Corpus& corpus, FinetuneVariant variant,
                                                  std::uint64_t seed = 0,
                                                  const std::map<std::string, ReasonOverride>& reasons = {});

/// Chat JSONL: {"messages":[{"role":"user",...},{"role":"assistant",...}]}.
void export_finetune(std::span<const FinetuneRecord> records, const std::filesystem::path& path);
std::string finetune_to_jsonl(std::span<const FinetuneRecord> records);
/// Recovers user/assistant content and the variant (from the verdict line).
std::vector<FinetuneRecord> load_finetune(const std::filesystem::path& path);
std::map<std::string, ReasonOverride> load_reason_overrides(const std::filesystem::path& path);

struct LengthStats {
  double mean_user_words = 0;
  double mean_assistant_words = 0;
};

/// Whitespace word counts as a token-length proxy.
LengthStats finetune_length_stats(std::span<const FinetuneRecord> records);

// ---------------------------------------------------------------------------
// Measurement

struct SelfCorrectionStats {
  std::size_t n_biased_first = 0;
  std::size_t n_reduced = 0;
  double rate = 0;
  bool empty_denominator = true;
};

/// Over agents whose first assignment is Stereotypical, the fraction whose
/// post-reflection assignment is Neutral or AntiStereotypical.
SelfCorrectionStats self_correction_rate(std::span<const SessionResult> results, const Corpus& corpus);
SelfCorrectionStats self_correction_rate(const SessionResult& result, const Scenario& scenario);

struct IdentificationResult {
  double accuracy = 0;
  std::size_t n_correct = 0;
  std::size_t n_evaluated = 0;
  std::size_t n_excluded = 0;
  std::vector<std::string> errors;
};

std::string identification_prompt(const FinetuneRecord& r);
/// "yes"/"present" -> true, "no"/"absent" -> false, whichever comes first.
std::optional<bool> parse_identification(std::string_view text);

/// Asks the backend to judge Present/Absent per record; backend errors and
/// unreadable answers are excluded and counted.
IdentificationResult evaluate_bias_identification(std::span<const FinetuneRecord> records, ChatBackend& backend);

}  // namespace agentbias
