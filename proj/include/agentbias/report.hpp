// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "agentbias/engine.hpp"
#include "agentbias/mitigation.hpp"
#include "agentbias/rational.hpp"
#include "agentbias/scenario.hpp"

namespace agentbias {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr std::string_view kAllDomains = "all";

/// Response phase of a report row. Reflection rows appear only when a
/// reflection round ran after the first assignment.
enum class Phase { First, Reflection, Last, Single };

std::string_view to_string(Phase p);
Phase parse_phase(std::string_view s);
/// Phases reported for a session config, in protocol order.
std::vector<Phase> phases_for(const SessionConfig& cfg);
Round round_for(Phase p);

/// Everything one experiment cell produced.
struct CellResults {
  std::string cell;
  std::string model;
  SessionConfig config;
  std::vector<SessionResult> sessions;
};

struct ReportRow {
  std::string cell;
  std::string model;
  std::string setting;
  std::string mitigation;
  Phase phase = Phase::First;
  std::string domain{kAllDomains};
  Rational neutral;
  Rational stereotypical;
  Rational anti_stereotypical;
  Rational bias_score;
  std::vector<Rational> per_run_scores;
  std::size_t n_runs = 0;          ///< runs with at least one classified assignment
  std::size_t n_assignments = 0;   ///< classified assignments over all runs
  std::size_t exclusions = 0;      ///< excluded agent-round data for this phase
  std::size_t ties = 0;            ///< leftover ties, labelled anti-stereotypical

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

/// Metric data points for one (session, run, round): every agent's
/// assignment, or the most common mapping when the population is Majority
/// (ties go to the agent who spoke first).
std::vector<Assignment> population(const RunRecord& run, Round round, Population p);

/// Rows for the overall corpus and each domain present, per phase. Per run
/// index, buckets are pooled over the cell's scenarios; fractions and score
/// are means of the per-run values. Runs with no classified data are
/// skipped; a phase/domain with no data at all yields no row.
std::vector<ReportRow> build_rows(const CellResults& cell, const Corpus& corpus);

/// Four decimals, with negative zero printed as 0.0000.
std::string format_fixed4(const Rational& r);

/// Stable column order; one header line.
std::string rows_to_csv(std::span<const ReportRow> rows);
/// Plot-ready long format: one line per (row, metric).
std::string rows_to_long_csv(std::span<const ReportRow> rows);
nlohmann::json rows_to_json(std::span<const ReportRow> rows);
std::vector<ReportRow> rows_from_json(const nlohmann::json& j);

/// "num/den" text form used in JSON reports.
std::string to_exact(const Rational& r);
Rational rational_from_exact(std::string_view s);

// ---------------------------------------------------------------------------
// Mitigation comparison

enum class DeltaLabel { Reduced, Increased, Unchanged };
std::string_view to_string(DeltaLabel l);

struct DeltaRow {
  std::string baseline_cell;
  std::string mitigated_cell;
  std::string model;
  std::string setting;
  std::string mitigation;
  Phase phase = Phase::First;
  Rational baseline_score;
  Rational mitigated_score;
  Rational delta;
  DeltaLabel label = DeltaLabel::Unchanged;
  bool anti_overshoot = false;  ///< mitigated score below zero
  std::optional<SelfCorrectionStats> self_correction;
};

class LineageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pairs each mitigated cell with the baseline cell of the same model and
/// setting and reports the overall-domain score change per shared phase.
/// `self_correction` maps mitigated cell labels to their stats.
std::vector<DeltaRow> compare_rows(std::span<const ReportRow> baseline, std::span<const ReportRow> mitigated,
                                   const std::map<std::string, SelfCorrectionStats>& self_correction = {});

std::string deltas_to_csv(std::span<const DeltaRow> deltas);
nlohmann::json deltas_to_json(std::span<const DeltaRow> deltas);
nlohmann::json to_json(const SelfCorrectionStats& s);
SelfCorrectionStats self_correction_from_json(const nlohmann::json& j);

/// Recovers session results from recorded events alone: re-parses every
/// assignment, reflection and abort marker exactly as the engine did.
SessionResult reconstruct_session(const Scenario& scenario, const SessionConfig& cfg,
                                  std::span<const TranscriptEvent> events);

}  // namespace agentbias
