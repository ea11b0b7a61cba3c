// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "agentbias/case_study.hpp"
#include "agentbias/chat.hpp"
#include "agentbias/engine.hpp"
#include "agentbias/mitigation.hpp"
#include "agentbias/report.hpp"
#include "agentbias/scenario.hpp"

namespace agentbias {

struct ExperimentCell {
  std::string label;
  BackendConfig backend;
  SessionConfig session;
  std::optional<CaseStudyVariant> case_study;
};

struct ExperimentPlan {
  std::string name;
  std::filesystem::path corpus;
  std::vector<ExperimentCell> cells;
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  int parallelism = 1;

  /// Throws std::invalid_argument on duplicate or empty cell labels.
  void validate() const;
};

/// Relative corpus/script/transcript paths resolve against `base_dir`.
ExperimentPlan plan_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentPlan load_plan(const std::filesystem::path& path);

/// Seed of one scenario's session: a function of the plan seed, the cell's
/// own session seed and the scenario id only.
std::uint64_t scenario_seed(std::uint64_t plan_seed, std::uint64_t cell_seed, std::string_view scenario_id);

struct CellOutcome {
  std::string cell;
  std::string model;
  SessionConfig config;
  std::optional<CaseStudyVariant> case_study;
  std::vector<SessionResult> sessions;
  std::vector<CaseStudyResult> case_studies;
  std::vector<std::string> failures;
  bool backend_failure = false;  ///< every failure was a backend failure
  std::optional<SelfCorrectionStats> self_correction;
};

struct ExperimentResult {
  std::vector<CellOutcome> cells;
  std::vector<ReportRow> rows;
  std::vector<TranscriptEvent> transcript;

  [[nodiscard]] bool has_failures() const;
  /// Every cell failed outright with backend errors.
  [[nodiscard]] bool all_backend_failures() const;
};

using BackendResolver = std::function<BackendPtr(const ExperimentCell&)>;

/// Runs every (cell, scenario) session, up to plan.parallelism at a time,
/// and merges results in plan order. A failing cell never stops the others.
ExperimentResult run_experiment(const ExperimentPlan& plan, const Corpus& corpus,
                                const BackendResolver& resolve = {});

/// manifest.json content: corpus hash, seeds, cells with backend configs
/// (no credentials) and prompt-profile hashes.
nlohmann::json manifest_json(const ExperimentPlan& plan, const Corpus& corpus);
nlohmann::json results_json(const ExperimentResult& r);
nlohmann::json summary_json(const ExperimentResult& r);

/// Writes manifest.json, transcripts.jsonl, results.json, report.csv,
/// report.json, plot_long.csv and summary.json into `dir`.
void write_bundle(const ExperimentPlan& plan, const Corpus& corpus, const ExperimentResult& r,
                  const std::filesystem::path& dir);

struct BundleReport {
  nlohmann::json manifest;
  std::vector<ReportRow> rows;
  std::map<std::string, SelfCorrectionStats> self_correction;
};

class BundleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Recomputes the report from manifest.json and transcripts.jsonl alone.
/// Throws BundleError when the corpus hash differs from the manifest's.
BundleReport report_from_bundle(const std::filesystem::path& dir, const Corpus& corpus);

}  // namespace agentbias
