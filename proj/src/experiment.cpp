// SPDX-License-Identifier: Apache-2.0
#include "agentbias/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>
#include <thread>

#include "agentbias/templates.hpp"
#include "agentbias/text.hpp"

namespace agentbias {

using json = nlohmann::json;
namespace fs = std::filesystem;

void ExperimentPlan::validate() const {
  if (cells.empty()) throw std::invalid_argument("plan has no cells");
  if (parallelism < 1) throw std::invalid_argument("parallelism must be >= 1");
  std::set<std::string> seen;
  for (const auto& c : cells) {
    if (c.label.empty()) throw std::invalid_argument("cell label must not be empty");
    if (!seen.insert(c.label).second) throw std::invalid_argument("duplicate cell label \"" + c.label + "\"");
  }
}

namespace {

std::string resolve(const fs::path& base, const std::string& p) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t scenario_seed(std::uint64_t plan_seed, std::uint64_t cell_seed, std::string_view scenario_id) {
  return mix(plan_seed ^ mix(cell_seed) ^ text::fnv1a64(scenario_id));
}

ExperimentPlan plan_from_json(const json& j, const fs::path& base_dir) {
  ExperimentPlan p;
  p.name = j.value("name", std::string("experiment"));
  p.corpus = resolve(base_dir, j.value("corpus", std::string{}));
  p.seed = j.value("seed", std::uint64_t{0});
  p.parallelism = j.value("parallelism", 1);
  if (j.contains("out")) p.out_dir = resolve(base_dir, j.at("out").get<std::string>());
  for (const auto& c : j.at("cells")) {
    ExperimentCell cell;
    cell.label = c.at("label").get<std::string>();
    json backend = c.at("backend");
    if (backend.contains("script")) backend["script"] = resolve(base_dir, backend["script"].get<std::string>());
    if (backend.contains("transcript")) {
      backend["transcript"] = resolve(base_dir, backend["transcript"].get<std::string>());
    }
    cell.backend = backend_config_from_json(backend);
    cell.session = session_config_from_json(c.value("session", json::object()));
    cell.session.cell = cell.label;
    if (c.contains("case_study")) cell.case_study = parse_case_study_variant(c.at("case_study").get<std::string>());
    p.cells.push_back(std::move(cell));
  }
  p.validate();
  return p;
}

ExperimentPlan load_plan(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open plan " + path.string());
  return plan_from_json(json::parse(in), path.parent_path());
}

bool ExperimentResult::has_failures() const {
  return std::any_of(cells.begin(), cells.end(), [](const auto& c) { return !c.failures.empty(); });
}

bool ExperimentResult::all_backend_failures() const {
  return !cells.empty() && std::all_of(cells.begin(), cells.end(), [](const auto& c) {
    return c.backend_failure && c.sessions.size() == static_cast<std::size_t>(std::count_if(
                                    c.sessions.begin(), c.sessions.end(),
                                    [](const auto& s) { return s.successful_runs() == 0; }));
  });
}

namespace {

struct Job {
  std::size_t cell;
  std::size_t scenario;
};

struct JobOutput {
  std::optional<SessionResult> session;
  std::optional<CaseStudyResult> case_study;
  std::vector<TranscriptEvent> transcript;
  std::optional<std::string> failure;
  bool backend_failure = false;
};

JobOutput run_job(const ExperimentPlan& plan, const Corpus& corpus, const Job& job, const BackendPtr& backend) {
  JobOutput out;
  const auto& cell = plan.cells[job.cell];
  const auto& scenario = corpus.scenarios[job.scenario];
  SessionConfig cfg = cell.session;
  cfg.cell = cell.label;
  cfg.seed = scenario_seed(plan.seed, cell.session.seed, scenario.id);
  BackendFactory factory = [backend](const Character&) { return backend; };
  try {
    if (cell.case_study && *cell.case_study != CaseStudyVariant::TaskAssignment) {
      auto r = run_case_study(*cell.case_study, scenario, cfg, factory);
      out.transcript = r.transcript;
      out.case_study = std::move(r);
    } else {
      auto r = run_session(scenario, cfg, factory);
      out.transcript = r.transcript;
      out.session = std::move(r);
    }
  } catch (const SessionError& e) {
    out.failure = e.what();
    out.backend_failure = true;
    out.session = e.partial();
    out.transcript = e.partial().transcript;
  } catch (const BackendError& e) {
    out.failure = "scenario \"" + scenario.id + "\": " + e.what();
    out.backend_failure = true;
  } catch (const std::exception& e) {
    out.failure = "scenario \"" + scenario.id + "\": " + e.what();
  }
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentPlan& plan, const Corpus& corpus, const BackendResolver& resolve) {
  plan.validate();
  ExperimentResult result;
  std::vector<BackendPtr> backends(plan.cells.size());
  result.cells.resize(plan.cells.size());
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < plan.cells.size(); ++c) {
    const auto& cell = plan.cells[c];
    auto& outcome = result.cells[c];
    outcome.cell = cell.label;
    outcome.model = cell.backend.display_label();
    outcome.config = cell.session;
    outcome.config.cell = cell.label;
    outcome.case_study = cell.case_study;
    try {
      backends[c] = resolve ? resolve(cell) : make_backend(cell.backend);
    } catch (const std::exception& e) {
      outcome.failures.push_back(std::string("backend setup failed: ") + e.what());
      outcome.backend_failure = true;
      continue;
    }
    for (std::size_t s = 0; s < corpus.scenarios.size(); ++s) jobs.push_back({c, s});
  }

  std::vector<JobOutput> outputs(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      outputs[i] = run_job(plan, corpus, jobs[i], backends[jobs[i].cell]);
    }
  };
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(plan.parallelism), jobs.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::vector<bool> any_non_backend(plan.cells.size(), false);
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    auto& outcome = result.cells[jobs[i].cell];
    auto& out = outputs[i];
    result.transcript.insert(result.transcript.end(), out.transcript.begin(), out.transcript.end());
    if (out.session) outcome.sessions.push_back(std::move(*out.session));
    if (out.case_study) outcome.case_studies.push_back(std::move(*out.case_study));
    if (out.failure) {
      outcome.failures.push_back(*out.failure);
      if (out.backend_failure) outcome.backend_failure = true;
      else any_non_backend[jobs[i].cell] = true;
    }
  }
  for (std::size_t c = 0; c < result.cells.size(); ++c) {
    auto& outcome = result.cells[c];
    if (any_non_backend[c]) outcome.backend_failure = false;
    if (outcome.case_study && *outcome.case_study != CaseStudyVariant::TaskAssignment) continue;
    if (outcome.config.mitigation.uses_reflection() &&
        outcome.config.reflection_timing() == ReflectionTiming::AfterFirstAssignment) {
      outcome.self_correction = self_correction_rate(outcome.sessions, corpus);
    }
    if (outcome.sessions.empty()) continue;
    CellResults cr{outcome.cell, outcome.model, outcome.config, outcome.sessions};
    auto rows = build_rows(cr, corpus);
    result.rows.insert(result.rows.end(), rows.begin(), rows.end());
  }
  return result;
}

json manifest_json(const ExperimentPlan& plan, const Corpus& corpus) {
  json cells = json::array();
  for (const auto& c : plan.cells) {
    json seeds = json::object();
    for (const auto& s : corpus.scenarios) seeds[s.id] = scenario_seed(plan.seed, c.session.seed, s.id);
    json cell{{"label", c.label},
              {"backend", to_json(c.backend)},
              {"session", to_json(c.session)},
              {"profile_hash", profile_by_name(c.session.profile).hash()},
              {"scenario_seeds", seeds}};
    if (c.case_study) cell["case_study"] = to_string(*c.case_study);
    cells.push_back(std::move(cell));
  }
  std::vector<std::string> ids;
  for (const auto& s : corpus.scenarios) ids.push_back(s.id);
  return {{"schema_version", kReportSchemaVersion},
          {"name", plan.name},
          {"corpus", {{"name", corpus.name}, {"hash", corpus_hash(corpus)}, {"scenarios", ids}}},
          {"seed", plan.seed},
          {"cells", cells}};
}

namespace {

json assignment_json(const Assignment& a) {
  return {{"author", a.author}, {"round", to_string(a.round)}, {"mapping", a.mapping}, {"rationales", a.rationales}};
}

json session_json(const SessionResult& s) {
  json runs = json::array();
  for (const auto& r : s.runs) {
    json assignments = json::array();
    for (const auto& a : r.assignments) assignments.push_back(assignment_json(a));
    json reflections = json::array();
    for (const auto& f : r.reflections) {
      reflections.push_back(
          {{"agent", f.agent}, {"bias_present", f.bias_present}, {"reason", f.reason}, {"revised", f.revised}});
    }
    json run{{"run", r.run_index}, {"order", r.order}, {"assignments", assignments}, {"reflections", reflections}};
    if (r.aborted) run["aborted"] = *r.aborted;
    runs.push_back(std::move(run));
  }
  json exclusions = json::array();
  for (const auto& e : s.exclusions) {
    exclusions.push_back({{"run", e.run_index}, {"agent", e.agent}, {"round", to_string(e.round)},
                          {"reason", e.reason}, {"detail", e.detail}});
  }
  return {{"scenario_id", s.scenario_id}, {"n_agents", s.n_agents}, {"runs", runs}, {"exclusions", exclusions}};
}

}  // namespace

json results_json(const ExperimentResult& r) {
  json cells = json::array();
  for (const auto& c : r.cells) {
    json sessions = json::array();
    for (const auto& s : c.sessions) sessions.push_back(session_json(s));
    json cases = json::array();
    for (const auto& cs : c.case_studies) cases.push_back(to_json(cs));
    json cell{{"cell", c.cell}, {"model", c.model}, {"sessions", sessions}, {"failures", c.failures}};
    if (!cases.empty()) cell["case_studies"] = cases;
    if (c.self_correction) cell["self_correction"] = to_json(*c.self_correction);
    cells.push_back(std::move(cell));
  }
  return {{"schema_version", kReportSchemaVersion}, {"cells", cells}};
}

json summary_json(const ExperimentResult& r) {
  json cells = json::array();
  for (const auto& c : r.cells) {
    std::size_t ok = 0, total = 0;
    for (const auto& s : c.sessions) {
      ok += s.successful_runs();
      total += s.runs.size();
    }
    json cell{{"cell", c.cell},
              {"status", c.failures.empty() ? "ok" : "failed"},
              {"failures", c.failures},
              {"successful_runs", ok},
              {"runs", total}};
    if (!c.case_studies.empty()) {
      std::size_t male = 0, female = 0;
      json self_runs = json::array();
      for (const auto& cs : c.case_studies) {
        male += cs.male_nominations;
        female += cs.female_nominations;
        for (int run : cs.self_nomination_runs) self_runs.push_back({{"scenario_id", cs.scenario_id}, {"run", run}});
      }
      const double n = static_cast<double>(male + female);
      cell["nominations"] = {{"male", male},
                             {"female", female},
                             {"male_fraction", n == 0 ? 0.0 : static_cast<double>(male) / n},
                             {"female_fraction", n == 0 ? 0.0 : static_cast<double>(female) / n},
                             {"self_nomination_runs", self_runs}};
    }
    if (c.self_correction) cell["self_correction"] = to_json(*c.self_correction);
    cells.push_back(std::move(cell));
  }
  return {{"schema_version", kReportSchemaVersion}, {"partial", r.has_failures()}, {"cells", cells}};
}

namespace {

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

json report_json(std::span<const ReportRow> rows, const std::map<std::string, SelfCorrectionStats>& sc) {
  json j = rows_to_json(rows);
  json stats = json::object();
  for (const auto& [cell, s] : sc) stats[cell] = to_json(s);
  j["self_correction"] = stats;
  return j;
}

}  // namespace

void write_bundle(const ExperimentPlan& plan, const Corpus& corpus, const ExperimentResult& r, const fs::path& dir) {
  fs::create_directories(dir);
  std::map<std::string, SelfCorrectionStats> sc;
  for (const auto& c : r.cells) {
    if (c.self_correction) sc[c.cell] = *c.self_correction;
  }
  write_text(dir / "manifest.json", manifest_json(plan, corpus).dump(2) + "\n");
  write_text(dir / "transcripts.jsonl", transcript_to_jsonl(r.transcript));
  write_text(dir / "results.json", results_json(r).dump(2) + "\n");
  write_text(dir / "report.csv", rows_to_csv(r.rows));
  write_text(dir / "report.json", report_json(r.rows, sc).dump(2) + "\n");
  write_text(dir / "plot_long.csv", rows_to_long_csv(r.rows));
  write_text(dir / "summary.json", summary_json(r).dump(2) + "\n");
}

BundleReport report_from_bundle(const fs::path& dir, const Corpus& corpus) {
  BundleReport out;
  {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw BundleError("cannot open " + (dir / "manifest.json").string());
    out.manifest = json::parse(in);
  }
  const auto& mc = out.manifest.at("corpus");
  if (mc.at("hash").get<std::string>() != corpus_hash(corpus)) {
    throw BundleError("corpus hash differs from the bundle manifest");
  }
  const auto events = read_transcript(dir / "transcripts.jsonl");
  for (const auto& cell : out.manifest.at("cells")) {
    if (cell.contains("case_study") && cell.at("case_study").get<std::string>() != "task_assignment") continue;
    CellResults cr;
    cr.cell = cell.at("label").get<std::string>();
    cr.model = backend_config_from_json(cell.at("backend")).display_label();
    cr.config = session_config_from_json(cell.at("session"));
    cr.config.cell = cr.cell;
    std::vector<TranscriptEvent> cell_events;
    for (const auto& e : events) {
      if (e.cell == cr.cell) cell_events.push_back(e);
    }
    if (cell_events.empty()) continue;
    for (const auto& s : corpus.scenarios) {
      if (std::none_of(cell_events.begin(), cell_events.end(), [&](const auto& e) { return e.scenario_id == s.id; })) {
        continue;
      }
      SessionConfig cfg = cr.config;
      cfg.seed = cell.at("scenario_seeds").at(s.id).get<std::uint64_t>();
      cr.sessions.push_back(reconstruct_session(s, cfg, cell_events));
    }
    if (cr.config.mitigation.uses_reflection() &&
        cr.config.reflection_timing() == ReflectionTiming::AfterFirstAssignment) {
      out.self_correction[cr.cell] = self_correction_rate(cr.sessions, corpus);
    }
    auto rows = build_rows(cr, corpus);
    out.rows.insert(out.rows.end(), rows.begin(), rows.end());
  }
  return out;
}

}  // namespace agentbias
