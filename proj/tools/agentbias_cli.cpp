// SPDX-License-Identifier: Apache-2.0
// agentbias: run task-assignment bias experiments and report on them.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "agentbias/authoring.hpp"
#include "agentbias/experiment.hpp"
#include "agentbias/mitigation.hpp"
#include "agentbias/report.hpp"
#include "agentbias/scenario.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace agentbias;

namespace {

enum Exit { kOk = 0, kValidation = 1, kBackend = 2, kPartial = 3 };

struct Globals {
  std::string corpus;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string backend;
  bool strict = false;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A JSON file, or scripted:FILE, replay:FILE, remote:MODEL@URL.
BackendConfig parse_backend_spec(const std::string& spec) {
  auto starts = [&](std::string_view p) { return spec.rfind(p, 0) == 0; };
  BackendConfig cfg;
  if (starts("scripted:")) {
    cfg.kind = BackendKind::Scripted;
    cfg.script_path = spec.substr(9);
    cfg.model = "scripted";
  } else if (starts("replay:")) {
    cfg.kind = BackendKind::Replay;
    cfg.transcript_path = spec.substr(7);
    cfg.model = "replay";
  } else if (starts("remote:")) {
    auto rest = spec.substr(7);
    auto at = rest.find('@');
    if (at == std::string::npos) throw UsageError("remote backend spec must be remote:MODEL@URL");
    cfg.kind = BackendKind::Remote;
    cfg.model = rest.substr(0, at);
    cfg.endpoint = rest.substr(at + 1);
  } else {
    std::ifstream in(spec);
    if (!in) throw UsageError("cannot open backend config " + spec);
    return backend_config_from_json(json::parse(in));
  }
  cfg.validate();
  return cfg;
}

Corpus corpus_or_throw(const Globals& g) {
  if (g.corpus.empty()) throw UsageError("--corpus is required");
  LoadOptions opts;
  opts.strict = g.strict;
  opts.on_warning = [](const std::string& w) { std::cerr << "warning: " << w << "\n"; };
  return load_corpus(g.corpus, opts);
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

int cmd_validate(const Globals& g) {
  if (g.corpus.empty()) throw UsageError("--corpus is required");
  LoadOptions opts;
  opts.strict = g.strict;
  opts.on_warning = [](const std::string& w) { std::cout << "warning: " << w << "\n"; };
  auto corpus = load_corpus(g.corpus, opts);
  for (const auto& s : corpus.scenarios) {
    for (const auto& w : scenario_warnings(s)) std::cout << "warning: " << s.id << ": " << w << "\n";
  }
  std::cout << "ok: " << corpus.scenarios.size() << " scenarios, hash " << corpus_hash(corpus) << "\n";
  return kOk;
}

struct RunFlags {
  std::string setting = "interaction_no_goal";
  int runs = 5;
  std::string mitigation = "none";
  std::string profile = "standard";
  std::string label;
  std::string case_study;
  int parallel = 0;
  int discussion_rounds = 2;
};

int cmd_run(const Globals& g, const RunFlags& f) {
  ExperimentPlan plan;
  if (!g.config.empty()) {
    plan = load_plan(g.config);
  } else {
    if (g.backend.empty()) throw UsageError("run needs --config or --backend");
    ExperimentCell cell;
    cell.backend = parse_backend_spec(g.backend);
    cell.session.setting = parse_setting(f.setting);
    cell.session.n_runs = f.runs;
    cell.session.discussion_rounds = f.discussion_rounds;
    cell.session.profile = f.profile;
    cell.session.mitigation = MitigationConfig::for_strategy(parse_mitigation_strategy(f.mitigation));
    cell.session.validate();
    if (!f.case_study.empty()) cell.case_study = parse_case_study_variant(f.case_study);
    cell.label = f.label.empty() ? cell.backend.display_label() + "-" + f.setting : f.label;
    cell.session.cell = cell.label;
    plan.name = cell.label;
    plan.cells.push_back(std::move(cell));
  }
  if (!g.corpus.empty()) plan.corpus = g.corpus;
  if (g.seed) plan.seed = *g.seed;
  if (!g.out.empty()) plan.out_dir = g.out;
  if (f.parallel > 0) plan.parallelism = f.parallel;
  if (!g.backend.empty() && !g.config.empty()) {
    auto b = parse_backend_spec(g.backend);
    for (auto& c : plan.cells) c.backend = b;
  }
  if (plan.corpus.empty()) throw UsageError("no corpus given (--corpus or plan \"corpus\")");
  if (plan.out_dir.empty()) throw UsageError("no output directory given (--out or plan \"out\")");
  plan.validate();

  Globals cg = g;
  cg.corpus = plan.corpus.string();
  auto corpus = corpus_or_throw(cg);
  auto result = run_experiment(plan, corpus);
  write_bundle(plan, corpus, result, plan.out_dir);

  std::cout << rows_to_csv(result.rows);
  for (const auto& c : result.cells) {
    for (const auto& fail : c.failures) std::cerr << "cell " << c.cell << ": " << fail << "\n";
  }
  std::cerr << "bundle written to " << plan.out_dir.string() << "\n";
  if (result.all_backend_failures()) return kBackend;
  return result.has_failures() ? kPartial : kOk;
}

int cmd_report(const Globals& g, const std::string& bundle, const std::string& format) {
  if (bundle.empty()) throw UsageError("report needs a bundle directory");
  auto corpus = corpus_or_throw(g);
  auto rep = report_from_bundle(bundle, corpus);
  std::string text;
  if (format == "csv") {
    text = rows_to_csv(rep.rows);
  } else {
    json j = rows_to_json(rep.rows);
    json sc = json::object();
    for (const auto& [cell, s] : rep.self_correction) sc[cell] = to_json(s);
    j["self_correction"] = sc;
    text = j.dump(2) + "\n";
  }
  if (g.out.empty()) std::cout << text;
  else write_file(g.out, text);
  return kOk;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return json::parse(in);
}

int cmd_compare(const Globals& g, const std::string& baseline, const std::string& mitigated) {
  auto mb = read_json(fs::path(baseline) / "manifest.json");
  auto mm = read_json(fs::path(mitigated) / "manifest.json");
  if (mb.at("corpus").at("hash") != mm.at("corpus").at("hash")) {
    throw LineageError("bundles were run on different corpora");
  }
  if (mb.at("seed") != mm.at("seed")) throw LineageError("bundles were run with different seeds");
  auto rb = read_json(fs::path(baseline) / "report.json");
  auto rm = read_json(fs::path(mitigated) / "report.json");
  std::map<std::string, SelfCorrectionStats> sc;
  const json stats = rm.value("self_correction", json::object());
  for (const auto& [cell, s] : stats.items()) {
    sc[cell] = self_correction_from_json(s);
  }
  auto b_rows = rows_from_json(rb);
  auto m_rows = rows_from_json(rm);
  auto deltas = compare_rows(b_rows, m_rows, sc);
  if (g.out.empty()) {
    std::cout << deltas_to_csv(deltas);
  } else {
    fs::create_directories(g.out);
    write_file(fs::path(g.out) / "compare.csv", deltas_to_csv(deltas));
    write_file(fs::path(g.out) / "compare.json", deltas_to_json(deltas).dump(2) + "\n");
  }
  return kOk;
}

int cmd_export(const Globals& g, const std::string& variant, const std::string& reasons) {
  if (g.out.empty()) throw UsageError("export-finetune needs --out FILE");
  auto corpus = corpus_or_throw(g);
  FinetuneVariant v;
  if (variant == "full") v = FinetuneVariant::Full;
  else if (variant == "half") v = FinetuneVariant::Half;
  else throw UsageError("--variant must be full or half");
  std::map<std::string, ReasonOverride> overrides;
  if (!reasons.empty()) overrides = load_reason_overrides(reasons);
  auto records = build_finetune_corpus(corpus, v, g.seed.value_or(0), overrides);
  export_finetune(records, g.out);
  auto st = finetune_length_stats(records);
  std::printf("%zu records written to %s\nmean words: user %.2f, assistant %.2f\n", records.size(), g.out.c_str(),
              st.mean_user_words, st.mean_assistant_words);
  return kOk;
}

int cmd_eval(const Globals& g, const std::string& records_path) {
  if (g.backend.empty()) throw UsageError("eval-identification needs --backend");
  if (records_path.empty()) throw UsageError("eval-identification needs --records FILE");
  auto records = load_finetune(records_path);
  auto backend = make_backend(parse_backend_spec(g.backend));
  auto res = evaluate_bias_identification(records, *backend);
  json j{{"accuracy", res.accuracy},
         {"n_correct", res.n_correct},
         {"n_evaluated", res.n_evaluated},
         {"n_excluded", res.n_excluded},
         {"errors", res.errors}};
  if (g.out.empty()) std::cout << j.dump(2) << "\n";
  else write_file(g.out, j.dump(2) + "\n");
  std::printf("accuracy %.4f over %zu records (%zu excluded)\n", res.accuracy, res.n_evaluated, res.n_excluded);
  if (res.n_evaluated == 0) return res.n_excluded > 0 ? kBackend : kValidation;
  return res.n_excluded > 0 ? kPartial : kOk;
}

int cmd_author(const Globals& g, const AuthoringConfig& cfg) {
  if (g.backend.empty()) throw UsageError("author needs --backend");
  auto backend = make_backend(parse_backend_spec(g.backend));
  auto res = author_scenarios(cfg, *backend);
  for (const auto& f : res.failures) std::cerr << "rejected generation: " << f.detail << "\n";
  Corpus corpus;
  corpus.name = "authored-" + cfg.domain;
  corpus.provenance = "generated with backend " + backend->config().display_label();
  corpus.scenarios = res.scenarios;
  if (g.out.empty()) std::cout << to_json(corpus).dump(2) << "\n";
  else save_corpus(corpus, g.out);
  std::cerr << res.scenarios.size() << " of " << cfg.count << " scenarios validated\n";
  if (res.scenarios.empty()) return kValidation;
  return static_cast<int>(res.scenarios.size()) < cfg.count ? kPartial : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent implicit gender bias simulator"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--corpus", g.corpus, "Scenario corpus (JSON)");
  app.add_option("--config", g.config, "Experiment plan (JSON)");
  app.add_option("--seed", g.seed, "Seed override");
  app.add_option("--out", g.out, "Output directory or file");
  app.add_option("--backend", g.backend, "Backend config file, scripted:FILE, replay:FILE or remote:MODEL@URL");
  app.add_flag("--strict", g.strict, "Reject unknown corpus fields");

  auto* validate = app.add_subcommand("validate-corpus", "Load and validate a corpus");

  RunFlags rf;
  auto* run = app.add_subcommand("run", "Run an experiment plan and write a result bundle");
  run->add_option("--setting", rf.setting, "no_interaction, interaction_no_goal or interaction_goal");
  run->add_option("--runs", rf.runs, "Runs per scenario");
  run->add_option("--discussion-rounds", rf.discussion_rounds, "Discussion rounds");
  run->add_option("--mitigation", rf.mitigation, "Mitigation strategy");
  run->add_option("--profile", rf.profile, "Prompt profile (standard, case_study)");
  run->add_option("--label", rf.label, "Cell label");
  run->add_option("--case-study", rf.case_study, "task_assignment, deadline_blame or team_lead");
  run->add_option("--parallel", rf.parallel, "Concurrent sessions");

  std::string bundle, format = "csv";
  auto* report = app.add_subcommand("report", "Recompute a report from a bundle's transcripts");
  report->add_option("bundle", bundle, "Bundle directory")->required();
  report->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

  std::string baseline, mitigated;
  auto* compare = app.add_subcommand("compare", "Compare a mitigated bundle against a baseline");
  compare->add_option("baseline", baseline, "Baseline bundle")->required();
  compare->add_option("mitigated", mitigated, "Mitigated bundle")->required();

  std::string variant = "full", reasons;
  auto* exportc = app.add_subcommand("export-finetune", "Export a fine-tuning corpus as chat JSONL");
  exportc->add_option("--variant", variant, "full or half");
  exportc->add_option("--reasons", reasons, "Curated reasons per scenario id (JSON)");

  std::string records;
  auto* eval = app.add_subcommand("eval-identification", "Bias-identification accuracy on fine-tune records");
  eval->add_option("--records", records, "Records (chat JSONL)")->required();

  AuthoringConfig ac;
  auto* author = app.add_subcommand("author", "Generate scenarios with a backend");
  author->add_option("--count", ac.count, "Scenarios to generate");
  author->add_option("--domain", ac.domain, "Domain");
  author->add_option("-p,--female-characters", ac.female_characters);
  author->add_option("-q,--male-characters", ac.male_characters);
  author->add_option("-f,--female-tasks", ac.female_tasks);
  author->add_option("-m,--male-tasks", ac.male_tasks);
  author->add_option("--retries", ac.retries);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) return cmd_validate(g);
    if (*run) return cmd_run(g, rf);
    if (*report) return cmd_report(g, bundle, format);
    if (*compare) return cmd_compare(g, baseline, mitigated);
    if (*exportc) return cmd_export(g, variant, reasons);
    if (*eval) return cmd_eval(g, records);
    if (*author) return cmd_author(g, ac);
  } catch (const BackendError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return kBackend;
  } catch (const CorpusError& e) {
    std::cerr << "corpus error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  }
  return kOk;
}
