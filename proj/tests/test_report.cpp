// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "agentbias/bias_metric.hpp"
#include "agentbias/experiment.hpp"
#include "agentbias/report.hpp"
#include "fixtures.hpp"

using namespace agentbias;

namespace {

const std::vector<std::string> kStereo{"Brian", "Jake", "Emma", "Sarah"};
const std::vector<std::string> kNeutral{"Brian", "Emma", "Jake", "Sarah"};
const std::vector<std::string> kAnti{"Emma", "Sarah", "Brian", "Jake"};

Corpus corpus_of(std::vector<Scenario> scenarios) {
  Corpus c;
  c.name = "test";
  c.scenarios = std::move(scenarios);
  return c;
}

RunRecord run_of(const Scenario& s, int index, Round round, const std::vector<std::vector<std::string>>& answers) {
  RunRecord r;
  r.run_index = index;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    auto author = i < s.characters.size() ? s.characters[i].name : "model";
    r.order.push_back(author);
    r.assignments.push_back(fixtures::make_assignment(s, answers[i], author, round));
  }
  return r;
}

CellResults single_cell(const Scenario& s, std::vector<RunRecord> runs) {
  CellResults c;
  c.cell = "c";
  c.model = "m";
  c.config.setting = Setting::NoInteraction;
  SessionResult session;
  session.scenario_id = s.id;
  session.n_agents = 1;
  session.runs = std::move(runs);
  c.sessions.push_back(session);
  return c;
}

ReportRow score_row(std::string cell, std::string mitigation, Rational score) {
  ReportRow r;
  r.cell = std::move(cell);
  r.model = "gpt";
  r.setting = "interaction_no_goal";
  r.mitigation = std::move(mitigation);
  r.phase = Phase::Last;
  r.bias_score = score;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("phases follow the protocol") {
  SessionConfig c;
  c.setting = Setting::NoInteraction;
  CHECK(phases_for(c) == std::vector<Phase>{Phase::Single});
  c.setting = Setting::InteractionGoal;
  CHECK(phases_for(c) == std::vector<Phase>{Phase::First, Phase::Last});
  c.mitigation = MitigationConfig::for_strategy(MitigationStrategy::SelfReflection);
  CHECK(phases_for(c) == std::vector<Phase>{Phase::First, Phase::Reflection, Phase::Last});
  c.setting = Setting::NoInteraction;
  CHECK(phases_for(c) == std::vector<Phase>{Phase::Single});
  CHECK(parse_phase("last") == Phase::Last);
  CHECK_THROWS_AS(parse_phase("middle"), std::invalid_argument);
}

TEST_CASE("one-row report") {
  auto s = fixtures::science_project();
  auto cell = single_cell(s, {run_of(s, 0, Round::Single, {kStereo}), run_of(s, 1, Round::Single, {kNeutral})});
  auto rows = build_rows(cell, corpus_of({s}));
  REQUIRE(rows.size() == 2);  // all + school
  CHECK(rows[0].domain == "all");
  CHECK(rows[1].domain == "school");
  CHECK(rows[0].neutral == Rational(1, 2));
  CHECK(rows[0].stereotypical == Rational(1, 2));
  CHECK(rows[0].bias_score == Rational(1, 2));
  CHECK(rows[0].per_run_scores == std::vector<Rational>{1, 0});
  CHECK(rows[0].n_runs == 2);

  std::vector<ReportRow> one{rows[0]};
  auto csv = rows_to_csv(one);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  CHECK(csv ==
        "cell,model,setting,mitigation,phase,domain,neutral,stereotypical,anti_stereotypical,bias_score,n_runs,"
        "n_assignments,exclusions,ties\n"
        "c,m,no_interaction,none,single,all,0.5000,0.5000,0.0000,0.5000,2,2,0,0\n");
}

TEST_CASE("run fractions are averaged per run") {
  auto s = fixtures::science_project();
  // Run 0 has three data points, run 1 only one: per-run means differ from pooled means.
  auto cell = single_cell(s, {run_of(s, 0, Round::Single, {kStereo, kStereo, kAnti}),
                              run_of(s, 1, Round::Single, {kNeutral})});
  auto row = build_rows(cell, corpus_of({s})).front();
  CHECK(row.stereotypical == Rational(1, 3));
  CHECK(row.anti_stereotypical == Rational(1, 6));
  CHECK(row.neutral == Rational(1, 2));
  CHECK(row.bias_score == Rational(1, 6));
  CHECK(row.bias_score == row.stereotypical - row.anti_stereotypical);
}

TEST_CASE("aborted and empty runs are skipped") {
  auto s = fixtures::science_project();
  auto aborted = run_of(s, 1, Round::Single, {kAnti});
  aborted.aborted = "boom";
  RunRecord empty;
  empty.run_index = 2;
  auto cell = single_cell(s, {run_of(s, 0, Round::Single, {kStereo}), aborted, empty});
  auto row = build_rows(cell, corpus_of({s})).front();
  CHECK(row.n_runs == 1);
  CHECK(row.bias_score == Rational(1));
}

TEST_CASE("domain rows pool only their scenarios") {
  auto school = fixtures::science_project();
  auto office = fixtures::three_task();
  CellResults cell = single_cell(school, {run_of(school, 0, Round::Single, {kStereo})});
  SessionResult second;
  second.scenario_id = office.id;
  second.runs.push_back(run_of(office, 0, Round::Single, {{"f1", "m1", "m2"}}));
  cell.sessions.push_back(second);
  auto rows = build_rows(cell, corpus_of({school, office}));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].domain == "all");
  CHECK(rows[0].n_assignments == 2);
  CHECK(rows[0].bias_score == Rational(1, 2));
  CHECK(rows[1].domain == "school");
  CHECK(rows[1].bias_score == Rational(1));
  CHECK(rows[2].domain == "office");
  CHECK(rows[2].bias_score == Rational(0));
}

TEST_CASE("majority population") {
  auto s = fixtures::science_project();
  auto run = run_of(s, 0, Round::Final, {kNeutral, kStereo, kStereo, kNeutral});  // Brian, Emma, Sarah, Jake
  run.order = {"Jake", "Brian", "Emma", "Sarah"};  // Jake (balanced) speaks first
  auto m = population(run, Round::Final, Population::Majority);
  REQUIRE(m.size() == 1);
  CHECK(m[0].author == "majority");
  CHECK(classify(m[0], s).label == BiasLabel::Neutral);

  auto three = run_of(s, 0, Round::Final, {kNeutral, kStereo, kStereo, kAnti});
  CHECK(classify(population(three, Round::Final, Population::Majority)[0], s).label == BiasLabel::Stereotypical);
  CHECK(population(three, Round::Final, Population::PerAgent).size() == 4);
  CHECK(population(three, Round::First, Population::Majority).empty());
}

TEST_CASE("number formatting") {
  CHECK(format_fixed4(Rational(5214, 10000)) == "0.5214");
  CHECK(format_fixed4(Rational(-1, 100000)) == "0.0000");
  CHECK(format_fixed4(Rational(-1)) == "-1.0000");
  CHECK(format_fixed4(Rational(2, 3)) == "0.6667");
  CHECK(rational_from_exact(to_exact(Rational(-7, 12))) == Rational(-7, 12));
  CHECK(rational_from_exact("3") == Rational(3));
  CHECK_THROWS_AS(rational_from_exact("1/x"), std::invalid_argument);
}

TEST_CASE("report json round-trip") {
  auto s = fixtures::science_project();
  auto cell = single_cell(s, {run_of(s, 0, Round::Single, {kStereo, kAnti, kNeutral}),
                              run_of(s, 1, Round::Single, {kNeutral})});
  auto rows = build_rows(cell, corpus_of({s}));
  auto j = rows_to_json(rows);
  CHECK(j["schema_version"] == kReportSchemaVersion);
  CHECK(rows_from_json(j) == rows);
  auto long_csv = rows_to_long_csv(rows);
  CHECK(long_csv.rfind("cell,", 0) == 0);
  CHECK(long_csv.find(",bias_score,") != std::string::npos);
}

TEST_CASE("compare identical reports") {
  std::vector<ReportRow> base{score_row("b", "none", Rational(57, 100))};
  auto deltas = compare_rows(base, base);
  REQUIRE(deltas.size() == 1);
  CHECK(deltas[0].label == DeltaLabel::Unchanged);
  CHECK(deltas[0].delta == Rational(0));
}

TEST_CASE("compare reports reduction and overshoot") {
  std::vector<ReportRow> base{score_row("b", "none", Rational(57, 100))};
  std::vector<ReportRow> mit{score_row("m", "self_reflection", Rational(1, 100))};
  SelfCorrectionStats sc{4, 2, 0.5, false};
  auto deltas = compare_rows(base, mit, {{"m", sc}});
  REQUIRE(deltas.size() == 1);
  CHECK(deltas[0].delta == Rational(-56, 100));
  CHECK(format_fixed4(deltas[0].delta) == "-0.5600");
  CHECK(deltas[0].label == DeltaLabel::Reduced);
  CHECK_FALSE(deltas[0].anti_overshoot);
  REQUIRE(deltas[0].self_correction.has_value());
  auto csv = deltas_to_csv(deltas);
  CHECK(csv.find("b,m,gpt,interaction_no_goal,self_reflection,last,0.5700,0.0100,-0.5600,reduced,false,0.5000") !=
        std::string::npos);

  std::vector<ReportRow> over{score_row("m", "self_reflection", Rational(-2, 10))};
  auto d2 = compare_rows(base, over);
  CHECK(d2[0].anti_overshoot);
  CHECK(d2[0].label == DeltaLabel::Reduced);

  std::vector<ReportRow> worse{score_row("m", "self_reflection", Rational(3, 4))};
  CHECK(compare_rows(base, worse)[0].label == DeltaLabel::Increased);
  CHECK(deltas_to_json(deltas)["deltas"].size() == 1);
  CHECK(self_correction_from_json(to_json(sc)).n_reduced == 2);
}

TEST_CASE("compare prefers an unmitigated baseline and skips unmatched rows") {
  std::vector<ReportRow> base{score_row("x", "self_reflection", Rational(1, 2)), score_row("b", "none", Rational(1))};
  std::vector<ReportRow> mit{score_row("m", "self_reflection", Rational(0))};
  auto d = compare_rows(base, mit);
  REQUIRE(d.size() == 1);
  CHECK(d[0].baseline_cell == "b");

  auto other = score_row("m", "self_reflection", Rational(0));
  other.model = "else";
  std::vector<ReportRow> unmatched{other};
  CHECK(compare_rows(base, unmatched).empty());
}

TEST_CASE("reconstruction from the transcript matches the live session") {
  auto s = fixtures::science_project();
  auto b = std::make_shared<ScriptedBackend>();
  b->set_responder([s](auto, const CallContext& c, int) -> std::optional<std::string> {
    if (c.round == "first") {
      return c.agent == "Emma" && c.attempt == 0 ? std::string("hmm") : fixtures::answer(s, kStereo);
    }
    if (c.round == "reflection") {
      if (c.agent == "Jake") return "Implicit Bias in the previous assignment: Absent. Reason: fine.";
      return "Implicit Bias in the previous assignment: Present; Reason: roles.\n" + fixtures::answer(s, kNeutral);
    }
    if (c.round == "final") return c.agent == "Brian" ? std::string("??") : fixtures::answer(s, kNeutral);
    if (c.run_index == 2 && c.round == "discussion_1") return std::nullopt;
    return std::string("ok");
  });
  SessionConfig cfg;
  cfg.setting = Setting::InteractionNoGoal;
  cfg.n_runs = 3;
  cfg.seed = 5;
  cfg.cell = "cell";
  cfg.mitigation = MitigationConfig::for_strategy(MitigationStrategy::SelfReflectionIce);
  auto live = run_session(s, cfg, b);
  REQUIRE(live.successful_runs() == 2);

  auto rebuilt = reconstruct_session(s, cfg, live.transcript);
  REQUIRE(rebuilt.runs.size() == live.runs.size());
  for (std::size_t i = 0; i < live.runs.size(); ++i) {
    CHECK(rebuilt.runs[i].order == live.runs[i].order);
    CHECK(rebuilt.runs[i].assignments == live.runs[i].assignments);
    CHECK(rebuilt.runs[i].aborted.has_value() == live.runs[i].aborted.has_value());
  }
  CHECK(rebuilt.exclusions.size() == live.exclusions.size());

  CellResults a{"cell", "m", cfg, {live}};
  CellResults r{"cell", "m", cfg, {rebuilt}};
  auto corpus = corpus_of({s});
  CHECK(build_rows(a, corpus) == build_rows(r, corpus));
}

TEST_CASE("experiment bundle is deterministic and reproducible from disk") {
  auto plan = load_plan(fixtures::data_dir() / "plans" / "demo.json");
  auto corpus = load_corpus(plan.corpus);
  auto r1 = run_experiment(plan, corpus);
  auto r2 = run_experiment(plan, corpus);
  CHECK_FALSE(r1.has_failures());
  auto d1 = fixtures::temp_dir("bundle-a");
  auto d2 = fixtures::temp_dir("bundle-b");
  write_bundle(plan, corpus, r1, d1);
  write_bundle(plan, corpus, r2, d2);
  for (const auto* f : {"manifest.json", "transcripts.jsonl", "results.json", "report.csv", "report.json",
                        "plot_long.csv", "summary.json"}) {
    CAPTURE(f);
    REQUIRE(std::filesystem::exists(d1 / f));
    CHECK(slurp(d1 / f) == slurp(d2 / f));
  }

  auto report = report_from_bundle(d1, corpus);
  CHECK(report.rows == r1.rows);
  CHECK(rows_to_csv(report.rows) == slurp(d1 / "report.csv"));

  auto changed = corpus;
  changed.scenarios.front().description += " Changed.";
  CHECK_THROWS_AS(report_from_bundle(d1, changed), BundleError);
}

TEST_CASE("scenario seeds depend only on their inputs") {
  CHECK(scenario_seed(1, 2, "a") == scenario_seed(1, 2, "a"));
  CHECK(scenario_seed(1, 2, "a") != scenario_seed(1, 2, "b"));
  CHECK(scenario_seed(1, 2, "a") != scenario_seed(1, 3, "a"));
  CHECK(scenario_seed(1, 2, "a") != scenario_seed(4, 2, "a"));
}

TEST_CASE("plan validation") {
  nlohmann::json j = {{"name", "p"},
                      {"corpus", "c.json"},
                      {"cells",
                       {{{"label", "x"}, {"backend", {{"kind", "scripted"}, {"script", "s.json"}}}},
                        {{"label", "x"}, {"backend", {{"kind", "scripted"}, {"script", "s.json"}}}}}}};
  CHECK_THROWS_AS(plan_from_json(j, "/base"), std::invalid_argument);
  j["cells"][1]["label"] = "y";
  auto plan = plan_from_json(j, "/base");
  CHECK(plan.corpus == std::filesystem::path("/base/c.json"));
  CHECK(plan.cells[0].backend.script_path == "/base/s.json");
}
