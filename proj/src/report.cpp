// SPDX-License-Identifier: Apache-2.0
#include "agentbias/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "agentbias/bias_metric.hpp"

namespace agentbias {

using json = nlohmann::json;

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::First: return "first";
    case Phase::Reflection: return "reflection";
    case Phase::Last: return "last";
    case Phase::Single: return "single";
  }
  return "first";
}

Phase parse_phase(std::string_view s) {
  for (auto p : {Phase::First, Phase::Reflection, Phase::Last, Phase::Single}) {
    if (to_string(p) == s) return p;
  }
  throw std::invalid_argument("unknown phase \"" + std::string(s) + "\"");
}

std::vector<Phase> phases_for(const SessionConfig& cfg) {
  std::vector<Phase> out;
  for (Round r : cfg.assignment_rounds()) {
    switch (r) {
      case Round::First: out.push_back(Phase::First); break;
      case Round::Reflection: out.push_back(Phase::Reflection); break;
      case Round::Final: out.push_back(Phase::Last); break;
      case Round::Single: out.push_back(Phase::Single); break;
    }
  }
  return out;
}

Round round_for(Phase p) {
  switch (p) {
    case Phase::First: return Round::First;
    case Phase::Reflection: return Round::Reflection;
    case Phase::Last: return Round::Final;
    case Phase::Single: return Round::Single;
  }
  return Round::First;
}

std::vector<Assignment> population(const RunRecord& run, Round round, Population p) {
  std::vector<Assignment> in_round;
  for (const auto& a : run.assignments) {
    if (a.round == round) in_round.push_back(a);
  }
  if (p == Population::PerAgent || in_round.empty()) return in_round;
  auto rank = [&](const std::string& author) {
    auto it = std::find(run.order.begin(), run.order.end(), author);
    return static_cast<std::size_t>(it - run.order.begin());
  };
  std::stable_sort(in_round.begin(), in_round.end(),
                   [&](const Assignment& x, const Assignment& y) { return rank(x.author) < rank(y.author); });
  const Assignment* best = nullptr;
  std::size_t best_count = 0;
  for (const auto& a : in_round) {
    auto n = static_cast<std::size_t>(std::count_if(in_round.begin(), in_round.end(),
                                                    [&](const Assignment& o) { return o.mapping == a.mapping; }));
    if (n > best_count) {
      best = &a;
      best_count = n;
    }
  }
  Assignment m = *best;
  m.author = "majority";
  m.rationales.clear();
  return {m};
}

std::vector<ReportRow> build_rows(const CellResults& cell, const Corpus& corpus) {
  std::map<std::string, const Scenario*> by_id;
  std::vector<std::string> domains{std::string(kAllDomains)};
  for (const auto& session : cell.sessions) {
    const Scenario* s = corpus.find(session.scenario_id);
    if (s == nullptr) throw std::invalid_argument("scenario \"" + session.scenario_id + "\" not in corpus");
    by_id[s->id] = s;
  }
  for (const auto& s : corpus.scenarios) {
    if (by_id.count(s.id) && std::find(domains.begin(), domains.end(), s.domain.name()) == domains.end()) {
      domains.push_back(s.domain.name());
    }
  }

  std::vector<ReportRow> rows;
  for (const auto& domain : domains) {
    for (Phase phase : phases_for(cell.config)) {
      const Round round = round_for(phase);
      ReportRow row;
      row.cell = cell.cell;
      row.model = cell.model;
      row.setting = to_string(cell.config.setting);
      row.mitigation = to_string(cell.config.mitigation.strategy);
      row.phase = phase;
      row.domain = domain;
      std::map<int, std::vector<BiasClassification>> per_run;
      for (const auto& session : cell.sessions) {
        const Scenario& s = *by_id.at(session.scenario_id);
        if (domain != kAllDomains && s.domain.name() != domain) continue;
        row.exclusions += session.exclusion_count(round);
        for (const auto& run : session.runs) {
          if (run.aborted) continue;
          auto& bucket = per_run[run.run_index];
          for (const auto& a : population(run, round, cell.config.population)) bucket.push_back(classify(a, s));
        }
      }
      std::vector<BucketCounts> counts;
      Rational neutral, stereo, anti;
      for (const auto& [run_index, cs] : per_run) {
        auto b = count_buckets(cs);
        if (b.total == 0) continue;
        counts.push_back(b);
        neutral = neutral + b.fraction_neutral();
        stereo = stereo + b.fraction_stereotypical();
        anti = anti + b.fraction_anti();
        row.n_assignments += b.total;
        row.ties += static_cast<std::size_t>(std::count_if(cs.begin(), cs.end(), [](const auto& c) { return c.tie(); }));
      }
      if (counts.empty()) continue;
      const Rational n(static_cast<std::int64_t>(counts.size()));
      row.neutral = neutral / n;
      row.stereotypical = stereo / n;
      row.anti_stereotypical = anti / n;
      auto score = average_bias_score(counts);
      row.bias_score = score.value;
      row.per_run_scores = score.per_run;
      row.n_runs = counts.size();
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string format_fixed4(const Rational& r) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", r.to_double());
  std::string out(buf);
  if (out == "-0.0000") out = "0.0000";
  return out;
}

std::string to_exact(const Rational& r) { return std::to_string(r.num()) + "/" + std::to_string(r.den()); }

Rational rational_from_exact(std::string_view s) {
  auto slash = s.find('/');
  auto parse = [&](std::string_view part) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc{} || ptr != part.data() + part.size()) {
      throw std::invalid_argument("bad rational \"" + std::string(s) + "\"");
    }
    return v;
  };
  if (slash == std::string_view::npos) return {parse(s)};
  return {parse(s.substr(0, slash)), parse(s.substr(slash + 1))};
}

namespace {

std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string rows_to_csv(std::span<const ReportRow> rows) {
  std::string out =
      "cell,model,setting,mitigation,phase,domain,neutral,stereotypical,anti_stereotypical,bias_score,n_runs,"
      "n_assignments,exclusions,ties\n";
  for (const auto& r : rows) {
    out += csv_field(r.cell) + "," + csv_field(r.model) + "," + r.setting + "," + r.mitigation + "," +
           std::string(to_string(r.phase)) + "," + csv_field(r.domain) + "," + format_fixed4(r.neutral) + "," +
           format_fixed4(r.stereotypical) + "," + format_fixed4(r.anti_stereotypical) + "," +
           format_fixed4(r.bias_score) + "," + std::to_string(r.n_runs) + "," + std::to_string(r.n_assignments) +
           "," + std::to_string(r.exclusions) + "," + std::to_string(r.ties) + "\n";
  }
  return out;
}

std::string rows_to_long_csv(std::span<const ReportRow> rows) {
  std::string out = "cell,model,setting,mitigation,phase,domain,metric,value\n";
  for (const auto& r : rows) {
    const std::string key = csv_field(r.cell) + "," + csv_field(r.model) + "," + r.setting + "," + r.mitigation +
                            "," + std::string(to_string(r.phase)) + "," + csv_field(r.domain) + ",";
    out += key + "neutral," + format_fixed4(r.neutral) + "\n";
    out += key + "stereotypical," + format_fixed4(r.stereotypical) + "\n";
    out += key + "anti_stereotypical," + format_fixed4(r.anti_stereotypical) + "\n";
    out += key + "bias_score," + format_fixed4(r.bias_score) + "\n";
  }
  return out;
}

namespace {

double rounded4(const Rational& r) { return std::round(r.to_double() * 10000.0) / 10000.0 + 0.0; }

}  // namespace

json rows_to_json(std::span<const ReportRow> rows) {
  json arr = json::array();
  for (const auto& r : rows) {
    json per_run = json::array();
    for (const auto& s : r.per_run_scores) per_run.push_back(to_exact(s));
    arr.push_back({{"cell", r.cell},
                   {"model", r.model},
                   {"setting", r.setting},
                   {"mitigation", r.mitigation},
                   {"phase", to_string(r.phase)},
                   {"domain", r.domain},
                   {"neutral", rounded4(r.neutral)},
                   {"stereotypical", rounded4(r.stereotypical)},
                   {"anti_stereotypical", rounded4(r.anti_stereotypical)},
                   {"bias_score", rounded4(r.bias_score)},
                   {"exact",
                    {{"neutral", to_exact(r.neutral)},
                     {"stereotypical", to_exact(r.stereotypical)},
                     {"anti_stereotypical", to_exact(r.anti_stereotypical)},
                     {"bias_score", to_exact(r.bias_score)},
                     {"per_run_scores", per_run}}},
                   {"n_runs", r.n_runs},
                   {"n_assignments", r.n_assignments},
                   {"exclusions", r.exclusions},
                   {"ties", r.ties}});
  }
  return {{"schema_version", kReportSchemaVersion}, {"rows", arr}};
}

std::vector<ReportRow> rows_from_json(const json& j) {
  if (j.value("schema_version", 0) != kReportSchemaVersion) {
    throw std::invalid_argument("unsupported report schema version");
  }
  std::vector<ReportRow> rows;
  for (const auto& r : j.at("rows")) {
    ReportRow row;
    row.cell = r.at("cell").get<std::string>();
    row.model = r.at("model").get<std::string>();
    row.setting = r.at("setting").get<std::string>();
    row.mitigation = r.at("mitigation").get<std::string>();
    row.phase = parse_phase(r.at("phase").get<std::string>());
    row.domain = r.at("domain").get<std::string>();
    const auto& ex = r.at("exact");
    row.neutral = rational_from_exact(ex.at("neutral").get<std::string>());
    row.stereotypical = rational_from_exact(ex.at("stereotypical").get<std::string>());
    row.anti_stereotypical = rational_from_exact(ex.at("anti_stereotypical").get<std::string>());
    row.bias_score = rational_from_exact(ex.at("bias_score").get<std::string>());
    for (const auto& s : ex.at("per_run_scores")) row.per_run_scores.push_back(rational_from_exact(s.get<std::string>()));
    row.n_runs = r.at("n_runs").get<std::size_t>();
    row.n_assignments = r.at("n_assignments").get<std::size_t>();
    row.exclusions = r.at("exclusions").get<std::size_t>();
    row.ties = r.at("ties").get<std::size_t>();
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Comparison

std::string_view to_string(DeltaLabel l) {
  switch (l) {
    case DeltaLabel::Reduced: return "reduced";
    case DeltaLabel::Increased: return "increased";
    case DeltaLabel::Unchanged: return "unchanged";
  }
  return "unchanged";
}

std::vector<DeltaRow> compare_rows(std::span<const ReportRow> baseline, std::span<const ReportRow> mitigated,
                                   const std::map<std::string, SelfCorrectionStats>& self_correction) {
  std::vector<DeltaRow> out;
  for (const auto& m : mitigated) {
    if (m.domain != kAllDomains) continue;
    const ReportRow* best = nullptr;
    int best_rank = 3;
    for (const auto& b : baseline) {
      if (b.domain != kAllDomains || b.model != m.model || b.setting != m.setting || b.phase != m.phase) continue;
      int rank = b.cell == m.cell ? 0 : b.mitigation == "none" ? 1 : 2;
      if (rank < best_rank) {
        best = &b;
        best_rank = rank;
      }
    }
    if (best == nullptr) continue;
    DeltaRow d;
    d.baseline_cell = best->cell;
    d.mitigated_cell = m.cell;
    d.model = m.model;
    d.setting = m.setting;
    d.mitigation = m.mitigation;
    d.phase = m.phase;
    d.baseline_score = best->bias_score;
    d.mitigated_score = m.bias_score;
    d.delta = m.bias_score - best->bias_score;
    d.label = d.delta < Rational(0) ? DeltaLabel::Reduced : Rational(0) < d.delta ? DeltaLabel::Increased
                                                                                  : DeltaLabel::Unchanged;
    d.anti_overshoot = m.bias_score < Rational(0);
    if (auto it = self_correction.find(m.cell); it != self_correction.end()) d.self_correction = it->second;
    out.push_back(std::move(d));
  }
  return out;
}

std::string deltas_to_csv(std::span<const DeltaRow> deltas) {
  std::string out =
      "baseline_cell,mitigated_cell,model,setting,mitigation,phase,baseline_score,mitigated_score,delta,label,"
      "anti_stereotypical_overshoot,self_correction_rate\n";
  for (const auto& d : deltas) {
    std::string rate;
    if (d.self_correction && !d.self_correction->empty_denominator) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f", d.self_correction->rate);
      rate = buf;
    }
    out += csv_field(d.baseline_cell) + "," + csv_field(d.mitigated_cell) + "," + csv_field(d.model) + "," +
           d.setting + "," + d.mitigation + "," + std::string(to_string(d.phase)) + "," +
           format_fixed4(d.baseline_score) + "," + format_fixed4(d.mitigated_score) + "," + format_fixed4(d.delta) +
           "," + std::string(to_string(d.label)) + "," + (d.anti_overshoot ? "true" : "false") + "," + rate + "\n";
  }
  return out;
}

json to_json(const SelfCorrectionStats& s) {
  return {{"n_biased_first", s.n_biased_first},
          {"n_reduced", s.n_reduced},
          {"rate", s.rate},
          {"empty_denominator", s.empty_denominator}};
}

SelfCorrectionStats self_correction_from_json(const json& j) {
  SelfCorrectionStats s;
  s.n_biased_first = j.at("n_biased_first").get<std::size_t>();
  s.n_reduced = j.at("n_reduced").get<std::size_t>();
  s.rate = j.at("rate").get<double>();
  s.empty_denominator = j.at("empty_denominator").get<bool>();
  return s;
}

json deltas_to_json(std::span<const DeltaRow> deltas) {
  json arr = json::array();
  for (const auto& d : deltas) {
    json row{{"baseline_cell", d.baseline_cell},
             {"mitigated_cell", d.mitigated_cell},
             {"model", d.model},
             {"setting", d.setting},
             {"mitigation", d.mitigation},
             {"phase", to_string(d.phase)},
             {"baseline_score", rounded4(d.baseline_score)},
             {"mitigated_score", rounded4(d.mitigated_score)},
             {"delta", rounded4(d.delta)},
             {"delta_exact", to_exact(d.delta)},
             {"label", to_string(d.label)},
             {"anti_stereotypical_overshoot", d.anti_overshoot}};
    if (d.self_correction) row["self_correction"] = to_json(*d.self_correction);
    arr.push_back(std::move(row));
  }
  return {{"schema_version", kReportSchemaVersion}, {"deltas", arr}};
}

// ---------------------------------------------------------------------------
// Reconstruction

namespace {

std::vector<const TranscriptEvent*> attempts(std::span<const TranscriptEvent* const> run_events,
                                             const std::string& agent, std::string_view tag) {
  std::vector<const TranscriptEvent*> out;
  for (const auto* e : run_events) {
    if (e->agent == agent && e->round == tag) out.push_back(e);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto* a, const auto* b) { return a->attempt < b->attempt; });
  return out;
}

}  // namespace

SessionResult reconstruct_session(const Scenario& scenario, const SessionConfig& cfg,
                                  std::span<const TranscriptEvent> events) {
  SessionResult result;
  result.scenario_id = scenario.id;
  result.config = cfg;
  result.n_agents = cfg.setting == Setting::NoInteraction ? 1 : scenario.characters.size();
  for (const auto& e : events) {
    if (e.scenario_id == scenario.id) result.transcript.push_back(e);
  }
  std::sort(result.transcript.begin(), result.transcript.end(),
            [](const auto& a, const auto& b) { return a.seq < b.seq; });

  const auto rounds = cfg.assignment_rounds();
  for (int run = 0; run < cfg.n_runs; ++run) {
    RunRecord rec;
    rec.run_index = run;
    std::vector<const TranscriptEvent*> run_events;
    const TranscriptEvent* abort = nullptr;
    for (const auto& e : result.transcript) {
      if (e.run_index != run) continue;
      if (e.round == "abort") abort = &e;
      else run_events.push_back(&e);
    }
    if (abort != nullptr) {
      rec.aborted = abort->response;
      std::vector<std::string> names;
      if (cfg.setting == Setting::NoInteraction) names.emplace_back(kModelAuthor);
      else for (const auto& c : scenario.characters) names.push_back(c.name);
      for (Round r : rounds) {
        for (const auto& n : names) {
          result.exclusions.push_back({run, n, r, std::string(kBackendErrorReason), abort->response});
        }
      }
      rec.order = cfg.setting == Setting::NoInteraction ? names : shuffle_order(names, cfg.seed, run);
      result.runs.push_back(std::move(rec));
      continue;
    }
    for (const auto* e : run_events) {
      if (std::find(rec.order.begin(), rec.order.end(), e->agent) == rec.order.end()) rec.order.push_back(e->agent);
    }

    std::map<std::string, std::optional<Assignment>> firsts;
    for (Round r : rounds) {
      for (const auto& agent : rec.order) {
        if (r == Round::Reflection) {
          const auto& first = firsts[agent];
          if (!first) {
            result.exclusions.push_back(
                {run, agent, Round::Reflection, "unparseable", "no parsed first assignment to reflect on"});
            continue;
          }
          std::string detail;
          bool done = false;
          for (const auto* e : attempts(run_events, agent, to_string(r))) {
            auto outcome = parse_reflection(e->response, scenario, agent);
            if (auto* refl = std::get_if<Reflection>(&outcome)) {
              Assignment effective = refl->revised ? *refl->revised : *first;
              effective.round = Round::Reflection;
              effective.author = agent;
              rec.assignments.push_back(std::move(effective));
              rec.reflections.push_back({agent, refl->bias_present, refl->reason, refl->revised.has_value()});
              done = true;
              break;
            }
            detail = std::get<ReflectionFailure>(outcome).detail;
          }
          if (!done) result.exclusions.push_back({run, agent, Round::Reflection, "reflection_unparseable", detail});
          continue;
        }
        std::optional<ParseFailure> failure;
        bool done = false;
        for (const auto* e : attempts(run_events, agent, to_string(r))) {
          auto parsed = parse_assignment(e->response, scenario, agent, r);
          if (auto* a = std::get_if<Assignment>(&parsed)) {
            if (r == Round::First || r == Round::Single) firsts[agent] = *a;
            rec.assignments.push_back(std::move(*a));
            done = true;
            break;
          }
          failure = std::get<ParseFailure>(std::move(parsed));
        }
        if (!done) {
          result.exclusions.push_back({run, agent, r,
                                       failure ? std::string(to_string(failure->diagnosis)) : "unparseable",
                                       failure ? failure->detail : "no recorded response"});
        }
      }
    }
    result.runs.push_back(std::move(rec));
  }
  return result;
}

}  // namespace agentbias
