// SPDX-License-Identifier: Apache-2.0
#include "agentbias/case_study.hpp"

#include <algorithm>

#include "agentbias/agent.hpp"
#include "agentbias/templates.hpp"
#include "agentbias/text.hpp"

namespace agentbias {

using json = nlohmann::json;

std::string_view to_string(CaseStudyVariant v) {
  switch (v) {
    case CaseStudyVariant::TaskAssignment: return "task_assignment";
    case CaseStudyVariant::DeadlineBlame: return "deadline_blame";
    case CaseStudyVariant::TeamLead: return "team_lead";
  }
  return "task_assignment";
}

CaseStudyVariant parse_case_study_variant(std::string_view s) {
  for (auto v : {CaseStudyVariant::TaskAssignment, CaseStudyVariant::DeadlineBlame, CaseStudyVariant::TeamLead}) {
    if (to_string(v) == s) return v;
  }
  throw std::invalid_argument("unknown case study \"" + std::string(s) + "\"");
}

double CaseStudyResult::male_fraction() const {
  auto n = male_nominations + female_nominations;
  return n == 0 ? 0.0 : static_cast<double>(male_nominations) / static_cast<double>(n);
}

double CaseStudyResult::female_fraction() const {
  auto n = male_nominations + female_nominations;
  return n == 0 ? 0.0 : static_cast<double>(female_nominations) / static_cast<double>(n);
}

json to_json(const CaseStudyResult& r) {
  json noms = json::array();
  for (const auto& n : r.nominations) {
    noms.push_back({{"run", n.run_index},
                    {"agent", n.agent},
                    {"round", to_string(n.round)},
                    {"nominee", n.nominee},
                    {"nominee_gender", to_string(n.nominee_gender)},
                    {"reason", n.reason}});
  }
  json excl = json::array();
  for (const auto& e : r.exclusions) {
    excl.push_back({{"run", e.run_index}, {"agent", e.agent}, {"round", to_string(e.round)}, {"reason", e.reason},
                    {"detail", e.detail}});
  }
  return {{"variant", to_string(r.variant)},
          {"scenario_id", r.scenario_id},
          {"nominations", noms},
          {"exclusions", excl},
          {"aborted_runs", r.aborted_runs},
          {"male_nominations", r.male_nominations},
          {"female_nominations", r.female_nominations},
          {"male_fraction", r.male_fraction()},
          {"female_fraction", r.female_fraction()},
          {"self_nomination_runs", r.self_nomination_runs}};
}

namespace {

/// Distinct cast members named in `norm` (word-normalized).
std::vector<const Character*> names_in(const std::string& norm, const Scenario& s) {
  std::vector<const Character*> out;
  for (const auto& c : s.characters) {
    if (text::find_words(norm, c.name) != std::string::npos) out.push_back(&c);
  }
  return out;
}

std::string reason_of(std::string_view response) {
  auto lower = text::to_lower(response);
  auto p = lower.find("reason:");
  return p == std::string::npos ? std::string{} : text::trim(response.substr(p + 7));
}

}  // namespace

std::optional<std::string> parse_nomination(std::string_view response, const Scenario& scenario) {
  for (const auto& line : text::split_lines(response)) {
    auto lower = text::to_lower(line);
    auto label = lower.find("agent:");
    if (label == std::string::npos) continue;
    std::string rhs = line.substr(label + 6);
    auto cut = text::to_lower(rhs).find("reason");
    if (cut != std::string::npos) rhs = rhs.substr(0, cut);
    auto found = names_in(text::word_normalize(rhs), scenario);
    if (found.size() == 1) return found.front()->name;
    if (found.size() > 1) return std::nullopt;
  }
  auto found = names_in(text::word_normalize(response), scenario);
  if (found.size() == 1) return found.front()->name;
  return std::nullopt;
}

namespace {

struct NominationRun {
  const Scenario& scenario;
  const SessionConfig& cfg;
  const PromptProfile& profile;
  int run_index;
  std::string run_id;
  TranscriptSink& sink;
  std::vector<Nomination> nominations;
  std::vector<Exclusion> exclusions;
};

CallContext context_for(const NominationRun& st, const Agent& a, std::string round, int attempt) {
  CallContext ctx;
  ctx.cell = st.cfg.cell;
  ctx.run_id = st.run_id;
  ctx.scenario_id = st.scenario.id;
  ctx.run_index = st.run_index;
  ctx.agent = a.name();
  ctx.round = std::move(round);
  ctx.attempt = attempt;
  return ctx;
}

std::string nominate(NominationRun& st, Agent& agent, const std::string& prompt, Round round) {
  const std::string tag = round == Round::First ? "nomination_first" : "nomination_final";
  std::string last;
  for (int attempt = 0; attempt <= st.cfg.parse_retry_limit; ++attempt) {
    last = agent.respond(attempt == 0 ? prompt : st.profile.nomination_reminder,
                         context_for(st, agent, tag, attempt), st.sink);
    if (auto who = parse_nomination(last, st.scenario)) {
      const auto* c = st.scenario.find_character(*who);
      st.nominations.push_back({st.run_index, agent.name(), round, c->name, c->gender, reason_of(last)});
      return last;
    }
  }
  st.exclusions.push_back({st.run_index, agent.name(), round, "unparseable", "no single nominee named"});
  return last;
}

void run_nominations(NominationRun& st, const std::string& question, const BackendFactory& backends) {
  const auto& s = st.scenario;
  std::vector<Agent> agents;
  agents.reserve(s.characters.size());
  for (const auto& c : s.characters) {
    agents.emplace_back(
        c, render_template(st.profile.persona, {{"name", c.name}, {"gender", std::string(to_string(c.gender))}}),
        backends(c));
  }
  const auto order = shuffle_order(agents.size(), st.cfg.seed, st.run_index);

  std::vector<std::string> firsts(agents.size());
  for (auto i : order) firsts[i] = nominate(st, agents[i], question, Round::First);
  for (auto speaker : order) {
    for (std::size_t listener = 0; listener < agents.size(); ++listener) {
      if (listener == speaker) continue;
      agents[listener].observe(
          {Role::User, render_template(st.profile.observation, {{"name", agents[speaker].name()},
                                                                {"text", firsts[speaker].empty() ? "(no response)"
                                                                                                 : firsts[speaker]}})});
    }
  }
  for (int d = 1; d <= st.cfg.discussion_rounds; ++d) {
    for (auto speaker : order) {
      auto said = agents[speaker].respond(st.profile.nomination_discussion,
                                          context_for(st, agents[speaker], "discussion_" + std::to_string(d), 0),
                                          st.sink);
      for (std::size_t listener = 0; listener < agents.size(); ++listener) {
        if (listener == speaker) continue;
        agents[listener].observe({Role::User, render_template(st.profile.observation,
                                                              {{"name", agents[speaker].name()},
                                                               {"text", said.empty() ? "(no response)" : said}})});
      }
    }
  }
  for (auto i : order) nominate(st, agents[i], question, Round::Final);
}

}  // namespace

CaseStudyResult run_case_study(CaseStudyVariant variant, const Scenario& scenario, const SessionConfig& cfg,
                               const BackendFactory& backends) {
  CaseStudyResult result;
  result.variant = variant;
  result.scenario_id = scenario.id;
  if (variant == CaseStudyVariant::TaskAssignment) {
    auto session = run_session(scenario, cfg, backends);
    result.exclusions = session.exclusions;
    result.transcript = session.transcript;
    for (const auto& r : session.runs) {
      if (r.aborted) result.aborted_runs.push_back(r.run_index);
    }
    result.session = std::move(session);
    return result;
  }

  cfg.validate();
  if (auto v = validate_scenario(scenario); !v.empty()) {
    throw std::invalid_argument("scenario \"" + scenario.id + "\" is invalid: " + v.front());
  }
  const auto& profile = profile_by_name(cfg.profile);
  const std::string question = render_template(
      variant == CaseStudyVariant::DeadlineBlame ? profile.deadline_blame : profile.team_lead,
      {{"agents", render_cast(scenario)}});

  TranscriptSink sink;
  for (int run = 0; run < cfg.n_runs; ++run) {
    NominationRun st{scenario, cfg, profile, run, make_run_id(cfg.cell, scenario.id, run), sink, {}, {}};
    try {
      run_nominations(st, question, backends);
    } catch (const BackendError& e) {
      result.aborted_runs.push_back(run);
      for (Round r : {Round::First, Round::Final}) {
        for (const auto& c : scenario.characters) {
          result.exclusions.push_back({run, c.name, r, std::string(kBackendErrorReason), e.what()});
        }
      }
      TranscriptEvent marker;
      marker.cell = cfg.cell;
      marker.run_id = st.run_id;
      marker.scenario_id = scenario.id;
      marker.run_index = run;
      marker.round = "abort";
      marker.response = e.what();
      sink.append(std::move(marker));
      continue;
    }
    std::size_t self = 0;
    for (const auto& n : st.nominations) {
      if (n.round != Round::Final) continue;
      (n.nominee_gender == Gender::Male ? result.male_nominations : result.female_nominations)++;
      if (n.nominee == n.agent) ++self;
    }
    if (self == scenario.characters.size()) result.self_nomination_runs.push_back(run);
    result.nominations.insert(result.nominations.end(), st.nominations.begin(), st.nominations.end());
    result.exclusions.insert(result.exclusions.end(), st.exclusions.begin(), st.exclusions.end());
  }
  result.transcript = sink.events();
  if (result.aborted_runs.size() == static_cast<std::size_t>(cfg.n_runs)) {
    throw std::runtime_error("case study on \"" + scenario.id + "\": every run failed");
  }
  return result;
}

CaseStudyResult run_case_study(CaseStudyVariant variant, const Scenario& scenario, const SessionConfig& cfg,
                               const BackendPtr& backend) {
  return run_case_study(variant, scenario, cfg, [backend](const Character&) { return backend; });
}

}  // namespace agentbias
