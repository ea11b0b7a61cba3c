// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <map>
#include <set>

#include "agentbias/bias_metric.hpp"
#include "agentbias/engine.hpp"
#include "agentbias/templates.hpp"
#include "fixtures.hpp"

using namespace agentbias;

namespace {

const std::vector<std::string> kStereo{"Brian", "Jake", "Emma", "Sarah"};
const std::vector<std::string> kNeutral{"Brian", "Emma", "Jake", "Sarah"};

/// Answers every assignment round with `first` or `final`, chat rounds with
/// a short line naming the speaker.
std::shared_ptr<ScriptedBackend> protocol_backend(const Scenario& s, std::vector<std::string> first,
                                                  std::vector<std::string> final) {
  auto b = std::make_shared<ScriptedBackend>();
  b->set_responder([s, first, final](auto, const CallContext& c, int) -> std::optional<std::string> {
    if (c.round == "first" || c.round == "single") return fixtures::answer(s, first);
    if (c.round == "final") return fixtures::answer(s, final);
    return c.agent + " in " + c.round;
  });
  return b;
}

std::map<std::string, int> rounds_by_agent(const std::vector<TranscriptEvent>& events, int run,
                                           const std::string& agent) {
  std::map<std::string, int> out;
  for (const auto& e : events) {
    if (e.run_index == run && e.agent == agent) ++out[e.round];
  }
  return out;
}

SessionConfig config(Setting setting, int runs = 1) {
  SessionConfig c;
  c.setting = setting;
  c.n_runs = runs;
  c.seed = 7;
  return c;
}

}  // namespace

TEST_CASE("interaction without goal: four calls per agent") {
  auto s = fixtures::science_project();
  auto result = run_session(s, config(Setting::InteractionNoGoal, 2), protocol_backend(s, kStereo, kNeutral));
  CHECK(result.transcript.size() == 2 * 16);
  CHECK(result.n_agents == 4);
  for (const auto& c : s.characters) {
    auto r = rounds_by_agent(result.transcript, 0, c.name);
    CHECK(r == std::map<std::string, int>{{"first", 1}, {"discussion_1", 1}, {"discussion_2", 1}, {"final", 1}});
  }
  CHECK(result.assignments(Round::First).size() == 8);
  CHECK(result.assignments(Round::Final).size() == 8);
  for (const auto& a : result.assignments(Round::First)) CHECK(classify(a, s).label == BiasLabel::Stereotypical);
  for (const auto& a : result.assignments(Round::Final)) CHECK(classify(a, s).label == BiasLabel::Neutral);
  CHECK(result.exclusions.empty());
}

TEST_CASE("interaction with goal adds one private turn") {
  auto s = fixtures::science_project();
  auto result = run_session(s, config(Setting::InteractionGoal), protocol_backend(s, kStereo, kStereo));
  CHECK(result.transcript.size() == 20);
  for (const auto& c : s.characters) {
    auto r = rounds_by_agent(result.transcript, 0, c.name);
    CHECK(r["goal"] == 1);
    CHECK(r["first"] == 1);
  }
  for (const auto& e : result.transcript) {
    if (e.round != "goal") continue;
    CHECK(e.prompt.size() == 2);
    CHECK(e.prompt.back().content.find("Experiment design") != std::string::npos);
    CHECK(e.prompt.back().content.find("(" + e.agent + ")") != std::string::npos);
  }
  CHECK(goal_task_id(s, config(Setting::InteractionGoal)) == "experiment_design");
}

TEST_CASE("explicit goal task") {
  auto s = fixtures::science_project();
  auto cfg = config(Setting::InteractionGoal);
  cfg.goal_task = "report_writing";
  CHECK(goal_task_id(s, cfg) == "report_writing");
  cfg.goal_task = "missing";
  CHECK_THROWS_AS(run_session(s, cfg, protocol_backend(s, kStereo, kStereo)), std::invalid_argument);
}

TEST_CASE("no interaction degenerates to one model call") {
  auto s = fixtures::science_project();
  auto result = run_session(s, config(Setting::NoInteraction, 3), protocol_backend(s, kStereo, kNeutral));
  CHECK(result.transcript.size() == 3);
  CHECK(result.n_agents == 1);
  for (const auto& e : result.transcript) {
    CHECK(e.round == "single");
    CHECK(e.agent == "model");
    CHECK(e.prompt.front().content == standard_profile().no_interaction_system);
  }
  CHECK(result.assignments(Round::Single).size() == 3);
  CHECK(result.assignments(Round::First).empty());
}

TEST_CASE("first assignments are isolated, discussion sees all of them") {
  auto s = fixtures::science_project();
  auto b = std::make_shared<ScriptedBackend>();
  b->set_responder([s](auto, const CallContext& c, int) -> std::optional<std::string> {
    if (c.round == "first") return fixtures::answer(s, kStereo) + "signed " + c.agent;
    if (c.round == "final") return fixtures::answer(s, kNeutral);
    return c.agent + " talks";
  });
  auto result = run_session(s, config(Setting::InteractionNoGoal), b);

  for (const auto& e : result.transcript) {
    std::string all;
    for (const auto& m : e.prompt) all += m.content + "\n";
    if (e.round == "first") {
      CHECK(e.prompt.size() == 2);
      CHECK(all.find("signed") == std::string::npos);
    }
    if (e.round == "discussion_1") {
      for (const auto& c : s.characters) CHECK(all.find("signed " + c.name) != std::string::npos);
    }
  }
}

TEST_CASE("agent context only grows") {
  auto s = fixtures::science_project();
  auto result = run_session(s, config(Setting::InteractionGoal), protocol_backend(s, kStereo, kNeutral));
  std::map<std::string, std::vector<ChatMessage>> last;
  for (const auto& e : result.transcript) {
    auto& prev = last[e.agent];
    REQUIRE(e.prompt.size() > prev.size());
    for (std::size_t i = 0; i < prev.size(); ++i) CHECK(e.prompt[i] == prev[i]);
    prev = e.prompt;
    prev.push_back({Role::Assistant, e.response});
  }
}

TEST_CASE("speaking order is a seeded shuffle") {
  auto s = fixtures::science_project();
  auto result = run_session(s, config(Setting::InteractionNoGoal, 4), protocol_backend(s, kStereo, kNeutral));
  std::vector<std::string> names;
  for (const auto& c : s.characters) names.push_back(c.name);
  for (const auto& run : result.runs) {
    CHECK(run.order == shuffle_order(names, 7, run.run_index));
    std::vector<std::string> firsts;
    for (const auto& e : result.transcript) {
      if (e.run_index == run.run_index && e.round == "first") firsts.push_back(e.agent);
    }
    CHECK(firsts == run.order);
  }
}

TEST_CASE("shuffle_order is a permutation and a pure function") {
  for (std::size_t n : {1u, 2u, 5u, 9u}) {
    auto p = shuffle_order(n, 42, 3);
    std::set<std::size_t> seen(p.begin(), p.end());
    CHECK(seen.size() == n);
    CHECK(*seen.rbegin() == n - 1);
    CHECK(p == shuffle_order(n, 42, 3));
  }
  CHECK(shuffle_order(6, 42, 3) != shuffle_order(6, 42, 4));
}

TEST_CASE("unparseable answers are retried then excluded") {
  auto s = fixtures::science_project();
  auto b = std::make_shared<ScriptedBackend>();
  b->set_responder([s](auto, const CallContext& c, int) -> std::optional<std::string> {
    if (c.agent == "Emma" && c.round == "first") {
      return c.attempt == 0 ? std::string("I am not sure yet.") : fixtures::answer(s, kStereo);
    }
    if (c.agent == "Jake" && c.round == "final") return std::string("no idea");
    if (c.round == "first" || c.round == "final") return fixtures::answer(s, kNeutral);
    return std::string("ok");
  });
  auto cfg = config(Setting::InteractionNoGoal);
  cfg.parse_retry_limit = 2;
  auto result = run_session(s, cfg, b);

  CHECK(rounds_by_agent(result.transcript, 0, "Emma")["first"] == 2);
  CHECK(rounds_by_agent(result.transcript, 0, "Jake")["final"] == 3);
  CHECK(result.assignments(Round::First).size() == 4);
  CHECK(result.assignments(Round::Final).size() == 3);
  REQUIRE(result.exclusions.size() == 1);
  CHECK(result.exclusions[0].agent == "Jake");
  CHECK(result.exclusions[0].round == Round::Final);
  CHECK(result.exclusion_count(Round::Final) == 1);
  for (const auto& e : result.transcript) {
    if (e.attempt > 0) CHECK(e.prompt.back().content == standard_profile().format_reminder);
  }
}

TEST_CASE("a backend error aborts only its run") {
  auto s = fixtures::science_project();
  auto b = std::make_shared<ScriptedBackend>();
  b->set_responder([s](auto, const CallContext& c, int) -> std::optional<std::string> {
    if (c.run_index == 1 && c.round == "discussion_2") return std::nullopt;
    if (c.round == "first" || c.round == "final") return fixtures::answer(s, kStereo);
    return std::string("ok");
  });
  auto result = run_session(s, config(Setting::InteractionNoGoal, 3), b);
  CHECK(result.successful_runs() == 2);
  REQUIRE(result.runs[1].aborted.has_value());
  CHECK(result.runs[1].assignments.empty());
  CHECK(result.assignments(Round::First).size() == 8);
  CHECK(result.exclusions.size() == 8);
  for (const auto& e : result.exclusions) {
    CHECK(e.run_index == 1);
    CHECK(e.reason == kBackendErrorReason);
  }
  auto aborts = std::count_if(result.transcript.begin(), result.transcript.end(),
                              [](const auto& e) { return e.round == "abort"; });
  CHECK(aborts == 1);
}

TEST_CASE("every run failing raises SessionError with the partial result") {
  auto s = fixtures::science_project();
  auto b = std::make_shared<ScriptedBackend>();
  try {
    run_session(s, config(Setting::InteractionNoGoal, 2), b);
    FAIL("expected SessionError");
  } catch (const SessionError& e) {
    CHECK(e.partial().runs.size() == 2);
    CHECK(e.partial().successful_runs() == 0);
    REQUIRE(e.partial().transcript.size() == 2);
    CHECK(e.partial().transcript[0].round == "abort");
  }
}

TEST_CASE("per-agent backend factory") {
  auto s = fixtures::science_project();
  std::map<std::string, std::shared_ptr<ScriptedBackend>> handles;
  auto result = run_session(s, config(Setting::InteractionNoGoal), [&](const Character& c) {
    auto b = protocol_backend(s, kStereo, kNeutral);
    handles[c.name] = b;
    return b;
  });
  CHECK(handles.size() == 4);
  for (const auto& [name, b] : handles) CHECK(b->calls() == 4);
  CHECK(result.successful_runs() == 1);
}

TEST_CASE("canonical broadcast") {
  auto s = fixtures::science_project();
  auto cfg = config(Setting::InteractionNoGoal);
  cfg.broadcast_first_verbatim = false;
  auto b = std::make_shared<ScriptedBackend>();
  b->set_responder([s](auto, const CallContext& c, int) -> std::optional<std::string> {
    if (c.round == "first") return "Here is my plan.\n" + fixtures::answer(s, kStereo);
    if (c.round == "final") return fixtures::answer(s, kNeutral);
    return std::string("ok");
  });
  auto result = run_session(s, cfg, b);
  auto parsed = parse_assignment(fixtures::answer(s, kStereo), s, "x", Round::First);
  auto canonical = render_assignment(std::get<Assignment>(parsed), s);
  std::size_t prompts = 0;
  for (const auto& e : result.transcript) {
    if (e.round != "discussion_1") continue;
    ++prompts;
    std::size_t canonical_seen = 0;
    for (const auto& m : e.prompt) {
      if (m.role != Role::User) continue;
      CHECK(m.content.find("Here is my plan") == std::string::npos);
      if (m.content.find(canonical) != std::string::npos) ++canonical_seen;
    }
    CHECK(canonical_seen == 3);
  }
  CHECK(prompts == 4);
}

TEST_CASE("discussion round count") {
  auto s = fixtures::science_project();
  auto cfg = config(Setting::InteractionNoGoal);
  cfg.discussion_rounds = 0;
  CHECK(run_session(s, cfg, protocol_backend(s, kStereo, kNeutral)).transcript.size() == 8);
  cfg.discussion_rounds = 3;
  auto result = run_session(s, cfg, protocol_backend(s, kStereo, kNeutral));
  CHECK(result.transcript.size() == 20);
  for (const auto& e : result.transcript) {
    if (e.round == "discussion_3") CHECK(e.prompt.back().content == standard_profile().discussion_consensus);
    if (e.round == "discussion_1") CHECK(e.prompt.back().content == standard_profile().discussion);
  }
}

TEST_CASE("session config json and validation") {
  SessionConfig c;
  c.setting = Setting::InteractionGoal;
  c.n_runs = 9;
  c.seed = 11;
  c.goal_task = "t";
  c.population = Population::Majority;
  auto back = session_config_from_json(to_json(c));
  CHECK(back.setting == Setting::InteractionGoal);
  CHECK(back.n_runs == 9);
  CHECK(back.seed == 11);
  CHECK(back.goal_task == std::optional<std::string>("t"));
  CHECK(back.population == Population::Majority);

  c.n_runs = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK_THROWS_AS(parse_setting("sometimes"), std::invalid_argument);
  CHECK(parse_setting("no_interaction") == Setting::NoInteraction);
  CHECK(make_run_id("cell", "s", 2) == "cell/s/2");
  CHECK(make_run_id("", "s", 2) == "s/2");
}
