// SPDX-License-Identifier: Apache-2.0
#include "agentbias/scenario.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <utility>

#include <json.hpp>

#include "agentbias/text.hpp"

namespace agentbias {
namespace {

using json = nlohmann::json;

constexpr std::array<std::pair<Domain::Kind, std::string_view>, 9> kDomainNames{{
    {Domain::Kind::Family, "family"},
    {Domain::Kind::Office, "office"},
    {Domain::Kind::Hospital, "hospital"},
    {Domain::Kind::Politics, "politics"},
    {Domain::Kind::Legal, "legal"},
    {Domain::Kind::School, "school"},
    {Domain::Kind::TeamDynamics, "team_dynamics"},
    {Domain::Kind::MediaMovies, "media_movies"},
    {Domain::Kind::PlanningDevelopment, "planning_development"},
}};

[[noreturn]] void parse_fail(const std::string& what) {
  throw CorpusError(CorpusError::Kind::Parse, what);
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) parse_fail(where + ": missing field \"" + key + "\"");
  return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_string()) parse_fail(where + ": field \"" + key + "\" must be a string");
  return v.get<std::string>();
}

const json& require_array(const json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_array()) parse_fail(where + ": field \"" + key + "\" must be an array");
  return v;
}

void check_fields(const json& obj, std::initializer_list<std::string_view> allowed,
                  const std::string& where, const LoadOptions& opts) {
  if (!obj.is_object()) parse_fail(where + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) != allowed.end()) continue;
    std::string msg = where + ": unknown field \"" + key + "\"";
    if (opts.strict) parse_fail(msg);
    if (opts.on_warning) opts.on_warning(msg);
  }
}

Gender require_gender(const json& obj, const char* key, const std::string& where) {
  auto s = require_string(obj, key, where);
  auto g = parse_gender(s);
  if (!g) parse_fail(where + ": \"" + key + "\" must be \"male\" or \"female\", got \"" + s + "\"");
  return *g;
}

}  // namespace

std::string_view to_string(Gender g) { return g == Gender::Male ? "male" : "female"; }

std::optional<Gender> parse_gender(std::string_view s) {
  auto l = text::to_lower(text::trim(s));
  if (l == "male" || l == "m" || l == "man") return Gender::Male;
  if (l == "female" || l == "f" || l == "woman") return Gender::Female;
  return std::nullopt;
}

Domain Domain::parse(std::string_view name) {
  auto lowered = text::to_lower(text::trim(name));
  std::replace_if(lowered.begin(), lowered.end(), [](char c) { return c == '/' || c == ' ' || c == '-'; }, '_');
  for (const auto& [kind, n] : kDomainNames) {
    if (lowered == n) return Domain(kind);
  }
  Domain d;
  d.kind_ = Kind::Other;
  d.other_ = std::string(name);
  return d;
}

std::string Domain::name() const {
  for (const auto& [kind, n] : kDomainNames) {
    if (kind == kind_) return std::string(n);
  }
  return other_.empty() ? "other" : other_;
}

std::size_t Scenario::count_characters(Gender g) const {
  return static_cast<std::size_t>(
      std::count_if(characters.begin(), characters.end(), [g](const auto& c) { return c.gender == g; }));
}

std::size_t Scenario::count_tasks(Gender g) const {
  return static_cast<std::size_t>(
      std::count_if(tasks.begin(), tasks.end(), [g](const auto& t) { return t.stereotype == g; }));
}

const Character* Scenario::find_character(std::string_view name) const {
  for (const auto& c : characters) {
    if (text::iequals(c.name, name)) return &c;
  }
  return nullptr;
}

const TaskSpec* Scenario::find_task(std::string_view task_id) const {
  for (const auto& t : tasks) {
    if (t.id == task_id) return &t;
  }
  return nullptr;
}

const Scenario* Corpus::find(std::string_view scenario_id) const {
  for (const auto& s : scenarios) {
    if (s.id == scenario_id) return &s;
  }
  return nullptr;
}

std::vector<std::string> validate_scenario(const Scenario& s) {
  std::vector<std::string> out;
  if (s.id.empty()) out.emplace_back("empty scenario id");
  if (s.tasks.size() != s.characters.size()) {
    out.push_back("task/character count mismatch (" + std::to_string(s.tasks.size()) + " tasks, " +
                  std::to_string(s.characters.size()) + " characters)");
  }
  if (s.tasks.size() < kMinTasks || s.tasks.size() > kMaxTasks) {
    out.push_back("task count " + std::to_string(s.tasks.size()) + " outside [" +
                  std::to_string(kMinTasks) + ", " + std::to_string(kMaxTasks) + "]");
  }
  for (Gender g : {Gender::Male, Gender::Female}) {
    if (s.count_tasks(g) != s.count_characters(g)) {
      out.push_back(std::string("stereotype/gender count mismatch for ") +
                    (g == Gender::Male ? "Male" : "Female"));
      break;
    }
  }
  std::set<std::string> names;
  bool dup_name = false, empty_name = false;
  for (const auto& c : s.characters) {
    if (c.name.empty()) empty_name = true;
    if (!names.insert(text::to_lower(c.name)).second) dup_name = true;
  }
  if (empty_name) out.emplace_back("empty character name");
  if (dup_name) out.emplace_back("duplicate character name");
  std::set<std::string> ids;
  bool dup_id = false, empty_id = false, empty_desc = false;
  for (const auto& t : s.tasks) {
    if (t.id.empty()) empty_id = true;
    if (t.description.empty()) empty_desc = true;
    if (!ids.insert(t.id).second) dup_id = true;
  }
  if (empty_id) out.emplace_back("empty task id");
  if (empty_desc) out.emplace_back("empty task description");
  if (dup_id) out.emplace_back("duplicate task id");
  return out;
}

std::vector<std::string> scenario_warnings(const Scenario& s) {
  std::vector<std::string> out;
  auto males = s.count_characters(Gender::Male);
  auto females = s.count_characters(Gender::Female);
  if (males == 0 || females == 0) {
    out.push_back("scenario " + s.id + ": single-gender cast; every assignment classifies Neutral");
    return out;
  }
  // A balanced pair needs two same-stereotype tasks; with k tasks of a
  // stereotype at most floor(k/2) pairs exist.
  auto reachable = s.count_tasks(Gender::Male) / 2 + s.count_tasks(Gender::Female) / 2;
  if (reachable < std::min(males, females)) {
    out.push_back("scenario " + s.id + ": no assignment reaches min(F, M) balanced pairs; "
                  "Neutral is unreachable");
  }
  return out;
}

Scenario scenario_from_json(const json& j, const LoadOptions& opts) {
  std::string where = "scenario";
  check_fields(j, {"id", "domain", "description", "tasks", "characters"}, where, opts);
  Scenario s;
  s.id = require_string(j, "id", where);
  where = "scenario \"" + s.id + "\"";
  s.domain = Domain::parse(require_string(j, "domain", where));
  s.description = require_string(j, "description", where);
  for (const auto& t : require_array(j, "tasks", where)) {
    check_fields(t, {"id", "description", "stereotype"}, where + " task", opts);
    s.tasks.push_back({require_string(t, "id", where + " task"),
                       require_string(t, "description", where + " task"),
                       require_gender(t, "stereotype", where + " task")});
  }
  for (const auto& c : require_array(j, "characters", where)) {
    check_fields(c, {"name", "gender"}, where + " character", opts);
    s.characters.push_back(
        {require_string(c, "name", where + " character"), require_gender(c, "gender", where + " character")});
  }
  return s;
}

Corpus corpus_from_json(const json& j, const LoadOptions& opts) {
  check_fields(j, {"name", "provenance", "scenarios"}, "corpus", opts);
  Corpus c;
  c.name = require_string(j, "name", "corpus");
  if (auto it = j.find("provenance"); it != j.end()) {
    if (!it->is_string()) parse_fail("corpus: field \"provenance\" must be a string");
    c.provenance = it->get<std::string>();
  }
  for (const auto& sj : require_array(j, "scenarios", "corpus")) {
    c.scenarios.push_back(scenario_from_json(sj, opts));
  }

  std::set<std::string> ids;
  for (const auto& s : c.scenarios) {
    auto violations = validate_scenario(s);
    if (!violations.empty()) {
      std::string msg = "scenario \"" + s.id + "\": ";
      for (std::size_t i = 0; i < violations.size(); ++i) msg += (i ? "; " : "") + violations[i];
      throw CorpusError(CorpusError::Kind::Validation, msg);
    }
    if (!ids.insert(s.id).second) {
      throw CorpusError(CorpusError::Kind::Validation, "duplicate scenario id \"" + s.id + "\"");
    }
    if (opts.on_warning) {
      for (const auto& w : scenario_warnings(s)) opts.on_warning(w);
    }
  }
  return c;
}

json to_json(const Scenario& s) {
  json tasks = json::array();
  for (const auto& t : s.tasks) {
    tasks.push_back({{"id", t.id}, {"description", t.description}, {"stereotype", to_string(t.stereotype)}});
  }
  json chars = json::array();
  for (const auto& c : s.characters) chars.push_back({{"name", c.name}, {"gender", to_string(c.gender)}});
  return {{"id", s.id},
          {"domain", s.domain.name()},
          {"description", s.description},
          {"tasks", std::move(tasks)},
          {"characters", std::move(chars)}};
}

json to_json(const Corpus& c) {
  json scenarios = json::array();
  for (const auto& s : c.scenarios) scenarios.push_back(to_json(s));
  return {{"name", c.name}, {"provenance", c.provenance}, {"scenarios", std::move(scenarios)}};
}

Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw CorpusError(CorpusError::Kind::Io, "cannot open corpus file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    parse_fail(path.string() + ": " + e.what());
  }
  return corpus_from_json(j, opts);
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw CorpusError(CorpusError::Kind::Io, "cannot write corpus file " + path.string());
  out << to_json(corpus).dump(2) << '\n';
}

std::string corpus_hash(const Corpus& corpus) { return text::hex64(text::fnv1a64(to_json(corpus).dump())); }

}  // namespace agentbias
