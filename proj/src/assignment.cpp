// SPDX-License-Identifier: Apache-2.0
#include "agentbias/assignment.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>
#include <sstream>
#include <vector>

#include "agentbias/text.hpp"

namespace agentbias {
namespace {

std::string task_id_words(const TaskSpec& t) {
  std::string s = t.id;
  std::replace(s.begin(), s.end(), '_', ' ');
  std::replace(s.begin(), s.end(), '-', ' ');
  return s;
}

std::string description_prefix(const TaskSpec& t, std::size_t words) {
  std::istringstream in(text::word_normalize(t.description));
  std::string out, w;
  for (std::size_t n = 0; n < words && in >> w; ++n) out += (out.empty() ? "" : " ") + w;
  return out;
}

/// Index of the single task named exactly by `label`, else of the single task
/// whose id/description occurs inside it; -1 when none or ambiguous.
int match_task_label(std::string_view label, const Scenario& s) {
  auto norm = text::word_normalize(text::strip_decoration(label));
  std::vector<int> exact, contained;
  for (std::size_t i = 0; i < s.tasks.size(); ++i) {
    const auto& t = s.tasks[i];
    auto id_norm = text::word_normalize(task_id_words(t));
    auto desc_norm = text::word_normalize(t.description);
    if (norm == id_norm || norm == desc_norm) {
      exact.push_back(static_cast<int>(i));
    } else if (text::find_words(norm, task_id_words(t)) != std::string::npos ||
               text::find_words(norm, t.description) != std::string::npos) {
      contained.push_back(static_cast<int>(i));
    }
  }
  if (exact.size() == 1) return exact.front();
  if (exact.empty() && contained.size() == 1) return contained.front();
  return -1;
}

/// Tasks mentioned anywhere in a line: by id words, full description, or the
/// description's first three words.
std::vector<int> tasks_mentioned(std::string_view normalized_line, const Scenario& s) {
  std::vector<int> out;
  for (std::size_t i = 0; i < s.tasks.size(); ++i) {
    const auto& t = s.tasks[i];
    if (text::find_words(normalized_line, task_id_words(t)) != std::string::npos ||
        text::find_words(normalized_line, t.description) != std::string::npos ||
        text::find_words(normalized_line, description_prefix(t, 3)) != std::string::npos) {
      out.push_back(static_cast<int>(i));
    }
  }
  return out;
}

std::vector<int> characters_mentioned(std::string_view normalized, const Scenario& s) {
  std::vector<int> out;
  for (std::size_t i = 0; i < s.characters.size(); ++i) {
    if (text::find_words(normalized, s.characters[i].name) != std::string::npos) out.push_back(static_cast<int>(i));
  }
  return out;
}

bool looks_like_name(std::string_view candidate) {
  auto c = text::trim(candidate);
  if (c.empty() || !std::isupper(static_cast<unsigned char>(c.front()))) return false;
  return text::word_count(c) <= 3;
}

bool is_non_name_word(std::string_view candidate) {
  static const std::array<std::string_view, 8> kWords{"me", "myself", "i", "you", "everyone",
                                                      "none", "nobody", "tbd"};
  auto l = text::to_lower(text::trim(candidate));
  return std::find(kWords.begin(), kWords.end(), l) != kWords.end();
}

struct Builder {
  const Scenario& scenario;
  std::vector<int> assignee;  // per task, -1 unset
  std::vector<std::string> rationale;
  std::optional<ParseFailure> failure;
  std::string raw;

  Builder(const Scenario& s, std::string_view text)
      : scenario(s), assignee(s.tasks.size(), -1), rationale(s.tasks.size()), raw(text) {}

  void fail(ParseDiagnosis d, std::string detail) {
    if (!failure) failure = ParseFailure{raw, d, std::move(detail)};
  }

  void set(int task, int character, std::string reason) {
    if (assignee[task] == -1) {
      assignee[task] = character;
      rationale[task] = std::move(reason);
    } else if (assignee[task] != character) {
      fail(ParseDiagnosis::Unparseable, "task \"" + scenario.tasks[task].id + "\" assigned to both " +
                                            scenario.characters[assignee[task]].name + " and " +
                                            scenario.characters[character].name);
    }
  }
};

std::string clean_reason(std::string_view rest) {
  auto r = text::trim(rest);
  while (!r.empty() && (r.front() == ',' || r.front() == '-' || r.front() == ';' || r.front() == ':')) {
    r = text::trim(std::string_view(r).substr(1));
  }
  return text::strip_decoration(r);
}

/// Strategy 1: "<task>: <character>, <reason>" (or "<character>: <task>").
/// Returns true when the line was consumed.
bool try_labelled_line(std::string_view line, Builder& b) {
  const auto& s = b.scenario;
  for (std::size_t colon = line.find(':'); colon != std::string_view::npos; colon = line.find(':', colon + 1)) {
    auto left = line.substr(0, colon);
    auto right = line.substr(colon + 1);
    int task = match_task_label(left, s);
    if (task < 0) {
      // "<character>: <task>" variant.
      auto label = text::strip_decoration(left);
      const Character* who = s.find_character(label);
      if (who == nullptr) continue;
      auto tasks = tasks_mentioned(text::word_normalize(right), s);
      if (tasks.size() != 1) continue;
      int ci = static_cast<int>(who - s.characters.data());
      b.set(tasks.front(), ci, "");
      return true;
    }

    auto cut = right.size();
    for (std::string_view delim : {",", "(", ";", ".", " - ", " because", " as ", " since "}) {
      auto p = right.find(delim);
      if (p != std::string_view::npos && p > 0) cut = std::min(cut, p);
    }
    auto candidate = text::strip_decoration(right.substr(0, cut));
    std::string reason = clean_reason(right.substr(std::min(cut, right.size())));

    if (const Character* who = s.find_character(candidate)) {
      b.set(task, static_cast<int>(who - s.characters.data()), std::move(reason));
      return true;
    }
    auto in_candidate = characters_mentioned(text::word_normalize(candidate), s);
    if (in_candidate.size() == 1) {
      b.set(task, in_candidate.front(), std::move(reason));
      return true;
    }
    if (in_candidate.size() > 1) {
      b.fail(ParseDiagnosis::Unparseable, "several characters named for task \"" + s.tasks[task].id + "\"");
      return true;
    }
    if (is_non_name_word(candidate)) {
      b.fail(ParseDiagnosis::Unparseable, "no character named for task \"" + s.tasks[task].id + "\"");
      return true;
    }
    if (looks_like_name(candidate)) {
      b.fail(ParseDiagnosis::UnknownName, "unknown name \"" + candidate + "\"");
      return true;
    }
    auto in_line = characters_mentioned(text::word_normalize(right), s);
    if (in_line.size() == 1) {
      b.set(task, in_line.front(), std::move(reason));
      return true;
    }
    if (in_line.size() > 1) {
      b.fail(ParseDiagnosis::Unparseable, "several characters named for task \"" + s.tasks[task].id + "\"");
      return true;
    }
    return false;
  }
  return false;
}

/// Strategy 2: a line mentioning exactly one task and at least one character.
void try_mention_line(std::string_view line, Builder& b) {
  auto norm = text::word_normalize(line);
  auto tasks = tasks_mentioned(norm, b.scenario);
  if (tasks.size() != 1) return;
  auto chars = characters_mentioned(norm, b.scenario);
  if (chars.empty()) return;
  if (chars.size() > 1) {
    b.fail(ParseDiagnosis::Unparseable,
           "line names several characters for task \"" + b.scenario.tasks[tasks.front()].id + "\"");
    return;
  }
  b.set(tasks.front(), chars.front(), "");
}

/// Strategy 3: for tasks still missing, take the first character named after
/// the task's first mention and before the next task mention.
void scan_whole_text(std::string_view text_in, Builder& b) {
  const auto& s = b.scenario;
  auto norm = text::word_normalize(text_in);
  std::vector<std::size_t> first_pos(s.tasks.size(), std::string::npos);
  for (std::size_t i = 0; i < s.tasks.size(); ++i) {
    for (const auto& needle :
         {task_id_words(s.tasks[i]), s.tasks[i].description, description_prefix(s.tasks[i], 3)}) {
      first_pos[i] = std::min(first_pos[i], text::find_words(norm, needle));
    }
  }
  for (std::size_t i = 0; i < s.tasks.size(); ++i) {
    if (b.assignee[i] != -1 || first_pos[i] == std::string::npos) continue;
    std::size_t end = norm.size();
    for (std::size_t j = 0; j < s.tasks.size(); ++j) {
      if (first_pos[j] != std::string::npos && first_pos[j] > first_pos[i]) end = std::min(end, first_pos[j]);
    }
    std::string_view window(norm);
    window = window.substr(first_pos[i], end - first_pos[i]);
    int best = -1;
    std::size_t best_pos = std::string::npos;
    for (std::size_t c = 0; c < s.characters.size(); ++c) {
      auto p = text::find_words(window, s.characters[c].name);
      if (p != std::string::npos && p < best_pos) {
        best_pos = p;
        best = static_cast<int>(c);
      }
    }
    if (best >= 0) b.set(static_cast<int>(i), best, "");
  }
}

}  // namespace

std::string_view to_string(Round r) {
  switch (r) {
    case Round::First: return "first";
    case Round::Reflection: return "reflection";
    case Round::Final: return "final";
    case Round::Single: return "single";
  }
  return "single";
}

std::optional<Round> parse_round(std::string_view s) {
  for (Round r : {Round::First, Round::Reflection, Round::Final, Round::Single}) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

std::string_view to_string(ParseDiagnosis d) {
  switch (d) {
    case ParseDiagnosis::MissingTask: return "missing_task";
    case ParseDiagnosis::DuplicateCharacter: return "duplicate_character";
    case ParseDiagnosis::UnknownName: return "unknown_name";
    case ParseDiagnosis::Unparseable: return "unparseable";
  }
  return "unparseable";
}

bool is_valid_for(const Assignment& a, const Scenario& s) {
  if (a.mapping.size() != s.tasks.size()) return false;
  std::set<std::string> used;
  for (const auto& t : s.tasks) {
    auto it = a.mapping.find(t.id);
    if (it == a.mapping.end()) return false;
    const Character* c = s.find_character(it->second);
    if (c == nullptr || !used.insert(c->name).second) return false;
  }
  return true;
}

ParseOutcome parse_assignment(std::string_view text_in, const Scenario& scenario, std::string_view author,
                              Round round) {
  Builder b(scenario, text_in);
  auto lines = text::split_lines(text_in);
  std::vector<bool> consumed(lines.size(), false);
  for (std::size_t i = 0; i < lines.size() && !b.failure; ++i) consumed[i] = try_labelled_line(lines[i], b);
  for (std::size_t i = 0; i < lines.size() && !b.failure; ++i) {
    if (!consumed[i]) try_mention_line(lines[i], b);
  }
  if (!b.failure && std::find(b.assignee.begin(), b.assignee.end(), -1) != b.assignee.end()) {
    scan_whole_text(text_in, b);
  }
  if (b.failure) return *b.failure;

  for (std::size_t i = 0; i < scenario.tasks.size(); ++i) {
    if (b.assignee[i] == -1) {
      return ParseFailure{std::string(text_in), ParseDiagnosis::MissingTask,
                          "no character found for task \"" + scenario.tasks[i].id + "\""};
    }
  }
  std::vector<int> seen(scenario.characters.size(), 0);
  for (int c : b.assignee) {
    if (++seen[c] > 1) {
      return ParseFailure{std::string(text_in), ParseDiagnosis::DuplicateCharacter,
                          scenario.characters[c].name + " received more than one task"};
    }
  }

  Assignment a;
  a.scenario_id = scenario.id;
  a.author = std::string(author);
  a.round = round;
  for (std::size_t i = 0; i < scenario.tasks.size(); ++i) {
    a.mapping[scenario.tasks[i].id] = scenario.characters[b.assignee[i]].name;
    if (!b.rationale[i].empty()) a.rationales[scenario.tasks[i].id] = b.rationale[i];
  }
  return a;
}

std::string render_assignment(const Assignment& a, const Scenario& scenario) {
  std::string out;
  for (const auto& t : scenario.tasks) {
    auto it = a.mapping.find(t.id);
    if (it == a.mapping.end()) continue;
    out += t.description + ": " + it->second;
    if (auto r = a.rationales.find(t.id); r != a.rationales.end() && !r->second.empty()) {
      out += ", " + r->second;
    }
    out += '\n';
  }
  return out;
}

}  // namespace agentbias
