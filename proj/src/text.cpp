// SPDX-License-Identifier: Apache-2.0
#include "agentbias/text.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

namespace agentbias::text {

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return std::string(s);
}

std::vector<std::string> split_lines(std::string_view s) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto end = s.find('\n', start);
    if (end == std::string_view::npos) end = s.size();
    auto line = s.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    start = end + 1;
  }
  return lines;
}

std::string word_normalize(std::string_view s) {
  std::string out;
  out.reserve(s.size() + 2);
  out.push_back(' ');
  for (unsigned char c : s) {
    if (std::isalnum(c) || c >= 0x80) {
      out.push_back(static_cast<char>(std::tolower(c)));
    } else if (out.back() != ' ') {
      out.push_back(' ');
    }
  }
  if (out.back() != ' ') out.push_back(' ');
  return out;
}

std::size_t find_words(std::string_view normalized_haystack, std::string_view needle) {
  auto n = word_normalize(needle);
  if (n.size() <= 1) return std::string_view::npos;
  return normalized_haystack.find(n);
}

bool contains_words(std::string_view haystack, std::string_view needle) {
  return find_words(word_normalize(haystack), needle) != std::string_view::npos;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](unsigned char x, unsigned char y) {
           return std::tolower(x) == std::tolower(y);
         });
}

std::string strip_decoration(std::string_view s) {
  std::string cur = trim(s);
  bool changed = true;
  while (changed && !cur.empty()) {
    changed = false;
    for (std::string_view marker : {"**", "__", "*", "-", "•", "#", "`", "\"", "'"}) {
      if (cur.size() >= marker.size() && std::string_view(cur).substr(0, marker.size()) == marker) {
        cur = trim(std::string_view(cur).substr(marker.size()));
        changed = true;
      }
      if (cur.size() >= marker.size() &&
          std::string_view(cur).substr(cur.size() - marker.size()) == marker) {
        cur = trim(std::string_view(cur).substr(0, cur.size() - marker.size()));
        changed = true;
      }
    }
    // Enumerators such as "1." "2)" "Task 3:" are handled by callers; strip "1." / "1)".
    std::size_t digits = 0;
    while (digits < cur.size() && std::isdigit(static_cast<unsigned char>(cur[digits]))) ++digits;
    if (digits > 0 && digits < cur.size() && (cur[digits] == '.' || cur[digits] == ')')) {
      cur = trim(std::string_view(cur).substr(digits + 1));
      changed = true;
    }
  }
  return cur;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  if (from.empty()) return s;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

std::size_t word_count(std::string_view s) {
  std::size_t n = 0;
  bool in_word = false;
  for (unsigned char c : s) {
    bool space = std::isspace(c) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace agentbias::text
