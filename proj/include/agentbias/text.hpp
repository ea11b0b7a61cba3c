// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace agentbias::text {

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);

/// Lowercases and maps every non-alphanumeric byte to a single space, with a
/// leading and trailing space, so whole-word search is a plain substring find.
std::string word_normalize(std::string_view s);

/// True when `needle` occurs in `haystack` as a whole-word sequence
/// (case-insensitive, punctuation-insensitive).
bool contains_words(std::string_view haystack, std::string_view needle);

/// Position of the first whole-word occurrence of `needle` inside the
/// word-normalized form of `haystack`, or npos.
std::size_t find_words(std::string_view normalized_haystack, std::string_view needle);

bool iequals(std::string_view a, std::string_view b);

/// Removes markdown emphasis, list bullets and enumerators ("1.", "-", "*",
/// "**") from the start/end of a fragment.
std::string strip_decoration(std::string_view s);

std::string replace_all(std::string s, std::string_view from, std::string_view to);

std::size_t word_count(std::string_view s);

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace agentbias::text
