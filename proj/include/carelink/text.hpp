#pragma once
// Small ASCII text helpers shared by the engine, prompts and parsers.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace carelink::text {

std::string to_lower(std::string_view s);
std::string_view trim(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);

// Lowercased word tokens; letters, digits and in-word apostrophes. "I'm" -> "i'm".
std::vector<std::string> words(std::string_view s);

// Whole-word / whole-phrase, case-insensitive.
bool contains_phrase(std::string_view haystack, std::string_view phrase);

bool starts_with_ci(std::string_view s, std::string_view prefix);

// "1".."10" or "one".."ten" (any case). Anything else -> nullopt.
std::optional<int> parse_scale_number(std::string_view token);

// The spelled-out word for 1..10, "" otherwise.
std::string_view number_word(int n);

// True when text mentions n as a standalone digit token or number word.
bool mentions_number(std::string_view text, int n);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace carelink::text
