#include "carelink/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace carelink::text {

namespace {

constexpr std::array<std::string_view, 10> kNumberWords = {
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"};

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

}  // namespace

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string_view trim(std::string_view s) {
    const auto not_space = [](unsigned char c) { return std::isspace(c) == 0; };
    auto begin = std::find_if(s.begin(), s.end(), not_space);
    auto end = std::find_if(s.rbegin(), s.rend(), not_space).base();
    if (begin >= end) {
        return {};
    }
    return s.substr(static_cast<std::size_t>(begin - s.begin()), static_cast<std::size_t>(end - begin));
}

std::vector<std::string> split_lines(std::string_view s) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto nl = s.find('\n', start);
        if (nl == std::string_view::npos) {
            nl = s.size();
        }
        std::string_view line = s.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        lines.emplace_back(line);
        start = nl + 1;
    }
    return lines;
}

std::vector<std::string> words(std::string_view s) {
    std::vector<std::string> out;
    std::string current;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (is_word_char(c)) {
            current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (c == '\'' && !current.empty() && i + 1 < s.size() && is_word_char(s[i + 1])) {
            current.push_back('\'');
        } else if (!current.empty()) {
            out.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        out.push_back(std::move(current));
    }
    return out;
}

bool contains_phrase(std::string_view haystack, std::string_view phrase) {
    auto hay = words(haystack);
    auto needle = words(phrase);
    if (needle.empty() || needle.size() > hay.size()) {
        return false;
    }
    for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
        if (std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<std::ptrdiff_t>(i))) {
            return true;
        }
    }
    return false;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (prefix.size() > s.size()) {
        return false;
    }
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i]))) {
            return false;
        }
    }
    return true;
}

std::optional<int> parse_scale_number(std::string_view token) {
    if (token.empty()) {
        return std::nullopt;
    }
    if (std::all_of(token.begin(), token.end(), [](unsigned char c) { return std::isdigit(c) != 0; })) {
        if (token.size() > 2) {
            return std::nullopt;
        }
        int v = 0;
        for (char c : token) {
            v = v * 10 + (c - '0');
        }
        if (v >= 1 && v <= 10 && token.front() != '0') {
            return v;
        }
        return std::nullopt;
    }
    const auto lower = to_lower(token);
    for (std::size_t i = 0; i < kNumberWords.size(); ++i) {
        if (lower == kNumberWords[i]) {
            return static_cast<int>(i) + 1;
        }
    }
    return std::nullopt;
}

std::string_view number_word(int n) {
    if (n < 1 || n > 10) {
        return {};
    }
    return kNumberWords[static_cast<std::size_t>(n - 1)];
}

bool mentions_number(std::string_view text, int n) {
    for (const auto& w : words(text)) {
        if (parse_scale_number(w) == n) {
            return true;
        }
    }
    return false;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) {
            out.append(sep);
        }
        out.append(parts[i]);
    }
    return out;
}

}  // namespace carelink::text
