#include "carelink/provider_pipeline.hpp"

#include "carelink/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <regex>
#include <set>

#include <nlohmann/json.hpp>

namespace carelink {

namespace {

// --- summary

enum class Section { none, chief, symptoms, questions, notes };

struct LabelMatch {
    Section section = Section::none;
    std::string rest;  // text after the colon
};

// Strips markdown emphasis/heading marks around a label line.
std::string_view strip_marks(std::string_view s) {
    s = text::trim(s);
    while (!s.empty() && (s.front() == '#' || s.front() == '*' || s.front() == '_')) {
        s.remove_prefix(1);
    }
    return text::trim(s);
}

LabelMatch match_label(std::string_view line) {
    static constexpr std::array<std::pair<std::string_view, Section>, 4> kLabels{{
        {summary_labels::chief_concern, Section::chief},
        {summary_labels::symptom_details, Section::symptoms},
        {summary_labels::patient_questions, Section::questions},
        {summary_labels::additional_notes, Section::notes},
    }};
    const auto body = strip_marks(line);
    for (const auto& [label, section] : kLabels) {
        if (!text::starts_with_ci(body, label)) {
            continue;
        }
        auto after = body.substr(label.size());
        while (!after.empty() && (after.front() == '*' || after.front() == '_' || after.front() == ' ')) {
            after.remove_prefix(1);
        }
        if (after.empty() || after.front() != ':') {
            continue;
        }
        after.remove_prefix(1);
        while (!after.empty() && (after.front() == '*' || after.front() == '_')) {
            after.remove_prefix(1);
        }
        return {section, std::string(text::trim(after))};
    }
    return {};
}

// "- item", "* item", "• item", "1. item", "1) item" -> "item"
std::string_view strip_bullet(std::string_view s) {
    s = text::trim(s);
    if (s.starts_with("\xE2\x80\xA2")) {
        return text::trim(s.substr(3));
    }
    if (!s.empty() && (s.front() == '-' || s.front() == '*' || s.front() == '+')) {
        return text::trim(s.substr(1));
    }
    std::size_t digits = 0;
    while (digits < s.size() && std::isdigit(static_cast<unsigned char>(s[digits]))) {
        ++digits;
    }
    if (digits > 0 && digits < s.size() && (s[digits] == '.' || s[digits] == ')')) {
        return text::trim(s.substr(digits + 1));
    }
    return s;
}

bool is_none(std::string_view item) {
    auto t = text::to_lower(text::trim(item));
    while (!t.empty() && (t.back() == '.' || t.back() == '!')) {
        t.pop_back();
    }
    return t == "none" || t == "n/a" || t == "none reported" || t == "no questions" || t == "none noted";
}

void add_item(ClinicalSummary& out, Section section, std::string_view raw_item) {
    const auto item = strip_bullet(raw_item);
    if (item.empty() || is_none(item)) {
        return;
    }
    switch (section) {
        case Section::chief:
            out.chief_concern = out.chief_concern.empty() ? std::string(item) : out.chief_concern + " " + std::string(item);
            break;
        case Section::symptoms: {
            const auto colon = item.find(':');
            if (colon == std::string_view::npos) {
                out.symptom_details.push_back({std::string(item), ""});
            } else {
                out.symptom_details.push_back(
                    {std::string(text::trim(item.substr(0, colon))), std::string(text::trim(item.substr(colon + 1)))});
            }
            break;
        }
        case Section::questions: out.patient_questions.emplace_back(item); break;
        case Section::notes: out.additional_notes.emplace_back(item); break;
        case Section::none: break;
    }
}

// --- highlights

std::string_view strip_wrapping_quotes(std::string_view s) {
    static constexpr std::array<std::pair<std::string_view, std::string_view>, 4> kPairs{{
        {"\"", "\""},
        {"'", "'"},
        {"\xE2\x80\x9C", "\xE2\x80\x9D"},  // curly double
        {"\xE2\x80\x98", "\xE2\x80\x99"},  // curly single
    }};
    s = text::trim(s);
    for (const auto& [open, close] : kPairs) {
        if (s.size() >= open.size() + close.size() && s.starts_with(open) && s.ends_with(close)) {
            return text::trim(s.substr(open.size(), s.size() - open.size() - close.size()));
        }
    }
    return s;
}

// --- normalization

struct NormalizedText {
    std::string text;
    std::vector<std::size_t> start;  // per normalized byte: first original byte of its character
    std::vector<std::size_t> end;    // per normalized byte: one past the last original byte
};

std::size_t utf8_length(unsigned char lead) {
    if (lead >= 0xC0 && lead <= 0xDF) {
        return 2;
    }
    if (lead >= 0xE0 && lead <= 0xEF) {
        return 3;
    }
    if (lead >= 0xF0 && lead <= 0xF7) {
        return 4;
    }
    return 1;
}

NormalizedText normalize_with_map(std::string_view s) {
    NormalizedText out;
    bool pending_space = false;
    auto emit = [&](char c, std::size_t b, std::size_t e) {
        if (pending_space && !out.text.empty()) {
            out.text.push_back(' ');
            out.start.push_back(b);
            out.end.push_back(b);
        }
        pending_space = false;
        out.text.push_back(c);
        out.start.push_back(b);
        out.end.push_back(e);
    };
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        if (c < 0x80) {
            if (std::isspace(c)) {
                pending_space = true;
            } else if (std::isalnum(c)) {
                emit(static_cast<char>(std::tolower(c)), i, i + 1);
            }
            ++i;
            continue;
        }
        std::size_t len = utf8_length(c);
        if (i + len > s.size()) {
            len = 1;
        }
        const auto b1 = len > 1 ? static_cast<unsigned char>(s[i + 1]) : 0;
        const auto b2 = len > 2 ? static_cast<unsigned char>(s[i + 2]) : 0;
        if (len == 3 && c == 0xE2 && b1 == 0x80 && b2 >= 0x90 && b2 <= 0xA7) {
            // General punctuation: dashes, curly quotes, ellipsis.
        } else if (len == 2 && c == 0xC2 && b1 == 0xA0) {
            pending_space = true;
        } else {
            for (std::size_t k = 0; k < len; ++k) {
                emit(s[i + k], i, i + len);
            }
        }
        i += len;
    }
    return out;
}

// --- risk

std::optional<RiskLevel> level_word(std::string_view w) {
    if (w == "low") {
        return RiskLevel::low;
    }
    if (w == "moderate" || w == "medium") {
        return RiskLevel::moderate;
    }
    if (w == "high") {
        return RiskLevel::high;
    }
    return std::nullopt;
}

std::string reasoning_after(std::string_view raw, std::size_t from) {
    auto rest = raw.substr(std::min(from, raw.size()));
    std::size_t i = 0;
    while (i < rest.size()) {
        const auto c = static_cast<unsigned char>(rest[i]);
        if (std::isalnum(c)) {
            break;
        }
        if (c >= 0x80) {
            // Skip a dash or other punctuation character as a whole.
            const auto len = utf8_length(c);
            if (len == 3 && c == 0xE2 && i + 1 < rest.size() && static_cast<unsigned char>(rest[i + 1]) == 0x80) {
                i += len;
                continue;
            }
            break;
        }
        ++i;
    }
    return std::string(text::trim(rest.substr(std::min(i, rest.size()))));
}

}  // namespace

ClinicalSummary parse_clinical_summary(std::string_view raw) {
    ClinicalSummary out;
    out.raw_model_output = std::string(raw);
    std::set<Section> seen;
    Section current = Section::none;
    for (const auto& line : text::split_lines(raw)) {
        if (text::trim(line).empty()) {
            continue;
        }
        const auto label = match_label(line);
        if (label.section != Section::none) {
            current = label.section;
            seen.insert(current);
            add_item(out, current, label.rest);
            continue;
        }
        add_item(out, current, line);
    }
    if (seen.empty()) {
        ClinicalSummary degraded;
        degraded.raw_model_output = out.raw_model_output;
        degraded.parse_warning = true;
        return degraded;
    }
    out.parse_warning = seen.size() != 4;
    return out;
}

std::vector<std::string> parse_highlight_quotes(std::string_view raw) {
    std::vector<std::string> out;
    const auto trimmed = text::trim(raw);
    if (trimmed.starts_with('[')) {
        const auto j = nlohmann::json::parse(trimmed, nullptr, false);
        if (j.is_array() && std::all_of(j.begin(), j.end(), [](const auto& e) { return e.is_string(); })) {
            for (const auto& e : j) {
                const auto q = text::trim(e.template get_ref<const std::string&>());
                if (!q.empty()) {
                    out.emplace_back(q);
                }
            }
            return out;
        }
    }
    for (const auto& line : text::split_lines(raw)) {
        const auto q = strip_wrapping_quotes(strip_bullet(line));
        if (q.empty() || is_none(q)) {
            continue;
        }
        out.emplace_back(q);
    }
    return out;
}

std::string normalize_for_match(std::string_view s) { return normalize_with_map(s).text; }

AnchorResult anchor_quotes(const std::vector<Turn>& turns, const std::vector<std::string>& quotes) {
    AnchorResult result;
    std::vector<std::pair<const Turn*, NormalizedText>> normalized;
    for (const auto& t : turns) {
        if (t.speaker == Speaker::patient) {
            normalized.emplace_back(&t, normalize_with_map(t.text));
        }
    }
    auto add = [&](const Turn& t, std::size_t b, std::size_t e) {
        HighlightSpan span;
        span.turn_index = t.turn_index;
        span.char_start = b;
        span.char_end = e;
        span.quote = t.text.substr(b, e - b);
        if (std::find(result.spans.begin(), result.spans.end(), span) == result.spans.end()) {
            result.spans.push_back(std::move(span));
        }
    };

    for (const auto& quote : quotes) {
        bool found = false;
        if (!quote.empty()) {
            for (const auto& [turn, norm] : normalized) {
                const auto pos = turn->text.find(quote);
                if (pos != std::string::npos) {
                    add(*turn, pos, pos + quote.size());
                    found = true;
                    break;
                }
            }
        }
        if (!found) {
            const auto nq = normalize_for_match(quote);
            if (!nq.empty()) {
                for (const auto& [turn, norm] : normalized) {
                    const auto pos = norm.text.find(nq);
                    if (pos != std::string::npos) {
                        add(*turn, norm.start[pos], norm.end[pos + nq.size() - 1]);
                        found = true;
                        break;
                    }
                }
            }
        }
        if (!found) {
            ++result.dropped_quotes;
        }
    }
    return result;
}

RiskAssessment parse_risk(std::string_view raw) {
    RiskAssessment out;
    out.raw_model_output = std::string(raw);
    const std::string lower = text::to_lower(raw);

    std::optional<RiskLevel> level;
    std::size_t level_end = std::string::npos;

    static const std::regex labelled(R"(\brisk(\s+level)?(\s+is)?\s*[^a-z0-9\s]{0,3}\s*(low|moderate|medium|high)\b)");
    std::smatch m;
    if (std::regex_search(lower, m, labelled)) {
        level = level_word(m.str(3));
        level_end = static_cast<std::size_t>(m.position(3) + m.length(3));
    }
    if (!level) {
        static const std::regex leading(R"(^[^a-z0-9]*(low|moderate|medium|high)\b)");
        if (std::regex_search(lower, m, leading)) {
            level = level_word(m.str(1));
            level_end = static_cast<std::size_t>(m.position(1) + m.length(1));
        }
    }
    if (!level) {
        static const std::regex any_level(R"(\b(low|moderate|medium|high)\b)");
        std::set<RiskLevel> distinct;
        std::size_t first_end = std::string::npos;
        for (auto it = std::sregex_iterator(lower.begin(), lower.end(), any_level); it != std::sregex_iterator();
             ++it) {
            distinct.insert(*level_word(it->str(1)));
            if (first_end == std::string::npos) {
                first_end = static_cast<std::size_t>(it->position(1) + it->length(1));
            }
        }
        if (distinct.size() == 1) {
            level = *distinct.begin();
            level_end = first_end;
        }
    }

    const auto reasoning_pos = lower.find("reasoning:");
    if (reasoning_pos != std::string::npos) {
        out.reasoning = std::string(text::trim(raw.substr(reasoning_pos + 10)));
    } else if (level) {
        out.reasoning = reasoning_after(raw, level_end);
    } else {
        out.reasoning = std::string(text::trim(raw));
    }

    out.level = level;
    out.needs_human_review = !level.has_value();
    return out;
}

}  // namespace carelink
