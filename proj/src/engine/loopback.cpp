#include "carelink/loopback.hpp"

#include "carelink/text.hpp"

#include <algorithm>
#include <array>

namespace carelink {

namespace {

constexpr std::array<std::string_view, 11> kNegations = {
    "no", "nope", "nah", "not", "wrong", "incorrect", "isn't", "wasn't", "don't", "doesn't", "never"};

constexpr std::array<std::string_view, 10> kAffirmations = {
    "yes", "yeah", "yep", "yup", "correct", "right", "exactly", "sure", "absolutely", "affirmative"};

// Slot-name tokens that say nothing about the topic.
constexpr std::array<std::string_view, 6> kGenericSlotWords = {"level", "score", "rating", "scale", "value", "of"};

template <std::size_t N>
bool in_list(const std::array<std::string_view, N>& list, std::string_view w) {
    return std::find(list.begin(), list.end(), w) != list.end();
}

bool is_rating_question(std::string_view question) {
    static constexpr std::array<std::string_view, 8> cues = {
        "scale", "rate", "rating", "1 to 10", "one to ten", "out of 10", "out of ten", "from 1"};
    return std::any_of(cues.begin(), cues.end(), [&](std::string_view c) { return text::contains_phrase(question, c); });
}

bool question_mentions_slot(const KeySlot& slot, const std::vector<std::string>& question_words) {
    std::string normalized = slot.slot_name;
    std::replace(normalized.begin(), normalized.end(), '_', ' ');
    std::replace(normalized.begin(), normalized.end(), '-', ' ');
    for (const auto& cue : text::words(normalized)) {
        if (in_list(kGenericSlotWords, cue)) {
            continue;
        }
        for (const auto& w : question_words) {
            if (w == cue || w == cue + "s") {
                return true;
            }
        }
    }
    return false;
}

}  // namespace

std::string_view to_string(Confirmation c) noexcept {
    switch (c) {
        case Confirmation::affirm: return "affirm";
        case Confirmation::negate: return "negate";
        case Confirmation::ambiguous: return "ambiguous";
    }
    return "ambiguous";
}

Confirmation classify_confirmation(std::string_view answer) {
    bool affirm = false;
    for (const auto& w : text::words(answer)) {
        if (in_list(kNegations, w)) {
            return Confirmation::negate;
        }
        if (in_list(kAffirmations, w)) {
            affirm = true;
        }
    }
    return affirm ? Confirmation::affirm : Confirmation::ambiguous;
}

std::optional<int> extract_scale_value(std::string_view answer) {
    const auto tokens = text::words(answer);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto value = text::parse_scale_number(tokens[i]);
        if (!value) {
            continue;
        }
        // "1 to 10" / "1 through 10" describe the scale, not an answer.
        if (i + 2 < tokens.size() && (tokens[i + 1] == "to" || tokens[i + 1] == "through") &&
            text::parse_scale_number(tokens[i + 2])) {
            i += 2;
            continue;
        }
        // Denominator of "N out of 10".
        if (i >= 2 && tokens[i - 1] == "of" && tokens[i - 2] == "out") {
            continue;
        }
        return value;
    }
    return std::nullopt;
}

std::optional<LoopbackCandidate> detect_loopback(const ConversationProtocol& protocol, std::string_view question,
                                                 std::string_view answer, const std::set<ValueKind>& loopback_kinds) {
    const auto question_words = text::words(question);
    for (const auto& slot : protocol.key_information) {
        if (loopback_kinds.count(slot.value_kind) == 0 || !question_mentions_slot(slot, question_words)) {
            continue;
        }
        switch (slot.value_kind) {
            case ValueKind::scalar_1_to_10: {
                if (!is_rating_question(question)) {
                    continue;
                }
                if (auto v = extract_scale_value(answer)) {
                    return LoopbackCandidate{slot.slot_name, std::to_string(*v)};
                }
                return std::nullopt;
            }
            case ValueKind::yes_no: {
                const auto c = classify_confirmation(answer);
                if (c == Confirmation::ambiguous) {
                    return std::nullopt;
                }
                return LoopbackCandidate{slot.slot_name, c == Confirmation::affirm ? "yes" : "no"};
            }
            case ValueKind::free_text: {
                const auto trimmed = text::trim(answer);
                if (trimmed.empty()) {
                    return std::nullopt;
                }
                return LoopbackCandidate{slot.slot_name, std::string(trimmed)};
            }
        }
    }
    return std::nullopt;
}

}  // namespace carelink
