#pragma once
// Content loopback: spotting key values in patient answers and classifying
// the patient's reply to a read-back confirmation.

#include "carelink/domain.hpp"

#include <optional>
#include <set>
#include <string>
#include <string_view>

namespace carelink {

struct LoopbackCandidate {
    std::string slot_name;
    std::string value;

    bool operator==(const LoopbackCandidate&) const = default;
};

enum class Confirmation { affirm, negate, ambiguous };
std::string_view to_string(Confirmation c) noexcept;

// Fixed lexicon; any negation word wins over affirmation words.
Confirmation classify_confirmation(std::string_view answer);

// First 1..10 value in the answer, digits or number words. Range mentions
// like "1 to 10" and denominators like "out of 10" are skipped.
std::optional<int> extract_scale_value(std::string_view answer);

// Picks the key-information slot the question is about and extracts a value
// of that slot's kind from the answer. Only slots whose kind is in
// loopback_kinds are considered.
std::optional<LoopbackCandidate> detect_loopback(const ConversationProtocol& protocol, std::string_view question,
                                                 std::string_view answer,
                                                 const std::set<ValueKind>& loopback_kinds = {ValueKind::scalar_1_to_10});

}  // namespace carelink
