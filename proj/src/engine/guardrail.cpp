#include "carelink/guardrail.hpp"

#include "carelink/error.hpp"

#include <spdlog/spdlog.h>

namespace carelink {

std::vector<std::string> GuardrailConfig::default_deny_patterns() {
    return {
        // "take 400mg", "take two tablets"
        R"(\btake\s+(\d+(\.\d+)?|one|two|three|four|half|a)\s*(mg|milligrams?|mcg|micrograms?|ml|milliliters?|g|grams?|tablets?|pills?|capsules?|puffs?|drops?|doses?)\b)",
        // "200 mg every 6 hours", "5ml twice a day"
        R"(\b\d+(\.\d+)?\s*(mg|mcg|ml|milligrams?)\b[^.?!]*\b(every|daily|twice|once|times a day)\b)",
        R"(\b(stop|start|increase|decrease|double|skip|change)\s+(taking\s+)?(your\s+)?(dose|dosage|medication|medicine|meds|pills?|prescription)\b)",
        R"(\byou\s+should\s+(take|stop\s+taking|start\s+taking|switch\s+to)\b)",
    };
}

Guardrail::Guardrail(GuardrailConfig config) : config_(std::move(config)) {
    patterns_.reserve(config_.deny_patterns.size());
    for (const auto& p : config_.deny_patterns) {
        try {
            patterns_.emplace_back(p, std::regex::ECMAScript | std::regex::icase);
        } catch (const std::regex_error& e) {
            throw ConfigurationError("invalid guardrail pattern '" + p + "': " + e.what());
        }
    }
}

GuardrailResult Guardrail::check(std::string_view reply) const {
    const std::string subject(reply);
    for (std::size_t i = 0; i < patterns_.size(); ++i) {
        if (std::regex_search(subject, patterns_[i])) {
            spdlog::info("guardrail flagged an assistant reply (pattern #{}); replaced with deflection", i);
            return {GuardrailVerdict::flagged, config_.deflection};
        }
    }
    return {GuardrailVerdict::pass, subject};
}

}  // namespace carelink
