#pragma once

#include <regex>
#include <string>
#include <string_view>
#include <vector>

namespace carelink {

struct GuardrailConfig {
    // ECMAScript regexes, matched case-insensitively against assistant replies.
    std::vector<std::string> deny_patterns = default_deny_patterns();
    std::string deflection =
        "I'm not a doctor, so I can't advise on medications or treatment. I can pass your question along to your "
        "healthcare provider so they can help you further.";

    static std::vector<std::string> default_deny_patterns();
};

enum class GuardrailVerdict { pass, flagged };

struct GuardrailResult {
    GuardrailVerdict verdict = GuardrailVerdict::pass;
    std::string text;  // original reply, or the deflection when flagged
};

// Blocks prescriptive medical directives (dosages, stop/start medication) in
// assistant replies. General explanations pass.
class Guardrail {
public:
    explicit Guardrail(GuardrailConfig config = {});

    GuardrailResult check(std::string_view reply) const;

private:
    GuardrailConfig config_;
    std::vector<std::regex> patterns_;
};

}  // namespace carelink
