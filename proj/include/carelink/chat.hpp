#pragma once

#include <string>
#include <string_view>

namespace carelink {

enum class Role { system, user, assistant };

inline std::string_view to_string(Role r) noexcept {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

struct ChatMessage {
    Role role = Role::user;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

}  // namespace carelink
