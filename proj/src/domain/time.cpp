#include "carelink/time.hpp"

#include "carelink/error.hpp"

#include <cctype>
#include <ctime>

#include <fmt/format.h>

namespace carelink {

namespace {

bool read_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > s.size()) {
        return false;
    }
    int v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
        if (std::isdigit(static_cast<unsigned char>(s[i])) == 0) {
            return false;
        }
        v = v * 10 + (s[i] - '0');
    }
    out = v;
    return true;
}

}  // namespace

Timestamp Timestamp::parse_iso8601(std::string_view text) {
    // YYYY-MM-DDTHH:MM:SS[.mmm]Z
    int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0, millis = 0;
    const bool shape_ok = text.size() >= 20 && text[4] == '-' && text[7] == '-' && text[10] == 'T' &&
                          text[13] == ':' && text[16] == ':' && read_int(text, 0, 4, year) &&
                          read_int(text, 5, 2, month) && read_int(text, 8, 2, day) && read_int(text, 11, 2, hour) &&
                          read_int(text, 14, 2, minute) && read_int(text, 17, 2, second);
    std::size_t pos = 19;
    bool ok = shape_ok;
    if (ok && pos < text.size() && text[pos] == '.') {
        ok = read_int(text, pos + 1, 3, millis);
        pos += 4;
    }
    ok = ok && pos + 1 == text.size() && text[pos] == 'Z';
    if (!ok || month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60) {
        throw ValidationError(fmt::format("invalid timestamp '{}'", text));
    }
    using namespace std::chrono;
    const auto ymd = year_month_day{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                                    std::chrono::day{static_cast<unsigned>(day)}};
    if (!ymd.ok()) {
        throw ValidationError(fmt::format("invalid calendar date '{}'", text));
    }
    const auto tp = sys_days{ymd} + hours{hour} + minutes{minute} + seconds{second} + milliseconds{millis};
    return Timestamp(time_point_cast<milliseconds>(tp));
}

std::string Timestamp::to_iso8601() const {
    using namespace std::chrono;
    const auto days_part = floor<days>(tp_);
    const year_month_day ymd{days_part};
    const hh_mm_ss hms{tp_ - days_part};
    return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}.{:03d}Z", static_cast<int>(ymd.year()),
                       static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), hms.hours().count(),
                       hms.minutes().count(), hms.seconds().count(), hms.subseconds().count());
}

Timestamp SystemClock::now() const {
    return Timestamp(std::chrono::time_point_cast<Timestamp::Duration>(std::chrono::system_clock::now()));
}

}  // namespace carelink
