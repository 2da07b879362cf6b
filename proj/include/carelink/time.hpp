#pragma once

#include <chrono>
#include <compare>
#include <mutex>
#include <string>
#include <string_view>

namespace carelink {

// UTC wall-clock instant with millisecond precision.
class Timestamp {
public:
    using Duration = std::chrono::milliseconds;
    using TimePoint = std::chrono::sys_time<Duration>;

    Timestamp() = default;
    explicit Timestamp(TimePoint tp) : tp_(tp) {}

    static Timestamp from_millis(std::int64_t ms) { return Timestamp(TimePoint(Duration(ms))); }

    // Accepts "YYYY-MM-DDTHH:MM:SS[.mmm]Z". Throws ValidationError otherwise.
    static Timestamp parse_iso8601(std::string_view text);

    std::int64_t millis() const noexcept { return tp_.time_since_epoch().count(); }
    TimePoint time_point() const noexcept { return tp_; }

    // Always "YYYY-MM-DDTHH:MM:SS.mmmZ".
    std::string to_iso8601() const;

    Timestamp operator+(Duration d) const { return Timestamp(tp_ + d); }
    Duration operator-(const Timestamp& other) const { return tp_ - other.tp_; }

    auto operator<=>(const Timestamp&) const = default;

private:
    TimePoint tp_{};
};

class Clock {
public:
    virtual ~Clock() = default;
    virtual Timestamp now() const = 0;
};

class SystemClock final : public Clock {
public:
    Timestamp now() const override;
};

// Test and replay clock; only moves when told to.
class ManualClock final : public Clock {
public:
    explicit ManualClock(Timestamp start = Timestamp::from_millis(1'700'000'000'000)) : now_(start) {}

    Timestamp now() const override {
        std::lock_guard lock(mu_);
        return now_;
    }
    void advance(Timestamp::Duration d) {
        std::lock_guard lock(mu_);
        now_ = now_ + d;
    }
    void set(Timestamp t) {
        std::lock_guard lock(mu_);
        now_ = t;
    }

private:
    mutable std::mutex mu_;
    Timestamp now_;
};

}  // namespace carelink
