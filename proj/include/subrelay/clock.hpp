#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>

namespace subrelay {

using Duration = std::chrono::nanoseconds;

inline double to_seconds(Duration d) { return std::chrono::duration<double>(d).count(); }

inline Duration from_seconds(double s) {
    return std::chrono::duration_cast<Duration>(std::chrono::duration<double>(s));
}

// Time source for latency stamping and injected delays. Everything that
// measures or sleeps goes through here so tests can swap in virtual time.
class Clock {
public:
    virtual ~Clock() = default;

    // Monotonic time since an arbitrary origin.
    virtual Duration now() = 0;
    // Milliseconds since the Unix epoch, used for record timestamps.
    virtual std::int64_t wall_ms() = 0;
    virtual void sleep_for(Duration d) = 0;
};

class SteadyClock final : public Clock {
public:
    Duration now() override;
    std::int64_t wall_ms() override;
    void sleep_for(Duration d) override;
};

// Sleeping advances the clock instantly. Safe to share between threads; with
// concurrent sleepers a measured interval may include other threads' sleeps,
// so it is only ever an over-estimate of the injected delay.
class VirtualClock final : public Clock {
public:
    explicit VirtualClock(std::int64_t epoch_ms = 1'700'000'000'000) : epoch_ms_(epoch_ms) {}

    Duration now() override { return Duration(ticks_.load()); }
    std::int64_t wall_ms() override {
        return epoch_ms_ + std::chrono::duration_cast<std::chrono::milliseconds>(now()).count();
    }
    void sleep_for(Duration d) override {
        if (d.count() > 0) ticks_.fetch_add(d.count());
    }
    void advance(Duration d) { sleep_for(d); }

private:
    std::int64_t epoch_ms_;
    std::atomic<Duration::rep> ticks_{0};
};

// Process-wide real clock.
Clock& system_clock();

}  // namespace subrelay
