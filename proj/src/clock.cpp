#include "subrelay/clock.hpp"

#include <thread>

namespace subrelay {

Duration SteadyClock::now() {
    return std::chrono::duration_cast<Duration>(std::chrono::steady_clock::now().time_since_epoch());
}

std::int64_t SteadyClock::wall_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

void SteadyClock::sleep_for(Duration d) {
    if (d.count() > 0) std::this_thread::sleep_for(d);
}

Clock& system_clock() {
    static SteadyClock clock;
    return clock;
}

}  // namespace subrelay
