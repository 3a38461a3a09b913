#include "subrelay/latency_model.hpp"

#include <cmath>
#include <string>

#include "subrelay/errors.hpp"

namespace subrelay::latency {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw DomainError(what);
}

bool finite_non_negative(double v) { return std::isfinite(v) && v >= 0.0; }

}  // namespace

void RateConstants::validate() const {
    require(std::isfinite(reading_wpm) && reading_wpm > 0.0, "reading_wpm must be positive");
    require(std::isfinite(speaking_wpm) && speaking_wpm > 0.0, "speaking_wpm must be positive");
}

void TimingParams::validate() const {
    require(std::isfinite(sigma) && sigma > 0.0 && sigma <= 1.0, "sigma must lie in (0, 1]");
    require(finite_non_negative(gamma_s), "gamma must be non-negative");
    require(finite_non_negative(t_trans_s), "t_trans must be non-negative");
    require(finite_non_negative(t_sum_s), "t_sum must be non-negative");
}

LatencyBreakdown transmission_time(const TimingParams& params, const RateConstants& rates) {
    params.validate();
    rates.validate();

    const double wc = static_cast<double>(params.wc);
    LatencyBreakdown out;
    out.reading_s = 60.0 * wc * params.sigma / rates.reading_wpm;
    out.speaking_s = 60.0 * wc / rates.speaking_wpm;
    out.cognition_s = params.gamma_s;
    out.translation_s = params.t_trans_s;
    out.summarization_s = params.t_sum_s;
    out.total_s = out.reading_s + out.speaking_s + out.cognition_s + out.translation_s + out.summarization_s;
    out.epsilon_s_per_word = 60.0 * (params.sigma / rates.reading_wpm + 1.0 / rates.speaking_wpm);
    return out;
}

double savings(std::int64_t wc, double sigma, const RateConstants& rates) {
    require(wc >= 0, "word count must be non-negative");
    require(std::isfinite(sigma) && sigma >= 0.0 && sigma <= 1.0, "sigma must lie in [0, 1]");
    rates.validate();
    return static_cast<double>(wc) * 60.0 * (1.0 - sigma) / rates.reading_wpm;
}

EpsilonBounds epsilon_bounds(const RateConstants& rates) {
    rates.validate();
    const double speak = 60.0 / rates.speaking_wpm;
    return {speak, speak + 60.0 / rates.reading_wpm};
}

DialogueResult simulate_dialogue(std::span<const TimingParams> turns, const RateConstants& rates) {
    require(!turns.empty(), "dialogue needs at least one turn");
    DialogueResult out;
    out.per_turn.reserve(turns.size());
    for (const auto& turn : turns) {
        out.per_turn.push_back(transmission_time(turn, rates));
        out.total_s += out.per_turn.back().total_s;
    }
    return out;
}

std::vector<SweepPoint> savings_sweep(std::int64_t wc, int steps, const RateConstants& rates) {
    require(steps >= 1, "sweep needs at least one step");
    std::vector<SweepPoint> points;
    points.reserve(static_cast<std::size_t>(steps) + 1);
    for (int i = 0; i <= steps; ++i) {
        const double sigma = static_cast<double>(i) / steps;
        points.push_back({sigma, savings(wc, sigma, rates),
                          60.0 * (sigma / rates.reading_wpm + 1.0 / rates.speaking_wpm)});
    }
    return points;
}

}  // namespace subrelay::latency
