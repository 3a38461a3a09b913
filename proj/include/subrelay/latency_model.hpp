#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace subrelay::latency {

// Reading and speaking rates in words per minute. Defaults are the adult
// English silent-reading rate and the cross-language speaking rate.
struct RateConstants {
    double reading_wpm = 238.0;
    double speaking_wpm = 150.0;

    void validate() const;
};

// Inputs of the per-turn transmission-time model.
//   wc      words spoken (also the word count read, scaled by sigma)
//   sigma   summary compression ratio, 0 < sigma <= 1
//   gamma_s cognition time before answering
struct TimingParams {
    std::uint64_t wc = 0;
    double sigma = 1.0;
    double gamma_s = 0.0;
    double t_trans_s = 0.0;
    double t_sum_s = 0.0;

    void validate() const;
};

struct LatencyBreakdown {
    double reading_s = 0.0;
    double speaking_s = 0.0;
    double cognition_s = 0.0;
    double translation_s = 0.0;
    double summarization_s = 0.0;
    double total_s = 0.0;
    double epsilon_s_per_word = 0.0;
};

// Seconds-per-word range: lower bound exclusive (sigma -> 0), upper
// inclusive (sigma = 1).
struct EpsilonBounds {
    double min = 0.0;
    double max = 0.0;

    bool contains(double epsilon) const { return epsilon > min && epsilon <= max; }
};

// Time for one read -> think -> speak -> translate -> summarize step:
//   60*wc*sigma/reading + 60*wc/speaking + gamma + t_trans + t_sum
// Throws DomainError on invalid params or rates.
LatencyBreakdown transmission_time(const TimingParams& params, const RateConstants& rates = {});

// Seconds saved by compressing the read side to sigma, relative to sigma = 1.
// sigma = 0 is accepted as the theoretical limit.
double savings(std::int64_t wc, double sigma, const RateConstants& rates = {});

EpsilonBounds epsilon_bounds(const RateConstants& rates = {});

struct DialogueResult {
    double total_s = 0.0;
    std::vector<LatencyBreakdown> per_turn;
};

// Waterfall composition: turns happen strictly one after another.
DialogueResult simulate_dialogue(std::span<const TimingParams> turns, const RateConstants& rates = {});

struct SweepPoint {
    double sigma = 0.0;
    double savings_s = 0.0;
    double epsilon_s_per_word = 0.0;
};

// savings over sigma = 0, 1/steps, ..., 1 for a fixed word count.
std::vector<SweepPoint> savings_sweep(std::int64_t wc, int steps, const RateConstants& rates = {});

}  // namespace subrelay::latency
