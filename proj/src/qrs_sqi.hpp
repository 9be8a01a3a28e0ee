#ifndef AFNET_QRS_SQI_HPP
#define AFNET_QRS_SQI_HPP

#include <cstddef>
#include <vector>

#include "common.hpp"

namespace afnet::qrs {

enum class DetectorId { ENERGY, DIFFERENTIAL };

struct BeatList {
    std::vector<double> times_s; // strictly increasing
    DetectorId detector_id = DetectorId::ENERGY;
};

// Default acceptance window for beat matching (the conventional 150 ms).
inline constexpr double kMatchTolS = 0.15;
// Windows below this bSQI are considered poor quality.
inline constexpr double kBsqiThreshold = 0.8;

// Energy detector: centered moving-average band-pass (~5-15 Hz), centered
// derivative, squaring, 150 ms moving-window integration, percentile
// threshold, 250 ms refractory. Peak times are integration maxima.
BeatList detect_qrs_energy(const std::vector<double>& samples, double fs);

// Slope detector: smoothed absolute first difference with a percentile
// threshold; fails differently from the energy detector on noise.
BeatList detect_qrs_differential(const std::vector<double>& samples, double fs);

// Greedy one-to-one matching in time order: each beat in a takes the nearest
// unmatched beat in b within +-tol_s.
std::size_t match_beats(const BeatList& a, const BeatList& b, double tol_s);

// Fraction of primary-detector beats matched by the other detector.
// Empty primary list scores 0.
double bsqi(const BeatList& a, const BeatList& b, double tol_s = kMatchTolS);

} // namespace afnet::qrs

#endif
