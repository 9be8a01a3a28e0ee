#include "qrs_sqi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace afnet::qrs {

namespace {

constexpr double kRefractoryS = 0.25;

// Centered moving average, edge-truncated.
std::vector<double> moving_average(const std::vector<double>& x, std::size_t half) {
    const std::size_t n = x.size();
    std::vector<double> out(n);
    std::vector<double> cum(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) cum[i + 1] = cum[i] + x[i];
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(n - 1, i + half);
        out[i] = (cum[hi + 1] - cum[lo]) / static_cast<double>(hi - lo + 1);
    }
    return out;
}

double percentile(std::vector<double> v, double p) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const double idx = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(idx);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = idx - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

// Strict local maxima above thr; amplitude-priority refractory so a filter
// sidelobe never shadows the stronger true peak next to it.
std::vector<double> pick_peaks(const std::vector<double>& e, double fs, double thr) {
    const auto refr = static_cast<std::size_t>(kRefractoryS * fs);
    std::vector<std::size_t> cand;
    for (std::size_t i = 1; i + 1 < e.size(); ++i)
        if (e[i] > thr && e[i] > e[i - 1] && e[i] >= e[i + 1]) cand.push_back(i);
    std::sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
        if (e[a] != e[b]) return e[a] > e[b];
        return a < b;
    });
    std::vector<std::size_t> kept;
    for (const std::size_t i : cand) {
        bool blocked = false;
        for (const std::size_t k : kept)
            if ((i > k ? i - k : k - i) < refr) { blocked = true; break; }
        if (!blocked) kept.push_back(i);
    }
    std::sort(kept.begin(), kept.end());
    std::vector<double> times;
    times.reserve(kept.size());
    for (const std::size_t i : kept) times.push_back(static_cast<double>(i) / fs);
    return times;
}

void check_segment(const std::vector<double>& samples, double fs) {
    if (fs < 100.0) throw ConfigError("qrs: sampling rate must be >= 100 Hz");
    if (static_cast<double>(samples.size()) / fs < 2.0)
        throw ConfigError("qrs: segment too short (< 2 s)");
}

} // namespace

BeatList detect_qrs_energy(const std::vector<double>& samples, double fs) {
    check_segment(samples, fs);
    const std::size_t n = samples.size();
    // band-pass ~5-15 Hz as difference of two centered moving averages
    const auto half_hi = std::max<std::size_t>(1, static_cast<std::size_t>(fs / (2.0 * 15.0) / 2.0));
    const auto half_lo = std::max<std::size_t>(2, static_cast<std::size_t>(fs / (2.0 * 5.0) / 2.0));
    const auto smooth = moving_average(samples, half_hi);
    const auto baseline = moving_average(samples, half_lo);
    std::vector<double> band(n);
    for (std::size_t i = 0; i < n; ++i) band[i] = smooth[i] - baseline[i];
    // centered derivative, squared
    std::vector<double> sq(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double d = (band[i + 1] - band[i - 1]) * fs / 2.0;
        sq[i] = d * d;
    }
    // 150 ms moving-window integration
    const auto half_int = std::max<std::size_t>(1, static_cast<std::size_t>(0.075 * fs));
    const auto energy = moving_average(sq, half_int);
    // median term is a noise floor: stationary noise has median ~ peak level,
    // so unstructured segments produce almost no detections
    const double thr = std::max(0.3 * percentile(energy, 0.98), 4.0 * percentile(energy, 0.5));
    BeatList out;
    out.detector_id = DetectorId::ENERGY;
    out.times_s = pick_peaks(energy, fs, thr);
    return out;
}

BeatList detect_qrs_differential(const std::vector<double>& samples, double fs) {
    check_segment(samples, fs);
    const std::size_t n = samples.size();
    std::vector<double> slope(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) slope[i] = std::abs(samples[i] - samples[i - 1]) * fs;
    const auto half = std::max<std::size_t>(1, static_cast<std::size_t>(0.025 * fs));
    const auto smooth = moving_average(slope, half);
    const double thr = std::max(0.5 * percentile(smooth, 0.98), 2.5 * percentile(smooth, 0.5));
    BeatList out;
    out.detector_id = DetectorId::DIFFERENTIAL;
    out.times_s = pick_peaks(smooth, fs, thr);
    return out;
}

std::size_t match_beats(const BeatList& a, const BeatList& b, double tol_s) {
    if (tol_s <= 0.0) throw ConfigError("match_beats: tol_s must be positive");
    std::vector<bool> used(b.times_s.size(), false);
    std::size_t matched = 0;
    for (const double t : a.times_s) {
        // nearest unmatched beat in b within tolerance
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_j = b.times_s.size();
        const auto it = std::lower_bound(b.times_s.begin(), b.times_s.end(), t - tol_s);
        for (auto j = static_cast<std::size_t>(it - b.times_s.begin());
             j < b.times_s.size() && b.times_s[j] <= t + tol_s; ++j) {
            if (used[j]) continue;
            const double d = std::abs(b.times_s[j] - t);
            if (d < best) { best = d; best_j = j; }
        }
        if (best_j < b.times_s.size()) {
            used[best_j] = true;
            ++matched;
        }
    }
    return matched;
}

double bsqi(const BeatList& a, const BeatList& b, double tol_s) {
    if (a.times_s.empty()) return 0.0;
    return static_cast<double>(match_beats(a, b, tol_s)) / static_cast<double>(a.times_s.size());
}

} // namespace afnet::qrs
