#include "windowing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "qrs_sqi.hpp"

namespace afnet::win {

io::EcgRecording resample_recording(const io::EcgRecording& rec, double fs_out) {
    io::EcgRecording out = rec;
    if (rec.fs_hz == fs_out) return out;
    for (auto& [name, samples] : out.leads) {
        std::vector<double> d(samples.begin(), samples.end());
        const auto r = io::resample(d, rec.fs_hz, fs_out);
        samples.assign(r.begin(), r.end());
    }
    out.fs_hz = fs_out;
    return out;
}

io::RhythmLabel rhythm_at(const std::vector<io::BeatAnnotation>& ann, double t) {
    if (ann.empty()) return io::RhythmLabel::OTHER;
    if (t <= ann.front().time_s) return ann.front().rhythm;
    auto it = std::upper_bound(ann.begin(), ann.end(), t,
                               [](double v, const io::BeatAnnotation& a) { return v < a.time_s; });
    return std::prev(it)->rhythm;
}

io::RhythmLabel majority_rhythm(const std::vector<io::BeatAnnotation>& ann,
                                double start, double end) {
    if (ann.empty()) return io::RhythmLabel::OTHER;
    std::map<io::RhythmLabel, double> occupancy;
    double t = start;
    while (t < end) {
        const io::RhythmLabel r = rhythm_at(ann, t);
        // next change point after t
        auto it = std::upper_bound(ann.begin(), ann.end(), t,
                                   [](double v, const io::BeatAnnotation& a) { return v < a.time_s; });
        const double next = it == ann.end() ? end : std::min(end, it->time_s);
        occupancy[r] += std::max(0.0, next - t);
        if (next <= t) break;
        t = next;
    }
    io::RhythmLabel best = io::RhythmLabel::OTHER;
    double best_dur = -1.0;
    for (const auto& [r, d] : occupancy)
        if (d > best_dur) { best = r; best_dur = d; }
    return best;
}

std::vector<Window> segment(const io::EcgRecording& rec, const std::string& lead) {
    if (rec.fs_hz != kTargetFsHz)
        throw ConfigError("segment: recording must be resampled to 200 Hz first");
    const auto& samples = rec.lead_samples(lead);
    const auto n_windows = static_cast<std::size_t>(rec.duration_s() / kWindowS);
    std::vector<Window> out;
    out.reserve(n_windows);
    for (std::size_t i = 0; i < n_windows; ++i) {
        Window w;
        w.recording_id = rec.recording_id;
        w.lead_name = lead;
        w.index = i;
        w.start_s = static_cast<double>(i) * kWindowS;
        w.end_s = w.start_s + kWindowS;
        const std::size_t off = i * kWindowSamples;
        w.samples.assign(samples.begin() + static_cast<long>(off),
                         samples.begin() + static_cast<long>(off + kWindowSamples));
        w.label = majority_rhythm(rec.annotations, w.start_s, w.end_s);
        w.target = io::is_afl_combined(w.label);
        std::vector<double> d(w.samples.begin(), w.samples.end());
        const auto energy = qrs::detect_qrs_energy(d, kTargetFsHz);
        const auto diff = qrs::detect_qrs_differential(d, kTargetFsHz);
        w.bsqi = qrs::bsqi(energy, diff);
        out.push_back(std::move(w));
    }
    return out;
}

std::vector<Window> exclude_for_training(const std::vector<Window>& windows) {
    std::vector<Window> out;
    for (const auto& w : windows)
        if (w.bsqi >= qrs::kBsqiThreshold) out.push_back(w);
    return out;
}

RecordingDecision exclude_recording(const io::EcgRecording& rec,
                                    const std::vector<Window>& windows) {
    if (rec.age_years && *rec.age_years < 18.0) return {false, "age"};
    if (rec.annotations.empty()) return {false, "annotations"};
    if (!windows.empty()) {
        std::size_t poor = 0;
        for (const auto& w : windows)
            if (w.bsqi < qrs::kBsqiThreshold) ++poor;
        if (static_cast<double>(poor) / static_cast<double>(windows.size()) > 0.75)
            return {false, "quality"};
    }
    return {true, ""};
}

std::vector<GridCell> align_to_grid(const std::vector<IntervalPrediction>& preds,
                                    double duration_s) {
    if (duration_s <= 0.0) throw ConfigError("align_to_grid: duration must be positive");
    const auto n_cells = static_cast<std::size_t>(duration_s / kCellS);
    std::vector<GridCell> cells(n_cells);
    for (std::size_t k = 0; k < n_cells; ++k) {
        GridCell& cell = cells[k];
        cell.start_s = static_cast<double>(k) * kCellS;
        cell.end_s = cell.start_s + kCellS;
        double best_overlap = 0.0;
        const IntervalPrediction* best = nullptr;
        for (const auto& p : preds) {
            const double ov = std::min(cell.end_s, p.end_s) - std::max(cell.start_s, p.start_s);
            if (ov <= 0.0) continue;
            // tie: earlier interval wins (input order breaks equal starts)
            if (ov > best_overlap ||
                (ov == best_overlap && best != nullptr && p.start_s < best->start_s)) {
                best_overlap = ov;
                best = &p;
            }
        }
        if (best != nullptr) {
            cell.prediction = best->pred;
            cell.probability = best->prob;
        }
    }
    return cells;
}

std::vector<bool> cell_truth(const std::vector<io::BeatAnnotation>& ann, double duration_s) {
    const auto n_cells = static_cast<std::size_t>(duration_s / kCellS);
    std::vector<bool> out(n_cells, false);
    for (std::size_t k = 0; k < n_cells; ++k) {
        const double start = static_cast<double>(k) * kCellS;
        out[k] = io::is_afl_combined(majority_rhythm(ann, start, start + kCellS));
    }
    return out;
}

void save_window_cache(const std::vector<Window>& windows, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw RuntimeError("cannot write window cache: " + path);
    const std::uint64_t count = windows.size();
    f.write(reinterpret_cast<const char*>(&count), 8);
    for (const auto& w : windows) {
        if (w.samples.size() != kWindowSamples)
            throw RuntimeError("window cache: bad sample count");
        f.write(reinterpret_cast<const char*>(&w.start_s), 8);
        const auto label = static_cast<std::uint8_t>(w.label);
        f.write(reinterpret_cast<const char*>(&label), 1);
        const auto q = static_cast<float>(w.bsqi);
        f.write(reinterpret_cast<const char*>(&q), 4);
        f.write(reinterpret_cast<const char*>(w.samples.data()), kWindowSamples * sizeof(float));
    }
    if (!f) throw RuntimeError("window cache write failed: " + path);
}

std::vector<Window> load_window_cache(const std::string& path, const std::string& recording_id,
                                      const std::string& lead) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open window cache: " + path);
    std::uint64_t count = 0;
    f.read(reinterpret_cast<char*>(&count), 8);
    std::vector<Window> out;
    out.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        Window w;
        w.recording_id = recording_id;
        w.lead_name = lead;
        w.index = i;
        std::uint8_t label = 0;
        float q = 0.0f;
        f.read(reinterpret_cast<char*>(&w.start_s), 8);
        f.read(reinterpret_cast<char*>(&label), 1);
        f.read(reinterpret_cast<char*>(&q), 4);
        w.samples.resize(kWindowSamples);
        f.read(reinterpret_cast<char*>(w.samples.data()), kWindowSamples * sizeof(float));
        if (!f) throw ConfigError("truncated window cache: " + path);
        w.end_s = w.start_s + kWindowS;
        w.label = static_cast<io::RhythmLabel>(label);
        w.target = io::is_afl_combined(w.label);
        w.bsqi = q;
        out.push_back(std::move(w));
    }
    return out;
}

} // namespace afnet::win
