#ifndef AFNET_WINDOWING_HPP
#define AFNET_WINDOWING_HPP

#include <optional>
#include <string>
#include <vector>

#include "signal_io.hpp"

namespace afnet::win {

inline constexpr double kTargetFsHz = 200.0;
inline constexpr double kWindowS = 30.0;
inline constexpr std::size_t kWindowSamples = 6000;
inline constexpr double kCellS = 5.0;

struct Window {
    std::string recording_id;
    std::string lead_name;
    std::size_t index = 0;
    double start_s = 0.0, end_s = 0.0;
    std::vector<float> samples; // length 6000 @ 200 Hz
    io::RhythmLabel label = io::RhythmLabel::OTHER;
    bool target = false; // label in {AF, AFL}
    double bsqi = 0.0;
};

struct GridCell {
    double start_s = 0.0, end_s = 0.0;
    bool truth = false;
    std::optional<bool> prediction;
    std::optional<double> probability;
};

struct IntervalPrediction {
    double start_s = 0.0, end_s = 0.0;
    double prob = 0.0;
    bool pred = false;
};

// All leads linearly resampled to fs_out; annotations untouched.
io::EcgRecording resample_recording(const io::EcgRecording& rec, double fs_out = kTargetFsHz);

// Rhythm at time t: latest annotation at or before t (the first annotation's
// rhythm before it). OTHER when there are no annotations.
io::RhythmLabel rhythm_at(const std::vector<io::BeatAnnotation>& ann, double t);
// Rhythm occupying the most time in [start, end).
io::RhythmLabel majority_rhythm(const std::vector<io::BeatAnnotation>& ann,
                                double start, double end);

// 30-s non-overlapping windows over one lead; trailing remainder discarded.
// Recording must already be at 200 Hz. bSQI computed per window.
std::vector<Window> segment(const io::EcgRecording& rec, const std::string& lead);

// Training-set exclusion: keep bsqi >= 0.8. Never applied to test data.
std::vector<Window> exclude_for_training(const std::vector<Window>& windows);

struct RecordingDecision {
    bool keep = true;
    std::string reason; // "age" | "annotations" | "quality" when dropped
};
RecordingDecision exclude_recording(const io::EcgRecording& rec,
                                    const std::vector<Window>& windows);

// Map interval predictions onto the 5-s grid: the interval with the greatest
// overlap wins each cell (tie: earlier interval); uncovered cells stay empty.
std::vector<GridCell> align_to_grid(const std::vector<IntervalPrediction>& preds,
                                    double duration_s);

// Ground truth per 5-s cell: majority rhythm collapsed to the combined label.
std::vector<bool> cell_truth(const std::vector<io::BeatAnnotation>& ann, double duration_s);

// Cache format: u64 count, then per window start_s f64, label u8, bsqi f32,
// 6000 f32 samples.
void save_window_cache(const std::vector<Window>& windows, const std::string& path);
std::vector<Window> load_window_cache(const std::string& path, const std::string& recording_id,
                                      const std::string& lead);

} // namespace afnet::win

#endif
