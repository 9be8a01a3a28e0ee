#ifndef AFNET_SIGNAL_IO_HPP
#define AFNET_SIGNAL_IO_HPP

#include <optional>
#include <string>
#include <vector>

#include "common.hpp"

namespace afnet::io {

enum class RhythmLabel { NSR, AF, AFL, AT, AB, OTHER };

// AF and AFl together form the positive class.
inline bool is_afl_combined(RhythmLabel r) {
    return r == RhythmLabel::AF || r == RhythmLabel::AFL;
}

std::string rhythm_name(RhythmLabel r);
// Unknown names map to OTHER; *warned set true when that happens.
RhythmLabel parse_rhythm(const std::string& name, bool* warned = nullptr);

struct BeatAnnotation {
    double time_s = 0.0;
    RhythmLabel rhythm = RhythmLabel::NSR;
};

enum class Sex { F, M };

struct EcgRecording {
    std::string recording_id;
    std::vector<std::pair<std::string, std::vector<float>>> leads; // millivolts
    double fs_hz = 0.0;
    std::vector<BeatAnnotation> annotations; // strictly increasing time_s
    std::optional<double> age_years;
    std::optional<Sex> sex;

    double duration_s() const {
        return leads.empty() ? 0.0 : static_cast<double>(leads.front().second.size()) / fs_hz;
    }
    const std::vector<float>& lead_samples(const std::string& name) const;

    // Throws ConfigError naming the offending field on violation.
    void validate() const;
};

// Directory format: header.json, lead_<name>.f32 (raw little-endian f32),
// annotations.csv with header row "time_s,rhythm".
EcgRecording read_recording(const std::string& path);
void write_recording(const EcgRecording& rec, const std::string& path);

// Linear interpolation onto the grid t_k = k / fs_out; points past the last
// input sample clamp to the final value. Output length round(n*fs_out/fs_in).
std::vector<double> resample(const std::vector<double>& samples, double fs_in, double fs_out);

} // namespace afnet::io

#endif
