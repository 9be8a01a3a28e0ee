#include "signal_io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace afnet::io {

std::string rhythm_name(RhythmLabel r) {
    switch (r) {
        case RhythmLabel::NSR: return "NSR";
        case RhythmLabel::AF: return "AF";
        case RhythmLabel::AFL: return "AFL";
        case RhythmLabel::AT: return "AT";
        case RhythmLabel::AB: return "AB";
        case RhythmLabel::OTHER: return "OTHER";
    }
    return "OTHER";
}

RhythmLabel parse_rhythm(const std::string& name, bool* warned) {
    if (warned) *warned = false;
    if (name == "NSR") return RhythmLabel::NSR;
    if (name == "AF") return RhythmLabel::AF;
    if (name == "AFL") return RhythmLabel::AFL;
    if (name == "AT") return RhythmLabel::AT;
    if (name == "AB") return RhythmLabel::AB;
    if (name == "OTHER") return RhythmLabel::OTHER;
    if (warned) *warned = true;
    std::fprintf(stderr, "warning: unknown rhythm label '%s' mapped to OTHER\n", name.c_str());
    return RhythmLabel::OTHER;
}

const std::vector<float>& EcgRecording::lead_samples(const std::string& name) const {
    for (const auto& [n, s] : leads)
        if (n == name) return s;
    throw ConfigError("unknown lead: " + name);
}

void EcgRecording::validate() const {
    if (fs_hz <= 0.0) throw ConfigError("fs_hz must be positive");
    if (!leads.empty()) {
        const std::size_t n = leads.front().second.size();
        for (const auto& [name, s] : leads)
            if (s.size() != n)
                throw ConfigError("sample-count mismatch across leads (lead " + name + ")");
    }
    double prev = -1.0;
    for (const auto& a : annotations) {
        if (a.time_s < 0.0) throw ConfigError("annotation time_s negative");
        if (a.time_s <= prev) throw ConfigError("non-monotonic annotations");
        prev = a.time_s;
    }
    const double dur = duration_s();
    if (!annotations.empty() && annotations.back().time_s > dur)
        throw ConfigError("annotation time_s beyond recording duration");
    if (age_years && *age_years < 0.0) throw ConfigError("age_years negative");
}

namespace {

std::vector<float> read_f32_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary | std::ios::ate);
    if (!f) throw ConfigError("missing lead file: " + p.string());
    const auto bytes = static_cast<std::size_t>(f.tellg());
    if (bytes % 4 != 0) throw ConfigError("lead file size not a multiple of 4: " + p.string());
    f.seekg(0);
    std::vector<float> out(bytes / 4);
    f.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
    if (!f) throw RuntimeError("read failed: " + p.string());
    return out;
}

} // namespace

EcgRecording read_recording(const std::string& path) {
    const fs::path dir(path);
    std::ifstream hf(dir / "header.json");
    if (!hf) throw ConfigError("malformed header: missing header.json in " + path);
    nlohmann::json h;
    try {
        hf >> h;
    } catch (const std::exception& e) {
        throw ConfigError("malformed header: " + std::string(e.what()));
    }
    EcgRecording rec;
    try {
        rec.recording_id = h.at("recording_id").get<std::string>();
        rec.fs_hz = h.at("fs_hz").get<double>();
        for (const auto& name : h.at("lead_names")) {
            const std::string n = name.get<std::string>();
            rec.leads.emplace_back(n, read_f32_file(dir / ("lead_" + n + ".f32")));
        }
        if (h.contains("age_years") && !h["age_years"].is_null())
            rec.age_years = h["age_years"].get<double>();
        if (h.contains("sex") && !h["sex"].is_null()) {
            const std::string s = h["sex"].get<std::string>();
            if (s == "F") rec.sex = Sex::F;
            else if (s == "M") rec.sex = Sex::M;
            else throw ConfigError("malformed header: sex must be F or M");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed header: " + std::string(e.what()));
    }

    std::ifstream af(dir / "annotations.csv");
    if (!af) throw ConfigError("missing annotations.csv in " + path);
    std::string line;
    if (!std::getline(af, line) || line != "time_s,rhythm")
        throw ConfigError("annotations.csv: bad header row");
    while (std::getline(af, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ConfigError("annotations.csv: malformed row");
        BeatAnnotation a;
        a.time_s = std::stod(line.substr(0, comma));
        a.rhythm = parse_rhythm(line.substr(comma + 1));
        rec.annotations.push_back(a);
    }
    rec.validate();
    return rec;
}

void write_recording(const EcgRecording& rec, const std::string& path) {
    rec.validate();
    const fs::path dir(path);
    fs::create_directories(dir);

    nlohmann::json h;
    h["recording_id"] = rec.recording_id;
    h["fs_hz"] = rec.fs_hz;
    auto names = nlohmann::json::array();
    for (const auto& [n, s] : rec.leads) names.push_back(n);
    h["lead_names"] = names;
    h["age_years"] = rec.age_years ? nlohmann::json(*rec.age_years) : nlohmann::json(nullptr);
    h["sex"] = rec.sex ? nlohmann::json(*rec.sex == Sex::F ? "F" : "M") : nlohmann::json(nullptr);
    {
        std::ofstream f(dir / "header.json");
        if (!f) throw RuntimeError("cannot write header.json in " + path);
        f << h.dump(2) << "\n";
    }
    for (const auto& [n, s] : rec.leads) {
        std::ofstream f(dir / ("lead_" + n + ".f32"), std::ios::binary);
        if (!f) throw RuntimeError("cannot write lead file for " + n);
        f.write(reinterpret_cast<const char*>(s.data()),
                static_cast<std::streamsize>(s.size() * sizeof(float)));
        if (!f) throw RuntimeError("lead file write failed for " + n);
    }
    {
        std::ofstream f(dir / "annotations.csv");
        if (!f) throw RuntimeError("cannot write annotations.csv in " + path);
        f << "time_s,rhythm\n";
        char buf[64];
        for (const auto& a : rec.annotations) {
            std::snprintf(buf, sizeof buf, "%.9g", a.time_s);
            f << buf << "," << rhythm_name(a.rhythm) << "\n";
        }
    }
}

std::vector<double> resample(const std::vector<double>& samples, double fs_in, double fs_out) {
    if (samples.empty()) throw ConfigError("resample: empty input");
    if (fs_in <= 0.0 || fs_out <= 0.0) throw ConfigError("resample: rates must be positive");
    if (fs_in == fs_out) return samples;
    const std::size_t n_out = static_cast<std::size_t>(
        std::llround(static_cast<double>(samples.size()) * fs_out / fs_in));
    std::vector<double> out(n_out);
    for (std::size_t k = 0; k < n_out; ++k) {
        const double t = static_cast<double>(k) / fs_out;
        const double pos = t * fs_in;
        const auto i = static_cast<std::size_t>(pos);
        if (i + 1 >= samples.size()) {
            out[k] = samples.back();
        } else {
            const double frac = pos - static_cast<double>(i);
            out[k] = samples[i] * (1.0 - frac) + samples[i + 1] * frac;
        }
    }
    return out;
}

} // namespace afnet::io
