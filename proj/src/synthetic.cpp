#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "windowing.hpp"

namespace fs = std::filesystem;

namespace afnet::synth {

namespace {

using io::RhythmLabel;

RhythmLabel label_of_time(const std::vector<std::pair<RhythmLabel, double>>& segs, double t) {
    double acc = 0.0;
    for (const auto& [r, d] : segs) {
        acc += d;
        if (t < acc) return r;
    }
    return segs.empty() ? RhythmLabel::NSR : segs.back().first;
}

void add_gaussian(std::vector<double>& base, double fs, double center_s, double amp,
                  double sigma_s) {
    const double half = 4.0 * sigma_s;
    const auto lo = static_cast<long>(std::max(0.0, (center_s - half) * fs));
    const auto hi = static_cast<long>(std::min(static_cast<double>(base.size()) - 1.0,
                                               (center_s + half) * fs));
    for (long i = lo; i <= hi; ++i) {
        const double dt = static_cast<double>(i) / fs - center_s;
        base[static_cast<std::size_t>(i)] += amp * std::exp(-dt * dt / (2.0 * sigma_s * sigma_s));
    }
}

double clip(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

} // namespace

io::EcgRecording generate(const SynthConfig& cfg) {
    if (cfg.duration_s <= 0.0 || cfg.fs_hz <= 0.0)
        throw ConfigError("synth: duration and fs must be positive");
    if (cfg.dropout_prob < 0.0 || cfg.dropout_prob > 1.0)
        throw ConfigError("synth: dropout_prob out of [0,1]");
    Rng rng(cfg.seed);
    auto segs = cfg.rhythm_segments;
    if (segs.empty()) segs = {{RhythmLabel::NSR, cfg.duration_s}};
    for (const auto& [r, d] : segs)
        if (d <= 0.0) throw ConfigError("synth: segment durations must be positive");

    const auto n = static_cast<std::size_t>(cfg.duration_s * cfg.fs_hz);
    std::vector<double> base(n, 0.0);
    std::vector<io::BeatAnnotation> ann;

    // beat schedule + per-beat waves
    const double af_rr_mean = 0.7;
    bool ab_long = false;
    double t = 0.4;
    while (t < cfg.duration_s - 0.1) {
        const RhythmLabel r = label_of_time(segs, t);
        ann.push_back({t, r});
        const double amp = cfg.qrs_amp_mv * (1.0 + 0.05 * rng.normal());
        add_gaussian(base, cfg.fs_hz, t, amp, 0.012);
        add_gaussian(base, cfg.fs_hz, t + 0.28, 0.25 * cfg.qrs_amp_mv, 0.05); // T
        if (r != RhythmLabel::AF && r != RhythmLabel::AFL)
            add_gaussian(base, cfg.fs_hz, t - 0.16, 0.15 * cfg.qrs_amp_mv, 0.02); // P
        double rr;
        switch (r) {
            case RhythmLabel::AF:
                rr = clip(rng.normal(af_rr_mean, cfg.af_rr_irregularity * af_rr_mean), 0.35, 1.4);
                break;
            case RhythmLabel::AFL:
                rr = clip(rng.normal(0.5, 0.01), 0.45, 0.55);
                break;
            case RhythmLabel::AT:
                rr = clip(rng.normal(0.5, 0.02), 0.4, 0.6);
                break;
            case RhythmLabel::AB:
                rr = ab_long ? 1.0 : 0.55;
                ab_long = !ab_long;
                break;
            default:
                rr = clip(rng.normal(cfg.nsr_rr_s, cfg.nsr_rr_jitter_s), 0.5, 1.4);
        }
        t += rr;
    }

    // atrial waves: frequency-jittered sinusoid in AF, sawtooth in AFL
    double phase = 0.0, freq_ar = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        freq_ar = 0.995 * freq_ar + 0.01 * rng.normal();
        const double f = cfg.af_fwave_freq_hz * (1.0 + 0.5 * freq_ar);
        phase += 2.0 * M_PI * f / cfg.fs_hz;
        const double ts = static_cast<double>(i) / cfg.fs_hz;
        const RhythmLabel r = label_of_time(segs, ts);
        if (r == RhythmLabel::AF) {
            base[i] += cfg.af_fwave_amp_mv * std::sin(phase);
        } else if (r == RhythmLabel::AFL) {
            const double cyc = ts * 5.0; // ~300 cycles/min flutter
            base[i] += 0.25 * cfg.qrs_amp_mv * 2.0 * (cyc - std::floor(cyc) - 0.5);
        }
    }

    // quality dropouts: whole 30-s spans replaced by noise
    const auto n_spans = static_cast<std::size_t>(cfg.duration_s / 30.0);
    for (std::size_t k = 0; k < n_spans; ++k) {
        if (!rng.bernoulli(cfg.dropout_prob)) continue;
        const auto lo = static_cast<std::size_t>(static_cast<double>(k) * 30.0 * cfg.fs_hz);
        const auto hi = std::min(n, static_cast<std::size_t>(static_cast<double>(k + 1) * 30.0 * cfg.fs_hz));
        for (std::size_t i = lo; i < hi; ++i) base[i] = 0.6 * rng.normal();
    }

    io::EcgRecording rec;
    rec.recording_id = "synth_" + std::to_string(cfg.seed);
    rec.fs_hz = cfg.fs_hz;
    rec.annotations = std::move(ann);
    rec.age_years = cfg.age_years;
    static const char* kLeadNames[] = {"CM5", "CC5", "CM5R", "L3", "L4", "L5"};
    for (std::size_t k = 0; k < cfg.lead_gains.size(); ++k) {
        std::vector<float> s(n);
        const double g = cfg.polarity * cfg.lead_gains[k];
        for (std::size_t i = 0; i < n; ++i)
            s[i] = static_cast<float>(g * base[i] + cfg.noise_std_mv * rng.normal());
        rec.leads.emplace_back(k < 6 ? kLeadNames[k] : "L" + std::to_string(k), std::move(s));
    }
    rec.validate();
    return rec;
}

namespace {

// Stratified burden quantile: zero with probability nonaf_fraction, then a
// low-burden band plus a 10% severe band, tuned so the corpus mean matches
// the requested prevalence.
double burden_quantile(double u, double prevalence, double nonaf_fraction) {
    if (u < nonaf_fraction) return 0.0;
    const double v = (u - nonaf_fraction) / (1.0 - nonaf_fraction);
    const double mean_pos = prevalence / (1.0 - nonaf_fraction);
    const double severe_share = 0.1, severe_mean = 0.925;
    double mean_low = (mean_pos - severe_share * severe_mean) / (1.0 - severe_share);
    mean_low = clip(mean_low, 0.04, 0.5);
    const double lo = 0.03;
    const double hi = clip(2.0 * mean_low - lo, lo + 0.02, 0.8);
    if (v < 1.0 - severe_share) return lo + (hi - lo) * (v / (1.0 - severe_share));
    return 0.85 + 0.15 * ((v - (1.0 - severe_share)) / severe_share);
}

std::vector<RhythmLabel> window_labels(std::size_t n_win, double burden, double afl_fraction,
                                       Rng& rng) {
    std::vector<RhythmLabel> labels(n_win, RhythmLabel::NSR);
    auto n_af = static_cast<std::size_t>(std::llround(burden * static_cast<double>(n_win)));
    if (burden > 0.0 && n_af == 0) n_af = 1;
    n_af = std::min(n_af, n_win);
    if (n_af == 0) {
        if (rng.bernoulli(0.1) && n_win > 2) // occasional atrial tachycardia window
            labels[1 + rng.integer(n_win - 2)] = RhythmLabel::AT;
        return labels;
    }
    const bool use_afl = rng.bernoulli(afl_fraction);
    const std::size_t n_runs = 1 + rng.integer(std::min<std::size_t>(3, n_af));
    std::vector<std::size_t> run_len(n_runs, n_af / n_runs);
    for (std::size_t i = 0; i < n_af % n_runs; ++i) ++run_len[i];
    std::size_t placed = 0;
    for (std::size_t r = 0; r < n_runs; ++r) {
        const std::size_t len = run_len[r];
        bool done = false;
        for (int attempt = 0; attempt < 30 && !done; ++attempt) {
            const std::size_t start = rng.integer(n_win - len + 1);
            bool free = true;
            for (std::size_t i = start; i < start + len; ++i)
                if (labels[i] != RhythmLabel::NSR) { free = false; break; }
            if (!free) continue;
            const RhythmLabel lab = (use_afl && r == 0) ? RhythmLabel::AFL : RhythmLabel::AF;
            for (std::size_t i = start; i < start + len; ++i) labels[i] = lab;
            done = true;
        }
        if (!done) {
            // fall back: first free stretch
            std::size_t i = 0;
            while (i < n_win && placed < n_af) {
                if (labels[i] == RhythmLabel::NSR) { labels[i] = RhythmLabel::AF; ++placed; }
                ++i;
            }
        }
        placed += len;
    }
    return labels;
}

std::vector<std::pair<RhythmLabel, double>> labels_to_segments(
    const std::vector<RhythmLabel>& labels) {
    std::vector<std::pair<RhythmLabel, double>> segs;
    for (const RhythmLabel l : labels) {
        if (!segs.empty() && segs.back().first == l) segs.back().second += 30.0;
        else segs.emplace_back(l, 30.0);
    }
    return segs;
}

} // namespace

void generate_corpus(const CorpusConfig& cfg) {
    if (cfg.out_dir.empty()) throw ConfigError("corpus: out_dir required");
    if (cfg.af_prevalence < 0.0 || cfg.af_prevalence > 1.0)
        throw ConfigError("corpus: af_prevalence out of [0,1]");
    if (cfg.n_leads < 1 || cfg.n_leads > 6) throw ConfigError("corpus: n_leads out of [1,6]");
    const auto n_win = static_cast<std::size_t>(cfg.duration_s / 30.0);
    if (n_win == 0) throw ConfigError("corpus: duration shorter than one window");

    fs::create_directories(cfg.out_dir);
    std::ofstream manifest(fs::path(cfg.out_dir) / "manifest.csv");
    if (!manifest) throw RuntimeError("cannot write manifest.csv");
    manifest << "recording_id,split,b_af_truth\n";

    static const std::vector<double> kGains = {1.0, 0.8, 1.2, 0.9, 1.1, 0.7};
    const std::pair<const char*, std::size_t> splits[] = {
        {"train", cfg.n_train}, {"val", cfg.n_val}, {"test", cfg.n_test}};
    std::uint64_t global_idx = 0;
    for (const auto& [split_name, count] : splits) {
        Rng placement = Rng::split(cfg.seed, std::hash<std::string>{}(split_name));
        // stratified burdens, shuffled
        std::vector<double> burdens(count);
        for (std::size_t i = 0; i < count; ++i)
            burdens[i] = burden_quantile((static_cast<double>(i) + 0.5) / static_cast<double>(count),
                                         cfg.af_prevalence, cfg.nonaf_fraction);
        std::shuffle(burdens.begin(), burdens.end(), placement.engine());

        const bool shifted = std::string(split_name) == "test";
        for (std::size_t i = 0; i < count; ++i, ++global_idx) {
            SynthConfig sc;
            sc.seed = Rng::split(cfg.seed, 1000 + global_idx).engine()();
            sc.duration_s = cfg.duration_s;
            const auto labels = window_labels(n_win, burdens[i], cfg.afl_fraction, placement);
            sc.rhythm_segments = labels_to_segments(labels);
            sc.noise_std_mv = placement.uniform(cfg.noise_std_mv, cfg.noise_std_max_mv);
            sc.dropout_prob = cfg.dropout_prob;
            sc.lead_gains.assign(kGains.begin(), kGains.begin() + static_cast<long>(cfg.n_leads));
            if (shifted) {
                sc.qrs_amp_mv *= cfg.test_shift.gain;
                sc.af_fwave_amp_mv *= cfg.test_shift.gain * cfg.test_shift.fwave_scale;
                if (placement.bernoulli(cfg.test_shift.polarity_flip_prob)) sc.polarity = -1.0;
            }
            io::EcgRecording rec = generate(sc);
            char idbuf[32];
            std::snprintf(idbuf, sizeof idbuf, "%s_%03zu", split_name, i);
            rec.recording_id = idbuf;
            io::write_recording(rec, (fs::path(cfg.out_dir) / split_name / idbuf).string());

            const auto truth = win::cell_truth(rec.annotations, cfg.duration_s);
            const double b_af = truth.empty() ? 0.0
                : static_cast<double>(std::count(truth.begin(), truth.end(), true)) /
                      static_cast<double>(truth.size());
            char row[128];
            std::snprintf(row, sizeof row, "%s,%s,%.6f\n", idbuf, split_name, b_af);
            manifest << row;
        }
    }
}

} // namespace afnet::synth
