#ifndef AFNET_SYNTHETIC_HPP
#define AFNET_SYNTHETIC_HPP

#include <string>
#include <vector>

#include "signal_io.hpp"

namespace afnet::synth {

struct SynthConfig {
    std::uint64_t seed = 0;
    double duration_s = 300.0;
    double fs_hz = 200.0;
    std::vector<std::pair<io::RhythmLabel, double>> rhythm_segments; // (label, seconds)
    double af_fwave_amp_mv = 0.3;
    double af_fwave_freq_hz = 6.0;
    double nsr_rr_s = 0.85;
    double nsr_rr_jitter_s = 0.03;
    double af_rr_irregularity = 0.25; // RR coefficient of variation
    double noise_std_mv = 0.03;
    double dropout_prob = 0.0; // chance a 30-s span is pure noise
    double qrs_amp_mv = 1.0;
    double polarity = 1.0;
    std::vector<double> lead_gains = {1.0}; // one lead per entry
    std::optional<double> age_years = 60.0;
};

// Deterministic per seed. Annotations are emitted at every QRS center with
// the enclosing segment's rhythm.
io::EcgRecording generate(const SynthConfig& cfg);

// Amplitude/polarity shifts applied to one split, for generalization
// experiments.
struct DomainShift {
    double gain = 1.0;
    double fwave_scale = 1.0;
    double polarity_flip_prob = 0.0; // per recording
};

struct CorpusConfig {
    std::string out_dir;
    std::size_t n_train = 60, n_val = 10, n_test = 20;
    double duration_s = 600.0;
    double af_prevalence = 0.2;    // target corpus-level AF_l window fraction
    double nonaf_fraction = 0.3;   // recordings with zero burden
    double afl_fraction = 0.15;    // positive recordings that get an AFL run
    std::size_t n_leads = 1;
    double noise_std_mv = 0.03;
    double noise_std_max_mv = 0.08; // per-recording noise drawn in [min,max]
    double dropout_prob = 0.0;
    std::uint64_t seed = 0;
    DomainShift test_shift;
};

// Writes <out>/{train,val,test}/<id>/ recording directories plus a manifest
// CSV: recording_id,split,b_af_truth.
void generate_corpus(const CorpusConfig& cfg);

} // namespace afnet::synth

#endif
