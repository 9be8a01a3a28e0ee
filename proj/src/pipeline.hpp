#ifndef AFNET_PIPELINE_HPP
#define AFNET_PIPELINE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "evaluation.hpp"
#include "rawecgnet.hpp"
#include "synthetic.hpp"

namespace afnet::pipe {

// Recording directories found under root (any depth), sorted by path.
std::vector<std::string> find_recordings(const std::string& root);

void run_synth(const synth::CorpusConfig& cfg);

// Segments every recording under data_dir at 200 Hz and writes
// windows_<lead>.bin caches next to each recording.
void run_preprocess(const std::string& data_dir);

struct TrainOptions {
    std::string corpus_dir; // must contain train/ and val/
    std::string model_dir;  // checkpoint output
    std::string spec_overrides;
    bool no_dsu = false;
    bool no_bigru = false;
    bool single_lead = false;
    std::uint64_t seed = 0;
    model::TrainConfig train;
};
void run_train(const TrainOptions& opt);

struct PredictOptions {
    std::string model_dir;
    std::string data_dir;
    std::string out_csv;
    std::string lead; // empty: every lead
    std::size_t jobs = 1;
};
void run_predict(const PredictOptions& opt);

// One prediction-CSV row.
struct PredRow {
    std::string recording_id;
    std::string lead;
    double start_s = 0.0, end_s = 0.0;
    double prob = 0.0;
    bool pred = false;
};
std::vector<PredRow> read_prediction_csv(const std::string& path);
void write_prediction_csv(const std::vector<PredRow>& rows, const std::string& path);

// One (recording, lead) evaluated against its annotations.
struct EvalUnit {
    std::string recording_id;
    std::string lead;
    std::vector<win::GridCell> cells;
    double b_af_truth = 0.0; // over all cells
    double eaf = 0.0;        // over predicted cells
};
std::vector<EvalUnit> build_eval_units(const std::vector<PredRow>& rows,
                                       const std::string& data_dir);

eval::MetricsReport evaluate_units(const std::vector<EvalUnit>& units,
                                   std::size_t n_bootstrap, Rng& rng,
                                   std::vector<double>* f1_samples = nullptr);

struct EvaluateOptions {
    std::string pred_csv;
    std::string data_dir;
    std::string out_json; // empty: stdout table only
    std::size_t n_bootstrap = 100;
    std::uint64_t seed = 0;
};
eval::MetricsReport run_evaluate(const EvaluateOptions& opt);

struct CompareOptions {
    std::string pred_csv_a, pred_csv_b;
    std::string data_dir;
    std::string out_json;
    std::size_t n_bootstrap = 100;
    std::uint64_t seed = 0;
};
// Paired bootstrap (same resample stream) + Mann-Whitney on the F1 samples.
eval::MannWhitneyResult run_compare(const CompareOptions& opt);

struct ErrorsOptions {
    std::string pred_csv;
    std::string data_dir;
    std::string out_json;
};
// Returns per-tag error-cell counts, keyed by tag name.
std::map<std::string, std::size_t> run_errors(const ErrorsOptions& opt);

} // namespace afnet::pipe

#endif
