#ifndef AFNET_EVALUATION_HPP
#define AFNET_EVALUATION_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "windowing.hpp"

namespace afnet::eval {

struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

struct BasicMetrics {
    std::optional<double> se, sp, ppv, f1; // empty = undefined (zero denominator)
};

enum class BurdenGroup { NonAF, Mild, Moderate, Severe };
std::string burden_group_name(BurdenGroup g);

struct Quartiles {
    double median = 0.0, q1 = 0.0, q3 = 0.0;
};

struct MetricsReport {
    BasicMetrics metrics;
    std::optional<double> auroc;
    Quartiles f1_ci; // bootstrap
    Quartiles abs_eaf; // per-recording |E_AF|, pooled
    std::map<BurdenGroup, Quartiles> eaf_by_group;
    std::map<BurdenGroup, std::size_t> group_counts;
    std::size_t n_cells = 0, n_recordings = 0;
};

// Cells with no prediction are excluded from counts.
ConfusionCounts confusion(const std::vector<win::GridCell>& cells);
BasicMetrics basic_metrics(const ConfusionCounts& c);

// Normalized Mann-Whitney statistic: P(score_pos > score_neg) + P(equal)/2,
// exact over all pairs. Empty when either class is missing.
std::optional<double> auroc(const std::vector<double>& scores, const std::vector<bool>& targets);

double af_burden(const std::vector<double>& lengths, const std::vector<bool>& indicators);
// Signed percentage error of the burden estimate.
double eaf(const std::vector<bool>& pred, const std::vector<bool>& truth,
           const std::vector<double>& lengths);

// Boundaries: 0 -> NonAF, (0,0.04] -> Mild, (0.04,0.8] -> Moderate, else Severe.
BurdenGroup group_by_burden(double b_af);

Quartiles quartiles(std::vector<double> values);

// Recording-level resampling with replacement; pooled F1 per resample
// (resamples where F1 is undefined are recorded as 0 when errors exist,
// skipped when the resample has no positive cells at all).
Quartiles bootstrap_f1(const std::vector<std::vector<win::GridCell>>& per_recording_cells,
                       std::size_t n_resamples, Rng& rng,
                       std::vector<double>* samples_out = nullptr);

struct MannWhitneyResult {
    double u = 0.0;       // statistic for sample a
    double p_value = 1.0; // two-sided, normal approximation with tie correction
};
MannWhitneyResult mann_whitney(const std::vector<double>& a, const std::vector<double>& b);

// Automatic error-analysis tags for FP/FN grid cells.
enum class ErrorTag { LowQuality, FnAfl, FnAf, MixedLabels, AtOrAb, HighHr, Other };
std::string error_tag_name(ErrorTag t);

struct CellError {
    std::size_t cell_index = 0;
    bool false_negative = false; // else false positive
    std::vector<ErrorTag> tags;
};

std::vector<CellError> categorize_errors(const std::vector<win::GridCell>& cells,
                                         const std::vector<io::BeatAnnotation>& annotations,
                                         const std::vector<win::Window>& windows);

} // namespace afnet::eval

#endif
