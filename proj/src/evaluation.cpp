#include "evaluation.hpp"

#include "qrs_sqi.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace afnet::eval {

std::string burden_group_name(BurdenGroup g) {
    switch (g) {
        case BurdenGroup::NonAF: return "non-AF";
        case BurdenGroup::Mild: return "mild";
        case BurdenGroup::Moderate: return "moderate";
        case BurdenGroup::Severe: return "severe";
    }
    return "?";
}

ConfusionCounts confusion(const std::vector<win::GridCell>& cells) {
    ConfusionCounts c;
    for (const auto& cell : cells) {
        if (!cell.prediction) continue;
        if (cell.truth && *cell.prediction) ++c.tp;
        else if (cell.truth && !*cell.prediction) ++c.fn;
        else if (!cell.truth && *cell.prediction) ++c.fp;
        else ++c.tn;
    }
    return c;
}

BasicMetrics basic_metrics(const ConfusionCounts& c) {
    BasicMetrics m;
    if (c.tp + c.fn > 0) m.se = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    if (c.tn + c.fp > 0) m.sp = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
    if (c.tp + c.fp > 0) m.ppv = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    if (m.se && m.ppv && (*m.se + *m.ppv) > 0.0)
        m.f1 = 2.0 * *m.se * *m.ppv / (*m.se + *m.ppv);
    else if (c.tp == 0 && (c.fp + c.fn) > 0)
        m.f1 = 0.0;
    return m;
}

std::optional<double> auroc(const std::vector<double>& scores, const std::vector<bool>& targets) {
    if (scores.size() != targets.size()) throw ConfigError("auroc: size mismatch");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (bool t : targets) n_pos += t ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // average ranks over ties; rank sum of positives
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            if (targets[order[k]]) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    const double u = rank_sum_pos -
                     static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double af_burden(const std::vector<double>& lengths, const std::vector<bool>& indicators) {
    if (lengths.size() != indicators.size()) throw ConfigError("af_burden: size mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < lengths.size(); ++i) {
        num += indicators[i] ? lengths[i] : 0.0;
        den += lengths[i];
    }
    return den > 0.0 ? num / den : 0.0;
}

double eaf(const std::vector<bool>& pred, const std::vector<bool>& truth,
           const std::vector<double>& lengths) {
    if (pred.size() != truth.size() || pred.size() != lengths.size())
        throw ConfigError("eaf: size mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < lengths.size(); ++i) {
        num += lengths[i] * (static_cast<double>(pred[i]) - static_cast<double>(truth[i]));
        den += lengths[i];
    }
    return den > 0.0 ? num / den * 100.0 : 0.0;
}

BurdenGroup group_by_burden(double b_af) {
    if (b_af <= 0.0) return BurdenGroup::NonAF;
    if (b_af <= 0.04) return BurdenGroup::Mild;
    if (b_af <= 0.8) return BurdenGroup::Moderate;
    return BurdenGroup::Severe;
}

Quartiles quartiles(std::vector<double> values) {
    Quartiles q;
    if (values.empty()) return q;
    std::sort(values.begin(), values.end());
    auto interp = [&](double p) {
        const double idx = p * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(idx);
        const std::size_t hi = std::min(lo + 1, values.size() - 1);
        const double frac = idx - static_cast<double>(lo);
        return values[lo] * (1.0 - frac) + values[hi] * frac;
    };
    q.q1 = interp(0.25);
    q.median = interp(0.5);
    q.q3 = interp(0.75);
    return q;
}

Quartiles bootstrap_f1(const std::vector<std::vector<win::GridCell>>& per_recording_cells,
                       std::size_t n_resamples, Rng& rng, std::vector<double>* samples_out) {
    const std::size_t n = per_recording_cells.size();
    if (n == 0) throw ConfigError("bootstrap_f1: no recordings");
    std::vector<double> samples;
    samples.reserve(n_resamples);
    for (std::size_t r = 0; r < n_resamples; ++r) {
        ConfusionCounts total;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& cells = per_recording_cells[rng.integer(n)];
            const ConfusionCounts c = confusion(cells);
            total.tp += c.tp; total.fp += c.fp; total.tn += c.tn; total.fn += c.fn;
        }
        const BasicMetrics m = basic_metrics(total);
        if (m.f1) samples.push_back(*m.f1);
    }
    if (samples_out) *samples_out = samples;
    return quartiles(samples);
}

MannWhitneyResult mann_whitney(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) throw ConfigError("mann_whitney: empty sample");
    const std::size_t na = a.size(), nb = b.size(), n = na + nb;
    std::vector<std::pair<double, bool>> pooled; // (value, from a)
    pooled.reserve(n);
    for (double v : a) pooled.emplace_back(v, true);
    for (double v : b) pooled.emplace_back(v, false);
    std::sort(pooled.begin(), pooled.end(),
              [](const auto& x, const auto& y) { return x.first < y.first; });

    double rank_sum_a = 0.0, tie_term = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && pooled[j + 1].first == pooled[i].first) ++j;
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        const double avg_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            if (pooled[k].second) rank_sum_a += avg_rank;
        i = j + 1;
    }
    MannWhitneyResult res;
    res.u = rank_sum_a - static_cast<double>(na) * (static_cast<double>(na) + 1.0) / 2.0;
    const double mu = static_cast<double>(na) * static_cast<double>(nb) / 2.0;
    const double nn = static_cast<double>(n);
    const double var = static_cast<double>(na) * static_cast<double>(nb) / 12.0 *
                       ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
    if (var <= 0.0) {
        res.p_value = 1.0;
        return res;
    }
    const double z = std::max(0.0, std::abs(res.u - mu) - 0.5) / std::sqrt(var);
    res.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
    return res;
}

std::string error_tag_name(ErrorTag t) {
    switch (t) {
        case ErrorTag::LowQuality: return "low_quality";
        case ErrorTag::FnAfl: return "fn_afl";
        case ErrorTag::FnAf: return "fn_af";
        case ErrorTag::MixedLabels: return "mixed_labels";
        case ErrorTag::AtOrAb: return "at_or_ab";
        case ErrorTag::HighHr: return "high_hr";
        case ErrorTag::Other: return "other";
    }
    return "?";
}

namespace {

// seconds of AF_l vs other rhythm inside [start, end)
std::pair<double, double> afl_occupancy(const std::vector<io::BeatAnnotation>& ann,
                                        double start, double end) {
    double af = 0.0, other = 0.0;
    double t = start;
    while (t < end) {
        const io::RhythmLabel r = win::rhythm_at(ann, t);
        auto it = std::upper_bound(ann.begin(), ann.end(), t,
                                   [](double v, const io::BeatAnnotation& a) { return v < a.time_s; });
        const double next = it == ann.end() ? end : std::min(end, it->time_s);
        (io::is_afl_combined(r) ? af : other) += std::max(0.0, next - t);
        if (next <= t) break;
        t = next;
    }
    return {af, other};
}

} // namespace

std::vector<CellError> categorize_errors(const std::vector<win::GridCell>& cells,
                                         const std::vector<io::BeatAnnotation>& annotations,
                                         const std::vector<win::Window>& windows) {
    std::vector<CellError> out;
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
        const auto& cell = cells[ci];
        if (!cell.prediction || *cell.prediction == cell.truth) continue;
        CellError err;
        err.cell_index = ci;
        err.false_negative = cell.truth;

        const win::Window* w = nullptr;
        for (const auto& cand : windows)
            if (cell.start_s >= cand.start_s && cell.start_s < cand.end_s) { w = &cand; break; }

        if (w && w->bsqi < qrs::kBsqiThreshold) err.tags.push_back(ErrorTag::LowQuality);
        if (err.false_negative) {
            const io::RhythmLabel r = win::majority_rhythm(annotations, cell.start_s, cell.end_s);
            err.tags.push_back(r == io::RhythmLabel::AFL ? ErrorTag::FnAfl : ErrorTag::FnAf);
        }
        if (w) {
            const auto [af, other] = afl_occupancy(annotations, w->start_s, w->end_s);
            if (af > 0.0 && other > 0.0) err.tags.push_back(ErrorTag::MixedLabels);
        }
        // any beat inside the cell labeled AT or AB
        bool at_ab = false;
        for (const auto& a : annotations) {
            if (a.time_s < cell.start_s) continue;
            if (a.time_s >= cell.end_s) break;
            if (a.rhythm == io::RhythmLabel::AT || a.rhythm == io::RhythmLabel::AB) at_ab = true;
        }
        if (at_ab) err.tags.push_back(ErrorTag::AtOrAb);
        if (w) {
            // heart rate from annotation intervals over the enclosing window
            double first = -1.0, last = -1.0;
            std::size_t count = 0;
            for (const auto& a : annotations) {
                if (a.time_s < w->start_s || a.time_s >= w->end_s) continue;
                if (count == 0) first = a.time_s;
                last = a.time_s;
                ++count;
            }
            if (count >= 2 && last > first) {
                const double hr = 60.0 * static_cast<double>(count - 1) / (last - first);
                if (hr > 100.0) err.tags.push_back(ErrorTag::HighHr);
            }
        }
        if (err.tags.empty()) err.tags.push_back(ErrorTag::Other);
        out.push_back(std::move(err));
    }
    return out;
}

} // namespace afnet::eval
