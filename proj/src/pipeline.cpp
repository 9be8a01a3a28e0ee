#include "pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "qrs_sqi.hpp"

namespace fs = std::filesystem;

namespace afnet::pipe {

std::vector<std::string> find_recordings(const std::string& root) {
    if (!fs::is_directory(root)) throw ConfigError("not a directory: " + root);
    std::vector<std::string> out;
    if (fs::exists(fs::path(root) / "header.json")) {
        out.push_back(root);
        return out;
    }
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_directory() && fs::exists(e.path() / "header.json"))
            out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw ConfigError("no recordings under " + root);
    return out;
}

void run_synth(const synth::CorpusConfig& cfg) { synth::generate_corpus(cfg); }

namespace {

std::string cache_path(const std::string& rec_dir, const std::string& lead) {
    return (fs::path(rec_dir) / ("windows_" + lead + ".bin")).string();
}

std::vector<win::Window> windows_for(const std::string& rec_dir, const io::EcgRecording& r200,
                                     const std::string& lead) {
    const std::string path = cache_path(rec_dir, lead);
    if (fs::exists(path)) return win::load_window_cache(path, r200.recording_id, lead);
    return win::segment(r200, lead);
}

io::EcgRecording at_200hz(const io::EcgRecording& rec) {
    return rec.fs_hz == win::kTargetFsHz ? rec : win::resample_recording(rec);
}

} // namespace

void run_preprocess(const std::string& data_dir) {
    for (const auto& dir : find_recordings(data_dir)) {
        const io::EcgRecording r200 = at_200hz(io::read_recording(dir));
        for (const auto& [lead, _] : r200.leads)
            win::save_window_cache(win::segment(r200, lead), cache_path(dir, lead));
    }
}

namespace {

struct SplitData {
    // one vector per (recording, lead), stable storage for sequence pointers
    std::vector<std::unique_ptr<std::vector<win::Window>>> per_lead;
    std::vector<win::Window> flat_included; // after bsqi exclusion
};

SplitData load_split(const std::string& split_dir, bool single_lead) {
    SplitData out;
    for (const auto& dir : find_recordings(split_dir)) {
        const io::EcgRecording r200 = at_200hz(io::read_recording(dir));
        std::vector<std::string> leads;
        for (const auto& [name, _] : r200.leads) {
            leads.push_back(name);
            if (single_lead) break;
        }
        std::vector<std::unique_ptr<std::vector<win::Window>>> rec_windows;
        std::vector<win::Window> pooled;
        for (const auto& lead : leads) {
            auto w = std::make_unique<std::vector<win::Window>>(windows_for(dir, r200, lead));
            pooled.insert(pooled.end(), w->begin(), w->end());
            rec_windows.push_back(std::move(w));
        }
        if (!win::exclude_recording(r200, pooled).keep) continue;
        for (auto& w : rec_windows) {
            for (const auto& kept : win::exclude_for_training(*w))
                out.flat_included.push_back(kept);
            out.per_lead.push_back(std::move(w));
        }
    }
    return out;
}

std::vector<model::WindowSequence> to_sequences(const SplitData& data) {
    std::vector<model::WindowSequence> seqs;
    for (const auto& wins : data.per_lead) {
        if (wins->empty()) continue;
        model::WindowSequence s;
        for (const auto& w : *wins) {
            s.windows.push_back(&w);
            s.eligible.push_back(w.bsqi >= qrs::kBsqiThreshold);
        }
        seqs.push_back(std::move(s));
    }
    return seqs;
}

} // namespace

void run_train(const TrainOptions& opt) {
    model::ModelSpec spec;
    if (!opt.spec_overrides.empty()) spec.apply_overrides(opt.spec_overrides);
    if (opt.no_dsu) spec.use_dsu = false;
    if (opt.no_bigru) spec.use_bigru = false;
    if (opt.single_lead) spec.multi_lead_training = false;
    spec.validate();

    const SplitData train = load_split((fs::path(opt.corpus_dir) / "train").string(),
                                       !spec.multi_lead_training);
    const SplitData val = load_split((fs::path(opt.corpus_dir) / "val").string(),
                                     !spec.multi_lead_training);

    model::RawEcgNet net(spec, opt.seed);
    Rng rng1 = Rng::split(opt.seed, 10);
    model::train_step1(net, train.flat_included, val.flat_included, opt.train, rng1);

    const auto train_seqs = to_sequences(train);
    const auto val_seqs = to_sequences(val);
    Rng rng2 = Rng::split(opt.seed, 11);
    model::train_step2(net, train_seqs, val_seqs, opt.train, rng2);

    // threshold from validation (train as fallback), eligible windows only
    const auto& thr_seqs = val_seqs.empty() ? train_seqs : val_seqs;
    std::vector<double> probs;
    std::vector<bool> targets;
    for (const auto& seq : thr_seqs) {
        const auto p = model::sequence_probs(net, seq.windows);
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (!seq.eligible[i]) continue;
            probs.push_back(p[i]);
            targets.push_back(seq.windows[i]->target);
        }
    }
    if (!probs.empty()) net.threshold = model::select_threshold(probs, targets);
    net.save(opt.model_dir);
}

namespace {

std::vector<PredRow> predict_one(model::RawEcgNet& net, const std::string& dir,
                                 const std::string& lead_filter) {
    const io::EcgRecording rec = io::read_recording(dir);
    std::vector<PredRow> rows;
    for (const auto& [lead, _] : rec.leads) {
        if (!lead_filter.empty() && lead != lead_filter) continue;
        for (const auto& iv : model::predict_recording(rec, lead, net))
            rows.push_back({rec.recording_id, lead, iv.start_s, iv.end_s, iv.prob, iv.pred});
    }
    return rows;
}

} // namespace

void run_predict(const PredictOptions& opt) {
    const auto dirs = find_recordings(opt.data_dir);
    std::vector<std::vector<PredRow>> per_rec(dirs.size());
    const std::size_t jobs = std::max<std::size_t>(1, std::min(opt.jobs, dirs.size()));
    if (jobs == 1) {
        model::RawEcgNet net = model::RawEcgNet::load(opt.model_dir);
        for (std::size_t i = 0; i < dirs.size(); ++i)
            per_rec[i] = predict_one(net, dirs[i], opt.lead);
    } else {
        // model state carries forward caches, so each worker loads its own copy
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        std::atomic<bool> failed{false};
        std::string error;
        std::mutex err_mu;
        for (std::size_t t = 0; t < jobs; ++t)
            workers.emplace_back([&] {
                try {
                    model::RawEcgNet net = model::RawEcgNet::load(opt.model_dir);
                    for (std::size_t i = next++; i < dirs.size(); i = next++)
                        per_rec[i] = predict_one(net, dirs[i], opt.lead);
                } catch (const std::exception& e) {
                    std::lock_guard<std::mutex> lock(err_mu);
                    failed = true;
                    error = e.what();
                }
            });
        for (auto& w : workers) w.join();
        if (failed) throw RuntimeError("predict worker failed: " + error);
    }
    std::vector<PredRow> rows;
    for (auto& r : per_rec) rows.insert(rows.end(), r.begin(), r.end());
    write_prediction_csv(rows, opt.out_csv);
}

void write_prediction_csv(const std::vector<PredRow>& rows, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw RuntimeError("cannot write " + path);
    f << "recording_id,lead,start_s,end_s,prob,pred\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, ",%.9g,%.9g,%.17g,%d\n", r.start_s, r.end_s, r.prob,
                      r.pred ? 1 : 0);
        f << r.recording_id << ',' << r.lead << buf;
    }
    if (!f) throw RuntimeError("write failed: " + path);
}

std::vector<PredRow> read_prediction_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open prediction csv: " + path);
    std::string line;
    if (!std::getline(f, line) || line != "recording_id,lead,start_s,end_s,prob,pred")
        throw ConfigError("bad prediction csv header in " + path);
    std::vector<PredRow> rows;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 6)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 6 fields");
        PredRow r;
        r.recording_id = fields[0];
        r.lead = fields[1];
        try {
            r.start_s = std::stod(fields[2]);
            r.end_s = std::stod(fields[3]);
            r.prob = std::stod(fields[4]);
        } catch (const std::exception&) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": bad numeric field");
        }
        if (fields[5] == "1") r.pred = true;
        else if (fields[5] == "0") r.pred = false;
        else throw ConfigError(path + ":" + std::to_string(lineno) + ": pred must be 0 or 1");
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<EvalUnit> build_eval_units(const std::vector<PredRow>& rows,
                                       const std::string& data_dir) {
    std::map<std::string, std::string> id_to_dir;
    for (const auto& dir : find_recordings(data_dir)) {
        // header carries the authoritative id
        io::EcgRecording rec = io::read_recording(dir);
        id_to_dir[rec.recording_id] = dir;
    }
    std::map<std::pair<std::string, std::string>, std::vector<win::IntervalPrediction>> grouped;
    for (const auto& r : rows)
        grouped[{r.recording_id, r.lead}].push_back({r.start_s, r.end_s, r.prob, r.pred});

    std::vector<EvalUnit> units;
    std::string cached_id;
    io::EcgRecording cached;
    for (auto& [key, preds] : grouped) {
        const auto& [id, lead] = key;
        auto it = id_to_dir.find(id);
        if (it == id_to_dir.end()) throw ConfigError("recording not found under data dir: " + id);
        if (cached_id != id) {
            cached = io::read_recording(it->second);
            cached_id = id;
        }
        EvalUnit u;
        u.recording_id = id;
        u.lead = lead;
        const double duration = cached.duration_s();
        u.cells = win::align_to_grid(preds, duration);
        const auto truth = win::cell_truth(cached.annotations, duration);
        std::vector<double> all_len(u.cells.size(), win::kCellS);
        std::vector<bool> all_truth(u.cells.size());
        for (std::size_t k = 0; k < u.cells.size(); ++k) {
            u.cells[k].truth = truth[k];
            all_truth[k] = truth[k];
        }
        u.b_af_truth = eval::af_burden(all_len, all_truth);
        std::vector<double> len;
        std::vector<bool> pt, tt;
        for (const auto& c : u.cells) {
            if (!c.prediction) continue;
            len.push_back(win::kCellS);
            pt.push_back(*c.prediction);
            tt.push_back(c.truth);
        }
        u.eaf = len.empty() ? 0.0 : eval::eaf(pt, tt, len);
        units.push_back(std::move(u));
    }
    return units;
}

eval::MetricsReport evaluate_units(const std::vector<EvalUnit>& units, std::size_t n_bootstrap,
                                   Rng& rng, std::vector<double>* f1_samples) {
    if (units.empty()) throw ConfigError("no evaluation units");
    eval::MetricsReport rep;
    std::vector<win::GridCell> pooled;
    std::vector<std::vector<win::GridCell>> per_unit;
    std::vector<double> scores, abs_eafs;
    std::vector<bool> score_truth;
    std::map<eval::BurdenGroup, std::vector<double>> group_eaf;
    for (const auto& u : units) {
        pooled.insert(pooled.end(), u.cells.begin(), u.cells.end());
        per_unit.push_back(u.cells);
        for (const auto& c : u.cells) {
            if (!c.probability) continue;
            scores.push_back(*c.probability);
            score_truth.push_back(c.truth);
        }
        abs_eafs.push_back(std::abs(u.eaf));
        const auto g = eval::group_by_burden(u.b_af_truth);
        ++rep.group_counts[g];
        group_eaf[g].push_back(u.eaf);
    }
    rep.metrics = eval::basic_metrics(eval::confusion(pooled));
    rep.auroc = eval::auroc(scores, score_truth);
    rep.f1_ci = eval::bootstrap_f1(per_unit, n_bootstrap, rng, f1_samples);
    rep.abs_eaf = eval::quartiles(abs_eafs);
    for (auto& [g, v] : group_eaf) rep.eaf_by_group[g] = eval::quartiles(v);
    for (const auto& c : pooled)
        if (c.prediction) ++rep.n_cells;
    rep.n_recordings = units.size();
    return rep;
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json quartiles_json(const eval::Quartiles& q) {
    return {{"median", q.median}, {"q1", q.q1}, {"q3", q.q3}};
}

nlohmann::json report_json(const eval::MetricsReport& rep) {
    nlohmann::json j;
    j["note"] = "metrics pooled over 5-s grid cells across recordings";
    j["n_recordings"] = rep.n_recordings;
    j["n_cells"] = rep.n_cells;
    j["f1"] = optional_json(rep.metrics.f1);
    j["se"] = optional_json(rep.metrics.se);
    j["sp"] = optional_json(rep.metrics.sp);
    j["ppv"] = optional_json(rep.metrics.ppv);
    j["auroc"] = optional_json(rep.auroc);
    j["f1_bootstrap"] = quartiles_json(rep.f1_ci);
    j["abs_eaf_pct"] = quartiles_json(rep.abs_eaf);
    for (const auto& [g, q] : rep.eaf_by_group) {
        j["eaf_pct_by_burden"][eval::burden_group_name(g)] = quartiles_json(q);
        j["recordings_by_burden"][eval::burden_group_name(g)] = rep.group_counts.at(g);
    }
    return j;
}

std::string fmt_opt(const std::optional<double>& v) {
    if (!v) return "   n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%6.4f", *v);
    return buf;
}

void print_report(const eval::MetricsReport& rep) {
    std::printf("# pooled 5-s grid cells, %zu recordings, %zu scored cells\n",
                rep.n_recordings, rep.n_cells);
    std::printf("%-8s %-8s %-8s %-8s %-24s\n", "F1", "AUROC", "Se", "Sp", "|E_AF|% med (Q1-Q3)");
    std::printf("%-8s %-8s %-8s %-8s %.2f (%.2f-%.2f)\n", fmt_opt(rep.metrics.f1).c_str(),
                fmt_opt(rep.auroc).c_str(), fmt_opt(rep.metrics.se).c_str(),
                fmt_opt(rep.metrics.sp).c_str(), rep.abs_eaf.median, rep.abs_eaf.q1,
                rep.abs_eaf.q3);
    for (const auto& [g, q] : rep.eaf_by_group)
        std::printf("  burden %-9s n=%-3zu E_AF%% med %+.2f (%+.2f-%+.2f)\n",
                    eval::burden_group_name(g).c_str(), rep.group_counts.at(g), q.median, q.q1,
                    q.q3);
}

void write_json(const nlohmann::json& j, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw RuntimeError("cannot write " + path);
    f << j.dump(2) << "\n";
}

} // namespace

eval::MetricsReport run_evaluate(const EvaluateOptions& opt) {
    const auto units = build_eval_units(read_prediction_csv(opt.pred_csv), opt.data_dir);
    Rng rng = Rng::split(opt.seed, 20);
    const auto rep = evaluate_units(units, opt.n_bootstrap, rng);
    print_report(rep);
    if (!opt.out_json.empty()) write_json(report_json(rep), opt.out_json);
    return rep;
}

eval::MannWhitneyResult run_compare(const CompareOptions& opt) {
    const auto units_a = build_eval_units(read_prediction_csv(opt.pred_csv_a), opt.data_dir);
    const auto units_b = build_eval_units(read_prediction_csv(opt.pred_csv_b), opt.data_dir);
    std::vector<double> fa, fb;
    // identical resample stream on both sides: paired comparison
    Rng ra = Rng::split(opt.seed, 21);
    Rng rb = Rng::split(opt.seed, 21);
    evaluate_units(units_a, opt.n_bootstrap, ra, &fa);
    evaluate_units(units_b, opt.n_bootstrap, rb, &fb);
    if (fa.empty() || fb.empty())
        throw RuntimeError("compare: bootstrap produced no defined F1 samples");
    const auto res = eval::mann_whitney(fa, fb);
    std::printf("bootstrap F1 A median %.4f, B median %.4f\n", eval::quartiles(fa).median,
                eval::quartiles(fb).median);
    std::printf("Mann-Whitney U = %.1f, p = %.4g%s\n", res.u, res.p_value,
                res.p_value < 0.05 ? " (significant at 0.05)" : "");
    if (!opt.out_json.empty()) {
        nlohmann::json j = {{"f1_a", quartiles_json(eval::quartiles(fa))},
                            {"f1_b", quartiles_json(eval::quartiles(fb))},
                            {"u", res.u},
                            {"p_value", res.p_value}};
        write_json(j, opt.out_json);
    }
    return res;
}

std::map<std::string, std::size_t> run_errors(const ErrorsOptions& opt) {
    const auto rows = read_prediction_csv(opt.pred_csv);
    const auto units = build_eval_units(rows, opt.data_dir);
    std::map<std::string, std::string> id_to_dir;
    for (const auto& dir : find_recordings(opt.data_dir))
        id_to_dir[io::read_recording(dir).recording_id] = dir;

    std::map<std::string, std::size_t> counts;
    std::size_t n_error_cells = 0;
    for (const auto& u : units) {
        const io::EcgRecording r200 = at_200hz(io::read_recording(id_to_dir.at(u.recording_id)));
        const auto windows = win::segment(r200, u.lead);
        const auto errs = eval::categorize_errors(u.cells, r200.annotations, windows);
        n_error_cells += errs.size();
        for (const auto& e : errs)
            for (const auto t : e.tags) ++counts[eval::error_tag_name(t)];
    }
    std::printf("error cells: %zu\n", n_error_cells);
    for (const auto& [name, n] : counts) std::printf("  %-12s %zu\n", name.c_str(), n);
    if (!opt.out_json.empty()) {
        nlohmann::json j;
        j["n_error_cells"] = n_error_cells;
        for (const auto& [name, n] : counts) j["tags"][name] = n;
        write_json(j, opt.out_json);
    }
    return counts;
}

} // namespace afnet::pipe
