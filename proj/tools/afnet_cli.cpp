// Command-line front end. Talks to the pipeline only through the C API so it
// doubles as a smoke test of the shared library surface.
#include <cstdio>
#include <cstdlib>
#include <string>

#include "CLI11.hpp"
#include "afnet/afnet.h"

namespace {

// --seed wins; AFNET_SEED is the fallback; default 0.
uint64_t resolve_seed(const CLI::Option* opt, uint64_t flag_value) {
    if (opt->count() > 0) return flag_value;
    if (const char* env = std::getenv("AFNET_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            std::fprintf(stderr, "bad AFNET_SEED: %s\n", env);
            std::exit(AFNET_ERR_CONFIG);
        }
    }
    return 0;
}

int finish(int rc) {
    if (rc != AFNET_OK) std::fprintf(stderr, "error: %s\n", afnet_last_error());
    return rc;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"AF detection pipeline: synthetic data, training, evaluation"};
    app.require_subcommand(1);

    uint64_t seed = 0;

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic labeled corpus");
    afnet_synth_params sp{};
    std::string synth_out;
    sp.n_train = 60; sp.n_val = 10; sp.n_test = 20;
    sp.duration_s = 600.0; sp.af_prevalence = 0.2; sp.n_leads = 1;
    sp.test_gain = 1.0; sp.test_fwave_scale = 1.0;
    synth->add_option("--out", synth_out, "output corpus directory")->required();
    synth->add_option("--train", sp.n_train, "training recordings");
    synth->add_option("--val", sp.n_val, "validation recordings");
    synth->add_option("--test", sp.n_test, "test recordings");
    synth->add_option("--duration", sp.duration_s, "seconds per recording");
    synth->add_option("--prevalence", sp.af_prevalence, "target AF window fraction");
    synth->add_option("--leads", sp.n_leads, "leads per recording");
    synth->add_option("--dropout-prob", sp.dropout_prob, "30-s noise dropout probability");
    synth->add_option("--test-gain", sp.test_gain, "amplitude gain on the test split");
    synth->add_option("--test-fwave-scale", sp.test_fwave_scale, "f-wave scale on the test split");
    synth->add_option("--test-polarity-flip", sp.test_polarity_flip_prob,
                      "per-recording polarity flip probability on the test split");
    auto* synth_seed = synth->add_option("--seed", seed, "rng seed (or AFNET_SEED)");

    // preprocess
    auto* pre = app.add_subcommand("preprocess", "segment recordings and cache windows");
    std::string pre_data;
    pre->add_option("--data", pre_data, "directory of recordings")->required();

    // train
    auto* train = app.add_subcommand("train", "two-step training to a checkpoint directory");
    afnet_train_params tp{};
    std::string tr_corpus, tr_model, tr_spec;
    bool no_dsu = false, no_bigru = false, single_lead = false;
    size_t tr_jobs = 1;
    train->add_option("--corpus", tr_corpus, "corpus root with train/ and val/")->required();
    train->add_option("--model", tr_model, "checkpoint output directory")->required();
    train->add_option("--spec", tr_spec, "model overrides, key=value comma-separated");
    train->add_flag("--no-dsu", no_dsu, "ablation: drop the DSU layers");
    train->add_flag("--no-bigru", no_bigru, "ablation: center-embedding head instead of BiGRU");
    train->add_flag("--single-lead", single_lead, "train on the first lead only");
    train->add_option("--epochs", tp.max_epochs, "max epochs per step");
    train->add_option("--batch", tp.batch_size, "batch size");
    train->add_option("--lr", tp.lr, "learning rate");
    train->add_option("--patience", tp.patience, "early-stopping patience");
    train->add_option("--jobs", tr_jobs, "worker threads (training itself is single-threaded)");
    auto* train_seed = train->add_option("--seed", seed, "rng seed (or AFNET_SEED)");

    // predict
    auto* predict = app.add_subcommand("predict", "write per-window predictions to CSV");
    std::string pr_model, pr_data, pr_out, pr_lead;
    size_t pr_jobs = 1;
    predict->add_option("--model", pr_model, "checkpoint directory")->required();
    predict->add_option("--data", pr_data, "directory of recordings")->required();
    predict->add_option("--out", pr_out, "output CSV path")->required();
    predict->add_option("--lead", pr_lead, "restrict to one lead name");
    predict->add_option("--jobs", pr_jobs, "parallel recordings");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "metrics report from a prediction CSV");
    std::string ev_pred, ev_data, ev_json;
    size_t ev_boot = 100;
    evaluate->add_option("--pred", ev_pred, "prediction CSV")->required();
    evaluate->add_option("--data", ev_data, "directory of recordings (truth)")->required();
    evaluate->add_option("--json", ev_json, "also write the report as JSON");
    evaluate->add_option("--bootstrap", ev_boot, "bootstrap resamples");
    auto* ev_seed = evaluate->add_option("--seed", seed, "rng seed (or AFNET_SEED)");

    // compare
    auto* compare = app.add_subcommand("compare", "bootstrap F1 comparison of two prediction sets");
    std::string cp_a, cp_b, cp_data, cp_json;
    size_t cp_boot = 100;
    compare->add_option("--pred-a", cp_a, "first prediction CSV")->required();
    compare->add_option("--pred-b", cp_b, "second prediction CSV")->required();
    compare->add_option("--data", cp_data, "directory of recordings (truth)")->required();
    compare->add_option("--json", cp_json, "write the comparison as JSON");
    compare->add_option("--bootstrap", cp_boot, "bootstrap resamples");
    auto* cp_seed = compare->add_option("--seed", seed, "rng seed (or AFNET_SEED)");

    // errors
    auto* errors = app.add_subcommand("errors", "categorize FP/FN grid cells");
    std::string er_pred, er_data, er_json;
    errors->add_option("--pred", er_pred, "prediction CSV")->required();
    errors->add_option("--data", er_data, "directory of recordings (truth)")->required();
    errors->add_option("--json", er_json, "write the tag counts as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : AFNET_ERR_CONFIG;
    }

    if (synth->parsed()) {
        sp.out_dir = synth_out.c_str();
        sp.seed = resolve_seed(synth_seed, seed);
        return finish(afnet_synth(&sp));
    }
    if (pre->parsed()) return finish(afnet_preprocess(pre_data.c_str()));
    if (train->parsed()) {
        tp.corpus_dir = tr_corpus.c_str();
        tp.model_dir = tr_model.c_str();
        tp.spec_overrides = tr_spec.empty() ? nullptr : tr_spec.c_str();
        tp.no_dsu = no_dsu;
        tp.no_bigru = no_bigru;
        tp.single_lead = single_lead;
        tp.seed = resolve_seed(train_seed, seed);
        (void)tr_jobs;
        return finish(afnet_train(&tp));
    }
    if (predict->parsed())
        return finish(afnet_predict(pr_model.c_str(), pr_data.c_str(), pr_out.c_str(),
                                    pr_lead.empty() ? nullptr : pr_lead.c_str(), pr_jobs));
    if (evaluate->parsed())
        return finish(afnet_evaluate(ev_pred.c_str(), ev_data.c_str(),
                                     ev_json.empty() ? nullptr : ev_json.c_str(), ev_boot,
                                     resolve_seed(ev_seed, seed)));
    if (compare->parsed())
        return finish(afnet_compare(cp_a.c_str(), cp_b.c_str(), cp_data.c_str(),
                                    cp_json.empty() ? nullptr : cp_json.c_str(), cp_boot,
                                    resolve_seed(cp_seed, seed)));
    if (errors->parsed())
        return finish(afnet_errors(er_pred.c_str(), er_data.c_str(),
                                   er_json.empty() ? nullptr : er_json.c_str()));
    return AFNET_ERR_CONFIG;
}
