#include "afnet/afnet.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "pipeline.hpp"

namespace {

thread_local std::string g_last_error;

template <typename Fn>
int guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return AFNET_OK;
    } catch (const afnet::ConfigError& e) {
        g_last_error = e.what();
        return AFNET_ERR_CONFIG;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return AFNET_ERR_RUNTIME;
    } catch (...) {
        g_last_error = "unknown error";
        return AFNET_ERR_RUNTIME;
    }
}

int require(const void* p, const char* what) {
    if (p) return AFNET_OK;
    g_last_error = std::string("null argument: ") + what;
    return AFNET_ERR_CONFIG;
}

} // namespace

extern "C" {

struct afnet_model {
    afnet::model::RawEcgNet net;
};

const char* afnet_last_error(void) { return g_last_error.c_str(); }

int afnet_synth(const afnet_synth_params* p) {
    if (int rc = require(p, "params")) return rc;
    if (int rc = require(p->out_dir, "out_dir")) return rc;
    return guarded([&] {
        afnet::synth::CorpusConfig cfg;
        cfg.out_dir = p->out_dir;
        cfg.n_train = p->n_train;
        cfg.n_val = p->n_val;
        cfg.n_test = p->n_test;
        cfg.duration_s = p->duration_s;
        cfg.af_prevalence = p->af_prevalence;
        cfg.n_leads = p->n_leads ? p->n_leads : 1;
        cfg.dropout_prob = p->dropout_prob;
        cfg.seed = p->seed;
        cfg.test_shift.gain = p->test_gain != 0.0 ? p->test_gain : 1.0;
        cfg.test_shift.fwave_scale = p->test_fwave_scale != 0.0 ? p->test_fwave_scale : 1.0;
        cfg.test_shift.polarity_flip_prob = p->test_polarity_flip_prob;
        afnet::pipe::run_synth(cfg);
    });
}

int afnet_preprocess(const char* data_dir) {
    if (int rc = require(data_dir, "data_dir")) return rc;
    return guarded([&] { afnet::pipe::run_preprocess(data_dir); });
}

int afnet_train(const afnet_train_params* p) {
    if (int rc = require(p, "params")) return rc;
    if (int rc = require(p->corpus_dir, "corpus_dir")) return rc;
    if (int rc = require(p->model_dir, "model_dir")) return rc;
    return guarded([&] {
        afnet::pipe::TrainOptions opt;
        opt.corpus_dir = p->corpus_dir;
        opt.model_dir = p->model_dir;
        if (p->spec_overrides) opt.spec_overrides = p->spec_overrides;
        opt.no_dsu = p->no_dsu != 0;
        opt.no_bigru = p->no_bigru != 0;
        opt.single_lead = p->single_lead != 0;
        opt.seed = p->seed;
        if (p->max_epochs) opt.train.max_epochs = p->max_epochs;
        if (p->batch_size) opt.train.batch_size = p->batch_size;
        if (p->lr > 0.0) opt.train.lr = p->lr;
        if (p->patience) opt.train.patience = p->patience;
        afnet::pipe::run_train(opt);
    });
}

int afnet_predict(const char* model_dir, const char* data_dir, const char* out_csv,
                  const char* lead, size_t jobs) {
    if (int rc = require(model_dir, "model_dir")) return rc;
    if (int rc = require(data_dir, "data_dir")) return rc;
    if (int rc = require(out_csv, "out_csv")) return rc;
    return guarded([&] {
        afnet::pipe::PredictOptions opt;
        opt.model_dir = model_dir;
        opt.data_dir = data_dir;
        opt.out_csv = out_csv;
        if (lead) opt.lead = lead;
        opt.jobs = jobs ? jobs : 1;
        afnet::pipe::run_predict(opt);
    });
}

int afnet_evaluate(const char* pred_csv, const char* data_dir, const char* out_json,
                   size_t n_bootstrap, uint64_t seed) {
    if (int rc = require(pred_csv, "pred_csv")) return rc;
    if (int rc = require(data_dir, "data_dir")) return rc;
    return guarded([&] {
        afnet::pipe::EvaluateOptions opt;
        opt.pred_csv = pred_csv;
        opt.data_dir = data_dir;
        if (out_json) opt.out_json = out_json;
        opt.n_bootstrap = n_bootstrap ? n_bootstrap : 100;
        opt.seed = seed;
        afnet::pipe::run_evaluate(opt);
    });
}

int afnet_compare(const char* pred_csv_a, const char* pred_csv_b, const char* data_dir,
                  const char* out_json, size_t n_bootstrap, uint64_t seed) {
    if (int rc = require(pred_csv_a, "pred_csv_a")) return rc;
    if (int rc = require(pred_csv_b, "pred_csv_b")) return rc;
    if (int rc = require(data_dir, "data_dir")) return rc;
    return guarded([&] {
        afnet::pipe::CompareOptions opt;
        opt.pred_csv_a = pred_csv_a;
        opt.pred_csv_b = pred_csv_b;
        opt.data_dir = data_dir;
        if (out_json) opt.out_json = out_json;
        opt.n_bootstrap = n_bootstrap ? n_bootstrap : 100;
        opt.seed = seed;
        afnet::pipe::run_compare(opt);
    });
}

int afnet_errors(const char* pred_csv, const char* data_dir, const char* out_json) {
    if (int rc = require(pred_csv, "pred_csv")) return rc;
    if (int rc = require(data_dir, "data_dir")) return rc;
    return guarded([&] {
        afnet::pipe::ErrorsOptions opt;
        opt.pred_csv = pred_csv;
        opt.data_dir = data_dir;
        if (out_json) opt.out_json = out_json;
        afnet::pipe::run_errors(opt);
    });
}

int afnet_model_load(const char* model_dir, afnet_model** out) {
    if (int rc = require(model_dir, "model_dir")) return rc;
    if (int rc = require(out, "out")) return rc;
    *out = nullptr;
    return guarded([&] {
        *out = new afnet_model{afnet::model::RawEcgNet::load(model_dir)};
    });
}

void afnet_model_free(afnet_model* m) { delete m; }

int afnet_model_param_count(afnet_model* m, size_t* out) {
    if (int rc = require(m, "model")) return rc;
    if (int rc = require(out, "out")) return rc;
    return guarded([&] { *out = m->net.param_count(); });
}

int afnet_model_threshold(afnet_model* m, double* out) {
    if (int rc = require(m, "model")) return rc;
    if (int rc = require(out, "out")) return rc;
    return guarded([&] { *out = m->net.threshold; });
}

int afnet_model_predict(afnet_model* m, const char* recording_dir, const char* lead,
                        afnet_prediction** out, size_t* n_out) {
    if (int rc = require(m, "model")) return rc;
    if (int rc = require(recording_dir, "recording_dir")) return rc;
    if (int rc = require(lead, "lead")) return rc;
    if (int rc = require(out, "out")) return rc;
    if (int rc = require(n_out, "n_out")) return rc;
    *out = nullptr;
    *n_out = 0;
    return guarded([&] {
        const auto rec = afnet::io::read_recording(recording_dir);
        const auto preds = afnet::model::predict_recording(rec, lead, m->net);
        auto* arr = static_cast<afnet_prediction*>(
            std::malloc(sizeof(afnet_prediction) * std::max<size_t>(1, preds.size())));
        if (!arr) throw afnet::RuntimeError("out of memory");
        for (size_t i = 0; i < preds.size(); ++i)
            arr[i] = {preds[i].start_s, preds[i].end_s, preds[i].prob, preds[i].pred ? 1 : 0};
        *out = arr;
        *n_out = preds.size();
    });
}

void afnet_predictions_free(afnet_prediction* p) { std::free(p); }

} // extern "C"
