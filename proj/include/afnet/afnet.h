/* C interface to the AF detection pipeline. All functions return AFNET_OK,
 * AFNET_ERR_RUNTIME or AFNET_ERR_CONFIG; afnet_last_error() describes the
 * most recent failure on the calling thread. */
#ifndef AFNET_AFNET_H
#define AFNET_AFNET_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define AFNET_OK 0
#define AFNET_ERR_RUNTIME 1
#define AFNET_ERR_CONFIG 2

const char* afnet_last_error(void);

typedef struct afnet_synth_params {
    const char* out_dir;
    size_t n_train, n_val, n_test;
    double duration_s;
    double af_prevalence; /* target AF window fraction */
    size_t n_leads;
    double dropout_prob;
    uint64_t seed;
    /* domain shift applied to the test split only */
    double test_gain;
    double test_fwave_scale;
    double test_polarity_flip_prob;
} afnet_synth_params;

/* Writes <out_dir>/{train,val,test}/<id>/ recordings plus manifest.csv. */
int afnet_synth(const afnet_synth_params* p);

/* Segments every recording under data_dir and writes window caches. */
int afnet_preprocess(const char* data_dir);

typedef struct afnet_train_params {
    const char* corpus_dir; /* must contain train/ and val/ */
    const char* model_dir;
    const char* spec_overrides; /* "key=value,..." or NULL */
    int no_dsu, no_bigru, single_lead;
    uint64_t seed;
    size_t max_epochs; /* 0 keeps the default */
    size_t batch_size; /* 0 keeps the default */
    double lr;         /* <= 0 keeps the default */
    size_t patience;   /* 0 keeps the default */
} afnet_train_params;

int afnet_train(const afnet_train_params* p);

/* lead NULL predicts every lead; jobs 0 means 1. */
int afnet_predict(const char* model_dir, const char* data_dir, const char* out_csv,
                  const char* lead, size_t jobs);

/* out_json may be NULL (table to stdout only). */
int afnet_evaluate(const char* pred_csv, const char* data_dir, const char* out_json,
                   size_t n_bootstrap, uint64_t seed);

int afnet_compare(const char* pred_csv_a, const char* pred_csv_b, const char* data_dir,
                  const char* out_json, size_t n_bootstrap, uint64_t seed);

int afnet_errors(const char* pred_csv, const char* data_dir, const char* out_json);

/* ---- opaque trained-model handle ---- */

typedef struct afnet_model afnet_model;

int afnet_model_load(const char* model_dir, afnet_model** out);
void afnet_model_free(afnet_model* m);
int afnet_model_param_count(afnet_model* m, size_t* out);
int afnet_model_threshold(afnet_model* m, double* out);

typedef struct afnet_prediction {
    double start_s, end_s;
    double prob;
    int pred;
} afnet_prediction;

/* 30-s interval predictions for one recording directory and lead name.
 * Free the array with afnet_predictions_free. */
int afnet_model_predict(afnet_model* m, const char* recording_dir, const char* lead,
                        afnet_prediction** out, size_t* n_out);
void afnet_predictions_free(afnet_prediction* p);

#ifdef __cplusplus
}
#endif

#endif
