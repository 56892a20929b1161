#ifndef RFADV_H
#define RFADV_H

/*
 * C interface to the RF adversarial-robustness simulator.
 *
 * Every fallible call returns RFADV_OK (0) or a nonzero error code; the
 * message for the most recent failure on the calling thread is available
 * via rfadv_errstr(). Out-parameters are written only on success. Objects
 * are opaque; release them with the matching *_free function.
 */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

enum {
    RFADV_OK = 0,
    RFADV_E_CONFIG = 1,   /* bad key, bad value, bad argument */
    RFADV_E_IO = 2,       /* file open/read/write failure */
    RFADV_E_FORMAT = 3,   /* malformed file */
    RFADV_E_NUMERIC = 4,  /* degenerate input, non-convergence */
    RFADV_E_INTERNAL = 5, /* contract violation inside the library */
    RFADV_E_TRAINING = 6  /* optimization diverged */
};

typedef struct rfadv_config rfadv_config;
typedef struct rfadv_dataset rfadv_dataset;
typedef struct rfadv_model rfadv_model;

const char* rfadv_version(void);

/* Last error message on this thread; empty string when the last call
 * succeeded. The pointer stays valid until the next API call on the same
 * thread. */
const char* rfadv_errstr(void);

/* ------------------------------------------------------------- config -- */
int rfadv_config_create(rfadv_config** out); /* defaults */
int rfadv_config_load(const char* path, rfadv_config** out);
int rfadv_config_load_text(const char* text, rfadv_config** out);
/* One key = value override through the same whitelist as the file loader. */
int rfadv_config_set(rfadv_config* c, const char* key, const char* value);
/* Cross-field checks (also run by the loaders). */
int rfadv_config_validate(const rfadv_config* c);
/* The dataset.seed value, used to re-derive the train/test split when a
 * dataset is loaded from a file. */
int rfadv_config_dataset_seed(const rfadv_config* c, uint64_t* out);
void rfadv_config_free(rfadv_config* c);

/* ------------------------------------------------------------ dataset -- */
int rfadv_dataset_synth(const rfadv_config* c, rfadv_dataset** out);
int rfadv_dataset_read(const char* path, uint64_t split_seed, rfadv_dataset** out);
int rfadv_dataset_write(const rfadv_dataset* ds, const char* path);
size_t rfadv_dataset_size(const rfadv_dataset* ds); /* 0 for NULL */
void rfadv_dataset_free(rfadv_dataset* ds);

/* -------------------------------------------------------------- model -- */
/* Trains per the [model]/[train] sections on the dataset's training split. */
int rfadv_model_train(const rfadv_config* c, const rfadv_dataset* ds, rfadv_model** out);
/* Same, after noise augmentation per the [defense] section. */
int rfadv_model_train_defended(const rfadv_config* c, const rfadv_dataset* ds, rfadv_model** out);
int rfadv_model_load(const char* path, rfadv_model** out);
int rfadv_model_save(const rfadv_model* m, const char* path);
size_t rfadv_model_parameter_count(const rfadv_model* m); /* 0 for NULL */
/* iq holds 2*p doubles: the p in-phase components, then the p quadrature
 * components. */
int rfadv_model_predict(const rfadv_model* m, const double* iq, size_t len, int* label_out);
/* Clean accuracy over the harness evaluation set (test split filtered to
 * harness.eval_snr_db, first harness.n_eval_frames records). */
int rfadv_model_eval(const rfadv_model* m, const rfadv_config* c, const rfadv_dataset* ds,
                     double* accuracy_out);
void rfadv_model_free(rfadv_model* m);

/* --------------------------------------------------------- experiments -- */
/* Each writes a heap-allocated CSV/table into *out; release it with
 * rfadv_string_free. */
int rfadv_run_sweep(const rfadv_config* c, const rfadv_model* m, const rfadv_dataset* ds,
                    char** csv_out);
int rfadv_run_broadcast_sweep(const rfadv_config* c, const rfadv_model* m, char** csv_out);
/* attacker may be NULL (the certified model is attacked directly). */
int rfadv_run_certify(const rfadv_config* c, const rfadv_model* m, const rfadv_dataset* ds,
                      const rfadv_model* attacker, char** csv_out);
int rfadv_report(const char* const* csv_texts, size_t n, char** table_out);
void rfadv_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* RFADV_H */
