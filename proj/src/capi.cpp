#include "rfadv.h"

#include <cstring>
#include <new>
#include <string>

#include "rfadv/classifier.hpp"
#include "rfadv/config.hpp"
#include "rfadv/defense.hpp"
#include "rfadv/error.hpp"
#include "rfadv/harness.hpp"
#include "rfadv/iq.hpp"

struct rfadv_config {
    rfadv::cfg::ExperimentConfig c;
};
struct rfadv_dataset {
    rfadv::iq::Dataset ds;
};
struct rfadv_model {
    rfadv::cls::Model m;
};

namespace {

thread_local std::string t_errstr;

int code_of(rfadv::ErrorCode c) {
    using EC = rfadv::ErrorCode;
    switch (c) {
        case EC::config: return RFADV_E_CONFIG;
        case EC::io: return RFADV_E_IO;
        case EC::format: return RFADV_E_FORMAT;
        case EC::numeric: return RFADV_E_NUMERIC;
        case EC::training: return RFADV_E_TRAINING;
        // Dimension errors signal a broken caller contract, not user input.
        case EC::dimension:
        case EC::internal: return RFADV_E_INTERNAL;
    }
    return RFADV_E_INTERNAL;
}

// Runs `fn`, translating exceptions into error codes + the thread-local
// message. On success the message is cleared.
template <typename Fn>
int guarded(Fn&& fn) {
    try {
        fn();
        t_errstr.clear();
        return RFADV_OK;
    } catch (const rfadv::Error& e) {
        t_errstr = e.what();
        return code_of(e.code());
    } catch (const std::bad_alloc&) {
        t_errstr = "out of memory";
        return RFADV_E_INTERNAL;
    } catch (const std::exception& e) {
        t_errstr = e.what();
        return RFADV_E_INTERNAL;
    }
}

int null_arg(const char* what) {
    t_errstr = std::string("null argument: ") + what;
    return RFADV_E_CONFIG;
}

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

} // namespace

extern "C" {

const char* rfadv_version(void) { return "1.0.0"; }

const char* rfadv_errstr(void) { return t_errstr.c_str(); }

/* --------------------------------------------------------------- config -- */

int rfadv_config_create(rfadv_config** out) {
    if (!out) return null_arg("out");
    return guarded([&] { *out = new rfadv_config{rfadv::cfg::default_config()}; });
}

int rfadv_config_load(const char* path, rfadv_config** out) {
    if (!path) return null_arg("path");
    if (!out) return null_arg("out");
    return guarded([&] { *out = new rfadv_config{rfadv::cfg::load_config_file(path)}; });
}

int rfadv_config_load_text(const char* text, rfadv_config** out) {
    if (!text) return null_arg("text");
    if (!out) return null_arg("out");
    return guarded([&] { *out = new rfadv_config{rfadv::cfg::load_config_text(text)}; });
}

int rfadv_config_set(rfadv_config* c, const char* key, const char* value) {
    if (!c) return null_arg("config");
    if (!key) return null_arg("key");
    if (!value) return null_arg("value");
    return guarded([&] { rfadv::cfg::set_key(c->c, key, value); });
}

int rfadv_config_validate(const rfadv_config* c) {
    if (!c) return null_arg("config");
    return guarded([&] { rfadv::cfg::validate(c->c); });
}

int rfadv_config_dataset_seed(const rfadv_config* c, uint64_t* out) {
    if (!c) return null_arg("config");
    if (!out) return null_arg("out");
    *out = c->c.dataset.seed;
    t_errstr.clear();
    return RFADV_OK;
}

void rfadv_config_free(rfadv_config* c) { delete c; }

/* -------------------------------------------------------------- dataset -- */

int rfadv_dataset_synth(const rfadv_config* c, rfadv_dataset** out) {
    if (!c) return null_arg("config");
    if (!out) return null_arg("out");
    return guarded([&] { *out = new rfadv_dataset{rfadv::iq::synth_dataset(c->c.dataset)}; });
}

int rfadv_dataset_read(const char* path, uint64_t split_seed, rfadv_dataset** out) {
    if (!path) return null_arg("path");
    if (!out) return null_arg("out");
    return guarded([&] { *out = new rfadv_dataset{rfadv::iq::read_dataset(path, split_seed)}; });
}

int rfadv_dataset_write(const rfadv_dataset* ds, const char* path) {
    if (!ds) return null_arg("dataset");
    if (!path) return null_arg("path");
    return guarded([&] { rfadv::iq::write_dataset(ds->ds, path); });
}

size_t rfadv_dataset_size(const rfadv_dataset* ds) { return ds ? ds->ds.records.size() : 0; }

void rfadv_dataset_free(rfadv_dataset* ds) { delete ds; }

/* ---------------------------------------------------------------- model -- */

int rfadv_model_train(const rfadv_config* c, const rfadv_dataset* ds, rfadv_model** out) {
    if (!c) return null_arg("config");
    if (!ds) return null_arg("dataset");
    if (!out) return null_arg("out");
    return guarded([&] {
        rfadv::cls::Model m(c->c.model, c->c.train.seed);
        m.train(ds->ds, c->c.train);
        *out = new rfadv_model{std::move(m)};
    });
}

int rfadv_model_train_defended(const rfadv_config* c, const rfadv_dataset* ds,
                               rfadv_model** out) {
    if (!c) return null_arg("config");
    if (!ds) return null_arg("dataset");
    if (!out) return null_arg("out");
    return guarded([&] {
        rfadv::Rng rng = rfadv::Rng::stream(c->c.train.seed, /*purpose=*/0xAD6E);
        auto augmented = rfadv::def::augment_training(ds->ds, c->c.defense, rng);
        rfadv::cls::Model m(c->c.model, c->c.train.seed);
        m.train(augmented, c->c.train);
        *out = new rfadv_model{std::move(m)};
    });
}

int rfadv_model_load(const char* path, rfadv_model** out) {
    if (!path) return null_arg("path");
    if (!out) return null_arg("out");
    return guarded([&] { *out = new rfadv_model{rfadv::cls::Model::load(path)}; });
}

int rfadv_model_save(const rfadv_model* m, const char* path) {
    if (!m) return null_arg("model");
    if (!path) return null_arg("path");
    return guarded([&] { m->m.save(path); });
}

size_t rfadv_model_parameter_count(const rfadv_model* m) {
    return m ? m->m.parameter_count() : 0;
}

void rfadv_model_free(rfadv_model* m) { delete m; }

int rfadv_model_predict(const rfadv_model* m, const double* iq, size_t len, int* label_out) {
    if (!m) return null_arg("model");
    if (!iq) return null_arg("iq");
    if (!label_out) return null_arg("label_out");
    return guarded([&] {
        const size_t p = static_cast<size_t>(rfadv::iq::kFrameLen);
        if (len != 2 * p) {
            rfadv::fail(rfadv::ErrorCode::config,
                        "predict: expected " + std::to_string(2 * p) + " doubles, got " +
                            std::to_string(len));
        }
        rfadv::iq::IQFrame frame(p);
        for (size_t j = 0; j < p; ++j) {
            frame[j] = {iq[j], iq[p + j]};
        }
        *label_out = m->m.predict(frame);
    });
}

int rfadv_model_eval(const rfadv_model* m, const rfadv_config* c, const rfadv_dataset* ds,
                     double* accuracy_out) {
    if (!m) return null_arg("model");
    if (!c) return null_arg("config");
    if (!ds) return null_arg("dataset");
    if (!accuracy_out) return null_arg("accuracy_out");
    return guarded([&] {
        const auto idx =
            rfadv::harness::eval_indices(ds->ds, c->c.eval_snr_db, c->c.n_eval_frames);
        if (idx.empty()) {
            rfadv::fail(rfadv::ErrorCode::config,
                        "eval: no test records at snr " + std::to_string(c->c.eval_snr_db));
        }
        std::vector<const rfadv::iq::DatasetRecord*> recs;
        recs.reserve(idx.size());
        for (auto i : idx) recs.push_back(&ds->ds.records[i]);
        *accuracy_out = m->m.accuracy(recs);
    });
}

/* ----------------------------------------------------------- experiments -- */

int rfadv_run_sweep(const rfadv_config* c, const rfadv_model* m, const rfadv_dataset* ds,
                    char** csv_out) {
    if (!c) return null_arg("config");
    if (!m) return null_arg("model");
    if (!ds) return null_arg("dataset");
    if (!csv_out) return null_arg("csv_out");
    return guarded([&] {
        *csv_out = dup_string(
            rfadv::harness::curve_csv(rfadv::harness::run_sweep(c->c, m->m, ds->ds)));
    });
}

int rfadv_run_broadcast_sweep(const rfadv_config* c, const rfadv_model* m, char** csv_out) {
    if (!c) return null_arg("config");
    if (!m) return null_arg("model");
    if (!csv_out) return null_arg("csv_out");
    return guarded([&] {
        *csv_out = dup_string(
            rfadv::harness::curve_csv(rfadv::harness::run_broadcast_sweep(c->c, m->m)));
    });
}

int rfadv_run_certify(const rfadv_config* c, const rfadv_model* m, const rfadv_dataset* ds,
                      const rfadv_model* attacker, char** csv_out) {
    if (!c) return null_arg("config");
    if (!m) return null_arg("model");
    if (!ds) return null_arg("dataset");
    if (!csv_out) return null_arg("csv_out");
    return guarded([&] {
        *csv_out = dup_string(rfadv::harness::certify_csv(rfadv::harness::run_certify(
            c->c, m->m, ds->ds, attacker ? &attacker->m : nullptr)));
    });
}

int rfadv_report(const char* const* csv_texts, size_t n, char** table_out) {
    if (!csv_texts && n > 0) return null_arg("csv_texts");
    if (!table_out) return null_arg("table_out");
    return guarded([&] {
        std::vector<std::string> texts;
        texts.reserve(n);
        for (size_t i = 0; i < n; ++i) {
            if (!csv_texts[i]) {
                rfadv::fail(rfadv::ErrorCode::config, "null argument: csv_texts[" +
                                                          std::to_string(i) + "]");
            }
            texts.emplace_back(csv_texts[i]);
        }
        *table_out = dup_string(rfadv::harness::report_table(texts));
    });
}

void rfadv_string_free(char* s) { delete[] s; }

} // extern "C"
