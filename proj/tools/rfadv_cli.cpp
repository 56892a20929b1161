// Command-line front end over the shared-library C API.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
// Diagnostics go to standard error; artifacts go to files (or stdout when no
// output path is given). The RFADVSIM_SEED environment variable, when set,
// overrides harness.seed after the config file and --set overrides.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rfadv.h"

namespace {

struct ConfigDeleter {
    void operator()(rfadv_config* c) const { rfadv_config_free(c); }
};
struct DatasetDeleter {
    void operator()(rfadv_dataset* d) const { rfadv_dataset_free(d); }
};
struct ModelDeleter {
    void operator()(rfadv_model* m) const { rfadv_model_free(m); }
};
using ConfigPtr = std::unique_ptr<rfadv_config, ConfigDeleter>;
using DatasetPtr = std::unique_ptr<rfadv_dataset, DatasetDeleter>;
using ModelPtr = std::unique_ptr<rfadv_model, ModelDeleter>;

struct CliString {
    char* s = nullptr;
    ~CliString() { rfadv_string_free(s); }
};

int exit_code_for(int rc) { return rc == RFADV_E_CONFIG ? 1 : 2; }

// Prints the library's error message and converts the code to an exit code.
int report(int rc) {
    std::cerr << "error: " << rfadv_errstr() << "\n";
    return exit_code_for(rc);
}

// Shared options: --config file, repeatable --set key=value overrides, and
// the RFADVSIM_SEED environment override. On failure prints and fills *code.
ConfigPtr make_config(const std::string& config_path, const std::vector<std::string>& sets,
                      int* code) {
    rfadv_config* raw = nullptr;
    int rc = config_path.empty() ? rfadv_config_create(&raw)
                                 : rfadv_config_load(config_path.c_str(), &raw);
    if (rc != RFADV_OK) {
        *code = report(rc);
        return nullptr;
    }
    ConfigPtr cfg(raw);
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            std::cerr << "error: --set expects key=value, got '" << kv << "'\n";
            *code = 1;
            return nullptr;
        }
        rc = rfadv_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
        if (rc != RFADV_OK) {
            *code = report(rc);
            return nullptr;
        }
    }
    if (const char* seed = std::getenv("RFADVSIM_SEED")) {
        rc = rfadv_config_set(cfg.get(), "harness.seed", seed);
        if (rc != RFADV_OK) {
            *code = report(rc);
            return nullptr;
        }
    }
    rc = rfadv_config_validate(cfg.get());
    if (rc != RFADV_OK) {
        *code = report(rc);
        return nullptr;
    }
    return cfg;
}

DatasetPtr load_dataset(const std::string& path, uint64_t split_seed, int* code) {
    rfadv_dataset* raw = nullptr;
    const int rc = rfadv_dataset_read(path.c_str(), split_seed, &raw);
    if (rc != RFADV_OK) {
        *code = report(rc);
        return nullptr;
    }
    return DatasetPtr(raw);
}

ModelPtr load_model(const std::string& path, int* code) {
    rfadv_model* raw = nullptr;
    const int rc = rfadv_model_load(path.c_str(), &raw);
    if (rc != RFADV_OK) {
        *code = report(rc);
        return nullptr;
    }
    return ModelPtr(raw);
}

// Writes to the path, or to stdout when the path is empty.
int emit(const std::string& path, const char* text) {
    if (path.empty()) {
        std::cout << text;
        return 0;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text) || !out.flush()) {
        std::cerr << "error: cannot write '" << path << "'\n";
        return 2;
    }
    return 0;
}

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_out = true) {
    cmd->add_option("--config", args.config_path, "Experiment config file");
    cmd->add_option("--set", args.sets, "Override a config key (key=value, repeatable)");
    if (with_out) cmd->add_option("--out", args.out, "Output path");
}

// Reading a dataset file re-derives the train/test split from dataset.seed.
uint64_t split_seed_of(const ConfigPtr& cfg) {
    uint64_t seed = 1;
    rfadv_config_dataset_seed(cfg.get(), &seed);
    return seed;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"RF modulation-classifier attack/defense simulator"};
    app.require_subcommand(1);

    CommonArgs synth_args, train_args, defend_args, sweep_args, bsweep_args, certify_args;
    std::string train_data, defend_data, sweep_data, sweep_model, bsweep_model;
    std::string certify_data, certify_model, certify_attacker;
    std::vector<std::string> report_files;
    std::string report_out;

    auto* synth = app.add_subcommand("synth", "Synthesize a modulated I/Q dataset");
    add_common(synth, synth_args);

    auto* train = app.add_subcommand("train", "Train the classifier on a dataset file");
    add_common(train, train_args);
    train->add_option("--data", train_data, "Dataset file")->required();

    auto* defend = app.add_subcommand("defend-train",
                                      "Train with noise augmentation (randomized smoothing)");
    add_common(defend, defend_args);
    defend->add_option("--data", defend_data, "Dataset file")->required();

    auto* sweep = app.add_subcommand("attack-sweep", "Accuracy-vs-PNR curves for each attack");
    add_common(sweep, sweep_args);
    sweep->add_option("--data", sweep_data, "Dataset file")->required();
    sweep->add_option("--model", sweep_model, "Model checkpoint")->required();

    auto* bsweep = app.add_subcommand("broadcast-sweep", "Multi-receiver broadcast attack curves");
    add_common(bsweep, bsweep_args);
    bsweep->add_option("--model", bsweep_model, "Model checkpoint")->required();

    auto* certify = app.add_subcommand("certify", "Per-frame certified predictions");
    add_common(certify, certify_args);
    certify->add_option("--data", certify_data, "Dataset file")->required();
    certify->add_option("--model", certify_model, "Model checkpoint")->required();
    certify->add_option("--attacker", certify_attacker,
                        "Craft perturbations against this checkpoint instead");

    auto* report_cmd = app.add_subcommand("report", "Summarize attack-sweep CSV files");
    report_cmd->add_option("files", report_files, "Curve CSV files")->required();
    report_cmd->add_option("--out", report_out, "Output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    int code = 0;

    if (synth->parsed()) {
        if (synth_args.out.empty()) {
            std::cerr << "error: synth needs --out\n";
            return 1;
        }
        auto cfg = make_config(synth_args.config_path, synth_args.sets, &code);
        if (!cfg) return code;
        rfadv_dataset* raw = nullptr;
        int rc = rfadv_dataset_synth(cfg.get(), &raw);
        if (rc != RFADV_OK) return report(rc);
        DatasetPtr ds(raw);
        rc = rfadv_dataset_write(ds.get(), synth_args.out.c_str());
        if (rc != RFADV_OK) return report(rc);
        std::cout << "synth: wrote " << rfadv_dataset_size(ds.get()) << " records to "
                  << synth_args.out << "\n";
        return 0;
    }

    if (train->parsed() || defend->parsed()) {
        const bool defended = defend->parsed();
        auto& args = defended ? defend_args : train_args;
        const auto& data = defended ? defend_data : train_data;
        if (args.out.empty()) {
            std::cerr << "error: train needs --out\n";
            return 1;
        }
        auto cfg = make_config(args.config_path, args.sets, &code);
        if (!cfg) return code;
        auto ds = load_dataset(data, split_seed_of(cfg), &code);
        if (!ds) return code;
        rfadv_model* raw = nullptr;
        int rc = defended ? rfadv_model_train_defended(cfg.get(), ds.get(), &raw)
                          : rfadv_model_train(cfg.get(), ds.get(), &raw);
        if (rc != RFADV_OK) return report(rc);
        ModelPtr model(raw);
        rc = rfadv_model_save(model.get(), args.out.c_str());
        if (rc != RFADV_OK) return report(rc);
        std::cout << (defended ? "defend-train" : "train") << ": saved "
                  << rfadv_model_parameter_count(model.get()) << "-parameter model to "
                  << args.out << "\n";
        double acc = 0.0;
        if (rfadv_model_eval(model.get(), cfg.get(), ds.get(), &acc) == RFADV_OK) {
            std::cout << "clean eval accuracy: " << acc << "\n";
        } else {
            std::cerr << "warning: " << rfadv_errstr() << "\n";
        }
        return 0;
    }

    if (sweep->parsed()) {
        auto cfg = make_config(sweep_args.config_path, sweep_args.sets, &code);
        if (!cfg) return code;
        auto ds = load_dataset(sweep_data, split_seed_of(cfg), &code);
        if (!ds) return code;
        auto model = load_model(sweep_model, &code);
        if (!model) return code;
        CliString csv;
        const int rc = rfadv_run_sweep(cfg.get(), model.get(), ds.get(), &csv.s);
        if (rc != RFADV_OK) return report(rc);
        return emit(sweep_args.out, csv.s);
    }

    if (bsweep->parsed()) {
        auto cfg = make_config(bsweep_args.config_path, bsweep_args.sets, &code);
        if (!cfg) return code;
        auto model = load_model(bsweep_model, &code);
        if (!model) return code;
        CliString csv;
        const int rc = rfadv_run_broadcast_sweep(cfg.get(), model.get(), &csv.s);
        if (rc != RFADV_OK) return report(rc);
        return emit(bsweep_args.out, csv.s);
    }

    if (certify->parsed()) {
        auto cfg = make_config(certify_args.config_path, certify_args.sets, &code);
        if (!cfg) return code;
        auto ds = load_dataset(certify_data, split_seed_of(cfg), &code);
        if (!ds) return code;
        auto model = load_model(certify_model, &code);
        if (!model) return code;
        ModelPtr attacker;
        if (!certify_attacker.empty()) {
            attacker = load_model(certify_attacker, &code);
            if (!attacker) return code;
        }
        CliString csv;
        const int rc =
            rfadv_run_certify(cfg.get(), model.get(), ds.get(), attacker.get(), &csv.s);
        if (rc != RFADV_OK) return report(rc);
        return emit(certify_args.out, csv.s);
    }

    if (report_cmd->parsed()) {
        std::vector<std::string> texts;
        std::vector<const char*> ptrs;
        for (const auto& path : report_files) {
            std::ifstream in(path, std::ios::binary);
            if (!in) {
                std::cerr << "error: cannot open '" << path << "'\n";
                return 2;
            }
            std::stringstream ss;
            ss << in.rdbuf();
            texts.push_back(ss.str());
        }
        for (const auto& t : texts) ptrs.push_back(t.c_str());
        CliString table;
        const int rc = rfadv_report(ptrs.data(), ptrs.size(), &table.s);
        if (rc != RFADV_OK) return report(rc);
        return emit(report_out, table.s);
    }

    return 1;
}
