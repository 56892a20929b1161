#pragma once

// Experiment configuration: a plain key-value text format with dotted
// sections. Grammar (one construct per line):
//
//   # comment                 -- '#' starts a comment anywhere on a line
//   [section]                 -- keys that follow are prefixed "section."
//   key = value               -- bare keys take the current section prefix;
//                                dotted keys (a.b) are absolute
//
// Values are scalars (int, float, bool: true/false/1/0, string) or
// comma-separated lists. Every key must appear in the whitelist below;
// unknown or duplicate keys are config errors that name the key and line.

#include <cstdint>
#include <string>
#include <vector>

#include "rfadv/attack.hpp"
#include "rfadv/channel.hpp"
#include "rfadv/classifier.hpp"
#include "rfadv/defense.hpp"
#include "rfadv/iq.hpp"
#include "rfadv/uap.hpp"

namespace rfadv::cfg {

// One `key = value` assignment with its source line (section prefix already
// applied). parse_kv validates grammar only, not key names.
struct KvEntry {
    std::string key;
    std::string value;
    int line = 0;
};
std::vector<KvEntry> parse_kv(const std::string& text);

// Attack tokens accepted by the sweep: none, nochannel, inversion, mrpp,
// mmse, naive_nt, mrpp_nt, mmse_nt, mmse_nt@<gamma>, limited, pca_input,
// pca_channel, vae_input, vae_channel, and "uap" (alias for the kind named
// by uap.kind).
struct ExperimentConfig {
    iq::SynthParams dataset;
    channel::ChannelParams channel;
    bool pnr_at_receiver = false;

    cls::ModelConfig model;
    cls::TrainConfig train;

    std::vector<std::string> attacks = {"none", "nochannel", "inversion", "mrpp"};
    std::vector<double> gamma_grid = atk::kDefaultGammaGrid;
    int attack_steps = 10;      // iterations of the non-targeted attacks
    double eps_acc = -1.0;      // bisection accuracy; < 0 selects sqrt(pmax)/100

    std::string uap_kind = "pca_input";
    int uap_bank = uap::kDefaultPcaBankSize; // perturbations stacked per bank
    int uap_channels = 10;                   // draws for the channel-limited attack

    uap::VaeConfig vae;

    int broadcast_m = 2;
    std::vector<double> broadcast_weights = {0.5, 0.5};
    std::vector<double> rayleigh_scales = {1.0, 2.0};

    def::SmoothingParams defense;

    std::vector<double> pnr_grid_db = {-10.0, -5.0, 0.0, 5.0, 10.0};
    int eval_snr_db = 10;
    int n_eval_frames = 500;
    std::uint64_t seed = 1;
    bool certified = false;          // classify through the smoothed predictor
    std::string certify_attack = "mrpp"; // "none" or "mrpp"
    double certify_pnr_db = 0.0;
    std::string out;                 // default artifact path; CLI --out wins
};

// Defaults only (equivalent to loading empty text).
ExperimentConfig default_config();

// Applies one whitelisted `key = value` assignment (the override mechanism
// used by the CLI and the C API). Throws Error(config) on unknown keys or
// bad values; cross-field constraints are deferred to validate().
void set_key(ExperimentConfig& c, const std::string& key, const std::string& value);

// Cross-field constraints: nonempty SNR grid, broadcast weight arity and sum.
void validate(const ExperimentConfig& c);

// Parses, whitelists, types and cross-validates. Throws Error(config) with
// the key path and line on any violation.
ExperimentConfig load_config_text(const std::string& text);

// Reads the file (Error(io) when unreadable) and delegates to the above.
ExperimentConfig load_config_file(const std::string& path);

} // namespace rfadv::cfg
