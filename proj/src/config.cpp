#include "rfadv/config.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "rfadv/error.hpp"

namespace rfadv::cfg {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '.' && c != '-') {
            return false;
        }
    }
    return true;
}

[[noreturn]] void bad(int line, const std::string& what) {
    fail(ErrorCode::config,
         "config: " + what + (line > 0 ? " (line " + std::to_string(line) + ")" : ""));
}

double to_double(const std::string& v, const std::string& key, int line) {
    errno = 0;
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (errno != 0 || end == v.c_str() || *end != '\0') {
        bad(line, "key '" + key + "' expects a number, got '" + v + "'");
    }
    return x;
}

long long to_int(const std::string& v, const std::string& key, int line) {
    errno = 0;
    char* end = nullptr;
    const long long x = std::strtoll(v.c_str(), &end, 10);
    if (errno != 0 || end == v.c_str() || *end != '\0') {
        bad(line, "key '" + key + "' expects an integer, got '" + v + "'");
    }
    return x;
}

std::uint64_t to_seed(const std::string& v, const std::string& key, int line) {
    errno = 0;
    char* end = nullptr;
    const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    if (errno != 0 || end == v.c_str() || *end != '\0' || v[0] == '-') {
        bad(line, "key '" + key + "' expects a non-negative integer, got '" + v + "'");
    }
    return static_cast<std::uint64_t>(x);
}

bool to_bool(const std::string& v, const std::string& key, int line) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    bad(line, "key '" + key + "' expects true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v, const std::string& key, int line) {
    std::vector<std::string> items;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) bad(line, "key '" + key + "' has an empty list element");
        items.push_back(item);
    }
    if (items.empty()) bad(line, "key '" + key + "' expects a nonempty list");
    return items;
}

const std::set<std::string> kAttackTokens = {
    "none",    "nochannel", "inversion",   "mrpp",      "mmse",      "naive_nt",
    "mrpp_nt", "mmse_nt",   "limited",     "pca_input", "pca_channel",
    "vae_input", "vae_channel", "uap",
};

void check_attack_token(const std::string& tok, int line) {
    std::string base = tok;
    const auto at = tok.find('@');
    if (at != std::string::npos) {
        base = tok.substr(0, at);
        if (base != "mmse_nt" && base != "mmse") {
            bad(line, "attack '" + tok + "': only mmse/mmse_nt take an @gamma suffix");
        }
        const std::string g = tok.substr(at + 1);
        if (to_double(g, "attack.kind", line) <= 0.0) {
            bad(line, "attack '" + tok + "': gamma must be positive");
        }
    }
    if (kAttackTokens.count(base) == 0) {
        bad(line, "unknown attack kind '" + tok + "'");
    }
}

} // namespace

std::vector<KvEntry> parse_kv(const std::string& text) {
    std::vector<KvEntry> out;
    std::stringstream ss(text);
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(ss, raw)) {
        ++line;
        const auto hash = raw.find('#');
        if (hash != std::string::npos) raw = raw.substr(0, hash);
        raw = trim(raw);
        if (raw.empty()) continue;
        if (raw.front() == '[') {
            if (raw.back() != ']') bad(line, "unterminated section header");
            section = trim(raw.substr(1, raw.size() - 2));
            if (!valid_name(section)) bad(line, "bad section name '" + section + "'");
            continue;
        }
        const auto eq = raw.find('=');
        if (eq == std::string::npos) bad(line, "expected 'key = value'");
        std::string key = trim(raw.substr(0, eq));
        const std::string value = trim(raw.substr(eq + 1));
        if (!valid_name(key)) bad(line, "bad key '" + key + "'");
        if (value.empty()) bad(line, "key '" + key + "' has an empty value");
        if (key.find('.') == std::string::npos && !section.empty()) {
            key = section + "." + key;
        }
        out.push_back({key, value, line});
    }
    return out;
}

ExperimentConfig default_config() { return ExperimentConfig{}; }

namespace {

using Handler = std::function<void(ExperimentConfig&, const std::string&, const std::string&, int)>;

const std::map<std::string, Handler>& handler_map() {
    static const std::map<std::string, Handler> handlers = {
        {"dataset.n_records",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             const long long n = to_int(v, k, ln);
             if (n < 1) bad(ln, "dataset.n_records must be >= 1");
             c.dataset.n_records = static_cast<std::uint32_t>(n);
         }},
        {"dataset.snr_grid",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.dataset.snr_grid.clear();
             for (const auto& item : split_list(v, k, ln)) {
                 c.dataset.snr_grid.push_back(static_cast<std::int16_t>(to_int(item, k, ln)));
             }
         }},
        {"dataset.seed",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) { c.dataset.seed = to_seed(v, k, ln); }},

        {"channel.k",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.channel.k = to_double(v, k, ln);
             if (c.channel.k <= 0.0) bad(ln, "channel.k must be positive");
         }},
        {"channel.d0",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.channel.d0 = to_double(v, k, ln);
             if (c.channel.d0 <= 0.0) bad(ln, "channel.d0 must be positive");
         }},
        {"channel.d",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.channel.d = to_double(v, k, ln);
             if (c.channel.d <= 0.0) bad(ln, "channel.d must be positive");
         }},
        {"channel.gamma",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.channel.gamma = to_double(v, k, ln);
             if (c.channel.gamma < 0.0) bad(ln, "channel.gamma must be >= 0");
         }},
        {"channel.shadow_sigma_db",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.channel.shadow_sigma_db = to_double(v, k, ln);
             if (c.channel.shadow_sigma_db < 0.0) bad(ln, "channel.shadow_sigma_db must be >= 0");
         }},
        {"channel.rayleigh_scale",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.channel.rayleigh_scale = to_double(v, k, ln);
             if (c.channel.rayleigh_scale <= 0.0) bad(ln, "channel.rayleigh_scale must be positive");
         }},
        {"channel.pnr_at_receiver",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.pnr_at_receiver = to_bool(v, k, ln);
         }},

        {"model.conv1_filters",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.model.conv1_filters = static_cast<int>(to_int(v, k, ln));
             if (c.model.conv1_filters < 1) bad(ln, "model.conv1_filters must be >= 1");
         }},
        {"model.conv2_filters",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.model.conv2_filters = static_cast<int>(to_int(v, k, ln));
             if (c.model.conv2_filters < 1) bad(ln, "model.conv2_filters must be >= 1");
         }},
        {"model.dense_units",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.model.dense_units = static_cast<int>(to_int(v, k, ln));
             if (c.model.dense_units < 1) bad(ln, "model.dense_units must be >= 1");
         }},
        {"model.extra_dense_units",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.model.extra_dense_units = static_cast<int>(to_int(v, k, ln));
             if (c.model.extra_dense_units < 0) bad(ln, "model.extra_dense_units must be >= 0");
         }},
        {"model.dropout",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.model.dropout = to_double(v, k, ln);
             if (c.model.dropout < 0.0 || c.model.dropout >= 1.0) {
                 bad(ln, "model.dropout must lie in [0, 1)");
             }
         }},

        {"train.epochs",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.train.epochs = static_cast<int>(to_int(v, k, ln));
             if (c.train.epochs < 1) bad(ln, "train.epochs must be >= 1");
         }},
        {"train.batch",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.train.batch = static_cast<int>(to_int(v, k, ln));
             if (c.train.batch < 1) bad(ln, "train.batch must be >= 1");
         }},
        {"train.lr",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.train.lr = to_double(v, k, ln);
             if (c.train.lr <= 0.0) bad(ln, "train.lr must be positive");
         }},
        {"train.seed",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) { c.train.seed = to_seed(v, k, ln); }},

        {"attack.kind",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.attacks = split_list(v, k, ln);
             for (const auto& tok : c.attacks) check_attack_token(tok, ln);
         }},
        {"attack.gamma_grid",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.gamma_grid.clear();
             for (const auto& item : split_list(v, k, ln)) {
                 const double g = to_double(item, k, ln);
                 if (g <= 0.0) bad(ln, "attack.gamma_grid entries must be positive");
                 c.gamma_grid.push_back(g);
             }
         }},
        {"attack.E",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.attack_steps = static_cast<int>(to_int(v, k, ln));
             if (c.attack_steps < 1) bad(ln, "attack.E must be >= 1");
         }},
        {"attack.eps_acc",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.eps_acc = to_double(v, k, ln);
             if (c.eps_acc <= 0.0 && c.eps_acc != -1.0) {
                 bad(ln, "attack.eps_acc must be positive (or -1 for automatic)");
             }
         }},

        {"uap.kind",
         [](ExperimentConfig& c, const std::string&, const std::string& v, int ln) {
             if (v != "pca_input" && v != "pca_channel" && v != "vae_input" && v != "vae_channel") {
                 bad(ln, "uap.kind must be one of pca_input, pca_channel, vae_input, vae_channel");
             }
             c.uap_kind = v;
         }},
        {"uap.N",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.uap_bank = static_cast<int>(to_int(v, k, ln));
             if (c.uap_bank < 2) bad(ln, "uap.N must be >= 2");
         }},
        {"uap.k",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.uap_channels = static_cast<int>(to_int(v, k, ln));
             if (c.uap_channels < 1) bad(ln, "uap.k must be >= 1");
         }},

        {"vae.latent",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.vae.latent = static_cast<int>(to_int(v, k, ln));
             if (c.vae.latent < 1) bad(ln, "vae.latent must be >= 1");
         }},
        {"vae.scale_divisor",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.vae.scale_divisor = static_cast<int>(to_int(v, k, ln));
             if (c.vae.scale_divisor < 1 || 128 % c.vae.scale_divisor != 0 ||
                 40 % c.vae.scale_divisor != 0) {
                 bad(ln, "vae.scale_divisor must divide both 128 and 40");
             }
         }},
        {"vae.epochs",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.vae.epochs = static_cast<int>(to_int(v, k, ln));
             if (c.vae.epochs < 1) bad(ln, "vae.epochs must be >= 1");
         }},
        {"vae.batch",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.vae.batch = static_cast<int>(to_int(v, k, ln));
             if (c.vae.batch < 1) bad(ln, "vae.batch must be >= 1");
         }},
        {"vae.lr",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.vae.lr = to_double(v, k, ln);
             if (c.vae.lr <= 0.0) bad(ln, "vae.lr must be positive");
         }},
        {"vae.seed",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) { c.vae.seed = to_seed(v, k, ln); }},

        {"broadcast.m",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.broadcast_m = static_cast<int>(to_int(v, k, ln));
             if (c.broadcast_m < 1) bad(ln, "broadcast.m must be >= 1");
         }},
        {"broadcast.weights",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.broadcast_weights.clear();
             for (const auto& item : split_list(v, k, ln)) {
                 c.broadcast_weights.push_back(to_double(item, k, ln));
             }
         }},
        {"broadcast.rayleigh_scales",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.rayleigh_scales.clear();
             for (const auto& item : split_list(v, k, ln)) {
                 const double s = to_double(item, k, ln);
                 if (s <= 0.0) bad(ln, "broadcast.rayleigh_scales entries must be positive");
                 c.rayleigh_scales.push_back(s);
             }
         }},

        {"defense.k",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.defense.k = static_cast<int>(to_int(v, k, ln));
             if (c.defense.k < 0) bad(ln, "defense.k must be >= 0");
         }},
        {"defense.sigma",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.defense.sigma = to_double(v, k, ln);
             if (c.defense.sigma < 0.0) bad(ln, "defense.sigma must be >= 0");
         }},
        {"defense.alpha",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.defense.alpha = to_double(v, k, ln);
             if (c.defense.alpha <= 0.0 || c.defense.alpha >= 1.0) {
                 bad(ln, "defense.alpha must lie in (0, 1)");
             }
         }},
        {"defense.q",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.defense.q = to_double(v, k, ln);
             if (c.defense.q <= 0.0 || c.defense.q >= 1.0) bad(ln, "defense.q must lie in (0, 1)");
         }},

        {"harness.pnr_grid_db",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.pnr_grid_db.clear();
             for (const auto& item : split_list(v, k, ln)) {
                 c.pnr_grid_db.push_back(to_double(item, k, ln));
             }
             for (std::size_t i = 1; i < c.pnr_grid_db.size(); ++i) {
                 if (c.pnr_grid_db[i] <= c.pnr_grid_db[i - 1]) {
                     bad(ln, "harness.pnr_grid_db must be strictly increasing");
                 }
             }
         }},
        {"harness.eval_snr_db",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.eval_snr_db = static_cast<int>(to_int(v, k, ln));
         }},
        {"harness.n_eval_frames",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.n_eval_frames = static_cast<int>(to_int(v, k, ln));
             if (c.n_eval_frames < 1) bad(ln, "harness.n_eval_frames must be >= 1");
         }},
        {"harness.seed",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) { c.seed = to_seed(v, k, ln); }},
        {"harness.certified",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) { c.certified = to_bool(v, k, ln); }},
        {"harness.certify_attack",
         [](ExperimentConfig& c, const std::string&, const std::string& v, int ln) {
             if (v != "none" && v != "mrpp") bad(ln, "harness.certify_attack must be none or mrpp");
             c.certify_attack = v;
         }},
        {"harness.certify_pnr_db",
         [](ExperimentConfig& c, const std::string& k, const std::string& v, int ln) {
             c.certify_pnr_db = to_double(v, k, ln);
         }},
        {"harness.out",
         [](ExperimentConfig& c, const std::string&, const std::string& v, int) { c.out = v; }},
    };
    return handlers;
}

void apply_key(ExperimentConfig& c, const std::string& key, const std::string& value, int line) {
    const auto& handlers = handler_map();
    const auto it = handlers.find(key);
    if (it == handlers.end()) {
        bad(line, "unknown config key '" + key + "'");
    }
    it->second(c, key, value, line);
}

} // namespace

void set_key(ExperimentConfig& c, const std::string& key, const std::string& value) {
    apply_key(c, key, value, 0);
}

void validate(const ExperimentConfig& c) {
    if (c.dataset.snr_grid.empty()) fail(ErrorCode::config, "config: dataset.snr_grid is empty");
    if (static_cast<int>(c.broadcast_weights.size()) != c.broadcast_m) {
        fail(ErrorCode::config, "config: broadcast.weights must list broadcast.m entries");
    }
    if (static_cast<int>(c.rayleigh_scales.size()) != c.broadcast_m) {
        fail(ErrorCode::config, "config: broadcast.rayleigh_scales must list broadcast.m entries");
    }
    double wsum = 0.0;
    for (double w : c.broadcast_weights) {
        if (w < 0.0) fail(ErrorCode::config, "config: broadcast.weights must be non-negative");
        wsum += w;
    }
    if (std::abs(wsum - 1.0) > 1e-9) {
        fail(ErrorCode::config, "config: broadcast.weights must sum to 1");
    }
}

ExperimentConfig load_config_text(const std::string& text) {
    ExperimentConfig c;
    std::set<std::string> seen;
    for (const auto& e : parse_kv(text)) {
        if (!seen.insert(e.key).second) {
            bad(e.line, "duplicate config key '" + e.key + "'");
        }
        apply_key(c, e.key, e.value, e.line);
    }
    validate(c);
    return c;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::io, "config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return load_config_text(ss.str());
}

} // namespace rfadv::cfg
