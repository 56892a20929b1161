#include "rfadv/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "rfadv/attack.hpp"
#include "rfadv/broadcast.hpp"
#include "rfadv/channel.hpp"
#include "rfadv/defense.hpp"
#include "rfadv/error.hpp"
#include "rfadv/rng.hpp"
#include "rfadv/uap.hpp"

namespace rfadv::harness {

using channel::ChannelTaps;
using iq::IQFrame;

namespace {

// Substream purposes (the `a` salt of Rng::stream).
constexpr std::uint64_t kSaltFrameChannel = 0xE7A1;  // per-(pnr, frame) fading draw
constexpr std::uint64_t kSaltLimited = 0x11A7;       // channel-limited attack draws
constexpr std::uint64_t kSaltCertify = 0xCE27;       // smoothing noise
constexpr std::uint64_t kSaltPointTaps = 0x0A91;     // per-pnr realization for UAPs
constexpr std::uint64_t kSaltBankSampler = 0xCA92;   // channel-independent banks
constexpr std::uint64_t kSaltChannelRows = 0xC0DE;   // channel rows for the VAE
constexpr std::uint64_t kSaltScene = 0xB0AD;         // broadcast scene synthesis

struct AttackToken {
    std::string base;
    double gamma = 0.0;
    bool has_gamma = false;
};

AttackToken parse_token(const std::string& tok, const std::string& uap_kind) {
    AttackToken t;
    t.base = tok;
    const auto at = tok.find('@');
    if (at != std::string::npos) {
        t.base = tok.substr(0, at);
        t.gamma = std::stod(tok.substr(at + 1));
        t.has_gamma = true;
    }
    if (t.base == "uap") t.base = uap_kind;
    return t;
}

IQFrame received_frame(const IQFrame& clean, const ChannelTaps& taps, const IQFrame& delta) {
    IQFrame r(clean.size());
    for (std::size_t j = 0; j < r.size(); ++j) {
        r[j] = clean[j] + taps[j] * delta[j];
    }
    return r;
}

// Noise reference for the PNR axis. The power budget bounds ||delta||^2, a
// whole-frame total, so the noise it is compared against must also be the
// whole-frame total (per-symbol AWGN power times the frame length); mixing a
// frame-total perturbation with per-symbol noise would shift the PNR axis by
// 10*log10(frame length) ~ 21 dB.
double frame_noise_power(int snr_db) {
    return iq::kFrameLen * std::pow(10.0, -snr_db / 10.0);
}

std::vector<iq::DatasetRecord> bank_records(const iq::Dataset& ds, int n) {
    if (static_cast<int>(ds.train_idx.size()) < n) {
        fail(ErrorCode::config, "sweep: train split smaller than uap.N (" +
                                    std::to_string(ds.train_idx.size()) + " < " +
                                    std::to_string(n) + ")");
    }
    std::vector<std::uint32_t> sorted(ds.train_idx);
    std::sort(sorted.begin(), sorted.end());
    std::vector<iq::DatasetRecord> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        out.push_back(ds.records[sorted[static_cast<std::size_t>(i)]]);
    }
    return out;
}

std::vector<IQFrame> first_rows(const std::vector<IQFrame>& bank, int n) {
    const auto k = std::min<std::size_t>(bank.size(), static_cast<std::size_t>(n));
    return {bank.begin(), bank.begin() + static_cast<std::ptrdiff_t>(k)};
}

// Per-point state for constructions crafted once per (attack, pnr).
struct PointUap {
    bool fixed_taps = false; // apply through `taps` instead of per-frame fading
    ChannelTaps taps;
    IQFrame delta;
};

PointUap build_point_uap(const AttackToken& tok, const cfg::ExperimentConfig& c,
                         const atk::Victim& victim, const iq::Dataset& ds, double pmax,
                         std::size_t p_idx) {
    PointUap out;
    const auto records = bank_records(ds, c.uap_bank);
    if (tok.base == "pca_input" || tok.base == "vae_input") {
        // The adversary knows its channel: craft for one realization and
        // transmit through that same realization.
        Rng taps_rng = Rng::stream(c.seed, kSaltPointTaps, p_idx);
        out.fixed_taps = true;
        out.taps = channel::sample_taps(c.channel, taps_rng);
    }
    if (tok.base == "pca_input") {
        out.delta = uap::uap_pca_input_independent(victim, records, out.taps, pmax);
    } else if (tok.base == "pca_channel") {
        Rng bank_rng = Rng::stream(c.seed, kSaltBankSampler, p_idx);
        auto sampler = uap::make_channel_sampler(c.channel, bank_rng);
        out.delta = uap::uap_pca_channel_independent(victim, records, sampler, pmax);
    } else if (tok.base == "vae_input") {
        auto bank = uap::make_mrpp_bank(victim, records, out.taps, pmax);
        uap::Vae vae(c.vae, c.vae.seed);
        vae.train(bank);
        out.delta = uap::uap_vae_input_independent(
            vae, first_rows(bank, uap::kDefaultVaeCraftRows), out.taps, pmax);
    } else { // vae_channel
        Rng bank_rng = Rng::stream(c.seed, kSaltBankSampler, p_idx);
        auto sampler = uap::make_channel_sampler(c.channel, bank_rng);
        std::vector<IQFrame> bank;
        bank.reserve(records.size());
        for (const auto& rec : records) {
            bank.push_back(
                atk::mrpp_targeted(victim, rec.frame, rec.label, sampler(), pmax, c.eps_acc)
                    .delta);
        }
        Rng rows_rng = Rng::stream(c.seed, kSaltChannelRows, p_idx);
        std::vector<IQFrame> channel_rows;
        channel_rows.reserve(static_cast<std::size_t>(c.uap_bank));
        for (int i = 0; i < c.uap_bank; ++i) {
            channel_rows.push_back(channel::sample_taps(c.channel, rows_rng));
        }
        uap::Vae pvae(c.vae, c.vae.seed);
        pvae.train(bank);
        uap::Vae cvae(c.vae, c.vae.seed + 1);
        cvae.train(channel_rows);
        out.delta = uap::uap_vae_channel_independent(
            pvae, cvae, first_rows(bank, uap::kDefaultVaeCraftRows),
            first_rows(channel_rows, uap::kDefaultVaeCraftRows), pmax);
    }
    return out;
}

bool is_point_uap(const std::string& base) {
    return base == "pca_input" || base == "pca_channel" || base == "vae_input" ||
           base == "vae_channel";
}

std::string fixed6(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", x);
    return buf;
}

std::string sig6(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

} // namespace

std::vector<std::uint32_t> eval_indices(const iq::Dataset& ds, int snr_db, int n) {
    std::vector<std::uint32_t> sorted(ds.test_idx);
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::uint32_t> out;
    for (std::uint32_t idx : sorted) {
        if (ds.records[idx].snr_db == snr_db) {
            out.push_back(idx);
            if (static_cast<int>(out.size()) == n) break;
        }
    }
    return out;
}

std::vector<CurvePoint> run_sweep(const cfg::ExperimentConfig& c, const cls::Model& model,
                                  const iq::Dataset& ds) {
    const auto idx = eval_indices(ds, c.eval_snr_db, c.n_eval_frames);
    if (idx.empty()) {
        fail(ErrorCode::config, "sweep: no test records at snr " + std::to_string(c.eval_snr_db));
    }
    if (c.certified && c.defense.k < 1) {
        fail(ErrorCode::config, "sweep: certified evaluation needs defense.k >= 1");
    }
    const double noise_power = frame_noise_power(c.eval_snr_db);
    const atk::ModelVictim victim(model);
    const int n = static_cast<int>(idx.size());

    // Shared fading draws: every attack sees the same channel at a given
    // (pnr, frame), so curves differ only by the attack.
    std::vector<std::vector<ChannelTaps>> taps(c.pnr_grid_db.size());
    for (std::size_t p = 0; p < c.pnr_grid_db.size(); ++p) {
        taps[p].reserve(idx.size());
        for (std::size_t f = 0; f < idx.size(); ++f) {
            Rng rng = Rng::stream(c.seed, kSaltFrameChannel, p, f);
            taps[p].push_back(channel::sample_taps(c.channel, rng));
        }
    }

    std::vector<CurvePoint> points;
    for (const auto& name : c.attacks) {
        const AttackToken tok = parse_token(name, c.uap_kind);
        for (std::size_t p = 0; p < c.pnr_grid_db.size(); ++p) {
            const double pnr = c.pnr_grid_db[p];
            const double pmax =
                channel::pnr_to_pmax(pnr, noise_power, c.channel, c.pnr_at_receiver);

            PointUap point;
            if (is_point_uap(tok.base)) {
                point = build_point_uap(tok, c, victim, ds, pmax, p);
            }

            int correct = 0, abstained = 0;
            for (std::size_t f = 0; f < idx.size(); ++f) {
                const auto& rec = ds.records[idx[f]];
                const ChannelTaps& h = point.fixed_taps ? point.taps : taps[p][f];
                IQFrame received;
                if (tok.base == "none") {
                    received = rec.frame;
                } else if (tok.base == "nochannel") {
                    auto a = atk::fgm_targeted_nochannel(victim, rec.frame, rec.label, pmax,
                                                         c.eps_acc);
                    received = received_frame(rec.frame, h, a.delta);
                } else if (tok.base == "inversion") {
                    auto a = atk::channel_inversion(victim, rec.frame, rec.label, h, pmax,
                                                    c.eps_acc);
                    received = received_frame(rec.frame, h, a.delta);
                } else if (tok.base == "mrpp") {
                    auto a = atk::mrpp_targeted(victim, rec.frame, rec.label, h, pmax, c.eps_acc);
                    received = received_frame(rec.frame, h, a.delta);
                } else if (tok.base == "mmse") {
                    auto grid = tok.has_gamma ? std::vector<double>{tok.gamma} : c.gamma_grid;
                    auto a = atk::mmse_targeted(victim, rec.frame, rec.label, h, pmax, grid,
                                                c.eps_acc);
                    received = received_frame(rec.frame, h, a.delta);
                } else if (tok.base == "naive_nt") {
                    auto a = atk::naive_nontargeted(victim, rec.frame, rec.label, h, pmax,
                                                    c.attack_steps);
                    received = received_frame(rec.frame, h, a.delta);
                } else if (tok.base == "mrpp_nt") {
                    auto a = atk::mrpp_nontargeted(victim, rec.frame, rec.label, h, pmax,
                                                   c.attack_steps);
                    received = received_frame(rec.frame, h, a.delta);
                } else if (tok.base == "mmse_nt") {
                    auto grid = tok.has_gamma ? std::vector<double>{tok.gamma} : c.gamma_grid;
                    auto a = atk::mmse_nontargeted(victim, rec.frame, rec.label, h, pmax, grid,
                                                   c.attack_steps);
                    received = received_frame(rec.frame, h, a.delta);
                } else if (tok.base == "limited") {
                    Rng rng = Rng::stream(c.seed, kSaltLimited, p, f);
                    auto delta = uap::attack_limited_channel(victim, rec.frame, rec.label,
                                                             c.channel, c.uap_channels, pmax, rng);
                    received = received_frame(rec.frame, h, delta);
                } else { // point-level UAP constructions
                    received = received_frame(rec.frame, h, point.delta);
                }

                if (c.certified) {
                    Rng rng = Rng::stream(c.seed, kSaltCertify, p, f);
                    auto cert = def::certified_predict(model, received, c.defense, rng);
                    if (cert.abstained) {
                        ++abstained;
                    } else if (cert.label == rec.label) {
                        ++correct;
                    }
                } else if (model.predict(received) == rec.label) {
                    ++correct;
                }
            }

            CurvePoint pt;
            pt.attack = name;
            pt.pnr_db = pnr;
            pt.accuracy = static_cast<double>(correct) / n;
            pt.n_frames = n;
            pt.seed = c.seed;
            if (c.certified) pt.abstain_rate = static_cast<double>(abstained) / n;
            points.push_back(std::move(pt));
        }
    }
    return points;
}

std::vector<CurvePoint> run_broadcast_sweep(const cfg::ExperimentConfig& c,
                                            const cls::Model& model) {
    const int m = c.broadcast_m;
    const atk::ModelVictim victim(model);
    const std::vector<const atk::Victim*> victims(static_cast<std::size_t>(m), &victim);

    // Scenes are shared across PNR points and constructions: same frames,
    // same per-receiver fading, different budgets.
    std::vector<bcast::Scene> scenes;
    for (int s = 0; s < c.n_eval_frames; ++s) {
        Rng rng = Rng::stream(c.seed, kSaltScene, static_cast<std::uint64_t>(s));
        auto rec = iq::synth_record(static_cast<iq::Scheme>(s % iq::kNumSchemes),
                                    static_cast<std::int16_t>(c.eval_snr_db), rng);
        bcast::Scene scene;
        scene.true_label = rec.label;
        // One shadowing draw per scene: receivers observe the same transmission
        // through a shared large-scale environment, so only the small-scale
        // fading differs between them.
        const double psi = channel::sample_shadowing(c.channel, rng);
        for (int i = 0; i < m; ++i) {
            auto params = c.channel;
            params.rayleigh_scale = c.rayleigh_scales[static_cast<std::size_t>(i)];
            scene.taps.push_back(channel::sample_taps(params, psi, rng));
            scene.observed.push_back(rec.frame);
        }
        scenes.push_back(std::move(scene));
    }

    const double noise_power = frame_noise_power(c.eval_snr_db);
    std::vector<CurvePoint> points;
    for (auto kind : {bcast::BroadcastKind::idba, bcast::BroadcastKind::jdba}) {
        const std::string base = kind == bcast::BroadcastKind::idba ? "idba" : "jdba";
        for (std::size_t p = 0; p < c.pnr_grid_db.size(); ++p) {
            const double pnr = c.pnr_grid_db[p];
            const double pmax =
                channel::pnr_to_pmax(pnr, noise_power, c.channel, c.pnr_at_receiver);
            auto eval = bcast::evaluate_broadcast(victims, scenes, c.broadcast_weights, pmax,
                                                  kind, c.eps_acc);
            CurvePoint joint;
            joint.attack = base;
            joint.pnr_db = pnr;
            joint.accuracy = eval.joint_accuracy;
            joint.n_frames = eval.scenes;
            joint.seed = c.seed;
            points.push_back(joint);
            for (int i = 0; i < m; ++i) {
                CurvePoint rx = joint;
                rx.attack = base + "_rx" + std::to_string(i + 1);
                rx.accuracy = eval.receiver_accuracy[static_cast<std::size_t>(i)];
                points.push_back(std::move(rx));
            }
        }
    }
    return points;
}

std::vector<CertifyRow> run_certify(const cfg::ExperimentConfig& c, const cls::Model& model,
                                    const iq::Dataset& ds, const cls::Model* attacker) {
    if (c.defense.k < 1) {
        fail(ErrorCode::config, "certify: defense.k must be >= 1");
    }
    const auto idx = eval_indices(ds, c.eval_snr_db, c.n_eval_frames);
    const double noise_power = frame_noise_power(c.eval_snr_db);
    const double pmax =
        channel::pnr_to_pmax(c.certify_pnr_db, noise_power, c.channel, c.pnr_at_receiver);
    const atk::ModelVictim self(model);
    const atk::ModelVictim transfer(attacker ? *attacker : model);
    const atk::Victim& adversary = attacker ? static_cast<const atk::Victim&>(transfer) : self;

    std::vector<CertifyRow> rows;
    for (std::size_t f = 0; f < idx.size(); ++f) {
        const auto& rec = ds.records[idx[f]];
        Rng rng = Rng::stream(c.seed, kSaltCertify, 0, f);
        IQFrame received = rec.frame;
        if (c.certify_attack == "mrpp") {
            auto taps = channel::sample_taps(c.channel, rng);
            auto a = atk::mrpp_targeted(adversary, rec.frame, rec.label, taps, pmax, c.eps_acc);
            received = received_frame(rec.frame, taps, a.delta);
        }
        auto cert = def::certified_predict(model, received, c.defense, rng);
        CertifyRow row;
        row.frame_id = idx[f];
        row.true_label = rec.label;
        row.outcome = cert.abstained ? "abstain" : (cert.label == rec.label ? "correct" : "wrong");
        row.n_a = cert.n_a;
        row.n_b = cert.n_b;
        row.p_value = cert.p_value;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string curve_csv(const std::vector<CurvePoint>& points) {
    std::ostringstream out;
    out << "attack,pnr_db,accuracy,n_frames,abstain_rate,seed\n";
    for (const auto& p : points) {
        out << p.attack << ',' << p.pnr_db << ',' << fixed6(p.accuracy) << ',' << p.n_frames
            << ',' << (p.abstain_rate < 0.0 ? std::string() : fixed6(p.abstain_rate)) << ','
            << p.seed << '\n';
    }
    return out.str();
}

std::string certify_csv(const std::vector<CertifyRow>& rows) {
    std::ostringstream out;
    out << "frame_id,true_label,outcome,n_A,n_B,p_value\n";
    for (const auto& r : rows) {
        out << r.frame_id << ',' << r.true_label << ',' << r.outcome << ',' << r.n_a << ','
            << r.n_b << ',' << sig6(r.p_value) << '\n';
    }
    return out.str();
}

std::string report_table(const std::vector<std::string>& csv_texts) {
    struct Agg {
        int points = 0;
        double min = 1.0, max = 0.0, sum = 0.0;
    };
    std::map<std::string, Agg> by_attack;
    for (const auto& text : csv_texts) {
        std::stringstream ss(text);
        std::string line;
        int ln = 0;
        while (std::getline(ss, line)) {
            ++ln;
            if (line.empty()) continue;
            if (ln == 1) {
                if (line != "attack,pnr_db,accuracy,n_frames,abstain_rate,seed") {
                    fail(ErrorCode::format, "report: unexpected CSV header (line 1)");
                }
                continue;
            }
            std::vector<std::string> cols;
            std::stringstream ls(line);
            std::string col;
            while (std::getline(ls, col, ',')) cols.push_back(col);
            // A trailing empty abstain field still yields 6 columns upstream;
            // getline drops a final empty token only when the line ends in ','
            // which this schema never produces (seed is last).
            if (cols.size() != 6) {
                fail(ErrorCode::format,
                     "report: expected 6 columns, got " + std::to_string(cols.size()) +
                         " (line " + std::to_string(ln) + ")");
            }
            char* end = nullptr;
            const double acc = std::strtod(cols[2].c_str(), &end);
            if (end == cols[2].c_str() || *end != '\0' || acc < 0.0 || acc > 1.0) {
                fail(ErrorCode::format,
                     "report: bad accuracy '" + cols[2] + "' (line " + std::to_string(ln) + ")");
            }
            auto& agg = by_attack[cols[0]];
            ++agg.points;
            agg.min = std::min(agg.min, acc);
            agg.max = std::max(agg.max, acc);
            agg.sum += acc;
        }
    }
    std::ostringstream out;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-16s %6s %9s %9s %9s\n", "attack", "points", "min_acc",
                  "mean_acc", "max_acc");
    out << buf;
    for (const auto& [name, agg] : by_attack) {
        std::snprintf(buf, sizeof buf, "%-16s %6d %9.4f %9.4f %9.4f\n", name.c_str(), agg.points,
                      agg.min, agg.sum / agg.points, agg.max);
        out << buf;
    }
    return out.str();
}

} // namespace rfadv::harness
