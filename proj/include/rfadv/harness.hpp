#pragma once

// Experiment orchestration: PNR sweeps over configured attacks, broadcast
// sweeps, per-frame certification runs, and CSV emission. Everything is
// deterministic given (config, seed): each frame draws its randomness from an
// independent substream keyed by (seed, purpose, pnr index, frame index), so
// results do not depend on evaluation order, and every attack at a given
// (pnr, frame) sees the same channel realization (paired comparison).

#include <cstdint>
#include <string>
#include <vector>

#include "rfadv/classifier.hpp"
#include "rfadv/config.hpp"
#include "rfadv/iq.hpp"

namespace rfadv::harness {

// One row of an accuracy-vs-PNR curve. abstain_rate < 0 means not applicable
// (plain classification); the CSV then leaves the field empty.
struct CurvePoint {
    std::string attack;
    double pnr_db = 0.0;
    double accuracy = 0.0;
    int n_frames = 0;
    double abstain_rate = -1.0;
    std::uint64_t seed = 0;
};

// Indices (into ds.records) of test-split records at the evaluation SNR:
// the first `n` in index order, fewer when the split runs out.
std::vector<std::uint32_t> eval_indices(const iq::Dataset& ds, int snr_db, int n);

// Accuracy vs PNR for every configured attack; |attacks| x |pnr grid| rows,
// attack-major in config order. With cfg.certified the smoothed classifier
// answers (accuracy counts non-abstaining correct answers; abstain_rate is
// reported). Needs at least one eval record at the configured SNR.
std::vector<CurvePoint> run_sweep(const cfg::ExperimentConfig& c, const cls::Model& model,
                                  const iq::Dataset& ds);

// The broadcast evaluation scenes: n_eval_frames frames at the evaluation
// SNR, each observed by broadcast.m receivers whose fading is drawn from
// broadcast.rayleigh_scales (shadowing shared per scene). Deterministic
// given (config, seed); run_broadcast_sweep evaluates exactly these scenes.
std::vector<bcast::Scene> broadcast_scenes(const cfg::ExperimentConfig& c);

// Broadcast curves: synthesizes its own scenes (one frame observed by
// broadcast.m receivers of the same model, per-receiver fading drawn from
// broadcast.rayleigh_scales). Emits, per PNR and per construction, a joint
// row ("idba", "jdba") plus per-receiver rows ("idba_rx1", ...).
std::vector<CurvePoint> run_broadcast_sweep(const cfg::ExperimentConfig& c,
                                            const cls::Model& model);

// One certification verdict per eval frame.
struct CertifyRow {
    std::uint32_t frame_id = 0; // record index in the dataset
    int true_label = 0;
    std::string outcome; // "correct", "wrong", or "abstain"
    int n_a = 0;
    int n_b = 0;
    double p_value = 1.0;
};

// Runs the smoothed predictor over the eval frames, optionally after an
// attack (harness.certify_attack at harness.certify_pnr_db). The attack is
// crafted against `attacker` when given (transfer setting), else against the
// certified model itself. Zero eval frames is allowed (empty result).
std::vector<CertifyRow> run_certify(const cfg::ExperimentConfig& c, const cls::Model& model,
                                    const iq::Dataset& ds,
                                    const cls::Model* attacker = nullptr);

// CSV renderings. Accuracy and abstain rate use 6-decimal fixed point;
// p-values use 6 significant digits.
std::string curve_csv(const std::vector<CurvePoint>& points);
std::string certify_csv(const std::vector<CertifyRow>& rows);

// Merges curve CSV texts and summarizes each attack (point count, accuracy
// min / mean / max) as a fixed-width text table. Malformed input is a format
// error naming the line.
std::string report_table(const std::vector<std::string>& csv_texts);

} // namespace rfadv::harness
