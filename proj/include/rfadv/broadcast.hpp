#pragma once

// Broadcast attacks: one transmitted perturbation aimed at several receivers
// at once. Each receiver has its own classifier, channel, and clean
// observation of the same transmitted frame.
//
// Two constructions:
//  * IDBA: craft each receiver's individual channel-aware perturbation, then
//    transmit the weighted sum (renormalized to the power budget).
//  * JDBA: for every candidate class, form the joint direction
//    sum_i w_i conj(H_i) grad_i, pick the class that fools the most
//    receivers at full budget (ties: smaller summed flip radius, then lower
//    class index), and transmit along that direction.
//
// A broadcast attempt counts as successful only when every receiver
// misclassifies; joint accuracy is the fraction of attempts where at least
// one receiver stays correct.

#include <vector>

#include "rfadv/attack.hpp"
#include "rfadv/channel.hpp"
#include "rfadv/iq.hpp"

namespace rfadv::bcast {

using channel::ChannelTaps;
using iq::cdouble;
using iq::IQFrame;

struct Receiver {
    const atk::Victim* victim = nullptr; // non-owning
    ChannelTaps taps;                    // adversary-to-receiver channel
    IQFrame observed;                    // clean observation at this receiver
    int true_label = 0;
};

// All receivers must share the class count and the true label (they observe
// the same transmission); weights are nonnegative and sum to 1 (1e-12).
struct Ensemble {
    std::vector<Receiver> receivers;
    std::vector<double> weights;
};

void validate(const Ensemble& ensemble);

// Weighted sum of per-receiver channel-aware targeted perturbations,
// rescaled to the power budget. Near-total cancellation of the sum is a
// numeric error.
IQFrame idba(const Ensemble& ensemble, double pmax, double eps_acc = -1.0);

struct JdbaResult {
    IQFrame delta;
    int target_class = -1;
    // Per class: receivers fooled at full budget (-1 for the true class and
    // classes whose joint direction vanished).
    std::vector<int> fool_counts;
    // Per class: sum over receivers of the bisection flip radius along the
    // joint direction (+inf for true/vanished classes).
    std::vector<double> aggregate_eps;
};

JdbaResult jdba(const Ensemble& ensemble, double pmax, double eps_acc = -1.0);

// Weights inversely proportional to the per-receiver Rayleigh scales,
// normalized to sum 1. Scales must be positive.
std::vector<double> heuristic_weights(const std::vector<double>& rayleigh_scales);

// One transmitted frame as seen by every receiver.
struct Scene {
    std::vector<ChannelTaps> taps;
    std::vector<IQFrame> observed;
    int true_label = 0;
};

enum class BroadcastKind { idba, jdba };

struct BroadcastEval {
    int scenes = 0;
    int joint_fooled = 0;        // every receiver misclassified
    double joint_accuracy = 1.0; // 1 - joint_fooled / scenes
    std::vector<int> receiver_fooled;      // per-receiver misclassification tally
    std::vector<double> receiver_accuracy; // 1 - receiver_fooled[i] / scenes
};

// Crafts one perturbation per scene with the given weights and tallies the
// all-receivers-fooled criterion.
BroadcastEval evaluate_broadcast(const std::vector<const atk::Victim*>& victims,
                                 const std::vector<Scene>& scenes,
                                 const std::vector<double>& weights, double pmax,
                                 BroadcastKind kind, double eps_acc = -1.0);

struct LineSearchResult {
    std::vector<double> weights;
    double joint_accuracy = 1.0;
    std::vector<double> grid_accuracy; // one entry per candidate w1
};

// Two-receiver grid search over w1 in {0, step, 2*step, ..., 1}, minimizing
// joint accuracy. Ties prefer the candidate closest to the heuristic center
// (from the Rayleigh scales), then the lower w1.
LineSearchResult weight_line_search(const std::vector<const atk::Victim*>& victims,
                                    const std::vector<Scene>& scenes,
                                    const std::vector<double>& rayleigh_scales, double pmax,
                                    BroadcastKind kind, double step = 0.1, double eps_acc = -1.0);

} // namespace rfadv::bcast
