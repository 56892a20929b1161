#pragma once

#include <vector>

#include "rfadv/channel.hpp"
#include "rfadv/classifier.hpp"
#include "rfadv/iq.hpp"

namespace rfadv::atk {

using channel::ChannelTaps;
using iq::cdouble;
using iq::IQFrame;

// What an attacker can ask of the model under attack. Tests substitute
// hand-built stubs; the real adapter wraps a trained classifier.
struct Victim {
    virtual ~Victim() = default;
    virtual int n_classes() const = 0;
    virtual int predict(const IQFrame& x) const = 0;
    virtual std::vector<double> probs(const IQFrame& x) const = 0;
    // Gradient of the cross entropy toward `label`, packed g_j = dI_j + i dQ_j.
    virtual IQFrame loss_gradient(const IQFrame& x, int label) const = 0;
    // One gradient per class; the default just loops.
    virtual std::vector<IQFrame> loss_gradients_all(const IQFrame& x) const;
};

class ModelVictim final : public Victim {
public:
    explicit ModelVictim(const cls::Model& model) : model_(&model) {}
    int n_classes() const override { return model_->config().n_classes; }
    int predict(const IQFrame& x) const override { return model_->predict(x); }
    std::vector<double> probs(const IQFrame& x) const override { return model_->probs(x); }
    IQFrame loss_gradient(const IQFrame& x, int label) const override {
        return model_->input_gradient(x, label);
    }
    std::vector<IQFrame> loss_gradients_all(const IQFrame& x) const override {
        return model_->input_gradients_all_classes(x);
    }
    const cls::Model& model() const { return *model_; }

private:
    const cls::Model* model_;
};

// Sum of |x_j|^2.
double power(const IQFrame& x);
// Rescales to exact power p; zero input is a numeric error.
IQFrame scaled_to_power(IQFrame x, double p);

struct TargetedAttack {
    IQFrame delta;                     // transmitted perturbation
    int target_class = -1;
    bool flipped = false;              // receiver-side prediction left the true class
    std::vector<double> eps_per_class; // per-class flip radius in sqrt-power units;
                                       // +inf for the true class and skipped classes
    double lambda = 0.0;               // regularized-solver attacks only
    double gamma = 0.0;                // regularized-solver attacks only
};

struct NontargetedAttack {
    IQFrame delta;
    int skipped_iterations = 0;
    double lambda = 0.0;
    double gamma = 0.0;
};

// Channel-aware targeted attack: per candidate class the transmit direction
// is conj(taps) * grad normalized (the received perturbation then opposes the
// class gradient exactly), the flip radius comes from a bisection over
// [0, sqrt(pmax)] with accuracy eps_acc (default sqrt(pmax)/100), and the
// class with the smallest radius wins (ties to the lower class index).
// ||delta||^2 = pmax exactly. Classes with vanishing gradients are skipped;
// all of them vanishing is a numeric error.
TargetedAttack mrpp_targeted(const Victim& victim, const IQFrame& r, int true_label,
                             const ChannelTaps& taps, double pmax, double eps_acc = -1.0);

// The same attack computed against an identity channel (the classic
// gradient-method baseline; also the reference input for the regularized and
// inversion variants).
TargetedAttack fgm_targeted_nochannel(const Victim& victim, const IQFrame& r, int true_label,
                                      double pmax, double eps_acc = -1.0);

// Pre-compensates the channel so the received perturbation is collinear with
// the identity-channel attack: w_j = delta_noch_j / h_j rescaled to the
// budget. Any tap with |h| < 1e-12 is a numeric error. With identity taps
// this returns exactly the identity-channel attack.
TargetedAttack channel_inversion(const Victim& victim, const IQFrame& r, int true_label,
                                 const ChannelTaps& taps, double pmax, double eps_acc = -1.0);

// Minimum-distortion solve of  min_delta ||H delta - t||^2  s.t.
// ||delta||^2 <= pmax:  delta_j = conj(h_j) t_j / (|h_j|^2 + lambda) with
// lambda >= 0 the smallest multiplier meeting the budget (lambda = 0 when
// the unconstrained solution is already feasible). Zero taps contribute
// delta_j = 0. When the constraint is active the returned power matches
// pmax to 1e-9 relative or a numeric error is raised.
struct MmseSolution {
    IQFrame delta;
    double lambda = 0.0;
};
MmseSolution mmse_solve(const IQFrame& target, const ChannelTaps& taps, double pmax);

inline const std::vector<double> kDefaultGammaGrid = {0.6, 0.8, 1.0, 1.2, 1.4, 1.6};

// Regularized targeted attack: solves the distortion problem toward
// t = gamma * (identity-channel attack output) for each gamma in the grid
// and keeps the one minimizing the true-class probability at the receiver
// (ties to the earlier grid entry).
TargetedAttack mmse_targeted(const Victim& victim, const IQFrame& r, int true_label,
                             const ChannelTaps& taps, double pmax,
                             const std::vector<double>& gamma_grid = kDefaultGammaGrid,
                             double eps_acc = -1.0);

// Iterative non-targeted attack: `iters` equal-power ascent steps on the
// true-class loss, accumulated in transmit units and rescaled to the exact
// budget. The naive variant steps along the raw gradient; the channel-aware
// variant steps along conj(taps) * gradient. Iterations with vanishing
// gradients are skipped and counted; all skipped is a numeric error.
NontargetedAttack naive_nontargeted(const Victim& victim, const IQFrame& r, int true_label,
                                    const ChannelTaps& taps, double pmax, int iters = 10);
NontargetedAttack mrpp_nontargeted(const Victim& victim, const IQFrame& r, int true_label,
                                   const ChannelTaps& taps, double pmax, int iters = 10);

// Regularized non-targeted attack: distortion solve toward gamma * (identity
// channel iterative attack), gamma chosen like the targeted variant.
NontargetedAttack mmse_nontargeted(const Victim& victim, const IQFrame& r, int true_label,
                                   const ChannelTaps& taps, double pmax,
                                   const std::vector<double>& gamma_grid = kDefaultGammaGrid,
                                   int iters = 10);

} // namespace rfadv::atk
