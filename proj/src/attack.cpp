#include "rfadv/attack.hpp"

#include <cmath>
#include <limits>

#include "rfadv/error.hpp"

namespace rfadv::atk {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kInversionGuard = 1e-12;

void check_frame_args(const IQFrame& r, const ChannelTaps& taps, double pmax) {
    if (taps.size() != r.size()) {
        fail(ErrorCode::dimension, "attack: " + std::to_string(taps.size()) + " taps vs " +
                                       std::to_string(r.size()) + " symbols");
    }
    if (pmax <= 0.0) fail(ErrorCode::config, "attack: power budget must be positive");
}

void check_label(const Victim& victim, int true_label) {
    if (true_label < 0 || true_label >= victim.n_classes()) {
        fail(ErrorCode::dimension, "attack: true label " + std::to_string(true_label) +
                                       " out of range");
    }
}

IQFrame added(const IQFrame& a, const IQFrame& b) {
    IQFrame out(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) out[j] = a[j] + b[j];
    return out;
}

IQFrame received_with(const ChannelTaps& taps, const IQFrame& r, const IQFrame& delta) {
    return added(r, channel::apply_channel(taps, delta));
}

} // namespace

std::vector<IQFrame> Victim::loss_gradients_all(const IQFrame& x) const {
    std::vector<IQFrame> out;
    out.reserve(static_cast<std::size_t>(n_classes()));
    for (int c = 0; c < n_classes(); ++c) out.push_back(loss_gradient(x, c));
    return out;
}

double power(const IQFrame& x) {
    double p = 0.0;
    for (const auto& v : x) p += std::norm(v);
    return p;
}

IQFrame scaled_to_power(IQFrame x, double p) {
    if (p < 0.0) fail(ErrorCode::config, "scaled_to_power: negative power");
    const double now = power(x);
    if (now == 0.0) fail(ErrorCode::numeric, "scaled_to_power: zero-power input");
    const double s = std::sqrt(p / now);
    for (auto& v : x) v *= s;
    return x;
}

TargetedAttack mrpp_targeted(const Victim& victim, const IQFrame& r, int true_label,
                             const ChannelTaps& taps, double pmax, double eps_acc) {
    check_frame_args(r, taps, pmax);
    check_label(victim, true_label);
    const double sqrt_p = std::sqrt(pmax);
    if (eps_acc < 0.0) eps_acc = sqrt_p / 100.0;
    if (eps_acc <= 0.0 || eps_acc >= sqrt_p) {
        fail(ErrorCode::config, "attack: bisection accuracy out of (0, sqrt(pmax))");
    }

    const int c_count = victim.n_classes();
    const auto grads = victim.loss_gradients_all(r);
    if (grads.size() != static_cast<std::size_t>(c_count)) {
        fail(ErrorCode::internal, "attack: victim returned wrong gradient count");
    }

    TargetedAttack out;
    out.eps_per_class.assign(static_cast<std::size_t>(c_count), kInf);
    std::vector<IQFrame> dirs(static_cast<std::size_t>(c_count));

    for (int c = 0; c < c_count; ++c) {
        if (c == true_label) continue;
        // Transmit direction whose received image opposes the class-c loss
        // gradient: conj(h) g, normalized.
        IQFrame dir(r.size());
        double nrm = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) {
            dir[j] = std::conj(taps[j]) * grads[static_cast<std::size_t>(c)][j];
            nrm += std::norm(dir[j]);
        }
        nrm = std::sqrt(nrm);
        if (nrm == 0.0) continue; // vanishing gradient: class not attemptable
        for (auto& v : dir) v /= nrm;

        double lo = 0.0, hi = sqrt_p;
        while (hi - lo > eps_acc) {
            const double mid = 0.5 * (lo + hi);
            IQFrame x(r.size());
            for (std::size_t j = 0; j < r.size(); ++j) x[j] = r[j] - mid * taps[j] * dir[j];
            if (victim.predict(x) != true_label) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        out.eps_per_class[static_cast<std::size_t>(c)] = hi;
        dirs[static_cast<std::size_t>(c)] = std::move(dir);
    }

    int target = -1;
    for (int c = 0; c < c_count; ++c) {
        if (out.eps_per_class[static_cast<std::size_t>(c)] == kInf) continue;
        if (target < 0 ||
            out.eps_per_class[static_cast<std::size_t>(c)] < out.eps_per_class[static_cast<std::size_t>(target)]) {
            target = c;
        }
    }
    if (target < 0) {
        fail(ErrorCode::numeric, "attack: loss gradient vanished for every candidate class");
    }

    out.target_class = target;
    out.delta.resize(r.size());
    for (std::size_t j = 0; j < r.size(); ++j) {
        out.delta[j] = -sqrt_p * dirs[static_cast<std::size_t>(target)][j];
    }
    out.flipped = victim.predict(received_with(taps, r, out.delta)) != true_label;
    return out;
}

TargetedAttack fgm_targeted_nochannel(const Victim& victim, const IQFrame& r, int true_label,
                                      double pmax, double eps_acc) {
    return mrpp_targeted(victim, r, true_label, ChannelTaps(r.size(), cdouble{1.0, 0.0}), pmax,
                         eps_acc);
}

TargetedAttack channel_inversion(const Victim& victim, const IQFrame& r, int true_label,
                                 const ChannelTaps& taps, double pmax, double eps_acc) {
    check_frame_args(r, taps, pmax);
    for (std::size_t j = 0; j < taps.size(); ++j) {
        if (std::abs(taps[j]) < kInversionGuard) {
            fail(ErrorCode::numeric, "inversion: tap " + std::to_string(j) +
                                         " below invertibility threshold");
        }
    }
    TargetedAttack out = fgm_targeted_nochannel(victim, r, true_label, pmax, eps_acc);
    IQFrame w(r.size());
    for (std::size_t j = 0; j < r.size(); ++j) w[j] = out.delta[j] / taps[j];
    out.delta = scaled_to_power(std::move(w), pmax);
    out.flipped = victim.predict(received_with(taps, r, out.delta)) != true_label;
    return out;
}

MmseSolution mmse_solve(const IQFrame& target, const ChannelTaps& taps, double pmax) {
    check_frame_args(target, taps, pmax);

    auto delta_for = [&](double lambda) {
        IQFrame d(target.size());
        for (std::size_t j = 0; j < target.size(); ++j) {
            const double h2 = std::norm(taps[j]);
            const double den = h2 + lambda;
            d[j] = den > 0.0 ? std::conj(taps[j]) * target[j] / den : cdouble{0.0, 0.0};
        }
        return d;
    };
    auto power_at = [&](double lambda) { return power(delta_for(lambda)); };

    MmseSolution sol;
    if (power_at(0.0) <= pmax) {
        sol.lambda = 0.0;
        sol.delta = delta_for(0.0);
        return sol;
    }

    double hi = 1.0;
    int doublings = 0;
    while (power_at(hi) > pmax) {
        hi *= 2.0;
        if (++doublings > 2000) {
            fail(ErrorCode::numeric, "mmse: multiplier search failed to bracket the budget");
        }
    }
    double lo = 0.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (power_at(mid) > pmax) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    sol.lambda = hi;
    sol.delta = delta_for(hi);
    const double got = power(sol.delta);
    if (std::abs(got - pmax) > 1e-9 * pmax) {
        fail(ErrorCode::numeric, "mmse: budget missed by " + std::to_string(got - pmax));
    }
    return sol;
}

namespace {

// Shared gamma-grid scan: finds the distortion solve toward gamma * base
// that minimizes the victim's true-class probability at the receiver.
MmseSolution best_gamma_solve(const Victim& victim, const IQFrame& r, int true_label,
                              const ChannelTaps& taps, double pmax, const IQFrame& base,
                              const std::vector<double>& gamma_grid, double* gamma_out) {
    if (gamma_grid.empty()) fail(ErrorCode::config, "attack: empty gamma grid");
    MmseSolution best;
    double best_score = kInf;
    double best_gamma = 0.0;
    for (double gamma : gamma_grid) {
        if (gamma <= 0.0) fail(ErrorCode::config, "attack: gamma entries must be positive");
        IQFrame t(base.size());
        for (std::size_t j = 0; j < base.size(); ++j) t[j] = gamma * base[j];
        MmseSolution sol = mmse_solve(t, taps, pmax);
        const double score =
            victim.probs(received_with(taps, r, sol.delta))[static_cast<std::size_t>(true_label)];
        if (score < best_score) { // strict: ties keep the earlier gamma
            best_score = score;
            best = std::move(sol);
            best_gamma = gamma;
        }
    }
    *gamma_out = best_gamma;
    return best;
}

} // namespace

TargetedAttack mmse_targeted(const Victim& victim, const IQFrame& r, int true_label,
                             const ChannelTaps& taps, double pmax,
                             const std::vector<double>& gamma_grid, double eps_acc) {
    check_frame_args(r, taps, pmax);
    TargetedAttack out = fgm_targeted_nochannel(victim, r, true_label, pmax, eps_acc);
    double gamma = 0.0;
    MmseSolution sol = best_gamma_solve(victim, r, true_label, taps, pmax, out.delta, gamma_grid,
                                        &gamma);
    out.delta = std::move(sol.delta);
    out.lambda = sol.lambda;
    out.gamma = gamma;
    out.flipped = victim.predict(received_with(taps, r, out.delta)) != true_label;
    return out;
}

namespace {

NontargetedAttack iterative_nontargeted(const Victim& victim, const IQFrame& r, int true_label,
                                        const ChannelTaps& taps, double pmax, int iters,
                                        bool channel_aware) {
    check_frame_args(r, taps, pmax);
    check_label(victim, true_label);
    if (iters < 1) fail(ErrorCode::config, "attack: iteration count must be positive");

    const double step = std::sqrt(pmax / iters);
    IQFrame x = r;
    IQFrame accum(r.size(), cdouble{0.0, 0.0});
    int skipped = 0;
    for (int e = 0; e < iters; ++e) {
        IQFrame g = victim.loss_gradient(x, true_label);
        if (g.size() != r.size()) fail(ErrorCode::internal, "attack: gradient length mismatch");
        IQFrame dn(r.size());
        double nrm = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) {
            dn[j] = channel_aware ? std::conj(taps[j]) * g[j] : g[j];
            nrm += std::norm(dn[j]);
        }
        nrm = std::sqrt(nrm);
        if (nrm == 0.0) {
            ++skipped;
            continue;
        }
        for (std::size_t j = 0; j < r.size(); ++j) {
            dn[j] /= nrm;
            x[j] += step * taps[j] * dn[j];
            accum[j] += step * dn[j];
        }
    }
    if (skipped == iters) {
        fail(ErrorCode::numeric, "attack: loss gradient vanished at every iteration");
    }
    NontargetedAttack out;
    out.delta = scaled_to_power(std::move(accum), pmax);
    out.skipped_iterations = skipped;
    return out;
}

} // namespace

NontargetedAttack naive_nontargeted(const Victim& victim, const IQFrame& r, int true_label,
                                    const ChannelTaps& taps, double pmax, int iters) {
    return iterative_nontargeted(victim, r, true_label, taps, pmax, iters, false);
}

NontargetedAttack mrpp_nontargeted(const Victim& victim, const IQFrame& r, int true_label,
                                   const ChannelTaps& taps, double pmax, int iters) {
    return iterative_nontargeted(victim, r, true_label, taps, pmax, iters, true);
}

NontargetedAttack mmse_nontargeted(const Victim& victim, const IQFrame& r, int true_label,
                                   const ChannelTaps& taps, double pmax,
                                   const std::vector<double>& gamma_grid, int iters) {
    check_frame_args(r, taps, pmax);
    NontargetedAttack out = naive_nontargeted(
        victim, r, true_label, ChannelTaps(r.size(), cdouble{1.0, 0.0}), pmax, iters);
    double gamma = 0.0;
    MmseSolution sol = best_gamma_solve(victim, r, true_label, taps, pmax, out.delta, gamma_grid,
                                        &gamma);
    out.delta = std::move(sol.delta);
    out.lambda = sol.lambda;
    out.gamma = gamma;
    return out;
}

} // namespace rfadv::atk
