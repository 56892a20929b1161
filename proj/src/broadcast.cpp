#include "rfadv/broadcast.hpp"

#include <cmath>
#include <limits>

#include "rfadv/error.hpp"

namespace rfadv::bcast {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kCancelGuard = 1e-12;

void check_pmax(double pmax) {
    if (pmax <= 0.0) fail(ErrorCode::config, "broadcast: power budget must be positive");
}

double resolve_eps_acc(double eps_acc, double sqrt_p) {
    if (eps_acc < 0.0) eps_acc = sqrt_p / 100.0;
    if (eps_acc <= 0.0 || eps_acc >= sqrt_p) {
        fail(ErrorCode::config, "broadcast: bisection accuracy out of (0, sqrt(pmax))");
    }
    return eps_acc;
}

} // namespace

void validate(const Ensemble& ensemble) {
    const auto& rs = ensemble.receivers;
    if (rs.empty()) fail(ErrorCode::config, "broadcast: ensemble needs at least one receiver");
    if (ensemble.weights.size() != rs.size()) {
        fail(ErrorCode::config, "broadcast: one weight per receiver required");
    }
    double sum = 0.0;
    for (double w : ensemble.weights) {
        if (!(w >= 0.0)) fail(ErrorCode::config, "broadcast: weights must be nonnegative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
        fail(ErrorCode::config, "broadcast: weights must sum to 1");
    }

    const std::size_t len = rs.front().observed.size();
    const int classes = rs.front().victim ? rs.front().victim->n_classes() : 0;
    const int label = rs.front().true_label;
    for (const auto& r : rs) {
        if (r.victim == nullptr) fail(ErrorCode::config, "broadcast: missing victim model");
        if (r.victim->n_classes() != classes) {
            fail(ErrorCode::config, "broadcast: receivers disagree on the class count");
        }
        if (r.observed.size() != len || r.taps.size() != len) {
            fail(ErrorCode::dimension, "broadcast: frame/tap lengths disagree across receivers");
        }
        if (r.true_label != label) {
            fail(ErrorCode::config, "broadcast: receivers disagree on the true label");
        }
        if (label < 0 || label >= classes) {
            fail(ErrorCode::dimension, "broadcast: true label out of range");
        }
    }
}

IQFrame idba(const Ensemble& ensemble, double pmax, double eps_acc) {
    validate(ensemble);
    check_pmax(pmax);

    const std::size_t len = ensemble.receivers.front().observed.size();
    IQFrame sum(len, cdouble{0.0, 0.0});
    for (std::size_t i = 0; i < ensemble.receivers.size(); ++i) {
        const auto& rx = ensemble.receivers[i];
        const double w = ensemble.weights[i];
        IQFrame delta =
            atk::mrpp_targeted(*rx.victim, rx.observed, rx.true_label, rx.taps, pmax, eps_acc)
                .delta;
        for (std::size_t j = 0; j < len; ++j) sum[j] += w * delta[j];
    }
    if (std::sqrt(atk::power(sum)) < kCancelGuard) {
        fail(ErrorCode::numeric, "broadcast: weighted perturbations cancel");
    }
    return atk::scaled_to_power(std::move(sum), pmax);
}

JdbaResult jdba(const Ensemble& ensemble, double pmax, double eps_acc) {
    validate(ensemble);
    check_pmax(pmax);
    const double sqrt_p = std::sqrt(pmax);
    eps_acc = resolve_eps_acc(eps_acc, sqrt_p);

    const auto& rs = ensemble.receivers;
    const std::size_t m = rs.size();
    const std::size_t len = rs.front().observed.size();
    const int classes = rs.front().victim->n_classes();
    const int true_label = rs.front().true_label;

    // Per-receiver loss gradients for every class, at the clean observations.
    std::vector<std::vector<IQFrame>> grads(m);
    for (std::size_t i = 0; i < m; ++i) {
        grads[i] = rs[i].victim->loss_gradients_all(rs[i].observed);
        if (grads[i].size() != static_cast<std::size_t>(classes)) {
            fail(ErrorCode::internal, "broadcast: victim returned wrong gradient count");
        }
    }

    JdbaResult out;
    out.fool_counts.assign(static_cast<std::size_t>(classes), -1);
    out.aggregate_eps.assign(static_cast<std::size_t>(classes), kInf);
    std::vector<IQFrame> dirs(static_cast<std::size_t>(classes));

    for (int c = 0; c < classes; ++c) {
        if (c == true_label) continue;
        // Joint transmit direction: weighted sum of per-receiver
        // conjugate-channel gradients, normalized once.
        IQFrame dir(len, cdouble{0.0, 0.0});
        for (std::size_t i = 0; i < m; ++i) {
            const double w = ensemble.weights[i];
            for (std::size_t j = 0; j < len; ++j) {
                dir[j] += w * std::conj(rs[i].taps[j]) * grads[i][static_cast<std::size_t>(c)][j];
            }
        }
        double nrm = 0.0;
        for (const auto& v : dir) nrm += std::norm(v);
        nrm = std::sqrt(nrm);
        if (nrm == 0.0) continue; // vanished joint direction: class not attemptable
        for (auto& v : dir) v /= nrm;

        int fooled = 0;
        double agg = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            auto flipped_at = [&](double eps) {
                IQFrame x(len);
                for (std::size_t j = 0; j < len; ++j) {
                    x[j] = rs[i].observed[j] - eps * rs[i].taps[j] * dir[j];
                }
                return rs[i].victim->predict(x) != true_label;
            };
            if (flipped_at(sqrt_p)) ++fooled;
            double lo = 0.0, hi = sqrt_p;
            while (hi - lo > eps_acc) {
                const double mid = 0.5 * (lo + hi);
                if (flipped_at(mid)) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            agg += hi;
        }
        out.fool_counts[static_cast<std::size_t>(c)] = fooled;
        out.aggregate_eps[static_cast<std::size_t>(c)] = agg;
        dirs[static_cast<std::size_t>(c)] = std::move(dir);
    }

    int target = -1;
    for (int c = 0; c < classes; ++c) {
        if (out.fool_counts[static_cast<std::size_t>(c)] < 0) continue;
        if (target < 0) {
            target = c;
            continue;
        }
        const auto cs = static_cast<std::size_t>(c);
        const auto ts = static_cast<std::size_t>(target);
        if (out.fool_counts[cs] > out.fool_counts[ts] ||
            (out.fool_counts[cs] == out.fool_counts[ts] &&
             out.aggregate_eps[cs] < out.aggregate_eps[ts])) {
            target = c;
        }
    }
    if (target < 0) {
        fail(ErrorCode::numeric, "broadcast: joint direction vanished for every candidate class");
    }

    out.target_class = target;
    out.delta.resize(len);
    for (std::size_t j = 0; j < len; ++j) {
        out.delta[j] = -sqrt_p * dirs[static_cast<std::size_t>(target)][j];
    }
    return out;
}

std::vector<double> heuristic_weights(const std::vector<double>& rayleigh_scales) {
    if (rayleigh_scales.empty()) fail(ErrorCode::config, "broadcast: no channel scales given");
    double sum = 0.0;
    for (double s : rayleigh_scales) {
        if (!(s > 0.0)) fail(ErrorCode::config, "broadcast: channel scales must be positive");
        sum += 1.0 / s;
    }
    std::vector<double> w;
    w.reserve(rayleigh_scales.size());
    for (double s : rayleigh_scales) w.push_back((1.0 / s) / sum);
    return w;
}

BroadcastEval evaluate_broadcast(const std::vector<const atk::Victim*>& victims,
                                 const std::vector<Scene>& scenes,
                                 const std::vector<double>& weights, double pmax,
                                 BroadcastKind kind, double eps_acc) {
    if (victims.empty()) fail(ErrorCode::config, "broadcast: no victims given");
    if (scenes.empty()) fail(ErrorCode::config, "broadcast: no scenes given");

    BroadcastEval eval;
    eval.receiver_fooled.assign(victims.size(), 0);
    for (const auto& scene : scenes) {
        if (scene.taps.size() != victims.size() || scene.observed.size() != victims.size()) {
            fail(ErrorCode::dimension, "broadcast: scene arity does not match the victim count");
        }
        Ensemble ensemble;
        ensemble.weights = weights;
        for (std::size_t i = 0; i < victims.size(); ++i) {
            ensemble.receivers.push_back(
                Receiver{victims[i], scene.taps[i], scene.observed[i], scene.true_label});
        }
        IQFrame delta = kind == BroadcastKind::idba ? idba(ensemble, pmax, eps_acc)
                                                    : jdba(ensemble, pmax, eps_acc).delta;
        bool all_fooled = true;
        for (std::size_t i = 0; i < victims.size(); ++i) {
            IQFrame x(scene.observed[i].size());
            for (std::size_t j = 0; j < x.size(); ++j) {
                x[j] = scene.observed[i][j] + scene.taps[i][j] * delta[j];
            }
            if (victims[i]->predict(x) == scene.true_label) {
                all_fooled = false;
            } else {
                ++eval.receiver_fooled[i];
            }
        }
        ++eval.scenes;
        if (all_fooled) ++eval.joint_fooled;
    }
    eval.joint_accuracy = 1.0 - static_cast<double>(eval.joint_fooled) / eval.scenes;
    eval.receiver_accuracy.resize(victims.size());
    for (std::size_t i = 0; i < victims.size(); ++i) {
        eval.receiver_accuracy[i] = 1.0 - static_cast<double>(eval.receiver_fooled[i]) / eval.scenes;
    }
    return eval;
}

LineSearchResult weight_line_search(const std::vector<const atk::Victim*>& victims,
                                    const std::vector<Scene>& scenes,
                                    const std::vector<double>& rayleigh_scales, double pmax,
                                    BroadcastKind kind, double step, double eps_acc) {
    if (victims.size() != 2 || rayleigh_scales.size() != 2) {
        fail(ErrorCode::config, "broadcast: weight line search is defined for two receivers");
    }
    if (!(step > 0.0) || step > 1.0) {
        fail(ErrorCode::config, "broadcast: grid step must lie in (0, 1]");
    }
    const double center = heuristic_weights(rayleigh_scales)[0];

    LineSearchResult result;
    double best_w1 = 0.0;
    double best_dist = kInf;
    for (int i = 0;; ++i) {
        double w1 = i * step;
        if (w1 > 1.0 + 1e-9) break;
        if (w1 > 1.0) w1 = 1.0;
        BroadcastEval eval = evaluate_broadcast(victims, scenes, {w1, 1.0 - w1}, pmax, kind,
                                                eps_acc);
        result.grid_accuracy.push_back(eval.joint_accuracy);
        const double dist = std::abs(w1 - center);
        const bool better = result.weights.empty() || eval.joint_accuracy < result.joint_accuracy ||
                            (eval.joint_accuracy == result.joint_accuracy && dist < best_dist);
        if (better) {
            result.joint_accuracy = eval.joint_accuracy;
            best_w1 = w1;
            best_dist = dist;
            result.weights = {w1, 1.0 - w1};
        }
        if (w1 >= 1.0) break;
    }
    (void)best_w1;
    return result;
}

} // namespace rfadv::bcast
