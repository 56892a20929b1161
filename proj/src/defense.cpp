#include "rfadv/defense.hpp"

#include <algorithm>
#include <cmath>

#include "rfadv/error.hpp"

namespace rfadv::def {

void validate(const SmoothingParams& params) {
    if (params.sigma < 0.0) fail(ErrorCode::config, "defense: sigma must be nonnegative");
    if (!(params.alpha > 0.0) || !(params.alpha < 1.0)) {
        fail(ErrorCode::config, "defense: alpha must lie in (0, 1)");
    }
    if (!(params.q > 0.0) || !(params.q < 1.0)) {
        fail(ErrorCode::config, "defense: q must lie in (0, 1)");
    }
}

iq::Dataset augment_training(const iq::Dataset& ds, const SmoothingParams& params, Rng& rng) {
    validate(params);
    if (params.k < 0) fail(ErrorCode::config, "defense: k must be nonnegative");

    const std::size_t block = static_cast<std::size_t>(params.k) + 1;
    iq::Dataset out;
    out.seed = ds.seed;
    out.records.reserve(ds.records.size() * block);
    for (const auto& rec : ds.records) {
        out.records.push_back(rec);
        for (int c = 0; c < params.k; ++c) {
            iq::DatasetRecord noisy = rec;
            for (auto& v : noisy.frame) {
                v += iq::cdouble{rng.gaussian(0.0, params.sigma),
                                 rng.gaussian(0.0, params.sigma)};
            }
            out.records.push_back(std::move(noisy));
        }
    }
    out.train_idx.reserve(ds.train_idx.size() * block);
    for (auto i : ds.train_idx) {
        for (std::size_t c = 0; c < block; ++c) {
            out.train_idx.push_back(static_cast<std::uint32_t>(i * block + c));
        }
    }
    out.test_idx.reserve(ds.test_idx.size());
    for (auto i : ds.test_idx) {
        out.test_idx.push_back(static_cast<std::uint32_t>(i * block));
    }
    return out;
}

double binom_p_value(int n_success, int n_trials, double q) {
    if (n_trials < 0 || n_success < 0 || n_success > n_trials) {
        fail(ErrorCode::config, "binomial test: need 0 <= successes <= trials");
    }
    if (!(q > 0.0) || !(q < 1.0)) {
        fail(ErrorCode::config, "binomial test: q must lie in (0, 1)");
    }
    if (n_trials == 0) return 1.0;

    const long double lq = std::log(static_cast<long double>(q));
    const long double l1q = std::log(1.0L - static_cast<long double>(q));
    auto log_pmf = [&](int x) {
        return std::lgammal(static_cast<long double>(n_trials) + 1.0L) -
               std::lgammal(static_cast<long double>(x) + 1.0L) -
               std::lgammal(static_cast<long double>(n_trials - x) + 1.0L) +
               static_cast<long double>(x) * lq + static_cast<long double>(n_trials - x) * l1q;
    };

    // Minimum-likelihood two-sided test: include every outcome at most as
    // likely as the observed one (with a small relative slack for ties).
    const long double observed = log_pmf(n_success);
    const long double slack = std::log(1.0L + 1e-7L);
    long double p = 0.0L;
    for (int x = 0; x <= n_trials; ++x) {
        if (log_pmf(x) <= observed + slack) p += std::exp(log_pmf(x));
    }
    if (p > 1.0L) p = 1.0L;
    return static_cast<double>(p);
}

CertifiedPrediction decide_from_counts(const std::vector<int>& counts, double alpha, double q) {
    if (counts.empty()) fail(ErrorCode::config, "certified decision: empty count vector");
    int total = 0;
    for (int c : counts) {
        if (c < 0) fail(ErrorCode::config, "certified decision: negative count");
        total += c;
    }
    if (total < 1) fail(ErrorCode::config, "certified decision: no votes");

    CertifiedPrediction out;
    out.counts = counts;
    int top = 0;
    for (std::size_t c = 1; c < counts.size(); ++c) {
        if (counts[c] > counts[static_cast<std::size_t>(top)]) top = static_cast<int>(c);
    }
    int second = -1;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (static_cast<int>(c) == top) continue;
        if (second < 0 || counts[c] > counts[static_cast<std::size_t>(second)]) {
            second = static_cast<int>(c);
        }
    }
    out.label = top;
    out.n_a = counts[static_cast<std::size_t>(top)];
    out.n_b = second >= 0 ? counts[static_cast<std::size_t>(second)] : 0;
    out.p_value = binom_p_value(out.n_a, out.n_a + out.n_b, q);
    out.abstained = !(out.p_value <= alpha);
    return out;
}

CertifiedPrediction certified_predict(const cls::Model& model, const IQFrame& frame,
                                      const SmoothingParams& params, Rng& rng) {
    validate(params);
    if (params.k < 1) fail(ErrorCode::config, "defense: certification needs k >= 1");

    std::vector<IQFrame> copies(static_cast<std::size_t>(params.k), frame);
    for (auto& copy : copies) {
        for (auto& v : copy) {
            v += iq::cdouble{rng.gaussian(0.0, params.sigma), rng.gaussian(0.0, params.sigma)};
        }
    }
    std::vector<const IQFrame*> ptrs;
    ptrs.reserve(copies.size());
    for (const auto& c : copies) ptrs.push_back(&c);

    nn::Tensor lg = model.logits(ptrs);
    const int classes = model.config().n_classes;
    std::vector<int> counts(static_cast<std::size_t>(classes), 0);
    for (int i = 0; i < params.k; ++i) {
        int arg = 0;
        for (int c = 1; c < classes; ++c) {
            if (lg.v[static_cast<std::size_t>(i * classes + c)] >
                lg.v[static_cast<std::size_t>(i * classes + arg)]) {
                arg = c;
            }
        }
        ++counts[static_cast<std::size_t>(arg)];
    }
    return decide_from_counts(counts, params.alpha, params.q);
}

} // namespace rfadv::def
