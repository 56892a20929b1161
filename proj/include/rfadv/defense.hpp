#pragma once

// Randomized-smoothing defense: train on Gaussian-noise-augmented data, then
// at test time classify k independently noised copies of each frame and only
// answer when the top class beats the runner-up decisively under an exact
// two-sided binomial test; otherwise abstain.

#include <vector>

#include "rfadv/classifier.hpp"
#include "rfadv/iq.hpp"
#include "rfadv/rng.hpp"

namespace rfadv::def {

using iq::IQFrame;

struct SmoothingParams {
    int k = 10;           // noisy copies per sample
    double sigma = 0.001; // Gaussian std per real component (I and Q)
    double alpha = 0.05;  // abstention significance level
    double q = 0.5;       // binomial null probability
};

// Throws on sigma < 0, alpha outside (0,1), or q outside (0,1). The k bound
// differs per operation (>= 0 to augment, >= 1 to certify).
void validate(const SmoothingParams& params);

// Returns a dataset where every record is followed by k noisy copies of
// itself (labels and SNR tags copied), so the record count grows by exactly
// (k+1)x. Train indices expand to each record's whole block; test indices
// keep only the unmodified originals so held-out evaluation is unchanged.
iq::Dataset augment_training(const iq::Dataset& ds, const SmoothingParams& params, Rng& rng);

// Exact two-sided binomial p-value (minimum-likelihood method): the sum of
// P[X = x] over all outcomes x no more likely than the observed count, for
// X ~ Binomial(n_trials, q). Computed in extended precision.
double binom_p_value(int n_success, int n_trials, double q);

struct CertifiedPrediction {
    bool abstained = false;
    int label = -1;          // top class by count (reported even on abstain)
    std::vector<int> counts; // per-class votes over the k noisy copies
    int n_a = 0;             // top count
    int n_b = 0;             // runner-up count
    double p_value = 1.0;
};

// Decision rule on vote counts alone: top two counts feed the binomial test;
// answer the top class when p <= alpha, abstain otherwise. Count ties take
// the lower class index.
CertifiedPrediction decide_from_counts(const std::vector<int>& counts, double alpha, double q);

// Classifies k noisy copies of the frame (noise std sigma per component) and
// applies decide_from_counts. Requires k >= 1.
CertifiedPrediction certified_predict(const cls::Model& model, const IQFrame& frame,
                                      const SmoothingParams& params, Rng& rng);

} // namespace rfadv::def
