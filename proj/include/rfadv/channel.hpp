#pragma once

#include "rfadv/iq.hpp"
#include "rfadv/rng.hpp"

namespace rfadv::channel {

using iq::cdouble;
using iq::IQFrame;

// Flat-fading channel: one complex tap per symbol,
//   h_j = K * (d0/d)^gamma * psi * h_ray,j
// where psi = 10^(X/20), X ~ N(0, shadow_sigma_db^2) drawn once per frame,
// and h_ray,j has Rayleigh(rayleigh_scale) magnitude and uniform phase.
struct ChannelParams {
    double k = 1.0;
    double d0 = 1.0;
    double d = 10.0;
    double gamma = 2.7;
    double shadow_sigma_db = 8.0;
    double rayleigh_scale = 1.0;
};

using ChannelTaps = std::vector<cdouble>; // kFrameLen taps

// Deterministic large-scale amplitude gain K * (d0/d)^gamma.
double path_gain(const ChannelParams& p);

// Draws per-frame shadowing plus per-symbol Rayleigh fading. Any tap whose
// magnitude falls below 1e-12 is redrawn (underflow guard).
ChannelTaps sample_taps(const ChannelParams& p, Rng& rng);

// Shadowing amplitude factor 10^(X/20), X ~ N(0, shadow_sigma_db^2).
double sample_shadowing(const ChannelParams& p, Rng& rng);

// Taps with a caller-supplied shadowing factor: receivers observing the same
// transmission share one shadowing draw but fade independently.
ChannelTaps sample_taps(const ChannelParams& p, double shadowing, Rng& rng);

ChannelTaps identity_taps();

// Elementwise tap product; mismatched lengths are a dimension error.
IQFrame apply_channel(const ChannelTaps& taps, const IQFrame& x);

// Circularly-symmetric AWGN with per-symbol variance noise_power
// (noise_power/2 per real component).
void add_awgn(IQFrame& x, double noise_power, Rng& rng);

// Adversary transmit-power budget for a target perturbation-to-noise ratio:
// P_max = noise_power * 10^(pnr_db/10).
double pnr_to_pmax(double pnr_db, double noise_power);

// Budget convention selector: when at_receiver is set the deterministic path
// loss is compensated so pnr_db describes the perturbation at the receiver.
double pnr_to_pmax(double pnr_db, double noise_power, const ChannelParams& p, bool at_receiver);

} // namespace rfadv::channel
