#include "rfadv/channel.hpp"

#include <cmath>

#include "rfadv/error.hpp"

namespace rfadv::channel {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kTapGuard = 1e-12;
} // namespace

double path_gain(const ChannelParams& p) {
    if (p.d <= 0.0 || p.d0 <= 0.0) fail(ErrorCode::config, "channel: distances must be positive");
    return p.k * std::pow(p.d0 / p.d, p.gamma);
}

double sample_shadowing(const ChannelParams& p, Rng& rng) {
    return std::pow(10.0, rng.gaussian(0.0, p.shadow_sigma_db) / 20.0);
}

ChannelTaps sample_taps(const ChannelParams& p, Rng& rng) {
    return sample_taps(p, sample_shadowing(p, rng), rng);
}

ChannelTaps sample_taps(const ChannelParams& p, double psi, Rng& rng) {
    if (p.rayleigh_scale <= 0.0) fail(ErrorCode::config, "channel: rayleigh_scale must be positive");
    const double scale = path_gain(p);
    ChannelTaps taps(iq::kFrameLen);
    for (auto& h : taps) {
        int attempts = 0;
        do {
            if (++attempts > 1000) {
                fail(ErrorCode::numeric, "channel: tap magnitude stuck below underflow guard");
            }
            double mag = rng.rayleigh(p.rayleigh_scale);
            double ph = rng.uniform(0.0, 2.0 * kPi);
            h = scale * psi * mag * cdouble{std::cos(ph), std::sin(ph)};
        } while (std::abs(h) < kTapGuard);
    }
    return taps;
}

ChannelTaps identity_taps() { return ChannelTaps(iq::kFrameLen, cdouble{1.0, 0.0}); }

IQFrame apply_channel(const ChannelTaps& taps, const IQFrame& x) {
    if (taps.size() != x.size()) {
        fail(ErrorCode::dimension, "apply_channel: " + std::to_string(taps.size()) + " taps vs " +
                                       std::to_string(x.size()) + " symbols");
    }
    IQFrame y(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) y[j] = taps[j] * x[j];
    return y;
}

void add_awgn(IQFrame& x, double noise_power, Rng& rng) {
    if (noise_power < 0.0) fail(ErrorCode::config, "add_awgn: negative noise power");
    if (noise_power == 0.0) return;
    for (auto& v : x) v += rng.complex_gaussian(noise_power);
}

double pnr_to_pmax(double pnr_db, double noise_power) {
    return noise_power * std::pow(10.0, pnr_db / 10.0);
}

double pnr_to_pmax(double pnr_db, double noise_power, const ChannelParams& p, bool at_receiver) {
    double pmax = pnr_to_pmax(pnr_db, noise_power);
    if (at_receiver) {
        double g = path_gain(p);
        pmax /= g * g;
    }
    return pmax;
}

} // namespace rfadv::channel
