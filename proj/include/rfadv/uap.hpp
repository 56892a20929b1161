#pragma once

// Universal adversarial perturbations (UAPs): perturbations crafted once and
// reused across inputs and/or channel realizations. Two construction families
// are provided:
//
//  * PCA: stack per-input (or per-channel-draw) perturbation vectors into a
//    bank and keep the first principal direction.
//  * VAE: train a small variational autoencoder on a perturbation bank,
//    average the latent codes of a few fresh perturbations, and decode the
//    average back into signal space.
//
// Reduced-knowledge variants swap out whichever ingredient the adversary
// lacks: the channel-limited attack replaces the true channel with draws from
// its distribution; channel-independent UAPs additionally work from channel
// realizations alone; black-box crafting simply runs any of these against a
// surrogate model (no dedicated entry point is needed).

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rfadv/attack.hpp"
#include "rfadv/autodiff.hpp"
#include "rfadv/channel.hpp"
#include "rfadv/iq.hpp"
#include "rfadv/rng.hpp"

namespace rfadv::uap {

using channel::ChannelTaps;
using iq::IQFrame;
using iq::cdouble;

// Harness defaults: bank size for PCA UAPs, training-set size for the VAE,
// and the number of fresh perturbations averaged when crafting one VAE UAP.
inline constexpr int kDefaultPcaBankSize = 100;
inline constexpr int kDefaultVaeTrainRows = 2000;
inline constexpr int kDefaultVaeCraftRows = 40;

// A complex frame flattened to 2p reals: [I_0..I_{p-1}, Q_0..Q_{p-1}].
std::vector<double> row_from_frame(const IQFrame& f);
IQFrame frame_from_row(const std::vector<double>& row);

// First principal direction of the stacked (non-centered) bank: the dominant
// eigenvector of B^T B via power iteration (tolerance 1e-10, at most 1e4
// iterations), sign-canonicalized so the first nonzero coordinate is
// positive. All rows must share one length. A rank-zero bank is a numeric
// error.
std::vector<double> first_principal_component(const std::vector<std::vector<double>>& rows);

// Per-record targeted perturbations stacked into a bank. The channel-aware
// variant crafts against the given taps; the no-channel variant against the
// identity channel. Every row carries power pmax.
std::vector<IQFrame> make_mrpp_bank(const atk::Victim& victim,
                                    const std::vector<iq::DatasetRecord>& records,
                                    const ChannelTaps& taps, double pmax);
std::vector<IQFrame> make_nochannel_bank(const atk::Victim& victim,
                                         const std::vector<iq::DatasetRecord>& records,
                                         double pmax);

// Draws fresh channel taps each time it is called.
using ChannelSampler = std::function<ChannelTaps()>;

// Makes a sampler that draws from the fading model with the given parameters.
ChannelSampler make_channel_sampler(const channel::ChannelParams& params, Rng& rng);

// Channel-limited attack for a single frame: the adversary knows r but only
// the distribution of the channel. Crafts one channel-aware perturbation per
// sampled realization, stacks them, and returns sqrt(pmax) times the first
// principal direction. n_channels >= 1.
IQFrame attack_limited_channel(const atk::Victim& victim, const IQFrame& r, int true_label,
                               const ChannelSampler& sampler, int n_channels, double pmax);
IQFrame attack_limited_channel(const atk::Victim& victim, const IQFrame& r, int true_label,
                               const channel::ChannelParams& params, int n_channels, double pmax,
                               Rng& rng);

// Input-independent UAP with exact channel knowledge: principal direction of
// channel-aware perturbations crafted for each pre-collected record.
IQFrame uap_pca_input_independent(const atk::Victim& victim,
                                  const std::vector<iq::DatasetRecord>& records,
                                  const ChannelTaps& taps, double pmax);

// Input- and channel-independent UAP: each record's perturbation is crafted
// against a fresh sampled channel realization.
IQFrame uap_pca_channel_independent(const atk::Victim& victim,
                                    const std::vector<iq::DatasetRecord>& records,
                                    const ChannelSampler& sampler, double pmax);

// -------------------------------------------------------------------------
// Variational autoencoder over perturbation (or channel) frames.
//
// Full-size layout (scale_divisor = 1):
//   encoder: conv 128x(1,3) same -> relu -> conv 40x(2,3) same -> relu ->
//            flatten -> dense 16 -> relu -> latent head
//   decoder: dense (2*128*40) -> relu -> reshape [40,2,128] ->
//            tconv 40x(2,3) same -> relu -> tconv 128x(1,3) same -> relu ->
//            tconv 1x(3,3) same -> [1,2,128]
// With latent = 2 the head is one dense layer with 4 outputs split into
// mean(2) + log-variance(2); other latent sizes use separate mean and
// log-variance heads. scale_divisor shrinks the filter counts (it must
// divide 128 and 40) to keep CPU training fast.
// -------------------------------------------------------------------------
struct VaeConfig {
    int latent = 2;
    int scale_divisor = 4;
    int epochs = 30;
    int batch = 32;
    double lr = 1e-3;
    std::uint64_t seed = 1;
};

struct VaeEpochStats {
    double recon = 0.0; // mean per-row reconstruction (sum-of-squares) loss
    double kl = 0.0;    // mean per-row KL term
};

class Vae {
  public:
    explicit Vae(const VaeConfig& cfg, std::uint64_t init_seed);

    // Minimizes reconstruction + KL with Adam; deterministic given the
    // config seed. Requires at least 100 rows. A non-finite loss is a
    // training error.
    std::vector<VaeEpochStats> train(const std::vector<IQFrame>& rows);

    // Encoder mean head (no sampling); latent-dimensional.
    std::vector<double> encode_mean(const IQFrame& f) const;
    // Decoder output for one latent vector.
    IQFrame decode(const std::vector<double>& z) const;

    // Parameter counts of the four encoder rows (conv1, conv2, dense1,
    // latent head) and four decoder rows (dense, tconv1, tconv2, tconv3).
    // For separate mean/log-variance heads only the mean head is counted in
    // the encoder's fourth row.
    std::vector<std::size_t> encoder_layer_params() const;
    std::vector<std::size_t> decoder_layer_params() const;

    const VaeConfig& config() const { return cfg_; }

    void save(const std::string& path) const;
    static Vae load(const std::string& path);

  private:
    struct Forward; // encoder/decoder node ids inside one graph
    Forward forward(nn::Graph& g, nn::Tensor batch, Rng* reparam_rng) const;

    VaeConfig cfg_;
    int f1_ = 0, f2_ = 0;            // conv filter counts after scaling
    std::vector<nn::Tensor> params_; // fixed order, see uap.cpp
};

// Input-independent VAE UAP: encode k perturbations, average the latent
// means, decode, then conjugate-match the known channel and scale to the
// power budget. A zero decoder output (after channel matching) is a numeric
// error.
IQFrame uap_vae_input_independent(const Vae& vae, const std::vector<IQFrame>& perturbations,
                                  const ChannelTaps& taps, double pmax);

// Channel-independent VAE UAP: a second VAE trained on channel realizations
// supplies the channel estimate. Its decoded average replaces the known taps
// in the input-independent construction.
IQFrame uap_vae_channel_independent(const Vae& perturbation_vae, const Vae& channel_vae,
                                    const std::vector<IQFrame>& perturbations,
                                    const std::vector<IQFrame>& channel_rows, double pmax);

} // namespace rfadv::uap
