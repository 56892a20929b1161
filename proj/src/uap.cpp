#include "rfadv/uap.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <utility>

#include "rfadv/error.hpp"

namespace rfadv::uap {

namespace {

constexpr double kPowerIterTol = 1e-10;
constexpr int kPowerIterMax = 10000;

void check_pmax(double pmax) {
    if (!(pmax > 0.0)) fail(ErrorCode::config, "uap: pmax must be positive");
}

nn::Tensor pack_rows(const std::vector<IQFrame>& rows) {
    const int n = static_cast<int>(rows.size());
    nn::Tensor t = nn::Tensor::zeros({n, 1, 2, iq::kFrameLen});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < iq::kFrameLen; ++j) {
            t.v[static_cast<std::size_t>(i * 2 * iq::kFrameLen + j)] =
                rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].real();
            t.v[static_cast<std::size_t>(i * 2 * iq::kFrameLen + iq::kFrameLen + j)] =
                rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].imag();
        }
    }
    return t;
}

void check_frames(const std::vector<IQFrame>& rows, const char* what) {
    if (rows.empty()) fail(ErrorCode::config, std::string("uap: empty ") + what);
    for (const auto& f : rows) {
        if (static_cast<int>(f.size()) != iq::kFrameLen) {
            fail(ErrorCode::dimension, std::string("uap: ") + what + " rows must have " +
                                           std::to_string(iq::kFrameLen) + " symbols");
        }
    }
}

} // namespace

std::vector<double> row_from_frame(const IQFrame& f) {
    std::vector<double> row(2 * f.size());
    for (std::size_t j = 0; j < f.size(); ++j) {
        row[j] = f[j].real();
        row[f.size() + j] = f[j].imag();
    }
    return row;
}

IQFrame frame_from_row(const std::vector<double>& row) {
    if (row.size() % 2 != 0) fail(ErrorCode::dimension, "uap: row length must be even");
    const std::size_t p = row.size() / 2;
    IQFrame f(p);
    for (std::size_t j = 0; j < p; ++j) f[j] = {row[j], row[p + j]};
    return f;
}

std::vector<double> first_principal_component(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) fail(ErrorCode::config, "principal component: empty bank");
    const std::size_t d = rows.front().size();
    if (d == 0) fail(ErrorCode::dimension, "principal component: zero-length rows");
    for (const auto& r : rows) {
        if (r.size() != d) fail(ErrorCode::dimension, "principal component: ragged bank rows");
        for (double x : r) {
            if (!std::isfinite(x)) fail(ErrorCode::numeric, "principal component: non-finite row");
        }
    }

    Eigen::MatrixXd b(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    Eigen::MatrixXd g = b.transpose() * b;
    if (g.cwiseAbs().maxCoeff() == 0.0) {
        fail(ErrorCode::numeric, "principal component: rank-zero bank");
    }

    Rng rng(0x9CA11CE5u);
    Eigen::VectorXd v(static_cast<Eigen::Index>(d));
    for (Eigen::Index j = 0; j < v.size(); ++j) v(j) = rng.gaussian();
    v.normalize();

    for (int it = 0; it < kPowerIterMax; ++it) {
        Eigen::VectorXd w = g * v;
        const double nw = w.norm();
        if (nw == 0.0) fail(ErrorCode::numeric, "principal component: iteration collapsed");
        w /= nw;
        const double delta = (w - v).norm();
        v = w;
        if (delta < kPowerIterTol) break;
    }

    for (Eigen::Index j = 0; j < v.size(); ++j) {
        if (std::abs(v(j)) > 1e-12) {
            if (v(j) < 0.0) v = -v;
            break;
        }
    }
    return std::vector<double>(v.data(), v.data() + v.size());
}

std::vector<IQFrame> make_mrpp_bank(const atk::Victim& victim,
                                    const std::vector<iq::DatasetRecord>& records,
                                    const ChannelTaps& taps, double pmax) {
    if (records.empty()) fail(ErrorCode::config, "uap: empty record set");
    std::vector<IQFrame> bank;
    bank.reserve(records.size());
    for (const auto& rec : records) {
        bank.push_back(atk::mrpp_targeted(victim, rec.frame, rec.label, taps, pmax).delta);
    }
    return bank;
}

std::vector<IQFrame> make_nochannel_bank(const atk::Victim& victim,
                                         const std::vector<iq::DatasetRecord>& records,
                                         double pmax) {
    if (records.empty()) fail(ErrorCode::config, "uap: empty record set");
    std::vector<IQFrame> bank;
    bank.reserve(records.size());
    for (const auto& rec : records) {
        bank.push_back(atk::fgm_targeted_nochannel(victim, rec.frame, rec.label, pmax).delta);
    }
    return bank;
}

ChannelSampler make_channel_sampler(const channel::ChannelParams& params, Rng& rng) {
    return [params, &rng]() { return channel::sample_taps(params, rng); };
}

IQFrame attack_limited_channel(const atk::Victim& victim, const IQFrame& r, int true_label,
                               const ChannelSampler& sampler, int n_channels, double pmax) {
    if (n_channels < 1) fail(ErrorCode::config, "channel-limited attack: need n_channels >= 1");
    check_pmax(pmax);
    std::vector<std::vector<double>> rows;
    rows.reserve(static_cast<std::size_t>(n_channels));
    for (int n = 0; n < n_channels; ++n) {
        ChannelTaps taps = sampler();
        rows.push_back(row_from_frame(atk::mrpp_targeted(victim, r, true_label, taps, pmax).delta));
    }
    return atk::scaled_to_power(frame_from_row(first_principal_component(rows)), pmax);
}

IQFrame attack_limited_channel(const atk::Victim& victim, const IQFrame& r, int true_label,
                               const channel::ChannelParams& params, int n_channels, double pmax,
                               Rng& rng) {
    return attack_limited_channel(victim, r, true_label, make_channel_sampler(params, rng),
                                  n_channels, pmax);
}

IQFrame uap_pca_input_independent(const atk::Victim& victim,
                                  const std::vector<iq::DatasetRecord>& records,
                                  const ChannelTaps& taps, double pmax) {
    check_pmax(pmax);
    std::vector<std::vector<double>> rows;
    rows.reserve(records.size());
    for (const auto& f : make_mrpp_bank(victim, records, taps, pmax)) {
        rows.push_back(row_from_frame(f));
    }
    return atk::scaled_to_power(frame_from_row(first_principal_component(rows)), pmax);
}

IQFrame uap_pca_channel_independent(const atk::Victim& victim,
                                    const std::vector<iq::DatasetRecord>& records,
                                    const ChannelSampler& sampler, double pmax) {
    check_pmax(pmax);
    if (records.empty()) fail(ErrorCode::config, "uap: empty record set");
    std::vector<std::vector<double>> rows;
    rows.reserve(records.size());
    for (const auto& rec : records) {
        ChannelTaps taps = sampler();
        rows.push_back(
            row_from_frame(atk::mrpp_targeted(victim, rec.frame, rec.label, taps, pmax).delta));
    }
    return atk::scaled_to_power(frame_from_row(first_principal_component(rows)), pmax);
}

// ---------------------------------------------------------------------------
// VAE
// ---------------------------------------------------------------------------

namespace {

nn::Tensor he_tensor(std::vector<int> shape, int fan_in, Rng& rng) {
    nn::Tensor t(std::move(shape));
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& x : t.v) x = rng.gaussian(0.0, stddev);
    return t;
}

constexpr int kEncDense1Units = 16;

} // namespace

struct Vae::Forward {
    nn::Graph::Id x = -1;
    nn::Graph::Id mu = -1;
    nn::Graph::Id logvar = -1;
    nn::Graph::Id out = -1;
    std::vector<nn::Graph::Id> param_ids;
};

Vae::Vae(const VaeConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    if (cfg.latent < 1) fail(ErrorCode::config, "vae: latent dimension must be >= 1");
    if (cfg.scale_divisor < 1 || 128 % cfg.scale_divisor != 0 || 40 % cfg.scale_divisor != 0) {
        fail(ErrorCode::config, "vae: scale_divisor must divide 128 and 40");
    }
    if (cfg.epochs < 1) fail(ErrorCode::config, "vae: epochs must be >= 1");
    if (cfg.batch < 1) fail(ErrorCode::config, "vae: batch must be >= 1");
    if (!(cfg.lr > 0.0)) fail(ErrorCode::config, "vae: learning rate must be positive");

    f1_ = 128 / cfg.scale_divisor;
    f2_ = 40 / cfg.scale_divisor;
    const int flat = f2_ * 2 * iq::kFrameLen;
    const int q = cfg.latent;

    Rng rng = Rng::stream(init_seed, 0x7AE0u);
    params_.push_back(he_tensor({f1_, 1, 1, 3}, 1 * 1 * 3, rng));
    params_.push_back(nn::Tensor::zeros({f1_}));
    params_.push_back(he_tensor({f2_, f1_, 2, 3}, f1_ * 2 * 3, rng));
    params_.push_back(nn::Tensor::zeros({f2_}));
    params_.push_back(he_tensor({kEncDense1Units, flat}, flat, rng));
    params_.push_back(nn::Tensor::zeros({kEncDense1Units}));
    if (q == 2) {
        params_.push_back(he_tensor({2 * q, kEncDense1Units}, kEncDense1Units, rng));
        params_.push_back(nn::Tensor::zeros({2 * q}));
    } else {
        params_.push_back(he_tensor({q, kEncDense1Units}, kEncDense1Units, rng));
        params_.push_back(nn::Tensor::zeros({q}));
        params_.push_back(he_tensor({q, kEncDense1Units}, kEncDense1Units, rng));
        params_.push_back(nn::Tensor::zeros({q}));
    }
    params_.push_back(he_tensor({flat, q}, q, rng));
    params_.push_back(nn::Tensor::zeros({flat}));
    params_.push_back(he_tensor({f2_, f2_, 2, 3}, f2_ * 2 * 3, rng));
    params_.push_back(nn::Tensor::zeros({f2_}));
    params_.push_back(he_tensor({f2_, f1_, 1, 3}, f2_ * 1 * 3, rng));
    params_.push_back(nn::Tensor::zeros({f1_}));
    params_.push_back(he_tensor({f1_, 1, 3, 3}, f1_ * 3 * 3, rng));
    params_.push_back(nn::Tensor::zeros({1}));
}

Vae::Forward Vae::forward(nn::Graph& g, nn::Tensor batch, Rng* reparam_rng) const {
    Forward f;
    const bool training = reparam_rng != nullptr;
    f.param_ids.reserve(params_.size());
    for (const auto& p : params_) {
        f.param_ids.push_back(training ? g.param(p) : g.input(p));
    }
    const int n = batch.dim(0);
    const int q = cfg_.latent;
    const int flat = f2_ * 2 * iq::kFrameLen;
    std::size_t k = 0;
    auto next_pair = [&]() {
        auto w = f.param_ids[k];
        auto b = f.param_ids[k + 1];
        k += 2;
        return std::make_pair(w, b);
    };

    f.x = g.input(std::move(batch));
    auto c1p = next_pair();
    auto c1 = g.relu(g.conv2d(f.x, c1p.first, c1p.second, nn::Pad::same));
    auto c2p = next_pair();
    auto c2 = g.relu(g.conv2d(c1, c2p.first, c2p.second, nn::Pad::same));
    auto d1p = next_pair();
    auto d1 = g.relu(g.dense(g.reshape(c2, {n, flat}), d1p.first, d1p.second));

    if (q == 2) {
        auto hp = next_pair();
        auto z4 = g.dense(d1, hp.first, hp.second);
        // Fixed projections split the 4-wide head into mean and log-variance.
        nn::Tensor pm = nn::Tensor::zeros({q, 2 * q});
        nn::Tensor pv = nn::Tensor::zeros({q, 2 * q});
        for (int i = 0; i < q; ++i) {
            pm.v[static_cast<std::size_t>(i * 2 * q + i)] = 1.0;
            pv.v[static_cast<std::size_t>(i * 2 * q + q + i)] = 1.0;
        }
        nn::Tensor zb = nn::Tensor::zeros({q});
        auto pm_id = g.input(pm);
        auto zb1 = g.input(zb);
        f.mu = g.dense(z4, pm_id, zb1);
        auto pv_id = g.input(pv);
        auto zb2 = g.input(zb);
        f.logvar = g.dense(z4, pv_id, zb2);
    } else {
        auto mup = next_pair();
        f.mu = g.dense(d1, mup.first, mup.second);
        auto lvp = next_pair();
        f.logvar = g.dense(d1, lvp.first, lvp.second);
    }

    auto z = training ? g.gaussian_reparam(f.mu, f.logvar, *reparam_rng) : f.mu;
    auto ddp = next_pair();
    auto dd = g.relu(g.dense(z, ddp.first, ddp.second));
    auto r1 = g.reshape(dd, {n, f2_, 2, iq::kFrameLen});
    auto t1p = next_pair();
    auto t1 = g.relu(g.transposed_conv2d(r1, t1p.first, t1p.second, nn::Pad::same));
    auto t2p = next_pair();
    auto t2 = g.relu(g.transposed_conv2d(t1, t2p.first, t2p.second, nn::Pad::same));
    auto t3p = next_pair();
    f.out = g.transposed_conv2d(t2, t3p.first, t3p.second, nn::Pad::same);
    return f;
}

std::vector<VaeEpochStats> Vae::train(const std::vector<IQFrame>& rows) {
    check_frames(rows, "training bank");
    if (rows.size() < 100) fail(ErrorCode::config, "vae: need at least 100 training rows");
    for (const auto& f : rows) {
        for (const auto& v : f) {
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
                fail(ErrorCode::numeric, "vae: non-finite training row");
            }
        }
    }

    const int n = static_cast<int>(rows.size());
    nn::Adam opt;
    opt.lr = cfg_.lr;
    std::vector<VaeEpochStats> history;

    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
        std::vector<int> order(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        Rng shuffle_rng = Rng::stream(cfg_.seed, 0x5AE1u, static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order.begin(), order.end());
        Rng reparam_rng = Rng::stream(cfg_.seed, 0x5AE2u, static_cast<std::uint64_t>(epoch));

        VaeEpochStats stats;
        for (int start = 0; start < n; start += cfg_.batch) {
            const int bs = std::min(cfg_.batch, n - start);
            std::vector<IQFrame> chunk;
            chunk.reserve(static_cast<std::size_t>(bs));
            for (int i = 0; i < bs; ++i) {
                chunk.push_back(rows[static_cast<std::size_t>(order[static_cast<std::size_t>(start + i)])]);
            }
            nn::Tensor batch = pack_rows(chunk);

            nn::Graph g(true);
            Forward f = forward(g, batch, &reparam_rng);
            auto recon = g.mse_loss(f.out, batch);
            auto kl = g.kl_divergence(f.mu, f.logvar);
            auto loss = g.add(recon, kl);
            g.backward(loss);

            const double recon_v = g.value(recon).v[0];
            const double kl_v = g.value(kl).v[0];
            if (!std::isfinite(recon_v) || !std::isfinite(kl_v)) {
                fail(ErrorCode::training, "vae: non-finite loss in epoch " + std::to_string(epoch));
            }
            stats.recon += recon_v;
            stats.kl += kl_v;

            std::vector<nn::Tensor*> ps;
            std::vector<const nn::Tensor*> gs;
            for (std::size_t i = 0; i < params_.size(); ++i) {
                ps.push_back(&params_[i]);
                gs.push_back(&g.grad(f.param_ids[i]));
            }
            opt.step(ps, gs);
        }
        stats.recon /= n;
        stats.kl /= n;
        history.push_back(stats);
    }
    return history;
}

std::vector<double> Vae::encode_mean(const IQFrame& f) const {
    check_frames({f}, "input");
    nn::Graph g(false);
    Forward fw = forward(g, pack_rows({f}), nullptr);
    return g.value(fw.mu).v;
}

IQFrame Vae::decode(const std::vector<double>& z) const {
    if (static_cast<int>(z.size()) != cfg_.latent) {
        fail(ErrorCode::dimension, "vae: latent vector has wrong dimension");
    }
    const int q = cfg_.latent;
    const int flat = f2_ * 2 * iq::kFrameLen;

    nn::Graph g(false);
    std::vector<nn::Graph::Id> pid;
    pid.reserve(params_.size());
    for (const auto& p : params_) pid.push_back(g.input(p));
    // Parameter layout: 6 encoder tensors, one head (2 tensors) or two heads
    // (4 tensors), then the 8 decoder tensors.
    std::size_t k = cfg_.latent == 2 ? 8 : 10;

    nn::Tensor zt{{1, q}, z};
    auto zid = g.input(zt);
    auto dd = g.relu(g.dense(zid, pid[k], pid[k + 1]));
    auto r1 = g.reshape(dd, {1, f2_, 2, iq::kFrameLen});
    auto t1 = g.relu(g.transposed_conv2d(r1, pid[k + 2], pid[k + 3], nn::Pad::same));
    auto t2 = g.relu(g.transposed_conv2d(t1, pid[k + 4], pid[k + 5], nn::Pad::same));
    auto out = g.transposed_conv2d(t2, pid[k + 6], pid[k + 7], nn::Pad::same);
    (void)flat;

    const auto& v = g.value(out).v;
    IQFrame frame(iq::kFrameLen);
    for (int j = 0; j < iq::kFrameLen; ++j) {
        frame[static_cast<std::size_t>(j)] = {v[static_cast<std::size_t>(j)],
                                              v[static_cast<std::size_t>(iq::kFrameLen + j)]};
    }
    return frame;
}

std::vector<std::size_t> Vae::encoder_layer_params() const {
    auto n = [&](std::size_t i) { return params_[i].numel() + params_[i + 1].numel(); };
    return {n(0), n(2), n(4), n(6)};
}

std::vector<std::size_t> Vae::decoder_layer_params() const {
    const std::size_t base = cfg_.latent == 2 ? 8 : 10;
    auto n = [&](std::size_t i) { return params_[i].numel() + params_[i + 1].numel(); };
    return {n(base), n(base + 2), n(base + 4), n(base + 6)};
}

void Vae::save(const std::string& path) const {
    nn::Checkpoint ck;
    nn::Tensor meta{{3}, {static_cast<double>(cfg_.latent), static_cast<double>(cfg_.scale_divisor),
                          static_cast<double>(params_.size())}};
    ck.add("arch", meta);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        ck.add("p" + std::to_string(i), params_[i]);
    }
    nn::write_checkpoint(ck, path);
}

Vae Vae::load(const std::string& path) {
    nn::Checkpoint ck = nn::read_checkpoint(path);
    const nn::Tensor* meta = ck.find("arch");
    if (meta == nullptr || meta->numel() != 3) {
        fail(ErrorCode::format, "vae checkpoint: missing arch metadata");
    }
    VaeConfig cfg;
    cfg.latent = static_cast<int>(meta->v[0]);
    cfg.scale_divisor = static_cast<int>(meta->v[1]);
    Vae vae(cfg, 0);
    if (static_cast<std::size_t>(meta->v[2]) != vae.params_.size()) {
        fail(ErrorCode::format, "vae checkpoint: parameter count mismatch");
    }
    for (std::size_t i = 0; i < vae.params_.size(); ++i) {
        const nn::Tensor* t = ck.find("p" + std::to_string(i));
        if (t == nullptr) {
            fail(ErrorCode::format, "vae checkpoint: missing tensor p" + std::to_string(i));
        }
        if (t->shape != vae.params_[i].shape) {
            fail(ErrorCode::format, "vae checkpoint: shape mismatch for p" + std::to_string(i));
        }
        vae.params_[i] = *t;
    }
    return vae;
}

IQFrame uap_vae_input_independent(const Vae& vae, const std::vector<IQFrame>& perturbations,
                                  const ChannelTaps& taps, double pmax) {
    check_pmax(pmax);
    check_frames(perturbations, "perturbation set");
    if (static_cast<int>(taps.size()) != iq::kFrameLen) {
        fail(ErrorCode::dimension, "uap: channel taps must have one tap per symbol");
    }

    std::vector<double> z_avg(static_cast<std::size_t>(vae.config().latent), 0.0);
    for (const auto& f : perturbations) {
        std::vector<double> z = vae.encode_mean(f);
        for (std::size_t i = 0; i < z_avg.size(); ++i) z_avg[i] += z[i];
    }
    for (auto& z : z_avg) z /= static_cast<double>(perturbations.size());

    IQFrame avg = vae.decode(z_avg);
    IQFrame matched(avg.size());
    for (std::size_t j = 0; j < avg.size(); ++j) matched[j] = std::conj(taps[j]) * avg[j];
    if (atk::power(matched) == 0.0) {
        fail(ErrorCode::numeric, "uap: decoder produced a zero perturbation");
    }
    return atk::scaled_to_power(std::move(matched), pmax);
}

IQFrame uap_vae_channel_independent(const Vae& perturbation_vae, const Vae& channel_vae,
                                    const std::vector<IQFrame>& perturbations,
                                    const std::vector<IQFrame>& channel_rows, double pmax) {
    check_frames(channel_rows, "channel realization set");
    std::vector<double> z_avg(static_cast<std::size_t>(channel_vae.config().latent), 0.0);
    for (const auto& h : channel_rows) {
        std::vector<double> z = channel_vae.encode_mean(h);
        for (std::size_t i = 0; i < z_avg.size(); ++i) z_avg[i] += z[i];
    }
    for (auto& z : z_avg) z /= static_cast<double>(channel_rows.size());
    ChannelTaps h_avg = channel_vae.decode(z_avg);
    return uap_vae_input_independent(perturbation_vae, perturbations, h_avg, pmax);
}

} // namespace rfadv::uap
