#include "rfadv/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "rfadv/error.hpp"

namespace rfadv::cls {

using nn::Graph;
using nn::Pad;
using nn::Tensor;

namespace {

Tensor he_init(std::vector<int> shape, int fan_in, Rng& rng) {
    return Tensor::randn(std::move(shape), std::sqrt(2.0 / fan_in), rng);
}

int argmax_row(const double* row, int c) {
    int best = 0;
    for (int j = 1; j < c; ++j) {
        if (row[j] > row[best]) best = j;
    }
    return best;
}

} // namespace

Tensor pack_frames(const std::vector<const iq::IQFrame*>& frames) {
    const int n = static_cast<int>(frames.size());
    Tensor batch({n, 1, 2, iq::kFrameLen});
    for (int i = 0; i < n; ++i) {
        const iq::IQFrame& f = *frames[static_cast<std::size_t>(i)];
        if (f.size() != static_cast<std::size_t>(iq::kFrameLen)) {
            fail(ErrorCode::dimension, "pack_frames: frame of length " + std::to_string(f.size()));
        }
        double* row = batch.v.data() + static_cast<std::ptrdiff_t>(i) * 2 * iq::kFrameLen;
        for (int k = 0; k < iq::kFrameLen; ++k) {
            row[k] = f[static_cast<std::size_t>(k)].real();
            row[iq::kFrameLen + k] = f[static_cast<std::size_t>(k)].imag();
        }
    }
    return batch;
}

Model::Model(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    if (cfg.n_classes < 2 || cfg.conv1_filters < 1 || cfg.conv2_filters < 1 ||
        cfg.dense_units < 1 || cfg.extra_dense_units < 0 || cfg.dropout < 0.0 ||
        cfg.dropout >= 1.0) {
        fail(ErrorCode::config, "model: invalid architecture configuration");
    }
    Rng rng = Rng::stream(init_seed, /*purpose=*/0x1217u);
    const int flat = cfg.conv2_filters * iq::kFrameLen; // conv2 collapses height to 1
    params_.emplace_back("conv1_w", he_init({cfg.conv1_filters, 1, 1, 3}, 3, rng));
    params_.emplace_back("conv1_b", Tensor({cfg.conv1_filters}));
    params_.emplace_back("conv2_w",
                         he_init({cfg.conv2_filters, cfg.conv1_filters, 2, 3}, cfg.conv1_filters * 6, rng));
    params_.emplace_back("conv2_b", Tensor({cfg.conv2_filters}));
    int dense_in = flat;
    if (cfg.extra_dense_units > 0) {
        params_.emplace_back("extra_w", he_init({cfg.extra_dense_units, dense_in}, dense_in, rng));
        params_.emplace_back("extra_b", Tensor({cfg.extra_dense_units}));
        dense_in = cfg.extra_dense_units;
    }
    params_.emplace_back("dense1_w", he_init({cfg.dense_units, dense_in}, dense_in, rng));
    params_.emplace_back("dense1_b", Tensor({cfg.dense_units}));
    params_.emplace_back("dense2_w", he_init({cfg.n_classes, cfg.dense_units}, cfg.dense_units, rng));
    params_.emplace_back("dense2_b", Tensor({cfg.n_classes}));
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
}

Model::Forward Model::forward(Graph& g, Tensor batch, Rng* dropout_rng) const {
    Forward f;
    f.x = g.input(std::move(batch));
    f.param_ids.reserve(params_.size());
    for (const auto& [name, t] : params_) f.param_ids.push_back(g.param(t));

    const bool drop = g.training();
    if (drop && dropout_rng == nullptr) {
        fail(ErrorCode::internal, "model: training forward needs a dropout stream");
    }
    std::size_t p = 0;
    // Two ids per layer, taken in declaration order (argument lists would
    // leave the evaluation order unspecified).
    auto next_pair = [&] {
        auto w = f.param_ids[p];
        auto b = f.param_ids[p + 1];
        p += 2;
        return std::pair{w, b};
    };

    auto [w1, b1] = next_pair();
    Graph::Id h = g.conv2d(f.x, w1, b1, Pad::same);
    h = g.relu(h);
    if (drop) h = g.dropout(h, cfg_.dropout, *dropout_rng);
    auto [w2, b2] = next_pair();
    h = g.conv2d(h, w2, b2, Pad::valid, Pad::same);
    h = g.relu(h);
    if (drop) h = g.dropout(h, cfg_.dropout, *dropout_rng);
    if (cfg_.extra_dense_units > 0) {
        auto [we, be] = next_pair();
        h = g.relu(g.dense(h, we, be));
        if (drop) h = g.dropout(h, cfg_.dropout, *dropout_rng);
    }
    auto [w3, b3] = next_pair();
    h = g.relu(g.dense(h, w3, b3));
    if (drop) h = g.dropout(h, cfg_.dropout, *dropout_rng);
    auto [w4, b4] = next_pair();
    f.logits = g.dense(h, w4, b4);
    return f;
}

std::vector<EpochStats> Model::train(const iq::Dataset& ds, const TrainConfig& tc) {
    if (tc.epochs < 1 || tc.batch < 1 || tc.lr <= 0.0) {
        fail(ErrorCode::config, "train: epochs/batch/lr out of range");
    }
    if (ds.train_idx.empty()) fail(ErrorCode::config, "train: dataset has no training split");
    for (auto idx : ds.train_idx) {
        if (idx >= ds.records.size() || ds.records[idx].label >= cfg_.n_classes) {
            fail(ErrorCode::config, "train: record index or label out of range");
        }
    }

    nn::Adam opt;
    opt.lr = tc.lr;
    std::vector<EpochStats> history;
    std::vector<std::uint32_t> order(ds.train_idx);
    const int c = cfg_.n_classes;

    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        Rng shuffle_rng = Rng::stream(tc.seed, /*purpose=*/0xE70Cu, static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order.begin(), order.end());
        Rng dropout_rng =
            Rng::stream(tc.seed, /*purpose=*/0xD809u, static_cast<std::uint64_t>(epoch));

        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tc.batch)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(tc.batch));
            const int bn = static_cast<int>(stop - start);
            std::vector<const iq::IQFrame*> frames(static_cast<std::size_t>(bn));
            Tensor onehot({bn, c});
            for (int i = 0; i < bn; ++i) {
                const auto& rec = ds.records[order[start + static_cast<std::size_t>(i)]];
                frames[static_cast<std::size_t>(i)] = &rec.frame;
                onehot.v[static_cast<std::size_t>(i) * c + rec.label] = 1.0;
            }

            Graph g(/*training=*/true);
            Forward f = forward(g, pack_frames(frames), &dropout_rng);
            Graph::Id loss = g.cross_entropy(f.logits, onehot);

            const double batch_loss = g.value(loss).v[0];
            if (!std::isfinite(batch_loss)) {
                fail(ErrorCode::training, "train: non-finite loss in epoch " + std::to_string(epoch));
            }
            loss_sum += batch_loss;
            const Tensor& lg = g.value(f.logits);
            for (int i = 0; i < bn; ++i) {
                const int pred = argmax_row(lg.v.data() + static_cast<std::ptrdiff_t>(i) * c, c);
                const auto& rec = ds.records[order[start + static_cast<std::size_t>(i)]];
                if (pred == rec.label) ++correct;
            }

            g.backward(loss);
            std::vector<Tensor*> ps;
            std::vector<const Tensor*> gs;
            ps.reserve(params_.size());
            gs.reserve(params_.size());
            for (std::size_t i = 0; i < params_.size(); ++i) {
                ps.push_back(&params_[i].second);
                gs.push_back(&g.grad(f.param_ids[i]));
            }
            opt.step(ps, gs);
        }
        EpochStats st;
        st.mean_loss = loss_sum / static_cast<double>(order.size());
        st.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
        history.push_back(st);
    }
    return history;
}

Tensor Model::logits(const std::vector<const iq::IQFrame*>& frames) const {
    if (frames.empty()) fail(ErrorCode::dimension, "logits: empty batch");
    Graph g(/*training=*/false);
    Forward f = forward(g, pack_frames(frames), nullptr);
    return g.value(f.logits);
}

std::vector<double> Model::probs(const iq::IQFrame& frame) const {
    Tensor lg = logits({&frame});
    const int c = cfg_.n_classes;
    std::vector<double> p(static_cast<std::size_t>(c));
    double m = *std::max_element(lg.v.begin(), lg.v.end());
    double sum = 0.0;
    for (int j = 0; j < c; ++j) {
        p[static_cast<std::size_t>(j)] = std::exp(lg.v[static_cast<std::size_t>(j)] - m);
        sum += p[static_cast<std::size_t>(j)];
    }
    for (auto& x : p) x /= sum;
    return p;
}

int Model::predict(const iq::IQFrame& frame) const {
    Tensor lg = logits({&frame});
    return argmax_row(lg.v.data(), cfg_.n_classes);
}

iq::IQFrame Model::input_gradient(const iq::IQFrame& frame, int label) const {
    if (label < 0 || label >= cfg_.n_classes) {
        fail(ErrorCode::dimension, "input_gradient: label " + std::to_string(label) +
                                       " out of range");
    }
    Graph g(/*training=*/false);
    Forward f = forward(g, pack_frames({&frame}), nullptr);
    Tensor onehot({1, cfg_.n_classes});
    onehot.v[static_cast<std::size_t>(label)] = 1.0;
    g.backward(g.cross_entropy(f.logits, onehot));
    const Tensor& dx = g.grad(f.x); // [1, 1, 2, kFrameLen]
    iq::IQFrame grad(iq::kFrameLen);
    for (int k = 0; k < iq::kFrameLen; ++k) {
        grad[static_cast<std::size_t>(k)] = {dx.v[static_cast<std::size_t>(k)],
                                             dx.v[static_cast<std::size_t>(iq::kFrameLen + k)]};
    }
    return grad;
}

std::vector<iq::IQFrame> Model::input_gradients_all_classes(const iq::IQFrame& frame) const {
    const int c = cfg_.n_classes;
    // Replicate the frame once per class; cross entropy sums over rows, so
    // row i of the input gradient is exactly the class-i loss gradient.
    std::vector<const iq::IQFrame*> reps(static_cast<std::size_t>(c), &frame);
    Graph g(/*training=*/false);
    Forward f = forward(g, pack_frames(reps), nullptr);
    Tensor onehot({c, c});
    for (int i = 0; i < c; ++i) onehot.v[static_cast<std::size_t>(i) * c + i] = 1.0;
    g.backward(g.cross_entropy(f.logits, onehot));
    const Tensor& dx = g.grad(f.x); // [c, 1, 2, kFrameLen]
    std::vector<iq::IQFrame> out(static_cast<std::size_t>(c), iq::IQFrame(iq::kFrameLen));
    for (int i = 0; i < c; ++i) {
        const double* row = dx.v.data() + static_cast<std::ptrdiff_t>(i) * 2 * iq::kFrameLen;
        for (int k = 0; k < iq::kFrameLen; ++k) {
            out[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = {
                row[k], row[iq::kFrameLen + k]};
        }
    }
    return out;
}

double Model::accuracy(const std::vector<const iq::DatasetRecord*>& records) const {
    if (records.empty()) fail(ErrorCode::dimension, "accuracy: empty record set");
    const int c = cfg_.n_classes;
    std::size_t correct = 0;
    const std::size_t chunk = 256;
    for (std::size_t start = 0; start < records.size(); start += chunk) {
        const std::size_t stop = std::min(records.size(), start + chunk);
        std::vector<const iq::IQFrame*> frames;
        frames.reserve(stop - start);
        for (std::size_t i = start; i < stop; ++i) frames.push_back(&records[i]->frame);
        Tensor lg = logits(frames);
        for (std::size_t i = start; i < stop; ++i) {
            const int pred = argmax_row(lg.v.data() + static_cast<std::ptrdiff_t>(i - start) * c, c);
            if (pred == records[i]->label) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(records.size());
}

void Model::save(const std::string& path) const {
    nn::Checkpoint ck;
    Tensor meta({6}, {static_cast<double>(cfg_.n_classes), static_cast<double>(cfg_.conv1_filters),
                      static_cast<double>(cfg_.conv2_filters), static_cast<double>(cfg_.dense_units),
                      static_cast<double>(cfg_.extra_dense_units), cfg_.dropout});
    ck.add("arch", meta);
    for (const auto& [name, t] : params_) ck.add(name, t);
    nn::write_checkpoint(ck, path);
}

Model Model::load(const std::string& path) {
    nn::Checkpoint ck = nn::read_checkpoint(path);
    const Tensor* meta = ck.find("arch");
    if (meta == nullptr || meta->numel() != 6) {
        fail(ErrorCode::format, path + ": missing architecture record");
    }
    ModelConfig cfg;
    cfg.n_classes = static_cast<int>(meta->v[0]);
    cfg.conv1_filters = static_cast<int>(meta->v[1]);
    cfg.conv2_filters = static_cast<int>(meta->v[2]);
    cfg.dense_units = static_cast<int>(meta->v[3]);
    cfg.extra_dense_units = static_cast<int>(meta->v[4]);
    cfg.dropout = meta->v[5];
    Model model(cfg, /*init_seed=*/0);
    for (auto& [name, t] : model.params_) {
        const Tensor* src = ck.find(name);
        if (src == nullptr) fail(ErrorCode::format, path + ": missing tensor " + name);
        if (src->shape != t.shape) {
            fail(ErrorCode::format, path + ": tensor " + name + " has unexpected shape");
        }
        t = *src;
    }
    return model;
}

} // namespace rfadv::cls
