#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>

#include "rfadv/classifier.hpp"
#include "rfadv/error.hpp"

using namespace rfadv;
using namespace rfadv::cls;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.conv1_filters = 8;
    c.conv2_filters = 4;
    c.dense_units = 32;
    return c;
}

iq::Dataset tiny_dataset(std::uint32_t n, std::int16_t snr, std::uint64_t seed) {
    iq::SynthParams p;
    p.n_records = n;
    p.snr_grid = {snr};
    p.seed = seed;
    return iq::synth_dataset(p);
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(static_cast<bool>(f));
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>{}};
}

} // namespace

TEST_CASE("default and widened architectures have the pinned parameter counts") {
    // conv1 256 + conv2 6160 + dense 262272 + head 1032.
    Model m(ModelConfig{}, 1);
    CHECK(m.parameter_count() == 269720);

    ModelConfig s;
    s.extra_dense_units = 256;
    Model sm(s, 1);
    CHECK(sm.parameter_count() == 564888);
}

TEST_CASE("logits shape, prob normalization, and predict consistency") {
    Model m(small_config(), 3);
    Rng rng(4);
    auto rec = iq::synth_record(iq::Scheme::qam16, 10, rng);
    auto rec2 = iq::synth_record(iq::Scheme::bpsk, 10, rng);

    auto lg = m.logits({&rec.frame, &rec2.frame});
    CHECK(lg.shape == std::vector<int>{2, 8});

    auto p = m.probs(rec.frame);
    REQUIRE(p.size() == 8);
    double sum = 0.0;
    for (double v : p) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

    int best = 0;
    for (int j = 1; j < 8; ++j) {
        if (p[static_cast<std::size_t>(j)] > p[static_cast<std::size_t>(best)]) best = j;
    }
    CHECK(m.predict(rec.frame) == best);
}

TEST_CASE("evaluation passes are deterministic (dropout disabled)") {
    Model m(small_config(), 5);
    Rng rng(6);
    auto rec = iq::synth_record(iq::Scheme::cpfsk, 6, rng);
    auto a = m.logits({&rec.frame});
    auto b = m.logits({&rec.frame});
    CHECK(a.v == b.v);
}

TEST_CASE("input gradient matches finite differences of -log p(label)") {
    Model m(small_config(), 7);
    Rng rng(8);
    auto rec = iq::synth_record(iq::Scheme::psk8, 8, rng);
    const int label = 2;
    auto g = m.input_gradient(rec.frame, label);
    REQUIRE(g.size() == static_cast<std::size_t>(iq::kFrameLen));

    auto loss_at = [&](const iq::IQFrame& f) {
        return -std::log(m.probs(f)[static_cast<std::size_t>(label)]);
    };
    const double h = 1e-5;
    for (int k = 0; k < iq::kFrameLen; k += 11) {
        iq::IQFrame fp = rec.frame, fm = rec.frame;
        fp[static_cast<std::size_t>(k)] += h;
        fm[static_cast<std::size_t>(k)] -= h;
        const double fd_i = (loss_at(fp) - loss_at(fm)) / (2.0 * h);
        CHECK(std::abs(fd_i - g[static_cast<std::size_t>(k)].real()) <=
              1e-4 * std::max(1.0, std::abs(fd_i)));

        fp = rec.frame;
        fm = rec.frame;
        fp[static_cast<std::size_t>(k)] += iq::cdouble{0.0, h};
        fm[static_cast<std::size_t>(k)] -= iq::cdouble{0.0, h};
        const double fd_q = (loss_at(fp) - loss_at(fm)) / (2.0 * h);
        CHECK(std::abs(fd_q - g[static_cast<std::size_t>(k)].imag()) <=
              1e-4 * std::max(1.0, std::abs(fd_q)));
    }

    CHECK_THROWS_AS(m.input_gradient(rec.frame, 8), Error);
    CHECK_THROWS_AS(m.input_gradient(rec.frame, -1), Error);
}

TEST_CASE("batched all-class gradients agree with per-class gradients") {
    Model m(small_config(), 9);
    Rng rng(10);
    auto rec = iq::synth_record(iq::Scheme::gfsk, 12, rng);
    auto all = m.input_gradients_all_classes(rec.frame);
    REQUIRE(all.size() == 8);
    for (int c = 0; c < 8; ++c) {
        auto single = m.input_gradient(rec.frame, c);
        double max_diff = 0.0, max_mag = 0.0;
        for (int k = 0; k < iq::kFrameLen; ++k) {
            max_diff = std::max(max_diff, std::abs(all[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)] -
                                                   single[static_cast<std::size_t>(k)]));
            max_mag = std::max(max_mag, std::abs(single[static_cast<std::size_t>(k)]));
        }
        CHECK(max_diff <= 1e-9 * std::max(1.0, max_mag));
    }
}

TEST_CASE("training reduces loss and beats chance on easy data") {
    auto ds = tiny_dataset(1600, 18, 21);
    ModelConfig cfg = small_config();
    cfg.dropout = 0.2;
    Model m(cfg, 22);
    TrainConfig tc;
    tc.epochs = 8;
    tc.batch = 32;
    tc.seed = 23;
    auto hist = m.train(ds, tc);
    REQUIRE(hist.size() == 8);
    CHECK(hist.back().mean_loss < hist.front().mean_loss);
    CHECK(hist.back().train_accuracy > 0.3); // chance is 0.125

    std::vector<const iq::DatasetRecord*> train_recs;
    for (auto i : ds.train_idx) train_recs.push_back(&ds.records[i]);
    CHECK(m.accuracy(train_recs) > 0.3);
}

TEST_CASE("training is deterministic in the seed") {
    auto ds = tiny_dataset(96, 10, 31);
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch = 16;
    tc.seed = 32;
    Model a(small_config(), 33), b(small_config(), 33);
    auto ha = a.train(ds, tc);
    auto hb = b.train(ds, tc);
    for (std::size_t e = 0; e < ha.size(); ++e) {
        CHECK(ha[e].mean_loss == hb[e].mean_loss);
        CHECK(ha[e].train_accuracy == hb[e].train_accuracy);
    }
    a.save("t_cls_a.bin");
    b.save("t_cls_b.bin");
    CHECK(slurp("t_cls_a.bin") == slurp("t_cls_b.bin"));
    std::remove("t_cls_a.bin");
    std::remove("t_cls_b.bin");
}

TEST_CASE("a non-finite loss raises a training error naming the epoch") {
    // One poisoned sample makes the very first batch loss NaN.
    iq::Dataset ds = tiny_dataset(32, 10, 41);
    for (auto idx : ds.train_idx) {
        ds.records[idx].frame[0] = {std::numeric_limits<double>::quiet_NaN(), 0.0};
    }
    Model m(small_config(), 42);
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch = 16;
    bool threw = false;
    try {
        m.train(ds, tc);
    } catch (const Error& e) {
        threw = true;
        CHECK(e.code() == ErrorCode::training);
        CHECK(std::string(e.what()).find("epoch 0") != std::string::npos);
    }
    CHECK(threw);
}

TEST_CASE("save/load roundtrip preserves the model") {
    auto ds = tiny_dataset(96, 12, 51);
    Model m(small_config(), 52);
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch = 16;
    tc.seed = 53;
    m.train(ds, tc);
    m.save("t_cls_rt.bin");
    Model r = Model::load("t_cls_rt.bin");
    CHECK(r.config().conv1_filters == 8);
    CHECK(r.config().dense_units == 32);
    CHECK(r.parameter_count() == m.parameter_count());

    // Weights pass through f32 once; logits agree to that precision and a
    // second save is byte-identical.
    Rng rng(54);
    auto rec = iq::synth_record(iq::Scheme::qam64, 10, rng);
    auto lm = m.logits({&rec.frame});
    auto lr2 = r.logits({&rec.frame});
    for (std::size_t i = 0; i < lm.numel(); ++i) {
        CHECK(std::abs(lm.v[i] - lr2.v[i]) < 1e-3);
    }
    r.save("t_cls_rt2.bin");
    CHECK(slurp("t_cls_rt.bin") == slurp("t_cls_rt2.bin"));
    std::remove("t_cls_rt.bin");
    std::remove("t_cls_rt2.bin");

    CHECK_THROWS_AS(Model::load("missing_model.bin"), Error);
}

TEST_CASE("configuration and dataset validation") {
    ModelConfig bad;
    bad.dropout = 1.0;
    CHECK_THROWS_AS(Model(bad, 1), Error);
    bad = ModelConfig{};
    bad.n_classes = 1;
    CHECK_THROWS_AS(Model(bad, 1), Error);

    Model m(small_config(), 1);
    iq::Dataset empty;
    CHECK_THROWS_AS(m.train(empty, TrainConfig{}), Error);

    // A 4-class model rejects 8-class data.
    ModelConfig narrow = small_config();
    narrow.n_classes = 4;
    Model nm(narrow, 2);
    auto ds = tiny_dataset(64, 10, 61);
    CHECK_THROWS_AS(nm.train(ds, TrainConfig{}), Error);

    TrainConfig tc;
    tc.epochs = 0;
    CHECK_THROWS_AS(m.train(ds, tc), Error);
}

TEST_CASE("pack_frames lays out I then Q per frame") {
    iq::IQFrame f(iq::kFrameLen);
    for (int k = 0; k < iq::kFrameLen; ++k) {
        f[static_cast<std::size_t>(k)] = {static_cast<double>(k), -static_cast<double>(k)};
    }
    auto t = pack_frames({&f, &f});
    REQUIRE(t.shape == std::vector<int>{2, 1, 2, iq::kFrameLen});
    for (int k = 0; k < iq::kFrameLen; ++k) {
        CHECK(t.v[static_cast<std::size_t>(k)] == static_cast<double>(k));
        CHECK(t.v[static_cast<std::size_t>(iq::kFrameLen + k)] == -static_cast<double>(k));
        // second sample
        CHECK(t.v[static_cast<std::size_t>(2 * iq::kFrameLen + k)] == static_cast<double>(k));
    }

    iq::IQFrame bad(4);
    CHECK_THROWS_AS(pack_frames({&bad}), Error);
}
