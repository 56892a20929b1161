#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "rfadv/defense.hpp"
#include "rfadv/error.hpp"

using namespace rfadv;
using namespace rfadv::def;

TEST_CASE("smoothing parameter validation") {
    SmoothingParams p;
    validate(p);
    p.sigma = -1e-9;
    CHECK_THROWS_AS(validate(p), Error);
    p = SmoothingParams{};
    p.alpha = 0.0;
    CHECK_THROWS_AS(validate(p), Error);
    p = SmoothingParams{};
    p.alpha = 1.0;
    CHECK_THROWS_AS(validate(p), Error);
    p = SmoothingParams{};
    p.q = 0.0;
    CHECK_THROWS_AS(validate(p), Error);
    p = SmoothingParams{};
    p.q = 1.0;
    CHECK_THROWS_AS(validate(p), Error);
}

namespace {

iq::Dataset tiny_dataset(int n, std::uint64_t seed) {
    iq::Dataset ds;
    ds.seed = seed;
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        ds.records.push_back(
            iq::synth_record(static_cast<iq::Scheme>(i % iq::kNumSchemes), 10, rng));
    }
    for (int i = 0; i < n; ++i) {
        if (i % 2 == 0) {
            ds.train_idx.push_back(static_cast<std::uint32_t>(i));
        } else {
            ds.test_idx.push_back(static_cast<std::uint32_t>(i));
        }
    }
    return ds;
}

} // namespace

TEST_CASE("augmentation: k = 0 leaves the dataset unchanged") {
    auto ds = tiny_dataset(6, 31);
    SmoothingParams p;
    p.k = 0;
    Rng rng(1);
    auto out = augment_training(ds, p, rng);
    REQUIRE(out.records.size() == ds.records.size());
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        CHECK(out.records[i].frame == ds.records[i].frame);
        CHECK(out.records[i].label == ds.records[i].label);
        CHECK(out.records[i].snr_db == ds.records[i].snr_db);
    }
    CHECK(out.train_idx == ds.train_idx);
    CHECK(out.test_idx == ds.test_idx);
}

TEST_CASE("augmentation: sigma = 0 duplicates; block layout and split mapping") {
    auto ds = tiny_dataset(4, 32);
    SmoothingParams p;
    p.k = 3;
    p.sigma = 0.0;
    Rng rng(2);
    auto out = augment_training(ds, p, rng);
    REQUIRE(out.records.size() == ds.records.size() * 4);
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        for (std::size_t c = 0; c < 4; ++c) {
            const auto& rec = out.records[i * 4 + c];
            CHECK(rec.frame == ds.records[i].frame);
            CHECK(rec.label == ds.records[i].label);
            CHECK(rec.snr_db == ds.records[i].snr_db);
        }
    }
    // Train indices cover whole blocks; test indices keep the originals only.
    REQUIRE(out.train_idx.size() == ds.train_idx.size() * 4);
    for (std::size_t t = 0; t < ds.train_idx.size(); ++t) {
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(out.train_idx[t * 4 + c] == ds.train_idx[t] * 4 + c);
        }
    }
    REQUIRE(out.test_idx.size() == ds.test_idx.size());
    for (std::size_t t = 0; t < ds.test_idx.size(); ++t) {
        CHECK(out.test_idx[t] == ds.test_idx[t] * 4);
    }
}

TEST_CASE("augmentation noise has the configured per-component variance") {
    auto ds = tiny_dataset(1, 33);
    SmoothingParams p;
    p.k = 400;
    p.sigma = 0.001;
    Rng rng(3);
    auto out = augment_training(ds, p, rng);
    REQUIRE(out.records.size() == 401);

    double sum = 0.0, sum2 = 0.0;
    std::size_t n = 0;
    for (int c = 1; c <= 400; ++c) {
        const auto& noisy = out.records[static_cast<std::size_t>(c)].frame;
        for (int j = 0; j < iq::kFrameLen; ++j) {
            const auto d = noisy[static_cast<std::size_t>(j)] -
                           ds.records[0].frame[static_cast<std::size_t>(j)];
            for (double comp : {d.real(), d.imag()}) {
                sum += comp;
                sum2 += comp * comp;
                ++n;
            }
        }
    }
    const double mean = sum / static_cast<double>(n);
    const double var = sum2 / static_cast<double>(n) - mean * mean;
    CHECK(var == doctest::Approx(1e-6).epsilon(0.02));
    CHECK(std::abs(mean) < 1e-5);
}

TEST_CASE("binomial p-value: pinned points") {
    // 2 * P[Bin(20, 1/2) >= 14] = 120920 / 2^20.
    CHECK(binom_p_value(14, 20, 0.5) == doctest::Approx(120920.0 / 1048576.0).epsilon(1e-10));
    CHECK(binom_p_value(14, 20, 0.5) == doctest::Approx(0.115318).epsilon(1e-4));
    // Extreme tail: only the two endpoint outcomes are as unlikely.
    CHECK(binom_p_value(20, 20, 0.5) == doctest::Approx(2.0 / 1048576.0).epsilon(1e-12));
    // Central observation: every outcome is at most as likely.
    CHECK(binom_p_value(10, 20, 0.5) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(binom_p_value(0, 0, 0.5) == 1.0);

    CHECK_THROWS_AS(binom_p_value(5, 4, 0.5), Error);
    CHECK_THROWS_AS(binom_p_value(-1, 4, 0.5), Error);
    CHECK_THROWS_AS(binom_p_value(2, 4, 0.0), Error);
    CHECK_THROWS_AS(binom_p_value(2, 4, 1.0), Error);
}

namespace {

// Independent oracle: exact binomial coefficients (integers below 2^53 for
// n <= 50) and direct pmf evaluation in double precision.
double oracle_p_value(int s, int n, double q) {
    std::vector<double> pmf(static_cast<std::size_t>(n) + 1);
    for (int x = 0; x <= n; ++x) {
        double c = 1.0;
        for (int i = 0; i < x; ++i) c = c * static_cast<double>(n - i) / static_cast<double>(i + 1);
        pmf[static_cast<std::size_t>(x)] =
            c * std::pow(q, x) * std::pow(1.0 - q, n - x);
    }
    double p = 0.0;
    for (int x = 0; x <= n; ++x) {
        if (pmf[static_cast<std::size_t>(x)] <= pmf[static_cast<std::size_t>(s)] * (1.0 + 1e-7)) {
            p += pmf[static_cast<std::size_t>(x)];
        }
    }
    return std::min(p, 1.0);
}

} // namespace

TEST_CASE("binomial p-value matches a direct enumeration oracle") {
    const double qs[] = {0.3, 0.5, 0.62};
    for (double q : qs) {
        for (int n : {5, 12, 20, 37}) {
            for (int s = 0; s <= n; ++s) {
                CHECK(binom_p_value(s, n, q) == doctest::Approx(oracle_p_value(s, n, q)).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("binomial p-value symmetry and center-monotonicity at q = 1/2") {
    for (int n = 1; n <= 50; ++n) {
        for (int s = 0; s <= n; ++s) {
            CHECK(binom_p_value(s, n, 0.5) == binom_p_value(n - s, n, 0.5));
        }
        // Walking outward from the center never increases the p-value.
        const double center = 0.5 * n;
        std::vector<int> by_distance;
        for (int s = 0; s <= n; ++s) by_distance.push_back(s);
        std::sort(by_distance.begin(), by_distance.end(), [&](int a, int b) {
            return std::abs(a - center) < std::abs(b - center);
        });
        for (std::size_t i = 1; i < by_distance.size(); ++i) {
            CHECK(binom_p_value(by_distance[i - 1], n, 0.5) >=
                  binom_p_value(by_distance[i], n, 0.5) - 1e-15);
        }
    }
}

TEST_CASE("count decision rule: worked example, unanimity, ties") {
    // 14 votes vs 6: p = 0.1153 > 0.05, abstain but still report the leader.
    auto r = decide_from_counts({6, 14, 0, 0}, 0.05, 0.5);
    CHECK(r.label == 1);
    CHECK(r.n_a == 14);
    CHECK(r.n_b == 6);
    CHECK(r.p_value == doctest::Approx(0.115318).epsilon(1e-4));
    CHECK(r.abstained);

    // Unanimous 20 votes: p ~ 1.9e-6, certified.
    auto u = decide_from_counts({0, 0, 20}, 0.05, 0.5);
    CHECK(u.label == 2);
    CHECK(u.n_b == 0);
    CHECK(u.p_value == doctest::Approx(2.0 / 1048576.0).epsilon(1e-10));
    CHECK_FALSE(u.abstained);

    // Exact tie: lower class index leads, p = 1, abstain.
    auto t = decide_from_counts({5, 5}, 0.05, 0.5);
    CHECK(t.label == 0);
    CHECK(t.n_a == 5);
    CHECK(t.n_b == 5);
    CHECK(t.p_value == doctest::Approx(1.0));
    CHECK(t.abstained);

    CHECK_THROWS_AS(decide_from_counts({}, 0.05, 0.5), Error);
    CHECK_THROWS_AS(decide_from_counts({0, 0}, 0.05, 0.5), Error);
    CHECK_THROWS_AS(decide_from_counts({-1, 3}, 0.05, 0.5), Error);
}

TEST_CASE("unanimous-vote abstention threshold in k") {
    // With q = 1/2 and alpha = 0.05, a unanimous vote certifies exactly when
    // 2^(1-k) <= 0.05, i.e. k >= 6.
    for (int k = 1; k <= 10; ++k) {
        auto r = decide_from_counts({k, 0}, 0.05, 0.5);
        CHECK(r.abstained == (k < 6));
    }
}

TEST_CASE("certified prediction on a deterministic model") {
    cls::ModelConfig cfg;
    cfg.conv1_filters = 8;
    cfg.conv2_filters = 4;
    cfg.dense_units = 16;
    cls::Model model(cfg, 301);

    Rng rng(61);
    auto rec = iq::synth_record(iq::Scheme::qam64, 16, rng);
    const int plain = model.predict(rec.frame);

    SmoothingParams p;
    p.sigma = 0.0;
    p.k = 6;
    Rng cert_rng(62);
    auto r = certified_predict(model, rec.frame, p, cert_rng);
    CHECK(r.label == plain);
    CHECK_FALSE(r.abstained);
    CHECK(r.n_a == 6);
    CHECK(r.n_b == 0);
    int total = 0;
    for (int c : r.counts) total += c;
    CHECK(total == 6);

    // One fewer copy crosses the abstention threshold.
    p.k = 5;
    Rng cert_rng2(62);
    auto r5 = certified_predict(model, rec.frame, p, cert_rng2);
    CHECK(r5.label == plain);
    CHECK(r5.abstained);

    p.k = 0;
    CHECK_THROWS_AS(certified_predict(model, rec.frame, p, cert_rng), Error);
}

TEST_CASE("certified prediction is deterministic given the rng stream") {
    cls::ModelConfig cfg;
    cfg.conv1_filters = 8;
    cfg.conv2_filters = 4;
    cfg.dense_units = 16;
    cls::Model model(cfg, 302);

    Rng rng(63);
    auto rec = iq::synth_record(iq::Scheme::cpfsk, 8, rng);
    SmoothingParams p;
    p.sigma = 0.01;
    p.k = 20;

    Rng a(7), b(7);
    auto ra = certified_predict(model, rec.frame, p, a);
    auto rb = certified_predict(model, rec.frame, p, b);
    CHECK(ra.counts == rb.counts);
    CHECK(ra.p_value == rb.p_value);
    CHECK(ra.abstained == rb.abstained);
    int total = 0;
    for (int c : ra.counts) total += c;
    CHECK(total == 20);
    CHECK(ra.p_value >= 0.0);
    CHECK(ra.p_value <= 1.0);
}
