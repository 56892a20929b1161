#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "rfadv/broadcast.hpp"
#include "rfadv/classifier.hpp"
#include "rfadv/error.hpp"

using namespace rfadv;
using namespace rfadv::bcast;

namespace {

IQFrame zeros(std::size_t n = iq::kFrameLen) { return IQFrame(n, cdouble{0.0, 0.0}); }

IQFrame unit_at(std::size_t k, std::size_t n = iq::kFrameLen) {
    IQFrame f = zeros(n);
    f[k] = {1.0, 0.0};
    return f;
}

ChannelTaps ident(std::size_t n = iq::kFrameLen) { return ChannelTaps(n, cdouble{1.0, 0.0}); }

// Class-c loss gradient is a fixed frame; prediction is a configurable
// function of the input.
struct ProbeVictim final : atk::Victim {
    int classes = 3;
    std::vector<IQFrame> grads; // per class
    std::function<int(const IQFrame&)> decide;

    int n_classes() const override { return classes; }
    int predict(const IQFrame& x) const override { return decide(x); }
    std::vector<double> probs(const IQFrame& x) const override {
        std::vector<double> p(static_cast<std::size_t>(classes), 0.0);
        p[static_cast<std::size_t>(predict(x))] = 1.0;
        return p;
    }
    IQFrame loss_gradient(const IQFrame&, int label) const override {
        return grads[static_cast<std::size_t>(label)];
    }
};

// Per-axis threshold decision: misclassify when the real part at symbol k
// has dropped below -threshold (relative to a zero clean frame).
std::function<int(const IQFrame&)> drop_detector(std::vector<std::pair<std::size_t, double>> axes) {
    return [axes](const IQFrame& x) {
        for (const auto& [k, thr] : axes) {
            if (x[k].real() <= -thr) return 1;
        }
        return 0;
    };
}

Ensemble two_copies(const ProbeVictim& v, double w1) {
    Ensemble e;
    e.receivers.push_back(Receiver{&v, ident(), zeros(), 0});
    e.receivers.push_back(Receiver{&v, ident(), zeros(), 0});
    e.weights = {w1, 1.0 - w1};
    return e;
}

} // namespace

TEST_CASE("ensemble validation") {
    ProbeVictim v;
    v.grads = {zeros(), unit_at(0), unit_at(1)};
    v.decide = drop_detector({{0, 0.3}});

    Ensemble e = two_copies(v, 0.5);
    validate(e);

    Ensemble bad = e;
    bad.weights = {0.6, 0.6};
    CHECK_THROWS_AS(validate(bad), Error);
    bad = e;
    bad.weights = {1.5, -0.5};
    CHECK_THROWS_AS(validate(bad), Error);
    bad = e;
    bad.receivers[1].true_label = 1;
    CHECK_THROWS_AS(validate(bad), Error);
    bad = e;
    bad.receivers[1].taps = ChannelTaps(4, cdouble{1.0, 0.0});
    CHECK_THROWS_AS(validate(bad), Error);
    bad = e;
    bad.receivers.clear();
    bad.weights.clear();
    CHECK_THROWS_AS(validate(bad), Error);
    CHECK_THROWS_AS(idba(e, 0.0), Error);
}

TEST_CASE("heuristic weights are inverse to the channel scales") {
    auto w = heuristic_weights({1.0, 2.0});
    CHECK(w[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(w[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    auto eq = heuristic_weights({1.7, 1.7});
    CHECK(eq[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(eq[0] + eq[1] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(heuristic_weights({1.0, 0.0}), Error);
    CHECK_THROWS_AS(heuristic_weights({}), Error);
}

TEST_CASE("single-receiver weighted attack equals the individual attack") {
    ProbeVictim v;
    v.grads = {zeros(), unit_at(0), unit_at(5)};
    v.decide = drop_detector({{0, 0.3}});

    Rng rng(51);
    ChannelTaps taps(iq::kFrameLen);
    for (auto& h : taps) h = {rng.gaussian(0.0, 1.0), rng.gaussian(0.0, 1.0)};

    Ensemble e;
    e.receivers.push_back(Receiver{&v, taps, zeros(), 0});
    e.weights = {1.0};

    const double pmax = 0.49;
    IQFrame combined = idba(e, pmax, 0.01);
    auto solo = atk::mrpp_targeted(v, zeros(), 0, taps, pmax, 0.01);
    for (std::size_t j = 0; j < combined.size(); ++j) {
        CHECK(std::abs(combined[j] - solo.delta[j]) < 1e-12);
    }
    CHECK(atk::power(combined) == doctest::Approx(pmax).epsilon(1e-12));
}

TEST_CASE("identical receivers: any weights give the individual direction") {
    ProbeVictim v;
    v.grads = {zeros(), unit_at(0), unit_at(5)};
    v.decide = drop_detector({{0, 0.3}});

    auto solo = atk::mrpp_targeted(v, zeros(), 0, ident(), 1.0, 0.01);
    for (double w1 : {0.0, 0.3, 0.5, 0.9}) {
        IQFrame combined = idba(two_copies(v, w1), 1.0, 0.01);
        for (std::size_t j = 0; j < combined.size(); ++j) {
            CHECK(std::abs(combined[j] - solo.delta[j]) < 1e-12);
        }
    }
}

TEST_CASE("weight (1, 0) reproduces receiver 1's attack; cancellation is an error") {
    // Receiver A flips along symbol 0; receiver B along symbol 5.
    ProbeVictim a;
    a.grads = {zeros(), unit_at(0), zeros()};
    a.decide = drop_detector({{0, 0.3}});
    ProbeVictim b;
    b.grads = {zeros(), unit_at(5), zeros()};
    b.decide = drop_detector({{5, 0.3}});

    Ensemble e;
    e.receivers.push_back(Receiver{&a, ident(), zeros(), 0});
    e.receivers.push_back(Receiver{&b, ident(), zeros(), 0});
    e.weights = {1.0, 0.0};

    IQFrame combined = idba(e, 1.0, 0.01);
    auto solo = atk::mrpp_targeted(a, zeros(), 0, ident(), 1.0, 0.01);
    for (std::size_t j = 0; j < combined.size(); ++j) {
        CHECK(std::abs(combined[j] - solo.delta[j]) < 1e-14);
    }

    // Opposite gradients with equal weights cancel exactly.
    ProbeVictim neg;
    neg.grads = {zeros(), zeros(), zeros()};
    neg.grads[1] = zeros();
    neg.grads[1][0] = {-1.0, 0.0};
    neg.decide = [](const IQFrame&) { return 0; };
    ProbeVictim pos;
    pos.grads = {zeros(), unit_at(0), zeros()};
    pos.decide = [](const IQFrame&) { return 0; };

    Ensemble cancel;
    cancel.receivers.push_back(Receiver{&pos, ident(), zeros(), 0});
    cancel.receivers.push_back(Receiver{&neg, ident(), zeros(), 0});
    cancel.weights = {0.5, 0.5};
    bool threw = false;
    try {
        idba(cancel, 1.0, 0.01);
    } catch (const Error& err) {
        threw = true;
        CHECK(err.code() == ErrorCode::numeric);
    }
    CHECK(threw);
}

TEST_CASE("joint attack with one receiver reduces to the targeted attack") {
    ProbeVictim v;
    v.grads = {zeros(), unit_at(0), unit_at(5)};
    v.decide = drop_detector({{0, 0.3}, {5, 0.7}});

    Rng rng(52);
    ChannelTaps taps(iq::kFrameLen);
    for (auto& h : taps) h = {rng.gaussian(0.0, 1.0), rng.gaussian(0.0, 1.0)};

    Ensemble e;
    e.receivers.push_back(Receiver{&v, taps, zeros(), 0});
    e.weights = {1.0};

    auto joint = jdba(e, 0.81, 0.01);
    auto solo = atk::mrpp_targeted(v, zeros(), 0, taps, 0.81, 0.01);
    CHECK(joint.target_class == solo.target_class);
    for (std::size_t j = 0; j < joint.delta.size(); ++j) {
        CHECK(std::abs(joint.delta[j] - solo.delta[j]) < 1e-12);
    }
    CHECK(joint.aggregate_eps[1] == doctest::Approx(solo.eps_per_class[1]).epsilon(1e-12));
}

TEST_CASE("identical receivers: fool counts are 0 or 2, and the direction matches") {
    ProbeVictim v;
    v.grads = {zeros(), unit_at(0), unit_at(5)};
    v.decide = drop_detector({{0, 0.3}}); // class 2's direction never flips

    auto joint = jdba(two_copies(v, 0.5), 1.0, 0.01);
    CHECK(joint.fool_counts[0] == -1);
    CHECK(joint.fool_counts[1] == 2);
    CHECK(joint.fool_counts[2] == 0);
    CHECK(joint.target_class == 1);

    auto solo = atk::mrpp_targeted(v, zeros(), 0, ident(), 1.0, 0.01);
    for (std::size_t j = 0; j < joint.delta.size(); ++j) {
        CHECK(std::abs(joint.delta[j] - solo.delta[j]) < 1e-10);
    }
    CHECK(atk::power(joint.delta) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("joint target selection maximizes the fool count over the flip radius") {
    // Class 1 drops symbol 0; class 2 drops symbol 1 (identity channels,
    // equal weights, so the joint directions are the unit axes).
    // Receiver A flips at 0.1 along axis 0 and 0.4 along axis 1.
    // Receiver B only reacts to axis 1, at 0.5.
    ProbeVictim a;
    a.grads = {zeros(), unit_at(0), unit_at(1)};
    a.decide = [](const IQFrame& x) {
        if (x[0].real() <= -0.1) return 1;
        if (x[1].real() <= -0.4) return 1;
        return 0;
    };
    ProbeVictim b;
    b.grads = {zeros(), unit_at(0), unit_at(1)};
    b.decide = drop_detector({{1, 0.5}});

    Ensemble e;
    e.receivers.push_back(Receiver{&a, ident(), zeros(), 0});
    e.receivers.push_back(Receiver{&b, ident(), zeros(), 0});
    e.weights = {0.5, 0.5};

    auto joint = jdba(e, 1.0, 0.01);
    // Class 1 fools only A (count 1) despite its smaller flip radius; class 2
    // fools both (count 2) and must win.
    CHECK(joint.fool_counts[1] == 1);
    CHECK(joint.fool_counts[2] == 2);
    CHECK(joint.target_class == 2);
    CHECK(joint.delta[1].real() == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("joint target ties break on aggregate flip radius, then class index") {
    // Both classes fool both receivers; class 2 has the smaller radii.
    ProbeVictim v;
    v.grads = {zeros(), unit_at(0), unit_at(1)};
    v.decide = [](const IQFrame& x) {
        if (x[0].real() <= -0.6) return 1;
        if (x[1].real() <= -0.2) return 2;
        return 0;
    };
    auto joint = jdba(two_copies(v, 0.5), 1.0, 0.001);
    CHECK(joint.fool_counts[1] == 2);
    CHECK(joint.fool_counts[2] == 2);
    CHECK(joint.aggregate_eps[2] < joint.aggregate_eps[1]);
    CHECK(joint.target_class == 2);

    // Identical thresholds: exact radius tie, the lower class index wins.
    ProbeVictim sym;
    sym.grads = {zeros(), unit_at(0), unit_at(1)};
    sym.decide = [](const IQFrame& x) {
        if (x[0].real() <= -0.4) return 1;
        if (x[1].real() <= -0.4) return 2;
        return 0;
    };
    auto tie = jdba(two_copies(sym, 0.5), 1.0, 0.001);
    CHECK(tie.aggregate_eps[1] == tie.aggregate_eps[2]);
    CHECK(tie.target_class == 1);
}

TEST_CASE("joint evaluation counts only all-receivers-fooled scenes") {
    // A flips along axis 0 at 0.3; B never flips: joint fooled must be 0.
    ProbeVictim a;
    a.grads = {zeros(), unit_at(0), zeros()};
    a.decide = drop_detector({{0, 0.3}});
    ProbeVictim b;
    b.grads = {zeros(), unit_at(0), zeros()};
    b.decide = [](const IQFrame&) { return 0; };

    Scene scene;
    scene.taps = {ident(), ident()};
    scene.observed = {zeros(), zeros()};
    scene.true_label = 0;

    auto eval = evaluate_broadcast({&a, &b}, {scene, scene}, {0.5, 0.5}, 1.0,
                                   BroadcastKind::idba, 0.01);
    CHECK(eval.scenes == 2);
    CHECK(eval.joint_fooled == 0);
    CHECK(eval.joint_accuracy == doctest::Approx(1.0));

    // Both flip: every scene is jointly fooled.
    ProbeVictim b2;
    b2.grads = {zeros(), unit_at(0), zeros()};
    b2.decide = drop_detector({{0, 0.3}});
    auto eval2 = evaluate_broadcast({&a, &b2}, {scene}, {0.5, 0.5}, 1.0,
                                    BroadcastKind::jdba, 0.01);
    CHECK(eval2.joint_fooled == 1);
    CHECK(eval2.joint_accuracy == doctest::Approx(0.0));
}

TEST_CASE("weight line search: flat landscape returns the heuristic center") {
    // Attacks always fool both receivers, so all 11 candidates tie at joint
    // accuracy 0 and the tie-break keeps the candidate nearest the center.
    ProbeVictim always;
    always.grads = {zeros(), unit_at(0), zeros()};
    always.decide = [](const IQFrame& x) { return x == zeros() ? 0 : 1; };

    Scene scene;
    scene.taps = {ident(), ident()};
    scene.observed = {zeros(), zeros()};
    scene.true_label = 0;

    auto res = weight_line_search({&always, &always}, {scene}, {1.0, 1.0}, 1.0,
                                  BroadcastKind::idba, 0.1, 0.01);
    CHECK(res.grid_accuracy.size() == 11);
    CHECK(res.weights[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(res.weights[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(res.joint_accuracy == doctest::Approx(0.0));
}

TEST_CASE("weight line search finds the fooling window") {
    // Individual attacks: receiver A's perturbation is -e0, receiver B's is
    // -e5. The combined direction splits the budget by w1. A is fooled when
    // its share clears f(w1) = w1/sqrt(w1^2+(1-w1)^2) >= f(0.6); B when
    // (1-w1)/sqrt(...) >= g(0.8). Joint fooling needs w1 in [0.6, 0.8].
    const double fa = 0.6 / std::sqrt(0.6 * 0.6 + 0.4 * 0.4) - 1e-6;
    const double gb = 0.2 / std::sqrt(0.8 * 0.8 + 0.2 * 0.2) - 1e-6;
    ProbeVictim a;
    a.grads = {zeros(), unit_at(0), zeros()};
    a.decide = drop_detector({{0, fa}});
    ProbeVictim b;
    b.grads = {zeros(), unit_at(5), zeros()};
    b.decide = drop_detector({{5, gb}});

    Scene scene;
    scene.taps = {ident(), ident()};
    scene.observed = {zeros(), zeros()};
    scene.true_label = 0;

    auto res = weight_line_search({&a, &b}, {scene}, {1.0, 1.0}, 1.0, BroadcastKind::idba, 0.1,
                                  0.01);
    REQUIRE(res.grid_accuracy.size() == 11);
    for (int i = 0; i <= 10; ++i) {
        const bool in_window = i >= 6 && i <= 8;
        CHECK(res.grid_accuracy[static_cast<std::size_t>(i)] ==
              doctest::Approx(in_window ? 0.0 : 1.0));
    }
    // Ties inside the window prefer the candidate closest to the 0.5 center.
    CHECK(res.weights[0] == doctest::Approx(0.6).epsilon(1e-9));
    CHECK(res.joint_accuracy == doctest::Approx(0.0));

    CHECK_THROWS_AS(weight_line_search({&a}, {scene}, {1.0}, 1.0, BroadcastKind::idba, 0.1, 0.01),
                    Error);
    CHECK_THROWS_AS(weight_line_search({&a, &b}, {scene}, {1.0, 1.0}, 1.0, BroadcastKind::idba,
                                       0.0, 0.01),
                    Error);
}

TEST_CASE("joint and weighted attacks on real models meet the budget") {
    cls::ModelConfig cfg;
    cfg.conv1_filters = 8;
    cfg.conv2_filters = 4;
    cfg.dense_units = 16;
    cls::Model m1(cfg, 201), m2(cfg, 202);
    atk::ModelVictim v1(m1), v2(m2);

    Rng rng(53);
    auto rec = iq::synth_record(iq::Scheme::psk8, 14, rng);
    channel::ChannelParams params;
    Ensemble e;
    e.receivers.push_back(Receiver{&v1, channel::sample_taps(params, rng), rec.frame,
                                   rec.label});
    e.receivers.push_back(Receiver{&v2, channel::sample_taps(params, rng), rec.frame,
                                   rec.label});
    e.weights = {0.5, 0.5};

    const double pmax = 0.02;
    IQFrame wsum = idba(e, pmax, 0.05);
    CHECK(atk::power(wsum) == doctest::Approx(pmax).epsilon(1e-9));
    auto joint = jdba(e, pmax, 0.05);
    CHECK(atk::power(joint.delta) == doctest::Approx(pmax).epsilon(1e-9));
    CHECK(joint.target_class != rec.label);
}
