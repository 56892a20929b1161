#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>

#include "rfadv/error.hpp"
#include "rfadv/iq.hpp"

using namespace rfadv;
using namespace rfadv::iq;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(static_cast<bool>(f));
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>{}};
}

void spit(const std::string& path, const std::string& data) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(data.data(), static_cast<std::streamsize>(data.size()));
    REQUIRE(static_cast<bool>(f));
}

int popcount_xor(std::size_t a, std::size_t b) {
    unsigned x = static_cast<unsigned>(a) ^ static_cast<unsigned>(b);
    int n = 0;
    while (x) {
        n += static_cast<int>(x & 1u);
        x >>= 1;
    }
    return n;
}

std::vector<std::uint8_t> random_bits(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::uint8_t> bits(n);
    for (auto& b : bits) b = static_cast<std::uint8_t>(rng.bits() & 1u);
    return bits;
}

} // namespace

TEST_CASE("scheme names roundtrip and reject unknowns") {
    for (int i = 0; i < kNumSchemes; ++i) {
        auto s = static_cast<Scheme>(i);
        CHECK(scheme_from_name(scheme_name(s)) == s);
    }
    CHECK_THROWS_AS(scheme_from_name("fm"), Error);
    try {
        scheme_from_name("fm");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::config);
    }
}

TEST_CASE("bits per symbol") {
    CHECK(bits_per_symbol(Scheme::bpsk) == 1);
    CHECK(bits_per_symbol(Scheme::qpsk) == 2);
    CHECK(bits_per_symbol(Scheme::psk8) == 3);
    CHECK(bits_per_symbol(Scheme::qam16) == 4);
    CHECK(bits_per_symbol(Scheme::qam64) == 6);
    CHECK(bits_per_symbol(Scheme::pam4) == 2);
    CHECK(bits_per_symbol(Scheme::cpfsk) == 1);
    CHECK(bits_per_symbol(Scheme::gfsk) == 1);
}

TEST_CASE("every linear constellation has unit average energy") {
    for (int i = 0; i < kNumSchemes; ++i) {
        auto s = static_cast<Scheme>(i);
        if (!is_linear(s)) continue;
        auto table = constellation(s);
        CHECK(table.size() == (1u << bits_per_symbol(s)));
        double e = 0.0;
        for (auto& p : table) e += std::norm(p);
        e /= static_cast<double>(table.size());
        CHECK(e == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("bpsk and qpsk symbol tables are pinned") {
    auto b = constellation(Scheme::bpsk);
    CHECK(b[0] == cdouble{1.0, 0.0});
    CHECK(b[1] == cdouble{-1.0, 0.0});

    const double a = 1.0 / std::sqrt(2.0);
    auto q = constellation(Scheme::qpsk);
    CHECK(std::abs(q[0] - cdouble{a, a}) < 1e-15);   // bits 00
    CHECK(std::abs(q[1] - cdouble{a, -a}) < 1e-15);  // bits 01
    CHECK(std::abs(q[2] - cdouble{-a, a}) < 1e-15);  // bits 10
    CHECK(std::abs(q[3] - cdouble{-a, -a}) < 1e-15); // bits 11
}

TEST_CASE("psk8 is unit-modulus and Gray-labelled around the circle") {
    auto t = constellation(Scheme::psk8);
    for (auto& p : t) CHECK(std::abs(p) == doctest::Approx(1.0).epsilon(1e-12));
    // Walk the circle in phase order; consecutive points must differ in one bit.
    std::vector<std::size_t> label_at_rank(8);
    for (std::size_t lab = 0; lab < 8; ++lab) {
        double ph = std::arg(t[lab]);
        if (ph < -1e-9) ph += 2.0 * kPi;
        auto rank = static_cast<std::size_t>(std::lround(ph / (2.0 * kPi / 8.0))) % 8;
        label_at_rank[rank] = lab;
    }
    for (std::size_t r = 0; r < 8; ++r) {
        CHECK(popcount_xor(label_at_rank[r], label_at_rank[(r + 1) % 8]) == 1);
    }
}

TEST_CASE("qam16 lattice: levels {±1,±3}/sqrt(10), Gray per dimension") {
    auto t = constellation(Scheme::qam16);
    const double u = 1.0 / std::sqrt(10.0);
    std::set<long> ilv, qlv;
    for (auto& p : t) {
        ilv.insert(std::lround(p.real() / u));
        qlv.insert(std::lround(p.imag() / u));
        CHECK(std::abs(p.real() / u - std::lround(p.real() / u)) < 1e-9);
        CHECK(std::abs(p.imag() / u - std::lround(p.imag() / u)) < 1e-9);
    }
    CHECK(ilv == std::set<long>{-3, -1, 1, 3});
    CHECK(qlv == std::set<long>{-3, -1, 1, 3});
    // Gray property along I for fixed Q bits: sort the 4 I-levels by value and
    // confirm adjacent labels differ in exactly one bit.
    std::vector<std::pair<double, std::size_t>> by_i;
    for (std::size_t lab = 0; lab < 16; ++lab) {
        if (std::lround(t[lab].imag() / u) == 1) by_i.emplace_back(t[lab].real(), lab);
    }
    std::sort(by_i.begin(), by_i.end());
    REQUIRE(by_i.size() == 4);
    for (std::size_t k = 0; k + 1 < 4; ++k) {
        CHECK(popcount_xor(by_i[k].second, by_i[k + 1].second) == 1);
    }
}

TEST_CASE("qam64 scale is 1/sqrt(42) and pam4 is real {±1,±3}/sqrt(5)") {
    auto q = constellation(Scheme::qam64);
    const double u64 = 1.0 / std::sqrt(42.0);
    double max_level = 0.0;
    for (auto& p : q) max_level = std::max(max_level, std::abs(p.real()));
    CHECK(max_level == doctest::Approx(7.0 * u64).epsilon(1e-12));

    auto p4 = constellation(Scheme::pam4);
    const double u = 1.0 / std::sqrt(5.0);
    std::set<long> lv;
    for (auto& p : p4) {
        CHECK(p.imag() == 0.0);
        lv.insert(std::lround(p.real() / u));
    }
    CHECK(lv == std::set<long>{-3, -1, 1, 3});
}

TEST_CASE("modulate maps bit groups through the table in order") {
    std::vector<std::uint8_t> bits(kFrameLen, 0);
    bits[0] = 1;
    auto f = modulate(Scheme::bpsk, bits);
    REQUIRE(f.size() == static_cast<std::size_t>(kFrameLen));
    CHECK(f[0] == cdouble{-1.0, 0.0});
    CHECK(f[1] == cdouble{1.0, 0.0});

    // QPSK consumes bit pairs MSB-first: (1,0) -> label 2 -> (-a, +a).
    std::vector<std::uint8_t> qb(2 * kFrameLen, 0);
    qb[0] = 1;
    qb[1] = 0;
    auto qf = modulate(Scheme::qpsk, qb);
    const double a = 1.0 / std::sqrt(2.0);
    CHECK(std::abs(qf[0] - cdouble{-a, a}) < 1e-15);
    CHECK(std::abs(qf[1] - cdouble{a, a}) < 1e-15);
}

TEST_CASE("modulate rejects short bit streams") {
    std::vector<std::uint8_t> bits(kFrameLen * 4 - 1, 0);
    CHECK_THROWS_AS(modulate(Scheme::qam16, bits), Error);
    try {
        modulate(Scheme::qam16, bits);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::dimension);
    }
}

TEST_CASE("cpfsk: unit modulus, ±pi/2 phase steps, continuous phase") {
    auto bits = random_bits(kFrameLen, 7);
    auto f = modulate(Scheme::cpfsk, bits);
    for (auto& s : f) CHECK(std::abs(s) == doctest::Approx(1.0).epsilon(1e-12));
    for (int k = 1; k < kFrameLen; ++k) {
        cdouble rot = f[k] / f[k - 1];
        // bit 0 -> +pi/2 (rot = +i), bit 1 -> -pi/2 (rot = -i)
        cdouble want = bits[k] ? cdouble{0.0, -1.0} : cdouble{0.0, 1.0};
        CHECK(std::abs(rot - want) < 1e-12);
    }
}

TEST_CASE("gfsk: unit modulus and pi/2 steady-state rotation on constant bits") {
    std::vector<std::uint8_t> zeros(kFrameLen, 0);
    auto f = modulate(Scheme::gfsk, zeros);
    for (auto& s : f) CHECK(std::abs(s) == doctest::Approx(1.0).epsilon(1e-12));
    // Away from the frame edges all five pulse taps see the same bit, so the
    // per-symbol phase advance is exactly pi/2 (the taps are normalized).
    for (int k = 3; k < kFrameLen - 3; ++k) {
        CHECK(std::abs(f[k] / f[k - 1] - cdouble{0.0, 1.0}) < 1e-12);
    }
}

TEST_CASE("gfsk matches an independently computed smoothed-phase trajectory") {
    std::vector<std::uint8_t> bits(kFrameLen, 0);
    const std::uint8_t head[8] = {1, 0, 1, 1, 0, 0, 1, 0};
    for (int i = 0; i < 8; ++i) bits[i] = head[i];
    auto f = modulate(Scheme::gfsk, bits);
    // Reference values computed outside this codebase from
    // w[l] = erf-difference Gaussian pulse (BT = 0.35), h = 0.5.
    const cdouble want[6] = {
        {0.4255323901121938, -0.9049431943306738},
        {0.989271413389096, -0.1460892557690004},
        {0.14597381149764144, -0.9892884545757376},
        {-0.904868694053051, -0.4256907874534354},
        {0.14597381149764188, -0.9892884545757374},
        {0.9892714133890961, -0.14608925576899995},
    };
    for (int k = 0; k < 6; ++k) CHECK(std::abs(f[k] - want[k]) < 1e-12);
}

TEST_CASE("snr to noise power") {
    CHECK(snr_to_noise_power(0.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(snr_to_noise_power(10.0) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(snr_to_noise_power(-10.0) == doctest::Approx(10.0).epsilon(1e-15));
}

TEST_CASE("synth_record power statistics match signal-plus-noise model") {
    Rng rng(11);
    double acc = 0.0;
    const int n = 400;
    for (int i = 0; i < n; ++i) {
        auto rec = synth_record(Scheme::qpsk, 10, rng);
        CHECK(rec.label == static_cast<std::uint8_t>(Scheme::qpsk));
        CHECK(rec.snr_db == 10);
        for (auto& s : rec.frame) acc += std::norm(s);
    }
    acc /= static_cast<double>(n) * kFrameLen;
    // Unit signal power + 0.1 noise power.
    CHECK(acc == doctest::Approx(1.1).epsilon(0.02));
}

TEST_CASE("synth_dataset is balanced, seeded, and split correctly") {
    SynthParams p;
    p.n_records = 800;
    p.snr_grid = {0, 10};
    p.seed = 42;
    auto ds = synth_dataset(p);
    REQUIRE(ds.records.size() == 800);

    int counts[kNumSchemes] = {};
    int snr_counts[2] = {};
    for (auto& r : ds.records) {
        ++counts[r.label];
        ++snr_counts[r.snr_db == 0 ? 0 : 1];
    }
    for (int c : counts) CHECK(c == 100);
    CHECK(snr_counts[0] == 400);
    CHECK(snr_counts[1] == 400);

    // Deterministic: same seed reproduces every sample exactly.
    auto ds2 = synth_dataset(p);
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        CHECK(ds.records[i].frame == ds2.records[i].frame);
    }
    // Different seed changes the data.
    p.seed = 43;
    auto ds3 = synth_dataset(p);
    CHECK(ds.records[0].frame != ds3.records[0].frame);

    // Split: disjoint, covering, near-equal.
    std::set<std::uint32_t> seen;
    for (auto i : ds.train_idx) seen.insert(i);
    for (auto i : ds.test_idx) {
        CHECK(seen.count(i) == 0);
        seen.insert(i);
    }
    CHECK(seen.size() == ds.records.size());
    CHECK(ds.train_idx.size() == 400);
    CHECK(ds.test_idx.size() == 400);

    SUBCASE("odd count puts the spare record in train") {
        p.n_records = 801;
        p.seed = 42;
        auto odd = synth_dataset(p);
        CHECK(odd.train_idx.size() == 401);
        CHECK(odd.test_idx.size() == 400);
    }
}

TEST_CASE("dataset file roundtrip is exact after one f32 quantization") {
    SynthParams p;
    p.n_records = 64;
    p.seed = 5;
    auto ds = synth_dataset(p);
    const std::string f1 = "t_iq_rt1.bin";
    const std::string f2 = "t_iq_rt2.bin";
    write_dataset(ds, f1);

    auto rd = read_dataset(f1, p.seed);
    REQUIRE(rd.records.size() == ds.records.size());
    CHECK(rd.train_idx == ds.train_idx);
    CHECK(rd.test_idx == ds.test_idx);
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        CHECK(rd.records[i].label == ds.records[i].label);
        CHECK(rd.records[i].snr_db == ds.records[i].snr_db);
        for (int k = 0; k < kFrameLen; ++k) {
            CHECK(std::abs(rd.records[i].frame[k] - ds.records[i].frame[k]) < 1e-6);
        }
    }
    // Second trip is bit-exact: values are already f32.
    write_dataset(rd, f2);
    CHECK(slurp(f1) == slurp(f2));
    std::remove(f1.c_str());
    std::remove(f2.c_str());
}

TEST_CASE("dataset reader reports malformed files with byte offsets") {
    SynthParams p;
    p.n_records = 3;
    p.seed = 9;
    auto ds = synth_dataset(p);
    const std::string path = "t_iq_bad.bin";
    write_dataset(ds, path);
    const std::string good = slurp(path);

    auto expect_format = [&](const std::string& data, const char* offset_hint) {
        spit(path, data);
        bool threw = false;
        try {
            read_dataset(path, 1);
        } catch (const Error& e) {
            threw = true;
            CHECK(e.code() == ErrorCode::format);
            CHECK(std::string(e.what()).find(offset_hint) != std::string::npos);
        }
        CHECK(threw);
    };

    std::string bad = good;
    bad[0] = 'X';
    expect_format(bad, "byte offset 0");

    bad = good;
    bad[4] = 0x02;
    expect_format(bad, "byte offset 4");

    bad = good;
    bad[9] = 0x40; // frame length now 64
    expect_format(bad, "byte offset 9");

    bad = good;
    bad[11] = 9; // class count
    expect_format(bad, "byte offset 11");

    bad = good;
    bad[12] = 8; // first record label out of range
    expect_format(bad, "byte offset 12");

    expect_format(good.substr(0, good.size() - 3), "truncated");
    expect_format(good + std::string(1, '\0'), "trailing");

    CHECK_THROWS_AS(read_dataset("no_such_file.bin", 1), Error);
    try {
        read_dataset("no_such_file.bin", 1);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::io);
    }
    std::remove(path.c_str());
}
