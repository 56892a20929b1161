#include "rfadv/iq.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "rfadv/error.hpp"

namespace rfadv::iq {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Gray code of rank i.
unsigned gray(unsigned i) { return i ^ (i >> 1); }

// Gray-labelled amplitude levels for one dimension of a square QAM / PAM:
// label -> level in {-(m-1), ..., -1, +1, ..., +(m-1)} (spacing 2).
std::vector<double> gray_levels(unsigned m) {
    std::vector<double> lvl(m);
    for (unsigned rank = 0; rank < m; ++rank) {
        lvl[gray(rank)] = -static_cast<double>(m - 1) + 2.0 * rank;
    }
    return lvl;
}

std::vector<cdouble> psk_table(unsigned m) {
    std::vector<cdouble> c(m);
    for (unsigned rank = 0; rank < m; ++rank) {
        double ph = 2.0 * kPi * rank / m;
        c[gray(rank)] = {std::cos(ph), std::sin(ph)};
    }
    return c;
}

std::vector<cdouble> qam_table(unsigned m_per_dim) {
    auto lvl = gray_levels(m_per_dim);
    // Mean energy of one dimension: sum of odd squares.
    double e1 = 0.0;
    for (double v : lvl) e1 += v * v;
    e1 /= m_per_dim;
    double scale = 1.0 / std::sqrt(2.0 * e1);
    unsigned bits_dim = 0;
    while ((1u << bits_dim) < m_per_dim) ++bits_dim;
    std::vector<cdouble> c(m_per_dim * m_per_dim);
    for (unsigned bi = 0; bi < m_per_dim; ++bi) {
        for (unsigned bq = 0; bq < m_per_dim; ++bq) {
            c[(bi << bits_dim) | bq] = {lvl[bi] * scale, lvl[bq] * scale};
        }
    }
    return c;
}

std::vector<cdouble> pam_table(unsigned m) {
    auto lvl = gray_levels(m);
    double e = 0.0;
    for (double v : lvl) e += v * v;
    e /= m;
    double scale = 1.0 / std::sqrt(e);
    std::vector<cdouble> c(m);
    for (unsigned b = 0; b < m; ++b) c[b] = {lvl[b] * scale, 0.0};
    return c;
}

// Discrete GFSK frequency pulse at one sample per symbol: Gaussian-filtered
// rectangular pulse, truncated to +-2 symbols and renormalized to sum 1 so a
// long run of identical bits still advances the phase by pi*h per symbol.
const std::array<double, 5>& gfsk_pulse() {
    static const std::array<double, 5> taps = [] {
        constexpr double bt = 0.35;
        const double c = kPi * bt * std::sqrt(2.0 / std::log(2.0));
        std::array<double, 5> w{};
        double sum = 0.0;
        for (int l = -2; l <= 2; ++l) {
            w[l + 2] = 0.5 * (std::erf(c * (l + 0.5)) - std::erf(c * (l - 0.5)));
            sum += w[l + 2];
        }
        for (double& v : w) v /= sum;
        return w;
    }();
    return taps;
}

unsigned pack_bits(const std::vector<std::uint8_t>& bits, std::size_t start, int n) {
    unsigned v = 0;
    for (int b = 0; b < n; ++b) v = (v << 1) | (bits[start + b] & 1u);
    return v;
}

} // namespace

const char* scheme_name(Scheme s) {
    switch (s) {
    case Scheme::bpsk: return "bpsk";
    case Scheme::qpsk: return "qpsk";
    case Scheme::psk8: return "psk8";
    case Scheme::qam16: return "qam16";
    case Scheme::qam64: return "qam64";
    case Scheme::pam4: return "pam4";
    case Scheme::cpfsk: return "cpfsk";
    case Scheme::gfsk: return "gfsk";
    }
    fail(ErrorCode::internal, "unknown scheme");
}

Scheme scheme_from_name(const std::string& name) {
    for (int i = 0; i < kNumSchemes; ++i) {
        auto s = static_cast<Scheme>(i);
        if (name == scheme_name(s)) return s;
    }
    fail(ErrorCode::config, "unknown modulation scheme: " + name);
}

int bits_per_symbol(Scheme s) {
    switch (s) {
    case Scheme::bpsk: return 1;
    case Scheme::qpsk: return 2;
    case Scheme::psk8: return 3;
    case Scheme::qam16: return 4;
    case Scheme::qam64: return 6;
    case Scheme::pam4: return 2;
    case Scheme::cpfsk: return 1;
    case Scheme::gfsk: return 1;
    }
    fail(ErrorCode::internal, "unknown scheme");
}

bool is_linear(Scheme s) { return s != Scheme::cpfsk && s != Scheme::gfsk; }

std::vector<cdouble> constellation(Scheme s) {
    switch (s) {
    case Scheme::bpsk: return {{1.0, 0.0}, {-1.0, 0.0}};
    case Scheme::qpsk: {
        const double a = 1.0 / std::sqrt(2.0);
        // Bit pair (b0, b1): I = +-a from b0, Q = +-a from b1; 00 -> (a, a).
        return {{a, a}, {a, -a}, {-a, a}, {-a, -a}};
    }
    case Scheme::psk8: return psk_table(8);
    case Scheme::qam16: return qam_table(4);
    case Scheme::qam64: return qam_table(8);
    case Scheme::pam4: return pam_table(4);
    default: fail(ErrorCode::config, std::string("no symbol table for ") + scheme_name(s));
    }
}

IQFrame modulate(Scheme s, const std::vector<std::uint8_t>& bits) {
    const int bps = bits_per_symbol(s);
    const std::size_t need = static_cast<std::size_t>(kFrameLen) * bps;
    if (bits.size() < need) {
        fail(ErrorCode::dimension, "modulate: need " + std::to_string(need) + " bits, got " +
                                       std::to_string(bits.size()));
    }
    IQFrame frame(kFrameLen);
    if (is_linear(s)) {
        auto table = constellation(s);
        for (int k = 0; k < kFrameLen; ++k) {
            frame[k] = table[pack_bits(bits, static_cast<std::size_t>(k) * bps, bps)];
        }
        return frame;
    }
    constexpr double h = 0.5; // modulation index for both CPM schemes
    double phase = 0.0;
    if (s == Scheme::cpfsk) {
        for (int k = 0; k < kFrameLen; ++k) {
            double a = bits[k] ? -1.0 : 1.0;
            phase += kPi * h * a;
            frame[k] = {std::cos(phase), std::sin(phase)};
        }
    } else { // gfsk
        const auto& g = gfsk_pulse();
        for (int k = 0; k < kFrameLen; ++k) {
            double f = 0.0;
            for (int l = -2; l <= 2; ++l) {
                int idx = k - l;
                if (idx < 0 || idx >= kFrameLen) continue; // silent history
                f += g[l + 2] * (bits[idx] ? -1.0 : 1.0);
            }
            phase += kPi * h * f;
            frame[k] = {std::cos(phase), std::sin(phase)};
        }
    }
    return frame;
}

double snr_to_noise_power(double snr_db) { return std::pow(10.0, -snr_db / 10.0); }

DatasetRecord synth_record(Scheme scheme, std::int16_t snr_db, Rng& rng) {
    const int bps = bits_per_symbol(scheme);
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(kFrameLen) * bps);
    for (auto& b : bits) b = static_cast<std::uint8_t>(rng.bits() & 1u);
    DatasetRecord rec;
    rec.label = static_cast<std::uint8_t>(scheme);
    rec.snr_db = snr_db;
    rec.frame = modulate(scheme, bits);
    const double np = snr_to_noise_power(snr_db);
    if (np > 0.0) {
        for (auto& x : rec.frame) x += rng.complex_gaussian(np);
    }
    return rec;
}

void derive_split(std::uint64_t seed, std::size_t n, std::vector<std::uint32_t>& train_idx,
                  std::vector<std::uint32_t>& test_idx) {
    std::vector<std::uint32_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<std::uint32_t>(i);
    Rng rng = Rng::stream(seed, /*purpose=*/0xA11057u);
    rng.shuffle(perm.begin(), perm.end());
    const std::size_t n_train = (n + 1) / 2;
    train_idx.assign(perm.begin(), perm.begin() + n_train);
    test_idx.assign(perm.begin() + n_train, perm.end());
}

Dataset synth_dataset(const SynthParams& params) {
    if (params.snr_grid.empty()) fail(ErrorCode::config, "synth: empty SNR grid");
    Dataset ds;
    ds.seed = params.seed;
    ds.records.reserve(params.n_records);
    for (std::uint32_t i = 0; i < params.n_records; ++i) {
        auto scheme = static_cast<Scheme>(i % kNumSchemes);
        std::int16_t snr = params.snr_grid[(i / kNumSchemes) % params.snr_grid.size()];
        Rng rng = Rng::stream(params.seed, /*purpose=*/1, i);
        ds.records.push_back(synth_record(scheme, snr, rng));
    }
    derive_split(params.seed, ds.records.size(), ds.train_idx, ds.test_idx);
    return ds;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::string& out, std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) {
    static_assert(sizeof(float) == 4);
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(out, u);
}

struct Reader {
    std::string data;
    std::size_t pos = 0;
    const std::string& path;

    explicit Reader(const std::string& p) : path(p) {}

    void need(std::size_t n, const char* what) {
        if (pos + n > data.size()) {
            fail(ErrorCode::format, path + ": truncated reading " + what + " at byte offset " +
                                        std::to_string(pos));
        }
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return static_cast<std::uint8_t>(data[pos++]);
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(data[pos++])) << (8 * i);
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data[pos++])) << (8 * i);
        return v;
    }
    float f32(const char* what) {
        std::uint32_t u = u32(what);
        float v;
        std::memcpy(&v, &u, 4);
        return v;
    }
};

} // namespace

void write_dataset(const Dataset& ds, const std::string& path) {
    std::string out;
    out.reserve(12 + ds.records.size() * (3 + static_cast<std::size_t>(kFrameLen) * 8));
    out += "RFIQ";
    out.push_back(0x01);
    put_u32(out, static_cast<std::uint32_t>(ds.records.size()));
    put_u16(out, static_cast<std::uint16_t>(kFrameLen));
    out.push_back(static_cast<char>(kNumSchemes));
    for (const auto& rec : ds.records) {
        out.push_back(static_cast<char>(rec.label));
        put_u16(out, static_cast<std::uint16_t>(rec.snr_db));
        for (const auto& x : rec.frame) {
            put_f32(out, static_cast<float>(x.real()));
            put_f32(out, static_cast<float>(x.imag()));
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorCode::io, "cannot open for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) fail(ErrorCode::io, "write failed: " + path);
}

Dataset read_dataset(const std::string& path, std::uint64_t seed) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::io, "cannot open: " + path);
    Reader r(path);
    r.data.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());

    r.need(4, "magic");
    if (r.data.compare(0, 4, "RFIQ") != 0) {
        fail(ErrorCode::format, path + ": bad magic at byte offset 0");
    }
    r.pos = 4;
    std::uint8_t version = r.u8("version");
    if (version != 0x01) {
        fail(ErrorCode::format, path + ": unsupported version " + std::to_string(version) +
                                    " at byte offset 4");
    }
    std::uint32_t count = r.u32("record count");
    std::uint16_t p = r.u16("frame length");
    if (p != kFrameLen) {
        fail(ErrorCode::format, path + ": frame length " + std::to_string(p) + " != " +
                                    std::to_string(kFrameLen) + " at byte offset 9");
    }
    std::uint8_t n_classes = r.u8("class count");
    if (n_classes != kNumSchemes) {
        fail(ErrorCode::format, path + ": class count " + std::to_string(n_classes) + " != " +
                                    std::to_string(kNumSchemes) + " at byte offset 11");
    }

    Dataset ds;
    ds.seed = seed;
    ds.records.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        auto& rec = ds.records[i];
        std::size_t label_off = r.pos;
        rec.label = r.u8("label");
        if (rec.label >= n_classes) {
            fail(ErrorCode::format, path + ": label " + std::to_string(rec.label) +
                                        " out of range at byte offset " + std::to_string(label_off));
        }
        rec.snr_db = static_cast<std::int16_t>(r.u16("snr"));
        rec.frame.resize(kFrameLen);
        for (int k = 0; k < kFrameLen; ++k) {
            double re = r.f32("I sample");
            double im = r.f32("Q sample");
            rec.frame[k] = {re, im};
        }
    }
    if (r.pos != r.data.size()) {
        fail(ErrorCode::format, path + ": trailing bytes at byte offset " + std::to_string(r.pos));
    }
    derive_split(seed, ds.records.size(), ds.train_idx, ds.test_idx);
    return ds;
}

} // namespace rfadv::iq
