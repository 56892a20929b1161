#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "rfadv/rng.hpp"

namespace rfadv::iq {

using cdouble = std::complex<double>;
using IQFrame = std::vector<cdouble>; // always kFrameLen symbols

inline constexpr int kFrameLen = 128;
inline constexpr int kNumSchemes = 8;

enum class Scheme : std::uint8_t {
    bpsk = 0,
    qpsk,
    psk8,
    qam16,
    qam64,
    pam4,
    cpfsk,
    gfsk,
};

const char* scheme_name(Scheme s);
Scheme scheme_from_name(const std::string& name);
int bits_per_symbol(Scheme s);
bool is_linear(Scheme s); // table-mapped schemes (everything except CPFSK/GFSK)

// Symbol table for a linear scheme, Gray-labelled, scaled to unit average
// energy. Index = bit pattern of one symbol.
std::vector<cdouble> constellation(Scheme s);

// Maps bits to kFrameLen symbols. Consumes kFrameLen * bits_per_symbol(s)
// bits; fewer available is a dimension error. CPFSK uses modulation index
// h = 0.5; GFSK uses a Gaussian frequency pulse with BT = 0.35 (h = 0.5).
IQFrame modulate(Scheme s, const std::vector<std::uint8_t>& bits);

struct DatasetRecord {
    std::uint8_t label = 0; // Scheme index
    std::int16_t snr_db = 0;
    IQFrame frame; // receiver observation: unit-power signal + AWGN
};

struct Dataset {
    std::vector<DatasetRecord> records;
    std::vector<std::uint32_t> train_idx;
    std::vector<std::uint32_t> test_idx;
    std::uint64_t seed = 0;
};

// Per-symbol AWGN power for a target SNR against a unit-power signal.
double snr_to_noise_power(double snr_db);

// Random-bit frame of `scheme` at `snr_db`: modulated signal (unit average
// power) plus circularly-symmetric AWGN of per-symbol variance
// snr_to_noise_power(snr_db), split evenly across I and Q.
DatasetRecord synth_record(Scheme scheme, std::int16_t snr_db, Rng& rng);

struct SynthParams {
    std::uint32_t n_records = 20000;
    std::vector<std::int16_t> snr_grid = {0, 2, 4, 6, 8, 10, 12, 14, 16, 18};
    std::uint64_t seed = 1;
};

// Balanced over (scheme, SNR); per-record RNG substream derived from
// (seed, record index). Train/test split is a seed-derived shuffle:
// disjoint, covering, |train| − |test| ∈ {0, 1}.
Dataset synth_dataset(const SynthParams& params);

// Derives the split for `n` records from `seed` (used by synth and read).
void derive_split(std::uint64_t seed, std::size_t n, std::vector<std::uint32_t>& train_idx,
                  std::vector<std::uint32_t>& test_idx);

// Binary dataset file: magic "RFIQ", version byte 0x01, u32 record count,
// u16 frame length (128), u8 class count (8); then per record u8 label,
// i16 snr_db, 128 × (f32 I, f32 Q). Little-endian throughout.
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path, std::uint64_t seed);

} // namespace rfadv::iq
