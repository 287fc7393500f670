#include "relc/noise.hpp"

#include <cmath>
#include <numbers>

namespace relc {

namespace {

constexpr std::uint32_t kPhiloxW32A = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW32B = 0xBB67AE85u;
constexpr std::uint32_t kPhiloxM4x32A = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM4x32B = 0xCD9E8D57u;

inline void philox_round(std::uint32_t& k0, std::uint32_t& k1,
                         std::array<std::uint32_t, 4>& c) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM4x32A) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM4x32B) * c[2];
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    c = {hi1 ^ c[1] ^ k0, lo1, hi0 ^ c[3] ^ k1, lo0};
    k0 += kPhiloxW32A;
    k1 += kPhiloxW32B;
}

} // namespace

std::array<std::uint32_t, 4> philox4x32(const std::array<std::uint32_t, 2>& key,
                                        std::array<std::uint32_t, 4> ctr) {
    std::uint32_t k0 = key[0], k1 = key[1];
    for (int r = 0; r < 10; ++r) philox_round(k0, k1, ctr);
    return ctr;
}

double philox_normal(std::uint64_t key, std::uint32_t c0, std::uint32_t c1,
                     std::uint32_t c2, std::uint32_t c3) {
    const auto w = philox4x32({static_cast<std::uint32_t>(key),
                               static_cast<std::uint32_t>(key >> 32)},
                              {c0, c1, c2, c3});
    const std::uint64_t a = (static_cast<std::uint64_t>(w[1]) << 32) | w[0];
    const std::uint64_t b = (static_cast<std::uint64_t>(w[3]) << 32) | w[2];
    // u1 in (0, 1], u2 in [0, 1)
    const double u1 = static_cast<double>((a >> 11) + 1) * 0x1.0p-53;
    const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (a + 1) + 0xBF58476D1CE4E5B9ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

double NoiseField::sample_dW(const Cell& c) const {
    const double z = philox_normal(seed, static_cast<std::uint32_t>(c.i),
                                   static_cast<std::uint32_t>(c.t), kStreamNoise, 0);
    return std::sqrt(spec.domega() * variance_scale) * z;
}

std::uint64_t SequenceRng::next_u64() {
    const auto w = philox4x32({static_cast<std::uint32_t>(key),
                               static_cast<std::uint32_t>(key >> 32)},
                              {static_cast<std::uint32_t>(n),
                               static_cast<std::uint32_t>(n >> 32), kStreamAux, 1});
    ++n;
    return (static_cast<std::uint64_t>(w[1]) << 32) | w[0];
}

std::uint64_t SequenceRng::below(std::uint64_t m) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * m) >> 64);
}

double SequenceRng::normal() {
    const auto w = philox4x32({static_cast<std::uint32_t>(key),
                               static_cast<std::uint32_t>(key >> 32)},
                              {static_cast<std::uint32_t>(n),
                               static_cast<std::uint32_t>(n >> 32), kStreamAux, 2});
    ++n;
    const std::uint64_t a = (static_cast<std::uint64_t>(w[1]) << 32) | w[0];
    const std::uint64_t b = (static_cast<std::uint64_t>(w[3]) << 32) | w[2];
    const double u1 = static_cast<double>((a >> 11) + 1) * 0x1.0p-53;
    const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace relc
