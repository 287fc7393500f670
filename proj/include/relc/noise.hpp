#pragma once

#include <array>
#include <cstdint>

#include "relc/lattice.hpp"

namespace relc {

// Philox 4x32-10 counter-based generator. Pure function of (key, counter), so
// noise draws are independent of evaluation order, thread count, and of which
// foliation visits a cell first.
std::array<std::uint32_t, 4> philox4x32(const std::array<std::uint32_t, 2>& key,
                                        std::array<std::uint32_t, 4> ctr);

// Standard normal from one Philox block (Box-Muller on the first two output
// words, the cosine branch).
double philox_normal(std::uint64_t key, std::uint32_t c0, std::uint32_t c1,
                     std::uint32_t c2, std::uint32_t c3);

// splitmix64-style mixer for deriving stream keys (per path, per purpose).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

// Counter streams, kept disjoint via the third counter word.
enum : std::uint32_t {
    kStreamNoise = 0,
    kStreamFoliation = 1,
    kStreamAux = 2,
};

// White noise increment field: dW(cell) ~ N(0, domega), iid across cells,
// a pure function of (seed, i, t). variance_scale != 1 is a test hook for the
// tampered-noise negative control.
struct NoiseField {
    std::uint64_t seed = 0;
    LatticeSpec spec;
    double variance_scale = 1.0;

    double sample_dW(const Cell& c) const;
};

// Small stateful helper on top of Philox for seeded choices (random
// foliations, one-off scalar draws). Not used in the dynamics hot path.
struct SequenceRng {
    std::uint64_t key = 0;
    std::uint64_t n = 0;

    explicit SequenceRng(std::uint64_t k) : key(k) {}

    std::uint64_t next_u64();
    // Uniform in [0, m), multiply-shift bounded (bias < 2^-32, fine here).
    std::uint64_t below(std::uint64_t m);
    double normal();
};

} // namespace relc
