#pragma once

#include <complex>
#include <limits>
#include <vector>

#include "relc/kernels.hpp"
#include "relc/lattice.hpp"

namespace relc {

// ---------------------------------------------------------------------------
// Dense per-cell grid over the lattice, row-major in time.
// ---------------------------------------------------------------------------
template <typename V>
struct Grid {
    int L = 0;
    int T = 0;
    std::vector<V> v;

    Grid() = default;
    explicit Grid(const LatticeSpec& spec)
        : L(spec.L), T(spec.T),
          v(static_cast<std::size_t>(spec.L) * spec.T, V{}) {}

    V& at(int i, int t) { return v[static_cast<std::size_t>(t) * L + i]; }
    const V& at(int i, int t) const {
        return v[static_cast<std::size_t>(t) * L + i];
    }
    V& at(const Cell& c) { return at(c.i, c.t); }
    const V& at(const Cell& c) const { return at(c.i, c.t); }

    bool operator==(const Grid&) const = default;
};

// ---------------------------------------------------------------------------
// The record amplitude per cell, plus the surface up to which the
// matter-record interaction has been accumulated.
// ---------------------------------------------------------------------------
struct AlphaField {
    Grid<std::complex<double>> alpha;
    Surface sigma;
};

// Per-branch classical profiles: matter density J, its recorded smeared-number
// image N, and rest-frame energy density E.
struct BranchProfile {
    Grid<double> J;
    Grid<double> N;
    Grid<double> E;

    bool operator==(const BranchProfile&) const = default;
};

// A constant-value source block: cells with x1(i) in [x1_lo, x1_hi) and
// t in [t_lo, t_hi). Values of overlapping regions add.
struct SourceRegion {
    double x1_lo = 0.0;
    double x1_hi = 0.0;
    double value = 0.0;
    int t_lo = 0;
    int t_hi = std::numeric_limits<int>::max();
};

Grid<double> fill_regions(const LatticeSpec& spec,
                          const std::vector<SourceRegion>& regions);

// Accumulate the record created by the matter density J over the foliation
// segment from -> to: alpha(y) = -i * Σ_x dω * J(x) * g(x, y), the sum over
// cells x between the two surfaces. Linear in J.
AlphaField accumulate_alpha(const LatticeSpec& spec, const Grid<double>& J,
                            const Surface& from, const Surface& to,
                            const KernelTable& kernels);

// Smeared-number statistics of a record state: mean Σ_y dω f(x,y)|α(y)|² and
// variance Σ_y dω f²(x,y)|α(y)|² (one extra kernel power — fluctuations scale
// as the square root of the mean for large records).
double n_expectation(const LatticeSpec& spec, const AlphaField& alpha,
                     const Cell& x, const KernelTable& kernels);
double n_variance(const LatticeSpec& spec, const AlphaField& alpha,
                  const Cell& x, const KernelTable& kernels);

// How branch_image fills N from J: kExact smears the accumulated record;
// kPlateau uses the wide-lump idealization N = J² on the support of J.
enum class NMode { kExact, kPlateau };

// Fills profile.N from profile.J. Plateau mode demands that the kernel
// correlation length not exceed guard_ratio times the smallest J feature
// width (the idealization breaks down for narrow lumps).
BranchProfile branch_image(const LatticeSpec& spec, const BranchProfile& in,
                           const KernelTable& kernels, NMode mode,
                           double guard_ratio = 0.5);

// Correlation length of an energy-only kernel, 1/sqrt(k * t00); infinite when
// the exponent vanishes.
double kernel_correlation_length(const KernelParams& params);

// Smallest spatial width (in length units) of a contiguous nonzero run of J,
// minimized over time rows; +inf when J is identically zero.
double min_feature_width(const LatticeSpec& spec, const Grid<double>& J);

} // namespace relc
