#pragma once

#include <mutex>
#include <unordered_map>
#include <utility>
#include <vector>

#include "relc/lattice.hpp"

namespace relc {

// ---------------------------------------------------------------------------
// Stress-tensor input for the smearing kernels (1+1D, signature (+,-)).
// Only the rest-frame energy density t00 is exercised by the shipped runs;
// the off-diagonal and spatial components are carried for completeness.
// ---------------------------------------------------------------------------
struct StressTensor {
    double t00 = 0.0;
    double t01 = 0.0;
    double t11 = 0.0;

    // psd as a 2x2 matrix; guarantees the kernel exponent is <= 0 for any
    // separation vector, cone-interior or not.
    bool positive_semidefinite() const;
};

struct KernelParams {
    double k = 1.0; // decay constant multiplying the stress contraction

    // How the stress tensor feeding the kernels is sourced: a fixed matrix
    // (tbar_static) or recomputed per point from the evolving state.
    enum class Mode { kStatic, kPlc };
    Mode mode = Mode::kStatic;
    StressTensor tbar_static{};

    // Weights below truncation * (cone max) are dropped and the kernel is
    // renormalized over the surviving support.
    double truncation = 1e-12;

    void validate() const; // throws ConfigError
};

// ---------------------------------------------------------------------------
// A normalized kernel slice: all support cells of the clipped cone of x with
// their kernel values. Σ_y value(y) * dω = 1 unless the cone is empty.
// ---------------------------------------------------------------------------
struct KernelSlice {
    Cell x{};
    std::vector<std::pair<Cell, double>> support; // sorted by (t, i)
    bool empty_cone = false;

    double value_at(const Cell& y) const; // 0 off support
};

// Future-cone kernel g and past-cone kernel f, normalized over the lattice-
// clipped cone of x. tbar_at_x is the stress tensor sourced at x (static or
// replayed); an empty clipped cone yields an all-zero flagged slice.
KernelSlice kernel_g(const LatticeSpec& spec, const KernelParams& params,
                     const StressTensor& tbar_at_x, const Cell& x);
KernelSlice kernel_f(const LatticeSpec& spec, const KernelParams& params,
                     const StressTensor& tbar_at_x, const Cell& x);

// Point evaluations (build the slice for x internally; prefer slices or the
// KernelTable when evaluating many y for one x).
double eval_g(const LatticeSpec& spec, const KernelParams& params,
              const StressTensor& tbar_at_x, const Cell& x, const Cell& y);
double eval_f(const LatticeSpec& spec, const KernelParams& params,
              const StressTensor& tbar_at_x, const Cell& x, const Cell& y);

// ---------------------------------------------------------------------------
// Slice cache for the static-tensor case. Lazily built; reads are guarded so
// the table can be shared across workers.
// ---------------------------------------------------------------------------
class KernelTable {
  public:
    KernelTable(const LatticeSpec& spec, const KernelParams& params);

    const KernelSlice& f(const Cell& x) const;
    const KernelSlice& g(const Cell& x) const;

    const LatticeSpec& spec() const { return spec_; }
    const KernelParams& params() const { return params_; }

  private:
    const KernelSlice& lookup(const Cell& x, bool future) const;

    LatticeSpec spec_;
    KernelParams params_;
    mutable std::mutex mutex_;
    mutable std::unordered_map<int, KernelSlice> f_slices_;
    mutable std::unordered_map<int, KernelSlice> g_slices_;
};

} // namespace relc
