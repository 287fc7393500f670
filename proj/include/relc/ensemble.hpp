#pragma once

#include <cstdint>
#include <vector>

#include "relc/dynamics.hpp"
#include "relc/lattice.hpp"

namespace relc {

// ---------------------------------------------------------------------------
// Path ensembles. Paths are mutually independent (each gets its own counter-
// based noise stream keyed off the base seed and the path index), so the
// production runner farms them out to OpenMP workers in fixed-size blocks
// and reduces the finished block serially in path order with compensated
// sums. The result is byte-identical for any worker count, and identical to
// the serial reference runner kept alongside for testing and benchmarks.
// ---------------------------------------------------------------------------

struct EnsembleOptions {
    int n_paths = 200;
    std::uint64_t base_seed = 0;
    int workers = 0;                // 0 = library default thread count
    bool random_foliations = false; // fresh random sweep order per path
    double variance_scale = 1.0;    // noise tamper knob for negative controls
    RunOptions run;                 // per-path controls; record_steps must
                                    // stay off across an ensemble
};

struct EnsembleResult {
    int n_paths = 0;
    int n_branches = 0;
    bool reweight_dropped = false; // mirror of the drop_reweight mutation

    // per level 0..T, filled when run.record_levels
    std::vector<double> var_mean, var_se;
    std::vector<double> example_var; // the first path's curve

    // per checkpoint, parallel to `checkpoints` (sorted level indices)
    std::vector<int> checkpoints;
    std::vector<double> cp_norm2_mean, cp_norm2_se;
    std::vector<std::vector<double>> cp_weight_mean, cp_weight_se; // [cp][j]

    std::vector<int> outcome_counts;    // size n_branches+1, last = undecided
    std::vector<int> outcomes;          // per path, -1 when undecided
    std::vector<double> collapse_times; // per path, NaN when undecided
    std::vector<double> final_norm2;    // per path (the importance weight)
    std::vector<double> final_weights;  // flat, path-major [p * n_branches + j]
    std::vector<double> wr_dw, wr_signal; // per path when run.wr_region is set

    double weight_at(int path, int j) const;
    int decided() const; // paths with a declared outcome
};

// Per-branch probability estimators with standard errors.
struct BornEstimate {
    std::vector<double> value;
    std::vector<double> se;
};

// Frequency of declared outcomes among decided paths (NaN when none decided).
BornEstimate born_from_outcomes(const EnsembleResult& r);
// Unweighted mean of the final normalized branch weights; the physical-
// measure estimator for ensembles sampled with the nonlinear scheme.
BornEstimate born_from_weights(const EnsembleResult& r);
// Self-normalized reweighting Σ_p w_p <P_j>_p / Σ_p w_p with w = final_norm2;
// the bare-measure estimator for linear ensembles. Errors by the delta
// method. Honors reweight_dropped (weights forced to 1).
BornEstimate born_reweighted(const EnsembleResult& r);

// Serial reference and the OpenMP production runner; identical output.
EnsembleResult run_ensemble_serial(const LatticeSpec& spec,
                                   const BranchSet& branches,
                                   const CollapseParams& params,
                                   const EnsembleOptions& options);
EnsembleResult run_ensemble(const LatticeSpec& spec, const BranchSet& branches,
                            const CollapseParams& params,
                            const EnsembleOptions& options);

} // namespace relc
