#pragma once

#include <complex>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "relc/lattice.hpp"
#include "relc/noise.hpp"
#include "relc/profiles.hpp"

namespace relc {

// ---------------------------------------------------------------------------
// Stochastic branch dynamics. A state is a superposition of a few orthogonal
// macroscopic branches; each cell advance multiplies every branch amplitude
// by a noise-dependent factor built from that branch's smeared-number image.
// ---------------------------------------------------------------------------

enum class Integrator { kEuler, kExponential };
enum class Scheme { kLinear, kNonlinear };

struct CollapseParams {
    double lambda = 0.5;
    double eps_collapse = 1e-6; // declare collapse when max weight > 1 - eps
    Integrator integrator = Integrator::kExponential;
    Scheme scheme = Scheme::kNonlinear;
    // fault-injection switches for negative controls; all off in real runs
    bool drop_drift = false;     // omit the deterministic damping term
    bool drop_diffusion = false; // omit the noise term
    bool drop_reweight = false;  // downstream: ignore importance weights

    void validate() const;
};

struct Branch {
    std::complex<double> amplitude;
    std::shared_ptr<const BranchProfile> profile;
};
using BranchSet = std::vector<Branch>;

// Amplitudes are stored as log-magnitude plus phase so that long runs with
// strongly damped branches neither underflow nor lose relative precision.
struct BranchState {
    std::vector<double> log_mag;
    std::vector<double> phase;
    std::vector<std::shared_ptr<const BranchProfile>> profiles;
    Surface sigma; // evolution has consumed every cell strictly below this

    int branches() const { return static_cast<int>(log_mag.size()); }
};

BranchState make_branch_state(const LatticeSpec& spec, const BranchSet& set);

// Normalized branch weights |c_k|^2 / Σ|c|^2, and the raw squared norm.
std::vector<double> branch_weights(const BranchState& state);
double state_norm2(const BranchState& state);
// Weight of a single branch (normalized).
double projector_expectation(const BranchState& state, int k);

// Statistics of the smeared-number images across branches at a cell,
// taken in the normalized state.
double quantum_expectation_N(const BranchState& state, const Cell& x);
double variance_N(const BranchState& state, const Cell& x);
double covariance_N(const BranchState& state, const Cell& x, const Cell& y);

// Spatial integral Σ_i dx * Var_N(i, row); the ensemble mean of this decays
// as branches compete and one wins.
double variance_integral(const LatticeSpec& spec, const BranchState& state,
                         int row);

// One cell advance of the un-normalized dynamics, driven by the increment dw:
//   exponential: |c_k| *= exp(-λ² N_k² dω + λ N_k dw)
//   euler:        c_k *= 1 - ½ λ² N_k² dω + λ N_k dw
// Under increments drawn from the bare measure the squared norm is a
// martingale (exactly for the exponential form, to O(dω²) for Euler).
void step_linear(const LatticeSpec& spec, BranchState& state,
                 const CollapseParams& params, const Cell& x, double dw);

// Same advance in normalized form, driven by db: the factors use the
// centred image N_k - <N> and the state is renormalized afterwards.
// With db = dw - 2λ<N>dω this reproduces the normalized linear state
// exactly, step by step.
void step_nonlinear(const LatticeSpec& spec, BranchState& state,
                    const CollapseParams& params, const Cell& x, double db);

// How the per-cell noise sample is interpreted when driving a run:
//   kWField - the sample is the bare-measure increment dw
//   kBField - the sample is the physical-measure increment db
//   kAuto   - kWField for linear runs, kBField for nonlinear runs
enum class NoiseRole { kAuto, kWField, kBField };

// Closed rectangle in physical coordinates; a cell (i, t) is inside when
// x1_lo <= x1(i) < x1_hi and x0_lo <= t*dt < x0_hi.
struct Region2D {
    double x1_lo = 0.0;
    double x1_hi = 0.0;
    double x0_lo = 0.0;
    double x0_hi = 0.0;
};

bool region_contains(const LatticeSpec& spec, const Region2D& region,
                     const Cell& x);

struct RunOptions {
    bool record_steps = false;  // keep a per-advance trace (tests only)
    bool record_levels = false; // keep the variance curve, one entry per level
    std::vector<int> checkpoints; // level indices to snapshot norm² / weights
    bool terminate_on_collapse = true;
    NoiseRole noise_role = NoiseRole::kAuto;
    std::optional<Region2D> wr_region; // accumulate noise + signal inside
};

struct StepTrace {
    Cell cell;
    double dw;     // bare-measure increment at this cell
    double db;     // physical-measure increment, dw - 2λ<N>dω
    double mean_n; // <N> before the step
    double norm2;        // state norm² after the step
    double var_integral; // Σ_i dx Var[N] on the advanced row, after the step
};

struct PathRecord {
    std::uint64_t noise_seed = 0;
    std::uint64_t foliation_seed = 0;
    bool random_foliation = false;

    std::vector<StepTrace> steps;   // when record_steps
    std::vector<double> var_curve;  // when record_levels; entries 0..T, zero
                                    // after the path is declared collapsed
    std::vector<double> checkpoint_norm2;
    std::vector<std::vector<double>> checkpoint_weights;

    int outcome = -1; // branch index once max weight crossed 1 - eps
    double collapse_time = std::numeric_limits<double>::quiet_NaN();
    double final_norm2 = 1.0;
    std::vector<double> final_weights;

    double wr_dw = 0.0;     // Σ dw over the wr region
    double wr_signal = 0.0; // Σ 2λ<N>dω over the wr region
};

// The importance weight that converts bare-measure path averages into
// physical ones.
double path_weight(const PathRecord& rec);

// Drive a full run along the foliation. Cells where every branch image
// vanishes are skipped unless a trace or region accumulation needs them.
PathRecord run_path(const LatticeSpec& spec, const BranchSet& branches,
                    const CollapseParams& params, const Foliation& foliation,
                    const NoiseField& field, const RunOptions& options);

// Collapse-time scales read off a state at a given time row.
//   direct:      Var(x*) / (λ² Σ_i dx Cov(x*, x_i)²) with x* = argmax Var
//   closed_form: 1 / (λ² Σ_i dx (N_1 - N_2)²), two-branch states only
// Throws DomainError when the branch images never disagree on the row.
struct CollapseTimeEstimate {
    double direct = 0.0;
    double closed_form = 0.0;
    bool closed_form_valid = false;
};

CollapseTimeEstimate collapse_time_estimate(const LatticeSpec& spec,
                                            const BranchState& state,
                                            const CollapseParams& params,
                                            int row = 0);

// Functionals of a noise field alone (samples read as bare increments).
// Σ of samples over a region...
double beable_W_region(const LatticeSpec& spec, const NoiseField& field,
                       const Region2D& region);
// ...and the locally inferred energy density at x: branch weights are
// rebuilt from the noise strictly below the causal-past surface of x
// (exact exponential weight form), then contracted with the branch
// energy profiles at x. Depends only on samples inside the past cone.
double beable_T00(const LatticeSpec& spec, const BranchSet& branches,
                  const CollapseParams& params, const NoiseField& field,
                  const Cell& x);

} // namespace relc
