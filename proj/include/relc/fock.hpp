#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <complex>
#include <cstdint>
#include <vector>

#include "relc/kernels.hpp"
#include "relc/lattice.hpp"

namespace relc {

// ---------------------------------------------------------------------------
// Exact state-vector oracle for a handful of record modes. Each mode is one
// lattice cell carrying a truncated oscillator with the cell-volume-scaled
// ladder algebra [a, a†] = 1/dω, so n = a†a has spectrum k/dω and coherent
// amplitudes match the record field produced by the sweep dynamics.
// ---------------------------------------------------------------------------

using SparseOp = Eigen::SparseMatrix<double>;
using DenseOp = Eigen::MatrixXcd;
using FockState = Eigen::VectorXcd;

struct FockSpec {
    LatticeSpec lattice;
    std::vector<Cell> modes; // cells that carry quanta, unique, in bounds
    int cutoff = 2;          // highest occupation level per mode

    std::size_t dim() const;
    int levels() const { return cutoff + 1; }
    // index of a cell in the mode list, -1 when absent
    int mode_index(const Cell& c) const;
    // occupation digit of mode m in basis state I
    int digit(std::size_t index, int m) const;
    void validate() const; // dim capped at 1e6
};

// Lowering operator of one mode: a |k> = sqrt(k/dω) |k-1>.
SparseOp build_ladder(const FockSpec& fs, int mode);

// Diagonals (operators diagonal in the occupation basis are kept as vectors).
Eigen::VectorXd build_n_diag(const FockSpec& fs, int mode); // k/dω
// Smeared number N = Σ_y dω f_y n_y; f_values holds f at each mode cell.
Eigen::VectorXd build_N_diag(const FockSpec& fs,
                             const std::vector<double>& f_values);

// Record quadrature A = Σ_y dω g_y (a_y + a†_y).
SparseOp build_A(const FockSpec& fs, const std::vector<double>& g_values);

// Free transport of the record modes: nearest-neighbour hops within each
// time row, H = Σ_<yz> (a†_y a_z + a†_z a_y) / (2 dx²).
SparseOp build_H_pointer(const FockSpec& fs);

// [diag(d), op], computed entrywise from op's sparsity.
SparseOp commutator_with_diag(const Eigen::VectorXd& d, const SparseOp& op);

// Kernel slice values at the mode cells (zero off the slice support).
std::vector<double> kernel_values_at_modes(const FockSpec& fs,
                                           const KernelSlice& slice);

// Product coherent state; guards occupancy |α|² dω < cutoff / 3 per mode so
// the truncated tail is negligible, then normalizes the truncated vector.
FockState coherent_state(const FockSpec& fs,
                         const std::vector<std::complex<double>>& alpha);

// exp(-i J dω A) ψ by Taylor iteration until the term norm falls below
// 1e-16 of the state norm.
void displace(FockState& psi, const SparseOp& A, double J, double domega);

// Elementwise exp(-λ² N² dω + λ N dw) ψ; exact for a diagonal N.
void collapse_kick(FockState& psi, const Eigen::VectorXd& N_diag,
                   double lambda, double dw, double domega);

// One cell advance of the exact dynamics: collapse kick, then displacement.
struct FockStep {
    double J = 0.0;
    double lambda = 0.0;
    double dw = 0.0;
    std::vector<double> f_values; // f(x, mode) of the advanced cell x
    std::vector<double> g_values; // g(x, mode)
};

void evolve_exact(const FockSpec& fs, FockState& psi, const FockStep& step);

// Expectations in a (not necessarily normalized) state.
double norm2(const FockState& psi);
std::complex<double> expectation(const FockState& psi, const SparseOp& op);
double expectation_diag(const FockState& psi, const Eigen::VectorXd& d);
// <a_y> of one mode, the coherent amplitude readout.
std::complex<double> mode_amplitude(const FockSpec& fs, const FockState& psi,
                                    int mode);

// Expected one-step change of an observable under the normalized collapse
// kick, with the increment drawn from the physical law
// dw ~ N(2λ<N>dω, dω). Deterministic Gauss-Hermite integration.
double expectation_drift(const FockSpec& fs, const FockState& psi,
                         const Eigen::VectorXd& N_diag, double lambda,
                         const SparseOp& obs, int quad_points = 40);
double expectation_drift_diag(const FockSpec& fs, const FockState& psi,
                              const Eigen::VectorXd& N_diag, double lambda,
                              const Eigen::VectorXd& obs_diag,
                              int quad_points = 40);

// Gauss-Hermite nodes/weights for ∫ e^{-x²} f(x) dx (physicists' weight).
void gauss_hermite(int n, std::vector<double>& nodes,
                   std::vector<double>& weights);

} // namespace relc
