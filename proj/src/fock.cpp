#include "relc/fock.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "relc/errors.hpp"

namespace relc {

namespace {

constexpr double kSqrtPi = 1.7724538509055160272981674833411452;

std::size_t stride_of(const FockSpec& fs, int mode) {
    std::size_t s = 1;
    for (int m = 0; m < mode; ++m) s *= static_cast<std::size_t>(fs.levels());
    return s;
}

void check_mode_values(const FockSpec& fs, const std::vector<double>& v,
                       const char* what) {
    if (v.size() != fs.modes.size())
        throw ConfigError(std::string(what) +
                          " needs one value per mode cell");
}

// real sparse operator applied to a complex state, via the two real parts
FockState apply_real_op(const SparseOp& op, const FockState& psi) {
    const Eigen::VectorXd re = psi.real();
    const Eigen::VectorXd im = psi.imag();
    const Eigen::VectorXd ore = op * re;
    const Eigen::VectorXd oim = op * im;
    FockState out(psi.size());
    out.real() = ore;
    out.imag() = oim;
    return out;
}

} // namespace

std::size_t FockSpec::dim() const {
    std::size_t d = 1;
    for (std::size_t m = 0; m < modes.size(); ++m) {
        d *= static_cast<std::size_t>(levels());
        if (d > 100000000ull) return d; // already far past any guard
    }
    return d;
}

int FockSpec::mode_index(const Cell& c) const {
    for (std::size_t m = 0; m < modes.size(); ++m)
        if (modes[m].i == c.i && modes[m].t == c.t) return static_cast<int>(m);
    return -1;
}

int FockSpec::digit(std::size_t index, int m) const {
    return static_cast<int>(index / stride_of(*this, m) %
                            static_cast<std::size_t>(levels()));
}

void FockSpec::validate() const {
    lattice.validate();
    if (modes.empty()) throw ConfigError("mode list is empty");
    if (cutoff < 1) throw ConfigError("cutoff must be at least 1");
    for (std::size_t m = 0; m < modes.size(); ++m) {
        const Cell& c = modes[m];
        if (c.i < 0 || c.i >= lattice.L || c.t < 0 || c.t >= lattice.T)
            throw ConfigError("mode cell outside the lattice");
        for (std::size_t k = m + 1; k < modes.size(); ++k)
            if (modes[k].i == c.i && modes[k].t == c.t)
                throw ConfigError("duplicate mode cell");
    }
    if (dim() > 1000000ull)
        throw ResourceError("state dimension exceeds 1e6");
}

SparseOp build_ladder(const FockSpec& fs, int mode) {
    const std::size_t d = fs.dim();
    const std::size_t stride = stride_of(fs, mode);
    const double domega = fs.lattice.domega();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(d);
    for (std::size_t I = 0; I < d; ++I) {
        const int k = fs.digit(I, mode);
        if (k > 0)
            trip.emplace_back(static_cast<int>(I - stride),
                              static_cast<int>(I), std::sqrt(k / domega));
    }
    SparseOp a(static_cast<int>(d), static_cast<int>(d));
    a.setFromTriplets(trip.begin(), trip.end());
    return a;
}

Eigen::VectorXd build_n_diag(const FockSpec& fs, int mode) {
    const std::size_t d = fs.dim();
    const double domega = fs.lattice.domega();
    Eigen::VectorXd v(static_cast<Eigen::Index>(d));
    for (std::size_t I = 0; I < d; ++I)
        v[static_cast<Eigen::Index>(I)] = fs.digit(I, mode) / domega;
    return v;
}

Eigen::VectorXd build_N_diag(const FockSpec& fs,
                             const std::vector<double>& f_values) {
    check_mode_values(fs, f_values, "smeared-number diagonal");
    const std::size_t d = fs.dim();
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    for (std::size_t I = 0; I < d; ++I) {
        double s = 0.0;
        for (std::size_t m = 0; m < fs.modes.size(); ++m)
            s += f_values[m] * fs.digit(I, static_cast<int>(m));
        v[static_cast<Eigen::Index>(I)] = s;
    }
    return v;
}

SparseOp build_A(const FockSpec& fs, const std::vector<double>& g_values) {
    check_mode_values(fs, g_values, "quadrature");
    const std::size_t d = fs.dim();
    const double domega = fs.lattice.domega();
    std::vector<Eigen::Triplet<double>> trip;
    for (std::size_t m = 0; m < fs.modes.size(); ++m) {
        if (g_values[m] == 0.0) continue;
        const std::size_t stride = stride_of(fs, static_cast<int>(m));
        for (std::size_t I = 0; I < d; ++I) {
            const int k = fs.digit(I, static_cast<int>(m));
            if (k == 0) continue;
            const double v = domega * g_values[m] * std::sqrt(k / domega);
            trip.emplace_back(static_cast<int>(I - stride),
                              static_cast<int>(I), v);
            trip.emplace_back(static_cast<int>(I),
                              static_cast<int>(I - stride), v);
        }
    }
    SparseOp A(static_cast<int>(d), static_cast<int>(d));
    A.setFromTriplets(trip.begin(), trip.end());
    return A;
}

SparseOp build_H_pointer(const FockSpec& fs) {
    const std::size_t d = fs.dim();
    const double c = 1.0 / (2.0 * fs.lattice.dx * fs.lattice.dx);
    const double domega = fs.lattice.domega();
    std::vector<Eigen::Triplet<double>> trip;
    for (std::size_t y = 0; y < fs.modes.size(); ++y)
        for (std::size_t z = 0; z < fs.modes.size(); ++z) {
            if (fs.modes[y].t != fs.modes[z].t) continue;
            if (std::abs(fs.modes[y].i - fs.modes[z].i) != 1) continue;
            // hop z -> y: a†_y a_z, both directions covered by the loop
            const std::size_t sy = stride_of(fs, static_cast<int>(y));
            const std::size_t sz = stride_of(fs, static_cast<int>(z));
            for (std::size_t I = 0; I < d; ++I) {
                const int ky = fs.digit(I, static_cast<int>(y));
                const int kz = fs.digit(I, static_cast<int>(z));
                if (kz == 0 || ky == fs.cutoff) continue;
                const std::size_t J = I + sy - sz;
                const double v =
                    c * std::sqrt(static_cast<double>(kz) * (ky + 1)) / domega;
                trip.emplace_back(static_cast<int>(J), static_cast<int>(I), v);
            }
        }
    SparseOp H(static_cast<int>(d), static_cast<int>(d));
    H.setFromTriplets(trip.begin(), trip.end());
    return H;
}

SparseOp commutator_with_diag(const Eigen::VectorXd& d, const SparseOp& op) {
    std::vector<Eigen::Triplet<double>> trip;
    for (int outer = 0; outer < op.outerSize(); ++outer)
        for (SparseOp::InnerIterator it(op, outer); it; ++it) {
            const double v = (d[it.row()] - d[it.col()]) * it.value();
            if (v != 0.0) trip.emplace_back(it.row(), it.col(), v);
        }
    SparseOp out(op.rows(), op.cols());
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
}

std::vector<double> kernel_values_at_modes(const FockSpec& fs,
                                           const KernelSlice& slice) {
    std::vector<double> v(fs.modes.size());
    for (std::size_t m = 0; m < fs.modes.size(); ++m)
        v[m] = slice.value_at(fs.modes[m]);
    return v;
}

FockState coherent_state(const FockSpec& fs,
                         const std::vector<std::complex<double>>& alpha) {
    if (alpha.size() != fs.modes.size())
        throw ConfigError("coherent state needs one amplitude per mode");
    const double domega = fs.lattice.domega();
    std::vector<std::vector<std::complex<double>>> columns;
    for (const auto& a : alpha) {
        const double occ = std::norm(a) * domega;
        if (occ > fs.cutoff / 3.0)
            throw ResourceError(
                "coherent occupancy too close to the cutoff: " +
                std::to_string(occ) + " vs " + std::to_string(fs.cutoff));
        std::vector<std::complex<double>> col(fs.levels());
        col[0] = 1.0;
        for (int k = 1; k < fs.levels(); ++k)
            col[k] = col[k - 1] * a * std::sqrt(domega / k);
        columns.push_back(std::move(col));
    }
    const std::size_t d = fs.dim();
    FockState psi(static_cast<Eigen::Index>(d));
    for (std::size_t I = 0; I < d; ++I) {
        std::complex<double> v = 1.0;
        for (std::size_t m = 0; m < fs.modes.size(); ++m)
            v *= columns[m][fs.digit(I, static_cast<int>(m))];
        psi[static_cast<Eigen::Index>(I)] = v;
    }
    psi /= psi.norm();
    return psi;
}

void displace(FockState& psi, const SparseOp& A, double J, double domega) {
    if (J == 0.0) return;
    const std::complex<double> scale(0.0, -J * domega);
    FockState sum = psi;
    FockState term = psi;
    for (int m = 1; m <= 400; ++m) {
        term = (scale / static_cast<double>(m)) * apply_real_op(A, term);
        sum += term;
        if (term.norm() <= 1e-16 * sum.norm()) {
            psi = sum;
            return;
        }
    }
    throw ResourceError("displacement series failed to converge");
}

void collapse_kick(FockState& psi, const Eigen::VectorXd& N_diag,
                   double lambda, double dw, double domega) {
    if (lambda == 0.0) return;
    for (Eigen::Index I = 0; I < psi.size(); ++I) {
        const double n = N_diag[I];
        psi[I] *= std::exp(-lambda * lambda * n * n * domega +
                           lambda * n * dw);
    }
}

void evolve_exact(const FockSpec& fs, FockState& psi, const FockStep& step) {
    check_mode_values(fs, step.f_values, "step");
    check_mode_values(fs, step.g_values, "step");
    if (psi.size() != static_cast<Eigen::Index>(fs.dim()))
        throw ConfigError("state dimension does not match the mode set");
    const double domega = fs.lattice.domega();
    if (step.lambda != 0.0) {
        const Eigen::VectorXd N = build_N_diag(fs, step.f_values);
        collapse_kick(psi, N, step.lambda, step.dw, domega);
    }
    if (step.J != 0.0) {
        const SparseOp A = build_A(fs, step.g_values);
        displace(psi, A, step.J, domega);
    }
}

double norm2(const FockState& psi) { return psi.squaredNorm(); }

std::complex<double> expectation(const FockState& psi, const SparseOp& op) {
    // raw bilinear <ψ| op |ψ>; divide by norm2 to normalize
    return psi.dot(apply_real_op(op, psi));
}

double expectation_diag(const FockState& psi, const Eigen::VectorXd& d) {
    double s = 0.0;
    for (Eigen::Index I = 0; I < psi.size(); ++I)
        s += d[I] * std::norm(psi[I]);
    return s;
}

std::complex<double> mode_amplitude(const FockSpec& fs, const FockState& psi,
                                    int mode) {
    const std::size_t stride = stride_of(fs, mode);
    const double domega = fs.lattice.domega();
    std::complex<double> s = 0.0;
    for (std::size_t I = 0; I < static_cast<std::size_t>(psi.size()); ++I) {
        const int k = fs.digit(I, mode);
        if (k == 0) continue;
        s += std::conj(psi[static_cast<Eigen::Index>(I - stride)]) *
             std::sqrt(k / domega) * psi[static_cast<Eigen::Index>(I)];
    }
    return s; // raw bilinear <ψ| a |ψ>
}

void gauss_hermite(int n, std::vector<double>& nodes,
                   std::vector<double>& weights) {
    if (n < 1) throw ConfigError("quadrature needs at least one node");
    nodes.assign(n, 0.0);
    weights.assign(n, 0.0);
    const double tol = 1e-14;
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z;
        if (i == 0) {
            z = std::sqrt(2.0 * n + 1) -
                1.85575 * std::pow(2.0 * n + 1, -1.0 / 6.0);
        } else if (i == 1) {
            z = nodes[n - 1] - 1.14 * std::pow(n, 0.426) / nodes[n - 1];
        } else if (i == 2) {
            z = 1.86 * nodes[n - 2] - 0.86 * nodes[n - 1];
        } else if (i == 3) {
            z = 1.91 * nodes[n - 3] - 0.91 * nodes[n - 2];
        } else {
            z = 2.0 * nodes[n - i] - nodes[n - i + 1];
        }
        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            // orthonormal Hermite recurrence
            double p1 = std::pow(kSqrtPi, -0.5);
            double p2 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / (j + 1)) * p2 -
                     std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            const double dz = p1 / pp;
            z -= dz;
            if (std::abs(dz) <= tol) break;
        }
        nodes[n - 1 - i] = z;
        nodes[i] = -z;
        weights[n - 1 - i] = 2.0 / (pp * pp);
        weights[i] = weights[n - 1 - i];
    }
}

namespace {

double drift_impl(const FockSpec& fs, const FockState& psi,
                  const Eigen::VectorXd& N_diag, double lambda,
                  const std::function<double(const FockState&)>& raw_obs,
                  int quad_points) {
    const double domega = fs.lattice.domega();
    const double base_norm2 = psi.squaredNorm();
    const double base = raw_obs(psi) / base_norm2;
    if (lambda == 0.0) return 0.0;
    double mean_n = 0.0;
    for (Eigen::Index I = 0; I < psi.size(); ++I)
        mean_n += N_diag[I] * std::norm(psi[I]);
    mean_n /= base_norm2;
    const double mu = 2.0 * lambda * mean_n * domega;

    std::vector<double> nodes, weights;
    gauss_hermite(quad_points, nodes, weights);
    double acc = 0.0;
    FockState kicked(psi.size());
    for (int q = 0; q < quad_points; ++q) {
        const double dw = mu + std::sqrt(2.0 * domega) * nodes[q];
        kicked = psi;
        collapse_kick(kicked, N_diag, lambda, dw, domega);
        const double val = raw_obs(kicked) / kicked.squaredNorm();
        acc += weights[q] / kSqrtPi * (val - base);
    }
    return acc;
}

} // namespace

double expectation_drift(const FockSpec& fs, const FockState& psi,
                         const Eigen::VectorXd& N_diag, double lambda,
                         const SparseOp& obs, int quad_points) {
    return drift_impl(
        fs, psi, N_diag, lambda,
        [&](const FockState& s) { return expectation(s, obs).real(); },
        quad_points);
}

double expectation_drift_diag(const FockSpec& fs, const FockState& psi,
                              const Eigen::VectorXd& N_diag, double lambda,
                              const Eigen::VectorXd& obs_diag,
                              int quad_points) {
    return drift_impl(
        fs, psi, N_diag, lambda,
        [&](const FockState& s) { return expectation_diag(s, obs_diag); },
        quad_points);
}

} // namespace relc
