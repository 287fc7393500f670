#include "relc/dynamics.hpp"

#include <algorithm>
#include <cmath>

#include "relc/errors.hpp"
#include "relc/stats.hpp"

namespace relc {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

void weights_into(const BranchState& state, std::vector<double>& w) {
    const int K = state.branches();
    w.resize(K);
    double lmax = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) lmax = std::max(lmax, state.log_mag[k]);
    if (!(lmax > -std::numeric_limits<double>::infinity()))
        throw DomainError("state has no surviving branch");
    double total = 0.0;
    for (int k = 0; k < K; ++k) {
        w[k] = std::exp(2.0 * (state.log_mag[k] - lmax));
        total += w[k];
    }
    for (int k = 0; k < K; ++k) w[k] /= total;
}

double mean_n_at(const BranchState& state, const std::vector<double>& w,
                 const Cell& x) {
    double m = 0.0;
    for (int k = 0; k < state.branches(); ++k)
        m += w[k] * state.profiles[k]->N.at(x);
    return m;
}

// Validates that x is the next advance of the state's surface, then raises it.
void advance_state(const LatticeSpec& spec, BranchState& state,
                   const Cell& x) {
    if (x.i < 0 || x.i >= spec.L)
        throw SequencingError("step cell is outside the lattice");
    if (state.sigma.h[x.i] != x.t)
        throw SequencingError("step cell is not the next advance at its site");
    state.sigma = advance(spec, state.sigma, x.i);
}

void apply_factors(BranchState& state, const CollapseParams& params,
                   double domega, const Cell& x, double increment,
                   double center) {
    const double lambda = params.lambda;
    for (int k = 0; k < state.branches(); ++k) {
        const double n = state.profiles[k]->N.at(x) - center;
        const double drift = params.drop_drift ? 0.0 : n * n;
        const double diffusion = params.drop_diffusion ? 0.0 : n * increment;
        if (params.integrator == Integrator::kExponential) {
            state.log_mag[k] +=
                -lambda * lambda * drift * domega + lambda * diffusion;
        } else {
            const double f = 1.0 -
                             0.5 * lambda * lambda * drift * domega +
                             lambda * diffusion;
            if (f > 0.0) {
                state.log_mag[k] += std::log(f);
            } else if (f < 0.0) {
                state.log_mag[k] += std::log(-f);
                state.phase[k] = std::remainder(state.phase[k] + kPi, 2 * kPi);
            } else {
                state.log_mag[k] = -std::numeric_limits<double>::infinity();
            }
        }
    }
}

void renormalize(BranchState& state) {
    double lmax = -std::numeric_limits<double>::infinity();
    for (double l : state.log_mag) lmax = std::max(lmax, l);
    if (!(lmax > -std::numeric_limits<double>::infinity()))
        throw DomainError("state has no surviving branch");
    double total = 0.0;
    for (double l : state.log_mag) total += std::exp(2.0 * (l - lmax));
    const double half_log = lmax + 0.5 * std::log(total);
    for (double& l : state.log_mag) l -= half_log;
}

} // namespace

void CollapseParams::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw ConfigError("lambda must be finite and non-negative");
    if (!(eps_collapse > 0.0) || !(eps_collapse < 1.0))
        throw ConfigError("eps_collapse must lie in (0, 1)");
}

BranchState make_branch_state(const LatticeSpec& spec, const BranchSet& set) {
    if (set.empty()) throw ConfigError("state needs at least one branch");
    BranchState state;
    state.sigma = bottom_surface(spec);
    bool any = false;
    for (const auto& b : set) {
        if (!b.profile) throw ConfigError("branch has no profile");
        if (b.profile->N.L != spec.L || b.profile->N.T != spec.T)
            throw ConfigError("branch profile does not match the lattice");
        const double mag = std::abs(b.amplitude);
        state.log_mag.push_back(
            mag > 0.0 ? std::log(mag)
                      : -std::numeric_limits<double>::infinity());
        state.phase.push_back(mag > 0.0 ? std::arg(b.amplitude) : 0.0);
        state.profiles.push_back(b.profile);
        any = any || mag > 0.0;
    }
    if (!any) throw ConfigError("all branch amplitudes vanish");
    return state;
}

std::vector<double> branch_weights(const BranchState& state) {
    std::vector<double> w;
    weights_into(state, w);
    return w;
}

double state_norm2(const BranchState& state) {
    double lmax = -std::numeric_limits<double>::infinity();
    for (double l : state.log_mag) lmax = std::max(lmax, l);
    if (!(lmax > -std::numeric_limits<double>::infinity())) return 0.0;
    double total = 0.0;
    for (double l : state.log_mag) total += std::exp(2.0 * (l - lmax));
    return std::exp(2.0 * lmax) * total;
}

double projector_expectation(const BranchState& state, int k) {
    if (k < 0 || k >= state.branches())
        throw ConfigError("projector index out of range");
    return branch_weights(state)[k];
}

double quantum_expectation_N(const BranchState& state, const Cell& x) {
    std::vector<double> w;
    weights_into(state, w);
    return mean_n_at(state, w, x);
}

double variance_N(const BranchState& state, const Cell& x) {
    std::vector<double> w;
    weights_into(state, w);
    double m = 0.0, m2 = 0.0;
    for (int k = 0; k < state.branches(); ++k) {
        const double n = state.profiles[k]->N.at(x);
        m += w[k] * n;
        m2 += w[k] * n * n;
    }
    return std::max(0.0, m2 - m * m);
}

double covariance_N(const BranchState& state, const Cell& x, const Cell& y) {
    std::vector<double> w;
    weights_into(state, w);
    double mx = 0.0, my = 0.0, mxy = 0.0;
    for (int k = 0; k < state.branches(); ++k) {
        const double nx = state.profiles[k]->N.at(x);
        const double ny = state.profiles[k]->N.at(y);
        mx += w[k] * nx;
        my += w[k] * ny;
        mxy += w[k] * nx * ny;
    }
    return mxy - mx * my;
}

double variance_integral(const LatticeSpec& spec, const BranchState& state,
                         int row) {
    if (row < 0 || row >= spec.T)
        throw BoundaryError("variance row is outside the lattice");
    std::vector<double> w;
    weights_into(state, w);
    KahanSum sum;
    for (int i = 0; i < spec.L; ++i) {
        double m = 0.0, m2 = 0.0;
        for (int k = 0; k < state.branches(); ++k) {
            const double n = state.profiles[k]->N.at(i, row);
            m += w[k] * n;
            m2 += w[k] * n * n;
        }
        sum.add(spec.dx * std::max(0.0, m2 - m * m));
    }
    return sum.value();
}

void step_linear(const LatticeSpec& spec, BranchState& state,
                 const CollapseParams& params, const Cell& x, double dw) {
    advance_state(spec, state, x);
    apply_factors(state, params, spec.domega(), x, dw, 0.0);
}

void step_nonlinear(const LatticeSpec& spec, BranchState& state,
                    const CollapseParams& params, const Cell& x, double db) {
    std::vector<double> w;
    weights_into(state, w);
    const double center = mean_n_at(state, w, x);
    advance_state(spec, state, x);
    apply_factors(state, params, spec.domega(), x, db, center);
    renormalize(state);
}

bool region_contains(const LatticeSpec& spec, const Region2D& region,
                     const Cell& x) {
    const double x1 = spec.x1(x.i);
    const double x0 = x.t * spec.dt;
    return x1 >= region.x1_lo && x1 < region.x1_hi && x0 >= region.x0_lo &&
           x0 < region.x0_hi;
}

double path_weight(const PathRecord& rec) { return rec.final_norm2; }

PathRecord run_path(const LatticeSpec& spec, const BranchSet& branches,
                    const CollapseParams& params, const Foliation& foliation,
                    const NoiseField& field, const RunOptions& options) {
    params.validate();
    BranchState state = make_branch_state(spec, branches);
    const int K = state.branches();
    const int L = spec.L;
    const int T = spec.T;
    const double lambda = params.lambda;
    const double domega = spec.domega();

    std::vector<int> cps = options.checkpoints;
    std::sort(cps.begin(), cps.end());
    for (int c : cps)
        if (c < 0 || c > T)
            throw ConfigError("checkpoint level outside [0, T]");

    const bool nonlinear = params.scheme == Scheme::kNonlinear;
    NoiseRole role = options.noise_role;
    if (role == NoiseRole::kAuto)
        role = nonlinear ? NoiseRole::kBField : NoiseRole::kWField;

    PathRecord rec;
    rec.noise_seed = field.seed;
    rec.foliation_seed = foliation.seed;
    rec.random_foliation = foliation.random;

    std::vector<double> w;
    weights_into(state, w);
    // a state that is already past the threshold counts as collapsed at t = 0
    {
        const auto it = std::max_element(w.begin(), w.end());
        if (*it > 1.0 - params.eps_collapse) {
            rec.outcome = static_cast<int>(it - w.begin());
            rec.collapse_time = 0.0;
        }
    }

    std::size_t cp_idx = 0;
    const auto snapshot_checkpoints = [&](int level) {
        while (cp_idx < cps.size() && cps[cp_idx] == level) {
            rec.checkpoint_norm2.push_back(state_norm2(state));
            rec.checkpoint_weights.push_back(w);
            ++cp_idx;
        }
    };

    bool frozen = rec.outcome >= 0 && options.terminate_on_collapse;
    const std::size_t total = foliation.order.size();
    for (std::size_t n = 0; !frozen && n < total; ++n) {
        if (n % static_cast<std::size_t>(L) == 0) {
            const int level = static_cast<int>(n / L);
            if (options.record_levels)
                rec.var_curve.push_back(
                    variance_integral(spec, state, std::min(level, T - 1)));
            snapshot_checkpoints(level);
        }
        const Cell cell = foliation.order[n];

        bool active = false;
        for (int k = 0; k < K; ++k)
            if (state.profiles[k]->N.at(cell) != 0.0) {
                active = true;
                break;
            }
        const bool in_region =
            options.wr_region &&
            region_contains(spec, *options.wr_region, cell);
        if (!active && !options.record_steps && !in_region) {
            advance_state(spec, state, cell);
            continue;
        }

        const double raw = field.sample_dW(cell);
        const bool need_mean = options.record_steps || in_region || nonlinear ||
                               role == NoiseRole::kBField;
        const double mean_n = need_mean ? mean_n_at(state, w, cell) : 0.0;
        const double shift = 2.0 * lambda * mean_n * domega;
        const double dw = role == NoiseRole::kWField ? raw : raw + shift;
        const double db = role == NoiseRole::kWField ? raw - shift : raw;

        if (in_region) {
            rec.wr_dw += dw;
            rec.wr_signal += shift;
        }

        if (nonlinear) {
            advance_state(spec, state, cell);
            apply_factors(state, params, domega, cell, db, mean_n);
            renormalize(state);
        } else {
            advance_state(spec, state, cell);
            apply_factors(state, params, domega, cell, dw, 0.0);
        }
        weights_into(state, w);
        if (options.record_steps)
            rec.steps.push_back({cell, dw, db, mean_n, state_norm2(state),
                                 variance_integral(spec, state, cell.t)});

        if (rec.outcome < 0) {
            const auto it = std::max_element(w.begin(), w.end());
            if (*it > 1.0 - params.eps_collapse) {
                rec.outcome = static_cast<int>(it - w.begin());
                rec.collapse_time = (cell.t + 1) * spec.dt;
                if (options.terminate_on_collapse) frozen = true;
            }
        }
    }

    if (frozen) {
        // declared collapsed: the outcome is definite from here on
        if (options.record_levels)
            rec.var_curve.resize(static_cast<std::size_t>(T) + 1, 0.0);
        const double norm2 = state_norm2(state);
        while (cp_idx < cps.size()) {
            rec.checkpoint_norm2.push_back(norm2);
            rec.checkpoint_weights.push_back(w);
            ++cp_idx;
        }
    } else {
        if (options.record_levels)
            rec.var_curve.push_back(variance_integral(spec, state, T - 1));
        snapshot_checkpoints(T);
    }

    rec.final_norm2 = state_norm2(state);
    rec.final_weights = w;
    return rec;
}

CollapseTimeEstimate collapse_time_estimate(const LatticeSpec& spec,
                                            const BranchState& state,
                                            const CollapseParams& params,
                                            int row) {
    if (row < 0 || row >= spec.T)
        throw BoundaryError("estimate row is outside the lattice");
    if (!(params.lambda > 0.0))
        throw DomainError("collapse-time scales need lambda > 0");
    std::vector<double> w;
    weights_into(state, w);
    const int K = state.branches();

    std::vector<double> mean(spec.L), var(spec.L);
    for (int i = 0; i < spec.L; ++i) {
        double m = 0.0, m2 = 0.0;
        for (int k = 0; k < K; ++k) {
            const double n = state.profiles[k]->N.at(i, row);
            m += w[k] * n;
            m2 += w[k] * n * n;
        }
        mean[i] = m;
        var[i] = std::max(0.0, m2 - m * m);
    }
    const int istar = static_cast<int>(
        std::max_element(var.begin(), var.end()) - var.begin());
    if (var[istar] <= 0.0)
        throw DomainError("branch images never disagree on this row");

    KahanSum cov2;
    for (int i = 0; i < spec.L; ++i) {
        double mxy = 0.0;
        for (int k = 0; k < K; ++k)
            mxy += w[k] * state.profiles[k]->N.at(istar, row) *
                   state.profiles[k]->N.at(i, row);
        const double cov = mxy - mean[istar] * mean[i];
        cov2.add(spec.dx * cov * cov);
    }

    CollapseTimeEstimate est;
    est.direct = var[istar] / (params.lambda * params.lambda * cov2.value());
    if (K == 2) {
        KahanSum diff2;
        for (int i = 0; i < spec.L; ++i) {
            const double d = state.profiles[0]->N.at(i, row) -
                             state.profiles[1]->N.at(i, row);
            diff2.add(spec.dx * d * d);
        }
        if (diff2.value() > 0.0) {
            est.closed_form =
                1.0 / (params.lambda * params.lambda * diff2.value());
            est.closed_form_valid = true;
        }
    }
    return est;
}

double beable_W_region(const LatticeSpec& spec, const NoiseField& field,
                       const Region2D& region) {
    KahanSum sum;
    for (int t = 0; t < spec.T; ++t)
        for (int i = 0; i < spec.L; ++i) {
            const Cell x{i, t};
            if (region_contains(spec, region, x)) sum.add(field.sample_dW(x));
        }
    return sum.value();
}

double beable_T00(const LatticeSpec& spec, const BranchSet& branches,
                  const CollapseParams& params, const NoiseField& field,
                  const Cell& x) {
    BranchState state = make_branch_state(spec, branches);
    const Surface plc = plc_surface(spec, x);
    const double lambda = params.lambda;
    const double domega = spec.domega();
    for (int i = 0; i < spec.L; ++i) {
        for (int t = 0; t < plc.h[i]; ++t) {
            const Cell y{i, t};
            bool active = false;
            for (const auto& p : state.profiles)
                if (p->N.at(y) != 0.0) {
                    active = true;
                    break;
                }
            if (!active) continue;
            const double dw = field.sample_dW(y);
            for (int k = 0; k < state.branches(); ++k) {
                const double n = state.profiles[k]->N.at(y);
                state.log_mag[k] +=
                    -lambda * lambda * n * n * domega + lambda * n * dw;
            }
        }
    }
    std::vector<double> w;
    weights_into(state, w);
    double e = 0.0;
    for (int k = 0; k < state.branches(); ++k)
        e += w[k] * state.profiles[k]->E.at(x);
    return e;
}

} // namespace relc
