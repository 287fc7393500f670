#include "relc/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "relc/errors.hpp"

namespace relc {

bool StressTensor::positive_semidefinite() const {
    const double scale = std::abs(t00) + std::abs(t01) + std::abs(t11);
    const double tol = 1e-14 * std::max(1.0, scale * scale);
    return t00 >= -tol && t11 >= -tol && t00 * t11 - t01 * t01 >= -tol;
}

void KernelParams::validate() const {
    if (!(k > 0.0)) throw ConfigError("kernel decay constant k must be > 0");
    if (!tbar_static.positive_semidefinite())
        throw ConfigError("static stress tensor must be positive semidefinite "
                          "(keeps the kernel exponent <= 0)");
    if (!(truncation >= 0.0) || truncation >= 1.0)
        throw ConfigError("kernel truncation must lie in [0, 1)");
}

namespace {

// Invariant contraction T^{μν} Δ_μ Δ_ν for Δ = y - x in signature (+,-):
// lowering the index flips the spatial component, so the cross term picks up
// one sign flip. Identical for x - y (both components flip).
double contraction(const StressTensor& t, double d0, double d1) {
    return t.t00 * d0 * d0 - 2.0 * t.t01 * d0 * d1 + t.t11 * d1 * d1;
}

KernelSlice build_slice(const LatticeSpec& spec, const KernelParams& params,
                        const StressTensor& tbar, const Cell& x, bool future) {
    params.validate();
    KernelSlice slice;
    slice.x = x;
    const auto cone = future ? future_cone(spec, x) : past_cone(spec, x);
    if (cone.empty()) {
        slice.empty_cone = true;
        return slice;
    }
    slice.support.reserve(cone.size());
    double wmax = 0.0;
    for (const Cell& y : cone) {
        const double d0 = (y.t - x.t) * spec.dt;
        const double d1 = (y.i - x.i) * spec.dx;
        const double w = std::exp(-params.k * contraction(tbar, d0, d1));
        slice.support.emplace_back(y, w);
        wmax = std::max(wmax, w);
    }
    // drop negligible tail weights, then renormalize over the survivors
    const double floor = params.truncation * wmax;
    std::erase_if(slice.support,
                  [floor](const auto& e) { return e.second < floor; });
    std::sort(slice.support.begin(), slice.support.end(),
              [](const auto& a, const auto& b) {
                  return a.first.t != b.first.t ? a.first.t < b.first.t
                                                : a.first.i < b.first.i;
              });
    double total = 0.0;
    for (const auto& [y, w] : slice.support) total += w;
    const double norm = 1.0 / (total * spec.domega());
    for (auto& [y, w] : slice.support) w *= norm;
    return slice;
}

} // namespace

double KernelSlice::value_at(const Cell& y) const {
    const auto it = std::lower_bound(
        support.begin(), support.end(), y, [](const auto& e, const Cell& c) {
            return e.first.t != c.t ? e.first.t < c.t : e.first.i < c.i;
        });
    if (it == support.end() || !(it->first == y)) return 0.0;
    return it->second;
}

KernelSlice kernel_g(const LatticeSpec& spec, const KernelParams& params,
                     const StressTensor& tbar_at_x, const Cell& x) {
    return build_slice(spec, params, tbar_at_x, x, /*future=*/true);
}

KernelSlice kernel_f(const LatticeSpec& spec, const KernelParams& params,
                     const StressTensor& tbar_at_x, const Cell& x) {
    return build_slice(spec, params, tbar_at_x, x, /*future=*/false);
}

double eval_g(const LatticeSpec& spec, const KernelParams& params,
              const StressTensor& tbar_at_x, const Cell& x, const Cell& y) {
    if (!in_future_cone(spec, x, y)) return 0.0;
    return kernel_g(spec, params, tbar_at_x, x).value_at(y);
}

double eval_f(const LatticeSpec& spec, const KernelParams& params,
              const StressTensor& tbar_at_x, const Cell& x, const Cell& y) {
    if (!in_past_cone(spec, x, y)) return 0.0;
    return kernel_f(spec, params, tbar_at_x, x).value_at(y);
}

KernelTable::KernelTable(const LatticeSpec& spec, const KernelParams& params)
    : spec_(spec), params_(params) {
    spec_.validate();
    params_.validate();
}

const KernelSlice& KernelTable::lookup(const Cell& x, bool future) const {
    auto& cache = future ? g_slices_ : f_slices_;
    const int key = x.t * spec_.L + x.i;
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = cache.find(key);
    if (it == cache.end()) {
        it = cache.emplace(key, build_slice(spec_, params_, params_.tbar_static,
                                            x, future))
                 .first;
    }
    return it->second;
}

const KernelSlice& KernelTable::f(const Cell& x) const {
    return lookup(x, /*future=*/false);
}

const KernelSlice& KernelTable::g(const Cell& x) const {
    return lookup(x, /*future=*/true);
}

} // namespace relc
