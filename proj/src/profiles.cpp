#include "relc/profiles.hpp"

#include <algorithm>
#include <cmath>

#include "relc/errors.hpp"

namespace relc {

Grid<double> fill_regions(const LatticeSpec& spec,
                          const std::vector<SourceRegion>& regions) {
    Grid<double> grid(spec);
    for (const auto& r : regions) {
        if (!(r.x1_hi >= r.x1_lo))
            throw ConfigError("source region has x1_hi < x1_lo");
        const int t_hi = std::min(r.t_hi, spec.T);
        for (int i = 0; i < spec.L; ++i) {
            const double x1 = spec.x1(i);
            if (x1 < r.x1_lo || x1 >= r.x1_hi) continue;
            for (int t = std::max(0, r.t_lo); t < t_hi; ++t)
                grid.at(i, t) += r.value;
        }
    }
    return grid;
}

AlphaField accumulate_alpha(const LatticeSpec& spec, const Grid<double>& J,
                            const Surface& from, const Surface& to,
                            const KernelTable& kernels) {
    if (!precedes(from, to))
        throw SequencingError("alpha accumulation segment must run forward");
    AlphaField field;
    field.alpha = Grid<std::complex<double>>(spec);
    field.sigma = to;
    const double domega = spec.domega();
    for (int i = 0; i < spec.L; ++i) {
        for (int t = from.h[i]; t < to.h[i]; ++t) {
            const double j = J.at(i, t);
            if (j == 0.0) continue;
            const KernelSlice& g = kernels.g(Cell{i, t});
            for (const auto& [y, w] : g.support)
                field.alpha.at(y) += std::complex<double>(0.0, -domega * j * w);
        }
    }
    return field;
}

namespace {

double smeared_norm(const LatticeSpec& spec, const AlphaField& alpha,
                    const Cell& x, const KernelTable& kernels, bool squared) {
    const Surface plc = plc_surface(spec, x);
    if (!precedes(plc, alpha.sigma))
        throw SequencingError(
            "record not accumulated far enough to evaluate this point");
    const KernelSlice& f = kernels.f(x);
    const double domega = spec.domega();
    double sum = 0.0;
    for (const auto& [y, w] : f.support) {
        const double a2 = std::norm(alpha.alpha.at(y));
        sum += domega * (squared ? w * w : w) * a2;
    }
    return sum;
}

} // namespace

double n_expectation(const LatticeSpec& spec, const AlphaField& alpha,
                     const Cell& x, const KernelTable& kernels) {
    return smeared_norm(spec, alpha, x, kernels, /*squared=*/false);
}

double n_variance(const LatticeSpec& spec, const AlphaField& alpha,
                  const Cell& x, const KernelTable& kernels) {
    return smeared_norm(spec, alpha, x, kernels, /*squared=*/true);
}

double kernel_correlation_length(const KernelParams& params) {
    const double rate = params.k * params.tbar_static.t00;
    if (rate <= 0.0) return std::numeric_limits<double>::infinity();
    return 1.0 / std::sqrt(rate);
}

double min_feature_width(const LatticeSpec& spec, const Grid<double>& J) {
    int min_run = std::numeric_limits<int>::max();
    for (int t = 0; t < spec.T; ++t) {
        int run = 0;
        for (int i = 0; i <= spec.L; ++i) {
            if (i < spec.L && J.at(i, t) != 0.0) {
                ++run;
            } else if (run > 0) {
                min_run = std::min(min_run, run);
                run = 0;
            }
        }
    }
    if (min_run == std::numeric_limits<int>::max())
        return std::numeric_limits<double>::infinity();
    return min_run * spec.dx;
}

BranchProfile branch_image(const LatticeSpec& spec, const BranchProfile& in,
                           const KernelTable& kernels, NMode mode,
                           double guard_ratio) {
    BranchProfile out = in;
    out.N = Grid<double>(spec);
    if (mode == NMode::kPlateau) {
        const double corr = kernel_correlation_length(kernels.params());
        const double width = min_feature_width(spec, in.J);
        if (corr > guard_ratio * width)
            throw ConfigError(
                "plateau idealization rejected: kernel correlation length " +
                std::to_string(corr) + " exceeds " +
                std::to_string(guard_ratio) + " of the smallest feature width " +
                std::to_string(width));
        for (int t = 0; t < spec.T; ++t)
            for (int i = 0; i < spec.L; ++i) {
                const double j = in.J.at(i, t);
                out.N.at(i, t) = j * j;
            }
        return out;
    }
    const AlphaField alpha = accumulate_alpha(
        spec, in.J, bottom_surface(spec), top_surface(spec), kernels);
    for (int t = 0; t < spec.T; ++t)
        for (int i = 0; i < spec.L; ++i)
            out.N.at(i, t) = n_expectation(spec, alpha, Cell{i, t}, kernels);
    return out;
}

} // namespace relc
