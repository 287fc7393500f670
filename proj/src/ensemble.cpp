#include "relc/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "relc/errors.hpp"
#include "relc/noise.hpp"
#include "relc/stats.hpp"

namespace relc {

namespace {

constexpr int kBlock = 32; // paths per parallel block, bounds peak memory

struct SampleMoments {
    KahanSum sum;
    KahanSum sum2;

    void add(double v) {
        sum.add(v);
        sum2.add(v * v);
    }
    double mean(int n) const { return n > 0 ? sum.value() / n : 0.0; }
    double se(int n) const {
        if (n < 2) return 0.0;
        const double m = mean(n);
        const double var =
            std::max(0.0, (sum2.value() - n * m * m) / (n - 1));
        return std::sqrt(var / n);
    }
};

// Serial, path-ordered reduction of finished records.
struct Aggregator {
    int n_branches = 0;
    int n_paths = 0;
    bool record_levels = false;
    bool has_region = false;

    std::vector<SampleMoments> var_levels;       // per level
    std::vector<SampleMoments> cp_norm2;         // per checkpoint
    std::vector<std::vector<SampleMoments>> cp_weight; // [cp][branch]

    EnsembleResult out;

    Aggregator(const LatticeSpec& spec, int branches,
               const EnsembleOptions& options) {
        n_branches = branches;
        record_levels = options.run.record_levels;
        has_region = options.run.wr_region.has_value();
        if (record_levels)
            var_levels.assign(static_cast<std::size_t>(spec.T) + 1, {});
        out.checkpoints = options.run.checkpoints;
        std::sort(out.checkpoints.begin(), out.checkpoints.end());
        cp_norm2.assign(out.checkpoints.size(), {});
        cp_weight.assign(out.checkpoints.size(),
                         std::vector<SampleMoments>(branches));
        out.n_branches = branches;
        out.outcome_counts.assign(static_cast<std::size_t>(branches) + 1, 0);
    }

    void add(const PathRecord& rec) {
        if (n_paths == 0 && record_levels) out.example_var = rec.var_curve;
        ++n_paths;
        if (record_levels)
            for (std::size_t l = 0; l < rec.var_curve.size(); ++l)
                var_levels[l].add(rec.var_curve[l]);
        for (std::size_t c = 0; c < out.checkpoints.size(); ++c) {
            cp_norm2[c].add(rec.checkpoint_norm2[c]);
            for (int j = 0; j < n_branches; ++j)
                cp_weight[c][j].add(rec.checkpoint_weights[c][j]);
        }
        const int slot = rec.outcome < 0 ? n_branches : rec.outcome;
        ++out.outcome_counts[slot];
        out.outcomes.push_back(rec.outcome);
        out.collapse_times.push_back(rec.collapse_time);
        out.final_norm2.push_back(rec.final_norm2);
        for (int j = 0; j < n_branches; ++j)
            out.final_weights.push_back(rec.final_weights[j]);
        if (has_region) {
            out.wr_dw.push_back(rec.wr_dw);
            out.wr_signal.push_back(rec.wr_signal);
        }
    }

    EnsembleResult finish() {
        out.n_paths = n_paths;
        if (record_levels) {
            out.var_mean.resize(var_levels.size());
            out.var_se.resize(var_levels.size());
            for (std::size_t l = 0; l < var_levels.size(); ++l) {
                out.var_mean[l] = var_levels[l].mean(n_paths);
                out.var_se[l] = var_levels[l].se(n_paths);
            }
        }
        out.cp_norm2_mean.resize(cp_norm2.size());
        out.cp_norm2_se.resize(cp_norm2.size());
        out.cp_weight_mean.assign(cp_norm2.size(),
                                  std::vector<double>(n_branches));
        out.cp_weight_se = out.cp_weight_mean;
        for (std::size_t c = 0; c < cp_norm2.size(); ++c) {
            out.cp_norm2_mean[c] = cp_norm2[c].mean(n_paths);
            out.cp_norm2_se[c] = cp_norm2[c].se(n_paths);
            for (int j = 0; j < n_branches; ++j) {
                out.cp_weight_mean[c][j] = cp_weight[c][j].mean(n_paths);
                out.cp_weight_se[c][j] = cp_weight[c][j].se(n_paths);
            }
        }
        return std::move(out);
    }
};

PathRecord one_path(const LatticeSpec& spec, const BranchSet& branches,
                    const CollapseParams& params,
                    const EnsembleOptions& options, int p) {
    NoiseField field;
    field.seed = mix_seed(options.base_seed, static_cast<std::uint64_t>(p),
                          kStreamNoise);
    field.spec = spec;
    field.variance_scale = options.variance_scale;
    const Foliation fol =
        options.random_foliations
            ? random_foliation(spec,
                               mix_seed(options.base_seed,
                                        static_cast<std::uint64_t>(p),
                                        kStreamFoliation))
            : standard_foliation(spec);
    return run_path(spec, branches, params, fol, field, options.run);
}

void check_options(const EnsembleOptions& options) {
    if (options.n_paths < 1)
        throw ConfigError("ensemble needs at least one path");
    if (options.run.record_steps)
        throw ConfigError(
            "per-advance traces are not kept across an ensemble");
}

EnsembleResult drive(const LatticeSpec& spec, const BranchSet& branches,
                     const CollapseParams& params,
                     const EnsembleOptions& options, bool parallel) {
    check_options(options);
    params.validate();
    // surface branch/profile validation before any worker starts
    make_branch_state(spec, branches);

    Aggregator agg(spec, static_cast<int>(branches.size()), options);
    agg.out.reweight_dropped = params.drop_reweight;

    std::vector<PathRecord> block(kBlock);
    for (int base = 0; base < options.n_paths; base += kBlock) {
        const int m = std::min(kBlock, options.n_paths - base);
        if (parallel) {
#ifdef _OPENMP
            const int threads = options.workers > 0 ? options.workers
                                                    : omp_get_max_threads();
#else
            const int threads = 1;
#endif
#pragma omp parallel for schedule(static) num_threads(threads)
            for (int q = 0; q < m; ++q)
                block[q] = one_path(spec, branches, params, options, base + q);
        } else {
            for (int q = 0; q < m; ++q)
                block[q] = one_path(spec, branches, params, options, base + q);
        }
        for (int q = 0; q < m; ++q) agg.add(block[q]);
    }
    return agg.finish();
}

} // namespace

double EnsembleResult::weight_at(int path, int j) const {
    return final_weights[static_cast<std::size_t>(path) * n_branches + j];
}

int EnsembleResult::decided() const {
    return n_paths - outcome_counts.back();
}

BornEstimate born_from_outcomes(const EnsembleResult& r) {
    BornEstimate est;
    const int n = r.decided();
    for (int j = 0; j < r.n_branches; ++j) {
        if (n == 0) {
            est.value.push_back(std::numeric_limits<double>::quiet_NaN());
            est.se.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        const double p = static_cast<double>(r.outcome_counts[j]) / n;
        est.value.push_back(p);
        est.se.push_back(std::sqrt(p * (1.0 - p) / n));
    }
    return est;
}

BornEstimate born_from_weights(const EnsembleResult& r) {
    BornEstimate est;
    for (int j = 0; j < r.n_branches; ++j) {
        SampleMoments m;
        for (int p = 0; p < r.n_paths; ++p) m.add(r.weight_at(p, j));
        est.value.push_back(m.mean(r.n_paths));
        est.se.push_back(m.se(r.n_paths));
    }
    return est;
}

BornEstimate born_reweighted(const EnsembleResult& r) {
    BornEstimate est;
    KahanSum den;
    for (int p = 0; p < r.n_paths; ++p)
        den.add(r.reweight_dropped ? 1.0 : r.final_norm2[p]);
    for (int j = 0; j < r.n_branches; ++j) {
        KahanSum num;
        for (int p = 0; p < r.n_paths; ++p) {
            const double w = r.reweight_dropped ? 1.0 : r.final_norm2[p];
            num.add(w * r.weight_at(p, j));
        }
        const double ratio = num.value() / den.value();
        KahanSum dev2;
        for (int p = 0; p < r.n_paths; ++p) {
            const double w = r.reweight_dropped ? 1.0 : r.final_norm2[p];
            const double d = w * (r.weight_at(p, j) - ratio);
            dev2.add(d * d);
        }
        est.value.push_back(ratio);
        est.se.push_back(std::sqrt(dev2.value()) / den.value());
    }
    return est;
}

EnsembleResult run_ensemble_serial(const LatticeSpec& spec,
                                   const BranchSet& branches,
                                   const CollapseParams& params,
                                   const EnsembleOptions& options) {
    return drive(spec, branches, params, options, false);
}

EnsembleResult run_ensemble(const LatticeSpec& spec, const BranchSet& branches,
                            const CollapseParams& params,
                            const EnsembleOptions& options) {
    return drive(spec, branches, params, options, true);
}

} // namespace relc
