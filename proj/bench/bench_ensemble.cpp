// Benchmark of the two ensemble runners on the default two-lump experiment:
// the serial reference implementation against the OpenMP production runner.
// The run doubles as an equality assertion — the parallel runner must
// reproduce the serial results bit for bit or the benchmark exits nonzero.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "relc/config.hpp"
#include "relc/dynamics.hpp"
#include "relc/ensemble.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_s(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           (a.empty() ||
            std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

bool same_numbers(const relc::EnsembleResult& a,
                  const relc::EnsembleResult& b) {
    return a.outcomes == b.outcomes && bits_equal(a.var_mean, b.var_mean) &&
           bits_equal(a.var_se, b.var_se) &&
           bits_equal(a.final_norm2, b.final_norm2) &&
           bits_equal(a.final_weights, b.final_weights) &&
           bits_equal(a.collapse_times, b.collapse_times);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ensemble runner benchmark: serial reference vs OpenMP"};
    int paths = 200;
    int levels = 200;
    int workers = 0;
    std::uint64_t seed = 1;
    app.add_option("--paths", paths, "paths per run")
        ->check(CLI::PositiveNumber);
    app.add_option("--levels", levels, "time levels (truncated horizon)")
        ->check(CLI::PositiveNumber);
    app.add_option("--workers", workers, "parallel worker count, 0 = max")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--seed", seed, "base seed");
    CLI11_PARSE(app, argc, argv);

    relc::RunConfig cfg = relc::parse_config("{}");
    cfg.experiment.sigma_final = levels;
    const relc::LatticeSpec spec = cfg.run_lattice();
    const relc::BranchSet branches = cfg.build_branches();
    const relc::CollapseParams params = cfg.collapse;

    relc::EnsembleOptions opt;
    opt.n_paths = paths;
    opt.base_seed = seed;
    opt.run.record_levels = true;
    opt.run.terminate_on_collapse = false; // fixed work per path

    const double advances =
        static_cast<double>(paths) * levels * spec.L;

    auto t0 = Clock::now();
    const relc::EnsembleResult serial =
        relc::run_ensemble_serial(spec, branches, params, opt);
    const double t_serial = elapsed_s(t0);

    opt.workers = workers;
    t0 = Clock::now();
    const relc::EnsembleResult parallel =
        relc::run_ensemble(spec, branches, params, opt);
    const double t_parallel = elapsed_s(t0);

    int used = workers;
#ifdef _OPENMP
    if (used == 0) used = omp_get_max_threads();
#else
    if (used == 0) used = 1;
#endif

    std::printf("paths %d, levels %d, lattice %d x %d (%.3g cell advances)\n",
                paths, levels, spec.L, spec.T, advances);
    std::printf("serial reference : %8.3f s  (%.3g advances/s)\n", t_serial,
                advances / t_serial);
    std::printf("parallel, %2d thr : %8.3f s  (%.3g advances/s, speedup "
                "%.2fx)\n",
                used, t_parallel, advances / t_parallel,
                t_serial / t_parallel);

    if (!same_numbers(serial, parallel)) {
        std::printf("MISMATCH: parallel runner diverged from the serial "
                    "reference\n");
        return 1;
    }
    std::printf("parallel output matches the serial reference bit for bit\n");
    return 0;
}
