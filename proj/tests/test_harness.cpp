#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "relc/config.hpp"
#include "relc/dynamics.hpp"
#include "relc/ensemble.hpp"
#include "relc/errors.hpp"
#include "relc/output.hpp"
#include "relc/stats.hpp"

using namespace relc;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Helpers: scratch directories, subprocess driving, bitwise comparison.
// ---------------------------------------------------------------------------

struct ScratchDir {
    fs::path root;
    explicit ScratchDir(const std::string& tag) {
        root = fs::temp_directory_path() /
               ("relc_harness_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(root, ec);
    }
    std::string path(const std::string& name) const {
        return (root / name).string();
    }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), "cannot open ", path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    REQUIRE(out.good());
}

// The CLI binary sits next to the test executable in the build directory,
// which is also the working directory ctest runs us from.
std::string cli_binary() {
    if (const char* env = std::getenv("RELC_BIN")) return env;
    return "./relc";
}

int run_cli(const std::string& args) {
    const std::string cmd = cli_binary() + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           (a.empty() ||
            std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

void require_same_result(const EnsembleResult& a, const EnsembleResult& b) {
    REQUIRE(a.n_paths == b.n_paths);
    REQUIRE(a.n_branches == b.n_branches);
    CHECK(a.outcomes == b.outcomes);
    CHECK(a.outcome_counts == b.outcome_counts);
    CHECK(a.checkpoints == b.checkpoints);
    CHECK(bits_equal(a.var_mean, b.var_mean));
    CHECK(bits_equal(a.var_se, b.var_se));
    CHECK(bits_equal(a.example_var, b.example_var));
    CHECK(bits_equal(a.cp_norm2_mean, b.cp_norm2_mean));
    CHECK(bits_equal(a.cp_norm2_se, b.cp_norm2_se));
    REQUIRE(a.cp_weight_mean.size() == b.cp_weight_mean.size());
    for (std::size_t c = 0; c < a.cp_weight_mean.size(); ++c) {
        CHECK(bits_equal(a.cp_weight_mean[c], b.cp_weight_mean[c]));
        CHECK(bits_equal(a.cp_weight_se[c], b.cp_weight_se[c]));
    }
    CHECK(bits_equal(a.collapse_times, b.collapse_times));
    CHECK(bits_equal(a.final_norm2, b.final_norm2));
    CHECK(bits_equal(a.final_weights, b.final_weights));
    CHECK(bits_equal(a.wr_dw, b.wr_dw));
    CHECK(bits_equal(a.wr_signal, b.wr_signal));
}

std::shared_ptr<const BranchProfile> flat_profile(const LatticeSpec& spec,
                                                  double n_value) {
    BranchProfile p;
    p.J = Grid<double>(spec);
    p.N = Grid<double>(spec);
    p.E = Grid<double>(spec);
    for (auto& x : p.N.v) x = n_value;
    return std::make_shared<const BranchProfile>(std::move(p));
}

std::shared_ptr<const BranchProfile> wavy_profile(const LatticeSpec& spec,
                                                  double base, double swing,
                                                  double shift) {
    BranchProfile p;
    p.J = Grid<double>(spec);
    p.N = Grid<double>(spec);
    p.E = Grid<double>(spec);
    for (int i = 0; i < spec.L; ++i)
        for (int t = 0; t < spec.T; ++t)
            p.N.at(i, t) = base + swing * std::sin(shift + 0.7 * i + 0.3 * t);
    return std::make_shared<const BranchProfile>(std::move(p));
}

// Three flat branches with distinct images; amplitudes carry the target
// probabilities {0.5, 0.3, 0.2}.
BranchSet three_flat_branches(const LatticeSpec& spec, double n0, double n1,
                              double n2) {
    BranchSet set;
    set.push_back(Branch{std::sqrt(0.5), flat_profile(spec, n0)});
    set.push_back(Branch{std::sqrt(0.3), flat_profile(spec, n1)});
    set.push_back(Branch{std::sqrt(0.2), flat_profile(spec, n2)});
    return set;
}

// A small two-lump configuration that keeps CLI runs fast while staying in
// the statistically healthy regime (per-cell weight kicks well under one,
// collapse within ~30 levels, importance weights with O(1) log-variance).
// The explicit kernel strength keeps the plateau-image guard satisfied for
// unit lumps.
const char* kTinyConfig = R"({
  "lattice": {"L": 12, "T": 120, "dx": 0.25, "dt": 0.1, "x1_origin": -1.5},
  "kernel": {"k": 50.0},
  "collapse": {"lambda": 0.5, "eps_collapse": 0.05},
  "experiment": {
    "branches": [
      {"c_re": 0.7071067811865476, "regions": [{"lo": -1.0, "hi": 0.0, "J": 1.0}]},
      {"c_re": 0.7071067811865476, "regions": [{"lo": 0.0, "hi": 1.0, "J": 1.0}]}
    ],
    "paths": 12
  },
  "seed": 7
})";

// A minimal well-formedness scan: every opened tag is closed in order, and
// there is exactly one svg root.
bool svg_well_formed(const std::string& s) {
    std::vector<std::string> stack;
    int roots = 0;
    std::size_t pos = 0;
    while ((pos = s.find('<', pos)) != std::string::npos) {
        if (s.compare(pos, 2, "<?") == 0 || s.compare(pos, 2, "<!") == 0) {
            pos = s.find('>', pos);
            if (pos == std::string::npos) return false;
            continue;
        }
        const std::size_t end = s.find('>', pos);
        if (end == std::string::npos) return false;
        std::string tag = s.substr(pos + 1, end - pos - 1);
        const bool closing = !tag.empty() && tag[0] == '/';
        const bool self_closing = !tag.empty() && tag.back() == '/';
        if (closing) tag = tag.substr(1);
        const std::size_t space = tag.find_first_of(" \t\n/");
        const std::string name = tag.substr(0, space);
        if (name.empty()) return false;
        if (closing) {
            if (stack.empty() || stack.back() != name) return false;
            stack.pop_back();
        } else if (!self_closing) {
            if (stack.empty() && name == "svg") ++roots;
            if (stack.empty() && name != "svg") return false;
            stack.push_back(name);
        }
        pos = end + 1;
    }
    return stack.empty() && roots == 1;
}

} // namespace

// ---------------------------------------------------------------------------
// Configuration parsing.
// ---------------------------------------------------------------------------

TEST_CASE("config: defaults resolve to the two-lump experiment") {
    const RunConfig cfg = parse_config("{}");
    CHECK(cfg.lattice.L == 60);
    CHECK(cfg.lattice.T == 1200);
    CHECK(cfg.lattice.dx == 0.05);
    CHECK(cfg.lattice.dt == 1e-6);
    CHECK(cfg.lattice.x1_origin == -1.475);
    CHECK(cfg.collapse.lambda == 0.5);
    CHECK(cfg.collapse.eps_collapse == 0.02);
    CHECK(cfg.collapse.integrator == Integrator::kExponential);
    CHECK(cfg.collapse.scheme == Scheme::kNonlinear);
    CHECK(cfg.experiment.paths == 200);
    CHECK(cfg.experiment.sigma_final == 1200);
    CHECK_FALSE(cfg.experiment.random_foliations);
    CHECK(cfg.experiment.n_mode == NMode::kPlateau);
    CHECK(cfg.seed == 0);
    CHECK_FALSE(cfg.has_experiment_block);

    REQUIRE(cfg.experiment.branches.size() == 2);
    for (const BranchConfig& b : cfg.experiment.branches) {
        CHECK(b.c.real() == doctest::Approx(1.0 / std::sqrt(2.0)));
        CHECK(b.c.imag() == 0.0);
        REQUIRE(b.regions.size() == 1);
        CHECK(b.regions[0].value == 10.0);
    }
    CHECK(cfg.experiment.branches[0].regions[0].x1_lo == -1.0);
    CHECK(cfg.experiment.branches[0].regions[0].x1_hi == 0.0);
    CHECK(cfg.experiment.branches[1].regions[0].x1_lo == 0.0);
    CHECK(cfg.experiment.branches[1].regions[0].x1_hi == 1.0);

    // stress normalization falls back to the branch-averaged peak J^2
    CHECK(cfg.kernel.tbar_static.t00 == doctest::Approx(50.0).epsilon(1e-14));
    CHECK(cfg.kernel.k == 1.0);

    // the built branches carry the plateau images J^2 = 100 on disjoint
    // lumps of 20 sites each, so the initial spatial variance integral is
    // 40 * dx * (1/2)(1/2) * 100^2 = 5000
    const BranchSet set = cfg.build_branches();
    const BranchState state = make_branch_state(cfg.run_lattice(), set);
    CHECK(variance_integral(cfg.run_lattice(), state, 0) ==
          doctest::Approx(5000.0).epsilon(1e-12));
}

TEST_CASE("config: strict parsing rejects unknown keys and bad values") {
    const char* bad[] = {
        "not json at all",
        "[1, 2]",
        R"({"surprise": 1})",
        R"({"lattice": {"L": 60, "cols": 3}})",
        R"({"lattice": {"L": 2.5}})",
        R"({"lattice": 7})",
        R"({"kernel": {"kappa": 1.0}})",
        R"({"kernel": {"kernel_mode": "fancy"}})",
        R"({"collapse": {"lam": 0.5}})",
        R"({"collapse": {"lambda": -0.5}})",
        R"({"collapse": {"eps_collapse": 0.0}})",
        R"({"collapse": {"eps_collapse": 1.5}})",
        R"({"collapse": {"integrator": "midpoint"}})",
        R"({"collapse": {"scheme": "stratonovich"}})",
        R"({"experiment": {"branch": []}})",
        R"({"experiment": {"branches": []}})",
        R"({"experiment": {"branches": "two"}})",
        R"({"experiment": {"branches": [{"c_re": 1.0, "weight": 2}]}})",
        R"({"experiment": {"branches": [{"c_re": 1.0,
            "regions": [{"lo": 0, "hi": 1, "J": 1, "width": 2}]}]}})",
        R"({"experiment": {"branches": [{"c_re": 1.0,
            "regions": [{"lo": 0, "hi": 1}]}]}})",
        R"({"experiment": {"branches": [{"c_re": 0.8},
                                         {"c_re": 0.7}]}})",
        R"({"experiment": {"paths": 0}})",
        R"({"experiment": {"paths": -5}})",
        R"({"experiment": {"foliation": "spacelike"}})",
        R"({"experiment": {"n_mode": "square"}})",
        R"({"experiment": {"sigma_final": 0}})",
        R"({"experiment": {"sigma_final": 1201}})",
        R"({"output": {"folder": "x"}})",
        R"({"output": {"formats": "csv"}})",
        R"({"output": {"formats": ["csv", "pdf"]}})",
        R"({"output": {"formats": [3]}})",
        R"({"seed": -1})",
        R"({"seed": 1.5})",
    };
    for (const char* text : bad) {
        CAPTURE(text);
        CHECK_THROWS_AS(parse_config(text), ConfigError);
    }

    // validation lives on the parameter struct too
    CollapseParams p;
    p.lambda = -1.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.lambda = 0.5;
    p.eps_collapse = 1.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("config: accepted variants resolve as documented") {
    // amplitudes may be complex; normalization is checked on |c|^2
    const RunConfig cfg = parse_config(R"({
      "lattice": {"L": 8, "T": 20, "dx": 0.5, "dt": 0.25},
      "kernel": {"k": 2.0, "kernel_mode": "plc", "T00_static": 3.0},
      "collapse": {"integrator": "euler", "scheme": "linear"},
      "experiment": {
        "branches": [
          {"c_re": 0.6, "c_im": 0.0, "regions": [{"lo": -1, "hi": 0, "J": 4}]},
          {"c_re": 0.0, "c_im": 0.8, "regions": [{"lo": 0, "hi": 1, "J": 4,
                                                   "t_lo": 2, "t_hi": 9}]}
        ],
        "paths": 3,
        "foliation": "random",
        "sigma_final": 10,
        "n_mode": "exact"
      },
      "output": {"dir": "elsewhere", "formats": ["svg"]},
      "seed": 99
    })");
    CHECK(cfg.kernel.mode == KernelParams::Mode::kPlc);
    CHECK(cfg.kernel.tbar_static.t00 == 3.0);
    CHECK(cfg.collapse.integrator == Integrator::kEuler);
    CHECK(cfg.collapse.scheme == Scheme::kLinear);
    CHECK(cfg.experiment.random_foliations);
    CHECK(cfg.experiment.n_mode == NMode::kExact);
    CHECK(cfg.experiment.branches[1].c == std::complex<double>(0.0, 0.8));
    CHECK(cfg.experiment.branches[1].regions[0].t_lo == 2);
    CHECK(cfg.experiment.branches[1].regions[0].t_hi == 9);
    CHECK(cfg.output.dir == "elsewhere");
    CHECK_FALSE(cfg.output.csv);
    CHECK_FALSE(cfg.output.json_out);
    CHECK(cfg.output.svg);
    CHECK(cfg.run_lattice().T == 10);
    CHECK(cfg.has_experiment_block);

    // the truncated lattice is what the branches are built on
    const BranchSet set = cfg.build_branches();
    REQUIRE(set.size() == 2);
    CHECK(set[0].profile->N.T == 10);

    // exact images are smeared records, not the plateau J^2
    bool any_nonzero = false, any_off_plateau = false;
    const Grid<double>& n0 = set[0].profile->N;
    const Grid<double>& j0 = set[0].profile->J;
    for (std::size_t v = 0; v < n0.v.size(); ++v) {
        if (n0.v[v] != 0.0) any_nonzero = true;
        if (std::abs(n0.v[v] - j0.v[v] * j0.v[v]) > 1e-9)
            any_off_plateau = true;
    }
    CHECK(any_nonzero);
    CHECK(any_off_plateau);
}

TEST_CASE("config: canonical form is order-insensitive and idempotent") {
    const char* a = R"({
      "seed": 3,
      "collapse": {"eps_collapse": 0.05, "lambda": 0.4},
      "lattice": {"dt": 0.1, "L": 12, "T": 30, "dx": 0.25, "x1_origin": -1.5}
    })";
    const char* b = R"({
      "lattice": {"x1_origin": -1.5, "dx": 0.25, "T": 30, "L": 12, "dt": 0.1},
      "collapse": {"lambda": 0.4, "eps_collapse": 0.05},
      "seed": 3
    })";
    const RunConfig ca = parse_config(a);
    const RunConfig cb = parse_config(b);
    CHECK(ca.canonical() == cb.canonical());
    CHECK(ca.config_hash() == cb.config_hash());
    CHECK(ca.hash_hex().size() == 16);

    // re-parsing the canonical dump is a fixed point
    const RunConfig cc = parse_config(ca.canonical());
    CHECK(cc.canonical() == ca.canonical());
    CHECK(cc.config_hash() == ca.config_hash());

    // every key is resolved into the canonical form
    const auto j = nlohmann::ordered_json::parse(ca.canonical());
    for (const char* key :
         {"lattice", "kernel", "collapse", "experiment", "output", "seed"})
        CHECK(j.contains(key));
    CHECK(j["experiment"]["sigma_final"] == 30);
    CHECK(j["experiment"]["paths"] == 200);
}

TEST_CASE("config: hash names the experiment, not the output destination") {
    const RunConfig base = parse_config(kTinyConfig);

    RunConfig moved = base;
    moved.output.dir = "/somewhere/else";
    moved.output.svg = false;
    CHECK(moved.config_hash() == base.config_hash());
    CHECK(moved.canonical() != base.canonical());

    RunConfig tampered = base;
    tampered.collapse.lambda = 0.51;
    CHECK(tampered.config_hash() != base.config_hash());

    RunConfig reseeded = base;
    reseeded.seed = 8;
    CHECK(reseeded.config_hash() != base.config_hash());
}

TEST_CASE("config: file loader accepts bare configs and manifests") {
    ScratchDir tmp("config");
    const RunConfig cfg = parse_config(kTinyConfig);

    spit(tmp.path("bare.json"), kTinyConfig);
    const RunConfig from_bare = load_config(tmp.path("bare.json"));
    CHECK(from_bare.canonical() == cfg.canonical());

    const nlohmann::ordered_json manifest = make_manifest(cfg);
    CHECK(manifest.at("code_version") == kCodeVersion);
    CHECK(manifest.at("config_hash") == cfg.hash_hex());
    CHECK(manifest.at("seed") == cfg.seed);
    spit(tmp.path("manifest.json"), manifest.dump(2));
    const RunConfig from_manifest = load_config(tmp.path("manifest.json"));
    CHECK(from_manifest.canonical() == cfg.canonical());
    CHECK(from_manifest.config_hash() == cfg.config_hash());

    CHECK_THROWS_AS(load_config(tmp.path("missing.json")), ConfigError);
    spit(tmp.path("broken.json"), "{");
    CHECK_THROWS_AS(load_config(tmp.path("broken.json")), ConfigError);
}

// ---------------------------------------------------------------------------
// Ensembles.
// ---------------------------------------------------------------------------

TEST_CASE("ensemble: identical output for any worker count, rerun, runner") {
    RunConfig cfg = parse_config("{}");
    cfg.experiment.sigma_final = 400; // enough levels that many paths decide
    const LatticeSpec spec = cfg.run_lattice();
    const BranchSet branches = cfg.build_branches();

    EnsembleOptions opt;
    opt.n_paths = 24;
    opt.base_seed = 41;
    opt.random_foliations = true;
    opt.run.record_levels = true;
    opt.run.checkpoints = {0, 200, 400};
    opt.run.wr_region = Region2D{-1.0, 0.0, 0.0, 2.0e-4};
    opt.run.terminate_on_collapse = false;

    const EnsembleResult serial =
        run_ensemble_serial(spec, branches, cfg.collapse, opt);
    REQUIRE(serial.n_paths == 24);
    REQUIRE(serial.n_branches == 2);
    CHECK(serial.decided() > 0);

    // outcome bookkeeping is consistent
    int undecided = 0;
    for (int p = 0; p < serial.n_paths; ++p) {
        if (serial.outcomes[p] < 0) {
            ++undecided;
            CHECK(std::isnan(serial.collapse_times[p]));
        } else {
            CHECK(std::isfinite(serial.collapse_times[p]));
        }
    }
    CHECK(serial.outcome_counts.back() == undecided);
    int counted = 0;
    for (int c : serial.outcome_counts) counted += c;
    CHECK(counted == serial.n_paths);

    for (int workers : {1, 3, 4}) {
        CAPTURE(workers);
        EnsembleOptions par = opt;
        par.workers = workers;
        require_same_result(serial,
                            run_ensemble(spec, branches, cfg.collapse, par));
    }
    // and a fresh serial run reproduces itself
    require_same_result(
        serial, run_ensemble_serial(spec, branches, cfg.collapse, opt));
}

TEST_CASE("ensemble: per-advance tracing is refused across an ensemble") {
    const RunConfig cfg = parse_config(kTinyConfig);
    EnsembleOptions opt;
    opt.n_paths = 2;
    opt.run.record_steps = true;
    CHECK_THROWS_AS(run_ensemble_serial(cfg.run_lattice(),
                                        cfg.build_branches(), cfg.collapse,
                                        opt),
                    ConfigError);
    CHECK_THROWS_AS(
        run_ensemble(cfg.run_lattice(), cfg.build_branches(), cfg.collapse,
                     opt),
        ConfigError);
}

TEST_CASE("ensemble: final state is foliation-independent path by path") {
    const LatticeSpec spec{6, 40, 0.5, 0.25, 0.0};
    BranchSet set;
    set.push_back(Branch{std::sqrt(0.55), wavy_profile(spec, 1.0, 0.4, 0.3)});
    set.push_back(Branch{std::sqrt(0.45), wavy_profile(spec, 1.0, 0.4, 1.7)});
    CollapseParams params;
    params.lambda = 0.2;
    params.scheme = Scheme::kLinear;

    EnsembleOptions opt;
    opt.n_paths = 8;
    opt.base_seed = 321;
    opt.run.terminate_on_collapse = false;
    const EnsembleResult standard =
        run_ensemble_serial(spec, set, params, opt);

    opt.random_foliations = true;
    const EnsembleResult random_sweep =
        run_ensemble_serial(spec, set, params, opt);
    const EnsembleResult random_again =
        run_ensemble_serial(spec, set, params, opt);

    // same noise field per path, so the final state matches to rounding even
    // though the sweep order is completely different
    REQUIRE(standard.final_weights.size() == random_sweep.final_weights.size());
    for (std::size_t k = 0; k < standard.final_weights.size(); ++k)
        CHECK(standard.final_weights[k] ==
              doctest::Approx(random_sweep.final_weights[k]).epsilon(1e-10));
    for (int p = 0; p < opt.n_paths; ++p)
        CHECK(standard.final_norm2[p] ==
              doctest::Approx(random_sweep.final_norm2[p]).epsilon(1e-10));

    // and the random-sweep ensemble is itself exactly reproducible
    require_same_result(random_sweep, random_again);
}

TEST_CASE("ensemble: fault-injection switches move what they should") {
    const LatticeSpec spec{2, 30, 1.0, 0.5, 0.0};
    BranchSet set;
    set.push_back(Branch{std::sqrt(0.5), flat_profile(spec, 1.0)});
    set.push_back(Branch{std::sqrt(0.5), flat_profile(spec, 1.6)});
    CollapseParams params;
    params.lambda = 0.3;
    params.scheme = Scheme::kLinear;

    EnsembleOptions opt;
    opt.n_paths = 6;
    opt.base_seed = 5;
    opt.run.terminate_on_collapse = false;
    const EnsembleResult base = run_ensemble_serial(spec, set, params, opt);

    EnsembleOptions scaled = opt;
    scaled.variance_scale = 1.5;
    const EnsembleResult inflated =
        run_ensemble_serial(spec, set, params, scaled);
    CHECK_FALSE(bits_equal(base.final_norm2, inflated.final_norm2));

    CollapseParams no_drift = params;
    no_drift.drop_drift = true;
    const EnsembleResult undamped =
        run_ensemble_serial(spec, set, no_drift, opt);
    CHECK_FALSE(bits_equal(base.final_norm2, undamped.final_norm2));

    // with the noise term dropped the dynamics is deterministic: every path
    // produces the same numbers
    CollapseParams no_noise = params;
    no_noise.drop_diffusion = true;
    const EnsembleResult quiet = run_ensemble_serial(spec, set, no_noise, opt);
    for (int p = 1; p < quiet.n_paths; ++p) {
        CHECK(quiet.final_norm2[p] == quiet.final_norm2[0]);
        for (int j = 0; j < quiet.n_branches; ++j)
            CHECK(quiet.weight_at(p, j) == quiet.weight_at(0, j));
    }
}

// ---------------------------------------------------------------------------
// Outcome probability estimators.
// ---------------------------------------------------------------------------

TEST_CASE("born estimators: three-branch frequencies match the amplitudes") {
    const LatticeSpec spec{2, 240, 1.0, 0.5, 0.0};
    const BranchSet set = three_flat_branches(spec, 0.5, 1.5, 2.5);
    const std::vector<double> target{0.5, 0.3, 0.2};

    CollapseParams params;
    params.lambda = 0.35;
    params.eps_collapse = 0.02;

    EnsembleOptions opt;
    opt.n_paths = 600;
    opt.base_seed = 2024;
    const EnsembleResult physical =
        run_ensemble_serial(spec, set, params, opt);
    REQUIRE(physical.decided() >= 590); // nearly every path resolves

    const BornEstimate freq = born_from_outcomes(physical);
    const BornEstimate wmean = born_from_weights(physical);
    double chi2 = 0.0;
    for (int j = 0; j < 3; ++j) {
        CAPTURE(j);
        CHECK(std::abs(freq.value[j] - target[j]) <=
              4.0 * freq.se[j] + 1e-12);
        CHECK(std::abs(wmean.value[j] - target[j]) <=
              4.0 * wmean.se[j] + 1e-12);
        const double expected = target[j] * physical.decided();
        const double observed = freq.value[j] * physical.decided();
        chi2 += (observed - expected) * (observed - expected) / expected;
    }
    CHECK(chi2_sf(chi2, 2) > 0.005);

    // The linear scheme reaches the same probabilities through importance
    // reweighting. That estimator is only honest while the log-weights have
    // O(1) variance, so it gets a short horizon and a gentler coupling (at
    // the collapse horizon itself the weights are log-normal with enormous
    // spread and the self-normalized mean is dominated by a handful of
    // paths).
    const LatticeSpec short_spec{2, 8, 1.0, 0.5, 0.0};
    const BranchSet lset = three_flat_branches(short_spec, 0.0, 1.0, 2.0);
    CollapseParams linear;
    linear.lambda = 0.12;
    linear.scheme = Scheme::kLinear;
    EnsembleOptions lopt;
    lopt.n_paths = 600;
    lopt.base_seed = 4048;
    lopt.run.terminate_on_collapse = false;
    const EnsembleResult bare =
        run_ensemble_serial(short_spec, lset, linear, lopt);
    const BornEstimate rew = born_reweighted(bare);
    for (int j = 0; j < 3; ++j) {
        CAPTURE(j);
        CHECK(std::abs(rew.value[j] - target[j]) <= 4.0 * rew.se[j] + 1e-12);
        CHECK(rew.se[j] > 0.0);
    }
}

TEST_CASE("born estimators: degenerate and tampered inputs") {
    EnsembleResult r;
    r.n_paths = 3;
    r.n_branches = 2;
    r.outcomes = {-1, -1, -1};
    r.collapse_times = {std::nan(""), std::nan(""), std::nan("")};
    r.final_norm2 = {2.0, 0.5, 1.0};
    r.final_weights = {0.9, 0.1, 0.2, 0.8, 0.5, 0.5};
    r.outcome_counts = {0, 0, 3};

    CHECK(r.decided() == 0);
    CHECK(r.weight_at(2, 1) == 0.5);

    const BornEstimate freq = born_from_outcomes(r);
    for (double v : freq.value) CHECK(std::isnan(v));

    // reweighting uses the norms; dropping them degrades to the plain mean
    const BornEstimate weighted = born_reweighted(r);
    const double expect0 = (2.0 * 0.9 + 0.5 * 0.2 + 1.0 * 0.5) / 3.5;
    CHECK(weighted.value[0] == doctest::Approx(expect0).epsilon(1e-12));

    EnsembleResult dropped = r;
    dropped.reweight_dropped = true;
    const BornEstimate plain = born_reweighted(dropped);
    const BornEstimate mean = born_from_weights(dropped);
    CHECK(plain.value[0] == doctest::Approx(mean.value[0]).epsilon(1e-12));
    CHECK(plain.value[0] == doctest::Approx((0.9 + 0.2 + 0.5) / 3.0));
}

// ---------------------------------------------------------------------------
// File artifacts.
// ---------------------------------------------------------------------------

TEST_CASE("output: doubles round-trip exactly through the formatter") {
    const double values[] = {0.0,
                             -0.0,
                             0.1,
                             1.0 / 3.0,
                             5000.0,
                             2.9700000000000017e-4,
                             1e-300,
                             -1.7976931348623157e308,
                             6.02214076e23,
                             3.141592653589793};
    for (double v : values) {
        CAPTURE(v);
        const std::string s = format_double(v);
        const double back = std::strtod(s.c_str(), nullptr);
        CHECK(std::memcmp(&back, &v, sizeof v) == 0);
    }
}

TEST_CASE("output: tables carry the documented shapes") {
    const RunConfig cfg = parse_config(kTinyConfig);
    const LatticeSpec spec = cfg.run_lattice();
    const BranchSet set = cfg.build_branches();

    EnsembleOptions opt;
    opt.n_paths = 5;
    opt.base_seed = cfg.seed;
    opt.run.record_levels = true;
    opt.run.checkpoints = {0, 30, 60};
    const EnsembleResult r = run_ensemble_serial(spec, set, cfg.collapse, opt);

    const CsvTable curve = variance_curve_table(spec, r);
    CHECK(curve.header ==
          std::vector<std::string>{"x0", "meanVar", "stderr",
                                   "examplePathVar"});
    REQUIRE(curve.rows.size() == static_cast<std::size_t>(spec.T + 1));
    for (int t = 0; t <= spec.T; ++t)
        CHECK(curve.rows[t][0] == doctest::Approx(t * spec.dt));
    // two unit-length lumps of N = J^2 = 1 at weight 1/2: 2 * (1/4) * 1^2
    CHECK(curve.rows[0][1] == doctest::Approx(0.5).epsilon(1e-12));

    const CsvTable paths = paths_table(r);
    REQUIRE(paths.header.size() == 4 + 2);
    CHECK(paths.header[4] == "w_0");
    REQUIRE(paths.rows.size() == 5);
    for (int p = 0; p < 5; ++p) {
        CHECK(paths.rows[p][0] == p);
        CHECK(paths.rows[p][1] == r.outcomes[p]);
        CHECK(paths.rows[p][4] == r.weight_at(p, 0));
        CHECK(paths.rows[p][5] == r.weight_at(p, 1));
    }

    // the serialized table is line-per-row with a header
    const std::string text = curve.to_string();
    std::size_t newlines = 0;
    for (char c : text) newlines += c == '\n';
    CHECK(newlines == curve.rows.size() + 1);
    CHECK(text.rfind("x0,meanVar,stderr,examplePathVar\n", 0) == 0);

    // a re-serialization is byte-identical
    CHECK(variance_curve_table(spec, r).to_string() == text);

    // per-advance trace of a single path
    const NoiseField field{77, spec};
    RunOptions ropt;
    ropt.record_steps = true;
    ropt.terminate_on_collapse = false;
    const PathRecord rec = run_path(spec, set, cfg.collapse,
                                    standard_foliation(spec), field, ropt);
    const CsvTable trace = trace_table(rec);
    CHECK(trace.header.size() == 8);
    CHECK(trace.rows.size() == rec.steps.size());

    // grids, real and complex
    Grid<double> g(spec);
    g.at(1, 2) = 0.25;
    const CsvTable gt = grid_table(spec, g);
    CHECK(gt.header == std::vector<std::string>{"i", "t", "value"});
    CHECK(gt.rows.size() == static_cast<std::size_t>(spec.L) * spec.T);
    Grid<std::complex<double>> gc(spec);
    gc.at(0, 0) = {1.0, -2.0};
    const CsvTable gct = grid_table(spec, gc);
    CHECK(gct.header == std::vector<std::string>{"i", "t", "re", "im"});
    CHECK(gct.rows[0][2] == 1.0);
    CHECK(gct.rows[0][3] == -2.0);
}

TEST_CASE("output: variance plot is well-formed, self-contained SVG") {
    const RunConfig cfg = parse_config(kTinyConfig);
    EnsembleOptions opt;
    opt.n_paths = 4;
    opt.base_seed = 1;
    opt.run.record_levels = true;
    const EnsembleResult r = run_ensemble_serial(
        cfg.run_lattice(), cfg.build_branches(), cfg.collapse, opt);

    const std::string svg = variance_curve_svg(cfg.run_lattice(), r);
    CHECK(svg_well_formed(svg));
    CHECK(svg.find("<polyline") != std::string::npos);
    CHECK(svg.find("<script") == std::string::npos);
    CHECK(svg.find("href") == std::string::npos);
    CHECK(svg.find("nan") == std::string::npos);
    CHECK(variance_curve_svg(cfg.run_lattice(), r) == svg);
}

TEST_CASE("output: filesystem helpers create and fail loudly") {
    ScratchDir tmp("fsio");

    const std::string nested = tmp.path("a/b/c");
    ensure_dir(nested);
    CHECK(fs::is_directory(nested));
    ensure_dir(nested); // idempotent

    const std::string file = join_path(nested, "data.txt");
    write_text_file(file, "line\n");
    CHECK(slurp(file) == "line\n");

    nlohmann::ordered_json j;
    j["x"] = 1.5;
    j["y"] = {1, 2, 3};
    const std::string jfile = join_path(nested, "data.json");
    write_json_file(jfile, j);
    CHECK(nlohmann::ordered_json::parse(slurp(jfile)) == j);

    // a plain file in the way of a directory (or of a parent) is an error
    CHECK_THROWS_AS(ensure_dir(file + "/sub"), ResourceError);
    CHECK_THROWS_AS(write_text_file(file + "/sub/x.txt", "no"),
                    ResourceError);
}

// ---------------------------------------------------------------------------
// The command-line driver, end to end.
// ---------------------------------------------------------------------------

TEST_CASE("cli: usage and configuration errors exit with code 2") {
    REQUIRE_MESSAGE(fs::exists(cli_binary()),
                    "CLI binary not found at ", cli_binary(),
                    " (run from the build directory or set RELC_BIN)");
    ScratchDir tmp("cli_err");

    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("") == 2);
    CHECK(run_cli("bogus") == 2);
    CHECK(run_cli("figure2 --integrator junk") == 2);
    CHECK(run_cli("figure2 --config " + tmp.path("missing.json")) == 2);

    spit(tmp.path("broken.json"), "{ nope");
    CHECK(run_cli("figure2 --config " + tmp.path("broken.json")) == 2);

    // the two-branch figure takes exactly two branches
    spit(tmp.path("three.json"), R"({
      "lattice": {"L": 2, "T": 240, "dx": 1.0, "dt": 0.5},
      "kernel": {"T00_static": 1.0},
      "experiment": {"branches": [
        {"c_re": 0.7071067811865476, "regions": [{"lo": 0, "hi": 1, "J": 1}]},
        {"c_re": 0.5, "regions": [{"lo": 1, "hi": 2, "J": 1}]},
        {"c_re": 0.5, "regions": [{"lo": 0, "hi": 2, "J": 1}]}
      ], "paths": 4}
    })");
    CHECK(run_cli("figure2 --config " + tmp.path("three.json")) == 2);

    // an empty readout region is a configuration error
    spit(tmp.path("tiny.json"), kTinyConfig);
    CHECK(run_cli("beable --config " + tmp.path("tiny.json") +
                  " --x1-lo 50 --x1-hi 60 --out " + tmp.path("b")) == 2);
}

TEST_CASE("cli: figure2 writes reproducible artifacts") {
    REQUIRE(fs::exists(cli_binary()));
    ScratchDir tmp("cli_fig");
    spit(tmp.path("tiny.json"), kTinyConfig);
    const std::string hash = parse_config(kTinyConfig).hash_hex();

    const std::string out_a = tmp.path("a");
    const std::string out_b = tmp.path("b");
    CHECK(run_cli("figure2 --config " + tmp.path("tiny.json") + " --out " +
                  out_a) == 0);
    CHECK(run_cli("figure2 --config " + tmp.path("tiny.json") + " --out " +
                  out_b + " --workers 3") == 0);

    for (const std::string stem :
         {"figure2_" + hash + ".csv", "paths_" + hash + ".csv",
          "figure2_" + hash + ".svg", "summary_" + hash + ".json",
          "manifest_" + hash + ".json"}) {
        CAPTURE(stem);
        REQUIRE(fs::exists(fs::path(out_a) / stem));
        REQUIRE(fs::exists(fs::path(out_b) / stem));
    }

    // data artifacts are byte-identical regardless of destination or workers
    for (const std::string stem :
         {"figure2_" + hash + ".csv", "paths_" + hash + ".csv",
          "figure2_" + hash + ".svg"}) {
        CAPTURE(stem);
        CHECK(slurp((fs::path(out_a) / stem).string()) ==
              slurp((fs::path(out_b) / stem).string()));
    }

    // the CSV header and row count match the documented schema
    const std::string curve = slurp((fs::path(out_a) / ("figure2_" + hash +
                                                        ".csv")).string());
    CHECK(curve.rfind("x0,meanVar,stderr,examplePathVar\n", 0) == 0);

    // rerunning from the emitted manifest reproduces the same bytes
    const std::string out_c = tmp.path("c");
    CHECK(run_cli("figure2 --config " +
                  (fs::path(out_a) / ("manifest_" + hash + ".json")).string() +
                  " --out " + out_c) == 0);
    CHECK(slurp((fs::path(out_a) / ("figure2_" + hash + ".csv")).string()) ==
          slurp((fs::path(out_c) / ("figure2_" + hash + ".csv")).string()));

    // the SVG artifact passes the same well-formedness scan
    CHECK(svg_well_formed(
        slurp((fs::path(out_a) / ("figure2_" + hash + ".svg")).string())));
}

TEST_CASE("cli: born and oracle succeed on small runs") {
    REQUIRE(fs::exists(cli_binary()));
    ScratchDir tmp("cli_born");
    spit(tmp.path("tiny.json"), kTinyConfig);

    CHECK(run_cli("born --config " + tmp.path("tiny.json") +
                  " --paths 60 --out " + tmp.path("born")) == 0);
    const std::string hash = [&] {
        RunConfig cfg = parse_config(kTinyConfig);
        cfg.experiment.paths = 60;
        return cfg.hash_hex();
    }();
    REQUIRE(fs::exists(fs::path(tmp.path("born")) / ("born_" + hash +
                                                     ".json")));
    const auto born = nlohmann::ordered_json::parse(
        slurp((fs::path(tmp.path("born")) / ("born_" + hash + ".json"))
                  .string()));
    CHECK(born.at("pass") == true);

    CHECK(run_cli("oracle --out " + tmp.path("oracle")) == 0);
}

TEST_CASE("cli: the verification suite passes end to end") {
    REQUIRE(fs::exists(cli_binary()));
    ScratchDir tmp("cli_verify");
    CHECK(run_cli("verify --out " + tmp.path("v")) == 0);

    const std::string hash = parse_config("{}").hash_hex();
    const auto report = nlohmann::ordered_json::parse(
        slurp((fs::path(tmp.path("v")) / ("verify_" + hash + ".json"))
                  .string()));
    CHECK(report.at("all_pass") == true);
    CHECK(report.at("checks").size() >= 20);
}
