#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "relc/config.hpp"
#include "relc/dynamics.hpp"
#include "relc/ensemble.hpp"
#include "relc/errors.hpp"
#include "relc/fock.hpp"
#include "relc/lattice.hpp"
#include "relc/noise.hpp"
#include "relc/output.hpp"
#include "relc/stats.hpp"
#include "relc/verify.hpp"

namespace {

using relc::BornEstimate;
using relc::BranchSet;
using relc::CollapseParams;
using relc::ConfigError;
using relc::EnsembleOptions;
using relc::EnsembleResult;
using relc::LatticeSpec;
using relc::Region2D;
using relc::RunConfig;
using relc::Scheme;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// shared flags; every subcommand takes the same overrides
// ---------------------------------------------------------------------------

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> paths;
    std::optional<std::string> out_dir;
    std::optional<std::string> integrator; // linear | nonlinear
    std::optional<std::string> foliation;  // time | random
    int workers = 0;
};

void add_common(CLI::App* sub, CommonArgs& a) {
    sub->add_option("--config", a.config_path,
                    "JSON config file, or a manifest embedding one");
    sub->add_option("--seed", a.seed, "base RNG seed (overrides the config)");
    sub->add_option("--paths", a.paths,
                    "Monte Carlo path count (overrides the config)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", a.out_dir,
                    "output directory (overrides the config)");
    sub->add_option("--integrator", a.integrator,
                    "state update scheme: linear (bare measure, importance "
                    "weights) or nonlinear (physical measure, normalized)")
        ->check(CLI::IsMember({"linear", "nonlinear"}));
    sub->add_option("--foliation", a.foliation,
                    "sweep order: time (level by level) or random")
        ->check(CLI::IsMember({"time", "random"}));
    sub->add_option("--workers", a.workers,
                    "worker threads, 0 = library default (outputs are "
                    "identical for any value)")
        ->check(CLI::NonNegativeNumber);
}

RunConfig effective_config(const CommonArgs& a) {
    RunConfig cfg = a.config_path.empty() ? relc::parse_config("{}")
                                          : relc::load_config(a.config_path);
    if (a.seed) cfg.seed = *a.seed;
    if (a.paths) cfg.experiment.paths = *a.paths;
    if (a.out_dir) cfg.output.dir = *a.out_dir;
    if (a.integrator)
        cfg.collapse.scheme =
            *a.integrator == "linear" ? Scheme::kLinear : Scheme::kNonlinear;
    if (a.foliation)
        cfg.experiment.random_foliations = *a.foliation == "random";
    return cfg;
}

EnsembleOptions base_options(const RunConfig& cfg, int workers) {
    EnsembleOptions opt;
    opt.n_paths = cfg.experiment.paths;
    opt.base_seed = cfg.seed;
    opt.workers = workers;
    opt.random_foliations = cfg.experiment.random_foliations;
    return opt;
}

// ---------------------------------------------------------------------------
// emission helpers (format toggles honored; directories created lazily)
// ---------------------------------------------------------------------------

void emit_csv(const RunConfig& cfg, const std::string& name,
              const relc::CsvTable& table) {
    if (!cfg.output.csv) return;
    relc::ensure_dir(cfg.output.dir);
    relc::write_text_file(relc::join_path(cfg.output.dir, name),
                          table.to_string());
}

void emit_json(const RunConfig& cfg, const std::string& name,
               const ordered_json& j) {
    if (!cfg.output.json_out) return;
    relc::ensure_dir(cfg.output.dir);
    relc::write_json_file(relc::join_path(cfg.output.dir, name), j);
}

void emit_svg(const RunConfig& cfg, const std::string& name,
              const std::string& svg) {
    if (!cfg.output.svg) return;
    relc::ensure_dir(cfg.output.dir);
    relc::write_text_file(relc::join_path(cfg.output.dir, name), svg);
}

// standalone manifest: feeding it back through --config reruns the exact
// same experiment and reproduces every output byte for byte
void emit_manifest(const RunConfig& cfg) {
    emit_json(cfg, "manifest_" + cfg.hash_hex() + ".json",
              relc::make_manifest(cfg));
}

ordered_json estimate_json(const BornEstimate& e) {
    ordered_json j;
    j["value"] = e.value;
    j["se"] = e.se;
    return j;
}

std::vector<double> born_targets(const RunConfig& cfg) {
    std::vector<double> p;
    for (const auto& b : cfg.experiment.branches) p.push_back(std::norm(b.c));
    return p;
}

void print_line(const std::string& s) { std::cout << s << '\n'; }

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// figure2: the two-branch collapse experiment with the variance-decay curve
// ---------------------------------------------------------------------------

int cmd_figure2(const RunConfig& cfg, int workers) {
    if (cfg.experiment.branches.size() != 2)
        throw ConfigError(
            "figure2 needs an experiment with exactly two branches");

    const LatticeSpec spec = cfg.run_lattice();
    const BranchSet branches = cfg.build_branches();
    const CollapseParams params = cfg.collapse;

    EnsembleOptions opt = base_options(cfg, workers);
    opt.run.record_levels = true;
    opt.run.checkpoints = {0, spec.T / 4, spec.T / 2, (3 * spec.T) / 4,
                           spec.T};
    const EnsembleResult r = relc::run_ensemble(spec, branches, params, opt);

    std::vector<double> times;
    for (double t : r.collapse_times)
        if (std::isfinite(t)) times.push_back(t);
    const double med = times.empty()
                           ? std::numeric_limits<double>::quiet_NaN()
                           : relc::median(times);

    const BornEstimate freq = relc::born_from_outcomes(r);
    const BornEstimate wmean = relc::born_from_weights(r);

    const double v0 = r.var_mean.empty() ? 0.0 : r.var_mean.front();
    const double v1 = r.var_mean.empty() ? 0.0 : r.var_mean.back();

    const std::string hash = cfg.hash_hex();
    emit_csv(cfg, "figure2_" + hash + ".csv",
             relc::variance_curve_table(spec, r));
    emit_csv(cfg, "paths_" + hash + ".csv", relc::paths_table(r));
    emit_svg(cfg, "figure2_" + hash + ".svg",
             relc::variance_curve_svg(spec, r));

    ordered_json j;
    j["command"] = "figure2";
    j["paths"] = r.n_paths;
    j["decided"] = r.decided();
    j["initial_var"] = v0;
    j["final_var"] = v1;
    j["final_var_se"] = r.var_se.empty() ? 0.0 : r.var_se.back();
    j["final_over_initial"] = v0 > 0.0 ? v1 / v0 : 0.0;
    ordered_json ct;
    ct["decided"] = static_cast<int>(times.size());
    ct["median"] = med;
    ct["min"] = times.empty() ? nullptr
                              : ordered_json(*std::min_element(times.begin(),
                                                               times.end()));
    ct["max"] = times.empty() ? nullptr
                              : ordered_json(*std::max_element(times.begin(),
                                                               times.end()));
    j["collapse_time"] = ct;
    j["born_outcomes"] = estimate_json(freq);
    j["born_weights"] = estimate_json(wmean);
    j["manifest"] = relc::make_manifest(cfg);
    emit_json(cfg, "summary_" + hash + ".json", j);
    emit_manifest(cfg);

    print_line("figure2: " + std::to_string(r.n_paths) + " paths, " +
               std::to_string(r.decided()) + " decided");
    print_line("  var integral: initial " + fmt(v0) + ", final " + fmt(v1) +
               " (ratio " + fmt(v0 > 0.0 ? v1 / v0 : 0.0) + ")");
    print_line("  collapse time median: " + fmt(med));
    if (!freq.value.empty())
        print_line("  outcome frequencies: " + fmt(freq.value[0]) + " +- " +
                   fmt(freq.se[0]) + ", " + fmt(freq.value[1]) + " +- " +
                   fmt(freq.se[1]));
    print_line("  outputs in " + cfg.output.dir + " (hash " + hash + ")");
    return 0;
}

// ---------------------------------------------------------------------------
// born: frequencies and weight means vs |c|^2, both schemes cross-checked
// ---------------------------------------------------------------------------

int cmd_born(const RunConfig& cfg, int workers) {
    const LatticeSpec spec = cfg.run_lattice();
    const BranchSet branches = cfg.build_branches();
    const std::vector<double> target = born_targets(cfg);
    const int K = static_cast<int>(branches.size());

    CollapseParams nl = cfg.collapse;
    nl.scheme = Scheme::kNonlinear;
    CollapseParams lin = cfg.collapse;
    lin.scheme = Scheme::kLinear;

    EnsembleOptions opt = base_options(cfg, workers);
    const EnsembleResult r_nl = relc::run_ensemble(spec, branches, nl, opt);

    // independent noise for the bare-measure ensemble so the estimator
    // cross-check is a real comparison, not the same paths twice
    EnsembleOptions opt_lin = opt;
    opt_lin.base_seed = relc::mix_seed(cfg.seed, 0x626f726eULL);
    const EnsembleResult r_lin =
        relc::run_ensemble(spec, branches, lin, opt_lin);

    const BornEstimate freq = relc::born_from_outcomes(r_nl);
    const BornEstimate wmean = relc::born_from_weights(r_nl);
    const BornEstimate rew = relc::born_reweighted(r_lin);
    const int decided = r_nl.decided();

    // binomial z-scores of the outcome frequencies against the targets
    std::vector<double> z(static_cast<std::size_t>(K),
                          std::numeric_limits<double>::quiet_NaN());
    bool z_ok = decided > 0;
    for (int j = 0; j < K && decided > 0; ++j) {
        const double se =
            std::sqrt(target[j] * (1.0 - target[j]) / decided);
        z[j] = se > 0.0 ? (freq.value[j] - target[j]) / se : 0.0;
        if (!(std::abs(z[j]) <= 3.0)) z_ok = false;
    }

    // estimator agreement: weight means (physical) vs reweighted (bare);
    // the weights sum to one, so one branch is redundant
    double chi2 = 0.0;
    const int dof = K - 1;
    for (int j = 0; j < dof; ++j) {
        const double d = wmean.value[j] - rew.value[j];
        const double v =
            wmean.se[j] * wmean.se[j] + rew.se[j] * rew.se[j];
        if (v > 0.0) chi2 += d * d / v;
    }
    const double p_agree = dof > 0 ? relc::chi2_sf(chi2, dof) : 1.0;
    const bool agree_ok = dof == 0 || p_agree > 0.01;

    const bool pass = z_ok && agree_ok;

    relc::CsvTable table;
    table.header = {"branch",     "target",        "freq",   "freq_se",
                    "z",          "weight_mean",   "weight_se",
                    "reweighted", "reweighted_se"};
    for (int j = 0; j < K; ++j)
        table.rows.push_back({static_cast<double>(j), target[j],
                              freq.value[j], freq.se[j], z[j], wmean.value[j],
                              wmean.se[j], rew.value[j], rew.se[j]});

    const std::string hash = cfg.hash_hex();
    emit_csv(cfg, "born_" + hash + ".csv", table);

    ordered_json j;
    j["command"] = "born";
    j["paths"] = r_nl.n_paths;
    j["decided"] = decided;
    j["target"] = target;
    j["outcome_frequencies"] = estimate_json(freq);
    j["outcome_z"] = z;
    j["weight_means"] = estimate_json(wmean);
    j["reweighted"] = estimate_json(rew);
    j["reweighted_seed"] = opt_lin.base_seed;
    j["estimator_chi2"] = chi2;
    j["estimator_dof"] = dof;
    j["estimator_p"] = p_agree;
    j["pass"] = pass;
    j["manifest"] = relc::make_manifest(cfg);
    emit_json(cfg, "born_" + hash + ".json", j);
    emit_manifest(cfg);

    print_line("born: " + std::to_string(r_nl.n_paths) + " paths per scheme, " +
               std::to_string(decided) + " decided");
    for (int k = 0; k < K; ++k)
        print_line("  branch " + std::to_string(k) + ": target " +
                   fmt(target[k]) + ", freq " + fmt(freq.value[k]) + " +- " +
                   fmt(freq.se[k]) + " (z " + fmt(z[k]) + "), reweighted " +
                   fmt(rew.value[k]) + " +- " + fmt(rew.se[k]));
    print_line("  estimator agreement: chi2 " + fmt(chi2) + " (dof " +
               std::to_string(dof) + "), p " + fmt(p_agree));
    print_line(pass ? "born: PASS" : "born: FAIL");
    return pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// verify: the full invariant suite with negative controls
// ---------------------------------------------------------------------------

int cmd_verify(const RunConfig& cfg) {
    const relc::VerifyReport rep = relc::verify_all(cfg);
    for (const relc::CheckResult& c : rep.checks)
        print_line(std::string(c.pass ? "[PASS] " : "[FAIL] ") + c.name +
                   ": observed " + fmt(c.observed) + ", expected " +
                   fmt(c.expected) + ", tolerance " + fmt(c.tolerance));

    ordered_json j = rep.to_json();
    j["manifest"] = relc::make_manifest(cfg);
    emit_json(cfg, "verify_" + cfg.hash_hex() + ".json", j);
    emit_manifest(cfg);

    const bool pass = rep.all_pass();
    print_line(pass ? "verify: all checks passed"
                    : "verify: at least one check FAILED");
    return pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// beable: regional noise-sum decomposition into signal and residual
// ---------------------------------------------------------------------------

int cmd_beable(const RunConfig& cfg, int workers, const Region2D& region) {
    const LatticeSpec spec = cfg.run_lattice();
    const BranchSet branches = cfg.build_branches();

    // region volume and per-branch region-averaged images
    int cells = 0;
    relc::KahanSum vol;
    std::vector<relc::KahanSum> image(branches.size());
    for (int t = 0; t < spec.T; ++t)
        for (int i = 0; i < spec.L; ++i) {
            const relc::Cell c{i, t};
            if (!relc::region_contains(spec, region, c)) continue;
            ++cells;
            vol.add(spec.domega());
            for (std::size_t k = 0; k < branches.size(); ++k)
                image[k].add(branches[k].profile->N.at(c) * spec.domega());
        }
    if (cells == 0)
        throw ConfigError("beable: the region contains no lattice cells");

    EnsembleOptions opt = base_options(cfg, workers);
    opt.run.wr_region = region;
    // integrate across the whole horizon even after outcomes are decided:
    // the regional sums live in spacetime, not on the decision surface
    opt.run.terminate_on_collapse = false;
    const EnsembleResult r =
        relc::run_ensemble(spec, branches, cfg.collapse, opt);

    // residual = regional noise sum minus the accumulated drift signal;
    // under the physical measure it is centred with variance = volume
    std::vector<double> resid(r.wr_dw.size());
    for (std::size_t p = 0; p < resid.size(); ++p)
        resid[p] = r.wr_dw[p] - r.wr_signal[p];
    const relc::MeanSE m_resid = relc::mean_se(resid);
    const relc::MeanSE m_signal = relc::mean_se(r.wr_signal);
    const double var_resid =
        m_resid.se * m_resid.se * static_cast<double>(resid.size());
    const double var_ratio = var_resid / vol.value();
    const double var_band =
        3.0 * std::sqrt(2.0 / std::max<std::size_t>(resid.size() - 1, 1));

    bool pass = std::abs(m_resid.mean) <= 3.0 * m_resid.se + 1e-15 &&
                std::abs(var_ratio - 1.0) <= var_band;

    // conditional recovery: among paths that collapsed onto branch k, the
    // regional sum per unit volume estimates 2 lambda <N_k>_region
    ordered_json recovery = ordered_json::array();
    for (std::size_t k = 0; k < branches.size(); ++k) {
        std::vector<double> w_over_vol;
        for (int p = 0; p < r.n_paths; ++p)
            if (r.outcomes[static_cast<std::size_t>(p)] ==
                static_cast<int>(k))
                w_over_vol.push_back(r.wr_dw[static_cast<std::size_t>(p)] /
                                     vol.value());
        const double target =
            2.0 * cfg.collapse.lambda * image[k].value() / vol.value();
        ordered_json e;
        e["branch"] = k;
        e["paths"] = w_over_vol.size();
        e["target"] = target;
        if (w_over_vol.size() >= 5) {
            const relc::MeanSE m = relc::mean_se(w_over_vol);
            const double zse = m.se > 0.0 ? m.se : 1e-300;
            const double z = (m.mean - target) / zse;
            e["recovered"] = m.mean;
            e["se"] = m.se;
            e["z"] = z;
            if (!(std::abs(z) <= 3.0)) pass = false;
            print_line("  branch " + std::to_string(k) + " (" +
                       std::to_string(w_over_vol.size()) +
                       " paths): recovered " + fmt(m.mean) + " +- " +
                       fmt(m.se) + ", target " + fmt(target) + " (z " +
                       fmt(z) + ")");
        } else {
            e["recovered"] = nullptr;
            print_line("  branch " + std::to_string(k) +
                       ": too few collapsed paths (" +
                       std::to_string(w_over_vol.size()) + ") to test");
        }
        recovery.push_back(e);
    }

    ordered_json j;
    j["command"] = "beable";
    j["region"] = {{"x1_lo", region.x1_lo},
                   {"x1_hi", region.x1_hi},
                   {"x0_lo", region.x0_lo},
                   {"x0_hi", region.x0_hi}};
    j["cells"] = cells;
    j["volume"] = vol.value();
    j["paths"] = r.n_paths;
    j["decided"] = r.decided();
    j["noise_sum_mean"] = relc::mean_se(r.wr_dw).mean;
    j["signal_mean"] = m_signal.mean;
    j["signal_se"] = m_signal.se;
    j["residual_mean"] = m_resid.mean;
    j["residual_se"] = m_resid.se;
    j["residual_variance"] = var_resid;
    j["residual_variance_over_volume"] = var_ratio;
    j["variance_band"] = var_band;
    j["recovery"] = recovery;
    j["pass"] = pass;
    j["manifest"] = relc::make_manifest(cfg);
    emit_json(cfg, "beable_" + cfg.hash_hex() + ".json", j);
    emit_manifest(cfg);

    print_line("beable: " + std::to_string(r.n_paths) + " paths, region " +
               std::to_string(cells) + " cells, volume " + fmt(vol.value()));
    print_line("  signal mean " + fmt(m_signal.mean) + " +- " +
               fmt(m_signal.se) + "; residual mean " + fmt(m_resid.mean) +
               " +- " + fmt(m_resid.se));
    print_line("  residual variance / volume: " + fmt(var_ratio) +
               " (band +-" + fmt(var_band) + ")");
    print_line(pass ? "beable: PASS" : "beable: FAIL");
    return pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// oracle: exact record-mode reports (algebra, record match, equivalence)
// ---------------------------------------------------------------------------

int cmd_oracle(const RunConfig& cfg) {
    const relc::VerifyReport rep = relc::verify_oracle();
    for (const relc::CheckResult& c : rep.checks)
        print_line(std::string(c.pass ? "[PASS] " : "[FAIL] ") + c.name +
                   ": observed " + fmt(c.observed) + ", tolerance " +
                   fmt(c.tolerance));

    // cutoff-convergence series of a two-advance evolution of one mode
    ordered_json series = ordered_json::array();
    {
        const LatticeSpec sp{1, 2, 1.0, 0.5, 0.0};
        const double dom = sp.domega();
        double reference = 0.0;
        for (int cutoff : {3, 5, 7, 9}) {
            relc::FockSpec fs;
            fs.lattice = sp;
            fs.modes = {{0, 0}};
            fs.cutoff = cutoff;
            fs.validate();
            relc::FockState psi = relc::coherent_state(fs, {0.0});
            relc::FockStep st;
            st.J = 0.4;
            st.lambda = 0.4;
            st.dw = 0.3;
            st.f_values = {0.25};
            st.g_values = {1.0 / dom};
            relc::evolve_exact(fs, psi, st);
            relc::evolve_exact(fs, psi, st);
            const Eigen::VectorXd N =
                relc::build_N_diag(fs, std::vector<double>{0.25});
            const double mean =
                relc::expectation_diag(psi, N) / relc::norm2(psi);
            if (cutoff == 9) reference = mean;
            ordered_json e;
            e["cutoff"] = cutoff;
            e["mean_N"] = mean;
            series.push_back(e);
        }
        for (auto& e : series)
            e["error_vs_largest"] =
                std::abs(e["mean_N"].get<double>() - reference);
    }

    // drift quadrature table
    ordered_json drift = ordered_json::array();
    {
        relc::FockSpec fs;
        fs.lattice = LatticeSpec{1, 2, 1.0, 0.5, 0.0};
        fs.modes = {{0, 0}};
        fs.cutoff = 7;
        fs.validate();
        const double dom = fs.lattice.domega();
        const std::complex<double> alpha =
            0.4 / std::sqrt(dom) * std::exp(std::complex<double>(0.0, 0.3));
        const relc::FockState psi = relc::coherent_state(fs, {alpha});
        const Eigen::VectorXd N =
            relc::build_N_diag(fs, std::vector<double>{1.0 / dom});
        for (int q : {20, 40, 80}) {
            ordered_json e;
            e["points"] = q;
            e["drift"] = relc::expectation_drift_diag(fs, psi, N, 0.4, N, q);
            drift.push_back(e);
        }
    }

    ordered_json j = rep.to_json();
    j["cutoff_convergence"] = series;
    j["drift_quadrature"] = drift;
    j["manifest"] = relc::make_manifest(cfg);
    emit_json(cfg, "oracle_" + cfg.hash_hex() + ".json", j);
    emit_manifest(cfg);

    const bool pass = rep.all_pass();
    print_line(pass ? "oracle: all checks passed"
                    : "oracle: at least one check FAILED");
    return pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "collapse-dynamics toolkit: two-lump variance decay, Born-rule "
        "estimators, invariant verification, regional noise decomposition, "
        "and exact small-system oracles"};
    app.require_subcommand(1);

    CommonArgs args;
    Region2D region{-1.0, 0.0, 0.6e-3, 1.2e-3};

    CLI::App* fig = app.add_subcommand(
        "figure2", "run the two-branch collapse experiment and emit the "
                   "variance-decay curve, per-path table, SVG, and summary");
    CLI::App* born = app.add_subcommand(
        "born", "estimate branch probabilities with both schemes and "
                "cross-check the estimators");
    CLI::App* verify = app.add_subcommand(
        "verify", "run the invariant suite including negative controls");
    CLI::App* beable = app.add_subcommand(
        "beable", "decompose the regional noise sum into drift signal and "
                  "centred residual");
    CLI::App* oracle = app.add_subcommand(
        "oracle", "exact record-mode algebra and oracle-equivalence report");
    for (CLI::App* s : {fig, born, verify, beable, oracle})
        add_common(s, args);

    beable->add_option("--x1-lo", region.x1_lo, "region lower x1 bound");
    beable->add_option("--x1-hi", region.x1_hi, "region upper x1 bound");
    beable->add_option("--x0-lo", region.x0_lo, "region lower time bound");
    beable->add_option("--x0-hi", region.x0_hi, "region upper time bound");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const RunConfig cfg = effective_config(args);
        if (fig->parsed()) return cmd_figure2(cfg, args.workers);
        if (born->parsed()) return cmd_born(cfg, args.workers);
        if (verify->parsed()) return cmd_verify(cfg);
        if (beable->parsed()) return cmd_beable(cfg, args.workers, region);
        if (oracle->parsed()) return cmd_oracle(cfg);
    } catch (const relc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const relc::ResourceError& e) {
        std::cerr << "resource error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
