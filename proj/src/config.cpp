#include "relc/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>

#include "relc/errors.hpp"

namespace relc {

namespace {

using json = nlohmann::json;

[[noreturn]] void bad(const std::string& where, const std::string& what) {
    throw ConfigError("config: " + where + ": " + what);
}

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) bad(where, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) known = true;
        if (!known) bad(where, "unknown key '" + it.key() + "'");
    }
}

double num_field(const json& j, const std::string& where, const char* key,
                 double def) {
    if (!j.contains(key)) return def;
    const json& v = j.at(key);
    if (!v.is_number()) bad(where + "." + key, "expected a number");
    return v.get<double>();
}

int int_field(const json& j, const std::string& where, const char* key,
              int def) {
    if (!j.contains(key)) return def;
    const json& v = j.at(key);
    if (!v.is_number_integer()) bad(where + "." + key, "expected an integer");
    return v.get<int>();
}

std::string str_field(const json& j, const std::string& where,
                      const char* key, const std::string& def) {
    if (!j.contains(key)) return def;
    const json& v = j.at(key);
    if (!v.is_string()) bad(where + "." + key, "expected a string");
    return v.get<std::string>();
}

std::uint64_t seed_field(const json& j, const std::string& where,
                         const char* key, std::uint64_t def) {
    if (!j.contains(key)) return def;
    const json& v = j.at(key);
    if (!(v.is_number_unsigned() ||
          (v.is_number_integer() && v.get<std::int64_t>() >= 0)))
        bad(where + "." + key, "expected a non-negative integer");
    return v.get<std::uint64_t>();
}

LatticeSpec parse_lattice(const json& j) {
    LatticeSpec spec{60, 1200, 0.05, 1e-6, -1.475};
    if (j.is_null()) return spec;
    check_keys(j, "lattice", {"L", "T", "dx", "dt", "x1_origin"});
    spec.L = int_field(j, "lattice", "L", spec.L);
    spec.T = int_field(j, "lattice", "T", spec.T);
    spec.dx = num_field(j, "lattice", "dx", spec.dx);
    spec.dt = num_field(j, "lattice", "dt", spec.dt);
    // default: cell centers straddle zero symmetrically
    spec.x1_origin = num_field(j, "lattice", "x1_origin",
                               -0.5 * spec.L * spec.dx + 0.5 * spec.dx);
    spec.validate();
    return spec;
}

CollapseParams parse_collapse(const json& j) {
    CollapseParams params;
    params.lambda = 0.5;
    params.eps_collapse = 0.02;
    params.integrator = Integrator::kExponential;
    params.scheme = Scheme::kNonlinear;
    if (j.is_null()) return params;
    check_keys(j, "collapse",
               {"lambda", "eps_collapse", "integrator", "scheme"});
    params.lambda = num_field(j, "collapse", "lambda", params.lambda);
    params.eps_collapse =
        num_field(j, "collapse", "eps_collapse", params.eps_collapse);
    const std::string integ =
        str_field(j, "collapse", "integrator", "exponential");
    if (integ == "euler")
        params.integrator = Integrator::kEuler;
    else if (integ == "exponential")
        params.integrator = Integrator::kExponential;
    else
        bad("collapse.integrator", "expected 'euler' or 'exponential'");
    const std::string scheme = str_field(j, "collapse", "scheme", "nonlinear");
    if (scheme == "linear")
        params.scheme = Scheme::kLinear;
    else if (scheme == "nonlinear")
        params.scheme = Scheme::kNonlinear;
    else
        bad("collapse.scheme", "expected 'linear' or 'nonlinear'");
    params.validate();
    return params;
}

std::vector<BranchConfig> default_branches() {
    // two equal-amplitude branches sourcing opposite unit lumps
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    BranchConfig left;
    left.c = inv_sqrt2;
    left.regions.push_back(SourceRegion{-1.0, 0.0, 10.0, 0,
                                        std::numeric_limits<int>::max()});
    BranchConfig right;
    right.c = inv_sqrt2;
    right.regions.push_back(SourceRegion{0.0, 1.0, 10.0, 0,
                                         std::numeric_limits<int>::max()});
    return {left, right};
}

ExperimentConfig parse_experiment(const json& j, const LatticeSpec& lattice) {
    ExperimentConfig exp;
    exp.sigma_final = lattice.T;
    if (j.is_null()) {
        exp.branches = default_branches();
        return exp;
    }
    check_keys(j, "experiment",
               {"branches", "paths", "foliation", "sigma_final", "n_mode"});
    if (j.contains("branches")) {
        const json& arr = j.at("branches");
        if (!arr.is_array() || arr.empty())
            bad("experiment.branches", "expected a non-empty array");
        for (std::size_t b = 0; b < arr.size(); ++b) {
            const std::string where =
                "experiment.branches[" + std::to_string(b) + "]";
            const json& bj = arr[b];
            check_keys(bj, where, {"c_re", "c_im", "regions"});
            BranchConfig bc;
            bc.c = {num_field(bj, where, "c_re", 0.0),
                    num_field(bj, where, "c_im", 0.0)};
            if (bj.contains("regions")) {
                const json& regs = bj.at("regions");
                if (!regs.is_array())
                    bad(where + ".regions", "expected an array");
                for (std::size_t r = 0; r < regs.size(); ++r) {
                    const std::string rw =
                        where + ".regions[" + std::to_string(r) + "]";
                    const json& rj = regs[r];
                    check_keys(rj, rw, {"lo", "hi", "J", "t_lo", "t_hi"});
                    SourceRegion reg;
                    reg.x1_lo = num_field(rj, rw, "lo", 0.0);
                    reg.x1_hi = num_field(rj, rw, "hi", 0.0);
                    reg.value = num_field(rj, rw, "J", 0.0);
                    reg.t_lo = int_field(rj, rw, "t_lo", 0);
                    reg.t_hi = int_field(rj, rw, "t_hi",
                                         std::numeric_limits<int>::max());
                    if (!rj.contains("lo") || !rj.contains("hi") ||
                        !rj.contains("J"))
                        bad(rw, "needs lo, hi, and J");
                    bc.regions.push_back(reg);
                }
            }
            exp.branches.push_back(bc);
        }
    } else {
        exp.branches = default_branches();
    }
    exp.paths = int_field(j, "experiment", "paths", exp.paths);
    if (exp.paths < 1) bad("experiment.paths", "needs at least one path");
    const std::string fol = str_field(j, "experiment", "foliation", "time");
    if (fol == "time")
        exp.random_foliations = false;
    else if (fol == "random")
        exp.random_foliations = true;
    else
        bad("experiment.foliation", "expected 'time' or 'random'");
    exp.sigma_final =
        int_field(j, "experiment", "sigma_final", exp.sigma_final);
    if (exp.sigma_final < 1 || exp.sigma_final > lattice.T)
        bad("experiment.sigma_final",
            "must lie in [1, T] (got " + std::to_string(exp.sigma_final) +
                " with T = " + std::to_string(lattice.T) + ")");
    const std::string nm = str_field(j, "experiment", "n_mode", "plateau");
    if (nm == "plateau")
        exp.n_mode = NMode::kPlateau;
    else if (nm == "exact")
        exp.n_mode = NMode::kExact;
    else
        bad("experiment.n_mode", "expected 'plateau' or 'exact'");

    double total = 0.0;
    for (const BranchConfig& bc : exp.branches) total += std::norm(bc.c);
    if (std::fabs(total - 1.0) > 1e-9)
        bad("experiment.branches",
            "amplitudes must satisfy sum |c|^2 = 1 (got " +
                std::to_string(total) + ")");
    return exp;
}

OutputConfig parse_output(const json& j) {
    OutputConfig out;
    if (j.is_null()) return out;
    check_keys(j, "output", {"dir", "formats"});
    out.dir = str_field(j, "output", "dir", out.dir);
    if (j.contains("formats")) {
        const json& arr = j.at("formats");
        if (!arr.is_array()) bad("output.formats", "expected an array");
        out.csv = out.json_out = out.svg = false;
        for (const json& f : arr) {
            if (!f.is_string()) bad("output.formats", "expected strings");
            const std::string s = f.get<std::string>();
            if (s == "csv")
                out.csv = true;
            else if (s == "json")
                out.json_out = true;
            else if (s == "svg")
                out.svg = true;
            else
                bad("output.formats", "unknown format '" + s + "'");
        }
    }
    return out;
}

// Branch-averaged peak energy density, the fallback stress normalization.
double fallback_t00(const LatticeSpec& lattice,
                    const ExperimentConfig& exp) {
    Grid<double> acc(lattice);
    for (const BranchConfig& bc : exp.branches) {
        const Grid<double> J = fill_regions(lattice, bc.regions);
        const double p = std::norm(bc.c);
        for (int t = 0; t < lattice.T; ++t)
            for (int i = 0; i < lattice.L; ++i)
                acc.at(i, t) += p * J.at(i, t) * J.at(i, t);
    }
    double peak = 0.0;
    for (double v : acc.v) peak = std::max(peak, v);
    return peak;
}

KernelParams parse_kernel(const json& j, const LatticeSpec& lattice,
                          const ExperimentConfig& exp) {
    KernelParams params;
    params.k = 1.0;
    params.mode = KernelParams::Mode::kStatic;
    if (!j.is_null()) {
        check_keys(j, "kernel", {"k", "kernel_mode", "T00_static"});
        params.k = num_field(j, "kernel", "k", params.k);
        const std::string mode =
            str_field(j, "kernel", "kernel_mode", "static");
        if (mode == "static")
            params.mode = KernelParams::Mode::kStatic;
        else if (mode == "plc")
            params.mode = KernelParams::Mode::kPlc;
        else
            bad("kernel.kernel_mode", "expected 'static' or 'plc'");
        if (j.contains("T00_static")) {
            params.tbar_static =
                StressTensor{num_field(j, "kernel", "T00_static", 0.0), 0.0,
                             0.0};
            params.validate();
            return params;
        }
    }
    params.tbar_static = StressTensor{fallback_t00(lattice, exp), 0.0, 0.0};
    params.validate();
    return params;
}

} // namespace

LatticeSpec RunConfig::run_lattice() const {
    LatticeSpec spec = lattice;
    if (experiment.sigma_final >= 1) spec.T = experiment.sigma_final;
    return spec;
}

BranchSet RunConfig::build_branches() const {
    const LatticeSpec spec = run_lattice();
    const KernelTable table(spec, kernel);
    BranchSet set;
    for (const BranchConfig& bc : experiment.branches) {
        BranchProfile raw;
        raw.J = fill_regions(spec, bc.regions);
        raw.E = Grid<double>(spec);
        for (int t = 0; t < spec.T; ++t)
            for (int i = 0; i < spec.L; ++i) {
                const double j = raw.J.at(i, t);
                raw.E.at(i, t) = j * j;
            }
        raw.N = Grid<double>(spec);
        BranchProfile image =
            branch_image(spec, raw, table, experiment.n_mode);
        set.push_back(Branch{
            bc.c, std::make_shared<const BranchProfile>(std::move(image))});
    }
    return set;
}

nlohmann::ordered_json RunConfig::resolved() const {
    nlohmann::ordered_json j;
    j["lattice"] = {{"L", lattice.L},
                    {"T", lattice.T},
                    {"dx", lattice.dx},
                    {"dt", lattice.dt},
                    {"x1_origin", lattice.x1_origin}};
    j["kernel"] = {
        {"k", kernel.k},
        {"kernel_mode",
         kernel.mode == KernelParams::Mode::kStatic ? "static" : "plc"},
        {"T00_static", kernel.tbar_static.t00}};
    j["collapse"] = {
        {"lambda", collapse.lambda},
        {"eps_collapse", collapse.eps_collapse},
        {"integrator",
         collapse.integrator == Integrator::kEuler ? "euler" : "exponential"},
        {"scheme",
         collapse.scheme == Scheme::kLinear ? "linear" : "nonlinear"}};
    nlohmann::ordered_json branches = nlohmann::ordered_json::array();
    for (const BranchConfig& bc : experiment.branches) {
        nlohmann::ordered_json regions = nlohmann::ordered_json::array();
        for (const SourceRegion& r : bc.regions)
            regions.push_back({{"lo", r.x1_lo},
                               {"hi", r.x1_hi},
                               {"J", r.value},
                               {"t_lo", r.t_lo},
                               {"t_hi", r.t_hi}});
        branches.push_back({{"c_re", bc.c.real()},
                            {"c_im", bc.c.imag()},
                            {"regions", regions}});
    }
    j["experiment"] = {
        {"branches", branches},
        {"paths", experiment.paths},
        {"foliation", experiment.random_foliations ? "random" : "time"},
        {"sigma_final", experiment.sigma_final},
        {"n_mode", experiment.n_mode == NMode::kPlateau ? "plateau" : "exact"}};
    nlohmann::ordered_json formats = nlohmann::ordered_json::array();
    if (output.csv) formats.push_back("csv");
    if (output.json_out) formats.push_back("json");
    if (output.svg) formats.push_back("svg");
    j["output"] = {{"dir", output.dir}, {"formats", formats}};
    j["seed"] = seed;
    return j;
}

std::string RunConfig::canonical() const { return resolved().dump(); }

std::uint64_t RunConfig::config_hash() const {
    // FNV-1a, 64-bit, over the resolved config with the output block
    // dropped: the hash names the experiment (lattice, kernel, collapse,
    // experiment, seed), not where its files land, so redirecting --out
    // reproduces identically named, byte-identical data files.
    nlohmann::ordered_json j = resolved();
    j.erase("output");
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : j.dump()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string RunConfig::hash_hex() const {
    static const char* digits = "0123456789abcdef";
    std::uint64_t h = config_hash();
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

RunConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    check_keys(j, "top level",
               {"lattice", "kernel", "collapse", "experiment", "output",
                "seed"});
    RunConfig config;
    const json null_obj;
    config.lattice =
        parse_lattice(j.contains("lattice") ? j.at("lattice") : null_obj);
    config.collapse =
        parse_collapse(j.contains("collapse") ? j.at("collapse") : null_obj);
    config.has_experiment_block = j.contains("experiment");
    config.experiment = parse_experiment(
        config.has_experiment_block ? j.at("experiment") : null_obj,
        config.lattice);
    config.kernel =
        parse_kernel(j.contains("kernel") ? j.at("kernel") : null_obj,
                     config.lattice, config.experiment);
    config.output =
        parse_output(j.contains("output") ? j.at("output") : null_obj);
    config.seed = seed_field(j, "top level", "seed", 0);
    return config;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    // a manifest embeds the resolved config under "config"
    json probe;
    try {
        probe = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (probe.is_object() && probe.contains("config") &&
        probe.contains("code_version"))
        return parse_config(probe.at("config").dump());
    return parse_config(text);
}

nlohmann::ordered_json make_manifest(const RunConfig& config) {
    nlohmann::ordered_json m;
    m["code_version"] = kCodeVersion;
    m["config_hash"] = config.hash_hex();
    m["seed"] = config.seed;
    m["config"] = config.resolved();
    return m;
}

} // namespace relc
