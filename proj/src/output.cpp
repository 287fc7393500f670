#include "relc/output.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "relc/errors.hpp"

namespace relc {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string CsvTable::to_string() const {
    std::string out;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c) out += ',';
        out += header[c];
    }
    out += '\n';
    for (const std::vector<double>& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out += ',';
            out += format_double(row[c]);
        }
        out += '\n';
    }
    return out;
}

CsvTable variance_curve_table(const LatticeSpec& spec,
                              const EnsembleResult& r) {
    CsvTable t;
    t.header = {"x0", "meanVar", "stderr", "examplePathVar"};
    for (std::size_t l = 0; l < r.var_mean.size(); ++l)
        t.rows.push_back({static_cast<double>(l) * spec.dt, r.var_mean[l],
                          r.var_se[l], r.example_var[l]});
    return t;
}

CsvTable paths_table(const EnsembleResult& r) {
    CsvTable t;
    t.header = {"path", "outcome", "collapse_time", "final_norm2"};
    for (int j = 0; j < r.n_branches; ++j)
        t.header.push_back("w_" + std::to_string(j));
    for (int p = 0; p < r.n_paths; ++p) {
        std::vector<double> row = {static_cast<double>(p),
                                   static_cast<double>(r.outcomes[p]),
                                   r.collapse_times[p], r.final_norm2[p]};
        for (int j = 0; j < r.n_branches; ++j)
            row.push_back(r.weight_at(p, j));
        t.rows.push_back(std::move(row));
    }
    return t;
}

CsvTable trace_table(const PathRecord& rec) {
    CsvTable t;
    t.header = {"step", "i", "t", "dW", "dB", "norm2", "meanN", "varIntegral"};
    for (std::size_t s = 0; s < rec.steps.size(); ++s) {
        const StepTrace& st = rec.steps[s];
        t.rows.push_back({static_cast<double>(s),
                          static_cast<double>(st.cell.i),
                          static_cast<double>(st.cell.t), st.dw, st.db,
                          st.norm2, st.mean_n, st.var_integral});
    }
    return t;
}

CsvTable grid_table(const LatticeSpec& spec, const Grid<double>& g) {
    CsvTable t;
    t.header = {"i", "t", "value"};
    for (int tt = 0; tt < spec.T; ++tt)
        for (int i = 0; i < spec.L; ++i)
            t.rows.push_back({static_cast<double>(i), static_cast<double>(tt),
                              g.at(i, tt)});
    return t;
}

CsvTable grid_table(const LatticeSpec& spec,
                    const Grid<std::complex<double>>& g) {
    CsvTable t;
    t.header = {"i", "t", "re", "im"};
    for (int tt = 0; tt < spec.T; ++tt)
        for (int i = 0; i < spec.L; ++i)
            t.rows.push_back({static_cast<double>(i), static_cast<double>(tt),
                              g.at(i, tt).real(), g.at(i, tt).imag()});
    return t;
}

namespace {

std::string fmt_coord(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.8g", v);
    return buf;
}

std::string polyline(const std::vector<double>& ys, double y_max, double x0,
                     double y0, double w, double h, const char* stroke,
                     double width) {
    std::string pts;
    const std::size_t n = ys.size();
    for (std::size_t l = 0; l < n; ++l) {
        const double fx = n > 1 ? static_cast<double>(l) / (n - 1) : 0.0;
        const double fy = y_max > 0.0 ? ys[l] / y_max : 0.0;
        if (l) pts += ' ';
        pts += fmt_coord(x0 + fx * w);
        pts += ',';
        pts += fmt_coord(y0 + (1.0 - fy) * h);
    }
    std::string out = "  <polyline fill=\"none\" stroke=\"";
    out += stroke;
    out += "\" stroke-width=\"";
    out += fmt_coord(width);
    out += "\" points=\"";
    out += pts;
    out += "\"/>\n";
    return out;
}

} // namespace

std::string variance_curve_svg(const LatticeSpec& spec,
                               const EnsembleResult& r) {
    const double W = 640.0, H = 400.0;
    const double ml = 60.0, mr = 20.0, mt = 20.0, mb = 40.0;
    const double pw = W - ml - mr, ph = H - mt - mb;
    double y_max = 0.0;
    for (double v : r.var_mean) y_max = std::max(y_max, v);
    for (double v : r.example_var) y_max = std::max(y_max, v);
    const double x_max =
        r.var_mean.empty() ? 0.0
                           : (static_cast<double>(r.var_mean.size()) - 1.0) *
                                 spec.dt;

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" "
         "height=\"400\" viewBox=\"0 0 640 400\">\n";
    s += "  <rect x=\"0\" y=\"0\" width=\"640\" height=\"400\" "
         "fill=\"#ffffff\"/>\n";
    // axes
    s += "  <line x1=\"" + fmt_coord(ml) + "\" y1=\"" + fmt_coord(mt) +
         "\" x2=\"" + fmt_coord(ml) + "\" y2=\"" + fmt_coord(mt + ph) +
         "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    s += "  <line x1=\"" + fmt_coord(ml) + "\" y1=\"" + fmt_coord(mt + ph) +
         "\" x2=\"" + fmt_coord(ml + pw) + "\" y2=\"" + fmt_coord(mt + ph) +
         "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    if (!r.example_var.empty())
        s += polyline(r.example_var, y_max, ml, mt, pw, ph, "#999999", 1.0);
    if (!r.var_mean.empty())
        s += polyline(r.var_mean, y_max, ml, mt, pw, ph, "#1f6fb4", 2.0);
    s += "  <text x=\"" + fmt_coord(ml + pw / 2) + "\" y=\"" +
         fmt_coord(H - 10.0) +
         "\" font-family=\"sans-serif\" font-size=\"14\" "
         "text-anchor=\"middle\">x0 (0 to " +
         fmt_coord(x_max) + ")</text>\n";
    s += "  <text x=\"15\" y=\"" + fmt_coord(mt + ph / 2) +
         "\" font-family=\"sans-serif\" font-size=\"14\" "
         "text-anchor=\"middle\" transform=\"rotate(-90 15 " +
         fmt_coord(mt + ph / 2) +
         ")\">variance integral (0 to " + fmt_coord(y_max) + ")</text>\n";
    s += "</svg>\n";
    return s;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw ResourceError("cannot create directory '" + dir +
                            "': " + ec.message());
}

std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ResourceError("cannot open '" + path + "' for writing");
    out << content;
    out.close();
    if (!out) throw ResourceError("failed writing '" + path + "'");
}

void write_json_file(const std::string& path,
                     const nlohmann::ordered_json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

} // namespace relc
