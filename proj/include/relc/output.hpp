#pragma once

#include <complex>
#include <string>
#include <vector>

#include <json.hpp>

#include "relc/dynamics.hpp"
#include "relc/ensemble.hpp"
#include "relc/lattice.hpp"
#include "relc/profiles.hpp"

namespace relc {

// ---------------------------------------------------------------------------
// File artifacts. Every number is printed with %.17g so values round-trip
// exactly and reruns with the same (config, seed) are byte-identical.
// ---------------------------------------------------------------------------

std::string format_double(double v);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::string to_string() const;
};

// Curve table: x0, meanVar, stderr, examplePathVar (one row per time level).
CsvTable variance_curve_table(const LatticeSpec& spec,
                              const EnsembleResult& r);
// Per-path table: path, outcome, collapse_time, final_norm2, w_0..w_{K-1}.
CsvTable paths_table(const EnsembleResult& r);
// Per-advance trace: step, i, t, dW, dB, norm2, meanN, varIntegral.
CsvTable trace_table(const PathRecord& rec);
// Grids: i, t, value — and i, t, re, im for record amplitudes.
CsvTable grid_table(const LatticeSpec& spec, const Grid<double>& g);
CsvTable grid_table(const LatticeSpec& spec,
                    const Grid<std::complex<double>>& g);

// Standalone SVG line plot of the mean variance curve (thick) with the
// example path overlaid (thin). Self-contained, no external references.
std::string variance_curve_svg(const LatticeSpec& spec,
                               const EnsembleResult& r);

// Filesystem helpers (throw ResourceError on failure).
void ensure_dir(const std::string& dir);
std::string join_path(const std::string& dir, const std::string& name);
void write_text_file(const std::string& path, const std::string& content);
void write_json_file(const std::string& path, const nlohmann::ordered_json& j);

} // namespace relc
