#pragma once

#include <cstdint>
#include <vector>

#include "relc/errors.hpp"

namespace relc {

// 1+1D spacetime lattice. Site i carries spatial coordinate
// x1 = x1_origin + i*dx, time level t carries x0 = t*dt. A cell (i,t) is the
// unit of advance: taking site i from height t to t+1. Units c = 1; the
// lattice requires dt <= dx so single-site advances can stay spacelike.
struct LatticeSpec {
    int L = 1;              // spatial sites
    int T = 1;              // time levels
    double dx = 1.0;
    double dt = 1.0;
    double x1_origin = 0.0;

    double domega() const { return dx * dt; }
    double x1(int i) const { return x1_origin + i * dx; }
    int cells() const { return L * T; }

    // Largest height difference between neighbouring sites that is still
    // spacelike: |dh| * dt <= dx.
    int max_step() const { return static_cast<int>(dx / dt * (1.0 + 1e-12)); }

    void validate() const;
};

struct Cell {
    int i = 0;
    int t = 0;

    bool operator==(const Cell&) const = default;
};

// Spacelike surface: per-site heights h[i] in [0, T], neighbouring heights
// within the light cone. h[i] = k means cells (i, 0..k-1) lie strictly below
// the surface and (i, k) is the next advance at site i.
struct Surface {
    std::vector<int> h;

    bool operator==(const Surface&) const = default;
};

bool is_spacelike(const LatticeSpec& spec, const std::vector<int>& h);
Surface make_surface(const LatticeSpec& spec, std::vector<int> h);
Surface bottom_surface(const LatticeSpec& spec);
Surface top_surface(const LatticeSpec& spec);

// Partial order: sigma1 precedes sigma2 iff no point of sigma1 lies to the
// causal future of sigma2; on the lattice this is elementwise h1[i] <= h2[i].
bool precedes(const Surface& s1, const Surface& s2);

// Single-site advance. Throws BoundaryError at the top edge, CausalityError
// if the advanced surface would leave a neighbour's light cone.
Surface advance(const LatticeSpec& spec, const Surface& s, int i);
bool advance_allowed(const LatticeSpec& spec, const Surface& s, int i);

// Maximal ordered chain of surfaces from bottom to top, stored as the
// sequence of advanced cells. order[k] = (i, t) means step k advanced site i
// from height t to t+1.
struct Foliation {
    std::vector<Cell> order;
    std::uint64_t seed = 0;     // 0 for the standard foliation
    bool random = false;
};

// Left-to-right sweep within each time level: (0,0), (1,0), ..., (L-1,0),
// (0,1), ...
Foliation standard_foliation(const LatticeSpec& spec);

// Uniformly random allowed advance at every step; deterministic per seed.
Foliation random_foliation(const LatticeSpec& spec, std::uint64_t seed);

// Causal cones at c = 1, boundary included: y is in the past cone of x iff
// y.t < x.t and |y.i - x.i| * dx <= (x.t - y.t) * dt.
bool in_past_cone(const LatticeSpec& spec, const Cell& x, const Cell& y);
bool in_future_cone(const LatticeSpec& spec, const Cell& x, const Cell& y);
std::vector<Cell> past_cone(const LatticeSpec& spec, const Cell& x);
std::vector<Cell> future_cone(const LatticeSpec& spec, const Cell& x);

// Spatial reach of the cone at time separation dt_steps, in sites.
int cone_reach(const LatticeSpec& spec, int dt_steps);

// Surface hugging the past light cone of x from below:
// h[j] = max(0, x.t - ceil(|j - i| dx/dt)). x lies on the result and every
// cell strictly below it is in past_cone(x). Spacelike (exactly) whenever
// dx/dt is an integer.
Surface plc_surface(const LatticeSpec& spec, const Cell& x);

} // namespace relc
