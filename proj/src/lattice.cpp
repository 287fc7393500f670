#include "relc/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "relc/noise.hpp"

namespace relc {

void LatticeSpec::validate() const {
    if (L < 1 || T < 1) throw ConfigError("lattice: L and T must be >= 1");
    if (!(dx > 0.0) || !(dt > 0.0)) throw ConfigError("lattice: dx, dt must be > 0");
    if (dt > dx * (1.0 + 1e-12)) throw ConfigError("lattice: dt <= dx required (c = 1 advances)");
}

bool is_spacelike(const LatticeSpec& spec, const std::vector<int>& h) {
    if (static_cast<int>(h.size()) != spec.L) return false;
    for (int i = 0; i < spec.L; ++i) {
        if (h[i] < 0 || h[i] > spec.T) return false;
        if (i + 1 < spec.L &&
            std::abs(h[i + 1] - h[i]) * spec.dt > spec.dx * (1.0 + 1e-12))
            return false;
    }
    return true;
}

Surface make_surface(const LatticeSpec& spec, std::vector<int> h) {
    if (static_cast<int>(h.size()) != spec.L)
        throw ConfigError("surface: height count != L");
    for (int v : h)
        if (v < 0 || v > spec.T) throw BoundaryError("surface: height outside [0, T]");
    if (!is_spacelike(spec, h))
        throw CausalityError("surface: neighbouring heights exceed the light cone");
    return Surface{std::move(h)};
}

Surface bottom_surface(const LatticeSpec& spec) { return Surface{std::vector<int>(spec.L, 0)}; }
Surface top_surface(const LatticeSpec& spec) { return Surface{std::vector<int>(spec.L, spec.T)}; }

bool precedes(const Surface& s1, const Surface& s2) {
    if (s1.h.size() != s2.h.size()) return false;
    for (std::size_t i = 0; i < s1.h.size(); ++i)
        if (s1.h[i] > s2.h[i]) return false;
    return true;
}

bool advance_allowed(const LatticeSpec& spec, const Surface& s, int i) {
    if (i < 0 || i >= spec.L) return false;
    if (s.h[i] >= spec.T) return false;
    const int s_max = spec.max_step();
    if (i > 0 && s.h[i] + 1 - s.h[i - 1] > s_max) return false;
    if (i + 1 < spec.L && s.h[i] + 1 - s.h[i + 1] > s_max) return false;
    return true;
}

Surface advance(const LatticeSpec& spec, const Surface& s, int i) {
    if (i < 0 || i >= spec.L) throw BoundaryError("advance: site index out of range");
    if (s.h[i] >= spec.T) throw BoundaryError("advance: site already at the top level");
    if (!advance_allowed(spec, s, i))
        throw CausalityError("advance: step at site " + std::to_string(i) +
                             " would leave a neighbour's light cone");
    Surface out = s;
    out.h[i] += 1;
    return out;
}

Foliation standard_foliation(const LatticeSpec& spec) {
    Foliation f;
    f.order.reserve(static_cast<std::size_t>(spec.L) * spec.T);
    for (int t = 0; t < spec.T; ++t)
        for (int i = 0; i < spec.L; ++i) f.order.push_back(Cell{i, t});
    return f;
}

Foliation random_foliation(const LatticeSpec& spec, std::uint64_t seed) {
    Foliation f;
    f.seed = seed;
    f.random = true;
    f.order.reserve(static_cast<std::size_t>(spec.L) * spec.T);
    Surface s = bottom_surface(spec);

    // Candidate set of allowed sites, updated incrementally around each move.
    std::vector<int> cand;
    std::vector<int> pos(spec.L, -1); // pos[i] = index in cand, -1 if absent
    for (int i = 0; i < spec.L; ++i)
        if (advance_allowed(spec, s, i)) {
            pos[i] = static_cast<int>(cand.size());
            cand.push_back(i);
        }

    auto refresh = [&](int i) {
        if (i < 0 || i >= spec.L) return;
        const bool ok = advance_allowed(spec, s, i);
        if (ok && pos[i] < 0) {
            pos[i] = static_cast<int>(cand.size());
            cand.push_back(i);
        } else if (!ok && pos[i] >= 0) {
            const int j = pos[i];
            const int last = cand.back();
            cand[j] = last;
            pos[last] = j;
            cand.pop_back();
            pos[i] = -1;
        }
    };

    SequenceRng rng(mix_seed(seed, kStreamFoliation));
    const std::size_t total = static_cast<std::size_t>(spec.L) * spec.T;
    while (f.order.size() < total) {
        const int i = cand[static_cast<std::size_t>(rng.below(cand.size()))];
        f.order.push_back(Cell{i, s.h[i]});
        s.h[i] += 1;
        refresh(i - 1);
        refresh(i);
        refresh(i + 1);
    }
    return f;
}

bool in_past_cone(const LatticeSpec& spec, const Cell& x, const Cell& y) {
    if (y.t >= x.t) return false;
    return std::abs(y.i - x.i) * spec.dx <= (x.t - y.t) * spec.dt * (1.0 + 1e-12);
}

bool in_future_cone(const LatticeSpec& spec, const Cell& x, const Cell& y) {
    if (y.t <= x.t) return false;
    return std::abs(y.i - x.i) * spec.dx <= (y.t - x.t) * spec.dt * (1.0 + 1e-12);
}

int cone_reach(const LatticeSpec& spec, int dt_steps) {
    return static_cast<int>(dt_steps * spec.dt / spec.dx * (1.0 + 1e-12));
}

std::vector<Cell> past_cone(const LatticeSpec& spec, const Cell& x) {
    std::vector<Cell> out;
    for (int t = x.t - 1; t >= 0; --t) {
        const int r = cone_reach(spec, x.t - t);
        const int lo = std::max(0, x.i - r);
        const int hi = std::min(spec.L - 1, x.i + r);
        for (int i = lo; i <= hi; ++i) out.push_back(Cell{i, t});
    }
    return out;
}

std::vector<Cell> future_cone(const LatticeSpec& spec, const Cell& x) {
    std::vector<Cell> out;
    for (int t = x.t + 1; t < spec.T; ++t) {
        const int r = cone_reach(spec, t - x.t);
        const int lo = std::max(0, x.i - r);
        const int hi = std::min(spec.L - 1, x.i + r);
        for (int i = lo; i <= hi; ++i) out.push_back(Cell{i, t});
    }
    return out;
}

Surface plc_surface(const LatticeSpec& spec, const Cell& x) {
    Surface s;
    s.h.resize(spec.L);
    for (int j = 0; j < spec.L; ++j) {
        const double v = std::abs(j - x.i) * spec.dx / spec.dt;
        const int drop = static_cast<int>(std::ceil(v - 1e-9 * std::max(1.0, v)));
        s.h[j] = std::max(0, x.t - drop);
    }
    return s;
}

} // namespace relc
