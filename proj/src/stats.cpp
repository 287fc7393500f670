#include "relc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace relc {

MeanSE mean_se(const std::vector<double>& v) {
    MeanSE r;
    r.n = v.size();
    if (v.empty()) return r;
    KahanSum s;
    for (double x : v) s.add(x);
    r.mean = s.value() / static_cast<double>(v.size());
    if (v.size() < 2) return r;
    KahanSum q;
    for (double x : v) q.add((x - r.mean) * (x - r.mean));
    const double var = q.value() / static_cast<double>(v.size() - 1);
    r.se = std::sqrt(var / static_cast<double>(v.size()));
    return r;
}

double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median of empty set");
    const std::size_t m = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + m, v.end());
    double hi = v[m];
    if (v.size() % 2 == 1) return hi;
    std::nth_element(v.begin(), v.begin() + m - 1, v.begin() + m);
    return 0.5 * (v[m - 1] + hi);
}

namespace {

double gamma_q_series(double a, double x) {
    // P(a,x) by series, return Q = 1 - P
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < 500; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
    }
    return 1.0 - sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_cf(double a, double x) {
    // Lentz continued fraction for Q(a,x)
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

} // namespace

double gamma_q(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_q domain");
    if (x == 0.0) return 1.0;
    return (x < a + 1.0) ? gamma_q_series(a, x) : gamma_q_cf(a, x);
}

double chi2_sf(double x, int dof) {
    if (dof < 1) throw std::invalid_argument("chi2_sf dof");
    if (x <= 0.0) return 1.0;
    return gamma_q(0.5 * dof, 0.5 * x);
}

} // namespace relc
