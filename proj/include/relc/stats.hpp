#pragma once

#include <cstddef>
#include <vector>

namespace relc {

// Compensated accumulator. Foliation-independence checks compare sums of the
// same increments taken in different orders, so plain summation's
// order-dependent rounding would eat the 1e-12 tolerance.
struct KahanSum {
    double s = 0.0;
    double c = 0.0;

    void add(double x) {
        const double y = x - c;
        const double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    double value() const { return s; }
};

struct MeanSE {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

MeanSE mean_se(const std::vector<double>& v);
double median(std::vector<double> v); // by value: scrambles its copy

// Upper tail of the chi-square distribution with k degrees of freedom,
// via the regularized incomplete gamma function Q(k/2, x/2).
double chi2_sf(double x, int dof);

// Regularized upper incomplete gamma Q(a, x) (series + Lentz continued
// fraction, the standard split at x = a + 1).
double gamma_q(double a, double x);

} // namespace relc
