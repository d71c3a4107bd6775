#pragma once

// Central finite-difference oracle for gradient checks. Independent of the
// analytic backward paths: it only calls the forward function.

#include <cmath>
#include <functional>
#include <vector>

#include "fsag/tensor.hpp"

namespace fsag::testsupport {

using fsag::DTensor;

// d scalar / d x for every element of x, via central differences.
inline std::vector<double> fd_gradient(const std::function<double(const DTensor&)>& f,
                                       DTensor x, double step = 1e-4) {
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + step;
        const double hi = f(x);
        x[i] = orig - step;
        const double lo = f(x);
        x[i] = orig;
        grad[i] = (hi - lo) / (2.0 * step);
    }
    return grad;
}

inline std::vector<double> fd_gradient_vec(const std::function<double(const std::vector<double>&)>& f,
                                           std::vector<double> x, double step = 1e-4) {
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + step;
        const double hi = f(x);
        x[i] = orig - step;
        const double lo = f(x);
        x[i] = orig;
        grad[i] = (hi - lo) / (2.0 * step);
    }
    return grad;
}

// max_i |a_i - b_i| / max(1, |a_i|, |b_i|)
inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
}

}  // namespace fsag::testsupport
