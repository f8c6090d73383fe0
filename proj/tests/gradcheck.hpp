#pragma once

// Central finite-difference gradient oracle shared by the gradient tests and
// the acceptance suite. Builds the graph twice per perturbed coordinate and
// compares against the tape's reverse-mode result.

#include <cmath>
#include <functional>
#include <vector>

#include "mtts/tape.hpp"

namespace gradcheck {

// f: flat parameter vector -> scalar loss (rebuilds the whole graph).
// analytic: gradient produced by the implementation under test.
inline double max_rel_error(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, const std::vector<double>& analytic,
    double step = 1e-5) {
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + step;
        const double up = f(x);
        x[i] = keep - step;
        const double down = f(x);
        x[i] = keep;
        const double fd = (up - down) / (2.0 * step);
        const double denom =
            std::max({1.0, std::abs(fd), std::abs(analytic[i])});
        worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
    }
    return worst;
}

}  // namespace gradcheck
