#pragma once

#include "sparsetomo/weighted.hpp"

#include <cmath>
#include <limits>

namespace sparsetomo::oracle {

// min Σ ω_i |x_i| over the grid {-2, -1.99, ..., 2}³ subject to ‖Ax - y‖ ≤ η (A has 3 columns).
// For each (x₁, x₂) the feasible x₃ form an interval, so the scan over x₃ is done in closed form; the
// result equals the exhaustive grid search.
inline double grid_search_l1(const Matrix& A, const Vector& y, double eta, const Vector& w, double step = 0.01) {
    const int half = static_cast<int>(std::lround(2.0 / step));
    const Vector a3 = A.col(2);
    const double qa = a3.squaredNorm();
    double best = std::numeric_limits<double>::infinity();
    for (int i = -half; i <= half; ++i)
        for (int k = -half; k <= half; ++k) {
            const double x1 = i * step, x2 = k * step;
            const double base = w[0] * std::abs(x1) + w[1] * std::abs(x2);
            if (base >= best) continue;
            const Vector r = A.col(0) * x1 + A.col(1) * x2 - y;
            // ‖r + t a3‖² ≤ η²  ⇔  qa t² + 2 (r·a3) t + ‖r‖² - η² ≤ 0
            const double qb = r.dot(a3), qc = r.squaredNorm() - eta * eta;
            double lo, hi;
            if (qa <= 0.0) {
                if (qc > 0.0) continue;
                lo = -2.0;
                hi = 2.0;
            } else {
                const double disc = qb * qb - qa * qc;
                if (disc < 0.0) continue;
                const double sq = std::sqrt(disc);
                lo = (-qb - sq) / qa;
                hi = (-qb + sq) / qa;
            }
            const int klo = std::max(-half, static_cast<int>(std::ceil(lo / step - 1e-12)));
            const int khi = std::min(half, static_cast<int>(std::floor(hi / step + 1e-12)));
            if (klo > khi) continue;
            const int kbest = klo > 0 ? klo : (khi < 0 ? khi : 0);
            best = std::min(best, base + w[2] * std::abs(kbest * step));
        }
    return best;
}

} // namespace sparsetomo::oracle
