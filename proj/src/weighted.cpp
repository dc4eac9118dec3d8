#include "sparsetomo/weighted.hpp"
#include "sparsetomo/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace sparsetomo {

namespace {

void check_sizes(const Vector& x, const WeightVector& w) {
    if (static_cast<std::size_t>(x.size()) != w.size())
        throw DimensionError("coefficient length " + std::to_string(x.size()) + " does not match weight length " +
                             std::to_string(w.size()));
}

void check_p(double p) {
    if (!(p > 0.0 && p <= 2.0)) throw DomainError("p must lie in (0, 2]");
}

double term(double xi, double wi, double p) { return std::pow(std::abs(xi), p) * std::pow(wi, 2.0 - p); }

SparseApproxResult make_result(const Vector& x, const WeightVector& w, double p, std::vector<std::size_t> support) {
    std::sort(support.begin(), support.end());
    SparseApproxResult r;
    r.approximation = Vector::Zero(x.size());
    std::vector<bool> in(x.size(), false);
    for (auto i : support) {
        in[i] = true;
        r.approximation[i] = x[i];
    }
    double e1 = 0.0, e2 = 0.0, ep = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (in[i]) continue;
        e1 += std::abs(x[i]) * w[i];
        e2 += x[i] * x[i];
        ep += term(x[i], w[i], p);
    }
    r.error_p1 = e1;
    r.error_p2 = std::sqrt(e2);
    r.error_p = std::pow(ep, 1.0 / p);
    r.weighted_size = weighted_size(support, w);
    r.support = std::move(support);
    return r;
}

} // namespace

WeightVector::WeightVector(std::vector<double> values) : values_(std::move(values)) {
    for (double v : values_)
        if (!std::isfinite(v) || v < 1.0) throw DomainError("weights must be finite and at least 1");
}

WeightVector WeightVector::ones(std::size_t n) { return WeightVector(std::vector<double>(n, 1.0)); }

double WeightVector::max() const {
    return values_.empty() ? 1.0 : *std::max_element(values_.begin(), values_.end());
}

double weighted_norm(const Vector& x, const WeightVector& w, double p) {
    check_sizes(x, w);
    check_p(p);
    if (p == 2.0) return x.norm();
    if (p == 1.0) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < x.size(); ++i) acc += std::abs(x[i]) * w[i];
        return acc;
    }
    double acc = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) acc += term(x[i], w[i], p);
    return std::pow(acc, 1.0 / p);
}

double weighted_size(std::span<const std::size_t> support, const WeightVector& w) {
    double acc = 0.0;
    for (auto i : support) {
        if (i >= w.size()) throw IndexError("index " + std::to_string(i) + " outside weight range");
        acc += w[i] * w[i];
    }
    return acc;
}

double weighted_sparsity(const Vector& x, const WeightVector& w) {
    check_sizes(x, w);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (x[i] != 0.0) acc += w[i] * w[i];
    return acc;
}

SparseApproxResult quasi_best_sparse_approx(const Vector& x, const WeightVector& w, double s, double p) {
    check_sizes(x, w);
    check_p(p);
    if (s < 0.0) throw DomainError("sparsity budget must be non-negative");
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return std::abs(x[a]) / w[a] > std::abs(x[b]) / w[b]; });
    std::vector<std::size_t> support;
    double budget = 0.0;
    for (auto i : order) {
        if (x[i] == 0.0) break;
        budget += w[i] * w[i];
        if (budget > s) break;
        support.push_back(i);
    }
    return make_result(x, w, p, std::move(support));
}

SparseApproxResult best_sparse_approx_bruteforce(const Vector& x, const WeightVector& w, double s, double p) {
    check_sizes(x, w);
    check_p(p);
    const auto n = static_cast<std::size_t>(x.size());
    if (n > 20) throw CapacityError("brute-force approximation limited to 20 indices");
    std::vector<double> size(n), gain(n);
    for (std::size_t i = 0; i < n; ++i) {
        size[i] = w[i] * w[i];
        gain[i] = term(x[i], w[i], p);
    }
    std::uint32_t best_mask = 0;
    double best_gain = -1.0;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        double sz = 0.0, g = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask >> i & 1u) {
                sz += size[i];
                g += gain[i];
            }
        if (sz <= s && g > best_gain) {
            best_gain = g;
            best_mask = mask;
        }
    }
    std::vector<std::size_t> support;
    for (std::size_t i = 0; i < n; ++i)
        if (best_mask >> i & 1u) support.push_back(i);
    return make_result(x, w, p, std::move(support));
}

double stechkin_bound(const Vector& x, const WeightVector& w, double s, double p, double q) {
    check_p(p);
    check_p(q);
    if (p >= q) throw DomainError("Stechkin bound requires p < q");
    if (s <= 0.0) throw DomainError("sparsity budget must be positive");
    return std::pow(s, 1.0 / q - 1.0 / p) * weighted_norm(x, w, p);
}

} // namespace sparsetomo
