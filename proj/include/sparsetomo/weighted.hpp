#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace sparsetomo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Weights ω_i ≥ 1 over a finite index set.
class WeightVector {
public:
    explicit WeightVector(std::vector<double> values);
    static WeightVector ones(std::size_t n);

    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    std::span<const double> values() const { return values_; }
    double max() const;

private:
    std::vector<double> values_;
};

struct SparseApproxResult {
    std::vector<std::size_t> support; // ascending
    Vector approximation;             // x restricted to support
    double error_p1 = 0.0;            // ‖x_{S^c}‖_{1,ω}
    double error_p2 = 0.0;            // ‖x_{S^c}‖_2
    double error_p = 0.0;             // ‖x_{S^c}‖_{p,ω} for the requested p
    double weighted_size = 0.0;       // ω(S)
};

// (Σ |x_i|^p ω_i^{2-p})^{1/p}, p ∈ (0, 2].
double weighted_norm(const Vector& x, const WeightVector& w, double p);

// Σ_{i∈S} ω_i².
double weighted_size(std::span<const std::size_t> support, const WeightVector& w);

// Weighted size of supp(x) under the exact-zero convention.
double weighted_sparsity(const Vector& x, const WeightVector& w);

// Greedy prefix of the non-increasing rearrangement of |x_i|/ω_i (ties by index).
SparseApproxResult quasi_best_sparse_approx(const Vector& x, const WeightVector& w, double s, double p);

// Exhaustive search over supports with ω(S) ≤ s; at most 20 indices.
SparseApproxResult best_sparse_approx_bruteforce(const Vector& x, const WeightVector& w, double s, double p);

// s^{1/q - 1/p} ‖x‖_{p,ω} for 0 < p < q ≤ 2.
double stechkin_bound(const Vector& x, const WeightVector& w, double s, double p, double q);

} // namespace sparsetomo
