#pragma once

#include "sparsetomo/models.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace sparsetomo {

struct SolveConfig {
    double zeta = 0.0;        // W = diag(2^{b j}), objective ‖W^{-ζ} x‖_{1,ω}
    double b = 0.5;
    double eta = 0.0;         // constraint radius on ‖Q(Ax - y)‖
    int max_iters = 50000;
    double tol_gap = 1e-8;    // relative primal-dual gap
    double tol_feas = 1e-6;   // relative slack on η
    double tol_abs = 1e-10;   // absolute slack relative to ‖Qy‖, covers η = 0
    double step_ratio = 1.0;  // τ/σ = step_ratio²
    int check_every = 10;
    std::optional<std::filesystem::path> trace;
};

enum class SolveStatus { optimal, max_iters, infeasible };

std::string to_string(SolveStatus status);

struct SolveResult {
    Vector x_hat;
    double objective = 0.0;
    double residual = 0.0;
    int iterations = 0;
    double gap = 0.0;         // relative certified gap
    SolveStatus status = SolveStatus::max_iters;
    double penalty = 0.0;     // set by the Lagrangian path
};

// min ‖W^{-ζ} x‖_{1,ω} subject to ‖Q(Ax - y)‖ ≤ η over the columns of the system.
SolveResult solve_constrained_l1(const SampledSystem& system, const WeightVector& w, const SolveConfig& cfg);

// For each penalty: min penalty ‖W^{-ζ} x‖_{1,ω} + ½‖Q(Ax - y)‖², warm-started along the grid.
std::vector<SolveResult> solve_unconstrained_path(const SampledSystem& system, const WeightVector& w,
                                                  const std::vector<double>& penalties, const SolveConfig& cfg);

// Image Φ* ι_Λ x̂ on the atlas grid.
Image reconstruct_image(const SolveResult& result, const DictionaryAtlas& atlas, std::span<const std::size_t> lambda);

} // namespace sparsetomo
