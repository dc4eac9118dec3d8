#pragma once

#include "sparsetomo/models.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sparsetomo {

// Per-atom maxima of ‖F_t φ_i‖ over a node set, summarized per scale.
struct CoherenceProfile {
    std::vector<int> scales;           // distinct scales, ascending
    std::vector<double> scale_max;     // max over atoms of that scale
    std::vector<double> atom_max;      // max over nodes, per listed atom
    double slope = 0.0;                // regression slope of log₂ scale_max against the scale
};

CoherenceProfile coherence_profile(const ForwardModel& model, std::span<const std::size_t> atoms,
                                   const std::vector<double>& nodes);

struct GramOptions {
    std::size_t angles = 0;      // initial node count; 0 selects max(64, 8·2^{j_max})
    int j_max = 0;               // finest scale present, used for the default node count
    bool refine = true;          // double the node count until σ_min moves by at most refine_tol
    double refine_tol = 0.01;
    int max_doublings = 4;
    double b = 0.5;              // exponent for the quasi-diagonal weights
    std::size_t probes = 200;    // random probe vectors for the quasi-diagonal constants
    std::size_t coherence_angles = 64;
    std::uint64_t seed = 0;
};

struct GramCertificate {
    std::vector<std::size_t> lambda;
    std::vector<int> scales;
    Matrix g2;                   // P_Λ Φ F*F Φ* ι_Λ
    Matrix g;                    // symmetric square root of g2
    double sigma_min = 0.0;
    double sigma_max = 0.0;
    double inv_norm = 0.0;       // ‖G^{-1}‖
    bool fbi_violation = false;
    std::size_t nodes = 0;       // quadrature nodes behind g2
    double refine_shift = 0.0;   // relative σ_min change at the last doubling
    double b_fit = 0.0;
    double c_hat = 0.0;
    double C_hat = 0.0;
    double coherence_uniform = 0.0;  // max_{t,i} ‖F_t φ_i‖
    double d_exponent = 0.0;         // d_{j,n} = 2^{d_exponent j}
    double coherence_B = 0.0;        // max_{t,i} ‖F_t φ_i‖ d_{j,n}
    double relative_coherence = 0.0; // max_i B d_{j,n}^{-1} 2^{b j}
    CoherenceProfile coherence;
};

// Gram matrix on Λ from the model's quadrature rule with σ_min-based refinement.
GramCertificate compute_gram(std::shared_ptr<const ForwardModel> model, std::vector<std::size_t> lambda,
                             const GramOptions& options = {});

// Certificate from an explicit G*G (no refinement, no coherence measurement).
GramCertificate certificate_from_gram(const Matrix& g2, std::vector<int> scales, double b = 0.5);

struct QuasiDiag {
    double c_hat = 0.0;
    double C_hat = 0.0;
    double b_fit = 0.0;
};

// Ratios ‖FΦ*x‖² / Σ 2^{-2bj}|x|² over singletons and random probes, with b fitted from the diagonal of G*G.
QuasiDiag estimate_quasi_diag(const Matrix& g2, std::span<const int> scales, std::size_t probes, std::uint64_t seed);
QuasiDiag estimate_quasi_diag(std::shared_ptr<const ForwardModel> model, int j_max, const GramOptions& options = {});

enum class RipMethod { bruteforce, montecarlo };

struct RipEstimate {
    double lambda = 0.0;
    double delta_star = 0.0;
    RipMethod method = RipMethod::bruteforce;
    std::size_t trials_or_supports = 0;
    std::size_t samples_m = 0;
    std::vector<std::size_t> worst_support;
};

// Largest |eigenvalue| of the pencil ((A*A - G*G)_SS, (G*G)_SS).
double support_deviation(const Matrix& ata, const Matrix& gtg, std::span<const std::size_t> support);

// Exact δ* over all maximal supports with ω(S) ≤ λ; at most 16 columns.
RipEstimate delta_star_bruteforce(const Matrix& ata, const Matrix& gtg, const WeightVector& w, double lambda);
RipEstimate delta_star_bruteforce(const SampledSystem& system, const GramCertificate& cert, const WeightVector& w,
                                  double lambda);

// Lower bound on δ* from random greedy-filled supports.
RipEstimate delta_star_montecarlo(const Matrix& ata, const Matrix& gtg, const WeightVector& w, double lambda,
                                  std::size_t trials, std::uint64_t seed);
RipEstimate delta_star_montecarlo(const SampledSystem& system, const GramCertificate& cert, const WeightVector& w,
                                  double lambda, std::size_t trials, std::uint64_t seed);

enum class ComplexityVariant { uniform, relative, radon_j0, radon_s };

std::string to_string(ComplexityVariant variant);

struct ComplexityInputs {
    double s = 2.0;
    double dictionary_size = 2.0; // M
    double gamma = 0.1;           // failure probability
    double c0 = 1.0;
    double zeta = 0.0;
    int j0 = 0;
    double max_weight = 1.0;      // ‖ω‖_∞
};

// τ for the variant, before the logarithmic factors.
double complexity_tau(const GramCertificate& cert, const ComplexityInputs& in, ComplexityVariant variant);
std::size_t sample_complexity(const GramCertificate& cert, const ComplexityInputs& in, ComplexityVariant variant);

struct TruncationReport {
    double residual = 0.0;       // ‖Q A P_Λ^⊥ x†‖
    double tail_norm = 0.0;      // r = ‖P_Λ^⊥ x†‖₂
    double operator_norm = 0.0;  // max_k ‖F_{t_k} Φ* ι_{Γ∖Λ}‖ on the tail support
    double bound = 0.0;          // c_ν^{-1/2} · operator_norm · r
};

// x_dagger is indexed by the whole dictionary of the system's model.
TruncationReport truncation_residual(const SampledSystem& system, const Vector& x_dagger);

struct RnspReport {
    double rho = 0.5;
    double kappa = 0.0;
    double s = 0.0;
    double lambda_required = 0.0; // 135 ‖G^{-1}‖² ‖G‖² s
    std::size_t trials = 0;
    std::size_t violations = 0;
    double worst_ratio = 0.0;     // max ‖x_S‖₂ / (ρ/√s ‖x_{S^c}‖_{1,ω} + κ‖Ax‖)
};

// Random search for violations of ‖x_S‖₂ ≤ ρ/√s ‖x_{S^c}‖_{1,ω} + κ ‖QAx‖ with ω(S) ≤ s.
RnspReport rnsp_witness(const SampledSystem& system, const GramCertificate& cert, const WeightVector& w, double s,
                        std::size_t trials, std::uint64_t seed);

} // namespace sparsetomo
