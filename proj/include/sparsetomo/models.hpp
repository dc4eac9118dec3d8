#pragma once

#include "sparsetomo/wavelet.hpp"

#include <Eigen/Sparse>

#include <complex>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sparsetomo {

using SparseMatrix = Eigen::SparseMatrix<double>;

enum class ModelKind { radon, fanbeam, fourier_wavelet, legendre_point, synthetic_diagonal };

std::string to_string(ModelKind kind);

// Nodes and weights with Σ_k weights[k] g(nodes[k]) ≈ ∫ g dμ.
struct Quadrature {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// Family (F_t) of measurement operators applied to dictionary atoms. Measurement vectors are expressed in
// weighted coordinates, so that their Euclidean norm is the H₂ norm.
class ForwardModel {
public:
    virtual ~ForwardModel() = default;

    virtual ModelKind kind() const = 0;
    virtual std::size_t dictionary_size() const = 0;
    virtual int scale_of(std::size_t atom) const = 0;
    virtual std::size_t measurement_size() const = 0;

    virtual double density(double t) const = 0;
    virtual double density_lower_bound() const = 0;
    virtual std::vector<double> draw_samples(std::size_t m, std::uint64_t seed) const = 0;
    virtual Quadrature quadrature(std::size_t n) const = 0;

    // Column k holds F_t φ_{atoms[k]} in weighted coordinates.
    virtual SparseMatrix block(double t, std::span<const std::size_t> atoms) const = 0;

    Vector apply(double t, std::span<const std::size_t> atoms, const Vector& x) const;
};

// Parallel-beam transform R_θ u(s) = ∫ u(s e_θ + t e_θ^⊥) dt, sampled on an s-grid.
class RadonModel : public ForwardModel {
public:
    // ds = 0 selects the atlas grid step.
    explicit RadonModel(std::shared_ptr<const DictionaryAtlas> atlas, double ds = 0.0);

    ModelKind kind() const override { return ModelKind::radon; }
    std::size_t dictionary_size() const override { return atlas_->size(); }
    int scale_of(std::size_t atom) const override { return atlas_->index(atom).scale; }
    std::size_t measurement_size() const override { return s_grid_.size(); }
    double density(double) const override { return 1.0; }
    double density_lower_bound() const override { return 1.0; }
    std::vector<double> draw_samples(std::size_t m, std::uint64_t seed) const override;
    Quadrature quadrature(std::size_t n) const override;
    SparseMatrix block(double theta, std::span<const std::size_t> atoms) const override;

    const DictionaryAtlas& atlas() const { return *atlas_; }
    std::shared_ptr<const DictionaryAtlas> atlas_ptr() const { return atlas_; }
    double ds() const { return ds_; }
    const std::vector<double>& s_grid() const { return s_grid_; }

    // Unweighted values R_θ φ(s_l).
    Vector atom_projection(std::size_t atom, double theta) const;
    // Unweighted line integrals of a pixel image by bilinear interpolation at step h/2.
    Vector image_projection(const Image& u, double theta) const;
    // ‖v‖ with the quadrature weight Δs.
    double norm(const Vector& v) const;

private:
    std::shared_ptr<const DictionaryAtlas> atlas_;
    double ds_;
    std::vector<double> s_grid_;
};

// Divergent-beam transform D_θ u(α) = ∫ u(ρ e_θ + t e_{θ+α}) dt, sampled on an α-grid.
class FanBeamModel : public ForwardModel {
public:
    // d = 0 selects the smallest radius enclosing every atom support; rho = 0 selects d + 2;
    // dalpha = 0 selects atlas step / ρ.
    explicit FanBeamModel(std::shared_ptr<const DictionaryAtlas> atlas, double rho = 0.0, double d = 0.0,
                          double dalpha = 0.0);

    ModelKind kind() const override { return ModelKind::fanbeam; }
    std::size_t dictionary_size() const override { return atlas_->size(); }
    int scale_of(std::size_t atom) const override { return atlas_->index(atom).scale; }
    std::size_t measurement_size() const override { return alpha_grid_.size(); }
    double density(double) const override { return 1.0; }
    double density_lower_bound() const override { return 1.0; }
    std::vector<double> draw_samples(std::size_t m, std::uint64_t seed) const override;
    Quadrature quadrature(std::size_t n) const override;
    SparseMatrix block(double theta, std::span<const std::size_t> atoms) const override;

    const DictionaryAtlas& atlas() const { return *atlas_; }
    double rho() const { return rho_; }
    double d() const { return d_; }
    double dalpha() const { return dalpha_; }
    const std::vector<double>& alpha_grid() const { return alpha_grid_; }

    Vector atom_projection(std::size_t atom, double theta) const;
    // Line integrals of an image vanishing outside B_d.
    Vector image_projection(const Image& u, double theta) const;
    double norm(const Vector& v) const;

private:
    std::shared_ptr<const DictionaryAtlas> atlas_;
    double rho_;
    double d_;
    double dalpha_;
    std::vector<double> alpha_grid_;
};

// Fourier coefficients 𝓕u(t), |t| ≤ N, of periodized 1D Daubechies wavelets on the torus [0, 1).
// The complex value is represented by two rows (real and imaginary part).
class FourierWaveletModel : public ForwardModel {
public:
    // N = 0 selects 2^{j_max+3}.
    FourierWaveletModel(const WaveletFilter& filter, int j_max, int bandwidth = 0);

    ModelKind kind() const override { return ModelKind::fourier_wavelet; }
    std::size_t dictionary_size() const override { return labels_.size(); }
    int scale_of(std::size_t atom) const override { return labels_.at(atom).first; }
    std::size_t measurement_size() const override { return 2; }
    double density(double t) const override;
    double density_lower_bound() const override;
    std::vector<double> draw_samples(std::size_t m, std::uint64_t seed) const override;
    Quadrature quadrature(std::size_t n) const override;
    SparseMatrix block(double t, std::span<const std::size_t> atoms) const override;

    int bandwidth() const { return bandwidth_; }
    int coarsest_level() const { return coarsest_; }
    double normalizer() const { return normalizer_; } // C_ν = 1 + Σ_{t=1}^N 2/t
    // (scale, translation) of each 1D atom.
    const std::vector<std::pair<int, int>>& labels() const { return labels_; }
    // Samples of the periodic atom on 2^R equispaced points, ℓ²-normalized.
    const std::vector<double>& samples(std::size_t atom) const { return atoms_.at(atom); }
    std::complex<double> coefficient(int t, std::size_t atom) const;

private:
    int bandwidth_;
    int coarsest_;
    int resolution_;
    double normalizer_;
    std::vector<std::pair<int, int>> labels_;
    std::vector<std::vector<double>> atoms_;
    std::vector<double> cdf_;
};

std::complex<double> fourier_wavelet_row(const FourierWaveletModel& model, int t, std::size_t atom);

// Point evaluation u(t) of Legendre expansions, orthonormal for dx/2 on [-1, 1].
class LegendreModel : public ForwardModel {
public:
    explicit LegendreModel(std::size_t degree_count);

    ModelKind kind() const override { return ModelKind::legendre_point; }
    std::size_t dictionary_size() const override { return count_; }
    int scale_of(std::size_t) const override { return 0; }
    std::size_t measurement_size() const override { return 1; }
    double density(double) const override { return 1.0; }
    double density_lower_bound() const override { return 1.0; }
    std::vector<double> draw_samples(std::size_t m, std::uint64_t seed) const override;
    // Gauss–Legendre rule with n nodes, weights summing to 1.
    Quadrature quadrature(std::size_t n) const override;
    SparseMatrix block(double t, std::span<const std::size_t> atoms) const override;

    // ω_i = √(2i-1) for the 1-based index i.
    WeightVector sup_weights() const;

private:
    std::size_t count_;
};

// p_i(t) = √(2i-1) P_{i-1}(t) for the 1-based index i.
double legendre_row(double t, std::size_t i);

// Toy model on 𝒟 = {0..M-1} with the uniform probability: F_t φ_i = δ_{t,i} √M 2^{-b j_i}.
class SyntheticDiagonalModel : public ForwardModel {
public:
    SyntheticDiagonalModel(std::vector<int> scales, double b);

    ModelKind kind() const override { return ModelKind::synthetic_diagonal; }
    std::size_t dictionary_size() const override { return scales_.size(); }
    int scale_of(std::size_t atom) const override { return scales_.at(atom); }
    std::size_t measurement_size() const override { return 1; }
    double density(double) const override { return 1.0; }
    double density_lower_bound() const override { return 1.0; }
    std::vector<double> draw_samples(std::size_t m, std::uint64_t seed) const override;
    Quadrature quadrature(std::size_t n) const override;
    SparseMatrix block(double t, std::span<const std::size_t> atoms) const override;

    double b() const { return b_; }

private:
    std::vector<int> scales_;
    double b_;
};

struct SampledSystem {
    std::shared_ptr<const ForwardModel> model;
    std::vector<std::size_t> lambda;
    std::vector<int> scales;            // dictionary scale of each column
    std::vector<double> samples;
    std::vector<double> sample_weights; // 1/m for i.i.d. draws, quadrature weights otherwise
    Vector q_weights;                   // f_ν(t_k)^{-1/2}
    std::size_t block_rows = 0;
    SparseMatrix a;                     // stacked √(sample weight) F_{t_k} Φ* ι_Λ; empty when not kept
    Matrix normal;                      // (QA)ᵀ(QA)
    Vector aty;                         // (QA)ᵀ(Qy)
    double yy = 0.0;                    // ‖Qy‖²
    Vector y;                           // stacked √(sample weight) y_k
    double beta = 0.0;
    std::vector<double> noise_norms;    // ‖ε_k‖_{H₂}
    std::uint64_t noise_seed = 0;
    double tail_residual = 0.0;         // ‖Q A P_Λ^⊥ x†‖ for the x† used at assembly

    std::size_t block_count() const { return samples.size(); }
    bool has_matrix() const { return a.rows() > 0; }
    Vector qy() const;
    // ‖Q(Ax - y)‖.
    double residual(const Vector& x) const;
};

struct AssemblyOptions {
    bool keep_matrix = true;
};

// x_dagger is indexed by the whole model dictionary; its part outside Λ still enters y.
SampledSystem assemble_sampled_system(std::shared_ptr<const ForwardModel> model, std::vector<std::size_t> lambda,
                                      std::vector<double> samples, const Vector& x_dagger, double beta,
                                      std::uint64_t noise_seed, AssemblyOptions options = {});

// Deterministic system with A*A equal to the quadrature Gram matrix; noiseless, y = 0.
SampledSystem assemble_quadrature_system(std::shared_ptr<const ForwardModel> model, std::vector<std::size_t> lambda,
                                         const Quadrature& quadrature, AssemblyOptions options = {});

// System with explicit matrix rows (single block, unit Q); used for toy problems.
SampledSystem system_from_matrix(const Matrix& a, const Vector& y, std::vector<int> scales = {});

// Directory with samples.csv, A.bin (COO triplets), y.bin and meta.txt.
void export_system(const SampledSystem& system, const std::filesystem::path& dir);

} // namespace sparsetomo
