#pragma once

#include "sparsetomo/weighted.hpp"

#include <array>
#include <compare>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace sparsetomo {

struct WaveletFilter {
    std::vector<double> low_pass;
    std::vector<double> high_pass; // g_k = (-1)^k h_{L-1-k}
    int order = 0;                 // number of vanishing moments
    int support_length = 0;       // L - 1
};

// Daubechies filters with `order` vanishing moments, order ∈ [1, 6].
WaveletFilter build_filter(int order);

// Scale 0 holds scaling atoms (orientation 0); scale j ≥ 1 holds ψ⊗χ, χ⊗ψ, ψ⊗ψ (orientations 1, 2, 3)
// at dilation 2^j. The scaling atoms live at dilation 2.
struct AtomIndex {
    int scale = 0;
    int n1 = 0;
    int n2 = 0;
    int orientation = 0;
    auto operator<=>(const AtomIndex&) const = default;
};

// Square pixel grid with nodes x_i = -extent + i h, i = 0..size-1, on both axes.
struct GridSpec {
    double extent = 0.0;
    double h = 0.0;
    int size = 0;
    double node(int i) const { return -extent + i * h; }
    bool operator==(const GridSpec&) const = default;
};

// values(i, k) = u(x_i, y_k).
struct Image {
    GridSpec grid;
    Matrix values;

    static Image zeros(const GridSpec& grid) { return {grid, Matrix::Zero(grid.size, grid.size)}; }
    // Grid L² norm with quadrature weight h².
    double l2_norm() const { return grid.h * values.norm(); }
    double inner(const Image& other) const;
};

class DictionaryAtlas {
public:
    // Default resolution (h = 0) selects 2^{-(j_max+3)}.
    static DictionaryAtlas build(const WaveletFilter& filter, int j_max, double h = 0.0);

    const WaveletFilter& filter() const { return filter_; }
    int j_max() const { return j_max_; }
    const GridSpec& grid() const { return grid_; }
    std::size_t size() const { return gamma_.size(); }
    const std::vector<AtomIndex>& gamma() const { return gamma_; }
    const AtomIndex& index(std::size_t i) const { return gamma_.at(i); }
    std::optional<std::size_t> find(const AtomIndex& idx) const;

    std::size_t count_at_scale(int j) const;
    // Atoms with scale ≤ j0 form the prefix [0, prefix_size(j0)).
    std::size_t prefix_size(int j0) const;

    // Separable rasterization: φ(x_{ix0+a}, y_{iy0+b}) = fx[a] fy[b] / h.
    struct AtomView {
        std::span<const double> fx;
        std::span<const double> fy;
        int ix0 = 0;
        int iy0 = 0;
    };
    AtomView atom(std::size_t i) const;

    // Support box [x_lo, x_hi] × [y_lo, y_hi] of the continuous atom.
    std::array<double, 4> support_box(std::size_t i) const;

    Image rasterize(std::size_t i) const;
    // h² Σ φ_i φ_k over the grid.
    double inner(std::size_t i, std::size_t k) const;
    Matrix gram(std::span<const std::size_t> atoms) const;

    // ⟨u, φ_i⟩ with quadrature weight h², for the atoms listed (all of Γ if empty).
    Vector analysis(const Image& u, std::span<const std::size_t> atoms = {}) const;
    // Σ x_k φ_{atoms[k]} (atoms = all of Γ if empty).
    Image synthesis(const Vector& x, std::span<const std::size_t> atoms = {}) const;

private:
    struct Pattern {
        std::vector<double> scaling;
        std::vector<double> wavelet;
    };
    int dilation(int scale) const { return scale == 0 ? 1 : scale; }

    WaveletFilter filter_;
    int j_max_ = 0;
    int levels_ = 0; // h = 2^{-levels_}
    GridSpec grid_;
    std::vector<AtomIndex> gamma_;
    std::vector<std::size_t> scale_offsets_;
    std::vector<Pattern> patterns_; // indexed by dilation exponent
};

// Indices of Λ_{j0} = {atoms of scale ≤ j0}.
std::vector<std::size_t> truncation_set(const DictionaryAtlas& atlas, int j0);
std::vector<AtomIndex> truncation_labels(const DictionaryAtlas& atlas, int j0);

// Plain-text header `<stem>.txt` plus row-major float64 patches `<stem>.bin`.
void export_atlas(const DictionaryAtlas& atlas, const std::filesystem::path& stem);
// Rebuilds the atlas from the header and verifies every stored patch against it.
DictionaryAtlas import_atlas(const std::filesystem::path& stem);

} // namespace sparsetomo
