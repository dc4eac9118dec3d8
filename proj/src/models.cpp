#include "sparsetomo/models.hpp"
#include "sparsetomo/errors.hpp"
#include "sparsetomo/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <utility>

namespace sparsetomo {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Linear interpolation of a node sequence at fractional position u (zero outside its range).
double lerp_nodes(std::span<const double> f, double u) {
    if (u < 0.0) return 0.0;
    const double fl = std::floor(u);
    const auto a = static_cast<std::size_t>(fl);
    if (a + 1 >= f.size()) return (a + 1 == f.size() && u == fl) ? f[a] : 0.0;
    const double r = u - fl;
    return (1.0 - r) * f[a] + r * f[a + 1];
}

// Parameter interval of the line p + t v inside the box [x0, x1] × [y0, y1]; empty when lo > hi.
std::pair<double, double> clip_line(double px, double py, double vx, double vy, double x0, double x1, double y0,
                                    double y1) {
    double lo = -1e300, hi = 1e300;
    auto slab = [&](double p, double v, double b0, double b1) {
        if (std::abs(v) < 1e-15) {
            if (p < b0 || p > b1) lo = 1.0, hi = 0.0;
            return;
        }
        double t0 = (b0 - p) / v, t1 = (b1 - p) / v;
        if (t0 > t1) std::swap(t0, t1);
        lo = std::max(lo, t0);
        hi = std::min(hi, t1);
    };
    slab(px, vx, x0, x1);
    slab(py, vy, y0, y1);
    return {lo, hi};
}

// Sum of g(p + t v) h_t over the nodes t = k h_t inside [lo, hi].
template <class G>
double march(double lo, double hi, double step, G&& g) {
    if (lo > hi) return 0.0;
    const auto k0 = static_cast<long>(std::ceil(lo / step));
    const auto k1 = static_cast<long>(std::floor(hi / step));
    double acc = 0.0;
    for (long k = k0; k <= k1; ++k) acc += g(k * step);
    return acc * step;
}

// Bilinear interpolant of a separable atom pattern, in coordinates relative to its first node.
struct PatternField {
    std::span<const double> fx, fy;
    double h;
    double width() const { return (static_cast<double>(fx.size()) - 1.0) * h; }
    double height() const { return (static_cast<double>(fy.size()) - 1.0) * h; }
    double operator()(double x, double y) const {
        const double vy = lerp_nodes(fy, y / h);
        if (vy == 0.0) return 0.0;
        return lerp_nodes(fx, x / h) * vy / h;
    }
};

double bilinear(const Image& u, double x, double y) {
    const double h = u.grid.h;
    const double gx = (x + u.grid.extent) / h, gy = (y + u.grid.extent) / h;
    if (gx < 0.0 || gy < 0.0) return 0.0;
    const auto ix = static_cast<Eigen::Index>(gx), iy = static_cast<Eigen::Index>(gy);
    const Eigen::Index n = u.grid.size;
    if (ix >= n - 1 || iy >= n - 1) return 0.0;
    const double rx = gx - ix, ry = gy - iy;
    const auto& v = u.values;
    return (1 - rx) * (1 - ry) * v(ix, iy) + rx * (1 - ry) * v(ix + 1, iy) + (1 - rx) * ry * v(ix, iy + 1) +
           rx * ry * v(ix + 1, iy + 1);
}

// Radon profile of an atom pattern placed with its first node at the origin.
struct Profile {
    double sigma0 = 0.0;
    double step = 0.0;
    std::vector<double> values;

    double operator()(double sigma) const {
        const double u = (sigma - sigma0) / step;
        return lerp_nodes(values, u);
    }
    double lo() const { return sigma0; }
    double hi() const { return sigma0 + step * (static_cast<double>(values.size()) - 1.0); }
};

Profile radon_profile(const PatternField& g, double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    const double W = g.width(), H = g.height();
    const double corners[4] = {0.0, W * c, H * s, W * c + H * s};
    const double smin = *std::min_element(corners, corners + 4), smax = *std::max_element(corners, corners + 4);
    Profile p;
    p.step = g.h / 2;
    p.sigma0 = smin;
    const auto count = static_cast<std::size_t>(std::ceil((smax - smin) / p.step)) + 1;
    p.values.resize(count);
    for (std::size_t q = 0; q < count; ++q) {
        const double sigma = smin + q * p.step;
        const double px = sigma * c, py = sigma * s;
        const auto [lo, hi] = clip_line(px, py, -s, c, 0.0, W, 0.0, H);
        p.values[q] = march(lo, hi, g.h / 2, [&](double t) { return g(px - t * s, py + t * c); });
    }
    return p;
}

std::vector<double> uniform_angles(std::size_t m, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> out(m);
    for (auto& t : out) t = kTwoPi * rng.uniform();
    return out;
}

Quadrature uniform_angle_rule(std::size_t n) {
    if (n == 0) throw DomainError("quadrature needs at least one node");
    Quadrature q;
    for (std::size_t k = 0; k < n; ++k) {
        q.nodes.push_back(kTwoPi * static_cast<double>(k) / static_cast<double>(n));
        q.weights.push_back(1.0 / static_cast<double>(n));
    }
    return q;
}

SparseMatrix from_columns(std::size_t rows, std::size_t cols,
                          const std::vector<Eigen::Triplet<double>>& triplets) {
    SparseMatrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    out.setFromTriplets(triplets.begin(), triplets.end());
    return out;
}

// Adds weight · BᵀB into the upper triangle of n, one dense product per chunk of consecutive rows.
void accumulate_normal(const SparseMatrix& b, double weight, Matrix& n) {
    constexpr Eigen::Index kChunk = 48;
    const Eigen::SparseMatrix<double, Eigen::RowMajor> rows = b;
    std::vector<Eigen::Index> slot(static_cast<std::size_t>(b.cols()), -1);
    std::vector<Eigen::Index> cols;
    for (Eigen::Index r0 = 0; r0 < rows.outerSize(); r0 += kChunk) {
        const Eigen::Index r1 = std::min(r0 + kChunk, rows.outerSize());
        cols.clear();
        for (Eigen::Index r = r0; r < r1; ++r)
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(rows, r); it; ++it)
                if (slot[static_cast<std::size_t>(it.col())] < 0) {
                    slot[static_cast<std::size_t>(it.col())] = static_cast<Eigen::Index>(cols.size());
                    cols.push_back(it.col());
                }
        if (cols.empty()) continue;
        Matrix dense = Matrix::Zero(r1 - r0, static_cast<Eigen::Index>(cols.size()));
        for (Eigen::Index r = r0; r < r1; ++r)
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(rows, r); it; ++it)
                dense(r - r0, slot[static_cast<std::size_t>(it.col())]) = it.value();
        Matrix prod = Matrix::Zero(dense.cols(), dense.cols());
        prod.selfadjointView<Eigen::Upper>().rankUpdate(dense.transpose(), weight);
        for (std::size_t q = 0; q < cols.size(); ++q)
            for (std::size_t p = 0; p <= q; ++p) {
                const Eigen::Index a = std::min(cols[p], cols[q]), c = std::max(cols[p], cols[q]);
                n(a, c) += prod(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q));
            }
        for (auto c : cols) slot[static_cast<std::size_t>(c)] = -1;
    }
}

} // namespace

std::string to_string(ModelKind kind) {
    switch (kind) {
    case ModelKind::radon: return "radon";
    case ModelKind::fanbeam: return "fanbeam";
    case ModelKind::fourier_wavelet: return "fourier";
    case ModelKind::legendre_point: return "legendre";
    case ModelKind::synthetic_diagonal: return "synthetic";
    }
    return "unknown";
}

Vector ForwardModel::apply(double t, std::span<const std::size_t> atoms, const Vector& x) const {
    if (static_cast<std::size_t>(x.size()) != atoms.size()) throw DimensionError("coefficient length mismatch");
    return block(t, atoms) * x;
}

// ---------------------------------------------------------------------------------------------------------
// Radon

RadonModel::RadonModel(std::shared_ptr<const DictionaryAtlas> atlas, double ds) : atlas_(std::move(atlas)) {
    const GridSpec& g = atlas_->grid();
    ds_ = ds > 0.0 ? ds : g.h;
    const auto half = static_cast<long>(std::ceil(std::sqrt(2.0) * g.extent / ds_));
    for (long l = -half; l <= half; ++l) s_grid_.push_back(l * ds_);
}

std::vector<double> RadonModel::draw_samples(std::size_t m, std::uint64_t seed) const {
    return uniform_angles(m, seed);
}

Quadrature RadonModel::quadrature(std::size_t n) const { return uniform_angle_rule(n); }

SparseMatrix RadonModel::block(double theta, std::span<const std::size_t> atoms) const {
    const GridSpec& g = atlas_->grid();
    const double c = std::cos(theta), s = std::sin(theta);
    const double weight = std::sqrt(ds_);
    const double s0 = s_grid_.front();
    std::map<std::pair<const double*, const double*>, Profile> profiles;
    std::vector<Eigen::Triplet<double>> triplets;
    for (std::size_t k = 0; k < atoms.size(); ++k) {
        const auto v = atlas_->atom(atoms[k]);
        auto key = std::make_pair(v.fx.data(), v.fy.data());
        auto it = profiles.find(key);
        if (it == profiles.end()) it = profiles.emplace(key, radon_profile({v.fx, v.fy, g.h}, theta)).first;
        const Profile& p = it->second;
        const double shift = g.node(v.ix0) * c + g.node(v.iy0) * s;
        const auto l0 = std::max<long>(0, static_cast<long>(std::ceil((p.lo() + shift - s0) / ds_)));
        const auto l1 = std::min<long>(static_cast<long>(s_grid_.size()) - 1,
                                       static_cast<long>(std::floor((p.hi() + shift - s0) / ds_)));
        for (long l = l0; l <= l1; ++l) {
            const double val = p(s_grid_[l] - shift);
            if (val != 0.0) triplets.emplace_back(l, static_cast<int>(k), weight * val);
        }
    }
    return from_columns(s_grid_.size(), atoms.size(), triplets);
}

Vector RadonModel::atom_projection(std::size_t atom, double theta) const {
    const std::size_t one[1] = {atom};
    return Vector(block(theta, one).col(0)) / std::sqrt(ds_);
}

Vector RadonModel::image_projection(const Image& u, double theta) const {
    if (!(u.grid == atlas_->grid())) throw DimensionError("image grid does not match the model grid");
    const double c = std::cos(theta), s = std::sin(theta);
    const double E = u.grid.extent;
    Vector out(static_cast<Eigen::Index>(s_grid_.size()));
    for (std::size_t l = 0; l < s_grid_.size(); ++l) {
        const double px = s_grid_[l] * c, py = s_grid_[l] * s;
        const auto [lo, hi] = clip_line(px, py, -s, c, -E, E, -E, E);
        out[static_cast<Eigen::Index>(l)] =
            march(lo, hi, u.grid.h / 2, [&](double t) { return bilinear(u, px - t * s, py + t * c); });
    }
    return out;
}

double RadonModel::norm(const Vector& v) const { return std::sqrt(ds_) * v.norm(); }

// ---------------------------------------------------------------------------------------------------------
// Fan beam

FanBeamModel::FanBeamModel(std::shared_ptr<const DictionaryAtlas> atlas, double rho, double d, double dalpha)
    : atlas_(std::move(atlas)) {
    double reach = 0.0;
    for (std::size_t i = 0; i < atlas_->size(); ++i) {
        const auto b = atlas_->support_box(i);
        for (double x : {b[0], b[1]})
            for (double y : {b[2], b[3]}) reach = std::max(reach, std::hypot(x, y));
    }
    d_ = d > 0.0 ? d : reach;
    if (reach > d_ * (1.0 + 1e-12))
        throw GeometryError("atom supports reach radius " + std::to_string(reach) + " beyond d = " +
                            std::to_string(d_));
    rho_ = rho > 0.0 ? rho : d_ + 2.0;
    if (!(rho_ > d_)) throw GeometryError("fan-beam geometry requires 0 < d < rho");
    dalpha_ = dalpha > 0.0 ? dalpha : atlas_->grid().h / rho_;
    const double amax = std::asin(d_ / rho_);
    const auto half = static_cast<long>(std::ceil(amax / dalpha_));
    for (long l = -half; l <= half; ++l) alpha_grid_.push_back(l * dalpha_);
}

std::vector<double> FanBeamModel::draw_samples(std::size_t m, std::uint64_t seed) const {
    return uniform_angles(m, seed);
}

Quadrature FanBeamModel::quadrature(std::size_t n) const { return uniform_angle_rule(n); }

SparseMatrix FanBeamModel::block(double theta, std::span<const std::size_t> atoms) const {
    const GridSpec& g = atlas_->grid();
    const double px = rho_ * std::cos(theta), py = rho_ * std::sin(theta);
    const double weight = std::sqrt(dalpha_);
    std::vector<double> vx(alpha_grid_.size()), vy(alpha_grid_.size());
    for (std::size_t l = 0; l < alpha_grid_.size(); ++l) {
        vx[l] = std::cos(theta + alpha_grid_[l]);
        vy[l] = std::sin(theta + alpha_grid_[l]);
    }
    std::vector<Eigen::Triplet<double>> triplets;
    for (std::size_t k = 0; k < atoms.size(); ++k) {
        const auto v = atlas_->atom(atoms[k]);
        const PatternField f{v.fx, v.fy, g.h};
        const double x0 = g.node(v.ix0), y0 = g.node(v.iy0);
        for (std::size_t l = 0; l < alpha_grid_.size(); ++l) {
            const auto [lo, hi] = clip_line(px, py, vx[l], vy[l], x0, x0 + f.width(), y0, y0 + f.height());
            if (lo > hi) continue;
            const double val =
                march(lo, hi, g.h / 2, [&](double t) { return f(px + t * vx[l] - x0, py + t * vy[l] - y0); });
            if (val != 0.0) triplets.emplace_back(static_cast<int>(l), static_cast<int>(k), weight * val);
        }
    }
    return from_columns(alpha_grid_.size(), atoms.size(), triplets);
}

Vector FanBeamModel::atom_projection(std::size_t atom, double theta) const {
    const std::size_t one[1] = {atom};
    return Vector(block(theta, one).col(0)) / std::sqrt(dalpha_);
}

Vector FanBeamModel::image_projection(const Image& u, double theta) const {
    if (!(u.grid == atlas_->grid())) throw DimensionError("image grid does not match the model grid");
    const double px = rho_ * std::cos(theta), py = rho_ * std::sin(theta);
    const double E = u.grid.extent;
    Vector out(static_cast<Eigen::Index>(alpha_grid_.size()));
    for (std::size_t l = 0; l < alpha_grid_.size(); ++l) {
        const double vx = std::cos(theta + alpha_grid_[l]), vy = std::sin(theta + alpha_grid_[l]);
        const auto [lo, hi] = clip_line(px, py, vx, vy, -E, E, -E, E);
        out[static_cast<Eigen::Index>(l)] =
            march(lo, hi, u.grid.h / 2, [&](double t) { return bilinear(u, px + t * vx, py + t * vy); });
    }
    return out;
}

double FanBeamModel::norm(const Vector& v) const { return std::sqrt(dalpha_) * v.norm(); }

// ---------------------------------------------------------------------------------------------------------
// Fourier on periodized wavelets

FourierWaveletModel::FourierWaveletModel(const WaveletFilter& filter, int j_max, int bandwidth) {
    if (j_max < 0) throw ConfigurationError("j_max must be non-negative");
    bandwidth_ = bandwidth > 0 ? bandwidth : 1 << (j_max + 3);
    const auto L = static_cast<int>(filter.low_pass.size());
    coarsest_ = 0;
    while ((1 << coarsest_) < L) ++coarsest_;
    int needed = 0;
    while ((1 << needed) <= 4 * bandwidth_) ++needed;
    resolution_ = std::max(coarsest_ + j_max + 4, needed);
    const int n_points = 1 << resolution_;

    auto refine = [](const std::vector<double>& in, const std::vector<double>& taps) {
        std::vector<double> out(2 * (in.size() - 1) + taps.size(), 0.0);
        for (std::size_t m = 0; m < in.size(); ++m)
            for (std::size_t k = 0; k < taps.size(); ++k) out[2 * m + k] += in[m] * taps[k];
        return out;
    };
    auto emit = [&](int scale, int level, const std::vector<double>& pattern) {
        const int shift = 1 << (resolution_ - level);
        for (int n = 0; n < (1 << level); ++n) {
            std::vector<double> v(n_points, 0.0);
            for (std::size_t a = 0; a < pattern.size(); ++a) v[(n * shift + a) % n_points] += pattern[a];
            double norm = 0.0;
            for (double x : v) norm += x * x;
            for (double& x : v) x /= std::sqrt(norm);
            labels_.emplace_back(scale, n);
            atoms_.push_back(std::move(v));
        }
    };
    {
        std::vector<double> c{1.0};
        for (int k = 0; k < resolution_ - coarsest_; ++k) c = refine(c, filter.low_pass);
        emit(0, coarsest_, c);
    }
    for (int j = 1; j <= j_max; ++j) {
        const int level = coarsest_ + j - 1;
        std::vector<double> w = refine({1.0}, filter.high_pass);
        for (int k = 1; k < resolution_ - level; ++k) w = refine(w, filter.low_pass);
        emit(j, level, w);
    }

    normalizer_ = 1.0;
    for (int t = 1; t <= bandwidth_; ++t) normalizer_ += 2.0 / t;
    double acc = 0.0;
    for (int t = -bandwidth_; t <= bandwidth_; ++t) {
        acc += density(t);
        cdf_.push_back(acc);
    }
}

double FourierWaveletModel::density(double t) const {
    const double a = std::abs(t);
    if (a > bandwidth_ || a != std::floor(a)) return 0.0;
    return a == 0.0 ? 1.0 / normalizer_ : 1.0 / (a * normalizer_);
}

double FourierWaveletModel::density_lower_bound() const { return 1.0 / (bandwidth_ * normalizer_); }

std::vector<double> FourierWaveletModel::draw_samples(std::size_t m, std::uint64_t seed) const {
    Rng rng(seed);
    std::vector<double> out(m);
    for (auto& t : out) {
        const double u = rng.uniform() * cdf_.back();
        const auto pos = std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin();
        t = static_cast<double>(std::min<long>(pos, static_cast<long>(cdf_.size()) - 1) - bandwidth_);
    }
    return out;
}

Quadrature FourierWaveletModel::quadrature(std::size_t) const {
    Quadrature q;
    for (int t = -bandwidth_; t <= bandwidth_; ++t) {
        q.nodes.push_back(t);
        q.weights.push_back(1.0);
    }
    return q;
}

std::complex<double> FourierWaveletModel::coefficient(int t, std::size_t atom) const {
    if (std::abs(t) > bandwidth_) throw RangeError("frequency outside [-N, N]");
    const auto& v = atoms_.at(atom);
    const double n = static_cast<double>(v.size());
    std::complex<double> acc = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (v[k] == 0.0) continue;
        const double phase = -kTwoPi * std::fmod(static_cast<double>(t) * static_cast<double>(k), n) / n;
        acc += v[k] * std::polar(1.0, phase);
    }
    return acc / std::sqrt(n);
}

SparseMatrix FourierWaveletModel::block(double t, std::span<const std::size_t> atoms) const {
    if (t != std::floor(t)) throw DomainError("Fourier samples must be integer frequencies");
    std::vector<Eigen::Triplet<double>> triplets;
    for (std::size_t k = 0; k < atoms.size(); ++k) {
        const auto z = coefficient(static_cast<int>(t), atoms[k]);
        triplets.emplace_back(0, static_cast<int>(k), z.real());
        triplets.emplace_back(1, static_cast<int>(k), z.imag());
    }
    return from_columns(2, atoms.size(), triplets);
}

std::complex<double> fourier_wavelet_row(const FourierWaveletModel& model, int t, std::size_t atom) {
    return model.coefficient(t, atom);
}

// ---------------------------------------------------------------------------------------------------------
// Legendre

double legendre_row(double t, std::size_t i) {
    if (!(std::abs(t) <= 1.0)) throw DomainError("Legendre evaluation point outside [-1, 1]");
    if (i == 0) throw IndexError("Legendre index is 1-based");
    double p0 = 1.0, p1 = t;
    const std::size_t n = i - 1;
    if (n == 0) return 1.0;
    for (std::size_t k = 1; k < n; ++k) {
        const double p2 = ((2.0 * k + 1.0) * t * p1 - k * p0) / (k + 1.0);
        p0 = p1;
        p1 = p2;
    }
    return std::sqrt(2.0 * i - 1.0) * p1;
}

LegendreModel::LegendreModel(std::size_t degree_count) : count_(degree_count) {
    if (count_ == 0) throw ConfigurationError("Legendre model needs at least one polynomial");
}

std::vector<double> LegendreModel::draw_samples(std::size_t m, std::uint64_t seed) const {
    Rng rng(seed);
    std::vector<double> out(m);
    for (auto& t : out) t = rng.uniform(-1.0, 1.0);
    return out;
}

Quadrature LegendreModel::quadrature(std::size_t n) const {
    if (n == 0) throw DomainError("quadrature needs at least one node");
    Quadrature q;
    q.nodes.resize(n);
    q.weights.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        double x = std::cos(std::numbers::pi * (k + 0.75) / (n + 0.5));
        double dp = 1.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (std::size_t j = 1; j < n; ++j) {
                const double p2 = ((2.0 * j + 1.0) * x * p1 - j * p0) / (j + 1.0);
                p0 = p1;
                p1 = p2;
            }
            const double pn = n == 1 ? x : p1, pm = n == 1 ? 1.0 : p0;
            dp = n * (x * pn - pm) / (x * x - 1.0);
            const double dx = pn / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        q.nodes[k] = x;
        q.weights[k] = 1.0 / ((1.0 - x * x) * dp * dp); // Gauss weight 2/((1-x²)P'²), halved for dx/2
    }
    return q;
}

SparseMatrix LegendreModel::block(double t, std::span<const std::size_t> atoms) const {
    std::vector<Eigen::Triplet<double>> triplets;
    for (std::size_t k = 0; k < atoms.size(); ++k) {
        if (atoms[k] >= count_) throw IndexError("Legendre index outside the model");
        triplets.emplace_back(0, static_cast<int>(k), legendre_row(t, atoms[k] + 1));
    }
    return from_columns(1, atoms.size(), triplets);
}

WeightVector LegendreModel::sup_weights() const {
    std::vector<double> w(count_);
    for (std::size_t i = 0; i < count_; ++i) w[i] = std::sqrt(2.0 * (i + 1) - 1.0);
    return WeightVector(std::move(w));
}

// ---------------------------------------------------------------------------------------------------------
// Synthetic diagonal

SyntheticDiagonalModel::SyntheticDiagonalModel(std::vector<int> scales, double b) : scales_(std::move(scales)), b_(b) {
    if (scales_.empty()) throw ConfigurationError("synthetic model needs at least one atom");
}

std::vector<double> SyntheticDiagonalModel::draw_samples(std::size_t m, std::uint64_t seed) const {
    Rng rng(seed);
    std::vector<double> out(m);
    for (auto& t : out) t = static_cast<double>(rng.below(scales_.size()));
    return out;
}

Quadrature SyntheticDiagonalModel::quadrature(std::size_t) const {
    Quadrature q;
    for (std::size_t t = 0; t < scales_.size(); ++t) {
        q.nodes.push_back(static_cast<double>(t));
        q.weights.push_back(1.0 / static_cast<double>(scales_.size()));
    }
    return q;
}

SparseMatrix SyntheticDiagonalModel::block(double t, std::span<const std::size_t> atoms) const {
    const auto M = static_cast<double>(scales_.size());
    std::vector<Eigen::Triplet<double>> triplets;
    for (std::size_t k = 0; k < atoms.size(); ++k)
        if (static_cast<double>(atoms[k]) == t)
            triplets.emplace_back(0, static_cast<int>(k), std::sqrt(M) * std::exp2(-b_ * scales_.at(atoms[k])));
    return from_columns(1, atoms.size(), triplets);
}

// ---------------------------------------------------------------------------------------------------------
// Sampled systems

Vector SampledSystem::qy() const {
    Vector out = y;
    for (std::size_t k = 0; k < block_count(); ++k)
        out.segment(static_cast<Eigen::Index>(k * block_rows), static_cast<Eigen::Index>(block_rows)) *= q_weights[k];
    return out;
}

double SampledSystem::residual(const Vector& x) const {
    if (has_matrix()) {
        Vector r = a * x - y;
        for (std::size_t k = 0; k < block_count(); ++k)
            r.segment(static_cast<Eigen::Index>(k * block_rows), static_cast<Eigen::Index>(block_rows)) *=
                q_weights[k];
        return r.norm();
    }
    return std::sqrt(std::max(0.0, x.dot(normal * x) - 2.0 * x.dot(aty) + yy));
}

namespace {

SampledSystem assemble(std::shared_ptr<const ForwardModel> model, std::vector<std::size_t> lambda,
                       std::vector<double> samples, std::vector<double> weights, std::vector<double> q,
                       const Vector& x_dagger, double beta, std::uint64_t noise_seed, bool keep_matrix) {
    const std::size_t rows = model->measurement_size();
    const std::size_t m = samples.size();
    const auto nl = static_cast<Eigen::Index>(lambda.size());
    std::vector<std::size_t> cols = lambda;
    std::vector<bool> in_lambda(model->dictionary_size(), false);
    for (auto i : lambda) {
        if (i >= model->dictionary_size()) throw IndexError("truncation set exceeds the dictionary");
        in_lambda[i] = true;
    }
    Vector xcols;
    if (x_dagger.size() > 0) {
        if (static_cast<std::size_t>(x_dagger.size()) != model->dictionary_size())
            throw DimensionError("x_dagger must be indexed by the full dictionary");
        for (std::size_t i = 0; i < model->dictionary_size(); ++i)
            if (!in_lambda[i] && x_dagger[static_cast<Eigen::Index>(i)] != 0.0) cols.push_back(i);
        xcols.resize(static_cast<Eigen::Index>(cols.size()));
        for (std::size_t k = 0; k < cols.size(); ++k) xcols[static_cast<Eigen::Index>(k)] = x_dagger[cols[k]];
    }

    SampledSystem sys;
    sys.model = model;
    sys.block_rows = rows;
    sys.beta = beta;
    sys.noise_seed = noise_seed;
    sys.normal = Matrix::Zero(nl, nl);
    sys.aty = Vector::Zero(nl);
    sys.y = Vector::Zero(static_cast<Eigen::Index>(m * rows));
    sys.q_weights.resize(static_cast<Eigen::Index>(m));
    Rng rng(noise_seed);
    std::vector<Eigen::Triplet<double>> triplets;
    double tail2 = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const SparseMatrix full = model->block(samples[k], cols);
        const SparseMatrix b = full.leftCols(nl);
        Vector yk = xcols.size() > 0 ? Vector(full * xcols) : Vector::Zero(static_cast<Eigen::Index>(rows));
        if (xcols.size() > nl)
            tail2 += weights[k] * q[k] * q[k] * (full.rightCols(xcols.size() - nl) * xcols.tail(xcols.size() - nl)).squaredNorm();
        double noise_norm = 0.0;
        if (beta > 0.0) {
            Vector e(static_cast<Eigen::Index>(rows));
            for (Eigen::Index r = 0; r < e.size(); ++r) e[r] = rng.normal();
            e *= beta / e.norm();
            noise_norm = e.norm();
            yk += e;
        }
        const double sw = std::sqrt(weights[k]);
        const double wq = weights[k] * q[k] * q[k];
        sys.y.segment(static_cast<Eigen::Index>(k * rows), static_cast<Eigen::Index>(rows)) = sw * yk;
        sys.q_weights[static_cast<Eigen::Index>(k)] = q[k];
        sys.noise_norms.push_back(noise_norm);
        accumulate_normal(b, wq, sys.normal);
        sys.aty += wq * (b.transpose() * yk);
        sys.yy += wq * yk.squaredNorm();
        if (keep_matrix)
            for (Eigen::Index c = 0; c < b.outerSize(); ++c)
                for (SparseMatrix::InnerIterator it(b, c); it; ++it)
                    triplets.emplace_back(static_cast<Eigen::Index>(k * rows) + it.row(), c, sw * it.value());
    }
    sys.normal = sys.normal.selfadjointView<Eigen::Upper>();
    sys.tail_residual = std::sqrt(tail2);
    if (keep_matrix) {
        sys.a.resize(static_cast<Eigen::Index>(m * rows), nl);
        sys.a.setFromTriplets(triplets.begin(), triplets.end());
    }
    for (auto i : lambda) sys.scales.push_back(model->scale_of(i));
    sys.lambda = std::move(lambda);
    sys.samples = std::move(samples);
    sys.sample_weights = std::move(weights);
    return sys;
}

} // namespace

SampledSystem assemble_sampled_system(std::shared_ptr<const ForwardModel> model, std::vector<std::size_t> lambda,
                                      std::vector<double> samples, const Vector& x_dagger, double beta,
                                      std::uint64_t noise_seed, AssemblyOptions options) {
    if (samples.empty()) throw DomainError("at least one sample is required");
    if (beta < 0.0) throw DomainError("noise level must be non-negative");
    const double m = static_cast<double>(samples.size());
    std::vector<double> weights(samples.size(), 1.0 / m), q;
    for (double t : samples) {
        const double f = model->density(t);
        if (!(f > 0.0)) throw DomainError("sample outside the support of the sampling density");
        q.push_back(1.0 / std::sqrt(f));
    }
    return assemble(std::move(model), std::move(lambda), std::move(samples), std::move(weights), std::move(q),
                    x_dagger, beta, noise_seed, options.keep_matrix);
}

SampledSystem assemble_quadrature_system(std::shared_ptr<const ForwardModel> model, std::vector<std::size_t> lambda,
                                         const Quadrature& quadrature, AssemblyOptions options) {
    std::vector<double> q(quadrature.nodes.size(), 1.0);
    return assemble(std::move(model), std::move(lambda), quadrature.nodes, quadrature.weights, std::move(q), Vector(),
                    0.0, 0, options.keep_matrix);
}

SampledSystem system_from_matrix(const Matrix& a, const Vector& y, std::vector<int> scales) {
    if (a.rows() != y.size()) throw DimensionError("matrix rows do not match the measurement length");
    if (scales.empty()) scales.assign(static_cast<std::size_t>(a.cols()), 0);
    if (static_cast<Eigen::Index>(scales.size()) != a.cols()) throw DimensionError("one scale per column required");
    SampledSystem sys;
    sys.scales = std::move(scales);
    for (Eigen::Index i = 0; i < a.cols(); ++i) sys.lambda.push_back(static_cast<std::size_t>(i));
    sys.samples = {0.0};
    sys.sample_weights = {1.0};
    sys.q_weights = Vector::Ones(1);
    sys.block_rows = static_cast<std::size_t>(a.rows());
    sys.a = a.sparseView(0.0, 0.0);
    sys.normal = a.transpose() * a;
    sys.aty = a.transpose() * y;
    sys.yy = y.squaredNorm();
    sys.y = y;
    sys.noise_norms = {0.0};
    return sys;
}

void export_system(const SampledSystem& system, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "samples.csv");
        out.precision(17);
        out << "k,t,q_weight,noise_norm\n";
        for (std::size_t k = 0; k < system.block_count(); ++k)
            out << k << ',' << system.samples[k] << ',' << system.q_weights[static_cast<Eigen::Index>(k)] << ','
                << system.noise_norms[k] << '\n';
        if (!out) throw IoError("cannot write samples.csv");
    }
    {
        std::ofstream out(dir / "y.bin", std::ios::binary);
        out.write(reinterpret_cast<const char*>(system.y.data()), static_cast<std::streamsize>(system.y.size() * 8));
        if (!out) throw IoError("cannot write y.bin");
    }
    if (system.has_matrix()) {
        std::ofstream out(dir / "A.bin", std::ios::binary);
        for (Eigen::Index c = 0; c < system.a.outerSize(); ++c)
            for (SparseMatrix::InnerIterator it(system.a, c); it; ++it) {
                const std::int64_t rc[2] = {it.row(), it.col()};
                const double v = it.value();
                out.write(reinterpret_cast<const char*>(rc), sizeof rc);
                out.write(reinterpret_cast<const char*>(&v), sizeof v);
            }
        if (!out) throw IoError("cannot write A.bin");
    }
    std::ofstream meta(dir / "meta.txt");
    meta.precision(17);
    meta << "model " << (system.model ? to_string(system.model->kind()) : std::string("explicit")) << "\n"
         << "blocks " << system.block_count() << "\n"
         << "block_rows " << system.block_rows << "\n"
         << "columns " << system.lambda.size() << "\n"
         << "beta " << system.beta << "\n"
         << "noise_seed " << system.noise_seed << "\n"
         << "a_format " << (system.has_matrix() ? "coo int64 row, int64 col, float64 value" : "absent") << "\n";
    if (const auto* radon = dynamic_cast<const RadonModel*>(system.model.get()))
        meta << "ds " << radon->ds() << "\ns_min " << radon->s_grid().front() << "\n";
    if (const auto* fan = dynamic_cast<const FanBeamModel*>(system.model.get()))
        meta << "dalpha " << fan->dalpha() << "\nrho " << fan->rho() << "\nd " << fan->d() << "\n";
    if (!meta) throw IoError("cannot write meta.txt");
}

} // namespace sparsetomo
