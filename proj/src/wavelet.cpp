#include "sparsetomo/wavelet.hpp"
#include "sparsetomo/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <tuple>

namespace sparsetomo {

namespace {

// Daubechies low-pass taps, normalized to Σ h_k = √2.
const std::vector<std::vector<double>> kDaubechies = {
    {0.70710678118654752440, 0.70710678118654752440},
    {0.48296291314453414337, 0.83651630373780790558, 0.22414386804201338103, -0.12940952255126038117},
    {0.33267055295008261600, 0.80689150931109257649, 0.45987750211849157010, -0.13501102001025458870,
     -0.085441273882026661693, 0.035226291885709536603},
    {0.23037781330889650086, 0.71484657055291564709, 0.63088076792985890788, -0.027983769416859854211,
     -0.18703481171909308408, 0.030841381835560763627, 0.032883011666885199735, -0.010597401785069032105},
    {0.16010239797419291448, 0.60382926979718967054, 0.72430852843777292773, 0.13842814590132073151,
     -0.24229488706638203186, -0.032244869584638374648, 0.077571493840045713523, -0.0062414902127982742742,
     -0.012580751999081999469, 0.003335725285473771278},
    {0.11154074335010946362, 0.49462389039845308568, 0.75113390802109535068, 0.31525035170919762909,
     -0.22626469396543982008, -0.12976686756726193556, 0.097501605587323049102, 0.027522865530305728626,
     -0.031582039317486029565, 0.00055384220116149613925, 0.0047772575109455106396,
     -0.0010773010853084795649},
};

// One refinement step: out[2m + k] += in[m] taps[k].
std::vector<double> refine(const std::vector<double>& in, const std::vector<double>& taps) {
    std::vector<double> out(2 * (in.size() - 1) + taps.size(), 0.0);
    for (std::size_t m = 0; m < in.size(); ++m)
        for (std::size_t k = 0; k < taps.size(); ++k) out[2 * m + k] += in[m] * taps[k];
    return out;
}

void normalize(std::vector<double>& v) {
    double s = 0.0;
    for (double a : v) s += a * a;
    s = std::sqrt(s);
    for (double& a : v) a /= s;
}

double overlap(std::span<const double> a, int oa, std::span<const double> b, int ob) {
    const int lo = std::max(oa, ob);
    const int hi = std::min(oa + static_cast<int>(a.size()), ob + static_cast<int>(b.size()));
    double acc = 0.0;
    for (int p = lo; p < hi; ++p) acc += a[p - oa] * b[p - ob];
    return acc;
}

auto order_key(const AtomIndex& a) { return std::tuple(a.scale, a.orientation, a.n2, a.n1); }

} // namespace

WaveletFilter build_filter(int order) {
    if (order < 1 || order > static_cast<int>(kDaubechies.size()))
        throw ConfigurationError("unsupported wavelet order " + std::to_string(order) + " (supported: 1-6)");
    WaveletFilter f;
    f.order = order;
    f.low_pass = kDaubechies[order - 1];
    const std::size_t L = f.low_pass.size();
    f.high_pass.resize(L);
    for (std::size_t k = 0; k < L; ++k) f.high_pass[k] = (k % 2 ? -1.0 : 1.0) * f.low_pass[L - 1 - k];
    f.support_length = static_cast<int>(L) - 1;
    return f;
}

double Image::inner(const Image& other) const {
    if (!(grid == other.grid)) throw DimensionError("images live on different grids");
    return grid.h * grid.h * values.cwiseProduct(other.values).sum();
}

DictionaryAtlas DictionaryAtlas::build(const WaveletFilter& filter, int j_max, double h) {
    if (j_max < 0) throw ConfigurationError("j_max must be non-negative");
    if (h == 0.0) h = std::ldexp(1.0, -(j_max + 3));
    int exponent = 0;
    const double mantissa = std::frexp(h, &exponent);
    if (mantissa != 0.5) throw ConfigurationError("grid resolution must be a power of two");
    const int levels = 1 - exponent;
    if (levels < std::max(j_max, 1) + 2)
        throw ConfigurationError("grid resolution must not exceed 2^-(j_max+2)");

    DictionaryAtlas a;
    a.filter_ = filter;
    a.j_max_ = j_max;
    a.levels_ = levels;
    const int pad = filter.support_length;
    a.grid_.extent = 1.0 + pad;
    a.grid_.h = h;
    a.grid_.size = static_cast<int>(std::lround(2.0 * a.grid_.extent / h)) + 1;

    const int max_dilation = std::max(j_max, 1);
    a.patterns_.resize(max_dilation + 1);
    for (int d = 1; d <= max_dilation; ++d) {
        const int r = levels - d;
        std::vector<double> c{1.0};
        for (int k = 0; k < r; ++k) c = refine(c, filter.low_pass);
        std::vector<double> w = refine({1.0}, filter.high_pass);
        for (int k = 1; k < r; ++k) w = refine(w, filter.low_pass);
        normalize(c);
        normalize(w);
        a.patterns_[d] = {std::move(c), std::move(w)};
    }

    const int L1 = filter.support_length;
    a.scale_offsets_.push_back(0);
    for (int j = 0; j <= j_max; ++j) {
        const int d = a.dilation(j);
        const double step = std::ldexp(1.0, -d);
        const int lo = static_cast<int>(std::floor(-std::ldexp(1.0, d))) - L1;
        const int hi = static_cast<int>(std::ceil(std::ldexp(1.0, d)));
        const int first_eps = j == 0 ? 0 : 1;
        const int last_eps = j == 0 ? 0 : 3;
        auto axis_distance = [&](int n) {
            const double b0 = n * step, b1 = (n + L1) * step;
            return b0 > 0.0 ? b0 : (b1 < 0.0 ? -b1 : 0.0);
        };
        for (int eps = first_eps; eps <= last_eps; ++eps)
            for (int n2 = lo; n2 <= hi; ++n2)
                for (int n1 = lo; n1 <= hi; ++n1) {
                    const double dx = axis_distance(n1), dy = axis_distance(n2);
                    if (dx * dx + dy * dy < 1.0) a.gamma_.push_back({j, n1, n2, eps});
                }
        a.scale_offsets_.push_back(a.gamma_.size());
    }
    return a;
}

std::optional<std::size_t> DictionaryAtlas::find(const AtomIndex& idx) const {
    auto it = std::lower_bound(gamma_.begin(), gamma_.end(), idx,
                               [](const AtomIndex& x, const AtomIndex& y) { return order_key(x) < order_key(y); });
    if (it == gamma_.end() || !(*it == idx)) return std::nullopt;
    return static_cast<std::size_t>(it - gamma_.begin());
}

std::size_t DictionaryAtlas::count_at_scale(int j) const {
    if (j < 0 || j > j_max_) throw RangeError("scale outside atlas");
    return scale_offsets_[j + 1] - scale_offsets_[j];
}

std::size_t DictionaryAtlas::prefix_size(int j0) const {
    if (j0 < 0 || j0 > j_max_) throw RangeError("truncation scale " + std::to_string(j0) + " outside [0, j_max]");
    return scale_offsets_[j0 + 1];
}

DictionaryAtlas::AtomView DictionaryAtlas::atom(std::size_t i) const {
    const AtomIndex& a = gamma_.at(i);
    const int d = dilation(a.scale);
    const Pattern& p = patterns_[d];
    const bool psi_x = a.orientation == 1 || a.orientation == 3;
    const bool psi_y = a.orientation == 2 || a.orientation == 3;
    const int origin = static_cast<int>(std::lround(grid_.extent / grid_.h));
    const int shift = 1 << (levels_ - d);
    AtomView v;
    v.fx = psi_x ? std::span<const double>(p.wavelet) : std::span<const double>(p.scaling);
    v.fy = psi_y ? std::span<const double>(p.wavelet) : std::span<const double>(p.scaling);
    v.ix0 = origin + a.n1 * shift;
    v.iy0 = origin + a.n2 * shift;
    return v;
}

std::array<double, 4> DictionaryAtlas::support_box(std::size_t i) const {
    const AtomIndex& a = gamma_.at(i);
    const double step = std::ldexp(1.0, -dilation(a.scale));
    const int L1 = filter_.support_length;
    return {a.n1 * step, (a.n1 + L1) * step, a.n2 * step, (a.n2 + L1) * step};
}

Image DictionaryAtlas::rasterize(std::size_t i) const {
    Image u = Image::zeros(grid_);
    const AtomView v = atom(i);
    for (std::size_t b = 0; b < v.fy.size(); ++b)
        for (std::size_t a = 0; a < v.fx.size(); ++a) u.values(v.ix0 + a, v.iy0 + b) = v.fx[a] * v.fy[b] / grid_.h;
    return u;
}

double DictionaryAtlas::inner(std::size_t i, std::size_t k) const {
    const AtomView a = atom(i), b = atom(k);
    const double ox = overlap(a.fx, a.ix0, b.fx, b.ix0);
    if (ox == 0.0) return 0.0;
    return ox * overlap(a.fy, a.iy0, b.fy, b.iy0);
}

Matrix DictionaryAtlas::gram(std::span<const std::size_t> atoms) const {
    const auto n = static_cast<Eigen::Index>(atoms.size());
    Matrix g(n, n);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = r; c < n; ++c) g(r, c) = g(c, r) = inner(atoms[r], atoms[c]);
    return g;
}

Vector DictionaryAtlas::analysis(const Image& u, std::span<const std::size_t> atoms) const {
    if (!(u.grid == grid_)) throw DimensionError("image grid does not match the atlas grid");
    std::vector<std::size_t> all;
    if (atoms.empty()) {
        all.resize(size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        atoms = all;
    }
    Vector out(static_cast<Eigen::Index>(atoms.size()));
    for (std::size_t k = 0; k < atoms.size(); ++k) {
        const AtomView v = atom(atoms[k]);
        const auto fx = Eigen::Map<const Vector>(v.fx.data(), static_cast<Eigen::Index>(v.fx.size()));
        double acc = 0.0;
        for (std::size_t b = 0; b < v.fy.size(); ++b)
            acc += v.fy[b] * u.values.col(v.iy0 + static_cast<Eigen::Index>(b)).segment(v.ix0, fx.size()).dot(fx);
        out[static_cast<Eigen::Index>(k)] = grid_.h * acc;
    }
    return out;
}

Image DictionaryAtlas::synthesis(const Vector& x, std::span<const std::size_t> atoms) const {
    std::vector<std::size_t> all;
    if (atoms.empty()) {
        all.resize(size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        atoms = all;
    }
    if (static_cast<std::size_t>(x.size()) != atoms.size())
        throw DimensionError("coefficient length does not match the atom list");
    Image u = Image::zeros(grid_);
    for (std::size_t k = 0; k < atoms.size(); ++k) {
        const double c = x[static_cast<Eigen::Index>(k)];
        if (c == 0.0) continue;
        const AtomView v = atom(atoms[k]);
        const auto fx = Eigen::Map<const Vector>(v.fx.data(), static_cast<Eigen::Index>(v.fx.size()));
        for (std::size_t b = 0; b < v.fy.size(); ++b)
            u.values.col(v.iy0 + static_cast<Eigen::Index>(b)).segment(v.ix0, fx.size()) +=
                (c * v.fy[b] / grid_.h) * fx;
    }
    return u;
}

std::vector<std::size_t> truncation_set(const DictionaryAtlas& atlas, int j0) {
    std::vector<std::size_t> out(atlas.prefix_size(j0));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
    return out;
}

std::vector<AtomIndex> truncation_labels(const DictionaryAtlas& atlas, int j0) {
    const auto n = atlas.prefix_size(j0);
    return {atlas.gamma().begin(), atlas.gamma().begin() + static_cast<std::ptrdiff_t>(n)};
}

void export_atlas(const DictionaryAtlas& atlas, const std::filesystem::path& stem) {
    auto header_path = stem;
    header_path += ".txt";
    auto data_path = stem;
    data_path += ".bin";
    std::ofstream header(header_path);
    std::ofstream data(data_path, std::ios::binary);
    if (!header || !data) throw IoError("cannot write atlas files at " + stem.string());
    header.precision(17);
    const GridSpec& g = atlas.grid();
    header << "sparsetomo-atlas 1\n"
           << "order " << atlas.filter().order << "\n"
           << "j_max " << atlas.j_max() << "\n"
           << "h " << g.h << "\n"
           << "extent " << g.extent << "\n"
           << "size " << g.size << "\n"
           << "count " << atlas.size() << "\n"
           << "# scale n1 n2 orientation ix0 iy0 width height\n";
    static_assert(std::endian::native == std::endian::little, "binary export assumes a little-endian host");
    std::vector<double> row;
    for (std::size_t i = 0; i < atlas.size(); ++i) {
        const AtomIndex& a = atlas.index(i);
        const auto v = atlas.atom(i);
        header << a.scale << ' ' << a.n1 << ' ' << a.n2 << ' ' << a.orientation << ' ' << v.ix0 << ' ' << v.iy0
               << ' ' << v.fx.size() << ' ' << v.fy.size() << '\n';
        row.resize(v.fx.size());
        for (std::size_t b = 0; b < v.fy.size(); ++b) {
            for (std::size_t c = 0; c < v.fx.size(); ++c) row[c] = v.fx[c] * v.fy[b] / g.h;
            data.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * 8));
        }
    }
    if (!header || !data) throw IoError("failed while writing atlas files");
}

DictionaryAtlas import_atlas(const std::filesystem::path& stem) {
    auto header_path = stem;
    header_path += ".txt";
    auto data_path = stem;
    data_path += ".bin";
    std::ifstream header(header_path);
    std::ifstream data(data_path, std::ios::binary);
    if (!header || !data) throw IoError("cannot read atlas files at " + stem.string());
    std::string key, line;
    int version = 0, order = 0, j_max = 0, size = 0;
    double h = 0.0, extent = 0.0;
    std::size_t count = 0;
    header >> key >> version;
    if (key != "sparsetomo-atlas" || version != 1) throw IoError("unrecognized atlas header");
    header >> key >> order >> key >> j_max >> key >> h >> key >> extent >> key >> size >> key >> count;
    if (!header) throw IoError("truncated atlas header");
    DictionaryAtlas atlas = DictionaryAtlas::build(build_filter(order), j_max, h);
    if (atlas.size() != count || atlas.grid().size != size || atlas.grid().extent != extent)
        throw IoError("atlas header disagrees with the rebuilt dictionary");
    std::getline(header, line);
    std::getline(header, line);
    std::vector<double> row;
    for (std::size_t i = 0; i < count; ++i) {
        AtomIndex a;
        int ix0 = 0, iy0 = 0;
        std::size_t w = 0, ht = 0;
        header >> a.scale >> a.n1 >> a.n2 >> a.orientation >> ix0 >> iy0 >> w >> ht;
        const auto v = atlas.atom(i);
        if (!header || !(atlas.index(i) == a) || v.ix0 != ix0 || v.iy0 != iy0 || v.fx.size() != w ||
            v.fy.size() != ht)
            throw IoError("atlas table entry " + std::to_string(i) + " is inconsistent");
        row.resize(w);
        for (std::size_t b = 0; b < ht; ++b) {
            data.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(w * 8));
            if (!data) throw IoError("atlas data file is truncated");
            for (std::size_t c = 0; c < w; ++c)
                if (std::abs(row[c] - v.fx[c] * v.fy[b] / h) > 1e-12 * (1.0 / h))
                    throw IoError("atlas patch " + std::to_string(i) + " does not match its filter");
        }
    }
    return atlas;
}

} // namespace sparsetomo
