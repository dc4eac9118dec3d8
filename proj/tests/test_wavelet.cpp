#include "sparsetomo/errors.hpp"
#include "sparsetomo/rng.hpp"
#include "sparsetomo/wavelet.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

using namespace sparsetomo;

namespace {

const DictionaryAtlas& atlas2() {
    static const DictionaryAtlas atlas = DictionaryAtlas::build(build_filter(2), 2);
    return atlas;
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

} // namespace

TEST_CASE("filters: normalization, mirror relation and orthonormality") {
    for (int order = 1; order <= 6; ++order) {
        const WaveletFilter f = build_filter(order);
        const auto& h = f.low_pass;
        const auto L = h.size();
        CHECK(std::accumulate(h.begin(), h.end(), 0.0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-10));
        for (std::size_t k = 0; k < L; ++k) {
            const double expected = (k % 2 ? -1.0 : 1.0) * h[L - 1 - k];
            CHECK(std::abs(f.high_pass[k] - expected) <= 1e-10);
        }
        for (std::size_t m = 0; 2 * m < L; ++m) {
            double acc = 0.0;
            for (std::size_t k = 0; k + 2 * m < L; ++k) acc += h[k] * h[k + 2 * m];
            CHECK(std::abs(acc - (m == 0 ? 1.0 : 0.0)) <= 1e-10);
        }
        CHECK(f.support_length == static_cast<int>(L) - 1);
    }
    CHECK_THROWS_AS(build_filter(0), ConfigurationError);
    CHECK_THROWS_AS(build_filter(7), ConfigurationError);
}

TEST_CASE("atlas with j_max = 0 holds only scaling atoms") {
    const DictionaryAtlas a = DictionaryAtlas::build(build_filter(2), 0);
    CHECK(a.size() == 36);
    for (const auto& idx : a.gamma()) {
        CHECK(idx.scale == 0);
        CHECK(idx.orientation == 0);
    }
}

TEST_CASE("atlas cardinalities and truncation sets") {
    const auto& a = atlas2();
    CHECK(a.count_at_scale(0) == 36);
    CHECK(a.count_at_scale(1) == 108);
    CHECK(a.count_at_scale(2) == 288);
    CHECK(truncation_set(a, 2).size() == a.size());
    CHECK(truncation_set(a, 0).size() == 36);
    for (auto i : truncation_set(a, 0)) CHECK(a.index(i).orientation == 0);
    CHECK(truncation_set(a, 1).size() == 144);
    CHECK_THROWS_AS(truncation_set(a, 3), RangeError);
    for (const auto& idx : a.gamma())
        if (idx.scale >= 1) CHECK((idx.orientation >= 1 && idx.orientation <= 3));
}

TEST_CASE("atom count regression slope approaches 2") {
    const DictionaryAtlas a = DictionaryAtlas::build(build_filter(2), 5);
    std::vector<double> js, ys;
    for (int j = 2; j <= 5; ++j) {
        js.push_back(j);
        ys.push_back(std::log2(static_cast<double>(a.count_at_scale(j))));
    }
    CHECK(std::abs(slope(js, ys) - 2.0) <= 0.3);
    // Finite-size effect of the support rule; the ratio tends to 4 from below.
    CHECK(static_cast<double>(a.count_at_scale(5)) / static_cast<double>(a.count_at_scale(4)) >= 3.2);
}

TEST_CASE("every atom support meets the unit ball") {
    const auto& a = atlas2();
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto box = a.support_box(i);
        const double cx = std::clamp(0.0, box[0], box[1]);
        const double cy = std::clamp(0.0, box[2], box[3]);
        CHECK(cx * cx + cy * cy < 1.0);
    }
}

TEST_CASE("discrete Gram matrix is within 5h of the identity") {
    const auto& a = atlas2();
    std::vector<std::size_t> all(a.size());
    std::iota(all.begin(), all.end(), 0);
    const Matrix g = a.gram(all);
    const double tau = 5.0 * a.grid().h;
    CHECK((g - Matrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff() <= tau);
}

TEST_CASE("rasterized atoms vanish outside their support box") {
    const auto& a = atlas2();
    for (std::size_t i : {std::size_t{0}, std::size_t{40}, std::size_t{200}, a.size() - 1}) {
        const Image img = a.rasterize(i);
        const auto box = a.support_box(i);
        const double h = a.grid().h;
        for (int p = 0; p < a.grid().size; ++p)
            for (int q = 0; q < a.grid().size; ++q) {
                const double x = a.grid().node(p), y = a.grid().node(q);
                if (x < box[0] - h || x > box[1] + h || y < box[2] - h || y > box[3] + h)
                    CHECK(img.values(p, q) == 0.0);
            }
    }
}

TEST_CASE("atom norms are one to within 5h at two resolutions") {
    for (int extra = 0; extra <= 1; ++extra) {
        const DictionaryAtlas a = DictionaryAtlas::build(build_filter(2), 1, std::exp2(-(4 + extra)));
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(std::abs(a.rasterize(i).l2_norm() - 1.0) <= 5.0 * a.grid().h);
    }
    CHECK_THROWS_AS(DictionaryAtlas::build(build_filter(2), 2, 0.25), ConfigurationError);
}

TEST_CASE("analysis of atoms, zero image and linear combinations") {
    const auto& a = atlas2();
    const double tau = 5.0 * a.grid().h;
    const std::size_t ia = 17, ib = 300;
    const Vector ea = a.analysis(a.rasterize(ia));
    Vector expected = Vector::Zero(static_cast<Eigen::Index>(a.size()));
    expected[ia] = 1.0;
    CHECK((ea - expected).cwiseAbs().maxCoeff() <= tau);

    CHECK(a.analysis(Image::zeros(a.grid())).cwiseAbs().maxCoeff() == 0.0);

    Image combo = a.rasterize(ia);
    combo.values += 2.0 * a.rasterize(ib).values;
    const Vector c = a.analysis(combo);
    CHECK(c[ia] == doctest::Approx(1.0).epsilon(tau));
    CHECK(c[ib] == doctest::Approx(2.0).epsilon(tau));
    Vector rest = c;
    rest[ia] = rest[ib] = 0.0;
    CHECK(rest.cwiseAbs().maxCoeff() <= 2.0 * tau);

    Image wrong = Image::zeros(DictionaryAtlas::build(build_filter(2), 1).grid());
    CHECK_THROWS_AS(a.analysis(wrong), DimensionError);
}

TEST_CASE("synthesis is the adjoint of analysis and round-trips") {
    const auto& a = atlas2();
    Rng rng(11);
    const auto n = static_cast<Eigen::Index>(a.size());
    for (int trial = 0; trial < 50; ++trial) {
        Vector x(n);
        for (Eigen::Index i = 0; i < n; ++i) x[i] = rng.normal();
        Image u = Image::zeros(a.grid());
        for (Eigen::Index i = 0; i < u.values.size(); ++i) u.values.data()[i] = rng.normal();
        const double lhs = a.synthesis(x).inner(u);
        const double rhs = x.dot(a.analysis(u));
        CHECK(std::abs(lhs - rhs) <= 1e-10 * x.norm() * u.l2_norm());
    }
    Vector x(n);
    for (Eigen::Index i = 0; i < n; ++i) x[i] = rng.normal();
    CHECK((a.analysis(a.synthesis(x)) - x).norm() <= 5.0 * a.grid().h * x.norm());

    Vector e = Vector::Zero(n);
    e[5] = 1.0;
    CHECK((a.synthesis(e).values - a.rasterize(5).values).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(a.synthesis(Vector::Zero(3)), DimensionError);
}

TEST_CASE("atlas export and import") {
    const DictionaryAtlas a = DictionaryAtlas::build(build_filter(2), 1);
    const auto stem = std::filesystem::temp_directory_path() / "sparsetomo_atlas_test";
    export_atlas(a, stem);
    const DictionaryAtlas b = import_atlas(stem);
    CHECK(b.size() == a.size());
    CHECK(b.gamma() == a.gamma());
    CHECK(b.grid() == a.grid());
    CHECK_THROWS_AS(import_atlas(stem.string() + "_missing"), IoError);
}
