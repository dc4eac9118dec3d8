#include "sparsetomo/certification.hpp"
#include "sparsetomo/errors.hpp"
#include "sparsetomo/models.hpp"
#include "sparsetomo/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <cmath>
#include <numbers>
#include <numeric>

using namespace sparsetomo;

namespace {

std::shared_ptr<const DictionaryAtlas> atlas(int j_max) {
    static std::map<int, std::shared_ptr<const DictionaryAtlas>> cache;
    auto& slot = cache[j_max];
    if (!slot) slot = std::make_shared<const DictionaryAtlas>(DictionaryAtlas::build(build_filter(2), j_max));
    return slot;
}

Image disk_image(const GridSpec& grid, double radius) {
    Image u = Image::zeros(grid);
    for (int i = 0; i < grid.size; ++i)
        for (int k = 0; k < grid.size; ++k) {
            const double x = grid.node(i), y = grid.node(k);
            u.values(i, k) = x * x + y * y < radius * radius ? 1.0 : 0.0;
        }
    return u;
}

double interpolate(const std::vector<double>& grid, const Vector& v, double s) {
    if (s <= grid.front() || s >= grid.back()) return 0.0;
    const double step = grid[1] - grid[0];
    const auto l = static_cast<std::size_t>((s - grid.front()) / step);
    const double t = (s - grid[l]) / step;
    return (1.0 - t) * v[static_cast<Eigen::Index>(l)] + t * v[static_cast<Eigen::Index>(l + 1)];
}

Vector random_coefficients(std::size_t n, Rng& rng) {
    Vector x(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.normal();
    return x;
}

} // namespace

TEST_CASE("Radon transform of the unit disk matches chord lengths") {
    const auto a = atlas(3);
    const RadonModel radon(a, 8.0 * a->grid().h);
    const Image disk = disk_image(a->grid(), 1.0);
    double err = 0.0;
    for (double theta : {0.0, 0.4, 1.3, 2.9}) {
        const Vector p = radon.image_projection(disk, theta);
        for (std::size_t l = 0; l < radon.s_grid().size(); ++l) {
            const double s = radon.s_grid()[l];
            const double exact = std::abs(s) < 1.0 ? 2.0 * std::sqrt(1.0 - s * s) : 0.0;
            err = std::max(err, std::abs(p[static_cast<Eigen::Index>(l)] - exact));
        }
    }
    CHECK(err <= 3.0 * radon.ds());
}

TEST_CASE("Radon transform of a radial image does not depend on the angle") {
    const auto a = atlas(3);
    const RadonModel radon(a, 8.0 * a->grid().h);
    Image u = Image::zeros(a->grid());
    for (int i = 0; i < u.grid.size; ++i)
        for (int k = 0; k < u.grid.size; ++k) {
            const double r2 = u.grid.node(i) * u.grid.node(i) + u.grid.node(k) * u.grid.node(k);
            u.values(i, k) = std::exp(-8.0 * r2);
        }
    std::vector<Vector> proj;
    for (int k = 0; k < 8; ++k) proj.push_back(radon.image_projection(u, k * std::numbers::pi / 8.0));
    double worst = 0.0;
    for (std::size_t p = 0; p < proj.size(); ++p)
        for (std::size_t q = p + 1; q < proj.size(); ++q) worst = std::max(worst, radon.norm(proj[p] - proj[q]));
    CHECK(worst <= 3.0 * radon.ds());
}

TEST_CASE("atom projections are linear in the atoms and agree with image projections") {
    const auto a = atlas(2);
    const RadonModel radon(a);
    const std::size_t atoms[3] = {3, 50, 200};
    const double theta = 0.77;
    Vector x(3);
    x << 1.0, -2.0, 0.5;
    const Vector from_block = radon.apply(theta, atoms, x) / std::sqrt(radon.ds());
    const Image u = a->synthesis(x, atoms);
    const Vector from_image = radon.image_projection(u, theta);
    CHECK(radon.norm(from_block - from_image) <= 0.05 * radon.norm(from_image));
}

TEST_CASE("fan-beam reparametrization of the Radon transform") {
    const auto a = atlas(2);
    const RadonModel radon(a, a->grid().h / 2);
    const FanBeamModel fan(a);
    Rng rng(3);
    const Vector x = random_coefficients(a->size(), rng);
    const Image u = a->synthesis(x);
    for (double theta : {0.3, 2.0, 4.4}) {
        const Vector d = fan.image_projection(u, theta);
        double err = 0.0, scale = 0.0;
        for (std::size_t l = 0; l < fan.alpha_grid().size(); ++l) {
            const double alpha = fan.alpha_grid()[l];
            const Vector r = radon.image_projection(u, theta + alpha - std::numbers::pi / 2);
            const double expected = interpolate(radon.s_grid(), r, fan.rho() * std::sin(alpha));
            err = std::max(err, std::abs(d[static_cast<Eigen::Index>(l)] - expected));
            scale = std::max(scale, std::abs(expected));
        }
        CHECK(err <= 5.0 * radon.ds() * std::max(1.0, scale));
    }
    CHECK(fan.image_projection(Image::zeros(a->grid()), 1.0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fan-beam norm sandwich") {
    const auto a = atlas(2);
    const RadonModel radon(a, a->grid().h / 2);
    const FanBeamModel fan(a);
    const double lower = 1.0 / std::sqrt(fan.rho());
    const double upper = std::pow(fan.rho() * fan.rho() - fan.d() * fan.d(), -0.25);
    Rng rng(5);
    for (int trial = 0; trial < 3; ++trial) {
        const Image u = a->synthesis(random_coefficients(a->size(), rng));
        double rr = 0.0, dd = 0.0;
        const int n = 64;
        for (int k = 0; k < n; ++k) {
            const double theta = 2.0 * std::numbers::pi * k / n;
            rr += std::pow(radon.norm(radon.image_projection(u, theta)), 2) / n;
            dd += std::pow(fan.norm(fan.image_projection(u, theta)), 2) / n;
        }
        CHECK(lower * std::sqrt(rr) <= 1.02 * std::sqrt(dd));
        CHECK(std::sqrt(dd) <= 1.02 * upper * std::sqrt(rr));
    }
    CHECK_THROWS_AS(FanBeamModel(a, 0.0, 0.5), GeometryError);
    CHECK_THROWS_AS(FanBeamModel(a, 1.0, 2.0), GeometryError);
}

TEST_CASE("Radon per-scale coherence decays like 2^{-j/2}") {
    const auto a = atlas(3);
    const RadonModel radon(a);
    std::vector<std::size_t> all(a->size());
    std::iota(all.begin(), all.end(), 0);
    std::vector<double> nodes;
    for (int k = 0; k < 16; ++k) nodes.push_back(2.0 * std::numbers::pi * (k + 0.37) / 16.0);
    const CoherenceProfile prof = coherence_profile(radon, all, nodes);
    CHECK(prof.scales.size() == 4);
    CHECK(prof.slope == doctest::Approx(-0.5).epsilon(0.25));
}

TEST_CASE("Legendre rows: sup bound and orthonormality") {
    for (std::size_t i = 1; i <= 30; ++i) {
        double sup = 0.0;
        for (int k = 0; k <= 2000; ++k) sup = std::max(sup, std::abs(legendre_row(-1.0 + k / 1000.0, i)));
        CHECK(sup <= std::sqrt(2.0 * i - 1.0) + 1e-9);
    }
    CHECK(legendre_row(0.3, 1) == doctest::Approx(1.0));
    const LegendreModel leg(30);
    const Quadrature q = leg.quadrature(40);
    CHECK(std::accumulate(q.weights.begin(), q.weights.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    double worst = 0.0;
    for (std::size_t i = 1; i <= 30; ++i)
        for (std::size_t j = 1; j <= 30; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < q.nodes.size(); ++k)
                acc += q.weights[k] * legendre_row(q.nodes[k], i) * legendre_row(q.nodes[k], j);
            worst = std::max(worst, std::abs(acc - (i == j ? 1.0 : 0.0)));
        }
    CHECK(worst <= 1e-8);
    CHECK_THROWS_AS(legendre_row(1.5, 2), DomainError);
    const WeightVector w = leg.sup_weights();
    CHECK(w[4] == doctest::Approx(3.0));
}

TEST_CASE("Fourier-wavelet rows: decay, Parseval and density") {
    const FourierWaveletModel fw(build_filter(2), 3, 256);
    double C = 0.0;
    for (std::size_t i = 0; i < fw.dictionary_size(); ++i) {
        double parseval = 0.0;
        for (int t = -256; t <= 256; ++t) {
            const double v = std::abs(fourier_wavelet_row(fw, t, i));
            parseval += v * v;
            if (t != 0) C = std::max(C, v * std::sqrt(std::abs(t)));
        }
        CHECK(parseval <= 1.0 + 1e-6);
    }
    CHECK(C < 2.0);
    CHECK_THROWS_AS(fourier_wavelet_row(fw, 257, 0), RangeError);

    double total = 0.0;
    for (int t = -256; t <= 256; ++t) total += fw.density(t);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(fw.density(0) == doctest::Approx(1.0 / fw.normalizer()));
    CHECK(fw.density(4) == doctest::Approx(1.0 / (4.0 * fw.normalizer())));
}

TEST_CASE("Fourier-wavelet sampling follows the density") {
    const FourierWaveletModel fw(build_filter(2), 2, 32);
    const std::size_t n = 100000;
    const auto draws = fw.draw_samples(n, 17);
    std::map<int, std::size_t> counts;
    for (double t : draws) ++counts[static_cast<int>(t)];
    for (int t = -32; t <= 32; ++t) {
        const double p = fw.density(t);
        const double expected = p * n, sd = std::sqrt(n * p * (1.0 - p));
        CHECK(std::abs(static_cast<double>(counts[t]) - expected) <= 3.5 * sd);
    }
}

TEST_CASE("Radon angle sampling is uniform and deterministic") {
    const auto a = atlas(1);
    const RadonModel radon(a);
    auto draws = radon.draw_samples(100000, 9);
    CHECK(draws == radon.draw_samples(100000, 9));
    CHECK(draws != radon.draw_samples(100000, 10));
    std::sort(draws.begin(), draws.end());
    double ks = 0.0;
    for (std::size_t k = 0; k < draws.size(); ++k) {
        const double cdf = draws[k] / (2.0 * std::numbers::pi);
        ks = std::max({ks, std::abs(cdf - static_cast<double>(k) / draws.size()),
                       std::abs(cdf - static_cast<double>(k + 1) / draws.size())});
    }
    CHECK(ks <= 0.01);
}

TEST_CASE("sampled system: noise, consistency and Q weights") {
    const auto a = atlas(2);
    auto radon = std::make_shared<const RadonModel>(a);
    const std::vector<std::size_t> lambda = truncation_set(*a, 1);
    Rng rng(1);
    const Vector xfull = random_coefficients(a->size(), rng);
    const auto samples = radon->draw_samples(5, 2);

    const SampledSystem clean = assemble_sampled_system(radon, lambda, samples, xfull, 0.0, 3);
    CHECK(clean.block_count() == 5);
    CHECK(clean.a.rows() == static_cast<Eigen::Index>(5 * radon->measurement_size()));

    // y equals A applied to the full signal (including the part outside Λ).
    std::vector<std::size_t> all(a->size());
    std::iota(all.begin(), all.end(), 0);
    const SampledSystem full = assemble_sampled_system(radon, all, samples, xfull, 0.0, 3);
    CHECK((full.a * xfull - clean.y).norm() <= 1e-10 * clean.y.norm());
    Vector xl(static_cast<Eigen::Index>(lambda.size()));
    for (std::size_t k = 0; k < lambda.size(); ++k) xl[static_cast<Eigen::Index>(k)] = xfull[static_cast<Eigen::Index>(lambda[k])];
    CHECK(clean.residual(xl) == doctest::Approx(clean.tail_residual).epsilon(1e-9));

    // ‖Ax‖² = (1/m) Σ ‖F_{t_k} Φ* ι_Λ x‖².
    const Vector x = random_coefficients(lambda.size(), rng);
    double acc = 0.0;
    for (double t : samples) acc += std::pow(radon->norm(radon->apply(t, lambda, x) / std::sqrt(radon->ds())), 2);
    CHECK((clean.a * x).squaredNorm() == doctest::Approx(acc / 5.0).epsilon(1e-10));
    CHECK(x.dot(clean.normal * x) == doctest::Approx(acc / 5.0).epsilon(1e-10));

    const SampledSystem noisy = assemble_sampled_system(radon, lambda, samples, xfull, 0.25, 3);
    for (double e : noisy.noise_norms) CHECK(std::abs(e - 0.25) <= 1e-12);
    CHECK((noisy.y - clean.y).norm() <= 0.25 + 1e-12);
    for (Eigen::Index k = 0; k < noisy.q_weights.size(); ++k)
        CHECK(noisy.q_weights[k] <= 1.0 / std::sqrt(radon->density_lower_bound()) + 1e-15);
    CHECK_THROWS_AS(assemble_sampled_system(radon, lambda, samples, xfull, -1.0, 3), DomainError);
}

TEST_CASE("uniform boundedness is stable under grid refinement") {
    auto coarse = std::make_shared<const DictionaryAtlas>(DictionaryAtlas::build(build_filter(2), 1));
    auto fine = std::make_shared<const DictionaryAtlas>(DictionaryAtlas::build(build_filter(2), 1, 1.0 / 32.0));
    auto bound = [](std::shared_ptr<const DictionaryAtlas> at) {
        const RadonModel radon(at);
        std::vector<std::size_t> all(at->size());
        std::iota(all.begin(), all.end(), 0);
        std::vector<double> nodes;
        Rng rng(8);
        for (int k = 0; k < 64; ++k) nodes.push_back(2.0 * std::numbers::pi * rng.uniform());
        return coherence_profile(radon, all, nodes).scale_max.front();
    };
    const double c1 = bound(coarse), c2 = bound(fine);
    CHECK(std::abs(c1 - c2) <= 0.1 * c2);
}
