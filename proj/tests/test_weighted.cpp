#include "sparsetomo/errors.hpp"
#include "sparsetomo/rng.hpp"
#include "sparsetomo/weighted.hpp"

#include <doctest.h>

#include <cmath>

using namespace sparsetomo;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

WeightVector weights(std::initializer_list<double> v) { return WeightVector(std::vector<double>(v)); }

} // namespace

TEST_CASE("weighted norm examples") {
    CHECK(weighted_norm(vec({1, -2, 3}), WeightVector::ones(3), 1.0) == doctest::Approx(6.0));
    CHECK(weighted_norm(vec({1, 1}), weights({2, 3}), 1.0) == doctest::Approx(5.0));
    CHECK(weighted_norm(vec({3, 4}), weights({7, 9}), 2.0) == doctest::Approx(5.0));
}

TEST_CASE("weighted norm errors") {
    CHECK_THROWS_AS(weighted_norm(vec({1, 2}), WeightVector::ones(3), 1.0), DimensionError);
    CHECK_THROWS_AS(weighted_norm(vec({1, 2}), WeightVector::ones(2), 0.0), DomainError);
    CHECK_THROWS_AS(weighted_norm(vec({1, 2}), WeightVector::ones(2), 2.5), DomainError);
}

TEST_CASE("weight vectors reject entries below one") {
    CHECK_THROWS(WeightVector(std::vector<double>{1.0, 0.5}));
    CHECK_THROWS(WeightVector(std::vector<double>{1.0, std::nan("")}));
    CHECK_THROWS(WeightVector(std::vector<double>{1.0, INFINITY}));
}

TEST_CASE("weighted size examples") {
    const std::vector<std::size_t> s12{0, 1}, none{}, all{0, 1, 2}, bad{3};
    CHECK(weighted_size(s12, weights({2, 3, 5})) == doctest::Approx(13.0));
    CHECK(weighted_size(none, weights({2, 3, 5})) == 0.0);
    CHECK(weighted_size(all, WeightVector::ones(3)) == doctest::Approx(3.0));
    CHECK_THROWS_AS(weighted_size(bad, WeightVector::ones(3)), IndexError);
}

TEST_CASE("quasi-best approximation examples") {
    auto r = quasi_best_sparse_approx(vec({3, 2, 1, 0}), WeightVector::ones(4), 2.0, 1.0);
    CHECK(r.support == std::vector<std::size_t>{0, 1});
    CHECK(r.error_p1 == doctest::Approx(1.0));

    r = quasi_best_sparse_approx(vec({4, 1}), weights({3, 1}), 2.0, 1.0);
    CHECK(r.support.empty());
    CHECK(r.error_p1 == doctest::Approx(13.0));

    r = quasi_best_sparse_approx(Vector::Zero(5), WeightVector::ones(5), 3.0, 1.0);
    CHECK(r.support.empty());
    CHECK(r.error_p1 == 0.0);
}

TEST_CASE("brute-force approximation examples") {
    auto r = best_sparse_approx_bruteforce(vec({4, 1}), weights({3, 1}), 2.0, 1.0);
    CHECK(r.support == std::vector<std::size_t>{1});
    CHECK(r.error_p1 == doctest::Approx(12.0));
    CHECK(best_sparse_approx_bruteforce(vec({3, 2, 1, 0}), WeightVector::ones(4), 2.0, 1.0).error_p1 ==
          doctest::Approx(1.0));
    CHECK(best_sparse_approx_bruteforce(vec({1, 1, 1}), WeightVector::ones(3), 3.0, 1.0).error_p1 == 0.0);
    CHECK_THROWS_AS(best_sparse_approx_bruteforce(Vector::Ones(21), WeightVector::ones(21), 3.0, 1.0), CapacityError);
}

TEST_CASE("Stechkin bound examples") {
    CHECK(stechkin_bound(vec({1, 0, 0}), WeightVector::ones(3), 1.0, 1.0, 2.0) == doctest::Approx(1.0));
    CHECK(best_sparse_approx_bruteforce(vec({1, 0, 0}), WeightVector::ones(3), 1.0, 2.0).error_p == 0.0);
    const double bound = stechkin_bound(vec({1, 1, 1, 1}), WeightVector::ones(4), 2.0, 1.0, 2.0);
    CHECK(bound == doctest::Approx(4.0 / std::sqrt(2.0)));
    CHECK(best_sparse_approx_bruteforce(vec({1, 1, 1, 1}), WeightVector::ones(4), 2.0, 2.0).error_p ==
          doctest::Approx(std::sqrt(2.0)));
    CHECK_THROWS_AS(stechkin_bound(vec({1}), WeightVector::ones(1), 1.0, 2.0, 1.0), DomainError);
    CHECK_THROWS_AS(stechkin_bound(vec({1}), WeightVector::ones(1), 0.0, 1.0, 2.0), DomainError);
}

TEST_CASE("weighted sparsity uses the exact-zero convention") {
    CHECK(weighted_sparsity(vec({0, 1e-300, 0, 2}), weights({5, 2, 1, 3})) == doctest::Approx(13.0));
}

TEST_CASE("property: brute force <= quasi-best <= full norm, Stechkin, sandwich, scaling") {
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const auto n = static_cast<std::size_t>(1 + rng.below(12));
        Vector x(static_cast<Eigen::Index>(n));
        std::vector<double> wv(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[static_cast<Eigen::Index>(i)] = rng.uniform() < 0.2 ? 0.0 : rng.normal();
            wv[i] = rng.uniform(1.0, 2.5);
        }
        const WeightVector w(wv);
        const double s = rng.uniform(0.5, 2.0 * static_cast<double>(n));
        for (double p : {1.0, 2.0, 0.5}) {
            const auto best = best_sparse_approx_bruteforce(x, w, s, p);
            const auto quasi = quasi_best_sparse_approx(x, w, s, p);
            CHECK(best.error_p <= quasi.error_p + 1e-12);
            CHECK(quasi.error_p <= weighted_norm(x, w, p) + 1e-12);
            CHECK(best.weighted_size <= s + 1e-12);
            CHECK(quasi.weighted_size <= s + 1e-12);
        }
        const auto q2 = best_sparse_approx_bruteforce(x, w, s, 2.0);
        CHECK(q2.error_p <= stechkin_bound(x, w, s, 1.0, 2.0) + 1e-12);

        std::vector<std::size_t> subset;
        double wmax2 = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (rng.uniform() < 0.5) {
                subset.push_back(i);
                wmax2 = std::max(wmax2, wv[i] * wv[i]);
            }
        const double ws = weighted_size(subset, w);
        CHECK(static_cast<double>(subset.size()) <= ws + 1e-12);
        CHECK(ws <= static_cast<double>(subset.size()) * wmax2 + 1e-12);

        CHECK(weighted_norm(x, w, 2.0) == doctest::Approx(x.norm()).epsilon(1e-12));
        const double c = rng.uniform(-3.0, 3.0);
        const Vector cx = c * x;
        CHECK(weighted_norm(cx, w, 1.0) == doctest::Approx(std::abs(c) * weighted_norm(x, w, 1.0)).epsilon(1e-12));
    }
}

TEST_CASE("stored error fields match recomputation") {
    Rng rng(7);
    Vector x(10);
    for (Eigen::Index i = 0; i < 10; ++i) x[i] = rng.normal();
    std::vector<double> wv(10);
    for (auto& v : wv) v = rng.uniform(1.0, 2.0);
    const WeightVector w(wv);
    const auto r = quasi_best_sparse_approx(x, w, 4.0, 1.0);
    Vector tail = x;
    for (auto i : r.support) tail[static_cast<Eigen::Index>(i)] = 0.0;
    CHECK(r.error_p1 == doctest::Approx(weighted_norm(tail, w, 1.0)).epsilon(1e-12));
    CHECK(r.error_p2 == doctest::Approx(tail.norm()).epsilon(1e-12));
}
