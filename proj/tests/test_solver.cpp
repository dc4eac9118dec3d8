#include "oracles.hpp"

#include "sparsetomo/errors.hpp"
#include "sparsetomo/rng.hpp"
#include "sparsetomo/solver.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace sparsetomo;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Matrix a(rows, cols);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
    return a;
}

Vector random_vector(Eigen::Index n, Rng& rng) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
    return v;
}

} // namespace

TEST_CASE("zero data or a wide constraint give the zero solution") {
    Rng rng(1);
    const Matrix a = random_matrix(6, 4, rng);
    SolveConfig cfg;
    cfg.eta = 0.0;
    auto r = solve_constrained_l1(system_from_matrix(a, Vector::Zero(6)), WeightVector::ones(4), cfg);
    CHECK(r.x_hat.norm() == 0.0);
    CHECK(r.status == SolveStatus::optimal);

    const Vector y = random_vector(6, rng);
    cfg.eta = y.norm() * 1.0001;
    r = solve_constrained_l1(system_from_matrix(a, y), WeightVector::ones(4), cfg);
    CHECK(r.x_hat.norm() == 0.0);
    CHECK(r.status == SolveStatus::optimal);
}

TEST_CASE("infeasible constraints are reported") {
    Rng rng(2);
    const Matrix a = random_matrix(5, 2, rng);
    const Vector y = random_vector(5, rng);
    SolveConfig cfg;
    cfg.eta = 1e-3;
    const auto r = solve_constrained_l1(system_from_matrix(a, y), WeightVector::ones(2), cfg);
    CHECK(r.status == SolveStatus::infeasible);
    CHECK(r.residual > cfg.eta);
}

TEST_CASE("configuration errors") {
    Rng rng(3);
    const SampledSystem sys = system_from_matrix(random_matrix(3, 3, rng), random_vector(3, rng));
    SolveConfig cfg;
    cfg.zeta = 1.5;
    CHECK_THROWS_AS(solve_constrained_l1(sys, WeightVector::ones(3), cfg), ConfigurationError);
    cfg = {};
    cfg.eta = -1.0;
    CHECK_THROWS_AS(solve_constrained_l1(sys, WeightVector::ones(3), cfg), ConfigurationError);
    cfg = {};
    CHECK_THROWS_AS(solve_constrained_l1(sys, WeightVector::ones(2), cfg), DimensionError);
    CHECK_THROWS_AS(solve_unconstrained_path(sys, WeightVector::ones(3), {1.0, 2.0}, cfg), DomainError);
}

TEST_CASE("three-variable instances match the grid-search oracle") {
    Rng rng(4);
    for (int trial = 0; trial < 6; ++trial) {
        const Matrix a = random_matrix(3, 3, rng) + 2.0 * Matrix::Identity(3, 3);
        Vector xt(3);
        for (int i = 0; i < 3; ++i) xt[i] = rng.uniform(-1.0, 1.0);
        const Vector y = a * xt;
        std::vector<double> wv{1.0, rng.uniform(1.0, 2.0), rng.uniform(1.0, 2.0)};
        SolveConfig cfg;
        cfg.eta = rng.uniform(0.2, 0.6);
        const auto r = solve_constrained_l1(system_from_matrix(a, y), WeightVector(wv), cfg);
        REQUIRE(r.status == SolveStatus::optimal);
        CHECK(r.residual <= cfg.eta * (1.0 + 1e-6));
        const double grid = oracle::grid_search_l1(a, y, cfg.eta, Eigen::Map<const Vector>(wv.data(), 3));
        CHECK(std::abs(r.objective - grid) <= 0.02);
        CHECK(r.objective <= grid + 1e-9);
    }
}

TEST_CASE("change of variables for the zeta-weighted objective") {
    Rng rng(5);
    const Matrix a = random_matrix(8, 12, rng);
    const std::vector<int> scales{0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 3, 3};
    const Vector y = random_vector(8, rng);
    for (double zeta : {0.5, 1.0}) {
        SolveConfig cfg;
        cfg.zeta = zeta;
        cfg.eta = 0.3 * y.norm();
        const auto direct = solve_constrained_l1(system_from_matrix(a, y, scales), WeightVector::ones(12), cfg);
        Matrix scaled = a;
        for (int i = 0; i < 12; ++i) scaled.col(i) *= std::exp2(zeta * cfg.b * scales[static_cast<std::size_t>(i)]);
        SolveConfig plain = cfg;
        plain.zeta = 0.0;
        const auto via_z = solve_constrained_l1(system_from_matrix(scaled, y, scales), WeightVector::ones(12), plain);
        REQUIRE(direct.status == SolveStatus::optimal);
        REQUIRE(via_z.status == SolveStatus::optimal);
        CHECK(std::abs(direct.objective - via_z.objective) <= 1e-8 * std::max(1.0, via_z.objective));
    }
}

TEST_CASE("noiseless sparse recovery on a random Gaussian system") {
    Rng rng(6);
    const Matrix a = random_matrix(25, 60, rng);
    Vector xt = Vector::Zero(60);
    for (int i : {3, 17, 40, 51}) xt[i] = rng.sign();
    SolveConfig cfg;
    const auto r = solve_constrained_l1(system_from_matrix(a, a * xt), WeightVector::ones(60), cfg);
    CHECK(r.status == SolveStatus::optimal);
    CHECK((r.x_hat - xt).norm() <= 1e-5 * xt.norm());
}

TEST_CASE("Lagrangian path: limits, monotone residuals and agreement with the constrained solver") {
    Rng rng(7);
    const Matrix a = random_matrix(10, 6, rng);
    const Vector y = random_vector(10, rng);
    const SampledSystem sys = system_from_matrix(a, y);
    SolveConfig cfg;
    cfg.tol_gap = 1e-12;
    cfg.max_iters = 200000;
    std::vector<double> pens;
    for (double p = 1e3; p > 1e-6; p /= 2.0) pens.push_back(p);
    const auto path = solve_unconstrained_path(sys, WeightVector::ones(6), pens, cfg);
    CHECK(path.front().x_hat.norm() == 0.0);
    const Vector ls = a.colPivHouseholderQr().solve(y);
    CHECK((path.back().x_hat - ls).norm() <= 1e-4 * ls.norm());
    for (std::size_t k = 1; k < path.size(); ++k) CHECK(path[k].residual <= path[k - 1].residual + 1e-9);

    // A path member's residual defines η; the constrained optimum has the same ℓ¹ norm.
    const auto& member = path[path.size() / 2];
    SolveConfig c2;
    c2.eta = member.residual;
    const auto con = solve_constrained_l1(sys, WeightVector::ones(6), c2);
    CHECK(con.objective == doctest::Approx(member.objective).epsilon(1e-4));
}

TEST_CASE("reported gap never increases along the trace") {
    Rng rng(8);
    const Matrix a = random_matrix(20, 40, rng);
    const Vector y = random_vector(20, rng);
    const auto path = std::filesystem::temp_directory_path() / "sparsetomo_trace.csv";
    SolveConfig cfg;
    cfg.eta = 0.1 * y.norm();
    cfg.trace = path;
    cfg.tol_gap = 1e-10;
    solve_constrained_l1(system_from_matrix(a, y), WeightVector::ones(40), cfg);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    double last = INFINITY;
    int rows = 0;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string it, res, obj, gap;
        std::getline(ss, it, ',');
        std::getline(ss, res, ',');
        std::getline(ss, obj, ',');
        std::getline(ss, gap, ',');
        const double g = std::stod(gap);
        if (std::stoi(it) > 50) CHECK(g <= last + 1e-12);
        last = g;
        ++rows;
    }
    CHECK(rows > 0);
}
