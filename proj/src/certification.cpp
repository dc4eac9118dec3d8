#include "sparsetomo/certification.hpp"
#include "sparsetomo/errors.hpp"
#include "sparsetomo/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>

namespace sparsetomo {

namespace {

double regression_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxx > 0.0 ? sxy / sxx : 0.0;
}

Matrix principal(const Matrix& m, std::span<const std::size_t> idx) {
    const auto k = static_cast<Eigen::Index>(idx.size());
    Matrix out(k, k);
    for (Eigen::Index a = 0; a < k; ++a)
        for (Eigen::Index b = 0; b < k; ++b)
            out(a, b) = m(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(a)]),
                          static_cast<Eigen::Index>(idx[static_cast<std::size_t>(b)]));
    return out;
}

double b_from_diagonal(const Matrix& g2, std::span<const int> scales, double fallback) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < scales.size(); ++i) {
        const double d = g2(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
        if (d > 0.0) {
            x.push_back(scales[i]);
            y.push_back(std::log2(d));
        }
    }
    const bool spread = !x.empty() && *std::min_element(x.begin(), x.end()) < *std::max_element(x.begin(), x.end());
    return spread ? -0.5 * regression_slope(x, y) : fallback;
}

void fill_spectrum(GramCertificate& cert) {
    const auto n = cert.g2.rows();
    if (n > 0 && (cert.g2 - cert.g2.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, cert.g2.cwiseAbs().maxCoeff()))
        throw NumericalError("Gram matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(cert.g2);
    Vector lam = es.eigenvalues();
    const double top = n > 0 ? std::max(lam.maxCoeff(), 1.0) : 1.0;
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        if (lam[i] < -1e-10 * top) throw NumericalError("Gram matrix has a materially negative eigenvalue");
        if (lam[i] <= 0.0) {
            lam[i] = 0.0;
            cert.fbi_violation = true;
        }
    }
    const Vector root = lam.cwiseSqrt();
    cert.g = es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
    cert.sigma_min = n > 0 ? root.minCoeff() : 0.0;
    cert.sigma_max = n > 0 ? root.maxCoeff() : 0.0;
    cert.inv_norm = cert.sigma_min > 0.0 ? 1.0 / cert.sigma_min : std::numeric_limits<double>::infinity();
}

void fill_quasi_diag(GramCertificate& cert, std::size_t probes, std::uint64_t seed, double b_default) {
    const QuasiDiag q = estimate_quasi_diag(cert.g2, cert.scales, probes, seed);
    cert.c_hat = q.c_hat;
    cert.C_hat = q.C_hat;
    cert.b_fit = cert.scales.empty() ? b_default : b_from_diagonal(cert.g2, cert.scales, b_default);
}

double sigma_min_of(const Matrix& g2) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(g2, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(es.eigenvalues().minCoeff(), 0.0));
}

// Enumerates maximal supports with ω(S) ≤ λ by depth-first search in index order.
void enumerate_maximal(const std::vector<double>& w2, double lambda, std::size_t next, std::vector<std::size_t>& cur,
                       double used, const std::function<void(const std::vector<std::size_t>&)>& visit) {
    const std::size_t n = w2.size();
    if (next == n) {
        for (std::size_t i = 0; i < n; ++i)
            if (std::find(cur.begin(), cur.end(), i) == cur.end() && used + w2[i] <= lambda) return;
        visit(cur);
        return;
    }
    if (used + w2[next] <= lambda) {
        cur.push_back(next);
        enumerate_maximal(w2, lambda, next + 1, cur, used + w2[next], visit);
        cur.pop_back();
    }
    enumerate_maximal(w2, lambda, next + 1, cur, used, visit);
}

std::vector<double> squared_weights(const WeightVector& w, Eigen::Index n) {
    if (static_cast<Eigen::Index>(w.size()) != n) throw DimensionError("weight vector does not match the columns");
    std::vector<double> w2(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) w2[i] = w[i] * w[i];
    return w2;
}

void check_pair(const Matrix& ata, const Matrix& gtg) {
    if (ata.rows() != ata.cols() || gtg.rows() != gtg.cols() || ata.rows() != gtg.rows())
        throw DimensionError("A*A and G*G must be square of equal size");
}

} // namespace

CoherenceProfile coherence_profile(const ForwardModel& model, std::span<const std::size_t> atoms,
                                   const std::vector<double>& nodes) {
    if (nodes.empty()) throw DomainError("coherence needs at least one node");
    CoherenceProfile out;
    out.atom_max.assign(atoms.size(), 0.0);
    for (double t : nodes) {
        const SparseMatrix b = model.block(t, atoms);
        for (Eigen::Index c = 0; c < b.outerSize(); ++c) {
            const double nrm = b.col(c).norm();
            auto& slot = out.atom_max[static_cast<std::size_t>(c)];
            slot = std::max(slot, nrm);
        }
    }
    std::map<int, double> per_scale;
    for (std::size_t k = 0; k < atoms.size(); ++k) {
        auto& v = per_scale[model.scale_of(atoms[k])];
        v = std::max(v, out.atom_max[k]);
    }
    std::vector<double> x, y;
    for (const auto& [j, v] : per_scale) {
        out.scales.push_back(j);
        out.scale_max.push_back(v);
        if (v > 0.0) {
            x.push_back(j);
            y.push_back(std::log2(v));
        }
    }
    out.slope = x.size() >= 2 ? regression_slope(x, y) : 0.0;
    return out;
}

GramCertificate compute_gram(std::shared_ptr<const ForwardModel> model, std::vector<std::size_t> lambda,
                             const GramOptions& options) {
    if (!model) throw ConfigurationError("model is required");
    if (lambda.empty()) throw DomainError("truncation set is empty");
    std::size_t n = options.angles > 0 ? options.angles
                                       : std::max<std::size_t>(64, 8u * (std::size_t{1} << std::max(options.j_max, 0)));
    GramCertificate cert;
    cert.lambda = lambda;
    for (auto i : lambda) cert.scales.push_back(model->scale_of(i));

    auto gram_at = [&](std::size_t nodes) {
        return assemble_quadrature_system(model, lambda, model->quadrature(nodes), AssemblyOptions{false}).normal;
    };
    Matrix g2 = gram_at(n);
    double smin = sigma_min_of(g2);
    for (int d = 0; options.refine && d < options.max_doublings; ++d) {
        const std::size_t next = 2 * n;
        const Quadrature qa = model->quadrature(n), qb = model->quadrature(next);
        if (qa.nodes == qb.nodes) {
            cert.refine_shift = 0.0;
            break;
        }
        Matrix g2n = gram_at(next);
        const double sn = sigma_min_of(g2n);
        cert.refine_shift = std::abs(sn - smin) / std::max(sn, std::numeric_limits<double>::min());
        g2 = std::move(g2n);
        smin = sn;
        n = next;
        if (cert.refine_shift <= options.refine_tol) break;
    }
    cert.g2 = std::move(g2);
    cert.nodes = n;
    fill_spectrum(cert);
    fill_quasi_diag(cert, options.probes, options.seed, options.b);

    const Quadrature cq = model->quadrature(std::max<std::size_t>(options.coherence_angles, 1));
    cert.coherence = coherence_profile(*model, lambda, cq.nodes);
    cert.coherence_uniform = *std::max_element(cert.coherence.atom_max.begin(), cert.coherence.atom_max.end());
    cert.d_exponent = -cert.coherence.slope;
    for (std::size_t k = 0; k < lambda.size(); ++k)
        cert.coherence_B =
            std::max(cert.coherence_B, cert.coherence.atom_max[k] * std::exp2(cert.d_exponent * cert.scales[k]));
    for (int j : cert.scales)
        cert.relative_coherence =
            std::max(cert.relative_coherence, cert.coherence_B * std::exp2((cert.b_fit - cert.d_exponent) * j));
    return cert;
}

GramCertificate certificate_from_gram(const Matrix& g2, std::vector<int> scales, double b) {
    if (g2.rows() != g2.cols()) throw DimensionError("Gram matrix must be square");
    if (static_cast<Eigen::Index>(scales.size()) != g2.rows()) throw DimensionError("one scale per column required");
    GramCertificate cert;
    cert.g2 = g2;
    cert.scales = std::move(scales);
    for (std::size_t i = 0; i < cert.scales.size(); ++i) cert.lambda.push_back(i);
    fill_spectrum(cert);
    fill_quasi_diag(cert, 200, 0, b);
    return cert;
}

QuasiDiag estimate_quasi_diag(const Matrix& g2, std::span<const int> scales, std::size_t probes, std::uint64_t seed) {
    if (static_cast<Eigen::Index>(scales.size()) != g2.rows()) throw DimensionError("one scale per column required");
    QuasiDiag q;
    q.b_fit = b_from_diagonal(g2, scales, 0.5);
    const auto n = g2.rows();
    Vector dw(n);
    for (Eigen::Index i = 0; i < n; ++i) dw[i] = std::exp2(-2.0 * q.b_fit * scales[static_cast<std::size_t>(i)]);
    q.c_hat = std::numeric_limits<double>::infinity();
    q.C_hat = 0.0;
    auto take = [&](double ratio) {
        q.c_hat = std::min(q.c_hat, ratio);
        q.C_hat = std::max(q.C_hat, ratio);
    };
    for (Eigen::Index i = 0; i < n; ++i) take(g2(i, i) / dw[i]);
    Rng rng(seed);
    Vector x(n);
    for (std::size_t p = 0; p < probes; ++p) {
        for (Eigen::Index i = 0; i < n; ++i) x[i] = rng.normal();
        take(x.dot(g2 * x) / x.cwiseAbs2().dot(dw));
    }
    return q;
}

QuasiDiag estimate_quasi_diag(std::shared_ptr<const ForwardModel> model, int j_max, const GramOptions& options) {
    std::vector<std::size_t> lambda;
    for (std::size_t i = 0; i < model->dictionary_size(); ++i)
        if (model->scale_of(i) <= j_max) lambda.push_back(i);
    GramOptions opt = options;
    opt.j_max = j_max;
    const GramCertificate cert = compute_gram(std::move(model), std::move(lambda), opt);
    return {cert.c_hat, cert.C_hat, cert.b_fit};
}

double support_deviation(const Matrix& ata, const Matrix& gtg, std::span<const std::size_t> support) {
    if (support.empty()) return 0.0;
    const Matrix b = principal(gtg, support);
    const Matrix a = principal(ata, support) - b;
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(a, b, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("G*G is not positive definite on the support");
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

RipEstimate delta_star_bruteforce(const Matrix& ata, const Matrix& gtg, const WeightVector& w, double lambda) {
    check_pair(ata, gtg);
    if (ata.rows() > 16) throw CapacityError("brute-force δ* is limited to 16 columns");
    const std::vector<double> w2 = squared_weights(w, ata.rows());
    RipEstimate est;
    est.lambda = lambda;
    est.method = RipMethod::bruteforce;
    std::vector<std::size_t> cur;
    enumerate_maximal(w2, lambda, 0, cur, 0.0, [&](const std::vector<std::size_t>& s) {
        ++est.trials_or_supports;
        const double d = support_deviation(ata, gtg, s);
        if (d > est.delta_star || est.worst_support.empty()) {
            est.delta_star = std::max(est.delta_star, d);
            est.worst_support = s;
        }
    });
    return est;
}

RipEstimate delta_star_bruteforce(const SampledSystem& system, const GramCertificate& cert, const WeightVector& w,
                                  double lambda) {
    RipEstimate est = delta_star_bruteforce(system.normal, cert.g2, w, lambda);
    est.samples_m = system.block_count();
    return est;
}

RipEstimate delta_star_montecarlo(const Matrix& ata, const Matrix& gtg, const WeightVector& w, double lambda,
                                  std::size_t trials, std::uint64_t seed) {
    check_pair(ata, gtg);
    if (trials < 1) throw DomainError("at least one trial is required");
    const std::vector<double> w2 = squared_weights(w, ata.rows());
    RipEstimate est;
    est.lambda = lambda;
    est.method = RipMethod::montecarlo;
    est.trials_or_supports = trials;
    Rng rng(seed);
    std::vector<std::size_t> order(w2.size());
    for (std::size_t t = 0; t < trials; ++t) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        std::vector<std::size_t> s;
        double used = 0.0;
        for (auto i : order)
            if (used + w2[i] <= lambda) {
                s.push_back(i);
                used += w2[i];
            }
        std::sort(s.begin(), s.end());
        const double d = support_deviation(ata, gtg, s);
        if (d > est.delta_star || est.worst_support.empty()) {
            est.delta_star = std::max(est.delta_star, d);
            est.worst_support = s;
        }
    }
    return est;
}

RipEstimate delta_star_montecarlo(const SampledSystem& system, const GramCertificate& cert, const WeightVector& w,
                                  double lambda, std::size_t trials, std::uint64_t seed) {
    RipEstimate est = delta_star_montecarlo(system.normal, cert.g2, w, lambda, trials, seed);
    est.samples_m = system.block_count();
    return est;
}

std::string to_string(ComplexityVariant variant) {
    switch (variant) {
    case ComplexityVariant::uniform: return "uniform";
    case ComplexityVariant::relative: return "relative";
    case ComplexityVariant::radon_j0: return "radon_j0";
    case ComplexityVariant::radon_s: return "radon_s";
    }
    return "unknown";
}

double complexity_tau(const GramCertificate& cert, const ComplexityInputs& in, ComplexityVariant variant) {
    if (in.s < std::max(2.0, in.max_weight * in.max_weight / 4.0)) throw DomainError("s is below max(2, ‖ω‖∞²/4)");
    if (in.s > in.dictionary_size) throw DomainError("s exceeds the dictionary size");
    if (!(in.gamma > 0.0 && in.gamma < 1.0)) throw DomainError("gamma must lie in (0, 1)");
    switch (variant) {
    case ComplexityVariant::uniform: {
        const double b = cert.coherence_uniform;
        return b * b * std::pow(cert.inv_norm, 4) * cert.sigma_max * cert.sigma_max * in.s;
    }
    case ComplexityVariant::relative: {
        double worst = 0.0;
        for (int j : cert.scales) worst = std::max(worst, std::exp2(2.0 * (cert.b_fit - cert.d_exponent) * j));
        if (cert.scales.empty()) worst = 1.0;
        const double b = cert.coherence_B;
        return b * b * worst * std::exp2(2.0 * (1.0 - in.zeta) * cert.b_fit * in.j0) * in.s;
    }
    case ComplexityVariant::radon_j0: return std::exp2(in.j0) * in.s;
    case ComplexityVariant::radon_s: return in.s;
    }
    throw ConfigurationError("unknown complexity variant");
}

std::size_t sample_complexity(const GramCertificate& cert, const ComplexityInputs& in, ComplexityVariant variant) {
    const double tau = complexity_tau(cert, in, variant);
    const double lg = std::log(1.0 / in.gamma);
    double m = 0.0;
    if (variant == ComplexityVariant::radon_s) {
        const double ls = std::log(in.s);
        m = in.c0 * in.s * std::max(in.j0 * ls * ls * ls, lg);
    } else {
        const double lt = std::log(std::max(tau, 1.0));
        m = in.c0 * tau * std::max(lt * lt * lt * std::log(in.dictionary_size), lg);
    }
    return static_cast<std::size_t>(std::ceil(m - 1e-9));
}

TruncationReport truncation_residual(const SampledSystem& system, const Vector& x_dagger) {
    if (!system.model) throw ConfigurationError("system has no model");
    const ForwardModel& model = *system.model;
    if (static_cast<std::size_t>(x_dagger.size()) != model.dictionary_size())
        throw DimensionError("x_dagger must be indexed by the full dictionary");
    std::vector<char> in_lambda(model.dictionary_size(), 0);
    for (auto i : system.lambda) in_lambda[i] = 1;
    std::vector<std::size_t> tail;
    for (std::size_t i = 0; i < model.dictionary_size(); ++i)
        if (!in_lambda[i] && x_dagger[static_cast<Eigen::Index>(i)] != 0.0) tail.push_back(i);
    TruncationReport rep;
    if (tail.empty()) return rep;
    Vector xt(static_cast<Eigen::Index>(tail.size()));
    for (std::size_t k = 0; k < tail.size(); ++k) xt[static_cast<Eigen::Index>(k)] = x_dagger[tail[k]];
    rep.tail_norm = xt.norm();
    double r2 = 0.0;
    for (std::size_t k = 0; k < system.block_count(); ++k) {
        const SparseMatrix b = model.block(system.samples[k], tail);
        const double q = system.q_weights[static_cast<Eigen::Index>(k)];
        r2 += system.sample_weights[k] * q * q * (b * xt).squaredNorm();
        const Matrix bd(b);
        Eigen::SelfAdjointEigenSolver<Matrix> es(bd.transpose() * bd, Eigen::EigenvaluesOnly);
        rep.operator_norm = std::max(rep.operator_norm, std::sqrt(std::max(es.eigenvalues().maxCoeff(), 0.0)));
    }
    rep.residual = std::sqrt(r2);
    rep.bound = rep.operator_norm * rep.tail_norm / std::sqrt(model.density_lower_bound());
    return rep;
}

RnspReport rnsp_witness(const SampledSystem& system, const GramCertificate& cert, const WeightVector& w, double s,
                        std::size_t trials, std::uint64_t seed) {
    const auto n = system.normal.rows();
    if (static_cast<Eigen::Index>(w.size()) != n) throw DimensionError("weight vector does not match the columns");
    if (!(s > 0.0)) throw DomainError("s must be positive");
    RnspReport rep;
    rep.s = s;
    rep.kappa = 3.0 * cert.inv_norm / std::sqrt(2.0);
    rep.lambda_required = 135.0 * cert.inv_norm * cert.inv_norm * cert.sigma_max * cert.sigma_max * s;
    rep.trials = trials;

    Eigen::SelfAdjointEigenSolver<Matrix> es(system.normal);
    const Matrix& vecs = es.eigenvectors();
    Rng rng(seed);
    Vector x(n);
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    for (std::size_t trial = 0; trial < trials; ++trial) {
        switch (trial % 3) {
        case 0:
            for (Eigen::Index i = 0; i < n; ++i) x[i] = rng.normal();
            break;
        case 1: {
            // Low-energy directions of A, lightly perturbed.
            const Eigen::Index k = std::min<Eigen::Index>(n, 3);
            x.setZero();
            for (Eigen::Index c = 0; c < k; ++c) x += rng.normal() * vecs.col(c);
            for (Eigen::Index i = 0; i < n; ++i) x[i] += 1e-3 * rng.normal();
            break;
        }
        default:
            x.setZero();
            for (int k = 0; k < 3; ++k) x[static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)))] = rng.normal();
            break;
        }
        std::vector<std::size_t> support;
        if (trial % 2 == 0) {
            support = quasi_best_sparse_approx(x, w, s, 1.0).support;
        } else {
            std::iota(order.begin(), order.end(), std::size_t{0});
            for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
            double used = 0.0;
            for (auto i : order)
                if (used + w[i] * w[i] <= s) {
                    support.push_back(i);
                    used += w[i] * w[i];
                }
        }
        Vector xs = Vector::Zero(n);
        for (auto i : support) xs[static_cast<Eigen::Index>(i)] = x[static_cast<Eigen::Index>(i)];
        const double lhs = xs.norm();
        double tail = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            if (xs[i] == 0.0) tail += std::abs(x[i]) * w[static_cast<std::size_t>(i)];
        const double ax = std::sqrt(std::max(x.dot(system.normal * x), 0.0));
        const double rhs = rep.rho / std::sqrt(s) * tail + rep.kappa * ax;
        const double ratio = rhs > 0.0 ? lhs / rhs : (lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
        rep.worst_ratio = std::max(rep.worst_ratio, ratio);
        if (ratio > 1.0) ++rep.violations;
    }
    return rep;
}

} // namespace sparsetomo
