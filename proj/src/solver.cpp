#include "sparsetomo/solver.hpp"
#include "sparsetomo/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace sparsetomo {

namespace {

// Spectral form of the data term: ‖Q(A D z - y)‖² = ‖Σ Vᵀz - c‖² + floor2, V with orthonormal columns.
struct Spectral {
    Matrix v;
    Vector sigma;
    Vector c;
    double floor2 = 0.0;

    Eigen::Index rank() const { return sigma.size(); }
    double norm() const { return rank() > 0 ? sigma.maxCoeff() : 0.0; }
    Vector apply(const Vector& z) const { return sigma.cwiseProduct(v.transpose() * z); }
    Vector apply_t(const Vector& u) const { return v * sigma.cwiseProduct(u); }
};

Spectral factor(const SampledSystem& sys, const Vector& d) {
    Spectral sp;
    const auto n = d.size();
    constexpr double kRelCutoff = 1e-12;
    if (sys.has_matrix() && static_cast<double>(sys.a.rows()) * static_cast<double>(n) <= 4e7) {
        Matrix qa = Matrix(sys.a) * d.asDiagonal();
        const Vector qy = sys.qy();
        for (std::size_t k = 0; k < sys.block_count(); ++k)
            qa.middleRows(static_cast<Eigen::Index>(k * sys.block_rows), static_cast<Eigen::Index>(sys.block_rows)) *=
                sys.q_weights[static_cast<Eigen::Index>(k)];
        Eigen::BDCSVD<Matrix> svd(qa, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Vector& s = svd.singularValues();
        Eigen::Index r = 0;
        while (r < s.size() && s[r] > kRelCutoff * s[0]) ++r;
        sp.v = svd.matrixV().leftCols(r);
        sp.sigma = s.head(r);
        sp.c = svd.matrixU().leftCols(r).transpose() * qy;
        sp.floor2 = (qy - svd.matrixU().leftCols(r) * sp.c).squaredNorm();
        return sp;
    }
    const Matrix normal = d.asDiagonal() * sys.normal * d.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Matrix> es(normal);
    const Vector& lam = es.eigenvalues();
    const double top = lam.size() > 0 ? lam.maxCoeff() : 0.0;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = lam.size() - 1; i >= 0; --i)
        if (lam[i] > kRelCutoff * kRelCutoff * top) keep.push_back(i);
    const auto r = static_cast<Eigen::Index>(keep.size());
    sp.v.resize(n, r);
    sp.sigma.resize(r);
    for (Eigen::Index p = 0; p < r; ++p) {
        sp.v.col(p) = es.eigenvectors().col(keep[static_cast<std::size_t>(p)]);
        sp.sigma[p] = std::sqrt(lam[keep[static_cast<std::size_t>(p)]]);
    }
    sp.c = sp.sigma.cwiseInverse().cwiseProduct(sp.v.transpose() * d.cwiseProduct(sys.aty));
    if (sys.has_matrix()) {
        const Vector z_ls = sp.v * sp.sigma.cwiseInverse().cwiseProduct(sp.c);
        const double r0 = sys.residual(d.cwiseProduct(z_ls));
        sp.floor2 = r0 * r0;
    } else {
        sp.floor2 = std::max(0.0, sys.yy - sp.c.squaredNorm());
    }
    return sp;
}

// Euclidean projection onto {z : ‖Σ Vᵀz - c‖ ≤ η}.
Vector project(const Spectral& sp, const Vector& z, double eta) {
    const Vector w0 = sp.v.transpose() * z;
    const Vector r0 = sp.sigma.cwiseProduct(w0) - sp.c;
    if (r0.norm() <= eta) return z;
    Vector w;
    if (eta == 0.0) {
        w = sp.c.cwiseQuotient(sp.sigma);
    } else {
        // res_i(μ) = r0_i / (1 + μ σ_i²); find μ with ‖res(μ)‖ = η via Newton on 1/‖res‖.
        const Vector s2 = sp.sigma.cwiseAbs2();
        auto res_norm = [&](double mu) { return (r0.array() / (1.0 + mu * s2.array())).matrix().norm(); };
        double lo = 0.0, hi = 1.0;
        while (res_norm(hi) > eta) hi *= 4.0;
        double mu = 0.5 * (lo + hi);
        for (int it = 0; it < 200; ++it) {
            const Eigen::ArrayXd den = 1.0 + mu * s2.array();
            const Eigen::ArrayXd res = r0.array() / den;
            const double rn = res.matrix().norm();
            if (rn > eta) lo = mu; else hi = mu;
            const double drn = -(res.square() * s2.array() / den).sum() / rn;
            const double phi = 1.0 / eta - 1.0 / rn, dphi = -drn / (rn * rn);
            double next = mu - (1.0 / rn - 1.0 / eta) / dphi;
            (void)phi;
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (std::abs(next - mu) <= 1e-15 * std::max(mu, 1e-300) || hi - lo <= 1e-15 * hi) {
                mu = next;
                break;
            }
            mu = next;
        }
        const Eigen::ArrayXd den = 1.0 + mu * s2.array();
        w = ((w0.array() + mu * sp.sigma.array() * sp.c.array()) / den).matrix();
        // Land exactly on the boundary to guard against round-off in μ.
        const Vector r = sp.sigma.cwiseProduct(w) - sp.c;
        const double rn = r.norm();
        if (rn > eta) w = (sp.c + r * (eta / rn)).cwiseQuotient(sp.sigma);
    }
    return z + sp.v * (w - w0);
}

Vector column_scaling(const SampledSystem& sys, const SolveConfig& cfg) {
    const auto n = static_cast<Eigen::Index>(sys.lambda.size());
    if (sys.scales.size() != sys.lambda.size()) throw DimensionError("system is missing column scales");
    Vector d(n);
    for (Eigen::Index i = 0; i < n; ++i) d[i] = std::exp2(cfg.zeta * cfg.b * sys.scales[static_cast<std::size_t>(i)]);
    return d;
}

Vector weights_of(const WeightVector& w, Eigen::Index n) {
    if (static_cast<Eigen::Index>(w.size()) != n) throw DimensionError("weight vector does not match the columns");
    Vector out(n);
    for (Eigen::Index i = 0; i < n; ++i) out[i] = w[static_cast<std::size_t>(i)];
    return out;
}

void validate(const SolveConfig& cfg) {
    if (!(cfg.zeta >= 0.0 && cfg.zeta <= 1.0)) throw ConfigurationError("zeta must lie in [0, 1]");
    if (!(cfg.eta >= 0.0)) throw ConfigurationError("eta must be non-negative");
    if (cfg.max_iters < 1) throw ConfigurationError("max_iters must be positive");
    if (!(cfg.tol_gap > 0.0 && cfg.tol_feas > 0.0)) throw ConfigurationError("tolerances must be positive");
    if (!(cfg.step_ratio > 0.0)) throw ConfigurationError("step_ratio must be positive");
    if (cfg.check_every < 1) throw ConfigurationError("check_every must be positive");
}

Vector soft(const Vector& v, const Vector& thresh) {
    return v.cwiseSign().cwiseProduct((v.cwiseAbs() - thresh).cwiseMax(0.0));
}

double l1w(const Vector& z, const Vector& w) { return z.cwiseAbs().dot(w); }

class Trace {
public:
    explicit Trace(const std::optional<std::filesystem::path>& path) {
        if (path) {
            out_.open(*path);
            if (!out_) throw IoError("cannot open trace file " + path->string());
            out_.precision(12);
            out_ << "iteration,residual,objective,gap\n";
        }
    }
    void row(int it, double residual, double objective, double gap) {
        if (out_.is_open()) out_ << it << ',' << residual << ',' << objective << ',' << gap << '\n';
    }

private:
    std::ofstream out_;
};

} // namespace

std::string to_string(SolveStatus status) {
    switch (status) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::max_iters: return "max_iters";
    case SolveStatus::infeasible: return "infeasible";
    }
    return "unknown";
}

SolveResult solve_constrained_l1(const SampledSystem& sys, const WeightVector& weights, const SolveConfig& cfg) {
    validate(cfg);
    const Vector d = column_scaling(sys, cfg);
    const Vector w = weights_of(weights, d.size());
    const Spectral sp = factor(sys, d);
    const double qy_norm = std::sqrt(std::max(sys.yy, 0.0));
    const double slack = cfg.eta * (1.0 + cfg.tol_feas) + cfg.tol_abs * qy_norm;
    Trace trace(cfg.trace);

    SolveResult res;
    res.x_hat = Vector::Zero(d.size());
    const double r0 = std::sqrt(sp.floor2);
    if (r0 > slack) {
        res.status = SolveStatus::infeasible;
        res.residual = r0;
        res.gap = std::numeric_limits<double>::infinity();
        return res;
    }
    const double eta = std::sqrt(std::max(0.0, cfg.eta * cfg.eta - sp.floor2));

    auto finish = [&](const Vector& z, double gap, int iters) {
        res.x_hat = d.cwiseProduct(z);
        res.objective = l1w(z, w);
        res.residual = sys.residual(res.x_hat);
        res.gap = gap;
        res.iterations = iters;
        res.status = gap <= cfg.tol_gap && res.residual <= slack ? SolveStatus::optimal : SolveStatus::max_iters;
        return res;
    };

    if (sp.c.norm() <= eta) return finish(Vector::Zero(d.size()), 0.0, 0);

    // Weak-duality bound from a candidate subgradient p of the weighted ℓ¹ term.
    auto dual_bound = [&](const Vector& p) {
        const Vector pr = sp.v * (sp.v.transpose() * p);
        double s = 1.0;
        for (Eigen::Index i = 0; i < pr.size(); ++i)
            if (std::abs(pr[i]) > w[i]) s = std::min(s, w[i] / std::abs(pr[i]));
        const Vector lambda = -s * (sp.v.transpose() * pr).cwiseQuotient(sp.sigma);
        return -(lambda.dot(sp.c) + eta * lambda.norm());
    };

    // Restricted solve on a fixed support and sign pattern; returns false when the pattern is inconsistent.
    std::vector<Eigen::Index> last_support;
    auto polish = [&](const Vector& z, const Vector& p_dr, bool refresh, Vector& z_out, double& gap_out) {
        const double zmax = z.cwiseAbs().maxCoeff();
        std::vector<Eigen::Index> supp;
        for (Eigen::Index i = 0; i < z.size(); ++i)
            if (std::abs(z[i]) > 1e-9 * zmax) supp.push_back(i);
        if (supp.empty() || (supp == last_support && !refresh)) return false;
        last_support = supp;
        const auto k = static_cast<Eigen::Index>(supp.size());
        if (k > sp.rank()) return false;
        Matrix ks(sp.rank(), k);
        Vector g(k);
        for (Eigen::Index j = 0; j < k; ++j) {
            ks.col(j) = sp.sigma.cwiseProduct(sp.v.row(supp[static_cast<std::size_t>(j)]).transpose());
            g[j] = w[supp[static_cast<std::size_t>(j)]] * (z[supp[static_cast<std::size_t>(j)]] > 0 ? 1.0 : -1.0);
        }
        Eigen::ColPivHouseholderQR<Matrix> qr(ks);
        if (qr.rank() < k) return false;
        const Matrix m = ks.transpose() * ks;
        Eigen::LLT<Matrix> llt(m);
        if (llt.info() != Eigen::Success) return false;
        const Vector z_ls = qr.solve(sp.c);
        const Vector mg = llt.solve(g);
        const double floor_s = (ks * z_ls - sp.c).squaredNorm();
        const double e2 = eta * eta - floor_s;
        if (e2 < -(cfg.tol_abs * qy_norm) * (cfg.tol_abs * qy_norm)) return false;
        const double e = std::sqrt(std::max(e2, 0.0));
        const double gmg = g.dot(mg);
        if (!(gmg > 0.0)) return false;
        const Vector zs = z_ls - (e / std::sqrt(gmg)) * mg;
        for (Eigen::Index j = 0; j < k; ++j)
            if (zs[j] * g[j] <= 0.0) return false;
        Vector cand = Vector::Zero(z.size());
        for (Eigen::Index j = 0; j < k; ++j) cand[supp[static_cast<std::size_t>(j)]] = zs[j];
        const double primal = l1w(cand, w);
        double dual;
        if (e > 0.0) {
            dual = dual_bound(sp.v * sp.sigma.cwiseProduct((std::sqrt(gmg) / e) * (sp.c - ks * zs)));
        } else {
            // Equality case: any λ with K_Sᵀλ = g works; correct the iterate's multiplier onto that affine set.
            const Vector lam_dr = (sp.v.transpose() * p_dr).cwiseQuotient(sp.sigma);
            const Vector lam = lam_dr + ks * llt.solve(g - ks.transpose() * lam_dr);
            dual = std::max(dual_bound(sp.v * sp.sigma.cwiseProduct(lam)),
                            dual_bound(sp.v * sp.sigma.cwiseProduct(ks * mg)));
        }
        z_out = cand;
        gap_out = std::max(0.0, primal - dual) / std::max({std::abs(primal), std::abs(dual), 1e-300});
        return true;
    };

    // Douglas–Rachford splitting between the weighted ℓ¹ prox and the exact constraint projection.
    const Vector z_ls = sp.v * sp.c.cwiseQuotient(sp.sigma);
    const double gamma = cfg.step_ratio * std::max(z_ls.cwiseAbs().maxCoeff(), 1e-12) / std::max(w.maxCoeff(), 1.0);
    const Vector thresh = gamma * w;
    Vector s = z_ls;
    Vector best_z = project(sp, Vector::Zero(d.size()), eta);
    double best_gap = std::numeric_limits<double>::infinity();
    int it = 0;
    for (it = 1; it <= cfg.max_iters; ++it) {
        const Vector zg = project(sp, s, eta);
        const Vector zf = soft(2.0 * zg - s, thresh);
        const Vector p = (zg - s) / gamma;
        s += zf - zg;
        const bool check = it % cfg.check_every == 0 || it == cfg.max_iters;
        if (check) {
            const double primal = l1w(zg, w);
            const double dual = dual_bound(p);
            const double gap = std::max(0.0, primal - dual) / std::max({std::abs(primal), std::abs(dual), 1e-300});
            if (gap < best_gap) {
                best_gap = gap;
                best_z = zg;
            }
            Vector zp;
            double gp = 0.0;
            if (best_gap > cfg.tol_gap && polish(zf, p, (it / cfg.check_every) % 10 == 0, zp, gp) && gp < best_gap) {
                best_gap = gp;
                best_z = zp;
            }
            trace.row(it, std::sqrt((sp.apply(zg) - sp.c).squaredNorm() + sp.floor2), primal, best_gap);
            if (best_gap <= cfg.tol_gap) break;
        }
    }
    return finish(best_z, best_gap, std::min(it, cfg.max_iters));
}

std::vector<SolveResult> solve_unconstrained_path(const SampledSystem& sys, const WeightVector& weights,
                                                  const std::vector<double>& penalties, const SolveConfig& cfg) {
    validate(cfg);
    for (std::size_t i = 0; i < penalties.size(); ++i) {
        if (!(penalties[i] > 0.0)) throw DomainError("penalties must be positive");
        if (i > 0 && penalties[i] >= penalties[i - 1]) throw DomainError("penalties must be decreasing");
    }
    const Vector d = column_scaling(sys, cfg);
    const Vector w = weights_of(weights, d.size());
    const Spectral sp = factor(sys, d);
    const Vector& c = sp.c;
    const double lip = std::max(sp.norm() * sp.norm(), std::numeric_limits<double>::min());
    Trace trace(cfg.trace);

    std::vector<SolveResult> out;
    Vector z = Vector::Zero(d.size());
    for (double pen : penalties) {
        const Vector thresh = (pen / lip) * w;
        Vector y = z;
        double t = 1.0, gap = std::numeric_limits<double>::infinity();
        int it = 0;
        for (it = 1; it <= cfg.max_iters; ++it) {
            const Vector grad = sp.apply_t(sp.apply(y) - c);
            const Vector z_new = soft(y - grad / lip, thresh);
            const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            if ((y - z_new).dot(z_new - z) > 0.0) {
                y = z_new;
                t = 1.0;
            } else {
                y = z_new + ((t - 1.0) / t_new) * (z_new - z);
                t = t_new;
            }
            z = z_new;
            if (it % cfg.check_every == 0 || it == cfg.max_iters) {
                const Vector r = sp.apply(z) - c;
                const Vector g = sp.apply_t(r);
                double s = 1.0;
                for (Eigen::Index i = 0; i < g.size(); ++i)
                    if (std::abs(g[i]) > pen * w[i]) s = std::min(s, pen * w[i] / std::abs(g[i]));
                const Vector u = s * r;
                const double primal = pen * l1w(z, w) + 0.5 * r.squaredNorm();
                const double dual = -0.5 * u.squaredNorm() - u.dot(c);
                gap = std::max(0.0, primal - dual) / std::max(std::abs(primal), 1e-300);
                trace.row(it, std::sqrt(r.squaredNorm() + sp.floor2), l1w(z, w), gap);
                if (gap <= cfg.tol_gap) break;
            }
        }
        SolveResult res;
        res.x_hat = d.cwiseProduct(z);
        res.objective = l1w(z, w);
        res.residual = sys.residual(res.x_hat);
        res.gap = gap;
        res.iterations = std::min(it, cfg.max_iters);
        res.penalty = pen;
        res.status = gap <= cfg.tol_gap ? SolveStatus::optimal : SolveStatus::max_iters;
        out.push_back(std::move(res));
    }
    return out;
}

Image reconstruct_image(const SolveResult& result, const DictionaryAtlas& atlas, std::span<const std::size_t> lambda) {
    if (static_cast<std::size_t>(result.x_hat.size()) != lambda.size())
        throw DimensionError("solution length does not match the truncation set");
    return atlas.synthesis(result.x_hat, lambda);
}

} // namespace sparsetomo
