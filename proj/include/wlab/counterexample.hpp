#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "wlab/core.hpp"
#include "wlab/random.hpp"

namespace wlab {

// Explicit solution family on B_1(0), n >= 3:
//   u = x_1 / |x|^{2a},  mu = |x|^{2(a+1)},  A = mu I.
// The flux A grad u is a degree-2 polynomial, so weak-form pairings against
// polynomial test functions have exact closed forms to check quadrature
// against.

// ----- sparse multivariate polynomials -----

struct Polynomial {
    int dim = 3;
    std::map<std::array<int, kMaxDim>, double> terms;

    static Polynomial monomial(int dim, const std::array<int, kMaxDim>& exps, double coeff) {
        Polynomial p;
        p.dim = dim;
        p.terms[exps] = coeff;
        return p;
    }

    static Polynomial constant(int dim, double c) { return monomial(dim, {}, c); }

    Polynomial operator+(const Polynomial& o) const {
        Polynomial r = *this;
        for (const auto& [e, c] : o.terms) r.terms[e] += c;
        return r;
    }

    Polynomial operator*(double s) const {
        Polynomial r = *this;
        for (auto& [e, c] : r.terms) c *= s;
        return r;
    }

    Polynomial operator*(const Polynomial& o) const {
        Polynomial r;
        r.dim = dim;
        for (const auto& [ea, ca] : terms)
            for (const auto& [eb, cb] : o.terms) {
                std::array<int, kMaxDim> e{};
                for (int i = 0; i < dim; ++i) e[i] = ea[i] + eb[i];
                r.terms[e] += ca * cb;
            }
        return r;
    }

    Polynomial derivative(int axis) const {
        Polynomial r;
        r.dim = dim;
        for (const auto& [e, c] : terms) {
            if (e[axis] == 0) continue;
            std::array<int, kMaxDim> d = e;
            d[axis] -= 1;
            r.terms[d] += c * e[axis];
        }
        return r;
    }

    double eval(const Point& x) const {
        double s = 0.0;
        for (const auto& [e, c] : terms) {
            double t = c;
            for (int i = 0; i < dim; ++i)
                for (int k = 0; k < e[i]; ++k) t *= x[i];
            s += t;
        }
        return s;
    }

    // Exact integral over B_R(0): monomials with any odd exponent vanish;
    // otherwise int_{S^{n-1}} w^a dsigma = 2 prod Gamma((a_i+1)/2) / Gamma(sum)
    // times the radial factor R^{|a|+n}/(|a|+n).
    double integral_over_centered_ball(double R) const {
        double total = 0.0;
        for (const auto& [e, c] : terms) {
            bool odd = false;
            int deg = 0;
            for (int i = 0; i < dim; ++i) {
                if (e[i] % 2 == 1) { odd = true; break; }
                deg += e[i];
            }
            if (odd) continue;
            double lg = 0.0, bsum = 0.0;
            for (int i = 0; i < dim; ++i) {
                const double beta = 0.5 * (e[i] + 1);
                lg += std::lgamma(beta);
                bsum += beta;
            }
            const double angular = 2.0 * std::exp(lg - std::lgamma(bsum));
            total += c * angular * std::pow(R, deg + dim) / (deg + dim);
        }
        return total;
    }

    // (1 - |x|^2)^m
    static Polynomial one_minus_r2_pow(int dim, int m) {
        Polynomial r2 = constant(dim, 0.0);
        for (int i = 0; i < dim; ++i) {
            std::array<int, kMaxDim> e{};
            e[i] = 2;
            r2 = r2 + monomial(dim, e, -1.0);
        }
        Polynomial base = constant(dim, 1.0) + r2;
        Polynomial out = constant(dim, 1.0);
        for (int k = 0; k < m; ++k) out = out * base;
        return out;
    }
};

// deterministic corpus: (1-|x|^2)^m * monomial, m alternating in {2,3},
// degree <= 3 monomials, seeded random scale factors
inline std::vector<Polynomial> test_function_corpus(int dim = 3, std::uint64_t seed = 12345) {
    std::vector<std::array<int, kMaxDim>> monos;
    for (int a = 0; a <= 3; ++a)
        for (int b = 0; a + b <= 3; ++b)
            for (int c = 0; a + b + c <= 3; ++c) monos.push_back({a, b, c, 0});
    SplitMix64 rng(seed);
    std::vector<Polynomial> corpus;
    corpus.reserve(monos.size());
    for (std::size_t i = 0; i < monos.size(); ++i) {
        const int m = 2 + static_cast<int>(i % 2);
        const double coeff = rng.uniform(0.5, 1.5);
        corpus.push_back(Polynomial::one_minus_r2_pow(dim, m) *
                         Polynomial::monomial(dim, monos[i], coeff));
    }
    return corpus;
}

// ----- the explicit field -----

struct ExplicitField {
    int n = 3;
    double alpha = 0.0;

    ExplicitField(int n_, double alpha_) : n(n_), alpha(alpha_) {
        if (n < 3) throw std::invalid_argument("requires n >= 3");
        if (!(alpha > 0.0)) throw std::invalid_argument("requires alpha > 0");
        if (!(2.0 * (alpha + 1.0) < n))
            throw std::invalid_argument("requires 2(alpha+1) < n for the A_2 range");
    }

    struct Values {
        double u = 0.0;
        Point grad{};
        double mu = 0.0;
    };

    Values eval(const Point& x) const {
        const double r = norm2(x, n);
        if (r == 0.0) throw std::runtime_error("singular point");
        const double r2 = r * r;
        Values v;
        v.mu = std::pow(r2, alpha + 1.0);
        v.u = x[0] / std::pow(r2, alpha);
        v.grad[0] = ((1.0 - 2.0 * alpha) * x[0] * x[0] + (r2 - x[0] * x[0])) / v.mu;
        for (int k = 1; k < n; ++k) v.grad[k] = -2.0 * alpha * x[0] * x[k] / v.mu;
        return v;
    }

    // A grad u: polynomial components (|x|^2 - 2a x1^2, -2a x1 x_k, ...)
    Point flux(const Point& x) const {
        const double r2 = dot(x, x, n);
        Point f{};
        f[0] = r2 - 2.0 * alpha * x[0] * x[0];
        for (int k = 1; k < n; ++k) f[k] = -2.0 * alpha * x[0] * x[k];
        return f;
    }

    // div(A grad u) = 2 [1 - (n+1) alpha] x1 pointwise away from 0
    double flux_divergence(const Point& x) const {
        return 2.0 * (1.0 - (n + 1) * alpha) * x[0];
    }

    // |grad u|^2 = (r^2 - 4a(1-a) x1^2) / r^{4a+2}
    double gradsq(const Point& x) const {
        const double r2 = dot(x, x, n);
        return (r2 - 4.0 * alpha * (1.0 - alpha) * x[0] * x[0]) / std::pow(r2, 2.0 * alpha + 1.0);
    }
};

// p* = (2 alpha + n + 2) / (2 alpha): grad u is in L^p(B_1, mu) iff p < p*.
inline double integrability_threshold(int n, double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("requires alpha > 0");
    return (2.0 * alpha + n + 2.0) / (2.0 * alpha);
}

// ----- quadrature on the unit ball (n = 3 spherical product rule) -----

namespace detail {

inline void gauss_legendre(int npts, std::vector<double>& x, std::vector<double>& w) {
    // Newton iteration on Legendre polynomials; nodes on [-1, 1]
    x.resize(npts);
    w.resize(npts);
    for (int i = 0; i < npts; ++i) {
        double t = std::cos(M_PI * (i + 0.75) / (npts + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = t;
            for (int k = 2; k <= npts; ++k) {
                const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            const double dp = npts * (t * p1 - p0) / (t * t - 1.0);
            const double dt = p1 / dp;
            t -= dt;
            if (std::abs(dt) < 1e-15) break;
        }
        double p0 = 1.0, p1 = t;
        for (int k = 2; k <= npts; ++k) {
            const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        const double dp = npts * (t * p1 - p0) / (t * t - 1.0);
        x[i] = t;
        w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
}

}  // namespace detail

// int_{B_1(0)} g dx in R^3 by Gauss radial x Gauss polar x uniform azimuth.
inline double ball_quadrature_3d(const std::function<double(const Point&)>& g, int nr = 48,
                                 int nt = 48, int nphi = 48) {
    std::vector<double> xr, wr, xt, wt;
    detail::gauss_legendre(nr, xr, wr);
    detail::gauss_legendre(nt, xt, wt);
    const double dphi = 2.0 * M_PI / nphi;
    KahanSum acc;
    for (int i = 0; i < nr; ++i) {
        const double r = 0.5 * (xr[i] + 1.0);
        const double wri = 0.5 * wr[i] * r * r;
        for (int j = 0; j < nt; ++j) {
            const double ct = xt[j];
            const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
            for (int k = 0; k < nphi; ++k) {
                const double phi = dphi * (k + 0.5);
                const Point x = make_point(r * ct, r * st * std::cos(phi), r * st * std::sin(phi));
                acc.add(wri * wt[j] * dphi * g(x));
            }
        }
    }
    return acc.value();
}

// ----- weak-solution identity -----

struct WeakResidual {
    double lhs = 0.0;  // quadrature of int <A grad u, grad phi>
    double rhs = 0.0;  // exact -2 [1 - (n+1) alpha] int phi x1 dx
    double diff = 0.0;
    double grad_phi_sup = 0.0;  // normalization scale
};

inline WeakResidual weak_residual(const ExplicitField& field, const Polynomial& phi) {
    if (field.n != 3) throw std::invalid_argument("weak residual quadrature implemented for n = 3");
    const int n = field.n;
    std::array<Polynomial, 3> gphi = {phi.derivative(0), phi.derivative(1), phi.derivative(2)};
    WeakResidual res;
    res.lhs = ball_quadrature_3d([&](const Point& x) {
        const Point f = field.flux(x);
        Point g{};
        for (int k = 0; k < n; ++k) g[k] = gphi[k].eval(x);
        return dot(f, g, n);
    });
    std::array<int, kMaxDim> e1{};
    e1[0] = 1;
    const Polynomial phix1 = phi * Polynomial::monomial(n, e1, 1.0);
    res.rhs = -2.0 * (1.0 - (n + 1) * field.alpha) * phix1.integral_over_centered_ball(1.0);
    res.diff = res.lhs - res.rhs;
    // sup |grad phi| on a deterministic sample for normalized reporting
    SplitMix64 rng(7);
    for (int s = 0; s < 512; ++s) {
        Point x{};
        double r2 = 0.0;
        for (int k = 0; k < n; ++k) {
            x[k] = rng.uniform(-1.0, 1.0);
            r2 += x[k] * x[k];
        }
        if (r2 > 1.0) continue;
        double g2 = 0.0;
        for (int k = 0; k < n; ++k) {
            const double gk = gphi[k].eval(x);
            g2 += gk * gk;
        }
        res.grad_phi_sup = std::max(res.grad_phi_sup, std::sqrt(g2));
    }
    return res;
}

// ----- dyadic annulus scan of int |grad u|^p mu -----

struct AnnulusScan {
    int n = 0;
    double alpha = 0.0;
    double p = 0.0;
    double p_star = 0.0;
    struct Row {
        int k = 0;
        double integral = 0.0;
        double ratio = 0.0;  // I_{k+1} / I_k (0 on the last row)
    };
    std::vector<Row> rows;
    double fitted_exponent = 0.0;     // -log2 of the dyadic ratio, fitted for k >= 5
    double predicted_exponent = 0.0;  // 2 alpha + 2 - 2 alpha p + n
    std::string verdict;              // finite | infinite | borderline
};

// I_k = int_{2^{-k-1} < |x| < 2^{-k}} |grad u|^p mu dx separates into an
// angular factor and a 1-D radial integral; both are quadratured, the ratio
// fit is the measured quantity.
inline AnnulusScan annulus_scan(const ExplicitField& field, double p, int k_lo, int k_hi) {
    if (k_lo < 0 || k_hi > 40 || k_lo >= k_hi) throw std::invalid_argument("k range within [0, 40]");
    const int n = field.n;
    const double a = field.alpha;
    AnnulusScan scan;
    scan.n = n;
    scan.alpha = a;
    scan.p = p;
    scan.p_star = integrability_threshold(n, a);
    scan.predicted_exponent = 2.0 * a + 2.0 - 2.0 * a * p + n;

    // angular: omega_{n-1} int_{-1}^{1} (1 - 4a(1-a) t^2)^{p/2} (1-t^2)^{(n-3)/2} dt
    std::vector<double> xt, wt;
    detail::gauss_legendre(96, xt, wt);
    double angular = 0.0;
    for (std::size_t j = 0; j < xt.size(); ++j) {
        const double t = xt[j];
        angular += wt[j] * std::pow(1.0 - 4.0 * a * (1.0 - a) * t * t, 0.5 * p) *
                   std::pow(1.0 - t * t, 0.5 * (n - 3));
    }
    angular *= unit_sphere_measure(n - 1);

    // radial exponent of |grad u|^p mu r^{n-1} is e-1 with e the predicted one
    std::vector<double> xr, wr;
    detail::gauss_legendre(32, xr, wr);
    const double e = scan.predicted_exponent;
    for (int k = k_lo; k <= k_hi; ++k) {
        const double r1 = std::pow(2.0, -k - 1), r2 = std::pow(2.0, -k);
        double rad = 0.0;
        for (std::size_t j = 0; j < xr.size(); ++j) {
            const double r = 0.5 * ((r2 - r1) * xr[j] + (r2 + r1));
            rad += 0.5 * (r2 - r1) * wr[j] * std::pow(r, e - 1.0);
        }
        scan.rows.push_back({k, angular * rad, 0.0});
    }
    for (std::size_t i = 0; i + 1 < scan.rows.size(); ++i)
        scan.rows[i].ratio = scan.rows[i + 1].integral / scan.rows[i].integral;

    KahanSum fit;
    int count = 0;
    for (std::size_t i = 0; i + 1 < scan.rows.size(); ++i) {
        if (scan.rows[i].k < 5) continue;
        fit.add(std::log2(scan.rows[i].integral / scan.rows[i + 1].integral));
        ++count;
    }
    if (count == 0 && scan.rows.size() >= 2) {
        for (std::size_t i = 0; i + 1 < scan.rows.size(); ++i) {
            fit.add(std::log2(scan.rows[i].integral / scan.rows[i + 1].integral));
            ++count;
        }
    }
    scan.fitted_exponent = count ? fit.value() / count : 0.0;
    const double border = 0.02;
    scan.verdict = scan.fitted_exponent > border    ? "finite"
                   : scan.fitted_exponent < -border ? "infinite"
                                                    : "borderline";
    return scan;
}

}  // namespace wlab
