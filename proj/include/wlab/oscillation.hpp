#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "wlab/geometry.hpp"
#include "wlab/random.hpp"
#include "wlab/weights.hpp"

namespace wlab {

// Weighted mean oscillation in the Muckenhoupt-Wheeden sense: the inner
// average is Lebesgue, the outer normalization is mu-mass, and the integrand
// carries mu^{-1}. Centers are restricted to the domain and balls are clipped
// to it.

struct BmoEstimate {
    double value_sq = 0.0;
    double R0 = 0.0;
    Ball witness;
    std::vector<double> per_entry;               // n*n entries for matrix input
    std::vector<std::pair<Ball, double>> per_ball;  // sup landscape, CSV-exportable
};

namespace detail {

struct BmoTables {
    WeightTable mu;
    WeightTable invmu;
};

inline BmoTables make_bmo_tables(const UniformGrid& g, const Weight& mu) {
    if (mu.is_power() && !(-mu.alpha() > -static_cast<double>(g.dim())))
        throw std::runtime_error("mu^{-1} non-integrable on balls");
    return BmoTables{WeightTable::build(g, mu), WeightTable::build(g, mu.pow(-1.0))};
}

// Def-2.3 quotient of f on ball ∩ domain; optionally also the L^1 version
// (1/mu(B)) int |f - <f>_B| dx used by the Muckenhoupt-Wheeden comparison.
inline double bmo_quotient(const GridScalarField& f, const BmoTables& t, const Box& domain,
                           const Ball& ball, double* l1_out = nullptr) {
    const UniformGrid& g = f.grid;
    const double vol = g.cell_volume();
    const Region dom = Region::of(domain);
    KahanSum fsum, lebesgue;
    for_each_cell_in(g, Region::of(ball), [&](std::size_t i, double frac) {
        if (f.masked(i)) return;
        const double fd = cell_region_fraction(g, g.multi(i), dom);
        if (fd <= 0.0) return;
        fsum.add(frac * fd * f.values[i] * vol);
        lebesgue.add(frac * fd * vol);
    });
    if (!(lebesgue.value() > 0.0)) throw std::runtime_error("degenerate ball mass");
    const double avg = fsum.value() / lebesgue.value();
    KahanSum num, den, l1;
    for_each_cell_in(g, Region::of(ball), [&](std::size_t i, double frac) {
        if (f.masked(i)) return;
        const double fd = cell_region_fraction(g, g.multi(i), dom);
        if (fd <= 0.0) return;
        const double d = f.values[i] - avg;
        num.add(frac * fd * d * d * t.invmu.cellint[i]);
        den.add(frac * fd * t.mu.cellint[i]);
        if (l1_out) l1.add(frac * fd * std::abs(d) * vol);
    });
    if (!(den.value() > 0.0)) throw std::runtime_error("degenerate ball mass");
    if (l1_out) *l1_out = l1.value() / den.value();
    return num.value() / den.value();
}

}  // namespace detail

inline BmoEstimate weighted_bmo_seminorm(const GridScalarField& f, const Weight& mu,
                                         const Box& domain, double R0, const BallFamily& family) {
    const auto tables = detail::make_bmo_tables(f.grid, mu);
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < family.balls.size(); ++i) {
        const Ball& B = family.balls[i];
        if (B.radius < R0 && domain.contains(B.center, 1e-12)) active.push_back(i);
    }
    if (active.empty()) throw std::runtime_error("no admissible balls (check R0 and domain)");

    std::vector<double> quotients(active.size());
    parallel_for(
        active.size(),
        [&](std::size_t b, std::size_t e) {
            for (std::size_t k = b; k < e; ++k)
                quotients[k] = detail::bmo_quotient(f, tables, domain, family.balls[active[k]]);
        },
        16);

    BmoEstimate est;
    est.R0 = R0;
    est.per_ball.reserve(active.size());
    std::size_t argmax = 0;
    for (std::size_t k = 0; k < active.size(); ++k) {
        est.per_ball.emplace_back(family.balls[active[k]], quotients[k]);
        if (quotients[k] > quotients[argmax]) argmax = k;
    }
    est.value_sq = quotients[argmax];
    est.witness = family.balls[active[argmax]];
    return est;
}

// ----- matrix coefficient fields -----

struct SmallMat {
    int n = 0;
    std::array<double, kMaxDim * kMaxDim> a{};

    double& operator()(int i, int j) { return a[i * n + j]; }
    double operator()(int i, int j) const { return a[i * n + j]; }

    static SmallMat identity(int n) {
        SmallMat m;
        m.n = n;
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static SmallMat diag(int n, const std::array<double, kMaxDim>& d) {
        SmallMat m;
        m.n = n;
        for (int i = 0; i < n; ++i) m(i, i) = d[i];
        return m;
    }

    double quad_form(const Point& xi) const {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) s += a[i * n + j] * xi[i] * xi[j];
        return s;
    }
};

struct MatrixField {
    UniformGrid grid;
    int n = 0;
    std::vector<double> entries;  // node-major, then i*n+j
    double Lambda = 1.0;

    MatrixField() = default;
    MatrixField(UniformGrid g, double lambda)
        : grid(g), n(g.dim()), entries(g.node_count() * g.dim() * g.dim(), 0.0), Lambda(lambda) {}

    static MatrixField sample(const UniformGrid& g, double lambda,
                              const std::function<SmallMat(const Point&)>& fn) {
        MatrixField A(g, lambda);
        const int nn = A.n * A.n;
        parallel_for(g.node_count(), [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                const SmallMat m = fn(g.node_center(i));
                for (int k = 0; k < nn; ++k) A.entries[i * nn + k] = m.a[k];
            }
        });
        return A;
    }

    double entry(std::size_t node, int i, int j) const { return entries[node * n * n + i * n + j]; }

    GridScalarField entry_field(int i, int j) const {
        GridScalarField f(grid);
        for (std::size_t k = 0; k < f.values.size(); ++k) f.values[k] = entry(k, i, j);
        return f;
    }

    void require_symmetric(double tol = 1e-12) const {
        double scale = 0.0;
        for (double v : entries) scale = std::max(scale, std::abs(v));
        for (std::size_t k = 0; k < grid.node_count(); ++k)
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j)
                    if (std::abs(entry(k, i, j) - entry(k, j, i)) > tol * std::max(1.0, scale))
                        throw std::runtime_error("asymmetric coefficient field");
    }
};

// [A]^2 = sum_{ij} [a_ij]^2; per-entry seminorms are recorded.
inline BmoEstimate matrix_weighted_bmo(const MatrixField& A, const Weight& mu, const Box& domain,
                                       double R0, const BallFamily& family) {
    BmoEstimate total;
    total.R0 = R0;
    total.per_entry.assign(static_cast<std::size_t>(A.n) * A.n, 0.0);
    double best_entry = -1.0;
    for (int i = 0; i < A.n; ++i)
        for (int j = 0; j < A.n; ++j) {
            const BmoEstimate e = weighted_bmo_seminorm(A.entry_field(i, j), mu, domain, R0, family);
            total.per_entry[i * A.n + j] = e.value_sq;
            total.value_sq += e.value_sq;
            if (e.value_sq > best_entry) {
                best_entry = e.value_sq;
                total.witness = e.witness;
            }
        }
    return total;
}

// ----- coefficient class membership -----

struct ClassMembership {
    double delta = 0.0;
    double R0 = 0.0;
    bool elliptic_ok = false;
    double bmo_value_sq = 0.0;
    bool member = false;
};

namespace detail {

// Probe directions: coordinate axes, normalized axis pairs, and 8 seeded
// random unit vectors. A symmetric matrix is pinned down by its quadratic
// form on such a spanning set; the random probes guard the off-diagonals.
inline std::vector<Point> ellipticity_probes(int n) {
    std::vector<Point> probes;
    for (int i = 0; i < n; ++i) {
        Point p{};
        p[i] = 1.0;
        probes.push_back(p);
    }
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            Point p{};
            p[i] = inv_sqrt2;
            p[j] = inv_sqrt2;
            probes.push_back(p);
        }
    SplitMix64 rng(0x5EEDEDull);
    for (int k = 0; k < 8; ++k) {
        Point p{};
        double norm = 0.0;
        do {
            norm = 0.0;
            for (int i = 0; i < n; ++i) {
                p[i] = rng.uniform(-1.0, 1.0);
                norm += p[i] * p[i];
            }
        } while (norm < 1e-8);
        const double inv = 1.0 / std::sqrt(norm);
        for (int i = 0; i < n; ++i) p[i] *= inv;
        probes.push_back(p);
    }
    return probes;
}

}  // namespace detail

inline BallFamily default_family_for(const UniformGrid& grid, const Box& domain, double R0) {
    const int stride = std::max(1, grid.m / 16);
    const double r_min = std::max(2.0, 4.0) * grid.max_h();
    const double r_cap = std::min(R0 * 0.999, 0.45 * domain.diameter());
    int levels = 1;
    while (r_min * std::pow(2.0, levels) <= r_cap && levels < 12) ++levels;
    return make_ball_family(grid, domain, stride, r_min, 2.0, levels);
}

inline ClassMembership coefficient_class_check(const MatrixField& A, const Weight& mu, double Lambda,
                                               double delta, double R0, const Box& domain) {
    if (!(Lambda > 0.0 && Lambda <= 1.0)) throw std::invalid_argument("requires Lambda in (0,1]");
    if (!(delta > 0.0)) throw std::invalid_argument("requires delta > 0");
    A.require_symmetric();

    const auto probes = detail::ellipticity_probes(A.n);
    bool ok = true;
    const double tol = 1e-9;
    for (std::size_t k = 0; k < A.grid.node_count() && ok; ++k) {
        const Point x = A.grid.node_center(k);
        const double m = mu(x);
        SmallMat M;
        M.n = A.n;
        for (int i = 0; i < A.n * A.n; ++i) M.a[i] = A.entries[k * A.n * A.n + i];
        for (const Point& xi : probes) {
            const double q = M.quad_form(xi);
            const double lo = Lambda * m;        // probes are unit vectors
            const double hi = m / Lambda;
            const double slack = tol * std::max(1.0, hi);
            if (q < lo - slack || q > hi + slack) {
                ok = false;
                break;
            }
        }
    }

    ClassMembership r;
    r.delta = delta;
    r.R0 = R0;
    r.elliptic_ok = ok;
    const BallFamily fam = default_family_for(A.grid, domain, R0);
    r.bmo_value_sq = matrix_weighted_bmo(A, mu, domain, R0, fam).value_sq;
    r.member = r.elliptic_ok && r.bmo_value_sq < delta;
    return r;
}

// ----- Muckenhoupt–Wheeden comparison -----

struct MwReport {
    double l2_side = 0.0;  // sup of the Def-2.3 quotient
    double l1_side = 0.0;  // sup of (1/mu(B)) int |f - <f>_B| dx
    double ratio = 0.0;
};

inline MwReport mw_ratio(const GridScalarField& f, const Weight& mu, const BallFamily& family) {
    const auto tables = detail::make_bmo_tables(f.grid, mu);
    const Box domain = f.grid.box;
    std::vector<double> q2(family.balls.size()), q1(family.balls.size());
    parallel_for(
        family.balls.size(),
        [&](std::size_t b, std::size_t e) {
            for (std::size_t k = b; k < e; ++k)
                q2[k] = detail::bmo_quotient(f, tables, domain, family.balls[k], &q1[k]);
        },
        16);
    MwReport r;
    for (std::size_t k = 0; k < family.balls.size(); ++k) {
        r.l2_side = std::max(r.l2_side, q2[k]);
        r.l1_side = std::max(r.l1_side, q1[k]);
    }
    r.ratio = (r.l1_side > 0.0) ? r.l2_side / r.l1_side : 0.0;
    return r;
}

}  // namespace wlab
