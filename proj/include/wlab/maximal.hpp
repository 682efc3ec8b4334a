#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "wlab/geometry.hpp"
#include "wlab/parallel.hpp"

namespace wlab {

// Weighted Hardy-Littlewood maximal operator on the grid. Balls are discrete
// node sets {y : |y-x| <= rho}, clipped to the grid box in numerator and
// denominator alike; the single-cell ball is always included so that
// M f >= |f| holds nodewise (exactly: the one-cell mu-average of a cellwise
// constant is the cell value itself).

inline std::vector<double> geometric_radius_ladder(const UniformGrid& g, double q = 1.25) {
    if (!(q > 1.0)) throw std::invalid_argument("radius ladder requires q > 1");
    const double h = g.max_h();
    const double r_max = g.box.diameter();
    std::vector<double> radii;
    for (double r = h; r < r_max * q; r *= q) radii.push_back(std::min(r, r_max));
    if (radii.empty()) radii.push_back(r_max);
    radii.erase(std::unique(radii.begin(), radii.end()), radii.end());
    return radii;
}

// Every distinct attainable discrete radius (all sqrt(sum d_i^2) h values):
// with this ladder the sweep equals exhaustive search over all grid balls.
inline std::vector<double> exhaustive_radius_ladder(const UniformGrid& g) {
    const double h = g.h(0);
    const int n = g.dim();
    std::vector<long long> d2s;
    std::array<int, kMaxDim> d{};
    for (;;) {
        long long d2 = 0;
        for (int i = 0; i < n; ++i) d2 += static_cast<long long>(d[i]) * d[i];
        if (d2 > 0) d2s.push_back(d2);
        int axis = n - 1;
        while (axis >= 0) {
            if (++d[axis] < g.m) break;
            d[axis] = 0;
            --axis;
        }
        if (axis < 0) break;
    }
    std::sort(d2s.begin(), d2s.end());
    d2s.erase(std::unique(d2s.begin(), d2s.end()), d2s.end());
    std::vector<double> radii;
    radii.reserve(d2s.size());
    for (long long d2 : d2s) radii.push_back(std::sqrt(static_cast<double>(d2)) * h);
    return radii;
}

namespace detail {

inline void require_isotropic(const UniformGrid& g) {
    for (int i = 1; i < g.dim(); ++i)
        if (std::abs(g.h(i) - g.h(0)) > 1e-12 * g.h(0))
            throw std::invalid_argument("maximal sweep requires an isotropic grid");
}

// Offsets grouped into rings between consecutive ladder radii, each ring in
// row-major order; a node's sums grow incrementally ring by ring.
struct OffsetRings {
    std::vector<std::vector<std::array<int, kMaxDim>>> rings;
};

inline OffsetRings build_rings(const UniformGrid& g, std::vector<double> radii) {
    std::sort(radii.begin(), radii.end());
    OffsetRings out;
    out.rings.resize(radii.size());
    const int n = g.dim();
    const double h = g.h(0);
    const int span = std::min<int>(g.m, static_cast<int>(std::floor(radii.back() / h)) + 1);
    std::array<int, kMaxDim> d{};
    for (int i = 0; i < n; ++i) d[i] = -span;
    for (;;) {
        double r2 = 0.0;
        for (int i = 0; i < n; ++i) r2 += static_cast<double>(d[i]) * d[i];
        const double r = std::sqrt(r2) * h;
        const auto it = std::lower_bound(radii.begin(), radii.end(), r);
        if (it != radii.end()) out.rings[static_cast<std::size_t>(it - radii.begin())].push_back(d);
        int axis = n - 1;
        while (axis >= 0) {
            if (++d[axis] <= span) break;
            d[axis] = -span;
            --axis;
        }
        if (axis < 0) break;
    }
    return out;
}

}  // namespace detail

inline GridScalarField weighted_maximal(const GridScalarField& f, const Weight& mu,
                                        const std::vector<double>& radii,
                                        const Box* restrict_to = nullptr) {
    detail::require_isotropic(f.grid);
    const UniformGrid& g = f.grid;
    const int n = g.dim();
    const WeightTable wt = WeightTable::build(g, mu);
    const detail::OffsetRings rings = detail::build_rings(g, radii);

    // chi flags the restricted set Omega (and masked nodes drop out of it)
    std::vector<std::uint8_t> chi(g.node_count(), 1);
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        if (f.masked(i)) chi[i] = 0;
        else if (restrict_to && !restrict_to->contains(g.node_center(i))) chi[i] = 0;
    }

    GridScalarField out(g);
    const int m = g.m;
    parallel_for(g.node_count(), [&](std::size_t b, std::size_t e) {
        for (std::size_t node = b; node < e; ++node) {
            const auto idx = g.multi(node);
            double best = chi[node] ? std::abs(f.values[node]) : 0.0;
            KahanSum num, den;
            for (const auto& ring : rings.rings) {
                for (const auto& d : ring) {
                    std::array<int, kMaxDim> y{};
                    bool in = true;
                    for (int i = 0; i < n; ++i) {
                        y[i] = idx[i] + d[i];
                        if (y[i] < 0 || y[i] >= m) { in = false; break; }
                    }
                    if (!in) continue;
                    const std::size_t yn = g.flat(y);
                    const double wm = wt.cellint[yn];
                    den.add(wm);
                    if (chi[yn]) num.add(wm * std::abs(f.values[yn]));
                }
                if (den.value() > 0.0) best = std::max(best, num.value() / den.value());
            }
            out.values[node] = best;
        }
    }, 64);
    return out;
}

// mu-mass of the super-level set {g > lambda} within the domain box.
inline double level_measure(const GridScalarField& g, double lambda, const Weight& mu,
                            const Box& domain) {
    if (!(lambda >= 0.0)) throw std::invalid_argument("requires lambda >= 0");
    const WeightTable wt = WeightTable::build(g.grid, mu);
    KahanSum acc;
    for (std::size_t i = 0; i < g.grid.node_count(); ++i) {
        if (g.masked(i)) continue;
        if (!(g.values[i] > lambda)) continue;
        if (!domain.contains(g.grid.node_center(i))) continue;
        acc.add(wt.cellint[i]);
    }
    return acc.value();
}

// ----- distribution ladder and the layer-cake sandwich -----

struct DistributionLadder {
    double theta = 0.0;
    double varpi = 0.0;
    double p = 0.0;
    struct Term {
        int j = 0;
        double level = 0.0;
        double measure = 0.0;
    };
    std::vector<Term> terms;
    double S = 0.0;  // sum_j varpi^{pj} * measure_j
};

struct SandwichReport {
    DistributionLadder ladder;
    double norm_p = 0.0;  // ||g||_{L^p(U,mu)}^p
    double mu_U = 0.0;
    double c_lower = 0.0;
    double c_upper = 0.0;
    double lower_margin = 0.0;  // norm_p - c_lower * S
    double upper_margin = 0.0;  // c_upper (mu_U + S) - norm_p
    bool pass = false;
};

inline DistributionLadder distribution_ladder(const GridScalarField& g, double theta, double varpi,
                                              double p, const Weight& mu, const Box& domain,
                                              int j_max = -1) {
    if (!(theta > 0.0) || !(varpi > 1.0) || !(p >= 1.0))
        throw std::invalid_argument("requires theta > 0, varpi > 1, p >= 1");
    double gmax = 0.0;
    for (std::size_t i = 0; i < g.values.size(); ++i)
        if (!g.masked(i)) gmax = std::max(gmax, std::abs(g.values[i]));
    if (j_max < 0) {
        j_max = 1;
        while (theta * std::pow(varpi, j_max) <= gmax) ++j_max;  // tail exactly zero
    }
    std::vector<double> levels(static_cast<std::size_t>(j_max) + 1);
    for (int j = 0; j <= j_max; ++j) levels[j] = theta * std::pow(varpi, j);

    const WeightTable wt = WeightTable::build(g.grid, mu);
    std::vector<KahanSum> bucket(static_cast<std::size_t>(j_max) + 1);
    for (std::size_t i = 0; i < g.grid.node_count(); ++i) {
        if (g.masked(i)) continue;
        if (!domain.contains(g.grid.node_center(i))) continue;
        const double v = std::abs(g.values[i]);
        if (v > levels[1]) {  // assign the cell to its top layer
            int j = 1;
            while (j < j_max && v > levels[j + 1]) ++j;
            bucket[j].add(wt.cellint[i]);
        }
    }
    // suffix-sum the per-layer masses into super-level measures
    DistributionLadder lad;
    lad.theta = theta;
    lad.varpi = varpi;
    lad.p = p;
    lad.terms.resize(j_max);
    double running = 0.0;
    for (int j = j_max; j >= 1; --j) {
        running += bucket[j].value();
        lad.terms[j - 1] = {j, levels[j], running};
    }
    KahanSum S;
    for (int j = 1; j <= j_max; ++j) S.add(std::pow(varpi, p * j) * lad.terms[j - 1].measure);
    lad.S = S.value();
    return lad;
}

// Layer-cake constants, derived once and used everywhere:
//   lower: ||g||^p >= sum_j (theta varpi^j)^p [m_j - m_{j+1}]
//                   = theta^p [(1 - varpi^{-p}) S + m_1]  >= theta^p (1 - varpi^{-p}) S,
//   upper: splitting U into {g <= theta varpi} and the dyadic layers,
//          ||g||^p <= (theta varpi)^p mu(U) + theta^p varpi^p S
//                  <= theta^p varpi^p (mu(U) + S).
inline SandwichReport ladder_sandwich(const GridScalarField& g, double theta, double varpi, double p,
                                      const Weight& mu, const Box& domain, int j_max = -1) {
    SandwichReport rep;
    rep.ladder = distribution_ladder(g, theta, varpi, p, mu, domain, j_max);
    const WeightTable wt = WeightTable::build(g.grid, mu);
    KahanSum norm, muU;
    for (std::size_t i = 0; i < g.grid.node_count(); ++i) {
        if (g.masked(i)) continue;
        if (!domain.contains(g.grid.node_center(i))) continue;
        muU.add(wt.cellint[i]);
        norm.add(std::pow(std::abs(g.values[i]), p) * wt.cellint[i]);
    }
    rep.norm_p = norm.value();
    rep.mu_U = muU.value();
    rep.c_lower = std::pow(theta, p) * (1.0 - std::pow(varpi, -p));
    rep.c_upper = std::pow(theta, p) * std::pow(varpi, p);
    rep.lower_margin = rep.norm_p - rep.c_lower * rep.ladder.S;
    rep.upper_margin = rep.c_upper * (rep.mu_U + rep.ladder.S) - rep.norm_p;
    const double eps = 1e-12 * std::max({1.0, rep.norm_p, rep.ladder.S});
    rep.pass = rep.lower_margin >= -eps && rep.upper_margin >= -eps;
    return rep;
}

// ----- empirical operator-norm ratios -----

inline double weighted_l1_norm(const GridScalarField& f, const Weight& mu) {
    const WeightTable wt = WeightTable::build(f.grid, mu);
    KahanSum acc;
    for (std::size_t i = 0; i < f.values.size(); ++i)
        if (!f.masked(i)) acc.add(std::abs(f.values[i]) * wt.cellint[i]);
    return acc.value();
}

inline double weighted_lp_norm_grid(const GridScalarField& f, const Weight& mu, double p) {
    const WeightTable wt = WeightTable::build(f.grid, mu);
    KahanSum acc;
    for (std::size_t i = 0; i < f.values.size(); ++i)
        if (!f.masked(i)) acc.add(std::pow(std::abs(f.values[i]), p) * wt.cellint[i]);
    return std::pow(acc.value(), 1.0 / p);
}

// max over lambda of lambda * mu({M f > lambda}) / ||f||_{L^1 mu}: an empirical
// lower estimate of the weak-(1,1) constant.
inline double weak11_ratio(const GridScalarField& f, const Weight& mu,
                           const std::vector<double>& lambdas) {
    const double norm1 = weighted_l1_norm(f, mu);
    if (!(norm1 > 0.0)) throw std::runtime_error("zero L^1 norm");
    const GridScalarField M = weighted_maximal(f, mu, geometric_radius_ladder(f.grid));
    double best = 0.0;
    for (double lam : lambdas)
        best = std::max(best, lam * level_measure(M, lam, mu, f.grid.box) / norm1);
    return best;
}

inline double strong_pp_ratio(const GridScalarField& f, const Weight& mu, double p) {
    if (!(p > 1.0)) throw std::invalid_argument("requires p > 1");
    const double nf = weighted_lp_norm_grid(f, mu, p);
    if (!(nf > 0.0)) throw std::runtime_error("zero input");
    const GridScalarField M = weighted_maximal(f, mu, geometric_radius_ladder(f.grid));
    return weighted_lp_norm_grid(M, mu, p) / nf;
}

// ----- good-lambda iteration -----

struct GoodLambdaReport {
    double varpi = 0.0;
    double delta = 0.0;
    double M0 = 0.0;
    double epsilon = 0.0;
    double eps1 = 0.0;  // (10/(1-4delta))^{2n} M0^2 epsilon
    int k_max = 0;
    double r0 = 0.0;
    double hyp_lhs = 0.0;  // mu({M grad > varpi^2})
    double hyp_rhs = 0.0;  // epsilon * min_y mu(B_{r0}(y))
    bool hypothesis_met = false;
    struct Row {
        int k = 0;
        double lhs = 0.0;
        double rhs = 0.0;
        double margin = 0.0;  // rhs - lhs, signed
    };
    std::vector<Row> per_k;
};

inline double goodlambda_eps1(double delta, double M0, double epsilon, int n) {
    if (!(delta > 0.0 && delta < 0.25)) throw std::invalid_argument("requires 0 < delta < 1/4");
    return std::pow(10.0 / (1.0 - 4.0 * delta), 2.0 * n) * M0 * M0 * epsilon;
}

namespace detail {

// smallest mu-mass of B_{r0}(y) over a deterministic 5^n lattice of centers
inline double min_ball_mass(const WeightTable& wt, const Box& domain, double r0) {
    const int n = domain.dim;
    const int per_axis = 5;
    std::array<int, kMaxDim> idx{};
    double best = std::numeric_limits<double>::infinity();
    for (;;) {
        Point y{};
        for (int i = 0; i < n; ++i)
            y[i] = domain.lo[i] + (idx[i] + 0.5) * domain.side(i) / per_axis;
        best = std::min(best, clipped_mass(wt, Region::of(Ball(y, r0))));
        int axis = n - 1;
        while (axis >= 0) {
            if (++idx[axis] < per_axis) break;
            idx[axis] = 0;
            --axis;
        }
        if (axis < 0) break;
    }
    return best;
}

}  // namespace detail

inline GoodLambdaReport goodlambda_ladder(const GridScalarField& gradsq,
                                          const GridScalarField& datasq, const Weight& mu,
                                          const Box& domain, double varpi, double delta, double M0,
                                          double epsilon, int k_max) {
    if (!(varpi > 1.0)) throw std::invalid_argument("requires varpi > 1");
    const int n = gradsq.grid.dim();
    GoodLambdaReport rep;
    rep.varpi = varpi;
    rep.delta = delta;
    rep.M0 = M0;
    rep.epsilon = epsilon;
    rep.eps1 = goodlambda_eps1(delta, M0, epsilon, n);
    rep.k_max = k_max;
    rep.r0 = domain.inradius() / 2.0;

    const auto ladder = geometric_radius_ladder(gradsq.grid);
    const GridScalarField Mg = weighted_maximal(gradsq, mu, ladder, &domain);
    const GridScalarField Md = weighted_maximal(datasq, mu, ladder, &domain);

    const WeightTable wt = WeightTable::build(gradsq.grid, mu);
    rep.hyp_lhs = level_measure(Mg, varpi * varpi, mu, domain);
    rep.hyp_rhs = epsilon * detail::min_ball_mass(wt, domain, rep.r0);
    rep.hypothesis_met = rep.hyp_lhs < rep.hyp_rhs;

    const double base = level_measure(Mg, 1.0, mu, domain);
    for (int k = 1; k <= k_max; ++k) {
        GoodLambdaReport::Row row;
        row.k = k;
        row.lhs = level_measure(Mg, std::pow(varpi, 2.0 * k), mu, domain);
        KahanSum rhs;
        for (int i = 1; i <= k; ++i) {
            const double lvl = delta * delta * std::pow(varpi, 2.0 * (k - i));
            rhs.add(std::pow(rep.eps1, i) * level_measure(Md, lvl, mu, domain));
        }
        rhs.add(std::pow(rep.eps1, k) * base);
        row.rhs = rhs.value();
        row.margin = row.rhs - row.lhs;
        rep.per_k.push_back(row);
    }
    return rep;
}

// Smallest N such that the k=0 density hypothesis holds for gradsq / N^2,
// located by bisection (the paper picks N through an equality the grid can
// only satisfy approximately).
inline double goodlambda_normalization(const GridScalarField& gradsq, const Weight& mu,
                                       const Box& domain, double varpi, double epsilon) {
    const auto ladder = geometric_radius_ladder(gradsq.grid);
    const GridScalarField Mg = weighted_maximal(gradsq, mu, ladder, &domain);
    const WeightTable wt = WeightTable::build(gradsq.grid, mu);
    const double r0 = domain.inradius() / 2.0;
    const double cap = epsilon * detail::min_ball_mass(wt, domain, r0);
    if (!(cap > 0.0)) throw std::runtime_error("degenerate hypothesis cap");
    auto ok = [&](double N) {
        return level_measure(Mg, N * N * varpi * varpi, mu, domain) < cap;
    };
    double maxM = 0.0;
    for (double v : Mg.values) maxM = std::max(maxM, v);
    double hi = std::sqrt(maxM) / varpi + 1.0;
    if (ok(1e-12)) return 1e-12;
    if (!ok(hi)) throw std::runtime_error("no admissible normalization");
    double lo = 1e-12;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (ok(mid)) hi = mid;
        else lo = mid;
    }
    return hi;
}

}  // namespace wlab
