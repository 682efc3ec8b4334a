#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "wlab/geometry.hpp"
#include "wlab/parallel.hpp"
#include "wlab/weight.hpp"

namespace wlab {

// Muckenhoupt analytics. Suprema over "all balls" are approximated on a
// finite deterministic family, so every reported characteristic is a sampled
// lower estimate; for power weights the certified upper envelope is
// power_ap_bound.

struct ApEstimate {
    double p = 0.0;
    double value = 1.0;
    Ball witness;
    FamilyProvenance provenance;
};

namespace detail {

inline bool is_origin_centered(const Ball& b, int dim, double eps) {
    for (int i = 0; i < dim; ++i)
        if (std::abs(b.center[i]) > eps) return false;
    return true;
}

// Lebesgue average of a tabulated cell-integral over ball ∩ grid box.
inline double table_ball_average(const WeightTable& t, const Ball& ball) {
    const double vol = t.grid->cell_volume();
    KahanSum num, den;
    for_each_cell_in(*t.grid, Region::of(ball), [&](std::size_t i, double frac) {
        num.add(frac * t.cellint[i]);
        den.add(frac * vol);
    });
    if (!(den.value() > 0.0)) throw std::runtime_error("degenerate ball mass");
    return num.value() / den.value();
}

// Deterministic argmax over the family: per-chunk partials merged in chunk
// order, strict > keeps the first witness.
template <typename ValueFn>
std::pair<double, std::size_t> family_max(std::size_t count, ValueFn&& value_of) {
    struct Partial {
        double v = -std::numeric_limits<double>::infinity();
        std::size_t i = 0;
    };
    const std::size_t chunk = 64;
    const std::size_t nchunks = (count + chunk - 1) / chunk;
    std::vector<Partial> partial(nchunks);
    parallel_for(
        count,
        [&](std::size_t b, std::size_t e) {
            Partial p;
            for (std::size_t i = b; i < e; ++i) {
                const double v = value_of(i);
                if (v > p.v) { p.v = v; p.i = i; }
            }
            partial[b / chunk] = p;
        },
        chunk);
    Partial best;
    for (const auto& p : partial)
        if (p.v > best.v) best = p;
    return {best.v, best.i};
}

inline UniformGrid scratch_grid_for(const Ball& b, int dim) {
    const int m = dim <= 2 ? 256 : (dim == 3 ? 64 : 24);
    Point lo{}, hi{};
    for (int i = 0; i < dim; ++i) {
        lo[i] = b.center[i] - b.radius;
        hi[i] = b.center[i] + b.radius;
    }
    return UniformGrid(Box(lo, hi, dim), m);
}

}  // namespace detail

// Sampled max over the family of <w>_B <w^{-1/(p-1)}>_B^{p-1}. Origin-centered
// power-weight balls use the exact radial closed form; everything else is grid
// quadrature on the family's carrier, clipped to the box.
inline ApEstimate ap_characteristic(const Weight& w, const BallFamily& family, double p) {
    if (!(p > 1.0)) throw std::invalid_argument("requires p > 1");
    if (family.balls.empty()) throw std::invalid_argument("empty ball family");
    const int n = family.grid.dim();
    const double dual_exp = -1.0 / (p - 1.0);
    if (w.is_power()) {
        if (!(w.alpha() > -n) || !(w.alpha() * dual_exp > -static_cast<double>(n)))
            throw std::runtime_error("outside A_p range");
    }
    const WeightTable tw = WeightTable::build(family.grid, w);
    const WeightTable tdual = WeightTable::build(family.grid, w.pow(dual_exp));
    const double ctr_eps = 1e-12 * family.grid.max_h();

    auto value_of = [&](std::size_t i) {
        const Ball& B = family.balls[i];
        if (w.is_power() && detail::is_origin_centered(B, n, ctr_eps))
            return centered_ball_ap_product(w.alpha(), n, p);
        const double aw = detail::table_ball_average(tw, B);
        const double ad = detail::table_ball_average(tdual, B);
        return aw * std::pow(ad, p - 1.0);
    };
    auto [best, arg] = detail::family_max(family.balls.size(), value_of);

    ApEstimate est;
    est.p = p;
    est.value = best;
    est.witness = family.balls[arg];
    est.provenance = family.provenance;
    return est;
}

// ----- doubling -----

struct DoublingReport {
    double lhs = 0.0;            // mu(B)
    double rhs = 0.0;            // [mu]_{A_p} (|B|/|E|)^p mu(E), standard orientation
    double rhs_as_printed = 0.0; // [mu]_{A_p} (|E|/|B|)^p mu(E)
    bool pass = false;
    double p = 0.0;
    double ap_value = 0.0;
};

namespace detail {

inline double ball_weight_mass(const Weight& w, const Ball& b, int dim) {
    if (w.is_power() && is_origin_centered(b, dim, 1e-14 * b.radius))
        return w.scale() * centered_ball_weight_mass(w.alpha(), dim, b.radius);
    const UniformGrid g = scratch_grid_for(b, dim);
    const WeightTable t = WeightTable::build(g, w);
    return clipped_mass(t, Region::of(b));
}

}  // namespace detail

inline DoublingReport doubling_check(const Weight& w, const Ball& ball, const Ball& subset,
                                     double p, double ap_value, double tol = 1e-9) {
    const int n = w.dim();
    if (dist(ball.center, subset.center, n) + subset.radius > ball.radius * (1.0 + 1e-12))
        throw std::invalid_argument("subset ball must lie inside the ball");
    DoublingReport r;
    r.p = p;
    r.ap_value = ap_value;
    r.lhs = detail::ball_weight_mass(w, ball, n);
    const double mE = detail::ball_weight_mass(w, subset, n);
    const double vol_ratio = std::pow(ball.radius / subset.radius, n);
    r.rhs = ap_value * std::pow(vol_ratio, p) * mE;
    r.rhs_as_printed = ap_value * std::pow(1.0 / vol_ratio, p) * mE;
    r.pass = r.lhs <= r.rhs * (1.0 + tol);
    return r;
}

// ----- reverse Hölder -----

struct ReverseHolderEstimate {
    double gamma = 0.0;
    double constant = 0.0;  // achieved sup of (avg w^{1+gamma})^{1/(1+gamma)} / avg w
    double beta = 0.0;      // gamma/(2+gamma)
    double tau_factor = 0.0; // tau(q) = q * gamma/(1+gamma)
    double varrho = 0.0;    // density exponent gamma/(1+gamma)
    bool flagged = false;   // no gamma in the list met the cap
    Ball witness;
};

inline ReverseHolderEstimate reverse_holder_estimate(const Weight& w, const BallFamily& family,
                                                     const std::vector<double>& gammas,
                                                     double c_cap = 10.0) {
    if (gammas.empty()) throw std::invalid_argument("empty gamma list");
    for (std::size_t i = 0; i < gammas.size(); ++i) {
        if (!(gammas[i] > 0.0)) throw std::invalid_argument("gammas must be positive");
        if (i > 0 && !(gammas[i] > gammas[i - 1]))
            throw std::invalid_argument("gammas must be ascending");
    }
    const int n = family.grid.dim();
    const WeightTable tw = WeightTable::build(family.grid, w);
    const double ctr_eps = 1e-12 * family.grid.max_h();

    auto sup_for = [&](double gamma, Ball& witness) {
        if (w.is_power() && !(w.alpha() * (1.0 + gamma) > -static_cast<double>(n)))
            return std::numeric_limits<double>::infinity();
        const WeightTable tg = WeightTable::build(family.grid, w.pow(1.0 + gamma));
        auto value_of = [&](std::size_t i) {
            const Ball& B = family.balls[i];
            if (w.is_power() && detail::is_origin_centered(B, n, ctr_eps)) {
                const double a = w.alpha();
                return (n + a) / n * std::pow(n / (n + a * (1.0 + gamma)), 1.0 / (1.0 + gamma));
            }
            const double ag = detail::table_ball_average(tg, B);
            const double aw = detail::table_ball_average(tw, B);
            return std::pow(ag, 1.0 / (1.0 + gamma)) / aw;
        };
        auto [best, arg] = detail::family_max(family.balls.size(), value_of);
        witness = family.balls[arg];
        return best;
    };

    ReverseHolderEstimate best;
    best.flagged = true;
    for (std::size_t i = 0; i < gammas.size(); ++i) {
        Ball witness;
        const double c = sup_for(gammas[i], witness);
        if (i == 0) {  // fallback if nothing passes
            best.gamma = gammas[0];
            best.constant = c;
            best.witness = witness;
        }
        if (c <= c_cap) {
            best.gamma = gammas[i];
            best.constant = c;
            best.witness = witness;
            best.flagged = false;
        }
    }
    best.beta = best.gamma / (2.0 + best.gamma);
    best.tau_factor = best.gamma / (1.0 + best.gamma);
    best.varrho = best.gamma / (1.0 + best.gamma);
    return best;
}

// ----- L^1 mean oscillation -----

// int_B |w - <w>_B| dx / int_B w dx. Origin-centered power balls evaluate the
// exact piecewise radial antiderivative; other balls use scratch-grid
// quadrature with per-cell integrals.
inline double oscillation_ratio(const Weight& w, const Ball& ball) {
    const int n = w.dim();
    if (w.is_power() && detail::is_origin_centered(ball, n, 1e-14 * ball.radius))
        return centered_ball_abs_oscillation_ratio(w.alpha(), n);
    const UniformGrid g = detail::scratch_grid_for(ball, n);
    const WeightTable t = WeightTable::build(g, w);
    const double vol = g.cell_volume();
    KahanSum mass, lebesgue;
    for_each_cell_in(g, Region::of(ball), [&](std::size_t i, double frac) {
        mass.add(frac * t.cellint[i]);
        lebesgue.add(frac * vol);
    });
    if (!(mass.value() > 0.0)) throw std::runtime_error("degenerate ball mass");
    const double c = mass.value() / lebesgue.value();
    KahanSum osc;
    for_each_cell_in(g, Region::of(ball), [&](std::size_t i, double frac) {
        osc.add(frac * std::abs(t.cellint[i] - c * vol));
    });
    return osc.value() / mass.value();
}

}  // namespace wlab
