#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wlab/core.hpp"
#include "wlab/parallel.hpp"
#include "wlab/weight.hpp"

namespace wlab {

// Uniform Cartesian grid over a box; nodes sit at cell centers (midpoint rule).
struct UniformGrid {
    Box box;
    int m = 0;  // cells per axis

    UniformGrid() = default;
    UniformGrid(Box b, int cells) : box(b), m(cells) {
        if (m < 1) throw std::invalid_argument("grid needs at least one cell per axis");
    }

    int dim() const { return box.dim; }
    double h(int axis) const { return box.side(axis) / m; }

    double max_h() const {
        double v = 0.0;
        for (int i = 0; i < dim(); ++i) v = std::max(v, h(i));
        return v;
    }

    double cell_volume() const {
        double v = 1.0;
        for (int i = 0; i < dim(); ++i) v *= h(i);
        return v;
    }

    std::size_t node_count() const {
        std::size_t n = 1;
        for (int i = 0; i < dim(); ++i) n *= static_cast<std::size_t>(m);
        return n;
    }

    // Row-major flat index, axis 0 slowest.
    std::size_t flat(const std::array<int, kMaxDim>& idx) const {
        std::size_t f = 0;
        for (int i = 0; i < dim(); ++i) f = f * m + idx[i];
        return f;
    }

    std::array<int, kMaxDim> multi(std::size_t f) const {
        std::array<int, kMaxDim> idx{};
        for (int i = dim() - 1; i >= 0; --i) {
            idx[i] = static_cast<int>(f % m);
            f /= m;
        }
        return idx;
    }

    Point node_center(const std::array<int, kMaxDim>& idx) const {
        Point x{};
        for (int i = 0; i < dim(); ++i) x[i] = box.lo[i] + (idx[i] + 0.5) * h(i);
        return x;
    }

    Point node_center(std::size_t f) const { return node_center(multi(f)); }

    void cell_bounds(const std::array<int, kMaxDim>& idx, Point& lo, Point& hi) const {
        for (int i = 0; i < dim(); ++i) {
            lo[i] = box.lo[i] + idx[i] * h(i);
            hi[i] = lo[i] + h(i);
        }
    }
};

struct GridScalarField {
    UniformGrid grid;
    std::vector<double> values;
    std::vector<std::uint8_t> mask;  // empty = every node valid; 0 = masked (outside Omega)

    GridScalarField() = default;
    explicit GridScalarField(UniformGrid g) : grid(g), values(g.node_count(), 0.0) {}

    static GridScalarField constant(const UniformGrid& g, double c) {
        GridScalarField f(g);
        std::fill(f.values.begin(), f.values.end(), c);
        return f;
    }

    static GridScalarField sample(const UniformGrid& g, const std::function<double(const Point&)>& fn) {
        GridScalarField f(g);
        parallel_for(f.values.size(), [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) f.values[i] = fn(g.node_center(i));
        });
        return f;
    }

    bool masked(std::size_t i) const { return !mask.empty() && mask[i] == 0; }

    void validate() const {
        for (std::size_t i = 0; i < values.size(); ++i)
            if (!masked(i) && !std::isfinite(values[i]))
                throw std::runtime_error("non-finite value at unmasked node");
    }
};

struct GridVectorField {
    UniformGrid grid;
    std::vector<double> values;  // node-major, then component

    GridVectorField() = default;
    explicit GridVectorField(UniformGrid g) : grid(g), values(g.node_count() * g.dim(), 0.0) {}

    double component(std::size_t node, int k) const { return values[node * grid.dim() + k]; }
};

// ----- binary / CSV field serialization -----
// Layout: u64 dim, u64 m, f64 lo[dim], f64 hi[dim], f64 values[m^dim],
// all little-endian, values in row-major node order (axis 0 slowest).

inline void write_binary(const GridScalarField& f, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path);
    const std::uint64_t dim = f.grid.dim(), m = f.grid.m;
    os.write(reinterpret_cast<const char*>(&dim), 8);
    os.write(reinterpret_cast<const char*>(&m), 8);
    for (int i = 0; i < f.grid.dim(); ++i) os.write(reinterpret_cast<const char*>(&f.grid.box.lo[i]), 8);
    for (int i = 0; i < f.grid.dim(); ++i) os.write(reinterpret_cast<const char*>(&f.grid.box.hi[i]), 8);
    os.write(reinterpret_cast<const char*>(f.values.data()),
             static_cast<std::streamsize>(f.values.size() * 8));
}

inline GridScalarField read_binary(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::uint64_t dim = 0, m = 0;
    is.read(reinterpret_cast<char*>(&dim), 8);
    is.read(reinterpret_cast<char*>(&m), 8);
    if (dim < 1 || dim > kMaxDim || m < 1) throw std::runtime_error("corrupt field header");
    Point lo{}, hi{};
    for (std::uint64_t i = 0; i < dim; ++i) is.read(reinterpret_cast<char*>(&lo[i]), 8);
    for (std::uint64_t i = 0; i < dim; ++i) is.read(reinterpret_cast<char*>(&hi[i]), 8);
    GridScalarField f(UniformGrid(Box(lo, hi, static_cast<int>(dim)), static_cast<int>(m)));
    is.read(reinterpret_cast<char*>(f.values.data()), static_cast<std::streamsize>(f.values.size() * 8));
    if (!is) throw std::runtime_error("corrupt field payload");
    return f;
}

inline void write_csv(const GridScalarField& f, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    for (int i = 0; i < f.grid.dim(); ++i) os << "x" << i << ",";
    os << "value\n";
    char buf[32];
    for (std::size_t i = 0; i < f.values.size(); ++i) {
        const Point x = f.grid.node_center(i);
        for (int k = 0; k < f.grid.dim(); ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", x[k]);
            os << buf << ",";
        }
        std::snprintf(buf, sizeof buf, "%.17g", f.values[i]);
        os << buf << "\n";
    }
}

// ----- singular-cell quadrature -----

inline bool cell_touches_origin(const Point& lo, const Point& hi, int n) {
    for (int i = 0; i < n; ++i)
        if (lo[i] > 0.0 || hi[i] < 0.0) return false;
    return true;
}

// Integral of |x|^alpha over a rectangular cell by dyadic subdivision toward
// the origin. Naive midpoint diverges for alpha < 0; the innermost leaf is
// closed with the exact radial antiderivative over the measure-equivalent
// centered ball.
inline double power_cell_integral(double alpha, int n, Point lo, Point hi, int depth) {
    double vol = 1.0;
    for (int i = 0; i < n; ++i) vol *= (hi[i] - lo[i]);
    if (!cell_touches_origin(lo, hi, n)) {
        Point c{};
        for (int i = 0; i < n; ++i) c[i] = 0.5 * (lo[i] + hi[i]);
        return std::pow(norm2(c, n), alpha) * vol;
    }
    if (depth == 0) {
        const double rho = std::pow(vol / unit_ball_volume(n), 1.0 / n);
        return unit_sphere_measure(n) * std::pow(rho, n + alpha) / (n + alpha);
    }
    // split into 2^n children
    double total = 0.0;
    const int children = 1 << n;
    for (int c = 0; c < children; ++c) {
        Point clo{}, chi{};
        for (int i = 0; i < n; ++i) {
            const double mid = 0.5 * (lo[i] + hi[i]);
            if (c & (1 << i)) { clo[i] = mid;   chi[i] = hi[i]; }
            else              { clo[i] = lo[i]; chi[i] = mid;   }
        }
        total += power_cell_integral(alpha, n, clo, chi, depth - 1);
    }
    return total;
}

inline constexpr int kDefaultSingularDepth = 12;

// Per-cell integrals of a weight over the whole grid; the table is the shared
// workhorse behind ball averages, level-set masses and the maximal sweep.
struct WeightTable {
    const UniformGrid* grid = nullptr;
    std::vector<double> cellint;

    static WeightTable build(const UniformGrid& g, const Weight& w,
                             int singular_depth = kDefaultSingularDepth) {
        WeightTable t;
        t.grid = &g;
        t.cellint.resize(g.node_count());
        const double vol = g.cell_volume();
        const bool singular = w.singular_at_origin();
        parallel_for(t.cellint.size(), [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                const auto idx = g.multi(i);
                if (singular) {
                    Point lo{}, hi{};
                    g.cell_bounds(idx, lo, hi);
                    if (cell_touches_origin(lo, hi, g.dim())) {
                        t.cellint[i] =
                            w.scale() * power_cell_integral(w.alpha(), g.dim(), lo, hi, singular_depth);
                        continue;
                    }
                }
                t.cellint[i] = w(g.node_center(idx)) * vol;
            }
        });
        return t;
    }
};

// ----- regions and cell covers -----

struct Region {
    enum class Type { BoxRegion, BallRegion };
    Type type;
    Box box;
    Ball ball;

    static Region of(const Box& b) {
        Region r;
        r.type = Type::BoxRegion;
        r.box = b;
        return r;
    }
    static Region of(const Ball& b) {
        Region r;
        r.type = Type::BallRegion;
        r.ball = b;
        return r;
    }

    void bounding(int dim, Point& lo, Point& hi) const {
        if (type == Type::BoxRegion) {
            lo = box.lo;
            hi = box.hi;
        } else {
            for (int i = 0; i < dim; ++i) {
                lo[i] = ball.center[i] - ball.radius;
                hi[i] = ball.center[i] + ball.radius;
            }
        }
    }
};

// Fraction of the cell lying inside the region. Box regions use the exact
// overlap; cells straddling a ball boundary are weighted by the fraction of
// their 2^n corners inside the ball.
inline double cell_region_fraction(const UniformGrid& g, const std::array<int, kMaxDim>& idx,
                                   const Region& region) {
    const int n = g.dim();
    Point clo{}, chi{};
    g.cell_bounds(idx, clo, chi);
    if (region.type == Region::Type::BoxRegion) {
        double frac = 1.0;
        for (int i = 0; i < n; ++i) {
            const double ov = std::min(chi[i], region.box.hi[i]) - std::max(clo[i], region.box.lo[i]);
            if (ov <= 0.0) return 0.0;
            frac *= ov / (chi[i] - clo[i]);
        }
        return frac;
    }
    const Ball& B = region.ball;
    double halfdiag2 = 0.0;
    Point c{};
    for (int i = 0; i < n; ++i) {
        c[i] = 0.5 * (clo[i] + chi[i]);
        const double hh = 0.5 * (chi[i] - clo[i]);
        halfdiag2 += hh * hh;
    }
    const double d = dist(c, B.center, n);
    const double halfdiag = std::sqrt(halfdiag2);
    if (d <= B.radius - halfdiag) return 1.0;
    if (d >= B.radius + halfdiag) return 0.0;
    int inside = 0;
    const int corners = 1 << n;
    for (int k = 0; k < corners; ++k) {
        Point p{};
        for (int i = 0; i < n; ++i) p[i] = (k & (1 << i)) ? chi[i] : clo[i];
        if (dist(p, B.center, n) <= B.radius) ++inside;
    }
    return static_cast<double>(inside) / corners;
}

// Visits every cell whose bounding box meets the region; fn(flat, frac) is
// called in row-major order with frac > 0.
template <typename Fn>
void for_each_cell_in(const UniformGrid& g, const Region& region, Fn&& fn) {
    const int n = g.dim();
    Point rlo{}, rhi{};
    region.bounding(n, rlo, rhi);
    std::array<int, kMaxDim> lo{}, hi{}, idx{};
    for (int i = 0; i < n; ++i) {
        lo[i] = std::max(0, static_cast<int>(std::floor((rlo[i] - g.box.lo[i]) / g.h(i))));
        hi[i] = std::min(g.m, static_cast<int>(std::ceil((rhi[i] - g.box.lo[i]) / g.h(i))));
        if (lo[i] >= hi[i]) return;
        idx[i] = lo[i];
    }
    for (;;) {
        const double frac = cell_region_fraction(g, idx, region);
        if (frac > 0.0) fn(g.flat(idx), frac);
        int axis = n - 1;
        while (axis >= 0) {
            if (++idx[axis] < hi[axis]) break;
            idx[axis] = lo[axis];
            --axis;
        }
        if (axis < 0) return;
    }
}

inline bool region_covered_by(const UniformGrid& g, const Region& region, double eps_cells = 1e-9) {
    Point rlo{}, rhi{};
    region.bounding(g.dim(), rlo, rhi);
    const double eps = eps_cells * g.max_h();
    for (int i = 0; i < g.dim(); ++i)
        if (rlo[i] < g.box.lo[i] - eps || rhi[i] > g.box.hi[i] + eps) return false;
    return true;
}

// ----- integration -----

// Midpoint-rule approximation of int_region f * w dx with compensated
// summation in fixed row-major order. Masked cells are excluded.
inline double grid_integrate(const GridScalarField& f, const Weight* w, const Region& region,
                             int singular_depth = kDefaultSingularDepth) {
    if (!region_covered_by(f.grid, region)) throw std::runtime_error("region not covered");
    std::optional<WeightTable> table;
    if (w) table = WeightTable::build(f.grid, *w, singular_depth);
    const double vol = f.grid.cell_volume();
    KahanSum acc;
    for_each_cell_in(f.grid, region, [&](std::size_t i, double frac) {
        if (f.masked(i)) return;
        const double wm = table ? table->cellint[i] : vol;
        acc.add(frac * f.values[i] * wm);
    });
    return acc.value();
}

inline double grid_integrate(const GridScalarField& f, const Region& region,
                             int singular_depth = kDefaultSingularDepth) {
    return grid_integrate(f, nullptr, region, singular_depth);
}

// Same sums against a prebuilt table, clipped to the grid box (no coverage
// error); used by the analytics modules that clip balls to Omega by design.
inline double clipped_mass(const WeightTable& t, const Region& region,
                           const GridScalarField* domain_mask = nullptr) {
    KahanSum acc;
    for_each_cell_in(*t.grid, region, [&](std::size_t i, double frac) {
        if (domain_mask && domain_mask->masked(i)) return;
        acc.add(frac * t.cellint[i]);
    });
    return acc.value();
}

// <f>_{w, ball} over ball ∩ grid box; w absent gives the Lebesgue average.
inline double ball_average(const GridScalarField& f, const Weight* w, const Ball& ball,
                           int singular_depth = kDefaultSingularDepth) {
    std::optional<WeightTable> table;
    if (w) table = WeightTable::build(f.grid, *w, singular_depth);
    const double vol = f.grid.cell_volume();
    KahanSum num, den;
    for_each_cell_in(f.grid, Region::of(ball), [&](std::size_t i, double frac) {
        if (f.masked(i)) return;
        const double wm = table ? table->cellint[i] : vol;
        num.add(frac * f.values[i] * wm);
        den.add(frac * wm);
    });
    if (!(den.value() > 0.0)) throw std::runtime_error("degenerate ball mass");
    return num.value() / den.value();
}

inline double ball_average(const GridScalarField& f, const Ball& ball,
                           int singular_depth = kDefaultSingularDepth) {
    return ball_average(f, nullptr, ball, singular_depth);
}

// ----- deterministic ball families -----

struct FamilyProvenance {
    int stride = 0;
    double r_min = 0.0;
    double q = 0.0;
    int levels = 0;
    std::uint64_t seed = 0;
};

struct BallFamily {
    std::vector<Ball> balls;
    FamilyProvenance provenance;
    UniformGrid grid;  // quadrature carrier the family was built against
};

// Centers on the lattice box_center + j * stride * h per axis with
// |j| <= floor(m / (2 stride)) — stride m keeps only the box center — and
// radii r_min * q^j for j = 0..levels-1, center-major order.
inline BallFamily make_ball_family(const UniformGrid& grid, const Box& domain, int stride,
                                   double r_min, double q, int levels) {
    if (stride < 1 || levels < 1) throw std::invalid_argument("stride and levels must be >= 1");
    if (!(q > 1.0)) throw std::invalid_argument("radius ladder requires q > 1");
    if (!(r_min >= 2.0 * grid.max_h()))
        throw std::invalid_argument("r_min must be >= 2 cells so averages see several cells");
    if (!(r_min * std::pow(q, levels - 1) <= domain.diameter()))
        throw std::invalid_argument("largest radius exceeds domain diameter");

    BallFamily fam;
    fam.provenance = FamilyProvenance{stride, r_min, q, levels, 0};
    fam.grid = grid;
    const int n = grid.dim();
    const int K = grid.m / (2 * stride);
    const Point mid = grid.box.center();
    std::array<int, kMaxDim> idx{};
    for (int i = 0; i < n; ++i) idx[i] = -K;
    for (;;) {
        Point c{};
        for (int i = 0; i < n; ++i) c[i] = mid[i] + static_cast<double>(idx[i]) * stride * grid.h(i);
        if (domain.contains(c, 1e-12 * grid.max_h())) {
            double r = r_min;
            for (int j = 0; j < levels; ++j, r *= q) fam.balls.emplace_back(c, r);
        }
        int axis = n - 1;
        while (axis >= 0) {
            if (++idx[axis] <= K) break;
            idx[axis] = -K;
            --axis;
        }
        if (axis < 0) break;
    }
    if (fam.balls.empty()) throw std::runtime_error("empty ball family");
    return fam;
}

}  // namespace wlab
