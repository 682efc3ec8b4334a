#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "wlab/core.hpp"
#include "wlab/geometry.hpp"
#include "wlab/parallel.hpp"
#include "wlab/random.hpp"

namespace wlab {

// Flatness profile of a discretized boundary: at a boundary point x and scale
// r, the smallest slab half-width delta such that, in some rotated frame
// through x,
//   B_r ∩ {y_n > delta r} ⊂ Omega  and  Omega ∩ B_r ⊂ {y_n > -delta r}.
// Both containments are tested against the inside oracle on a probe set; the
// orientation search is a deterministic direction grid plus golden-section
// refinement.

struct BoundaryCloud {
    int dim = 2;
    std::vector<Point> points;
    std::function<bool(const Point&)> inside;
    double sample_spacing = 0.0;
};

// ----- cloud constructors -----

inline BoundaryCloud make_halfspace_cloud(int dim, double spacing, double extent = 2.0) {
    BoundaryCloud c;
    c.dim = dim;
    c.sample_spacing = spacing;
    c.inside = [dim](const Point& p) { return p[dim - 1] > 0.0; };
    const int k = static_cast<int>(extent / spacing);
    if (dim == 2) {
        for (int i = -k; i <= k; ++i) c.points.push_back(make_point(i * spacing, 0.0));
    } else {
        for (int i = -k; i <= k; ++i)
            for (int j = -k; j <= k; ++j) c.points.push_back(make_point(i * spacing, j * spacing, 0.0));
    }
    return c;
}

inline BoundaryCloud make_box_boundary_cloud(const Box& box, double spacing) {
    if (box.dim != 2) throw std::invalid_argument("box boundary cloud implemented for dim 2");
    BoundaryCloud c;
    c.dim = 2;
    c.sample_spacing = spacing;
    c.inside = [box](const Point& p) {
        return p[0] > box.lo[0] && p[0] < box.hi[0] && p[1] > box.lo[1] && p[1] < box.hi[1];
    };
    auto edge = [&](Point a, Point b) {
        const double len = dist(a, b, 2);
        const int steps = std::max(1, static_cast<int>(len / spacing));
        for (int s = 0; s < steps; ++s) {
            const double t = static_cast<double>(s) / steps;
            c.points.push_back(make_point(a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])));
        }
    };
    const Point p00 = make_point(box.lo[0], box.lo[1]), p10 = make_point(box.hi[0], box.lo[1]);
    const Point p11 = make_point(box.hi[0], box.hi[1]), p01 = make_point(box.lo[0], box.hi[1]);
    edge(p00, p10);
    edge(p10, p11);
    edge(p11, p01);
    edge(p01, p00);
    return c;
}

inline BoundaryCloud make_disk_cloud(const Point& center, double R, double spacing) {
    BoundaryCloud c;
    c.dim = 2;
    c.sample_spacing = spacing;
    c.inside = [center, R](const Point& p) { return dist(p, center, 2) < R; };
    const int steps = std::max(8, static_cast<int>(2.0 * M_PI * R / spacing));
    for (int s = 0; s < steps; ++s) {
        const double t = 2.0 * M_PI * s / steps;
        c.points.push_back(make_point(center[0] + R * std::cos(t), center[1] + R * std::sin(t)));
    }
    return c;
}

inline BoundaryCloud rotate_cloud_2d(const BoundaryCloud& c, double angle) {
    BoundaryCloud out;
    out.dim = c.dim;
    out.sample_spacing = c.sample_spacing;
    const double cs = std::cos(angle), sn = std::sin(angle);
    for (const Point& p : c.points)
        out.points.push_back(make_point(cs * p[0] - sn * p[1], sn * p[0] + cs * p[1]));
    auto base = c.inside;
    out.inside = [base, cs, sn](const Point& p) {
        return base(make_point(cs * p[0] + sn * p[1], -sn * p[0] + cs * p[1]));
    };
    return out;
}

// Inside oracle from a grid mask (value > 0.5 means inside); boundary points
// are centers of unmasked cells with a masked axis neighbor.
inline BoundaryCloud cloud_from_mask(const GridScalarField& mask) {
    BoundaryCloud c;
    c.dim = mask.grid.dim();
    c.sample_spacing = mask.grid.max_h();
    const UniformGrid g = mask.grid;
    auto values = std::make_shared<std::vector<double>>(mask.values);
    c.inside = [g, values](const Point& p) {
        if (!g.box.contains(p)) return false;
        std::array<int, kMaxDim> idx{};
        for (int i = 0; i < g.dim(); ++i) {
            idx[i] = static_cast<int>((p[i] - g.box.lo[i]) / g.h(i));
            idx[i] = std::clamp(idx[i], 0, g.m - 1);
        }
        return (*values)[g.flat(idx)] > 0.5;
    };
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        if (mask.values[i] <= 0.5) continue;
        const auto idx = g.multi(i);
        bool edge = false;
        for (int ax = 0; ax < g.dim() && !edge; ++ax)
            for (int d = -1; d <= 1 && !edge; d += 2) {
                auto nb = idx;
                nb[ax] += d;
                if (nb[ax] < 0 || nb[ax] >= g.m) { edge = true; break; }
                if (mask.values[g.flat(nb)] <= 0.5) edge = true;
            }
        if (edge) c.points.push_back(g.node_center(idx));
    }
    return c;
}

inline std::vector<Point> load_points_csv(const std::string& path, int dim) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::vector<Point> pts;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line.find_first_of("0123456789-+.") != 0) continue;  // header
        std::stringstream ss(line);
        Point p{};
        std::string cell;
        int k = 0;
        while (std::getline(ss, cell, ',') && k < dim) p[k++] = std::stod(cell);
        if (k == dim) pts.push_back(p);
    }
    return pts;
}

// ----- the flatness functional -----

namespace detail {

inline std::vector<Point> direction_grid(int dim, int count) {
    std::vector<Point> dirs;
    dirs.reserve(count);
    if (dim == 2) {
        for (int k = 0; k < count; ++k) {
            const double th = 2.0 * M_PI * k / count;
            dirs.push_back(make_point(std::cos(th), std::sin(th)));
        }
        return dirs;
    }
    // Fibonacci sphere
    const double ga = M_PI * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < count; ++k) {
        const double z = 1.0 - 2.0 * (k + 0.5) / count;
        const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double th = ga * k;
        dirs.push_back(make_point(rho * std::cos(th), rho * std::sin(th), z));
    }
    return dirs;
}

struct Probe {
    Point rel{};   // (p - x) / r
    bool inside = false;
};

// probe lattice in B_r(x) plus rim shells where the extremal points live
inline std::vector<Probe> make_probes(const BoundaryCloud& cloud, const Point& x, double r,
                                      int nprobe) {
    std::vector<Probe> probes;
    const int n = cloud.dim;
    const double step = 2.0 / nprobe;
    std::array<int, kMaxDim> idx{};
    for (int i = 0; i < n; ++i) idx[i] = 0;
    for (;;) {
        Point rel{};
        double r2 = 0.0;
        for (int i = 0; i < n; ++i) {
            rel[i] = -1.0 + (idx[i] + 0.5) * step;
            r2 += rel[i] * rel[i];
        }
        if (r2 <= 1.0) {
            Point p{};
            for (int i = 0; i < n; ++i) p[i] = x[i] + rel[i] * r;
            probes.push_back({rel, cloud.inside(p)});
        }
        int axis = n - 1;
        while (axis >= 0) {
            if (++idx[axis] < nprobe) break;
            idx[axis] = 0;
            --axis;
        }
        if (axis < 0) break;
    }
    const std::vector<double> shells = {1.0, 0.975, 0.95};
    const int rim = (n == 2) ? 2048 : 4096;
    for (double s : shells)
        for (const Point& d : direction_grid(n, rim)) {
            Point rel{};
            Point p{};
            for (int i = 0; i < n; ++i) {
                rel[i] = s * d[i];
                p[i] = x[i] + rel[i] * r;
            }
            probes.push_back({rel, cloud.inside(p)});
        }
    return probes;
}

inline double slab_deficit(const std::vector<Probe>& probes, const Point& nu, int n) {
    double d_out = 0.0;  // outside points must sit below delta
    double d_in = 0.0;   // inside points must sit above -delta
    for (const Probe& p : probes) {
        const double proj = dot(p.rel, nu, n);
        if (p.inside) d_in = std::max(d_in, -proj);
        else d_out = std::max(d_out, proj);
    }
    return std::max(d_out, d_in);
}

}  // namespace detail

// delta(x, r): minimized slab deficit over orientations; 1 when nothing fits.
inline double flatness_at(const BoundaryCloud& cloud, const Point& x, double r, int ndir = 512,
                          int nprobe = 64) {
    if (!(r > 4.0 * cloud.sample_spacing))
        throw std::invalid_argument("scale must exceed 4 sample spacings");
    const int n = cloud.dim;
    const auto probes = detail::make_probes(cloud, x, r, nprobe);
    const auto dirs = detail::direction_grid(n, ndir);

    double best = 2.0;
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < dirs.size(); ++k) {
        const double d = detail::slab_deficit(probes, dirs[k], n);
        if (d < best) { best = d; best_k = k; }
    }

    if (n == 2) {
        // golden-section refinement on the angle around the best direction
        const double th0 = std::atan2(dirs[best_k][1], dirs[best_k][0]);
        const double w = 2.0 * M_PI / ndir;
        double a = th0 - w, b = th0 + w;
        const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
        double c1 = b - gr * (b - a), c2 = a + gr * (b - a);
        auto eval = [&](double th) {
            return detail::slab_deficit(probes, make_point(std::cos(th), std::sin(th)), 2);
        };
        double f1 = eval(c1), f2 = eval(c2);
        for (int it = 0; it < 48; ++it) {
            if (f1 < f2) { b = c2; c2 = c1; f2 = f1; c1 = b - gr * (b - a); f1 = eval(c1); }
            else { a = c1; c1 = c2; f1 = f2; c2 = a + gr * (b - a); f2 = eval(c2); }
        }
        best = std::min(best, std::min(f1, f2));
    } else {
        // shrinking-cap local search around the best direction
        Point center = dirs[best_k];
        double cap = 2.0 * M_PI / std::sqrt(static_cast<double>(ndir));
        SplitMix64 rng(99);
        for (int round = 0; round < 10; ++round) {
            for (int s = 0; s < 48; ++s) {
                Point d{};
                double nrm = 0.0;
                for (int i = 0; i < n; ++i) {
                    d[i] = center[i] + cap * rng.uniform(-1.0, 1.0);
                    nrm += d[i] * d[i];
                }
                nrm = std::sqrt(nrm);
                for (int i = 0; i < n; ++i) d[i] /= nrm;
                const double v = detail::slab_deficit(probes, d, n);
                if (v < best) { best = v; center = d; }
            }
            cap *= 0.55;
        }
    }
    return std::min(1.0, std::max(0.0, best));
}

struct ReifenbergEstimate {
    double R0 = 0.0;
    double delta_hat = 0.0;
    double delta_shifted = 0.0;  // delta_hat / (1 - delta_hat)
    struct Row {
        Point x{};
        double r = 0.0;
        double delta = 0.0;
    };
    std::vector<Row> profile;
    Row worst;
    std::string note = "sampled max over centers and geometric scales; the gap to the true sup over all (x, r) is not bounded";
};

inline ReifenbergEstimate flatness_profile(const BoundaryCloud& cloud, double R0, int n_centers,
                                           int n_scales, int ndir = 512, int nprobe = 64) {
    if (cloud.points.empty()) throw std::invalid_argument("empty boundary cloud");
    const double r_lo = 4.5 * cloud.sample_spacing;
    const double r_hi = 0.98 * R0;
    if (!(r_hi > r_lo)) throw std::invalid_argument("R0 too small for the sample spacing");
    ReifenbergEstimate est;
    est.R0 = R0;

    std::vector<Point> centers;
    const std::size_t stride = std::max<std::size_t>(1, cloud.points.size() / n_centers);
    for (std::size_t i = 0; i < cloud.points.size() && centers.size() < static_cast<std::size_t>(n_centers); i += stride)
        centers.push_back(cloud.points[i]);

    std::vector<double> scales;
    if (n_scales == 1) scales.push_back(r_hi);
    else {
        const double q = std::pow(r_hi / r_lo, 1.0 / (n_scales - 1));
        for (int s = 0; s < n_scales; ++s) scales.push_back(r_lo * std::pow(q, s));
    }

    est.profile.resize(centers.size() * scales.size());
    parallel_for(
        est.profile.size(),
        [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                const Point& x = centers[i / scales.size()];
                const double r = scales[i % scales.size()];
                est.profile[i] = {x, r, flatness_at(cloud, x, r, ndir, nprobe)};
            }
        },
        1);
    est.worst = est.profile.front();
    for (const auto& row : est.profile)
        if (row.delta > est.worst.delta) est.worst = row;
    est.delta_hat = est.worst.delta;
    est.delta_shifted = est.delta_hat < 1.0 ? est.delta_hat / (1.0 - est.delta_hat)
                                            : std::numeric_limits<double>::infinity();
    return est;
}

}  // namespace wlab
