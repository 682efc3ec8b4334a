#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace wlab {

inline constexpr const char* kVersion = "0.1.0";

// Dimensions 1..4 are supported; fixed-size points keep the hot loops
// allocation-free.
inline constexpr int kMaxDim = 4;
using Point = std::array<double, kMaxDim>;

inline Point make_point(double x, double y = 0.0, double z = 0.0, double w = 0.0) {
    return Point{x, y, z, w};
}

inline double dot(const Point& a, const Point& b, int dim) {
    double s = 0.0;
    for (int i = 0; i < dim; ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Point& a, int dim) { return std::sqrt(dot(a, a, dim)); }

inline double dist(const Point& a, const Point& b, int dim) {
    double s = 0.0;
    for (int i = 0; i < dim; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

struct Box {
    Point lo{};
    Point hi{};
    int dim = 0;

    Box() = default;
    Box(Point lo_, Point hi_, int dim_) : lo(lo_), hi(hi_), dim(dim_) {
        if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("box dimension out of range");
        for (int i = 0; i < dim; ++i)
            if (!(lo[i] < hi[i])) throw std::invalid_argument("box requires lo < hi per axis");
    }

    static Box cube(double lo, double hi, int dim) {
        Point a{}, b{};
        for (int i = 0; i < dim; ++i) { a[i] = lo; b[i] = hi; }
        return Box(a, b, dim);
    }

    double side(int i) const { return hi[i] - lo[i]; }

    double volume() const {
        double v = 1.0;
        for (int i = 0; i < dim; ++i) v *= side(i);
        return v;
    }

    double diameter() const {
        double s = 0.0;
        for (int i = 0; i < dim; ++i) s += side(i) * side(i);
        return std::sqrt(s);
    }

    // Half the smallest side: radius of the largest inscribed ball.
    double inradius() const {
        double r = side(0);
        for (int i = 1; i < dim; ++i) r = std::min(r, side(i));
        return 0.5 * r;
    }

    Point center() const {
        Point c{};
        for (int i = 0; i < dim; ++i) c[i] = 0.5 * (lo[i] + hi[i]);
        return c;
    }

    bool contains(const Point& x, double eps = 0.0) const {
        for (int i = 0; i < dim; ++i)
            if (x[i] < lo[i] - eps || x[i] > hi[i] + eps) return false;
        return true;
    }
};

struct Ball {
    Point center{};
    double radius = 0.0;

    Ball() = default;
    Ball(Point c, double r) : center(c), radius(r) {
        if (!(r > 0.0)) throw std::invalid_argument("ball requires radius > 0");
    }

    bool contains(const Point& x, int dim) const { return dist(x, center, dim) <= radius; }
};

// Surface measure of the unit sphere in R^n.
inline double unit_sphere_measure(int n) {
    // omega_n = 2 pi^{n/2} / Gamma(n/2)
    return 2.0 * std::pow(M_PI, 0.5 * n) / std::tgamma(0.5 * n);
}

// Lebesgue volume of the unit ball in R^n.
inline double unit_ball_volume(int n) { return unit_sphere_measure(n) / n; }

inline double ball_volume(int n, double r) { return unit_ball_volume(n) * std::pow(r, n); }

// Compensated (Kahan) accumulator; summation order is always fixed by the
// caller, so results are bit-reproducible.
struct KahanSum {
    double s = 0.0;
    double c = 0.0;

    void add(double x) {
        const double y = x - c;
        const double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    double value() const { return s; }
};

}  // namespace wlab
