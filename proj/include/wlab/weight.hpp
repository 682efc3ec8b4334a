#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>

#include "wlab/core.hpp"

namespace wlab {

// Nonnegative pointwise-evaluable density. Power weights |x|^alpha carry
// closed-form centered-ball integrals; anything else (tabulated fields,
// analytic test densities) goes through the generic evaluator.
class Weight {
public:
    enum class Kind { Power, Generic };

    static Weight one(int dim) { return power(0.0, dim); }

    // A_2-range power weight: |alpha| < n.
    static Weight power(double alpha, int dim) {
        if (!(std::abs(alpha) < dim)) throw std::invalid_argument("power weight requires |alpha| < dim");
        return Weight(alpha, dim);
    }

    // Derived integrand exponents (w^{-1/(p-1)}, w^{1+gamma}, ...) may leave
    // the A_2 range; integrability is checked where the integral happens.
    static Weight power_unchecked(double alpha, int dim) { return Weight(alpha, dim); }

    static Weight generic(int dim, std::function<double(const Point&)> eval) {
        Weight w(0.0, dim);
        w.kind_ = Kind::Generic;
        w.eval_ = std::move(eval);
        return w;
    }

    double operator()(const Point& x) const {
        if (kind_ == Kind::Power) {
            if (alpha_ == 0.0) return scale_;
            return scale_ * std::pow(norm2(x, dim_), alpha_);
        }
        return eval_(x);
    }

    Kind kind() const { return kind_; }
    bool is_power() const { return kind_ == Kind::Power; }
    double alpha() const { return alpha_; }
    double scale() const { return scale_; }
    int dim() const { return dim_; }

    // w^s as a weight (pointwise power).
    Weight pow(double s) const {
        if (kind_ == Kind::Power) {
            Weight w = power_unchecked(alpha_ * s, dim_);
            w.scale_ = std::pow(scale_, s);
            return w;
        }
        auto base = eval_;
        return generic(dim_, [base, s](const Point& x) { return std::pow(base(x), s); });
    }

    // lambda * w; power weights keep their structure (and therefore their
    // closed forms and singular-cell quadrature)
    Weight scaled(double lambda) const {
        if (kind_ == Kind::Power) {
            Weight w = *this;
            w.scale_ *= lambda;
            return w;
        }
        auto base = eval_;
        return generic(dim_, [base, lambda](const Point& x) { return lambda * base(x); });
    }

    // Power weights with alpha != 0 have a kink or a pole at the origin; those
    // cells get the dyadic quadrature treatment.
    bool singular_at_origin() const { return kind_ == Kind::Power && alpha_ != 0.0; }

private:
    Weight(double alpha, int dim) : alpha_(alpha), dim_(dim) {}

    Kind kind_ = Kind::Power;
    double alpha_ = 0.0;
    double scale_ = 1.0;
    int dim_ = 0;
    std::function<double(const Point&)> eval_;
};

// ----- closed forms for |x|^alpha on origin-centered balls -----

// mu(B_r(0)) = omega_n r^{n+alpha} / (n+alpha)
inline double centered_ball_weight_mass(double alpha, int n, double r) {
    if (!(alpha > -n)) throw std::invalid_argument("non-integrable: alpha <= -n");
    if (!(r > 0.0)) throw std::invalid_argument("radius must be positive");
    return unit_sphere_measure(n) * std::pow(r, n + alpha) / (n + alpha);
}

// Lebesgue average of |x|^alpha over B_r(0): n r^alpha / (n+alpha)
inline double centered_ball_weight_average(double alpha, int n, double r) {
    if (!(alpha > -n)) throw std::invalid_argument("non-integrable: alpha <= -n");
    return n * std::pow(r, alpha) / (n + alpha);
}

// int_{B_r(0)} | |x|^alpha - <|x|^alpha>_{B_r} | dx / int_{B_r(0)} |x|^alpha dx.
// Scale-invariant; the crossing radius of s^alpha with the average
// c = n/(n+alpha) is s* = c^{1/alpha}, and the piecewise antiderivative
// collapses to 2|c s*^n/n - s*^{n+alpha}/(n+alpha)| * (n+alpha).
inline double centered_ball_abs_oscillation_ratio(double alpha, int n) {
    if (alpha == 0.0) return 0.0;
    if (!(alpha > -n)) throw std::invalid_argument("non-integrable: alpha <= -n");
    const double c = static_cast<double>(n) / (n + alpha);
    const double sstar = std::pow(c, 1.0 / alpha);
    const double val = 2.0 * std::abs(c * std::pow(sstar, n) / n -
                                      std::pow(sstar, n + alpha) / (n + alpha));
    return val * (n + alpha);
}

// <w>_B <w^{-1/(p-1)}>_B^{p-1} for w = |x|^alpha on any origin-centered ball
// (r-independent): n^p / ((n+alpha) (n - alpha/(p-1))^{p-1}).
inline double centered_ball_ap_product(double alpha, int n, double p) {
    if (!(p > 1.0)) throw std::invalid_argument("requires p > 1");
    if (!(alpha > -n)) throw std::invalid_argument("outside A_p range");
    const double dual = alpha / (p - 1.0);
    if (!(dual < n)) throw std::invalid_argument("outside A_p range");
    return (n / (n + alpha)) * std::pow(n / (n - dual), p - 1.0);
}

// Certified A_2 envelope for |x|^alpha: max{2^n 5^{|alpha|}, 2^{4n}/((n+alpha)(n-alpha))}.
inline double power_ap_bound(int n, double alpha) {
    if (!(std::abs(alpha) < n)) throw std::invalid_argument("requires |alpha| < n");
    const double type1 = std::pow(2.0, n) * std::pow(5.0, std::abs(alpha));
    const double type2 = std::pow(2.0, 4 * n) / ((n + alpha) * (n - alpha));
    return std::max(type1, type2);
}

// L^1 mean-oscillation envelope 2|alpha| 4^{2n+1} / (2n-1), valid for |alpha| <= 1.
inline double power_oscillation_bound(int n, double alpha) {
    if (!(std::abs(alpha) <= 1.0)) throw std::invalid_argument("requires |alpha| <= 1");
    return 2.0 * std::abs(alpha) * std::pow(4.0, 2 * n + 1) / (2.0 * n - 1.0);
}

}  // namespace wlab
