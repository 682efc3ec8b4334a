// Acceptance suite: runs every verification criterion end to end at its
// stated tolerance and prints one pass/fail line per criterion. Exit code 0
// only when all pass.

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "wlab/counterexample.hpp"
#include "wlab/fem.hpp"
#include "wlab/maximal.hpp"
#include "wlab/oscillation.hpp"
#include "wlab/reifenberg.hpp"
#include "wlab/weights.hpp"

using namespace wlab;
namespace fs = std::filesystem;

namespace {

int g_failed = 0;

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

void report(int id, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %2d %-28s %s\n", pass ? "PASS" : "FAIL", id, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failed;
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

// independent radial oracle for the centered L^1 oscillation ratio
double radial_oscillation_oracle(double alpha, int n) {
    const int npts = 2'000'000;
    const double c = static_cast<double>(n) / (n + alpha);
    const double h = 1.0 / npts;
    double acc = 0.0;
    for (int i = 0; i <= npts; ++i) {
        const double s = i * h;
        const double v = (s == 0.0 && alpha < 0) ? 0.0
                                                 : std::abs(std::pow(s, alpha) - c) * std::pow(s, n - 1);
        acc += (i == 0 || i == npts) ? 0.5 * v : v;
    }
    return acc * h * (n + alpha);
}

// independent sort-based brute force for the discrete maximal operator
GridScalarField brute_force_maximal(const GridScalarField& f, const Weight& mu) {
    const UniformGrid& g = f.grid;
    const WeightTable wt = WeightTable::build(g, mu);
    GridScalarField out(g);
    const std::size_t N = g.node_count();
    std::vector<std::pair<double, std::size_t>> by_dist(N);
    for (std::size_t x = 0; x < N; ++x) {
        const Point px = g.node_center(x);
        for (std::size_t y = 0; y < N; ++y) by_dist[y] = {dist(g.node_center(y), px, g.dim()), y};
        std::sort(by_dist.begin(), by_dist.end());
        double num = 0.0, den = 0.0, best = std::abs(f.values[x]);
        std::size_t i = 0;
        while (i < N) {
            std::size_t j = i;
            while (j < N && by_dist[j].first <= by_dist[i].first + 1e-13) {
                num += wt.cellint[by_dist[j].second] * std::abs(f.values[by_dist[j].second]);
                den += wt.cellint[by_dist[j].second];
                ++j;
            }
            best = std::max(best, num / den);
            i = j;
        }
        out.values[x] = best;
    }
    return out;
}

VectorFieldFn smooth_field(std::uint64_t seed) {
    SplitMix64 rng(seed);
    const double a = rng.uniform(-1.0, 1.0), b = rng.uniform(-1.0, 1.0);
    const double c = rng.uniform(0.5, 2.0), d = rng.uniform(0.5, 2.0);
    const double o1 = rng.uniform(-0.5, 0.5), o2 = rng.uniform(-0.5, 0.5);
    return [=](const Point& x) {
        return make_point(a * std::sin(c * x[0] + d * x[1]) + o1,
                          b * std::cos(d * x[0] - c * x[1]) + o2);
    };
}

VectorFieldFn grad_sine() {
    return [](const Point& x) {
        return make_point(M_PI * std::cos(M_PI * x[0]) * std::sin(M_PI * x[1]),
                          M_PI * std::sin(M_PI * x[0]) * std::cos(M_PI * x[1]));
    };
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) return "<missing:" + p.string() + ">";
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// ---- criteria ----

void criterion_1() {
    Timer t;
    const auto corpus = test_function_corpus();
    bool pass = corpus.size() == 20;
    double worst_norm = 0.0;
    {
        const ExplicitField f(3, 0.25);
        for (const auto& phi : corpus) {
            const WeakResidual r = weak_residual(f, phi);
            const double nres = std::abs(r.lhs) / std::max(1.0, r.grad_phi_sup);
            worst_norm = std::max(worst_norm, nres);
            pass = pass && nres <= 1e-3 && r.rhs == 0.0;
        }
    }
    double worst_rel = 0.0;
    {
        const ExplicitField f(3, 0.35);
        for (const auto& phi : corpus) {
            const WeakResidual r = weak_residual(f, phi);
            if (std::abs(r.rhs) < 1e-10) continue;  // even-in-x1 members have no closed-form mass
            const double rel = std::abs(r.diff) / std::abs(r.rhs);
            worst_rel = std::max(worst_rel, rel);
            pass = pass && rel <= 0.01;
        }
    }
    pass = pass && t.seconds() <= 60.0;
    report(1, "counterexample identity", pass,
           fmt("max normalized |LHS| = %.2e (<= 1e-3), max rel err at alpha=0.35 = %.2e (<= 1e-2), %.1fs",
               worst_norm, worst_rel, t.seconds()));
}

void criterion_2() {
    Timer t;
    const ExplicitField f(3, 0.25);
    const double pstar = integrability_threshold(3, 0.25);
    const AnnulusScan s10 = annulus_scan(f, 10.0, 0, 12);
    const AnnulusScan s12 = annulus_scan(f, 12.0, 0, 12);
    const bool pass = pstar == 11.0 && s10.verdict == "finite" &&
                      std::abs(s10.fitted_exponent - 0.5) <= 0.01 && s12.verdict == "infinite" &&
                      std::abs(s12.fitted_exponent + 0.5) <= 0.01 && t.seconds() <= 10.0;
    report(2, "sharp threshold", pass,
           fmt("p* = %g, exponents %+0.4f / %+0.4f, verdicts %s / %s, %.1fs", pstar,
               s10.fitted_exponent, s12.fitted_exponent, s10.verdict.c_str(), s12.verdict.c_str(),
               t.seconds()));
}

void criterion_3() {
    Timer t;
    const UniformGrid grid(Box::cube(-1.0, 1.0, 2), 512);
    const BallFamily fam = make_ball_family(grid, grid.box, 32, 4.0 * grid.max_h(), 2.0, 6);
    bool pass = fam.balls.size() == 1734;
    std::string detail = fmt("%zu balls;", fam.balls.size());
    for (double alpha : {-1.0, -0.5, 0.5, 1.0}) {
        const ApEstimate est = ap_characteristic(Weight::power(alpha, 2), fam, 2.0);
        const double lower = 4.0 / (4.0 - alpha * alpha) - 1e-3;
        const double upper = power_ap_bound(2, alpha);
        pass = pass && est.value >= lower && est.value <= upper;
        detail += fmt(" a=%+.1f: %.4f in [%.4f, %.2f];", alpha, est.value, lower, upper);
    }
    pass = pass && t.seconds() <= 120.0;
    detail += fmt(" %.1fs", t.seconds());
    report(3, "A_2 envelope", pass, detail);
}

void criterion_4() {
    Timer t;
    bool pass = true;
    double worst_gap = 0.0, worst_oracle = 0.0;
    const UniformGrid grid(Box::cube(-1.0, 1.0, 2), 128);
    const BallFamily fam = make_ball_family(grid, grid.box, 32, 4.0 * grid.max_h(), 2.0, 4);
    for (double alpha : {-0.5, 0.2, 0.5, 1.0}) {
        const Weight w = Weight::power(alpha, 2);
        const double bound = power_oscillation_bound(2, alpha);
        for (const Ball& B : fam.balls) {
            const double r = oscillation_ratio(w, B);
            worst_gap = std::max(worst_gap, r / bound);
            pass = pass && r <= bound;
        }
        const double impl = oscillation_ratio(w, Ball(make_point(0.0, 0.0), 1.0));
        const double oracle = radial_oscillation_oracle(alpha, 2);
        worst_oracle = std::max(worst_oracle, std::abs(impl - oracle));
        pass = pass && std::abs(impl - oracle) <= 1e-6;
    }
    report(4, "L^1 oscillation envelope", pass,
           fmt("max ratio/bound = %.3e (<= 1), centered-vs-oracle = %.2e (<= 1e-6), %.1fs",
               worst_gap, worst_oracle, t.seconds()));
}

void criterion_5() {
    Timer t;
    const Box box = Box::cube(-1.0, 1.0, 2);
    const UniformGrid grid(box, 256);
    const BallFamily fam = make_ball_family(grid, box, 32, 4.0 * grid.max_h(), 2.0, 5);
    const double R0 = 0.6;
    std::vector<double> slopes;
    std::string detail;
    for (double alpha : {0.05, 0.1, 0.2, 0.4}) {
        const Weight mu = Weight::power(alpha, 2);
        const MatrixField A = MatrixField::sample(grid, 1.0, [&](const Point& x) {
            SmallMat M = SmallMat::identity(2);
            for (int i = 0; i < 2; ++i) M(i, i) = mu(x);
            return M;
        });
        const BmoEstimate e = matrix_weighted_bmo(A, mu, box, R0, fam);
        slopes.push_back(e.value_sq / alpha);
        detail += fmt(" a=%.2f: [A]^2=%.3e, /a=%.4f;", alpha, e.value_sq, slopes.back());
    }
    // bounded slope: each run's value_sq/alpha within a factor 4 of the
    // previous run's (the sup itself is quadratic in alpha, so the whole-sweep
    // max/min is ~8 by closed form; adjacent ratios sit near 2)
    bool pass = true;
    for (std::size_t i = 1; i < slopes.size(); ++i) {
        const double r = slopes[i] / slopes[i - 1];
        pass = pass && r <= 4.0 && r >= 0.25;
    }
    detail += fmt(" %.1fs", t.seconds());
    report(5, "small-oscillation sweep", pass, detail);
}

void criterion_6() {
    Timer t;
    const UniformGrid g(Box::cube(0.0, 1.0, 2), 64);
    int passed = 0, total = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        SplitMix64 rng(seed);
        GridScalarField f(g);
        for (auto& v : f.values) v = 8.0 * rng.next_double() * rng.next_double();
        const Weight mu = (seed % 2 == 0) ? Weight::power(0.0, 2) : Weight::power(0.3, 2);
        const double p = (seed % 3 == 0) ? 1.5 : (seed % 3 == 1) ? 2.0 : 3.0;
        const SandwichReport r = ladder_sandwich(f, 1.0, 2.0, p, mu, g.box);
        ++total;
        if (r.pass) ++passed;
    }
    const bool pass = passed == total;
    report(6, "distribution-sum sandwich", pass,
           fmt("%d/%d seeded fields pass with c_lower = theta^p(1-varpi^-p), c_upper = theta^p varpi^p, %.1fs",
               passed, total, t.seconds()));
}

void criterion_7() {
    Timer t;
    bool pass = true;
    std::string detail;
    {  // constants are exact
        const UniformGrid g(Box::cube(0.0, 1.0, 2), 32);
        const GridScalarField one = GridScalarField::constant(g, 1.0);
        const GridScalarField M =
            weighted_maximal(one, Weight::power(0.5, 2), geometric_radius_ladder(g));
        for (double v : M.values) pass = pass && v == 1.0;
        detail += "M(1) == 1 bitwise;";
    }
    {  // exhaustive ladder equals brute force
        const UniformGrid g(Box::cube(0.0, 1.0, 2), 32);
        const Weight mu = Weight::power(0.0, 2);
        const GridScalarField f =
            GridScalarField::sample(g, [](const Point& x) { return x[0] < 0.5 ? 1.0 : 0.0; });
        const GridScalarField M = weighted_maximal(f, mu, exhaustive_radius_ladder(g));
        const GridScalarField B = brute_force_maximal(f, mu);
        double worst = 0.0;
        for (std::size_t i = 0; i < M.values.size(); ++i)
            worst = std::max(worst, std::abs(M.values[i] - B.values[i]));
        pass = pass && worst <= 1e-12;
        detail += fmt(" ladder-vs-brute = %.1e;", worst);
    }
    {  // weak-(1,1) spike stability under refinement
        double prev = 0.0;
        for (int m : {64, 128}) {
            const UniformGrid g(Box::cube(0.0, 1.0, 2), m);
            GridScalarField f(g);
            std::array<int, kMaxDim> c{};
            c[0] = m / 2;
            c[1] = m / 2;
            f.values[g.flat(c)] = 1.0;
            const double r = weak11_ratio(f, Weight::power(0.0, 2),
                                          {1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1});
            pass = pass && std::isfinite(r) && r > 0.0;
            if (prev > 0.0) {
                pass = pass && std::abs(r / prev - 1.0) <= 0.25;
                detail += fmt(" weak11 64->128: %.4f -> %.4f;", prev, r);
            }
            prev = r;
        }
    }
    detail += fmt(" %.1fs", t.seconds());
    report(7, "maximal operator", pass, detail);
}

void criterion_8() {
    Timer t;
    bool pass = true;
    double worst = 0.0;
    struct Case {
        Box box;
        double alpha;
        std::uint64_t seed;
        int m;
    };
    for (const Case& c :
         {Case{Box::cube(0.0, 1.0, 2), 0.0, 41, 32}, Case{Box::cube(-1.0, 1.0, 2), 0.5, 42, 32},
          Case{Box::cube(-1.0, 1.0, 2), 0.2, 43, 48}, Case{Box::cube(-1.0, 1.0, 2), -0.5, 44, 32}}) {
        EllipticProblem pb(triangulate_box(c.box, c.m), Weight::power(c.alpha, 2),
                           SmallMat::identity(2), 1.0, smooth_field(c.seed));
        const DiscreteSolution sol = solve_cg(pb);
        const double ratio = sol.stats.energy_lhs / sol.stats.energy_rhs;
        worst = std::max(worst, ratio);
        pass = pass && ratio <= 1.05;
    }
    report(8, "energy estimate", pass,
           fmt("max ||grad u||_mu / ||F/mu||_mu = %.4f (<= 1.05), %.1fs", worst, t.seconds()));
}

void criterion_9() {
    Timer t;
    const Box box = Box::cube(-1.0, 1.0, 2);
    const Weight mu = Weight::power(0.5, 2);
    std::vector<VectorFieldFn> fs;
    for (int i = 0; i < 10; ++i) fs.push_back(smooth_field(900 + i));
    const std::vector<int> meshes = {32, 64, 128};
    const auto rows = regularity_constant(box, mu, SmallMat::identity(2), 1.0, fs, 4.0, meshes);
    // rows are mesh-major then data-major
    bool pass = true;
    double worst_ratio = 1.0;
    for (std::size_t fi = 0; fi < fs.size(); ++fi)
        for (std::size_t mi = 0; mi + 1 < meshes.size(); ++mi) {
            const double a = rows[mi * fs.size() + fi].cp;
            const double b = rows[(mi + 1) * fs.size() + fi].cp;
            const double r = std::max(a / b, b / a);
            worst_ratio = std::max(worst_ratio, r);
            pass = pass && r <= 1.2;
        }
    double cmin = 1e300, cmax = 0.0;
    for (std::size_t fi = 0; fi < fs.size(); ++fi) {
        const double c = rows[(meshes.size() - 1) * fs.size() + fi].cp;
        cmin = std::min(cmin, c);
        cmax = std::max(cmax, c);
    }
    pass = pass && cmax / cmin <= 10.0 && t.seconds() <= 600.0;
    report(9, "W^{1,p} stability proxy", pass,
           fmt("worst refinement ratio = %.3f (<= 1.2), family max/min = %.3f (<= 10), %.1fs",
               worst_ratio, cmax / cmin, t.seconds()));
}

void criterion_10() {
    Timer t;
    std::vector<double> errs;
    for (int m : {32, 64, 128}) {
        EllipticProblem pb(triangulate_box(Box::cube(0.0, 1.0, 2), m), Weight::one(2),
                           SmallMat::identity(2), 1.0, grad_sine());
        errs.push_back(h1_error(solve_cg(pb, 1e-11), grad_sine()));
    }
    bool pass = true;
    std::string detail;
    for (std::size_t i = 0; i + 1 < errs.size(); ++i) {
        const double order = std::log2(errs[i] / errs[i + 1]);
        detail += fmt(" order %.3f;", order);
        pass = pass && order >= 0.9 && order <= 1.1;
    }
    detail += fmt(" %.1fs", t.seconds());
    report(10, "manufactured convergence", pass, detail);
}

void criterion_11() {
    Timer t;
    const BoundaryCloud half = make_halfspace_cloud(2, 0.004);
    const double d_half = flatness_at(half, make_point(0.0, 0.0), 0.3);

    const BoundaryCloud square = make_box_boundary_cloud(Box::cube(0.0, 1.0, 2), 0.004);
    const ReifenbergEstimate sq = flatness_profile(square, 0.5, 16, 3);

    const BoundaryCloud disk = make_disk_cloud(make_point(0.0, 0.0), 1.0, 0.004);
    const double d_disk = flatness_at(disk, make_point(1.0, 0.0), 0.2);

    const bool pass = d_half <= 0.01 && std::abs(sq.delta_hat - 0.707) <= 0.05 * 0.707 &&
                      std::abs(d_disk - 0.100) <= 0.10 * 0.100;
    report(11, "Reifenberg estimator", pass,
           fmt("half-space %.4f (<= 0.01), corner %.4f (0.707 +- 5%%), circle %.4f (0.100 +- 10%%), %.1fs",
               d_half, sq.delta_hat, d_disk, t.seconds()));
}

void criterion_12() {
    Timer t;
    const Box box = Box::cube(-1.0, 1.0, 2);
    const Weight mu = Weight::power(0.2, 2);
    const auto F = smooth_field(1200);
    const int mesh_m = 64;
    EllipticProblem pb(triangulate_box(box, mesh_m), mu, SmallMat::identity(2), 1.0, F);
    const DiscreteSolution sol = solve_cg(pb);
    const UniformGrid grid(box, 64);
    GridScalarField gradsq = sample_gradsq_to_grid(sol, box, mesh_m, grid);
    GridScalarField datasq = GridScalarField::sample(grid, [&](const Point& x) {
        const Point Fv = F(x);
        const double m = mu(x);
        return dot(Fv, Fv, 2) / (m * m);
    });
    bool pass = sol.stats.energy_lhs <= 1.05 * sol.stats.energy_rhs;
    std::string detail;
    for (double varpi : {2.0, 4.0}) {
        const double eps = 0.05;
        const double N = goodlambda_normalization(gradsq, mu, box, varpi, eps);
        GridScalarField gs = gradsq, ds = datasq;
        for (auto& v : gs.values) v /= N * N;
        for (auto& v : ds.values) v /= N * N;
        const GoodLambdaReport rep = goodlambda_ladder(gs, ds, mu, box, varpi, 0.1, 2.0, eps, 3);
        pass = pass && rep.hypothesis_met;
        const double base = level_measure(
            weighted_maximal(gs, mu, geometric_radius_ladder(grid), &box), 1.0, mu, box);
        // monotone level masses
        double prev = base;
        for (const auto& row : rep.per_k) {
            pass = pass && row.lhs <= prev * (1.0 + 1e-12);
            prev = row.lhs;
        }
        // geometric decay no slower than the rate calibrated at k = 1
        const double eps1_cal = base > 0.0 ? rep.per_k[0].lhs / base : 0.0;
        double fitted = 0.0;
        for (int k = 3; k >= 1; --k) {
            if (rep.per_k[k - 1].lhs > 0.0 && base > 0.0) {
                fitted = std::pow(rep.per_k[k - 1].lhs / base, 1.0 / k);
                break;
            }
        }
        pass = pass && base > 0.0 && eps1_cal > 0.0 && fitted <= eps1_cal * (1.0 + 1e-9);
        detail += fmt(" varpi=%g: N=%.3g rate %.4f <= cal %.4f;", varpi, N, fitted, eps1_cal);
    }
    detail += fmt(" %.1fs", t.seconds());
    report(12, "good-lambda ladder", pass, detail);
}

void criterion_13() {
    Timer t;
    const char* cli = std::getenv("WLAB_CLI");
    if (!cli) {
        report(13, "determinism across threads", false, "WLAB_CLI not set");
        return;
    }
    bool pass = true;
    std::string detail;
    struct Run {
        std::string name;
        std::string args;
        std::vector<std::string> files;
    };
    const std::vector<Run> runs = {
        {"ap", "ap --alpha 0.5 --dim 2 --p 2 --grid 256 --seed 3", {"ap.json"}},
        {"ladder", "ladder --grid 128 --seed 9 --alpha 0.3", {"ladder.json", "ladder_terms.csv"}},
        {"goodlambda", "goodlambda --grid 48 --seed 5", {"goodlambda.json", "goodlambda_per_k.csv"}},
    };
    for (const auto& r : runs) {
        const std::string d1 = "acc_t1_" + r.name, d8 = "acc_t8_" + r.name;
        fs::remove_all(d1);
        fs::remove_all(d8);
        const std::string c1 = std::string(cli) + " " + r.args + " --threads 1 --out " + d1 + " >/dev/null 2>&1";
        const std::string c8 = std::string(cli) + " " + r.args + " --threads 8 --out " + d8 + " >/dev/null 2>&1";
        pass = pass && std::system(c1.c_str()) == 0 && std::system(c8.c_str()) == 0;
        for (const auto& f : r.files) {
            const bool same = slurp(fs::path(d1) / f) == slurp(fs::path(d8) / f);
            pass = pass && same;
            if (!same) detail += " mismatch:" + f + ";";
        }
    }
    if (detail.empty()) detail = "ap, ladder, goodlambda byte-identical at --threads 1 vs 8";
    detail += fmt(", %.1fs", t.seconds());
    report(13, "determinism across threads", pass, detail);
}

}  // namespace

int main() {
    set_thread_count(4);
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    criterion_11();
    criterion_12();
    criterion_13();
    if (g_failed == 0) std::printf("all 13 criteria passed\n");
    else std::printf("%d criteria FAILED\n", g_failed);
    return g_failed == 0 ? 0 : 1;
}
