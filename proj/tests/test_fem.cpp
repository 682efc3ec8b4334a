#include <catch2/catch_amalgamated.hpp>

#include "wlab/fem.hpp"
#include "wlab/random.hpp"

using namespace wlab;
using Catch::Approx;

namespace {

VectorFieldFn grad_sine() {
    return [](const Point& x) {
        return make_point(M_PI * std::cos(M_PI * x[0]) * std::sin(M_PI * x[1]),
                          M_PI * std::sin(M_PI * x[0]) * std::cos(M_PI * x[1]));
    };
}

VectorFieldFn smooth_field(std::uint64_t seed) {
    SplitMix64 rng(seed);
    const double a = rng.uniform(-1.0, 1.0), b = rng.uniform(-1.0, 1.0);
    const double c = rng.uniform(0.5, 2.0), d = rng.uniform(0.5, 2.0);
    return [=](const Point& x) {
        return make_point(a * std::sin(c * x[0] + d * x[1]) + 0.3,
                          b * std::cos(d * x[0] - c * x[1]) - 0.2);
    };
}

bool dense_cholesky_ok(const SparseSystem& sys) {
    const std::size_t n = sys.n_dofs;
    std::vector<double> A(n * n, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (int k = sys.row_ptr[r]; k < sys.row_ptr[r + 1]; ++k)
            A[r * n + sys.col[k]] = sys.val[k];
    for (std::size_t j = 0; j < n; ++j) {
        double d = A[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= A[j * n + k] * A[j * n + k];
        if (!(d > 0.0)) return false;
        A[j * n + j] = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = A[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= A[i * n + k] * A[j * n + k];
            A[i * n + j] = s / A[j * n + j];
        }
    }
    return true;
}

}  // namespace

TEST_CASE("structured triangulation counts") {
    const SimplicialMesh m1 = triangulate_box(Box::cube(0.0, 1.0, 2), 1);
    REQUIRE(m1.n_vertices() == 4);
    REQUIRE(m1.n_elements() == 2);
    const SimplicialMesh m2 = triangulate_box(Box::cube(0.0, 1.0, 2), 2);
    REQUIRE(m2.n_vertices() == 9);
    REQUIRE(m2.n_elements() == 8);
    const SimplicialMesh c1 = triangulate_box(Box::cube(0.0, 1.0, 3), 1);
    REQUIRE(c1.n_vertices() == 8);
    REQUIRE(c1.n_elements() == 6);
    double vol = 0.0;
    for (std::size_t e = 0; e < c1.n_elements(); ++e) vol += element_geometry(c1, e).volume;
    REQUIRE(vol == Approx(1.0));
}

TEST_CASE("Laplacian stiffness has zero interior row sums") {
    EllipticProblem pb(triangulate_box(Box::cube(0.0, 1.0, 2), 8), Weight::one(2),
                       SmallMat::identity(2), 1.0, grad_sine());
    const SparseSystem sys = assemble(pb);
    for (std::size_t r = 0; r < sys.n_dofs; ++r) {
        double row = 0.0;
        for (int k = sys.row_ptr[r]; k < sys.row_ptr[r + 1]; ++k) row += sys.val[k];
        // interior rows of hat-function stiffness sum to the (eliminated) boundary couplings;
        // rows fully interior sum to zero by partition of unity
        const int v = sys.vertex_of_dof[r];
        const auto& vert = pb.mesh.vertices[v];
        const double h = 1.0 / 8;
        const bool next_to_boundary = vert[0] < 1.5 * h || vert[0] > 1 - 1.5 * h ||
                                      vert[1] < 1.5 * h || vert[1] > 1 - 1.5 * h;
        if (!next_to_boundary) REQUIRE(row == Approx(0.0).margin(1e-12));
    }
}

TEST_CASE("stiffness is linear in a constant weight") {
    const SimplicialMesh mesh = triangulate_box(Box::cube(0.0, 1.0, 2), 6);
    EllipticProblem p1(mesh, Weight::one(2), SmallMat::identity(2), 1.0, grad_sine());
    const Weight w3 = Weight::generic(2, [](const Point&) { return 3.0; });
    EllipticProblem p3(mesh, w3, SmallMat::identity(2), 1.0, grad_sine());
    const SparseSystem s1 = assemble(p1), s3 = assemble(p3);
    for (std::size_t k = 0; k < s1.val.size(); ++k)
        REQUIRE(s3.val[k] == Approx(3.0 * s1.val[k]).epsilon(1e-13));
}

TEST_CASE("degenerate weight assembles to an SPD system") {
    EllipticProblem pb(triangulate_box(Box::cube(-1.0, 1.0, 2), 8), Weight::power(0.5, 2),
                       SmallMat::identity(2), 1.0, grad_sine());
    const SparseSystem sys = assemble(pb);
    REQUIRE(dense_cholesky_ok(sys));
}

TEST_CASE("zero data gives the zero solution") {
    EllipticProblem pb(triangulate_box(Box::cube(0.0, 1.0, 2), 16), Weight::one(2),
                       SmallMat::identity(2), 1.0, [](const Point&) { return Point{}; });
    const DiscreteSolution sol = solve_cg(pb);
    for (double v : sol.u) REQUIRE(v == Approx(0.0).margin(1e-12));
}

TEST_CASE("manufactured solution converges at first order in H^1") {
    const Box box = Box::cube(0.0, 1.0, 2);
    auto exact_grad = grad_sine();
    double prev = 0.0;
    std::vector<double> errs;
    for (int m : {16, 32, 64}) {
        EllipticProblem pb(triangulate_box(box, m), Weight::one(2), SmallMat::identity(2), 1.0,
                           grad_sine());
        const DiscreteSolution sol = solve_cg(pb, 1e-11);
        errs.push_back(h1_error(sol, exact_grad));
    }
    for (std::size_t i = 0; i + 1 < errs.size(); ++i) {
        const double ratio = errs[i] / errs[i + 1];
        REQUIRE(ratio >= 1.8);
        REQUIRE(ratio <= 2.2);
    }
    (void)prev;
}

TEST_CASE("solution operator is linear") {
    const SimplicialMesh mesh = triangulate_box(Box::cube(0.0, 1.0, 2), 12);
    const auto F1 = smooth_field(1), F2 = smooth_field(2);
    const auto Fsum = [&](const Point& x) {
        const Point a = F1(x), b = F2(x);
        return make_point(a[0] + b[0], a[1] + b[1]);
    };
    const double tol = 1e-11;
    const DiscreteSolution u1 = solve_cg(EllipticProblem(mesh, Weight::one(2), SmallMat::identity(2), 1.0, F1), tol);
    const DiscreteSolution u2 = solve_cg(EllipticProblem(mesh, Weight::one(2), SmallMat::identity(2), 1.0, F2), tol);
    const DiscreteSolution us = solve_cg(EllipticProblem(mesh, Weight::one(2), SmallMat::identity(2), 1.0, Fsum), tol);
    double scale = 0.0;
    for (double v : us.u) scale = std::max(scale, std::abs(v));
    for (std::size_t v = 0; v < us.u.size(); ++v)
        REQUIRE(us.u[v] == Approx(u1.u[v] + u2.u[v]).margin(10.0 * tol * scale));
}

TEST_CASE("energy estimate holds on every A = mu I solve") {
    struct Case {
        Box box;
        double alpha;
        std::uint64_t seed;
    };
    for (const Case& c : {Case{Box::cube(0.0, 1.0, 2), 0.0, 4}, Case{Box::cube(-1.0, 1.0, 2), 0.5, 5},
                          Case{Box::cube(-1.0, 1.0, 2), 0.2, 6}}) {
        EllipticProblem pb(triangulate_box(c.box, 32), Weight::power(c.alpha, 2),
                           SmallMat::identity(2), 1.0, smooth_field(c.seed));
        const DiscreteSolution sol = solve_cg(pb);
        REQUIRE(sol.stats.energy_lhs <= 1.05 * sol.stats.energy_rhs);
    }
}

TEST_CASE("L-shape solve keeps the energy estimate") {
    const SimplicialMesh square = triangulate_box(Box::cube(-1.0, 1.0, 2), 24);
    const SimplicialMesh lshape = submesh_where(square, [](const Point& c) {
        return !(c[0] > 0.0 && c[1] > 0.0);  // remove the first quadrant
    });
    REQUIRE(lshape.n_elements() * 4 == square.n_elements() * 3);
    EllipticProblem pb(lshape, Weight::power(0.2, 2), SmallMat::identity(2), 1.0, smooth_field(8));
    const DiscreteSolution sol = solve_cg(pb);
    REQUIRE(sol.stats.energy_lhs <= 1.05 * sol.stats.energy_rhs);
}

TEST_CASE("weighted norms on meshes") {
    const SimplicialMesh mesh = triangulate_box(Box::cube(-1.0, 1.0, 2), 128);
    SECTION("unit function, unit weight") {
        std::vector<double> ones(mesh.n_elements(), 1.0);
        std::function<bool(const Point&)> square = [](const Point&) { return true; };
        REQUIRE(weighted_lp_norm(ones, mesh, Weight::one(2), 3.0) ==
                Approx(std::pow(4.0, 1.0 / 3.0)).epsilon(1e-12));
    }
    SECTION("unit function over the polygonal disk with |x|^{1/2}") {
        std::vector<double> ones(mesh.n_elements(), 1.0);
        std::function<bool(const Point&)> disk = [](const Point& c) {
            return c[0] * c[0] + c[1] * c[1] <= 1.0;
        };
        const double got = weighted_lp_norm(ones, mesh, Weight::power(0.5, 2), 2.0, &disk);
        REQUIRE(got == Approx(std::sqrt(2.0 * M_PI / 2.5)).margin(0.03));
    }
    SECTION("homogeneity") {
        std::vector<double> vals(mesh.n_elements());
        SplitMix64 rng(13);
        for (auto& v : vals) v = rng.uniform(-1.0, 1.0);
        const double base = weighted_lp_norm(vals, mesh, Weight::power(0.5, 2), 4.0);
        for (auto& v : vals) v *= -2.5;
        REQUIRE(weighted_lp_norm(vals, mesh, Weight::power(0.5, 2), 4.0) ==
                Approx(2.5 * base).epsilon(1e-12));
    }
}

TEST_CASE("weak residual against smooth test functions") {
    const Box box = Box::cube(0.0, 1.0, 2);
    TestFunction bump;
    bump.value = [](const Point& x) { return x[0] * (1 - x[0]) * x[1] * (1 - x[1]); };
    bump.gradient = [](const Point& x) {
        return make_point((1 - 2 * x[0]) * x[1] * (1 - x[1]), x[0] * (1 - x[0]) * (1 - 2 * x[1]));
    };
    SECTION("zero data gives residual at solver tolerance") {
        EllipticProblem pb(triangulate_box(box, 16), Weight::one(2), SmallMat::identity(2), 1.0,
                           [](const Point&) { return Point{}; });
        const DiscreteSolution sol = solve_cg(pb);
        REQUIRE(weak_residual_check(sol, pb, {bump}) <= 1e-9);
    }
    SECTION("residual decays at first order under refinement") {
        std::vector<double> res;
        for (int m : {16, 32, 64}) {
            EllipticProblem pb(triangulate_box(box, m), Weight::one(2), SmallMat::identity(2), 1.0,
                               grad_sine());
            const DiscreteSolution sol = solve_cg(pb, 1e-12);
            res.push_back(weak_residual_check(sol, pb, {bump}));
        }
        REQUIRE(res[1] < res[0]);
        REQUIRE(res[2] < res[1]);
        REQUIRE(res[0] / res[2] >= 3.0);  // two refinements, order ~1 at least
    }
}

TEST_CASE("regularity constant table") {
    const Box box = Box::cube(-1.0, 1.0, 2);
    SECTION("p = 2, A = mu I has C_2 <= 1.05 by the energy estimate") {
        const auto rows = regularity_constant(box, Weight::power(0.5, 2), SmallMat::identity(2), 1.0,
                                              {smooth_field(21), smooth_field(22)}, 2.0, {16, 32});
        for (const auto& r : rows) REQUIRE(r.cp <= 1.05);
    }
    SECTION("interior variant produces finite constants") {
        const auto rows = regularity_constant(box, Weight::power(0.5, 2), SmallMat::identity(2), 1.0,
                                              {smooth_field(23)}, 4.0, {24}, 1e-10, 6.0);
        REQUIRE(rows.size() == 1);
        REQUIRE(std::isfinite(rows[0].cp));
        REQUIRE(rows[0].cp >= 0.0);
    }
    SECTION("entries are invariant under the joint scaling by a power of two") {
        const auto F = smooth_field(24);
        const SimplicialMesh mesh = triangulate_box(box, 16);
        EllipticProblem pb(mesh, Weight::power(0.5, 2), SmallMat::identity(2), 1.0, F);
        const DiscreteSolution base = solve_cg(pb);
        const Weight mu4 = Weight::power(0.5, 2).scaled(0.25);
        auto F4 = [&F](const Point& x) {
            const Point v = F(x);
            return make_point(v[0] / 4.0, v[1] / 4.0);
        };
        EllipticProblem pb4(mesh, mu4, SmallMat::identity(2), 1.0, F4);
        const DiscreteSolution scaled = solve_cg(pb4);
        for (std::size_t v = 0; v < base.u.size(); ++v) REQUIRE(scaled.u[v] == base.u[v]);
    }
}

TEST_CASE("Caccioppoli comparison") {
    const Box box = Box::cube(-1.0, 1.0, 2);
    SECTION("v = u makes the left side vanish") {
        EllipticProblem pb(triangulate_box(box, 16), Weight::one(2), SmallMat::identity(2), 1.0,
                           smooth_field(31));
        const DiscreteSolution u = solve_cg(pb);
        TestFunction phi;
        phi.value = [](const Point& x) { return (1 - x[0] * x[0]) * (1 - x[1] * x[1]); };
        phi.gradient = [](const Point& x) {
            return make_point(-2 * x[0] * (1 - x[1] * x[1]), -2 * x[1] * (1 - x[0] * x[0]));
        };
        const CaccioppoliReport r = caccioppoli_check(u, u, pb, SmallMat::identity(2), phi);
        REQUIRE(r.lhs == Approx(0.0).margin(1e-13));
    }
    SECTION("ratio is scale-invariant and stable under refinement") {
        TestFunction phi;
        phi.value = [](const Point& x) { return (1 - x[0] * x[0]) * (1 - x[1] * x[1]); };
        phi.gradient = [](const Point& x) {
            return make_point(-2 * x[0] * (1 - x[1] * x[1]), -2 * x[1] * (1 - x[0] * x[0]));
        };
        auto run = [&](int m, double fscale) {
            const Weight mu = Weight::power(0.2, 2);
            const auto F0 = smooth_field(32);
            auto F = [F0, fscale](const Point& x) {
                const Point v = F0(x);
                return make_point(fscale * v[0], fscale * v[1]);
            };
            EllipticProblem pb(triangulate_box(box, m), mu, SmallMat::identity(2), 1.0, F);
            const DiscreteSolution u = solve_cg(pb);
            // constant-coefficient comparison: <mu> I with u's boundary trace
            KahanSum anum, aden;
            for (std::size_t e = 0; e < pb.mesh.n_elements(); ++e) {
                anum.add(element_weight_integral(pb, e));
                aden.add(element_geometry(pb.mesh, e).volume);
            }
            SmallMat A0c = SmallMat::identity(2);
            for (int i = 0; i < 2; ++i) A0c(i, i) = anum.value() / aden.value();
            EllipticProblem pb0(pb.mesh, Weight::one(2), A0c, 1.0, [](const Point&) { return Point{}; });
            const DiscreteSolution v = solve_cg(pb0, 1e-10, -1, &u.u);
            return caccioppoli_check(u, v, pb, A0c, phi);
        };
        const CaccioppoliReport a = run(24, 1.0);
        REQUIRE(std::isfinite(a.ratio));
        REQUIRE(a.ratio > 0.0);
        const CaccioppoliReport b = run(48, 1.0);
        REQUIRE(std::abs(b.ratio / a.ratio - 1.0) < 0.3);
        const CaccioppoliReport s = run(24, 2.0);
        REQUIRE(s.lhs == Approx(4.0 * a.lhs).epsilon(1e-9));
        REQUIRE(s.ratio == Approx(a.ratio).epsilon(1e-9));
    }
}

TEST_CASE("weighted Sobolev-Poincare ratios") {
    const Box box = Box::cube(-1.1, 1.1, 2);
    const SimplicialMesh mesh = triangulate_box(box, 110);
    DiscreteSolution field;
    field.mesh = mesh;
    field.u.resize(mesh.n_vertices());
    for (std::size_t v = 0; v < mesh.n_vertices(); ++v) field.u[v] = mesh.vertices[v][0];
    field.grad.assign(mesh.n_elements(), {1.0, 0.0});
    const Ball B(make_point(0.0, 0.0), 1.0);

    SECTION("constant field has ratio zero") {
        DiscreteSolution c = field;
        std::fill(c.u.begin(), c.u.end(), 2.0);
        c.grad.assign(mesh.n_elements(), {0.0, 0.0});
        REQUIRE(poincare_check(c, Weight::one(2), B, 1.0, PoincareCentering::MuAverage).ratio == 0.0);
    }
    SECTION("u = x1 on the unit disk gives ratio 1/2") {
        const PoincareReport r = poincare_check(field, Weight::one(2), B, 1.0, PoincareCentering::MuAverage);
        REQUIRE(r.lhs == Approx(0.5).margin(0.02));
        REQUIRE(r.rhs == Approx(1.0).margin(0.02));
        REQUIRE(r.ratio == Approx(0.5).margin(0.02));
        const PoincareReport rl =
            poincare_check(field, Weight::one(2), B, 1.0, PoincareCentering::LebesgueAverage);
        REQUIRE(rl.ratio == Approx(r.ratio).margin(1e-6));
    }
    SECTION("degenerate weight stays within a factor 2 of the Lebesgue case") {
        const PoincareReport r = poincare_check(field, Weight::power(0.5, 2), B, 1.0,
                                                PoincareCentering::MuAverage);
        REQUIRE(r.ratio > 0.25);
        REQUIRE(r.ratio < 1.0);
    }
}
