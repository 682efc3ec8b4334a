#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "wlab/geometry.hpp"
#include "wlab/oscillation.hpp"
#include "wlab/parallel.hpp"
#include "wlab/weight.hpp"

namespace wlab {

// P1 finite elements for div[A grad u] = div[F], u = 0 on the boundary, with
// A(x) = mu(x) A0 and mu a (possibly degenerate) weight. The weight is always
// evaluated at quadrature points, never nodally interpolated.

using VectorFieldFn = std::function<Point(const Point&)>;

struct SimplicialMesh {
    int dim = 0;
    std::vector<Point> vertices;
    std::vector<std::array<int, kMaxDim + 1>> elements;
    std::vector<std::uint8_t> is_boundary;

    std::size_t n_vertices() const { return vertices.size(); }
    std::size_t n_elements() const { return elements.size(); }
};

namespace detail {

// Gauss elimination with partial pivoting on tiny matrices.
inline void invert_small(int n, double a[kMaxDim][kMaxDim], double inv[kMaxDim][kMaxDim]) {
    double aug[kMaxDim][2 * kMaxDim];
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            aug[i][j] = a[i][j];
            aug[i][n + j] = (i == j) ? 1.0 : 0.0;
        }
    for (int c = 0; c < n; ++c) {
        int piv = c;
        for (int r = c + 1; r < n; ++r)
            if (std::abs(aug[r][c]) > std::abs(aug[piv][c])) piv = r;
        if (std::abs(aug[piv][c]) < 1e-300) throw std::runtime_error("degenerate element");
        if (piv != c)
            for (int j = 0; j < 2 * n; ++j) std::swap(aug[piv][j], aug[c][j]);
        const double d = aug[c][c];
        for (int j = 0; j < 2 * n; ++j) aug[c][j] /= d;
        for (int r = 0; r < n; ++r) {
            if (r == c) continue;
            const double f = aug[r][c];
            for (int j = 0; j < 2 * n; ++j) aug[r][j] -= f * aug[c][j];
        }
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) inv[i][j] = aug[i][n + j];
}

}  // namespace detail

struct ElementGeometry {
    double volume = 0.0;
    std::array<Point, kMaxDim + 1> grad;  // gradient of each P1 basis function
    Point centroid{};
};

inline ElementGeometry element_geometry(const SimplicialMesh& mesh, std::size_t e) {
    const int n = mesh.dim;
    const auto& el = mesh.elements[e];
    double E[kMaxDim][kMaxDim];
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            E[i][j] = mesh.vertices[el[j + 1]][i] - mesh.vertices[el[0]][i];
    double det = 0.0;
    if (n == 2) det = E[0][0] * E[1][1] - E[0][1] * E[1][0];
    else if (n == 3)
        det = E[0][0] * (E[1][1] * E[2][2] - E[1][2] * E[2][1]) -
              E[0][1] * (E[1][0] * E[2][2] - E[1][2] * E[2][0]) +
              E[0][2] * (E[1][0] * E[2][1] - E[1][1] * E[2][0]);
    else
        throw std::runtime_error("element geometry supports dim 2 and 3");
    double fact = 1.0;
    for (int k = 2; k <= n; ++k) fact *= k;

    ElementGeometry g;
    g.volume = std::abs(det) / fact;
    double inv[kMaxDim][kMaxDim];
    detail::invert_small(n, E, inv);
    // grad lambda_i (i >= 1) is the (i-1)-th row of E^{-1}; lambda_0 closes the sum
    for (int i = 1; i <= n; ++i)
        for (int k = 0; k < n; ++k) g.grad[i][k] = inv[i - 1][k];
    for (int k = 0; k < n; ++k) {
        double s = 0.0;
        for (int i = 1; i <= n; ++i) s += g.grad[i][k];
        g.grad[0][k] = -s;
    }
    for (int k = 0; k < n; ++k) {
        double s = 0.0;
        for (int i = 0; i <= n; ++i) s += mesh.vertices[el[i]][k];
        g.centroid[k] = s / (n + 1);
    }
    return g;
}

// Structured triangulation: 2 triangles per square in 2D, 6 Kuhn tetrahedra
// per cube in 3D; deterministic ordering throughout.
inline SimplicialMesh triangulate_box(const Box& box, int m) {
    if (m < 1) throw std::invalid_argument("need at least one cell per axis");
    const int n = box.dim;
    if (n != 2 && n != 3) throw std::invalid_argument("triangulation supports dim 2 and 3");
    SimplicialMesh mesh;
    mesh.dim = n;
    const int nv = m + 1;

    auto vid2 = [&](int i, int j) { return i * nv + j; };
    auto vid3 = [&](int i, int j, int k) { return (i * nv + j) * nv + k; };

    if (n == 2) {
        mesh.vertices.reserve(static_cast<std::size_t>(nv) * nv);
        for (int i = 0; i < nv; ++i)
            for (int j = 0; j < nv; ++j)
                mesh.vertices.push_back(make_point(box.lo[0] + i * box.side(0) / m,
                                                    box.lo[1] + j * box.side(1) / m));
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) {
                mesh.elements.push_back({vid2(i, j), vid2(i + 1, j), vid2(i + 1, j + 1), -1, -1});
                mesh.elements.push_back({vid2(i, j), vid2(i + 1, j + 1), vid2(i, j + 1), -1, -1});
            }
        mesh.is_boundary.assign(mesh.vertices.size(), 0);
        for (int i = 0; i < nv; ++i)
            for (int j = 0; j < nv; ++j)
                if (i == 0 || j == 0 || i == m || j == m) mesh.is_boundary[vid2(i, j)] = 1;
        return mesh;
    }

    mesh.vertices.reserve(static_cast<std::size_t>(nv) * nv * nv);
    for (int i = 0; i < nv; ++i)
        for (int j = 0; j < nv; ++j)
            for (int k = 0; k < nv; ++k)
                mesh.vertices.push_back(make_point(box.lo[0] + i * box.side(0) / m,
                                                    box.lo[1] + j * box.side(1) / m,
                                                    box.lo[2] + k * box.side(2) / m));
    // Kuhn subdivision: one tet per permutation of the unit-cube path
    static const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            for (int k = 0; k < m; ++k)
                for (const auto& perm : perms) {
                    int c[3] = {i, j, k};
                    std::array<int, kMaxDim + 1> tet{};
                    tet[0] = vid3(c[0], c[1], c[2]);
                    for (int s = 0; s < 3; ++s) {
                        c[perm[s]] += 1;
                        tet[s + 1] = vid3(c[0], c[1], c[2]);
                    }
                    tet[4] = -1;
                    mesh.elements.push_back(tet);
                }
    mesh.is_boundary.assign(mesh.vertices.size(), 0);
    for (int i = 0; i < nv; ++i)
        for (int j = 0; j < nv; ++j)
            for (int k = 0; k < nv; ++k)
                if (i == 0 || j == 0 || k == 0 || i == m || j == m || k == m)
                    mesh.is_boundary[vid3(i, j, k)] = 1;
    return mesh;
}

// Keeps elements whose centroid satisfies the predicate; newly exposed faces
// become Dirichlet boundary. Used for the L-shape and polygonal-disk domains.
inline SimplicialMesh submesh_where(const SimplicialMesh& mesh,
                                    const std::function<bool(const Point&)>& keep) {
    const int n = mesh.dim;
    SimplicialMesh out;
    out.dim = n;
    std::vector<int> vmap(mesh.n_vertices(), -1);
    std::vector<std::size_t> kept;
    for (std::size_t e = 0; e < mesh.n_elements(); ++e)
        if (keep(element_geometry(mesh, e).centroid)) kept.push_back(e);
    for (std::size_t e : kept)
        for (int i = 0; i <= n; ++i) {
            const int v = mesh.elements[e][i];
            if (vmap[v] < 0) {
                vmap[v] = static_cast<int>(out.vertices.size());
                out.vertices.push_back(mesh.vertices[v]);
            }
        }
    for (std::size_t e : kept) {
        std::array<int, kMaxDim + 1> el{};
        el.fill(-1);
        for (int i = 0; i <= n; ++i) el[i] = vmap[mesh.elements[e][i]];
        out.elements.push_back(el);
    }
    // faces appearing once are exposed; their vertices are boundary
    std::vector<std::array<int, kMaxDim>> faces;
    for (const auto& el : out.elements)
        for (int skip = 0; skip <= n; ++skip) {
            std::array<int, kMaxDim> f{};
            f.fill(-1);
            int t = 0;
            for (int i = 0; i <= n; ++i)
                if (i != skip) f[t++] = el[i];
            std::sort(f.begin(), f.begin() + n);
            faces.push_back(f);
        }
    std::sort(faces.begin(), faces.end());
    out.is_boundary.assign(out.vertices.size(), 0);
    for (std::size_t i = 0; i < faces.size();) {
        std::size_t j = i;
        while (j < faces.size() && faces[j] == faces[i]) ++j;
        if (j - i == 1)
            for (int k = 0; k < n; ++k) out.is_boundary[faces[i][k]] = 1;
        i = j;
    }
    // vertices inherited from the outer boundary stay Dirichlet as well
    for (std::size_t v = 0; v < mesh.n_vertices(); ++v)
        if (vmap[v] >= 0 && mesh.is_boundary[v]) out.is_boundary[vmap[v]] = 1;
    return out;
}

// ----- weight quadrature on simplices -----

namespace detail {

inline bool simplex_touches_origin(const std::array<Point, kMaxDim + 1>& v, int n) {
    // barycentric coordinates of the origin
    double E[kMaxDim][kMaxDim], inv[kMaxDim][kMaxDim];
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) E[i][j] = v[j + 1][i] - v[0][i];
    try {
        invert_small(n, E, inv);
    } catch (const std::exception&) {
        return false;
    }
    double lam0 = 1.0;
    const double eps = 1e-12;
    for (int j = 0; j < n; ++j) {
        double lj = 0.0;
        for (int i = 0; i < n; ++i) lj += inv[j][i] * (0.0 - v[0][i]);
        if (lj < -eps || lj > 1.0 + eps) return false;
        lam0 -= lj;
    }
    return lam0 >= -eps && lam0 <= 1.0 + eps;
}

inline double simplex_volume(const std::array<Point, kMaxDim + 1>& v, int n) {
    double E[kMaxDim][kMaxDim];
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) E[i][j] = v[j + 1][i] - v[0][i];
    double det = 0.0;
    if (n == 2) det = E[0][0] * E[1][1] - E[0][1] * E[1][0];
    else
        det = E[0][0] * (E[1][1] * E[2][2] - E[1][2] * E[2][1]) -
              E[0][1] * (E[1][0] * E[2][2] - E[1][2] * E[2][0]) +
              E[0][2] * (E[1][0] * E[2][1] - E[1][1] * E[2][0]);
    double fact = 1.0;
    for (int k = 2; k <= n; ++k) fact *= k;
    return std::abs(det) / fact;
}

inline Point simplex_centroid(const std::array<Point, kMaxDim + 1>& v, int n) {
    Point c{};
    for (int k = 0; k < n; ++k) {
        double s = 0.0;
        for (int i = 0; i <= n; ++i) s += v[i][k];
        c[k] = s / (n + 1);
    }
    return c;
}

template <typename Fn>
void red_refine(const std::array<Point, kMaxDim + 1>& v, int n, Fn&& emit) {
    auto mid = [&](int a, int b) {
        Point p{};
        for (int k = 0; k < n; ++k) p[k] = 0.5 * (v[a][k] + v[b][k]);
        return p;
    };
    if (n == 2) {
        const Point m01 = mid(0, 1), m02 = mid(0, 2), m12 = mid(1, 2);
        emit({v[0], m01, m02, Point{}, Point{}});
        emit({m01, v[1], m12, Point{}, Point{}});
        emit({m02, m12, v[2], Point{}, Point{}});
        emit({m01, m12, m02, Point{}, Point{}});
        return;
    }
    const Point m01 = mid(0, 1), m02 = mid(0, 2), m03 = mid(0, 3);
    const Point m12 = mid(1, 2), m13 = mid(1, 3), m23 = mid(2, 3);
    emit({v[0], m01, m02, m03, Point{}});
    emit({m01, v[1], m12, m13, Point{}});
    emit({m02, m12, v[2], m23, Point{}});
    emit({m03, m13, m23, v[3], Point{}});
    // octahedron split along the m01-m23 diagonal
    emit({m01, m23, m02, m12, Point{}});
    emit({m01, m23, m12, m13, Point{}});
    emit({m01, m23, m13, m03, Point{}});
    emit({m01, m23, m03, m02, Point{}});
}

// integral of an integrand g over the simplex, refining dyadically toward the
// weight's origin singularity; `g` is evaluated pointwise elsewhere.
inline double singular_simplex_integral(const std::function<double(const Point&)>& g,
                                        const std::array<Point, kMaxDim + 1>& v, int n, int depth,
                                        double radial_alpha, double radial_scale,
                                        bool radial_closure) {
    if (!simplex_touches_origin(v, n))
        return g(simplex_centroid(v, n)) * simplex_volume(v, n);
    if (depth == 0) {
        const double vol = simplex_volume(v, n);
        if (radial_closure) {
            const double rho = std::pow(vol / unit_ball_volume(n), 1.0 / n);
            return radial_scale * unit_sphere_measure(n) * std::pow(rho, n + radial_alpha) /
                   (n + radial_alpha);
        }
        return g(simplex_centroid(v, n)) * vol;
    }
    double total = 0.0;
    red_refine(v, n, [&](const std::array<Point, kMaxDim + 1>& child) {
        total += singular_simplex_integral(g, child, n, depth - 1, radial_alpha, radial_scale,
                                           radial_closure);
    });
    return total;
}

}  // namespace detail

// int_e w^s for a weight over one element; dyadic refinement kicks in on
// elements touching the power weight's singular point.
inline double weight_power_simplex_integral(const Weight& w, double s,
                                            const std::array<Point, kMaxDim + 1>& v, int n,
                                            int depth = kDefaultSingularDepth) {
    const Weight ws = (s == 1.0) ? w : w.pow(s);
    auto g = [&](const Point& x) { return ws(x); };
    if (w.singular_at_origin()) {
        const double a_eff = w.alpha() * s;
        if (!(a_eff > -static_cast<double>(n))) throw std::runtime_error("non-integrable weight power");
        return detail::singular_simplex_integral(g, v, n, depth, a_eff, ws.scale(), ws.is_power());
    }
    return g(detail::simplex_centroid(v, n)) * detail::simplex_volume(v, n);
}

// ----- problem, assembly, solve -----

struct EllipticProblem {
    SimplicialMesh mesh;
    Weight mu;
    SmallMat A0;       // A(x) = mu(x) * A0
    double Lambda = 1.0;
    VectorFieldFn F;
    int singular_depth = kDefaultSingularDepth;

    EllipticProblem(SimplicialMesh m, Weight w, SmallMat a0, double lambda, VectorFieldFn f)
        : mesh(std::move(m)), mu(std::move(w)), A0(a0), Lambda(lambda), F(std::move(f)) {}
};

struct SparseSystem {
    std::vector<int> row_ptr, col;
    std::vector<double> val;
    std::vector<double> rhs;
    std::vector<int> dof_of_vertex;  // -1 for Dirichlet vertices
    std::vector<int> vertex_of_dof;
    std::vector<double> boundary_values;  // per vertex, 0 unless lifted
    std::size_t n_dofs = 0;
};

namespace detail {

inline std::array<Point, kMaxDim + 1> element_vertices(const SimplicialMesh& mesh, std::size_t e) {
    std::array<Point, kMaxDim + 1> v{};
    for (int i = 0; i <= mesh.dim; ++i) v[i] = mesh.vertices[mesh.elements[e][i]];
    return v;
}

}  // namespace detail

inline double element_weight_integral(const EllipticProblem& pb, std::size_t e) {
    return weight_power_simplex_integral(pb.mu, 1.0, detail::element_vertices(pb.mesh, e),
                                         pb.mesh.dim, pb.singular_depth);
}

inline SparseSystem assemble(const EllipticProblem& pb,
                             const std::vector<double>* dirichlet = nullptr) {
    const SimplicialMesh& mesh = pb.mesh;
    const int n = mesh.dim;
    SparseSystem sys;
    sys.dof_of_vertex.assign(mesh.n_vertices(), -1);
    sys.boundary_values.assign(mesh.n_vertices(), 0.0);
    for (std::size_t v = 0; v < mesh.n_vertices(); ++v) {
        if (mesh.is_boundary[v]) {
            if (dirichlet) sys.boundary_values[v] = (*dirichlet)[v];
        } else {
            sys.dof_of_vertex[v] = static_cast<int>(sys.vertex_of_dof.size());
            sys.vertex_of_dof.push_back(static_cast<int>(v));
        }
    }
    sys.n_dofs = sys.vertex_of_dof.size();

    // sparsity pattern from vertex adjacency
    std::vector<std::vector<int>> adj(sys.n_dofs);
    for (std::size_t e = 0; e < mesh.n_elements(); ++e)
        for (int i = 0; i <= n; ++i) {
            const int di = sys.dof_of_vertex[mesh.elements[e][i]];
            if (di < 0) continue;
            for (int j = 0; j <= n; ++j) {
                const int dj = sys.dof_of_vertex[mesh.elements[e][j]];
                if (dj >= 0) adj[di].push_back(dj);
            }
        }
    sys.row_ptr.assign(sys.n_dofs + 1, 0);
    for (std::size_t r = 0; r < sys.n_dofs; ++r) {
        auto& a = adj[r];
        std::sort(a.begin(), a.end());
        a.erase(std::unique(a.begin(), a.end()), a.end());
        sys.row_ptr[r + 1] = sys.row_ptr[r] + static_cast<int>(a.size());
    }
    sys.col.resize(sys.row_ptr.back());
    for (std::size_t r = 0; r < sys.n_dofs; ++r)
        std::copy(adj[r].begin(), adj[r].end(), sys.col.begin() + sys.row_ptr[r]);
    sys.val.assign(sys.col.size(), 0.0);
    sys.rhs.assign(sys.n_dofs, 0.0);

    auto entry = [&](int r, int c) -> double& {
        const auto b = sys.col.begin() + sys.row_ptr[r];
        const auto e = sys.col.begin() + sys.row_ptr[r + 1];
        const auto it = std::lower_bound(b, e, c);
        return sys.val[static_cast<std::size_t>(it - sys.col.begin())];
    };

    // per-chunk local contributions, merged in element order
    const std::size_t chunk = 512;
    const std::size_t nchunks = (mesh.n_elements() + chunk - 1) / chunk;
    struct Local {
        double K[kMaxDim + 1][kMaxDim + 1];
        double b[kMaxDim + 1];
    };
    std::vector<Local> locals(mesh.n_elements());
    parallel_for(
        mesh.n_elements(),
        [&](std::size_t b, std::size_t e) {
            for (std::size_t el = b; el < e; ++el) {
                const ElementGeometry g = element_geometry(mesh, el);
                const double wint = element_weight_integral(pb, el);
                Local& L = locals[el];
                for (int i = 0; i <= n; ++i) {
                    Point A0gj{};
                    for (int k = 0; k < n; ++k) {
                        double s = 0.0;
                        for (int l = 0; l < n; ++l) s += pb.A0(k, l) * g.grad[i][l];
                        A0gj[k] = s;
                    }
                    for (int j = 0; j <= i; ++j) {
                        const double kij = wint * dot(A0gj, g.grad[j], n);
                        L.K[i][j] = kij;
                        L.K[j][i] = kij;
                    }
                    L.b[i] = g.volume * dot(pb.F(g.centroid), g.grad[i], n);
                }
            }
        },
        chunk);
    (void)nchunks;
    for (std::size_t el = 0; el < mesh.n_elements(); ++el) {
        const auto& ids = mesh.elements[el];
        const Local& L = locals[el];
        for (int i = 0; i <= n; ++i) {
            const int di = sys.dof_of_vertex[ids[i]];
            if (di < 0) continue;
            double bi = L.b[i];
            for (int j = 0; j <= n; ++j) {
                const int dj = sys.dof_of_vertex[ids[j]];
                if (dj >= 0) entry(di, dj) += L.K[i][j];
                else bi -= L.K[i][j] * sys.boundary_values[ids[j]];
            }
            sys.rhs[di] += bi;
        }
    }

    // symmetry audit
    double maxdiag = 0.0;
    for (std::size_t r = 0; r < sys.n_dofs; ++r)
        for (int k = sys.row_ptr[r]; k < sys.row_ptr[r + 1]; ++k)
            if (sys.col[k] == static_cast<int>(r)) maxdiag = std::max(maxdiag, std::abs(sys.val[k]));
    for (std::size_t r = 0; r < sys.n_dofs; ++r)
        for (int k = sys.row_ptr[r]; k < sys.row_ptr[r + 1]; ++k) {
            const int c = sys.col[k];
            if (c <= static_cast<int>(r)) continue;
            const auto b = sys.col.begin() + sys.row_ptr[c];
            const auto e = sys.col.begin() + sys.row_ptr[c + 1];
            const auto it = std::lower_bound(b, e, static_cast<int>(r));
            const double vt = sys.val[static_cast<std::size_t>(it - sys.col.begin())];
            if (std::abs(sys.val[k] - vt) > 1e-12 * std::max(1.0, maxdiag))
                throw std::runtime_error("assembled matrix lost symmetry");
        }
    return sys;
}

// ----- deterministic Jacobi-preconditioned CG -----

struct SolverStats {
    int iterations = 0;
    double rel_residual = 0.0;
    double energy_lhs = 0.0;  // ||grad u_h||_{L^2 mu} via the stiffness quadrature
    double energy_rhs = 0.0;  // ||F/mu||_{L^2 mu}
};

struct DiscreteSolution {
    SimplicialMesh mesh;
    std::vector<double> u;                           // nodal, boundary included
    std::vector<std::array<double, kMaxDim>> grad;   // per element
    SolverStats stats;
};

namespace detail {

inline double det_dot(const std::vector<double>& a, const std::vector<double>& b) {
    // fixed-chunk compensated partials merged in order
    const std::size_t chunk = 4096;
    const std::size_t n = a.size();
    const std::size_t nchunks = (n + chunk - 1) / chunk;
    std::vector<double> partial(nchunks, 0.0);
    parallel_for(
        n,
        [&](std::size_t lo, std::size_t hi) {
            KahanSum s;
            for (std::size_t i = lo; i < hi; ++i) s.add(a[i] * b[i]);
            partial[lo / chunk] = s.value();
        },
        chunk);
    KahanSum total;
    for (double p : partial) total.add(p);
    return total.value();
}

inline void csr_matvec(const SparseSystem& sys, const std::vector<double>& x,
                       std::vector<double>& y) {
    parallel_for(sys.n_dofs, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t r = lo; r < hi; ++r) {
            double s = 0.0;
            for (int k = sys.row_ptr[r]; k < sys.row_ptr[r + 1]; ++k)
                s += sys.val[k] * x[sys.col[k]];
            y[r] = s;
        }
    });
}

}  // namespace detail

inline DiscreteSolution solve_cg(const EllipticProblem& pb, const SparseSystem& sys,
                                 double tol = 1e-10, int maxit = -1) {
    const std::size_t n = sys.n_dofs;
    if (maxit < 0) maxit = static_cast<int>(50.0 * std::sqrt(static_cast<double>(std::max<std::size_t>(n, 1)))) + 10;
    std::vector<double> diag(n, 1.0);
    for (std::size_t r = 0; r < n; ++r)
        for (int k = sys.row_ptr[r]; k < sys.row_ptr[r + 1]; ++k)
            if (sys.col[k] == static_cast<int>(r)) diag[r] = sys.val[k];
    for (std::size_t r = 0; r < n; ++r)
        if (!(diag[r] > 0.0)) throw std::runtime_error("non-SPD system: nonpositive diagonal");

    std::vector<double> x(n, 0.0), r = sys.rhs, z(n), p(n), Ap(n);
    const double bnorm = std::sqrt(detail::det_dot(r, r));
    SolverStats stats;
    if (bnorm > 0.0) {
        for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
        p = z;
        double rz = detail::det_dot(r, z);
        int it = 0;
        double rel = 1.0;
        for (; it < maxit; ++it) {
            detail::csr_matvec(sys, p, Ap);
            const double pAp = detail::det_dot(p, Ap);
            if (!(pAp > 0.0)) throw std::runtime_error("non-SPD system: p^T A p <= 0");
            const double alpha = rz / pAp;
            for (std::size_t i = 0; i < n; ++i) x[i] += alpha * p[i];
            for (std::size_t i = 0; i < n; ++i) r[i] -= alpha * Ap[i];
            rel = std::sqrt(detail::det_dot(r, r)) / bnorm;
            if (rel <= tol) { ++it; break; }
            for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
            const double rz_new = detail::det_dot(r, z);
            const double beta = rz_new / rz;
            rz = rz_new;
            for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
        }
        stats.iterations = it;
        stats.rel_residual = rel;
        if (rel > tol)
            throw std::runtime_error("cg iteration cap exceeded, rel residual " + std::to_string(rel));
    }

    DiscreteSolution sol;
    sol.mesh = pb.mesh;
    sol.u.assign(pb.mesh.n_vertices(), 0.0);
    for (std::size_t v = 0; v < pb.mesh.n_vertices(); ++v)
        sol.u[v] = (sys.dof_of_vertex[v] >= 0) ? x[sys.dof_of_vertex[v]] : sys.boundary_values[v];

    const int dim = pb.mesh.dim;
    sol.grad.assign(pb.mesh.n_elements(), {});
    KahanSum energy;
    std::vector<double> wints(pb.mesh.n_elements());
    parallel_for(pb.mesh.n_elements(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t e = lo; e < hi; ++e) {
            const ElementGeometry g = element_geometry(pb.mesh, e);
            std::array<double, kMaxDim> gr{};
            for (int i = 0; i <= dim; ++i) {
                const double ui = sol.u[pb.mesh.elements[e][i]];
                for (int k = 0; k < dim; ++k) gr[k] += ui * g.grad[i][k];
            }
            sol.grad[e] = gr;
            wints[e] = element_weight_integral(pb, e);
        }
    });
    for (std::size_t e = 0; e < pb.mesh.n_elements(); ++e) {
        Point gr{};
        for (int k = 0; k < dim; ++k) gr[k] = sol.grad[e][k];
        Point A0g{};
        for (int k = 0; k < dim; ++k) {
            double s = 0.0;
            for (int l = 0; l < dim; ++l) s += pb.A0(k, l) * gr[l];
            A0g[k] = s;
        }
        energy.add(wints[e] * dot(A0g, gr, dim));
    }
    stats.energy_lhs = std::sqrt(std::max(0.0, energy.value()));
    // ||F/mu||_{L^2 mu} = (sum_e |F(c_e)|^2 int_e mu^{-1})^{1/2}
    KahanSum data;
    for (std::size_t e = 0; e < pb.mesh.n_elements(); ++e) {
        const auto verts = detail::element_vertices(pb.mesh, e);
        const Point c = detail::simplex_centroid(verts, dim);
        const Point Fv = pb.F(c);
        data.add(dot(Fv, Fv, dim) *
                 weight_power_simplex_integral(pb.mu, -1.0, verts, dim, pb.singular_depth));
    }
    stats.energy_rhs = std::sqrt(std::max(0.0, data.value()));
    sol.stats = stats;
    return sol;
}

inline DiscreteSolution solve_cg(const EllipticProblem& pb, double tol = 1e-10, int maxit = -1,
                                 const std::vector<double>* dirichlet = nullptr) {
    const SparseSystem sys = assemble(pb, dirichlet);
    return solve_cg(pb, sys, tol, maxit);
}

// ----- weighted norms over meshes -----

// (sum_e |v_e|^p int_e mu)^{1/p} for element-constant values.
inline double weighted_lp_norm(const std::vector<double>& elem_values, const SimplicialMesh& mesh,
                               const Weight& mu, double p,
                               const std::function<bool(const Point&)>* element_filter = nullptr) {
    if (!(p >= 1.0)) throw std::invalid_argument("requires p >= 1");
    KahanSum acc;
    for (std::size_t e = 0; e < mesh.n_elements(); ++e) {
        const auto verts = detail::element_vertices(mesh, e);
        if (element_filter && !(*element_filter)(detail::simplex_centroid(verts, mesh.dim))) continue;
        acc.add(std::pow(std::abs(elem_values[e]), p) *
                weight_power_simplex_integral(mu, 1.0, verts, mesh.dim));
    }
    return std::pow(acc.value(), 1.0 / p);
}

// ||F/mu||_{L^p mu} = (sum_e |F(c_e)|^p int_e mu^{1-p})^{1/p}
inline double data_over_weight_lp_norm(const SimplicialMesh& mesh, const Weight& mu,
                                       const VectorFieldFn& F, double p,
                                       const std::function<bool(const Point&)>* element_filter = nullptr) {
    KahanSum acc;
    for (std::size_t e = 0; e < mesh.n_elements(); ++e) {
        const auto verts = detail::element_vertices(mesh, e);
        const Point c = detail::simplex_centroid(verts, mesh.dim);
        if (element_filter && !(*element_filter)(c)) continue;
        const Point Fv = F(c);
        acc.add(std::pow(std::sqrt(dot(Fv, Fv, mesh.dim)), p) *
                weight_power_simplex_integral(mu, 1.0 - p, verts, mesh.dim));
    }
    return std::pow(acc.value(), 1.0 / p);
}

inline std::vector<double> gradient_magnitudes(const DiscreteSolution& sol) {
    std::vector<double> m(sol.mesh.n_elements());
    for (std::size_t e = 0; e < m.size(); ++e) {
        double s = 0.0;
        for (int k = 0; k < sol.mesh.dim; ++k) s += sol.grad[e][k] * sol.grad[e][k];
        m[e] = std::sqrt(s);
    }
    return m;
}

// ----- residual, convergence, and inequality checks -----

struct TestFunction {
    std::function<double(const Point&)> value;
    VectorFieldFn gradient;
};

inline double weak_residual_check(const DiscreteSolution& sol, const EllipticProblem& pb,
                                  const std::vector<TestFunction>& tests) {
    const int n = pb.mesh.dim;
    double worst = 0.0;
    for (const auto& t : tests) {
        KahanSum lhs_rhs, norm;
        for (std::size_t e = 0; e < pb.mesh.n_elements(); ++e) {
            const ElementGeometry g = element_geometry(pb.mesh, e);
            const double wint = element_weight_integral(pb, e);
            const Point gphi = t.gradient(g.centroid);
            Point A0g{};
            for (int k = 0; k < n; ++k) {
                double s = 0.0;
                for (int l = 0; l < n; ++l) s += pb.A0(k, l) * sol.grad[e][l];
                A0g[k] = s;
            }
            lhs_rhs.add(wint * dot(A0g, gphi, n) - g.volume * dot(pb.F(g.centroid), gphi, n));
            norm.add(g.volume * dot(gphi, gphi, n));
        }
        const double nrm = std::sqrt(norm.value());
        if (nrm > 0.0) worst = std::max(worst, std::abs(lhs_rhs.value()) / nrm);
    }
    return worst;
}

// H^1-seminorm error against a known gradient, edge-midpoint rule.
inline double h1_error(const DiscreteSolution& sol, const VectorFieldFn& exact_grad) {
    const int n = sol.mesh.dim;
    KahanSum acc;
    for (std::size_t e = 0; e < sol.mesh.n_elements(); ++e) {
        const auto verts = detail::element_vertices(sol.mesh, e);
        const double vol = detail::simplex_volume(verts, n);
        int pairs = 0;
        double local = 0.0;
        for (int i = 0; i <= n; ++i)
            for (int j = i + 1; j <= n; ++j) {
                Point mid{};
                for (int k = 0; k < n; ++k) mid[k] = 0.5 * (verts[i][k] + verts[j][k]);
                const Point ge = exact_grad(mid);
                double d2 = 0.0;
                for (int k = 0; k < n; ++k) {
                    const double d = sol.grad[e][k] - ge[k];
                    d2 += d * d;
                }
                local += d2;
                ++pairs;
            }
        acc.add(vol * local / pairs);
    }
    return std::sqrt(acc.value());
}

struct RegularityRow {
    int m = 0;
    int f_index = 0;
    double grad_norm = 0.0;
    double data_norm = 0.0;
    double cp = 0.0;
};

// C_p(h, F) = ||grad u_h||_{L^p mu} / ||F/mu||_{L^p mu} over a family of data
// and a mesh ladder; `interior_ratio` > 0 switches to the interior variant on
// concentric sub-boxes scaled 1 : interior_ratio.
inline std::vector<RegularityRow> regularity_constant(const Box& domain, const Weight& mu,
                                                      const SmallMat& A0, double Lambda,
                                                      const std::vector<VectorFieldFn>& fs, double p,
                                                      const std::vector<int>& mesh_ladder,
                                                      double cg_tol = 1e-10,
                                                      double interior_ratio = 0.0) {
    std::vector<RegularityRow> rows;
    for (int m : mesh_ladder) {
        SimplicialMesh mesh = triangulate_box(domain, m);
        for (std::size_t fi = 0; fi < fs.size(); ++fi) {
            EllipticProblem pb(mesh, mu, A0, Lambda, fs[fi]);
            const DiscreteSolution sol = solve_cg(pb, cg_tol);
            RegularityRow row;
            row.m = m;
            row.f_index = static_cast<int>(fi);
            const auto gmag = gradient_magnitudes(sol);
            if (interior_ratio > 0.0) {
                const Point c = domain.center();
                const double outer = 0.95 * domain.inradius();
                const double inner = outer / interior_ratio;
                auto in_box = [&](double half) {
                    return [c, half, &domain](const Point& x) {
                        for (int k = 0; k < domain.dim; ++k)
                            if (std::abs(x[k] - c[k]) > half) return false;
                        return true;
                    };
                };
                std::function<bool(const Point&)> fin = in_box(inner), fout = in_box(outer);
                const double lhs = weighted_lp_norm(gmag, mesh, mu, p, &fin);
                const double g2 = weighted_lp_norm(gmag, mesh, mu, 2.0, &fout);
                const double dat = data_over_weight_lp_norm(mesh, mu, pb.F, p, &fout);
                KahanSum mass;
                for (std::size_t e = 0; e < mesh.n_elements(); ++e) {
                    const auto verts = detail::element_vertices(mesh, e);
                    if (!fin(detail::simplex_centroid(verts, mesh.dim))) continue;
                    mass.add(weight_power_simplex_integral(mu, 1.0, verts, mesh.dim));
                }
                const double rhs = std::pow(mass.value(), 1.0 / p - 0.5) * g2 + dat;
                row.grad_norm = lhs;
                row.data_norm = rhs;
                row.cp = (rhs > 0.0) ? lhs / rhs : 0.0;
            } else {
                row.grad_norm = weighted_lp_norm(gmag, mesh, mu, p);
                row.data_norm = data_over_weight_lp_norm(mesh, mu, pb.F, p);
                if (!(row.data_norm > 0.0)) throw std::runtime_error("zero data norm");
                row.cp = row.grad_norm / row.data_norm;
            }
            rows.push_back(row);
        }
    }
    return rows;
}

// ----- Caccioppoli-type energy comparison -----

struct CaccioppoliReport {
    double lhs = 0.0;          // int |grad w|^2 phi^2 dmu
    double term_data = 0.0;    // int |F/mu|^2 phi^2 dmu
    double term_zero = 0.0;    // (1 + ||phi grad v||_inf^2) int w^2 |grad phi|^2 dmu
    double term_coeff = 0.0;   // ||phi grad v||_inf^2 int |A - A0|^2 mu^{-1}
    double bracket = 0.0;
    double ratio = 0.0;        // lhs / bracket
};

// u solves div[mu A0u grad u] = div F; v solves div[A0c grad v] = 0 on the
// same mesh; w = u - <u>_{mu} - v. phi is a smooth cutoff vanishing on the
// boundary.
inline CaccioppoliReport caccioppoli_check(const DiscreteSolution& u, const DiscreteSolution& v,
                                           const EllipticProblem& pb, const SmallMat& A0c,
                                           const TestFunction& phi) {
    const SimplicialMesh& mesh = pb.mesh;
    const int n = mesh.dim;
    // mu-average of u
    KahanSum unum, uden;
    std::vector<double> wints(mesh.n_elements());
    for (std::size_t e = 0; e < mesh.n_elements(); ++e) {
        const auto verts = detail::element_vertices(mesh, e);
        wints[e] = weight_power_simplex_integral(pb.mu, 1.0, verts, n);
        double uc = 0.0;
        for (int i = 0; i <= n; ++i) uc += u.u[mesh.elements[e][i]];
        unum.add(wints[e] * uc / (n + 1));
        uden.add(wints[e]);
    }
    const double ubar = unum.value() / uden.value();

    double sup_phigv = 0.0;
    for (std::size_t e = 0; e < mesh.n_elements(); ++e) {
        const ElementGeometry g = element_geometry(mesh, e);
        double gv = 0.0;
        for (int k = 0; k < n; ++k) gv += v.grad[e][k] * v.grad[e][k];
        sup_phigv = std::max(sup_phigv, std::abs(phi.value(g.centroid)) * std::sqrt(gv));
    }

    CaccioppoliReport rep;
    KahanSum lhs, tdata, tzero, tcoeff;
    for (std::size_t e = 0; e < mesh.n_elements(); ++e) {
        const auto verts = detail::element_vertices(mesh, e);
        const ElementGeometry g = element_geometry(mesh, e);
        const double ph = phi.value(g.centroid);
        const Point gph = phi.gradient(g.centroid);
        double gw2 = 0.0;
        for (int k = 0; k < n; ++k) {
            const double d = u.grad[e][k] - v.grad[e][k];
            gw2 += d * d;
        }
        lhs.add(gw2 * ph * ph * wints[e]);

        const Point Fv = pb.F(g.centroid);
        const double invmu = weight_power_simplex_integral(pb.mu, -1.0, verts, n);
        tdata.add(dot(Fv, Fv, n) * ph * ph * invmu);

        double wc = -ubar;
        for (int i = 0; i <= n; ++i) wc += (u.u[mesh.elements[e][i]] - v.u[mesh.elements[e][i]]) / (n + 1);
        tzero.add(wc * wc * dot(gph, gph, n) * wints[e]);

        // int_e |mu(x) A0 - A0c|_F^2 mu^{-1} expands into mu, 1, mu^{-1} moments
        double aa = 0.0, ab = 0.0, bb = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                aa += pb.A0(i, j) * pb.A0(i, j);
                ab += pb.A0(i, j) * A0c(i, j);
                bb += A0c(i, j) * A0c(i, j);
            }
        tcoeff.add(aa * wints[e] - 2.0 * ab * g.volume + bb * invmu);
    }
    rep.lhs = lhs.value();
    rep.term_data = tdata.value();
    rep.term_zero = (1.0 + sup_phigv * sup_phigv) * tzero.value();
    rep.term_coeff = sup_phigv * sup_phigv * tcoeff.value();
    rep.bracket = rep.term_data + rep.term_zero + rep.term_coeff;
    rep.ratio = (rep.bracket > 0.0) ? rep.lhs / rep.bracket : 0.0;
    return rep;
}

// ----- weighted Sobolev–Poincaré check -----

struct PoincareReport {
    double lhs = 0.0;    // ((1/mu(B)) int_B |u-A|^{2s} dmu)^{1/2s}
    double rhs = 0.0;    // r ((1/mu(B)) int_B |grad u|^2 dmu)^{1/2}
    double ratio = 0.0;
    double centering = 0.0;  // the subtracted constant A
};

enum class PoincareCentering { MuAverage, LebesgueAverage };

inline PoincareReport poincare_check(const DiscreteSolution& u, const Weight& mu, const Ball& ball,
                                     double sigma, PoincareCentering centering) {
    if (!(sigma >= 1.0)) throw std::invalid_argument("requires sigma >= 1");
    const SimplicialMesh& mesh = u.mesh;
    const int n = mesh.dim;
    std::vector<std::size_t> in_ball;
    for (std::size_t e = 0; e < mesh.n_elements(); ++e) {
        const auto verts = detail::element_vertices(mesh, e);
        if (ball.contains(detail::simplex_centroid(verts, n), n)) in_ball.push_back(e);
    }
    if (in_ball.empty()) throw std::runtime_error("ball misses the mesh");

    KahanSum anum, aden, lebden;
    std::vector<double> wints(in_ball.size()), ucent(in_ball.size()), vols(in_ball.size());
    for (std::size_t k = 0; k < in_ball.size(); ++k) {
        const std::size_t e = in_ball[k];
        const auto verts = detail::element_vertices(mesh, e);
        wints[k] = weight_power_simplex_integral(mu, 1.0, verts, n);
        vols[k] = detail::simplex_volume(verts, n);
        double uc = 0.0;
        for (int i = 0; i <= n; ++i) uc += u.u[mesh.elements[e][i]];
        ucent[k] = uc / (n + 1);
        anum.add((centering == PoincareCentering::MuAverage ? wints[k] : vols[k]) * ucent[k]);
        aden.add(wints[k]);
        lebden.add(vols[k]);
    }
    const double A = (centering == PoincareCentering::MuAverage) ? anum.value() / aden.value()
                                                                 : anum.value() / lebden.value();
    KahanSum osc, grad;
    for (std::size_t k = 0; k < in_ball.size(); ++k) {
        const std::size_t e = in_ball[k];
        osc.add(std::pow(std::abs(ucent[k] - A), 2.0 * sigma) * wints[k]);
        double g2 = 0.0;
        for (int d = 0; d < n; ++d) g2 += u.grad[e][d] * u.grad[e][d];
        grad.add(g2 * wints[k]);
    }
    PoincareReport rep;
    rep.centering = A;
    const double muB = aden.value();
    rep.lhs = std::pow(osc.value() / muB, 1.0 / (2.0 * sigma));
    rep.rhs = ball.radius * std::sqrt(grad.value() / muB);
    rep.ratio = (rep.rhs > 0.0) ? rep.lhs / rep.rhs : 0.0;
    return rep;
}

// ----- sampling element data onto grids -----

// |grad u_h|^2 sampled at grid node centers (structured box meshes only).
inline GridScalarField sample_gradsq_to_grid(const DiscreteSolution& sol, const Box& box,
                                             int mesh_m, const UniformGrid& grid) {
    const int n = grid.dim();
    GridScalarField out(grid);
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
        const Point x = grid.node_center(i);
        std::array<int, kMaxDim> cell{};
        for (int k = 0; k < n; ++k) {
            const double t = (x[k] - box.lo[k]) / box.side(k) * mesh_m;
            cell[k] = std::clamp(static_cast<int>(t), 0, mesh_m - 1);
        }
        std::size_t e;
        if (n == 2) {
            const double fx = (x[0] - box.lo[0]) / box.side(0) * mesh_m - cell[0];
            const double fy = (x[1] - box.lo[1]) / box.side(1) * mesh_m - cell[1];
            const std::size_t base = 2 * (static_cast<std::size_t>(cell[0]) * mesh_m + cell[1]);
            e = base + (fx >= fy ? 0 : 1);
        } else {
            throw std::runtime_error("grid sampling implemented for dim 2");
        }
        double g2 = 0.0;
        for (int k = 0; k < n; ++k) g2 += sol.grad[e][k] * sol.grad[e][k];
        out.values[i] = g2;
    }
    return out;
}

}  // namespace wlab
