// Batch driver: each subcommand parses an experiment config (JSON file plus
// flag overrides), runs one module pipeline, and writes JSON/CSV/SVG reports
// into --out. Outputs are deterministic given (config, seed) at any --threads.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "wlab/report.hpp"

namespace fs = std::filesystem;
using wlab::json;

namespace {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void check_keys(const json& cfg, const std::set<std::string>& allowed) {
    for (auto it = cfg.begin(); it != cfg.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError("unknown config key: " + it.key());
}

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    if (is.peek() == std::ifstream::traits_type::eof()) throw ConfigError("empty config file");
    json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    return j;
}

double get_num(const json& cfg, const std::string& key, double fallback) {
    if (!cfg.contains(key)) return fallback;
    if (!cfg[key].is_number()) throw ConfigError("config key must be numeric: " + key);
    return cfg[key].get<double>();
}

int get_int(const json& cfg, const std::string& key, int fallback) {
    return static_cast<int>(get_num(cfg, key, fallback));
}

std::string get_str(const json& cfg, const std::string& key, const std::string& fallback) {
    if (!cfg.contains(key)) return fallback;
    if (!cfg[key].is_string()) throw ConfigError("config key must be a string: " + key);
    return cfg[key].get<std::string>();
}

std::vector<double> parse_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) out.push_back(std::stod(tok));
    }
    return out;
}

void write_report(const fs::path& out_dir, const std::string& name, const json& j) {
    fs::create_directories(out_dir);
    std::ofstream os(out_dir / (name + ".json"));
    os << j.dump(2) << "\n";
}

wlab::Box box_from_config(const json& cfg, int dim, double lo_default, double hi_default) {
    double lo = lo_default, hi = hi_default;
    if (cfg.contains("domain")) {
        const auto& d = cfg["domain"];
        if (!d.is_array() || d.size() != 2) throw ConfigError("domain must be [lo, hi]");
        lo = d[0].get<double>();
        hi = d[1].get<double>();
    }
    return wlab::Box::cube(lo, hi, dim);
}

// seeded scalar grid fields for the maximal / ladder experiments
wlab::GridScalarField make_scalar_field(const std::string& kind, const wlab::UniformGrid& g,
                                        std::uint64_t seed) {
    using namespace wlab;
    if (kind == "spike") {
        GridScalarField f(g);
        std::array<int, kMaxDim> c{};
        for (int i = 0; i < g.dim(); ++i) c[i] = g.m / 2;
        f.values[g.flat(c)] = 1.0;
        return f;
    }
    if (kind == "checkerboard")
        return GridScalarField::sample(g, [&](const Point& x) {
            int s = 0;
            for (int i = 0; i < g.dim(); ++i) s += static_cast<int>(std::floor((x[i] - g.box.lo[i]) / g.h(i)));
            return s % 2 == 0 ? 1.0 : -1.0;
        });
    if (kind == "halfplane")
        return GridScalarField::sample(g, [&](const Point& x) {
            return x[0] < 0.5 * (g.box.lo[0] + g.box.hi[0]) ? 1.0 : 0.0;
        });
    if (kind == "coordinate")
        return GridScalarField::sample(g, [](const Point& x) { return x[0]; });
    if (kind == "random") {
        GridScalarField f(g);
        SplitMix64 rng(seed);
        for (auto& v : f.values) v = rng.next_double();
        return f;
    }
    throw ConfigError("unknown field kind: " + kind);
}

// seeded smooth vector fields for the elliptic experiments
wlab::VectorFieldFn make_vector_field(const std::string& kind, int dim, std::uint64_t seed) {
    using namespace wlab;
    if (kind == "zero") return [](const Point&) { return Point{}; };
    if (kind == "grad_sine")
        return [](const Point& x) {
            return make_point(M_PI * std::cos(M_PI * x[0]) * std::sin(M_PI * x[1]),
                              M_PI * std::sin(M_PI * x[0]) * std::cos(M_PI * x[1]));
        };
    if (kind == "smooth") {
        SplitMix64 rng(seed);
        struct Term {
            double c;
            Point k;
            double phase;
        };
        auto terms = std::make_shared<std::vector<std::array<Term, kMaxDim>>>();
        terms->resize(3);
        for (auto& group : *terms)
            for (int d = 0; d < dim; ++d) {
                group[d].c = rng.uniform(-1.0, 1.0);
                for (int i = 0; i < dim; ++i) group[d].k[i] = rng.uniform(-2.0, 2.0);
                group[d].phase = rng.uniform(0.0, 2.0 * M_PI);
            }
        return [terms, dim](const Point& x) {
            Point F{};
            for (const auto& group : *terms)
                for (int d = 0; d < dim; ++d)
                    F[d] += group[d].c * std::sin(dot(group[d].k, x, dim) + group[d].phase);
            return F;
        };
    }
    throw ConfigError("unknown F kind: " + kind);
}

struct Common {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 1;
    int threads = 1;
    int grid = 0;       // 0 = take from config / default
    double tol = 0.0;   // 0 = take from config / default
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "JSON config file");
    cmd->add_option("--out", c.out_dir, "output directory");
    cmd->add_option("--seed", c.seed, "RNG seed");
    cmd->add_option("--threads", c.threads, "worker threads (results are identical at any count)");
    cmd->add_option("--grid", c.grid, "grid cells per axis");
    cmd->add_option("--tol", c.tol, "solver/check tolerance");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"numerical laboratory for degenerate elliptic weighted estimates"};
    app.require_subcommand(1);

    Common common;
    double flag_alpha = std::nan("");
    int flag_dim = 0;
    std::string flag_p;

    auto* ap = app.add_subcommand("ap", "Muckenhoupt characteristic of a power weight");
    auto* rh = app.add_subcommand("rh", "reverse Holder exponent estimate");
    auto* bmo = app.add_subcommand("bmo", "weighted mean-oscillation seminorm");
    auto* classcheck = app.add_subcommand("classcheck", "coefficient class membership");
    auto* maximal = app.add_subcommand("maximal", "weighted maximal operator ratios");
    auto* ladder = app.add_subcommand("ladder", "distribution-sum sandwich check");
    auto* goodlambda = app.add_subcommand("goodlambda", "level-set ladder on a solved instance");
    auto* solve = app.add_subcommand("solve", "P1 solve of the degenerate Dirichlet problem");
    auto* constant = app.add_subcommand("constant", "regularity-constant table over data/meshes");
    auto* caccioppoli = app.add_subcommand("caccioppoli", "energy comparison inequality");
    auto* poincare = app.add_subcommand("poincare", "weighted Sobolev-Poincare ratio");
    auto* counterexample = app.add_subcommand("counterexample", "explicit-solution identities and threshold");
    auto* reifenberg = app.add_subcommand("reifenberg", "boundary flatness profile");

    for (auto* cmd : {ap, rh, bmo, classcheck, maximal, ladder, goodlambda, solve, constant,
                      caccioppoli, poincare, counterexample, reifenberg}) {
        add_common(cmd, common);
        cmd->add_option("--alpha", flag_alpha, "power-weight exponent");
        cmd->add_option("--dim,--n", flag_dim, "space dimension");
        cmd->add_option("--p", flag_p, "integrability exponent(s), comma separated");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        json cfg = load_config(common.config_path);
        // flags override file values
        if (!std::isnan(flag_alpha)) cfg["alpha"] = flag_alpha;
        if (flag_dim > 0) cfg["dim"] = flag_dim;
        if (!flag_p.empty()) cfg["p"] = flag_p;
        if (common.grid > 0) cfg["grid"] = common.grid;
        if (common.tol > 0.0) cfg["tol"] = common.tol;
        if (!cfg.contains("seed")) cfg["seed"] = common.seed;
        wlab::set_thread_count(common.threads);
        const fs::path out = common.out_dir;
        using namespace wlab;

        if (*ap || *rh) {
            check_keys(cfg, {"alpha", "dim", "p", "grid", "seed", "stride", "r_min_cells", "q",
                             "levels", "domain", "gammas", "c_cap", "tol"});
            const int dim = get_int(cfg, "dim", 2);
            const double alpha = get_num(cfg, "alpha", 0.5);
            const int m = get_int(cfg, "grid", dim <= 2 ? 512 : 48);
            const Box box = box_from_config(cfg, dim, -1.0, 1.0);
            const UniformGrid grid(box, m);
            const int stride = get_int(cfg, "stride", std::max(1, m / 16));
            const double r_min = get_num(cfg, "r_min_cells", 4.0) * grid.max_h();
            const int levels = get_int(cfg, "levels", 6);
            const BallFamily fam = make_ball_family(grid, box, stride, r_min, get_num(cfg, "q", 2.0), levels);
            const Weight w = Weight::power(alpha, dim);
            json rep = report_envelope(cfg);
            if (*ap) {
                const double p = cfg.contains("p") && cfg["p"].is_string()
                                     ? parse_list(cfg["p"].get<std::string>()).at(0)
                                     : get_num(cfg, "p", 2.0);
                const ApEstimate est = ap_characteristic(w, fam, p);
                rep["ap"] = to_json(est, dim);
                rep["certified_upper_bound"] = power_ap_bound(dim, alpha);
                write_report(out, "ap", rep);
            } else {
                std::vector<double> gammas = {0.125, 0.25, 0.5, 1.0, 2.0, 4.0};
                if (cfg.contains("gammas")) gammas = cfg["gammas"].get<std::vector<double>>();
                const auto est = reverse_holder_estimate(w, fam, gammas, get_num(cfg, "c_cap", 10.0));
                rep["reverse_holder"] = to_json(est, dim);
                write_report(out, "rh", rep);
            }
            return 0;
        }

        if (*bmo || *classcheck) {
            check_keys(cfg, {"alpha", "dim", "grid", "seed", "R0", "f", "stride", "levels",
                             "Lambda", "delta", "matrix", "tol", "domain"});
            const int dim = get_int(cfg, "dim", 2);
            const double alpha = get_num(cfg, "alpha", 0.2);
            const int m = get_int(cfg, "grid", 256);
            const Box box = box_from_config(cfg, dim, -1.0, 1.0);
            const UniformGrid grid(box, m);
            const double R0 = get_num(cfg, "R0", 0.5);
            const Weight mu = Weight::power(alpha, dim);
            json rep = report_envelope(cfg);
            if (*bmo) {
                const std::string fkind = get_str(cfg, "f", "weight");
                GridScalarField f = (fkind == "weight")
                                        ? GridScalarField::sample(grid, [&](const Point& x) { return mu(x); })
                                        : make_scalar_field(fkind, grid, cfg["seed"].get<std::uint64_t>());
                const BallFamily fam = default_family_for(grid, box, R0);
                const BmoEstimate est = weighted_bmo_seminorm(f, mu, box, R0, fam);
                rep["bmo"] = to_json(est, dim);
                write_report(out, "bmo", rep);
                std::vector<std::vector<double>> rows;
                for (const auto& [ball, q] : est.per_ball)
                    rows.push_back({ball.center[0], ball.center[1], ball.radius, q});
                fs::create_directories(out);
                write_csv_rows((out / "bmo_per_ball.csv").string(), "cx,cy,r,quotient", rows);
            } else {
                const double Lambda = get_num(cfg, "Lambda", 1.0);
                const double delta = get_num(cfg, "delta", 0.1);
                const MatrixField A = MatrixField::sample(grid, Lambda, [&](const Point& x) {
                    SmallMat M = SmallMat::identity(dim);
                    const double v = mu(x);
                    for (int i = 0; i < dim; ++i) M(i, i) = v;
                    return M;
                });
                const ClassMembership c = coefficient_class_check(A, mu, Lambda, delta, R0, box);
                rep["classcheck"] = to_json(c);
                write_report(out, "classcheck", rep);
            }
            return 0;
        }

        if (*maximal || *ladder) {
            check_keys(cfg, {"alpha", "dim", "grid", "seed", "f", "p", "theta", "varpi", "lambdas",
                             "q", "tol", "domain"});
            const int dim = get_int(cfg, "dim", 2);
            const double alpha = get_num(cfg, "alpha", 0.0);
            const int m = get_int(cfg, "grid", 128);
            const Box box = box_from_config(cfg, dim, 0.0, 1.0);
            const UniformGrid grid(box, m);
            const Weight mu = Weight::power(alpha, dim);
            const std::string fkind = get_str(cfg, "f", "random");
            const GridScalarField f = make_scalar_field(fkind, grid, cfg["seed"].get<std::uint64_t>());
            json rep = report_envelope(cfg);
            if (*maximal) {
                const double p = cfg.contains("p") && cfg["p"].is_string()
                                     ? parse_list(cfg["p"].get<std::string>()).at(0)
                                     : get_num(cfg, "p", 2.0);
                std::vector<double> lambdas = {0.05, 0.1, 0.2, 0.4, 0.8};
                if (cfg.contains("lambdas")) lambdas = cfg["lambdas"].get<std::vector<double>>();
                rep["strong_pp_ratio"] = strong_pp_ratio(f, mu, p);
                rep["weak11_ratio"] = weak11_ratio(f, mu, lambdas);
                write_report(out, "maximal", rep);
            } else {
                const double theta = get_num(cfg, "theta", 1.0);
                const double varpi = get_num(cfg, "varpi", 2.0);
                const double p = cfg.contains("p") && cfg["p"].is_string()
                                     ? parse_list(cfg["p"].get<std::string>()).at(0)
                                     : get_num(cfg, "p", 2.0);
                const SandwichReport s = ladder_sandwich(f, theta, varpi, p, mu, box);
                rep["sandwich"] = to_json(s);
                write_report(out, "ladder", rep);
                std::vector<std::vector<double>> rows;
                for (const auto& t : s.ladder.terms)
                    rows.push_back({static_cast<double>(t.j), t.level, t.measure});
                fs::create_directories(out);
                write_csv_rows((out / "ladder_terms.csv").string(), "j,level,measure", rows);
            }
            return 0;
        }

        if (*goodlambda) {
            check_keys(cfg, {"alpha", "dim", "grid", "seed", "mesh_m", "varpi", "delta", "M0",
                             "epsilon", "k_max", "F", "tol", "domain"});
            const double alpha = get_num(cfg, "alpha", 0.2);
            const int mesh_m = get_int(cfg, "mesh_m", 64);
            const int m = get_int(cfg, "grid", 64);
            const Box box = box_from_config(cfg, 2, -1.0, 1.0);
            const Weight mu = Weight::power(alpha, 2);
            const auto F = make_vector_field(get_str(cfg, "F", "smooth"), 2, cfg["seed"].get<std::uint64_t>());
            EllipticProblem pb(triangulate_box(box, mesh_m), mu, SmallMat::identity(2), 1.0, F);
            const DiscreteSolution sol = solve_cg(pb, common.tol > 0 ? common.tol : 1e-10);
            const UniformGrid grid(box, m);
            GridScalarField gradsq = sample_gradsq_to_grid(sol, box, mesh_m, grid);
            GridScalarField datasq = GridScalarField::sample(grid, [&](const Point& x) {
                const Point Fv = F(x);
                const double mv = mu(x);
                return dot(Fv, Fv, 2) / (mv * mv);
            });
            const double varpi = get_num(cfg, "varpi", 2.0);
            const double eps = get_num(cfg, "epsilon", 0.05);
            const double N = goodlambda_normalization(gradsq, mu, box, varpi, eps);
            for (auto& v : gradsq.values) v /= N * N;
            for (auto& v : datasq.values) v /= N * N;
            const GoodLambdaReport rep_gl = goodlambda_ladder(
                gradsq, datasq, mu, box, varpi, get_num(cfg, "delta", 0.1), get_num(cfg, "M0", 2.0),
                eps, get_int(cfg, "k_max", 3));
            json rep = report_envelope(cfg);
            rep["normalization"] = N;
            rep["goodlambda"] = to_json(rep_gl);
            write_report(out, "goodlambda", rep);
            std::vector<std::vector<double>> rows;
            for (const auto& r : rep_gl.per_k)
                rows.push_back({static_cast<double>(r.k), r.lhs, r.rhs, r.margin});
            fs::create_directories(out);
            write_csv_rows((out / "goodlambda_per_k.csv").string(), "k,lhs,rhs,margin", rows);
            SvgSeries s1{"lhs", {}, {}}, s2{"rhs", {}, {}};
            for (const auto& r : rep_gl.per_k) {
                s1.x.push_back(r.k);
                s1.y.push_back(r.lhs);
                s2.x.push_back(r.k);
                s2.y.push_back(r.rhs);
            }
            write_svg_chart((out / "goodlambda.svg").string(), "level-set ladder", {s1, s2}, true);
            return 0;
        }

        if (*solve || *constant || *caccioppoli || *poincare) {
            check_keys(cfg, {"alpha", "dim", "grid", "seed", "domain", "mesh", "weight", "matrix",
                             "Lambda", "F", "p", "solver", "meshes", "family_size",
                             "interior_ratio", "ball", "sigma", "centering", "tol", "field"});
            const int dim = get_int(cfg, "dim", 2);
            const Box box = box_from_config(cfg, dim, -1.0, 1.0);
            double alpha = get_num(cfg, "alpha", 0.0);
            if (cfg.contains("weight")) {
                const auto& wj = cfg["weight"];
                if (get_str(wj, "kind", "power") != "power") throw ConfigError("weight.kind must be power");
                alpha = get_num(wj, "alpha", alpha);
            }
            const Weight mu = Weight::power(alpha, dim);
            const double Lambda = get_num(cfg, "Lambda", 1.0);
            const double tol = common.tol > 0 ? common.tol
                               : cfg.contains("solver") ? get_num(cfg["solver"], "tol", 1e-10)
                                                        : 1e-10;
            const std::string Fkind = cfg.contains("F") ? get_str(cfg["F"], "kind", "smooth") : "smooth";
            const auto F = make_vector_field(Fkind, dim, cfg["seed"].get<std::uint64_t>());
            json rep = report_envelope(cfg);

            if (*solve) {
                const int m = cfg.contains("mesh") ? get_int(cfg["mesh"], "m", 64) : get_int(cfg, "grid", 64);
                EllipticProblem pb(triangulate_box(box, m), mu, SmallMat::identity(dim), Lambda, F);
                const int maxit = cfg.contains("solver") ? get_int(cfg["solver"], "maxit", -1) : -1;
                const DiscreteSolution sol = solve_cg(pb, tol, maxit);
                const double p = cfg.contains("p") && cfg["p"].is_string()
                                     ? parse_list(cfg["p"].get<std::string>()).at(0)
                                     : get_num(cfg, "p", 2.0);
                const auto gmag = gradient_magnitudes(sol);
                rep["iterations"] = sol.stats.iterations;
                rep["rel_residual"] = sol.stats.rel_residual;
                rep["energy_lhs"] = sol.stats.energy_lhs;
                rep["energy_rhs"] = sol.stats.energy_rhs;
                rep["grad_lp_norm"] = weighted_lp_norm(gmag, pb.mesh, mu, p);
                rep["data_lp_norm"] = data_over_weight_lp_norm(pb.mesh, mu, F, p);
                write_report(out, "solve", rep);
                fs::create_directories(out);
                std::vector<std::vector<double>> vrows;
                for (std::size_t v = 0; v < pb.mesh.n_vertices(); ++v) {
                    std::vector<double> row;
                    for (int k = 0; k < dim; ++k) row.push_back(pb.mesh.vertices[v][k]);
                    row.push_back(sol.u[v]);
                    vrows.push_back(row);
                }
                write_csv_rows((out / "solution.csv").string(), dim == 2 ? "x,y,u" : "x,y,z,u", vrows);
                std::vector<std::vector<double>> grows;
                for (std::size_t e = 0; e < pb.mesh.n_elements(); ++e) {
                    std::vector<double> row = {static_cast<double>(e)};
                    for (int k = 0; k < dim; ++k) row.push_back(sol.grad[e][k]);
                    grows.push_back(row);
                }
                write_csv_rows((out / "gradient.csv").string(), dim == 2 ? "element,gx,gy" : "element,gx,gy,gz",
                               grows);
                return 0;
            }
            if (*constant) {
                std::vector<int> meshes = {32, 64};
                if (cfg.contains("meshes")) meshes = cfg["meshes"].get<std::vector<int>>();
                const int count = get_int(cfg, "family_size", 5);
                std::vector<VectorFieldFn> fs_list;
                for (int i = 0; i < count; ++i)
                    fs_list.push_back(make_vector_field("smooth", dim, cfg["seed"].get<std::uint64_t>() + i));
                const double p = cfg.contains("p") && cfg["p"].is_string()
                                     ? parse_list(cfg["p"].get<std::string>()).at(0)
                                     : get_num(cfg, "p", 2.0);
                const auto rows = regularity_constant(box, mu, SmallMat::identity(dim), Lambda,
                                                      fs_list, p, meshes, tol,
                                                      get_num(cfg, "interior_ratio", 0.0));
                json table = json::array();
                std::vector<std::vector<double>> csv;
                for (const auto& r : rows) {
                    json row;
                    row["m"] = r.m;
                    row["f_index"] = r.f_index;
                    row["grad_norm"] = r.grad_norm;
                    row["data_norm"] = r.data_norm;
                    row["cp"] = r.cp;
                    table.push_back(row);
                    csv.push_back({static_cast<double>(r.m), static_cast<double>(r.f_index),
                                   r.grad_norm, r.data_norm, r.cp});
                }
                rep["table"] = table;
                write_report(out, "constant", rep);
                fs::create_directories(out);
                write_csv_rows((out / "constant.csv").string(), "m,f_index,grad_norm,data_norm,cp", csv);
                return 0;
            }
            if (*caccioppoli) {
                const int m = get_int(cfg, "grid", 48);
                EllipticProblem pb(triangulate_box(box, m), mu, SmallMat::identity(dim), Lambda, F);
                const DiscreteSolution u = solve_cg(pb, tol);
                // constant-coefficient comparison solution with u's trace
                KahanSum anum, aden;
                for (std::size_t e = 0; e < pb.mesh.n_elements(); ++e) {
                    const double wint = element_weight_integral(pb, e);
                    anum.add(wint);
                    aden.add(element_geometry(pb.mesh, e).volume);
                }
                const double mu_avg = anum.value() / aden.value();
                SmallMat A0c = SmallMat::identity(dim);
                for (int i = 0; i < dim; ++i) A0c(i, i) = mu_avg;
                EllipticProblem pb0(pb.mesh, Weight::one(dim), A0c, Lambda,
                                    [](const Point&) { return Point{}; });
                const DiscreteSolution v = solve_cg(pb0, tol, -1, &u.u);
                const double cx = 0.5 * (box.lo[0] + box.hi[0]);
                const double cy = 0.5 * (box.lo[1] + box.hi[1]);
                const double half = 0.5 * box.side(0);
                TestFunction phi;
                phi.value = [=](const Point& x) {
                    const double sx = std::max(0.0, 1.0 - ((x[0] - cx) / half) * ((x[0] - cx) / half));
                    const double sy = std::max(0.0, 1.0 - ((x[1] - cy) / half) * ((x[1] - cy) / half));
                    return sx * sy;
                };
                phi.gradient = [=](const Point& x) {
                    const double sx = std::max(0.0, 1.0 - ((x[0] - cx) / half) * ((x[0] - cx) / half));
                    const double sy = std::max(0.0, 1.0 - ((x[1] - cy) / half) * ((x[1] - cy) / half));
                    return make_point(-2.0 * (x[0] - cx) / (half * half) * sy,
                                      -2.0 * (x[1] - cy) / (half * half) * sx);
                };
                rep["caccioppoli"] = to_json(caccioppoli_check(u, v, pb, A0c, phi));
                write_report(out, "caccioppoli", rep);
                return 0;
            }
            // poincare
            const int m = get_int(cfg, "grid", 96);
            SimplicialMesh mesh = triangulate_box(box, m);
            DiscreteSolution field;
            field.mesh = mesh;
            field.u.resize(mesh.n_vertices());
            const std::string fieldkind = get_str(cfg, "field", "coordinate");
            for (std::size_t v = 0; v < mesh.n_vertices(); ++v)
                field.u[v] = fieldkind == "coordinate" ? mesh.vertices[v][0]
                                                       : std::sin(mesh.vertices[v][0]);
            field.grad.resize(mesh.n_elements());
            for (std::size_t e = 0; e < mesh.n_elements(); ++e) {
                const ElementGeometry g = element_geometry(mesh, e);
                std::array<double, kMaxDim> gr{};
                for (int i = 0; i <= dim; ++i)
                    for (int k = 0; k < dim; ++k) gr[k] += field.u[mesh.elements[e][i]] * g.grad[i][k];
                field.grad[e] = gr;
            }
            Ball ball(box.center(), 0.45 * box.side(0));
            if (cfg.contains("ball")) {
                const auto& bj = cfg["ball"];
                Point c{};
                for (int k = 0; k < dim; ++k) c[k] = bj["center"][k].get<double>();
                ball = Ball(c, bj["radius"].get<double>());
            }
            const auto centering = get_str(cfg, "centering", "mu") == "mu"
                                       ? PoincareCentering::MuAverage
                                       : PoincareCentering::LebesgueAverage;
            rep["poincare"] = to_json(poincare_check(field, mu, ball, get_num(cfg, "sigma", 1.0), centering));
            write_report(out, "poincare", rep);
            return 0;
        }

        if (*counterexample) {
            check_keys(cfg, {"alpha", "dim", "n", "p", "seed", "k_lo", "k_hi", "corpus_seed", "tol"});
            const int n = cfg.contains("n") ? get_int(cfg, "n", 3) : get_int(cfg, "dim", 3);
            const double alpha = get_num(cfg, "alpha", 0.25);
            std::vector<double> ps = {10.0};
            if (cfg.contains("p")) {
                if (cfg["p"].is_string()) ps = parse_list(cfg["p"].get<std::string>());
                else ps = {cfg["p"].get<double>()};
            }
            const ExplicitField field(n, alpha);
            json rep = report_envelope(cfg);
            rep["n"] = n;
            rep["alpha"] = alpha;
            rep["p_star"] = wlab::integrability_threshold(n, alpha);
            json residuals = json::array();
            if (n == 3) {
                const auto corpus = test_function_corpus(3, get_int(cfg, "corpus_seed", 12345));
                for (const auto& phi : corpus) residuals.push_back(to_json(weak_residual(field, phi)));
            }
            rep["residuals"] = residuals;
            json scans = json::array();
            SvgSeries ratios{"I_{k+1}/I_k", {}, {}};
            for (double p : ps) {
                const AnnulusScan s = annulus_scan(field, p, get_int(cfg, "k_lo", 0), get_int(cfg, "k_hi", 12));
                scans.push_back(to_json(s));
                if (p == ps.front())
                    for (const auto& row : s.rows)
                        if (row.ratio > 0) {
                            ratios.x.push_back(row.k);
                            ratios.y.push_back(row.ratio);
                        }
            }
            rep["annulus_scans"] = scans;
            write_report(out, "counterexample", rep);
            fs::create_directories(out);
            write_svg_chart((out / "annuli.svg").string(), "dyadic annulus ratios", {ratios});
            return 0;
        }

        if (*reifenberg) {
            check_keys(cfg, {"shape", "spacing", "R0", "n_centers", "n_scales", "seed", "dim",
                             "points_csv", "mask_bin", "rotate", "tol"});
            const std::string shape = get_str(cfg, "shape", "square");
            const double spacing = get_num(cfg, "spacing", 0.005);
            BoundaryCloud cloud;
            if (shape == "halfspace") cloud = make_halfspace_cloud(get_int(cfg, "dim", 2), spacing);
            else if (shape == "square")
                cloud = make_box_boundary_cloud(Box::cube(0.0, 1.0, 2), spacing);
            else if (shape == "disk") cloud = make_disk_cloud(make_point(0.0, 0.0), 1.0, spacing);
            else if (shape == "mask") {
                cloud = cloud_from_mask(read_binary(get_str(cfg, "mask_bin", "")));
                if (cfg.contains("points_csv"))
                    cloud.points = load_points_csv(get_str(cfg, "points_csv", ""), cloud.dim);
            } else
                throw ConfigError("unknown shape: " + shape);
            if (cfg.contains("rotate")) cloud = rotate_cloud_2d(cloud, get_num(cfg, "rotate", 0.0));
            const auto est = flatness_profile(cloud, get_num(cfg, "R0", 0.25),
                                              get_int(cfg, "n_centers", 16), get_int(cfg, "n_scales", 4));
            json rep = report_envelope(cfg);
            rep["reifenberg"] = to_json(est, cloud.dim);
            write_report(out, "reifenberg", rep);
            std::vector<std::vector<double>> rows;
            for (const auto& r : est.profile)
                rows.push_back({r.x[0], r.x[1], r.r, r.delta});
            fs::create_directories(out);
            write_csv_rows((out / "reifenberg_profile.csv").string(), "x,y,r,delta", rows);
            return 0;
        }

        throw ConfigError("no subcommand selected");
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 1;
    }
}
