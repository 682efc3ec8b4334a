#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wlab/core.hpp"
#include "wlab/counterexample.hpp"
#include "wlab/fem.hpp"
#include "wlab/geometry.hpp"
#include "wlab/maximal.hpp"
#include "wlab/oscillation.hpp"
#include "wlab/reifenberg.hpp"
#include "wlab/weights.hpp"

namespace wlab {

using json = nlohmann::ordered_json;

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string config_hash(const json& config) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(config.dump())));
    return buf;
}

// Every report embeds the library version and the hash of the config that
// produced it.
inline json report_envelope(const json& config) {
    json j;
    j["version"] = kVersion;
    j["config_hash"] = config_hash(config);
    return j;
}

inline json to_json(const Point& p, int dim) {
    json a = json::array();
    for (int i = 0; i < dim; ++i) a.push_back(p[i]);
    return a;
}

inline json to_json(const Ball& b, int dim) {
    json j;
    j["center"] = to_json(b.center, dim);
    j["radius"] = b.radius;
    return j;
}

inline json to_json(const FamilyProvenance& f) {
    json j;
    j["stride"] = f.stride;
    j["r_min"] = f.r_min;
    j["q"] = f.q;
    j["levels"] = f.levels;
    j["seed"] = f.seed;
    return j;
}

inline json to_json(const ApEstimate& e, int dim) {
    json j;
    j["p"] = e.p;
    j["value"] = e.value;
    j["witness"] = to_json(e.witness, dim);
    j["family"] = to_json(e.provenance);
    j["note"] = "sampled lower estimate of the characteristic";
    return j;
}

inline json to_json(const ReverseHolderEstimate& e, int dim) {
    json j;
    j["gamma"] = e.gamma;
    j["constant"] = e.constant;
    j["beta"] = e.beta;
    j["tau_factor"] = e.tau_factor;
    j["varrho"] = e.varrho;
    j["flagged"] = e.flagged;
    j["witness"] = to_json(e.witness, dim);
    return j;
}

inline json to_json(const DoublingReport& r) {
    json j;
    j["lhs"] = r.lhs;
    j["rhs"] = r.rhs;
    j["rhs_as_printed"] = r.rhs_as_printed;
    j["pass"] = r.pass;
    j["p"] = r.p;
    j["ap_value"] = r.ap_value;
    return j;
}

inline json to_json(const BmoEstimate& e, int dim) {
    json j;
    j["value_sq"] = e.value_sq;
    j["R0"] = e.R0;
    j["witness"] = to_json(e.witness, dim);
    if (!e.per_entry.empty()) j["per_entry"] = e.per_entry;
    j["note"] = "sampled lower estimate";
    return j;
}

inline json to_json(const ClassMembership& c) {
    json j;
    j["delta"] = c.delta;
    j["R0"] = c.R0;
    j["elliptic_ok"] = c.elliptic_ok;
    j["bmo_value_sq"] = c.bmo_value_sq;
    j["member"] = c.member;
    return j;
}

inline json to_json(const MwReport& r) {
    json j;
    j["l2_side"] = r.l2_side;
    j["l1_side"] = r.l1_side;
    j["ratio"] = r.ratio;
    return j;
}

inline json to_json(const DistributionLadder& l) {
    json j;
    j["theta"] = l.theta;
    j["varpi"] = l.varpi;
    j["p"] = l.p;
    j["S"] = l.S;
    json terms = json::array();
    for (const auto& t : l.terms) {
        json row;
        row["j"] = t.j;
        row["level"] = t.level;
        row["measure"] = t.measure;
        terms.push_back(row);
    }
    j["terms"] = terms;
    return j;
}

inline json to_json(const SandwichReport& r) {
    json j = to_json(r.ladder);
    j["norm_p"] = r.norm_p;
    j["mu_U"] = r.mu_U;
    j["c_lower"] = r.c_lower;
    j["c_upper"] = r.c_upper;
    j["lower_margin"] = r.lower_margin;
    j["upper_margin"] = r.upper_margin;
    j["pass"] = r.pass;
    return j;
}

inline json to_json(const GoodLambdaReport& r) {
    json j;
    j["varpi"] = r.varpi;
    j["delta"] = r.delta;
    j["M0"] = r.M0;
    j["epsilon"] = r.epsilon;
    j["eps1"] = r.eps1;
    j["k_max"] = r.k_max;
    j["r0"] = r.r0;
    j["hyp_lhs"] = r.hyp_lhs;
    j["hyp_rhs"] = r.hyp_rhs;
    j["hypothesis_met"] = r.hypothesis_met;
    json rows = json::array();
    for (const auto& row : r.per_k) {
        json x;
        x["k"] = row.k;
        x["lhs"] = row.lhs;
        x["rhs"] = row.rhs;
        x["margin"] = row.margin;
        rows.push_back(x);
    }
    j["per_k"] = rows;
    return j;
}

inline json to_json(const WeakResidual& r) {
    json j;
    j["lhs"] = r.lhs;
    j["rhs"] = r.rhs;
    j["diff"] = r.diff;
    j["grad_phi_sup"] = r.grad_phi_sup;
    return j;
}

inline json to_json(const AnnulusScan& s) {
    json j;
    j["n"] = s.n;
    j["alpha"] = s.alpha;
    j["p"] = s.p;
    j["p_star"] = s.p_star;
    j["fitted_exponent"] = s.fitted_exponent;
    j["predicted_exponent"] = s.predicted_exponent;
    j["verdict"] = s.verdict;
    json rows = json::array();
    for (const auto& row : s.rows) {
        json x;
        x["k"] = row.k;
        x["I_k"] = row.integral;
        x["ratio"] = row.ratio;
        rows.push_back(x);
    }
    j["annuli"] = rows;
    return j;
}

inline json to_json(const ReifenbergEstimate& e, int dim) {
    json j;
    j["R0"] = e.R0;
    j["delta_hat"] = e.delta_hat;
    j["delta_shifted"] = e.delta_shifted;
    json worst;
    worst["x"] = to_json(e.worst.x, dim);
    worst["r"] = e.worst.r;
    worst["delta"] = e.worst.delta;
    j["worst"] = worst;
    json rows = json::array();
    for (const auto& row : e.profile) {
        json x;
        x["x"] = to_json(row.x, dim);
        x["r"] = row.r;
        x["delta"] = row.delta;
        rows.push_back(x);
    }
    j["profile"] = rows;
    j["note"] = e.note;
    return j;
}

inline json to_json(const CaccioppoliReport& r) {
    json j;
    j["lhs"] = r.lhs;
    j["term_data"] = r.term_data;
    j["term_zero"] = r.term_zero;
    j["term_coeff"] = r.term_coeff;
    j["bracket"] = r.bracket;
    j["ratio"] = r.ratio;
    return j;
}

inline json to_json(const PoincareReport& r) {
    json j;
    j["lhs"] = r.lhs;
    j["rhs"] = r.rhs;
    j["ratio"] = r.ratio;
    j["centering"] = r.centering;
    return j;
}

// ----- plain CSV and standalone SVG charts -----

inline void write_csv_rows(const std::string& path, const std::string& header,
                           const std::vector<std::vector<double>>& rows) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << header << "\n";
    char buf[32];
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", row[i]);
            os << buf << (i + 1 < row.size() ? "," : "");
        }
        os << "\n";
    }
}

struct SvgSeries {
    std::string label;
    std::vector<double> x, y;
};

// Minimal standalone line/scatter chart; no external plotting dependency.
inline void write_svg_chart(const std::string& path, const std::string& title,
                            const std::vector<SvgSeries>& series, bool log_y = false) {
    const int W = 640, H = 420, ml = 60, mr = 20, mt = 40, mb = 40;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            double yv = s.y[i];
            if (log_y) {
                if (!(yv > 0.0)) continue;
                yv = std::log10(yv);
            }
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, yv);
            ymax = std::max(ymax, yv);
        }
    if (!(xmax > xmin)) { xmax = xmin + 1.0; }
    if (!(ymax > ymin)) { ymax = ymin + 1.0; }
    auto X = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto Y = [&](double y) {
        if (log_y) y = std::log10(std::max(y, 1e-300));
        return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb);
    };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title
       << "</text>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\""
       << H - mb << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
       << "\" stroke=\"black\"/>\n";
    int ci = 0;
    for (const auto& s : series) {
        const char* color = colors[ci++ % 5];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) os << X(s.x[i]) << "," << Y(s.y[i]) << " ";
        os << "\"/>\n";
        for (std::size_t i = 0; i < s.x.size(); ++i)
            os << "<circle cx=\"" << X(s.x[i]) << "\" cy=\"" << Y(s.y[i])
               << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
        os << "<text x=\"" << W - mr - 5 << "\" y=\"" << mt + 16 * ci
           << "\" text-anchor=\"end\" font-size=\"12\" fill=\"" << color << "\">" << s.label
           << "</text>\n";
    }
    os << "</svg>\n";
}

}  // namespace wlab
