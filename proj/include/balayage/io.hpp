#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "balayage/bmo.hpp"
#include "balayage/bounds.hpp"
#include "balayage/carleson.hpp"
#include "balayage/decomposition.hpp"
#include "balayage/grid.hpp"
#include "balayage/hardy.hpp"
#include "balayage/potential.hpp"

namespace balayage::io {

using json = nlohmann::json;

// ---------------------------------------------------------------------------------------------
// CSV

inline std::ofstream open_out(const std::filesystem::path& p) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw UsageError("cannot write " + p.string());
    out << std::setprecision(17);
    return out;
}

inline std::vector<std::vector<double>> read_csv_rows(const std::filesystem::path& p, std::vector<std::string>* header = nullptr) {
    std::ifstream in(p);
    if (!in) throw UsageError("cannot read " + p.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (first) {
            first = false;
            if (header) *header = cells;
            continue;
        }
        std::vector<double> row;
        for (const auto& c : cells) {
            try {
                row.push_back(std::stod(c));
            } catch (const std::exception&) {
                throw UsageError("non-numeric CSV entry '" + c + "' in " + p.string());
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::vector<std::string> axis_names(int dim) {
    std::vector<std::string> n;
    for (int d = 0; d < dim; ++d) n.push_back("x" + std::to_string(d));
    return n;
}

/// Flat CSV, one row per grid point in flat order (last coordinate fastest): x0[,x1,x2],value.
inline void write_grid_function_csv(const std::filesystem::path& p, const GridFunction& f, const std::string& column = "value") {
    auto out = open_out(p);
    const Grid& g = f.grid();
    for (const auto& a : axis_names(g.dim())) out << a << ',';
    out << column << '\n';
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Point x = g.point(i);
        for (int d = 0; d < g.dim(); ++d) out << x[d] << ',';
        out << f[i] << '\n';
    }
}

inline GridFunction read_grid_function_csv(const std::filesystem::path& p, const Grid& g) {
    const auto rows = read_csv_rows(p);
    if (rows.size() != g.size()) throw UsageError("grid function CSV has " + std::to_string(rows.size()) + " rows, grid has " + std::to_string(g.size()));
    Eigen::VectorXd v(static_cast<Eigen::Index>(g.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != static_cast<std::size_t>(g.dim()) + 1) throw UsageError("grid function CSV row width mismatch");
        v[static_cast<Eigen::Index>(i)] = rows[i].back();
    }
    return GridFunction(g, v);
}

/// Atom rows: y0[,y1,y2],t,mass.
inline void write_measure_csv(const std::filesystem::path& p, const AtomicMeasure& mu) {
    auto out = open_out(p);
    for (int d = 0; d < mu.dim(); ++d) out << 'y' << d << ',';
    out << "t,mass\n";
    for (const auto& a : mu.atoms()) {
        for (int d = 0; d < mu.dim(); ++d) out << a.z.x[d] << ',';
        out << a.z.t << ',' << a.mass << '\n';
    }
}

inline AtomicMeasure read_measure_csv(const std::filesystem::path& p, int dim) {
    AtomicMeasure mu(dim);
    for (const auto& r : read_csv_rows(p)) {
        if (r.size() != static_cast<std::size_t>(dim) + 2) throw UsageError("measure CSV row width mismatch");
        Point x{0, 0, 0};
        for (int d = 0; d < dim; ++d) x[d] = r[static_cast<std::size_t>(d)];
        mu.add(x, r[static_cast<std::size_t>(dim)], r[static_cast<std::size_t>(dim) + 1]);
    }
    return mu;
}

/// Dense kernel matrix, one row per x, columns over y.
inline void write_kernel_csv(const std::filesystem::path& p, const KernelMatrix& K) {
    auto out = open_out(p);
    for (Eigen::Index i = 0; i < K.matrix.rows(); ++i) {
        for (Eigen::Index j = 0; j < K.matrix.cols(); ++j) out << (j ? "," : "") << K.matrix(i, j);
        out << '\n';
    }
}

// ---------------------------------------------------------------------------------------------
// JSON

inline json point_json(const Point& p, int dim) { return std::vector<double>(p.begin(), p.begin() + dim); }

inline json grid_json(const Grid& g) { return {{"n", g.dim()}, {"m", g.points_per_side()}, {"L", g.half_width()}}; }

inline json grid_function_json(const GridFunction& f) {
    return {{"grid", grid_json(f.grid())}, {"values", std::vector<double>(f.values().data(), f.values().data() + f.values().size())}};
}

inline Grid grid_from_json(const json& j) {
    try {
        return Grid(j.at("n").get<int>(), j.at("m").get<int>(), j.value("L", 2.0));
    } catch (const json::exception& e) {
        throw UsageError(std::string("bad grid spec: ") + e.what());
    } catch (const Error& e) {
        throw UsageError(std::string("bad grid spec: ") + e.what());
    }
}

inline GridFunction grid_function_from_json(const json& j) {
    const Grid g = grid_from_json(j.at("grid"));
    const auto v = j.at("values").get<std::vector<double>>();
    if (v.size() != g.size()) throw UsageError("grid function JSON size mismatch");
    return GridFunction(g, Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
}

inline json cube_json(const Cube& c) { return {{"lower", point_json(c.lower, c.dim)}, {"side", c.side}}; }

inline json to_json(const CarlesonReport& r, int dim) {
    Cube c = r.attaining_cube;
    c.dim = dim;
    return {{"carleson_norm", r.carleson_norm}, {"attaining_cube", cube_json(c)}, {"box_mass", r.box_mass}, {"atoms_in_box", r.attribution.size()}};
}

inline json to_json(const BmoReport& r) {
    json j{{"bmoL_norm", r.bmoL_norm}, {"oscillation_norm", r.oscillation_norm}, {"average_norm", r.average_norm}, {"average_vacuous", r.average_vacuous}};
    if (r.oscillation_cube) j["oscillation_cube"] = cube_json(*r.oscillation_cube);
    if (r.average_cube) j["average_cube"] = cube_json(*r.average_cube);
    return j;
}

inline json to_json(const BoundReport& r, int dim) {
    json arr = json::array();
    for (const auto& rec : r.records)
        arr.push_back({{"estimate_id", rec.estimate_id},
                       {"fitted_C", rec.fitted_C},
                       {"argmax_sample", {{"x", point_json(rec.argmax.x, dim)}, {"y", point_json(rec.argmax.y, dim)}, {"t", rec.argmax.t}}},
                       {"params", rec.params}});
    return arr;
}

inline json to_json(const DecompositionDiagnostics& d) {
    return {{"A", d.A},
            {"threshold_j", d.threshold_j},
            {"packing", d.packing},
            {"packing_ratios", d.packing_ratios},
            {"norms",
             {{"bmoL_f", d.bmo_norm},
              {"g_sup", d.g_sup},
              {"mu_carleson", d.mu_carleson},
              {"mu_data_carleson", d.mu_data_carleson},
              {"mu_smear_carleson", d.mu_smear_carleson},
              {"mu_ext_carleson", d.mu_ext_carleson},
              {"sigma_carleson", d.sigma_carleson},
              {"stability_ratio", d.stability_ratio}}},
            {"residuals",
             {{"l1", d.residual_l1}, {"l2", d.residual_l2}, {"floor_truncation_l1", d.floor_truncation_l1},
              {"identity_defect", d.identity_defect}, {"lateral_drift", d.lateral_drift}}},
            {"terms",
             {{"I_sum_sup", d.I_sum_sup},
              {"I_abs_sup", d.I_abs_sup},
              {"I_fitted_over_A_plus_f", d.I_fitted_A},
              {"I_fitted_over_f", d.I_fitted_f},
              {"h_sup", d.h_sup},
              {"h_fitted", d.h_fitted},
              {"III_sup", d.III_sup},
              {"oscillation_sup", d.oscillation_sup},
              {"oscillation_fitted", d.oscillation_fitted},
              {"lambda_fitted", d.lambda_fitted}}},
            {"exterior_constant", d.exterior_constant},
            {"orientation", "outward normals per region; horizontal side +1 = region top"},
            {"regions", d.regions},
            {"tiles", d.tiles}};
}

inline json to_json(const MaximalReport& r) {
    return {{"pstar_l1", r.l1}, {"pstar_sup", r.pstar.sup_norm()}};
}

inline json to_json(const DualityReport& r) {
    return {{"ratio", r.ratio},           {"pairing", r.pairing},       {"bounded_term", r.bounded_term}, {"bounded_C", r.bounded_C},
            {"sweep_term", r.sweep_term}, {"embedding_C", r.embedding_C}, {"split_defect", r.split_defect}, {"h1_norm", r.h1_norm},
            {"bmo_norm", r.bmo_norm},     {"degenerate", r.degenerate}};
}

inline void write_json(const std::filesystem::path& p, const json& j) {
    auto out = open_out(p);
    out << j.dump(2) << '\n';
}

inline json read_json(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw UsageError("cannot read " + p.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw UsageError("invalid JSON in " + p.string() + ": " + e.what());
    }
}

/// FNV-1a of a string, hex.
inline std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

// ---------------------------------------------------------------------------------------------
// potentials by spec: zero, constant:c, quadratic, well:depth,width, csv:path

inline Potential parse_potential(const Grid& g, const std::string& spec) {
    const auto colon = spec.find(':');
    const std::string name = spec.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
    auto number = [&](const std::string& s) {
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw UsageError("bad number '" + s + "' in potential spec '" + spec + "'");
        }
    };
    try {
        if (name == "zero") return Potential::zero(g);
        if (name == "constant") return Potential::constant(g, arg.empty() ? 1.0 : number(arg));
        if (name == "quadratic") return Potential::quadratic(g);
        if (name == "well") {
            const auto comma = arg.find(',');
            if (comma == std::string::npos) throw UsageError("well needs depth,width");
            return Potential::well(g, number(arg.substr(0, comma)), number(arg.substr(comma + 1)));
        }
        if (name == "csv") return Potential::from_samples(read_grid_function_csv(arg, g));
    } catch (const DomainError& e) {
        throw UsageError(std::string("invalid potential: ") + e.what());
    }
    throw UsageError("unknown potential '" + spec + "'");
}

}  // namespace balayage::io
