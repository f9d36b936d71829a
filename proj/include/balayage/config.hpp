#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "balayage/corpus.hpp"
#include "balayage/decomposition.hpp"
#include "balayage/errors.hpp"
#include "balayage/grid.hpp"
#include "balayage/hardy.hpp"
#include "balayage/io.hpp"

namespace balayage {

/// One experiment run. Every field has a default; a config file overrides any subset.
struct ExperimentConfig {
    int n = 1;
    int m = 256;
    double L = 4.0;
    std::string potential = "constant:1";

    // t-lattice: explicit kernel times, and the height lattice for P*
    std::vector<double> t_values{0.1, 1.0, 4.0};
    double lattice_t_min = 0.0;  ///< 0 selects h
    double lattice_t_max = 0.0;  ///< 0 selects 2L
    int lattice_per_octave = 4;

    std::string cube_family = "three_lattice";
    double cube_min_side = 0.0;

    std::vector<std::string> functions = corpus::stopping_corpus();
    std::string measure_csv;      ///< empty draws random Carleson measures
    int measures = 10;
    int measure_atoms = 10;
    double measure_t_min = 0.0625;
    int h1_atoms = 10;
    int h1_depth = 5;
    std::uint64_t seed = 1;

    DecompositionConfig decomposition;
    int bounds_sample_stride = 4;
    std::vector<int> criteria;    ///< full-suite selection; empty runs all

    std::string output_dir = "out";

    Grid grid() const { return Grid(n, m, L); }
    HeightLattice lattice(const Grid& g) const {
        HeightLattice h = HeightLattice::for_grid(g, lattice_per_octave);
        if (lattice_t_min > 0.0) h.t_min = lattice_t_min;
        if (lattice_t_max > 0.0) h.t_max = lattice_t_max;
        return h;
    }
};

namespace detail {

template <class T>
void take(const nlohmann::json& j, const char* key, T& out, std::set<std::string>& seen) {
    seen.insert(key);
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("config key '") + key + "': " + e.what());
    }
}

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& seen, const std::string& where) {
    for (const auto& [k, v] : j.items())
        if (!seen.count(k)) throw UsageError("unknown config key '" + where + k + "'");
}

inline nlohmann::json section(const nlohmann::json& j, const char* key, std::set<std::string>& seen) {
    seen.insert(key);
    if (!j.contains(key)) return nlohmann::json::object();
    if (!j.at(key).is_object()) throw UsageError(std::string("config key '") + key + "' must be an object");
    return j.at(key);
}

}  // namespace detail

/// Parses and validates; unknown keys and unresolvable specs are usage errors.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw UsageError("config must be a JSON object");
    ExperimentConfig c;
    std::set<std::string> top;
    {
        std::set<std::string> s;
        const auto g = detail::section(j, "grid", s);
        detail::take(g, "n", c.n, s);
        detail::take(g, "m", c.m, s);
        detail::take(g, "L", c.L, s);
        detail::reject_unknown(g, s, "grid.");
        top.insert("grid");
    }
    detail::take(j, "potential", c.potential, top);
    {
        std::set<std::string> s;
        const auto t = detail::section(j, "t_lattice", s);
        detail::take(t, "t_values", c.t_values, s);
        detail::take(t, "t_min", c.lattice_t_min, s);
        detail::take(t, "t_max", c.lattice_t_max, s);
        detail::take(t, "per_octave", c.lattice_per_octave, s);
        detail::reject_unknown(t, s, "t_lattice.");
        top.insert("t_lattice");
    }
    {
        std::set<std::string> s;
        const auto f = detail::section(j, "cube_family", s);
        detail::take(f, "kind", c.cube_family, s);
        detail::take(f, "min_side", c.cube_min_side, s);
        detail::reject_unknown(f, s, "cube_family.");
        top.insert("cube_family");
    }
    detail::take(j, "functions", c.functions, top);
    {
        std::set<std::string> s;
        const auto mu = detail::section(j, "measure", s);
        detail::take(mu, "csv", c.measure_csv, s);
        detail::take(mu, "count", c.measures, s);
        detail::take(mu, "atoms", c.measure_atoms, s);
        detail::take(mu, "t_min", c.measure_t_min, s);
        detail::reject_unknown(mu, s, "measure.");
        top.insert("measure");
    }
    {
        std::set<std::string> s;
        const auto h = detail::section(j, "h1", s);
        detail::take(h, "atoms", c.h1_atoms, s);
        detail::take(h, "depth", c.h1_depth, s);
        detail::reject_unknown(h, s, "h1.");
        top.insert("h1");
    }
    detail::take(j, "seed", c.seed, top);
    {
        std::set<std::string> s;
        const auto d = detail::section(j, "decomposition", s);
        auto& dc = c.decomposition;
        detail::take(d, "exterior_constant", dc.exterior_constant, s);
        detail::take(d, "lateral_nodes", dc.lateral_nodes, s);
        detail::take(d, "drift_tolerance", dc.drift_tolerance, s);
        detail::take(d, "max_depth", dc.max_depth, s);
        detail::take(d, "t_max_factor", dc.t_max_factor, s);
        detail::take(d, "threshold", dc.threshold, s);
        detail::take(d, "lambda_tile_samples", dc.lambda_tile_samples, s);
        detail::reject_unknown(d, s, "decomposition.");
        top.insert("decomposition");
    }
    {
        std::set<std::string> s;
        const auto b = detail::section(j, "bounds", s);
        detail::take(b, "sample_stride", c.bounds_sample_stride, s);
        detail::reject_unknown(b, s, "bounds.");
        top.insert("bounds");
    }
    detail::take(j, "criteria", c.criteria, top);
    detail::take(j, "output_dir", c.output_dir, top);
    detail::reject_unknown(j, top, "");

    // resolvability
    Grid g = [&] {
        try {
            return c.grid();
        } catch (const Error& e) {
            throw UsageError(std::string("bad grid: ") + e.what());
        }
    }();
    if (c.cube_family != "three_lattice") throw UsageError("cube_family.kind must be three_lattice");
    if (c.t_values.empty()) throw UsageError("t_lattice.t_values is empty");
    for (double t : c.t_values)
        if (!(t > 0.0)) throw UsageError("t_lattice.t_values must be positive");
    if (c.lattice_per_octave < 1) throw UsageError("t_lattice.per_octave must be >= 1");
    if (c.measures < 1 || c.measure_atoms < 1 || c.h1_atoms < 1) throw UsageError("corpus sizes must be >= 1");
    if (!(c.measure_t_min > 0.0)) throw UsageError("measure.t_min must be positive");
    if (c.bounds_sample_stride < 1) throw UsageError("bounds.sample_stride must be >= 1");
    if (c.decomposition.exterior_constant != "zero" && c.decomposition.exterior_constant != "top_value")
        throw UsageError("decomposition.exterior_constant must be zero or top_value");
    for (int id : c.criteria)
        if (id < 1 || id > 11) throw UsageError("criteria ids run from 1 to 11");
    if (c.functions.empty()) throw UsageError("functions is empty");
    for (const auto& f : c.functions) (void)corpus::by_name(Grid(c.n, 4, c.L), f);
    if (c.potential.rfind("csv:", 0) != 0) (void)io::parse_potential(g, c.potential);
    if (!c.measure_csv.empty() && !std::filesystem::exists(c.measure_csv)) throw UsageError("measure.csv not found: " + c.measure_csv);
    return c;
}

/// The resolved config with every default filled in; hashed into the manifest.
inline nlohmann::json to_json(const ExperimentConfig& c) {
    const auto& d = c.decomposition;
    return {{"grid", {{"n", c.n}, {"m", c.m}, {"L", c.L}}},
            {"potential", c.potential},
            {"t_lattice", {{"t_values", c.t_values}, {"t_min", c.lattice_t_min}, {"t_max", c.lattice_t_max}, {"per_octave", c.lattice_per_octave}}},
            {"cube_family", {{"kind", c.cube_family}, {"min_side", c.cube_min_side}}},
            {"functions", c.functions},
            {"measure", {{"csv", c.measure_csv}, {"count", c.measures}, {"atoms", c.measure_atoms}, {"t_min", c.measure_t_min}}},
            {"h1", {{"atoms", c.h1_atoms}, {"depth", c.h1_depth}}},
            {"seed", c.seed},
            {"decomposition",
             {{"exterior_constant", d.exterior_constant},
              {"lateral_nodes", d.lateral_nodes},
              {"drift_tolerance", d.drift_tolerance},
              {"max_depth", d.max_depth},
              {"t_max_factor", d.t_max_factor},
              {"threshold", d.threshold},
              {"lambda_tile_samples", d.lambda_tile_samples}}},
            {"bounds", {{"sample_stride", c.bounds_sample_stride}}},
            {"criteria", c.criteria},
            {"output_dir", c.output_dir}};
}

inline ExperimentConfig load_config(const std::filesystem::path& p) { return config_from_json(io::read_json(p)); }

}  // namespace balayage
