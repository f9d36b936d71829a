// Experiment runner: one subcommand per operation, one JSON config per run.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "balayage/acceptance.hpp"
#include "balayage/bmo.hpp"
#include "balayage/bounds.hpp"
#include "balayage/carleson.hpp"
#include "balayage/config.hpp"
#include "balayage/corpus.hpp"
#include "balayage/decomposition.hpp"
#include "balayage/hardy.hpp"
#include "balayage/io.hpp"
#include "balayage/potential.hpp"
#include "balayage/spectral.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace balayage;

namespace {

constexpr const char* kVersion = "0.1.0";

/// Output directory plus the artifact list that ends up in the manifest.
struct Run {
    ExperimentConfig cfg;
    fs::path out;
    json artifacts = json::array();
    json summary = json::object();

    fs::path path(const std::string& name) const { return out / name; }

    void record(const std::string& name, const std::string& operation) {
        std::ifstream in(path(name), std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        artifacts.push_back({{"file", name}, {"operation", operation}, {"fnv1a", io::fnv1a_hex(ss.str())}});
    }
    void json_artifact(const std::string& name, const std::string& operation, const json& j) {
        io::write_json(path(name), j);
        record(name, operation);
    }
};

/// Grid, potential and the objects every subcommand shares; the eigendecomposition is built on first use.
struct Setup {
    Grid g;
    Potential V;
    CriticalRadiusField rho;
    CubeFamily fam;
    std::optional<SpectralDecomposition> dec_;

    explicit Setup(const ExperimentConfig& c)
        : g(c.grid()), V(io::parse_potential(g, c.potential)), rho(critical_radius_field(V)), fam(CubeFamily::three_lattice(g, c.cube_min_side)) {}

    const SpectralDecomposition& dec() {
        if (!dec_) dec_ = SpectralDecomposition::compute(g, V);
        return *dec_;
    }
};

std::vector<AtomicMeasure> measure_corpus(const ExperimentConfig& c, const Grid& g) {
    if (!c.measure_csv.empty()) return {io::read_measure_csv(c.measure_csv, g.dim())};
    std::mt19937_64 rng(c.seed);
    std::vector<AtomicMeasure> out;
    for (int k = 0; k < c.measures; ++k) out.push_back(random_carleson_measure(g.dim(), c.measure_atoms, c.measure_t_min, rng));
    return out;
}

void cmd_kernels(Run& run) {
    Setup s(run.cfg);
    const auto& dec = s.dec();
    const std::size_t centre = s.g.nearest_flat({0.0, 0.0, 0.0});
    json rep = json::array();
    std::vector<Eigen::VectorXd> rows;
    std::vector<std::string> names;
    for (double t : run.cfg.t_values) {
        const KernelMatrix H = heat_kernel(dec, t);
        const KernelMatrix P = poisson_kernel_spectral(dec, t);
        const SubordinationResult sub = poisson_kernel_subordination(heat_family(dec), t);
        const double scale = std::max(P.matrix.cwiseAbs().maxCoeff(), 1e-300);
        const Eigen::VectorXd mass = P.mass();
        rep.push_back({{"t", t},
                       {"heat_centre", H.matrix(static_cast<Eigen::Index>(centre), static_cast<Eigen::Index>(centre))},
                       {"poisson_centre", P.matrix(static_cast<Eigen::Index>(centre), static_cast<Eigen::Index>(centre))},
                       {"poisson_mass_min", mass.minCoeff()},
                       {"poisson_mass_max", mass.maxCoeff()},
                       {"subordination_max_error", (sub.kernel.matrix - P.matrix).cwiseAbs().maxCoeff() / scale},
                       {"subordination_drift", sub.drift}});
        std::ostringstream tag;
        tag << t;
        rows.push_back(H.matrix.row(static_cast<Eigen::Index>(centre)).transpose());
        names.push_back("heat_t" + tag.str());
        rows.push_back(P.matrix.row(static_cast<Eigen::Index>(centre)).transpose());
        names.push_back("poisson_t" + tag.str());
        if (s.g.size() <= 1024) {
            io::write_kernel_csv(run.path("heat_t" + tag.str() + ".csv"), H);
            run.record("heat_t" + tag.str() + ".csv", "heat_kernel");
            io::write_kernel_csv(run.path("poisson_t" + tag.str() + ".csv"), P);
            run.record("poisson_t" + tag.str() + ".csv", "poisson_kernel_spectral");
        }
    }
    {
        auto out = io::open_out(run.path("kernel_centre_row.csv"));
        for (const auto& a : io::axis_names(s.g.dim())) out << a << ',';
        for (std::size_t k = 0; k < names.size(); ++k) out << names[k] << (k + 1 < names.size() ? "," : "\n");
        for (std::size_t i = 0; i < s.g.size(); ++i) {
            const Point x = s.g.point(i);
            for (int d = 0; d < s.g.dim(); ++d) out << x[d] << ',';
            for (std::size_t k = 0; k < rows.size(); ++k) out << rows[k][static_cast<Eigen::Index>(i)] << (k + 1 < rows.size() ? "," : "\n");
        }
    }
    run.record("kernel_centre_row.csv", "heat_kernel/poisson_kernel_spectral");
    run.json_artifact("kernels_report.json", "poisson_kernel_subordination", {{"grid", io::grid_json(s.g)}, {"kernels", rep}});
    run.summary["kernels"] = rep.size();
}

void cmd_rho(Run& run) {
    Setup s(run.cfg);
    io::write_grid_function_csv(run.path("rho.csv"), s.rho.values, "rho");
    run.record("rho.csv", "critical_radius_field");
    const json rep{{"grid", io::grid_json(s.g)},
                   {"rho_min", s.rho.values.values().minCoeff()},
                   {"rho_max", s.rho.values.values().maxCoeff()},
                   {"any_truncated", s.rho.any_truncated},
                   {"domain_radius", domain_radius(s.g)}};
    run.json_artifact("rho_report.json", "critical_radius_field", rep);
    run.summary = rep;
}

void cmd_bmo(Run& run) {
    Setup s(run.cfg);
    const auto& dec = s.dec();
    json rep = json::object();
    {
        auto out = io::open_out(run.path("bmo_report.csv"));
        out << "function,norm_kind,value\n";
        for (const auto& name : run.cfg.functions) {
            const GridFunction f = corpus::by_name(s.g, name);
            const BmoReport b = bmo_L_norm(f, s.fam, s.rho);
            const double classical = bmo_classical_norm(f, s.fam);
            const NormRatio pr = compare_bmoL_bmoP(f, dec, s.fam, s.rho);
            rep[name] = io::to_json(b);
            rep[name]["classical"] = classical;
            rep[name]["bmoP_norm"] = pr.numerator;
            rep[name]["bmoP_over_bmoL"] = pr.ratio;
            rep[name]["degenerate"] = pr.degenerate;
            out << name << ",bmoL," << b.bmoL_norm << '\n'
                << name << ",oscillation," << b.oscillation_norm << '\n'
                << name << ",average," << b.average_norm << '\n'
                << name << ",classical," << classical << '\n'
                << name << ",bmoP," << pr.numerator << '\n';
        }
    }
    run.record("bmo_report.csv", "bmo_L_norm/compare_bmoL_bmoP");
    run.json_artifact("bmo_report.json", "bmo_L_norm/compare_bmoL_bmoP", rep);
    run.summary["functions"] = run.cfg.functions.size();
}

void cmd_carleson(Run& run) {
    const Grid g = run.cfg.grid();
    json rep = json::array();
    const auto measures = measure_corpus(run.cfg, g);
    for (std::size_t k = 0; k < measures.size(); ++k) {
        const auto& mu = measures[k];
        const std::string name = "measure_" + std::to_string(k) + ".csv";
        io::write_measure_csv(run.path(name), mu);
        run.record(name, "measure corpus");
        json j = io::to_json(carleson_norm(mu), g.dim());
        j["measure"] = name;
        j["atoms"] = mu.size();
        rep.push_back(j);
    }
    run.json_artifact("carleson_report.json", "carleson_norm", rep);
    run.summary["measures"] = rep.size();
}

void cmd_balayage(Run& run) {
    Setup s(run.cfg);
    const auto& dec = s.dec();
    json rep = json::array();
    double max_ratio = 0.0;
    const auto measures = measure_corpus(run.cfg, s.g);
    for (std::size_t k = 0; k < measures.size(); ++k) {
        const auto& mu = measures[k];
        const NormRatio r = balayage_bmo_ratio(mu, dec, s.fam, s.rho);
        const HeatTransformResult ht = heat_balayage_transform(mu);
        const double nu_c = carleson_norm(ht.nu).carleson_norm;
        const GridFunction S = sweep(dec, mu);
        if (k == 0) {
            io::write_grid_function_csv(run.path("balayage.csv"), S, "S_mu");
            run.record("balayage.csv", "sweep");
        }
        if (!r.degenerate) max_ratio = std::max(max_ratio, r.ratio);
        rep.push_back({{"measure", k},
                       {"carleson_norm", r.denominator},
                       {"bmoL_of_sweep", r.numerator},
                       {"ratio", r.ratio},
                       {"degenerate", r.degenerate},
                       {"heat_mass_defect", ht.max_mass_defect},
                       {"heat_carleson_ratio", r.denominator > 0.0 ? nu_c / r.denominator : 0.0}});
    }
    run.json_artifact("balayage_report.json", "balayage_bmo_ratio/heat_balayage_transform", {{"measures", rep}, {"max_ratio", max_ratio}});
    run.summary["max_ratio"] = max_ratio;
}

void cmd_decompose(Run& run) {
    Setup s(run.cfg);
    const auto& dec = s.dec();
    const std::string name = run.cfg.functions.front();
    const GridFunction f = corpus::by_name(s.g, name);
    const DecompositionResult res = decompose(f, dec, s.fam, s.rho, run.cfg.decomposition);
    const ReconstructionResidual rr = reconstruction_residual(f, res, dec);
    io::write_grid_function_csv(run.path("g.csv"), res.g, "g");
    run.record("g.csv", "decompose");
    io::write_measure_csv(run.path("mu.csv"), res.mu);
    run.record("mu.csv", "decompose");
    json rep = io::to_json(res.diagnostics);
    rep["function"] = name;
    rep["degenerate"] = res.degenerate;
    rep["atoms"] = res.mu.size();
    rep["stopping_cubes"] = res.forest.cubes.size();
    rep["residuals"]["l1"] = rr.l1;
    rep["residuals"]["l2"] = rr.l2;
    run.json_artifact("decomposition_report.json", "decompose/reconstruction_residual", rep);
    run.summary = {{"function", name}, {"residual_l1", rr.l1}, {"atoms", res.mu.size()}, {"degenerate", res.degenerate}};
}

void cmd_verify_bounds(Run& run) {
    Setup s(run.cfg);
    const auto& dec = s.dec();
    KernelBoundParams kp;
    kp.sample_stride = run.cfg.bounds_sample_stride;
    VIntegralParams vp;
    vp.sample_stride = run.cfg.bounds_sample_stride;
    const BoundReport kb = verify_kernel_bounds(dec, &s.rho, kp);
    const BoundReport vb = verify_V_integrals(dec, s.V, s.rho, vp);
    json all = io::to_json(kb, s.g.dim());
    for (const auto& r : io::to_json(vb, s.g.dim())) all.push_back(r);
    run.json_artifact("bounds_report.json", "verify_kernel_bounds/verify_V_integrals", all);
    run.summary["records"] = all.size();
}

void cmd_duality(Run& run) {
    Setup s(run.cfg);
    const auto& dec = s.dec();
    const HeightLattice lat = run.cfg.lattice(s.g);
    std::mt19937_64 rng(run.cfg.seed);
    std::vector<GridFunction> atoms;
    for (int a = 0; a < run.cfg.h1_atoms; ++a) atoms.push_back(random_h1_atom(s.g, s.rho, run.cfg.h1_depth, rng));
    {
        const HarmonicExtension u(dec, atoms.front());
        const MaximalReport mr = nontangential_maximal(u, lat);
        io::write_grid_function_csv(run.path("pstar.csv"), mr.pstar, "pstar");
        run.record("pstar.csv", "nontangential_maximal");
        run.json_artifact("maximal_report.json", "nontangential_maximal", io::to_json(mr));
    }
    json rep = json::object();
    double max_ratio = 0.0;
    for (const auto& name : run.cfg.functions) {
        const GridFunction g = corpus::by_name(s.g, name);
        const DecompositionResult dg = decompose(g, dec, s.fam, s.rho, run.cfg.decomposition);
        json rows = json::array();
        for (const auto& f : atoms) {
            const DualityReport d = duality_pairing_check(f, g, dg, dec, s.fam, s.rho, lat);
            if (!d.degenerate) max_ratio = std::max(max_ratio, d.ratio);
            rows.push_back(io::to_json(d));
        }
        rep[name] = rows;
    }
    run.json_artifact("duality_report.json", "duality_pairing_check", {{"pairs", rep}, {"max_ratio", max_ratio}});
    run.summary["max_ratio"] = max_ratio;
}

void cmd_full_suite(Run& run) {
    std::vector<int> ids = run.cfg.criteria;
    if (ids.empty())
        for (int k = 1; k <= static_cast<int>(acceptance::all_criteria().size()); ++k) ids.push_back(k);
    json crit = json::array();
    json detail = json::array();
    bool all = true;
    for (int id : ids) {
        const auto r = acceptance::run_criterion(id);
        all = all && r.pass;
        crit.push_back({{"id", r.id}, {"title", r.title}, {"pass", r.pass}});
        json d = acceptance::to_json(r);
        d.erase("seconds");
        detail.push_back(d);
        std::cout << (r.pass ? "PASS" : "FAIL") << " criterion " << r.id << ": " << r.title << '\n';
    }
    run.json_artifact("suite_report.json", "acceptance criteria", detail);
    run.summary = {{"criteria", crit}, {"all_pass", all}};
}

using Command = void (*)(Run&);

int execute(const std::string& sub, Command cmd, const std::string& config_path, const std::string& out_flag) {
    Run run;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        run.cfg = config_path.empty() ? config_from_json(json::object()) : load_config(config_path);
        std::string out = run.cfg.output_dir;
        if (const char* env = std::getenv("BALAYAGE_OUTPUT_DIR"); env && *env) out = env;
        if (!out_flag.empty()) out = out_flag;
        run.out = out;
        fs::create_directories(run.out);
        cmd(run);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const GeometryError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const ResolutionError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        json diag{{"subcommand", sub}, {"error", e.what()}};
        if (const auto* ce = dynamic_cast<const ConvergenceError*>(&e)) {
            diag["kind"] = "convergence";
            diag["drift"] = ce->drift();
        } else {
            diag["kind"] = "consistency";
        }
        std::cerr << diag.dump(2) << '\n';
        if (!run.out.empty()) io::write_json(run.path("diagnostic.json"), diag);
        return 3;
    }
    const json resolved = to_json(run.cfg);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const json manifest{{"subcommand", sub},
                        {"config", resolved},
                        {"config_hash", io::fnv1a_hex(resolved.dump())},
                        {"versions",
                         {{"balayage", kVersion},
                          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." + std::to_string(EIGEN_MINOR_VERSION)},
                          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                          {"compiler", __VERSION__}}},
                        {"artifacts", run.artifacts},
                        {"summary", run.summary},
                        {"wall_time_s", wall}};
    io::write_json(run.path("manifest.json"), manifest);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Schroedinger-operator BMO, Carleson measures and balayage experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    std::string config_path, out_dir;
    const std::vector<std::pair<std::string, Command>> commands{
        {"kernels", cmd_kernels},   {"rho", cmd_rho},           {"bmo", cmd_bmo},
        {"carleson", cmd_carleson}, {"balayage", cmd_balayage}, {"decompose", cmd_decompose},
        {"verify-bounds", cmd_verify_bounds}, {"duality", cmd_duality}, {"full-suite", cmd_full_suite}};
    const std::map<std::string, std::string> help{
        {"kernels", "heat and Poisson kernels, subordination check"},
        {"rho", "critical radius field"},
        {"bmo", "BMO_L, classical and BMO_P norms over the function corpus"},
        {"carleson", "Carleson norms of the measure corpus"},
        {"balayage", "sweep S_mu, BMO_L ratio and heat-balayage transform"},
        {"decompose", "g + S_mu decomposition of the first corpus function"},
        {"verify-bounds", "fitted kernel and V-integral constants"},
        {"duality", "H^1_L / BMO_L pairing over random atoms"},
        {"full-suite", "every acceptance criterion with pass/fail"}};
    for (const auto& [name, cmd] : commands) {
        auto* sc = app.add_subcommand(name, help.at(name));
        sc->add_option("-c,--config", config_path, "JSON config file")->check(CLI::ExistingFile);
        sc->add_option("-o,--output-dir", out_dir, "output directory (overrides config and BALAYAGE_OUTPUT_DIR)");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    for (const auto& [name, cmd] : commands)
        if (app.got_subcommand(name)) return execute(name, cmd, config_path, out_dir);
    return 2;
}
