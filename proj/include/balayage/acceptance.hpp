#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "balayage/bmo.hpp"
#include "balayage/carleson.hpp"
#include "balayage/corpus.hpp"
#include "balayage/decomposition.hpp"
#include "balayage/hardy.hpp"
#include "balayage/potential.hpp"
#include "balayage/spectral.hpp"

namespace balayage::acceptance {

using json = nlohmann::json;

struct CriterionResult {
    int id = 0;
    std::string title;
    bool pass = false;
    json details = json::object();
    double seconds = 0.0;
};

namespace detail {

class Checks {
public:
    explicit Checks(json& out) : out_(out) {}
    /// Records a named condition with its measured value and returns it.
    bool check(const std::string& name, bool ok, double value) {
        out_["checks"][name] = {{"pass", ok}, {"value", value}};
        all_ = all_ && ok;
        return ok;
    }
    bool all() const noexcept { return all_; }

private:
    json& out_;
    bool all_ = true;
};

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline bool within(double a, double b, double rel) { return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)); }

struct Lab {
    Grid g;
    Potential V;
    SpectralDecomposition dec;
    CubeFamily fam;
    CriticalRadiusField rho;

    Lab(int dim, int m, double L, double v)
        : g(dim, m, L),
          V(v > 0 ? Potential::constant(g, v) : Potential::zero(g)),
          dec(SpectralDecomposition::compute(g, V)),
          fam(CubeFamily::three_lattice(g)),
          rho(critical_radius_field(V)) {}
};

}  // namespace detail

// 1: free kernels at the origin against the continuum values
inline CriterionResult free_kernel_anchors() {
    CriterionResult r{1, "free-kernel anchors"};
    detail::Checks c(r.details);
    const auto t0 = std::chrono::steady_clock::now();
    const Grid g(1, 512, 8.0);
    const auto dec = SpectralDecomposition::compute(g, Potential::zero(g));
    const auto i = static_cast<Eigen::Index>(g.size() / 2);
    auto centre = [&](const Eigen::MatrixXd& K) { return 0.5 * (K(i, i) + K(i - 1, i)); };
    const double p = centre(poisson_kernel_spectral(dec, 1.0).matrix), h = centre(heat_kernel(dec, 1.0).matrix);
    c.check("poisson_rel_err<=0.01", std::abs(p * std::numbers::pi - 1.0) <= 0.01, std::abs(p * std::numbers::pi - 1.0));
    const double heat_ref = 1.0 / std::sqrt(4.0 * std::numbers::pi);
    c.check("heat_rel_err<=0.01", std::abs(h / heat_ref - 1.0) <= 0.01, std::abs(h / heat_ref - 1.0));
    r.seconds = detail::seconds_since(t0);
    c.check("runtime<30s", r.seconds < 30.0, r.seconds);
    r.pass = c.all();
    return r;
}

// 2: subordinated against spectral Poisson kernels
inline CriterionResult subordination_consistency() {
    CriterionResult r{2, "subordination consistency"};
    detail::Checks c(r.details);
    const auto t0 = std::chrono::steady_clock::now();
    const Grid g(1, 128);
    const auto dec = SpectralDecomposition::compute(g, Potential::constant(g, 1.0));
    SubordinationSpec spec;
    spec.points = 256;
    double err = 0.0, drift = 0.0;
    bool converged = true;
    for (double t : {0.1, 1.0, 4.0}) {
        try {
            const auto sub = poisson_kernel_subordination(heat_family(dec), t, spec, 1e-7);
            const Eigen::MatrixXd exact = poisson_kernel_spectral(dec, t).matrix;
            err = std::max(err, (sub.kernel.matrix - exact).cwiseAbs().maxCoeff() / exact.cwiseAbs().maxCoeff());
            drift = std::max(drift, sub.drift);
        } catch (const ConvergenceError& e) {
            converged = false;
            drift = std::max(drift, e.drift());
        }
    }
    c.check("max_rel_err<=1e-6", converged && err <= 1e-6, err);
    c.check("doubling_drift<1e-7", converged && drift < 1e-7, drift);
    r.seconds = detail::seconds_since(t0);
    r.pass = c.all();
    return r;
}

// 3: domination by the free kernel, sub-Markov mass, semigroup law
inline CriterionResult domination_and_mass() {
    CriterionResult r{3, "domination, mass and semigroup"};
    detail::Checks c(r.details);
    const auto t0 = std::chrono::steady_clock::now();
    const Grid g(1, 256, 4.0);
    const auto dec = SpectralDecomposition::compute(g, Potential::constant(g, 1.0));
    double excess = 0.0, neg = 0.0, mass = 0.0, semigroup = 0.0;
    for (double t : {0.5, 1.0, 4.0}) {
        const auto P = poisson_kernel_spectral(dec, t);
        for (Eigen::Index a = 0; a < P.matrix.rows(); ++a)
            for (Eigen::Index b = 0; b < P.matrix.cols(); ++b) {
                const double d = g.coordinate(static_cast<long>(a)) - g.coordinate(static_cast<long>(b));
                excess = std::max(excess, P.matrix(a, b) - t / (std::numbers::pi * (t * t + d * d)));
            }
        neg = std::max(neg, -P.matrix.minCoeff());
        const Eigen::VectorXd m = P.mass();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (std::abs(g.point(i)[0]) <= 0.5 * g.half_width()) mass = std::max(mass, m[static_cast<Eigen::Index>(i)]);
    }
    for (auto make : {heat_kernel, poisson_kernel_spectral}) {
        const auto a = make(dec, 0.2), b = make(dec, 0.5), ab = make(dec, 0.7);
        semigroup = std::max(semigroup, (a.compose(b).matrix - ab.matrix).cwiseAbs().maxCoeff());
    }
    c.check("P_t<=p_t+1e-3", excess <= 1e-3, excess);
    c.check("P_t>=0", neg <= 1e-12, neg);
    c.check("interior_mass<1", mass < 1.0, mass);
    c.check("semigroup<=1e-10", semigroup <= 1e-10, semigroup);
    r.seconds = detail::seconds_since(t0);
    r.pass = c.all();
    return r;
}

// 4: critical radius closed forms and scaling
inline CriterionResult critical_radius_closed_forms() {
    CriterionResult r{4, "critical radius closed forms"};
    detail::Checks c(r.details);
    const auto t0 = std::chrono::steady_clock::now();
    const Grid g1(1, 256);
    const auto V1 = Potential::constant(g1, 1.0);
    const double r1 = critical_radius(V1, {0.3, 0, 0}).value;
    c.check("rho_1d_rel<=1e-3", std::abs(r1 * std::sqrt(2.0) - 1.0) <= 1e-3, std::abs(r1 * std::sqrt(2.0) - 1.0));
    const Grid g3(3, 32);
    const double r3 = critical_radius(Potential::constant(g3, 1.0), {0, 0, 0}).value;
    const double ref3 = std::sqrt(3.0 / (4.0 * std::numbers::pi));
    c.check("rho_3d_rel<=1e-3", std::abs(r3 / ref3 - 1.0) <= 1e-3, std::abs(r3 / ref3 - 1.0));
    const double r4 = critical_radius(V1.scaled(4.0), {0.3, 0, 0}).value;
    const double tol = critical_radius_field(V1).relative_tolerance;
    c.check("rho(4V)=rho(V)/2", std::abs(2.0 * r4 / r1 - 1.0) <= 10.0 * tol, std::abs(2.0 * r4 / r1 - 1.0));
    r.seconds = detail::seconds_since(t0);
    r.pass = c.all();
    return r;
}

// 5: sweeps of Carleson measures are in BMO_L
inline CriterionResult balayage_bmo_suite() {
    CriterionResult r{5, "balayage into BMO_L"};
    detail::Checks c(r.details);
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> maxima;
    double scale_err = 0.0;
    for (int m : {256, 512}) {
        detail::Lab lab(1, m, 2.0, 1.0);
        std::mt19937_64 rng(2024);
        double mx = 0.0;
        for (int k = 0; k < 50; ++k) {
            const auto mu = random_carleson_measure(1, 10, 4.0 / 64.0, rng);
            const auto q = balayage_bmo_ratio(mu, lab.dec, lab.fam, lab.rho);
            mx = std::max(mx, q.ratio);
            if (k < 10) {
                const auto q7 = balayage_bmo_ratio(mu.scaled(7.0), lab.dec, lab.fam, lab.rho);
                scale_err = std::max(scale_err, std::abs(q7.ratio / q.ratio - 1.0));
            }
        }
        maxima.push_back(mx);
    }
    r.details["max_ratio"] = maxima;
    c.check("max_ratio_finite", std::isfinite(maxima[0]) && std::isfinite(maxima[1]), maxima[1]);
    c.check("refinement_var<0.2", detail::within(maxima[0], maxima[1], 0.2), std::abs(maxima[1] / maxima[0] - 1.0));
    c.check("scale_invariant<=1e-12", scale_err <= 1e-12, scale_err);
    r.seconds = detail::seconds_since(t0);
    r.pass = c.all();
    return r;
}

// 6: stopping-time construction over the corpus
inline CriterionResult stopping_time_construction() {
    CriterionResult r{6, "stopping-time construction"};
    detail::Checks c(r.details);
    const auto t0 = std::chrono::steady_clock::now();
    double packing = 0.0, sigma = 0.0, osc_var = 0.0;
    std::map<std::string, std::vector<double>> fitted;
    for (int m : {256, 512}) {
        detail::Lab lab(1, m, 4.0, 1.0);
        const DyadicCube Q0 = DyadicCube::root(1);
        // the coarse grid's generation cap at both resolutions, so both forests live on the same dyadic levels
        const int depth = default_depth_cap(Grid(1, 256, 4.0), Q0);
        for (const auto& name : corpus::stopping_corpus()) {
            const auto f = corpus::by_name(lab.g, name);
            const double norm = bmo_L_norm(f, lab.fam, lab.rho).bmoL_norm;
            const HarmonicExtension u(lab.dec, f);
            const auto tc = choose_threshold(u, Q0, norm, depth);
            const auto forest = build_generations(u, Q0, tc.A, depth);
            const auto part = sawtooth_regions(forest, lab.g);
            const auto tiles = tile_all(part, forest, 8.0 * lab.g.half_width());
            const auto osc = check_oscillation_bound(u, forest, part, norm);
            packing = std::max(packing, packing_ratio(forest));
            const double s = sigma_measure_carleson(part, tiles).carleson_norm;
            sigma = std::max(sigma, s);
            fitted[name].push_back(osc.fitted);
            r.details["corpus"][name][std::to_string(m)] = {{"A", tc.A}, {"j", tc.j}, {"packing", packing_ratio(forest)},
                                                            {"oscillation_fitted", osc.fitted}, {"sigma_carleson", s},
                                                            {"cubes", forest.cubes.size()}};
        }
    }
    for (const auto& [name, v] : fitted) {
        const double var = v[0] == v[1] ? 0.0 : std::abs(v[1] - v[0]) / std::max(v[0], v[1]);
        osc_var = std::max(osc_var, var);
    }
    c.check("packing<=0.5", packing <= 0.5, packing);
    c.check("oscillation_fitted_var<=0.2", osc_var <= 0.2, osc_var);
    c.check("sigma_carleson<=16", sigma <= 16.0, sigma);
    r.seconds = detail::seconds_since(t0);
    r.pass = c.all();
    return r;
}

namespace detail {

/// Shared by 7 and 8, over the stopping corpus: residual at m = 512 and 1024, stability ratio, equivariance.
/// Both resolutions use the m = 512 generation cap, so a refinement pair compares the same dyadic forest.
inline void end_to_end(double v, Checks& c, json& details, bool check_v_terms) {
    std::map<std::string, std::vector<double>> res, stab;
    double seconds = 0.0, equivariance = 0.0, v_terms = 0.0, residual = 0.0;
    DecompositionConfig cfg;
    cfg.max_depth = default_depth_cap(Grid(1, 512, 4.0), DyadicCube::root(1));
    for (int m : {512, 1024}) {
        Lab lab(1, m, 4.0, v);
        for (const auto& name : corpus::stopping_corpus()) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto f = corpus::by_name(lab.g, name);
            const auto out = decompose(f, lab.dec, lab.fam, lab.rho, cfg);
            const auto rr = reconstruction_residual(f, out, lab.dec);
            res[name].push_back(rr.l1);
            stab[name].push_back(out.diagnostics.stability_ratio);
            v_terms = std::max({v_terms, out.I_sum.sup_norm(), out.III.sup_norm()});
            details["corpus"][name][std::to_string(m)] = {
                {"residual_l1", rr.l1}, {"floor_truncation_l1", out.diagnostics.floor_truncation_l1},
                {"stability_ratio", out.diagnostics.stability_ratio}, {"A", out.diagnostics.A}, {"cubes", out.forest.cubes.size()},
                {"g_sup", out.diagnostics.g_sup}, {"mu_carleson", out.diagnostics.mu_carleson}};
            if (m == 512) {
                residual = std::max(residual, rr.l1);
                const auto scaled = decompose(f * 3.0, lab.dec, lab.fam, lab.rho, cfg);
                const double e = equivariance_defect(out, scaled, 3.0);
                equivariance = std::max(equivariance, e);
            }
            seconds = std::max(seconds, seconds_since(t0));
        }
    }
    bool decreasing = true, finite = true;
    double var = 0.0;
    // a residual already at roundoff (the one-region sign bump reconstructs exactly) counts as decreasing
    for (const auto& [name, r] : res) decreasing = decreasing && (r[1] < r[0] || r[1] <= 1e-12);
    for (const auto& [name, s] : stab) {
        finite = finite && std::isfinite(s[0]) && std::isfinite(s[1]);
        var = std::max(var, std::abs(s[1] / s[0] - 1.0));
    }
    c.check("residual_l1_m512<=0.05", residual <= 0.05, residual);
    c.check("residual_decreases_m1024", decreasing, decreasing ? 1.0 : 0.0);
    c.check("stability_finite", finite, finite ? 1.0 : 0.0);
    c.check("stability_refinement_var<0.2", var < 0.2, var);
    c.check("scaling_equivariance<=1e-12", equivariance <= 1e-12, equivariance);
    c.check("runtime_per_function<300s", seconds < 300.0, seconds);
    if (check_v_terms) c.check("I_Q=III=0", v_terms == 0.0, v_terms);
}

}  // namespace detail

// 7: decomposition end to end with V = 1
inline CriterionResult decomposition_end_to_end() {
    CriterionResult r{7, "decomposition end to end"};
    detail::Checks c(r.details);
    const auto t0 = std::chrono::steady_clock::now();
    detail::end_to_end(1.0, c, r.details, false);
    r.seconds = detail::seconds_since(t0);
    r.pass = c.all();
    return r;
}

// 8: the same pipeline for V = 0
inline CriterionResult zero_potential_anchor() {
    CriterionResult r{8, "V = 0 regression anchor"};
    detail::Checks c(r.details);
    const auto t0 = std::chrono::steady_clock::now();
    detail::end_to_end(0.0, c, r.details, true);
    r.seconds = detail::seconds_since(t0);
    r.pass = c.all();
    return r;
}

// 9: heat-balayage transform
inline CriterionResult heat_balayage() {
    CriterionResult r{9, "heat-balayage transform"};
    detail::Checks c(r.details);
    const auto t0 = std::chrono::steady_clock::now();
    const Grid g(1, 128);
    const auto dec = SpectralDecomposition::compute(g, Potential::constant(g, 1.0));
    std::mt19937_64 rng(99);
    double mass = 0.0, sup = 0.0, ratio = 0.0;
    for (int k = 0; k < 20; ++k) {
        const auto mu = random_carleson_measure(1, 8, 4.0 / 64.0, rng);
        const auto res = heat_balayage_transform(mu);
        mass = std::max(mass, res.max_mass_defect);
        sup = std::max(sup, (sweep(dec, mu).values() - sweep(dec, res.nu, SweepKernel::heat_squared).values()).lpNorm<Eigen::Infinity>());
        ratio = std::max(ratio, carleson_norm(res.nu).carleson_norm / carleson_norm(mu).carleson_norm);
    }
    c.check("mass_defect<=1e-5", mass <= 1e-5, mass);
    c.check("sup_error<=1e-4", sup <= 1e-4, sup);
    c.check("carleson_ratio_finite", std::isfinite(ratio) && ratio > 0.0, ratio);
    r.seconds = detail::seconds_since(t0);
    r.pass = c.all();
    return r;
}

// 10: reproducing formula and Green identity
inline CriterionResult reproducing_and_green() {
    CriterionResult r{10, "reproducing formula and Green identity"};
    detail::Checks c(r.details);
    const auto t0 = std::chrono::steady_clock::now();
    const Grid g(1, 256);
    const auto dec = SpectralDecomposition::compute(g, Potential::constant(g, 1.0));
    const auto f = GridFunction::sample(g, [](const Point& p) { return std::exp(-4.0 * p[0] * p[0]) * (p[0] > 0.3 ? 2.0 : 1.0); });
    double exact = 0.0, quad = 0.0;
    for (double T : {0.05, 0.5, 5.0}) {
        const auto rr = reproducing_formula_residual(dec, f, T, 200);
        exact = std::max(exact, std::abs(rr.exact - rr.closed_form));
        quad = std::max(quad, rr.discrepancy);
    }
    c.check("spectral_residual_abs<=1e-10", exact <= 1e-10, exact);
    c.check("quadrature_rel<=1e-6", quad <= 1e-6, quad);

    const Grid gf(1, 512);
    const auto free = SpectralDecomposition::compute(gf, Potential::zero(gf));
    const auto bump = corpus::smooth_bump(gf);
    std::vector<double> res;
    for (double tmax : {4.0, 8.0, 16.0}) {
        GreenIdentitySpec spec;
        spec.t_max = tmax;
        res.push_back(green_identity_residual(free, bump, spec).residual);
    }
    r.details["green_residuals"] = res;
    c.check("green_residual<=0.02", res.back() <= 0.02, res.back());
    c.check("green_decreasing", res[1] < res[0] && res[2] < res[1], res[2] - res[1]);
    r.seconds = detail::seconds_since(t0);
    r.pass = c.all();
    return r;
}

// 11: H^1_L - BMO_L duality
inline CriterionResult duality() {
    CriterionResult r{11, "duality pairing"};
    detail::Checks c(r.details);
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> maxima;
    bool one_atom = true;
    for (int m : {128, 256}) {
        detail::Lab lab(1, m, 4.0, 1.0);
        const auto lat = HeightLattice::for_grid(lab.g);
        std::mt19937_64 rng(77);
        double mx = 0.0;
        for (const auto& gname : {"sign_bump", "dyadic_martingale:7", "eigen_mixture:3"}) {
            const auto gfun = corpus::by_name(lab.g, gname);
            const auto dg = decompose(gfun, lab.dec, lab.fam, lab.rho);
            for (int a = 0; a < 10; ++a) {
                const auto f = random_h1_atom(lab.g, lab.rho, 5, rng);
                mx = std::max(mx, duality_pairing_check(f, gfun, dg, lab.dec, lab.fam, lab.rho, lat).ratio);
            }
        }
        maxima.push_back(mx);
        // one atom at a lattice height over a grid point: |mass u(y0, t0)| <= mass P*f(x) on the cone base
        const auto f = random_h1_atom(lab.g, lab.rho, 4, rng);
        const HarmonicExtension u(lab.dec, f);
        const auto pstar = nontangential_maximal(u, lat);
        const auto heights = lat.heights();
        for (std::size_t k = 0; k < heights.size(); k += 3) {
            const std::size_t y0 = lab.g.size() / 2 + 3;
            AtomicMeasure mu(1);
            mu.add(lab.g.point(y0), heights[k], 0.6);
            const auto rep = carleson_embedding_check(u, pstar.l1, mu);
            for (std::size_t x = 0; x < lab.g.size(); ++x)
                if (std::abs(lab.g.point(x)[0] - lab.g.point(y0)[0]) <= heights[k] && rep.pairing > 0.6 * pstar.pstar[x]) one_atom = false;
        }
    }
    r.details["max_ratio"] = maxima;
    c.check("max_ratio_finite", std::isfinite(maxima[0]) && std::isfinite(maxima[1]), maxima[1]);
    c.check("refinement_var<0.2", detail::within(maxima[0], maxima[1], 0.2), std::abs(maxima[1] / maxima[0] - 1.0));
    c.check("one_atom_embedding", one_atom, one_atom ? 1.0 : 0.0);
    r.seconds = detail::seconds_since(t0);
    r.pass = c.all();
    return r;
}

inline std::vector<std::function<CriterionResult()>> all_criteria() {
    return {free_kernel_anchors,        subordination_consistency, domination_and_mass,      critical_radius_closed_forms,
            balayage_bmo_suite,         stopping_time_construction, decomposition_end_to_end, zero_potential_anchor,
            heat_balayage,              reproducing_and_green,     duality};
}

/// Runs criterion id (1-based); an exception becomes a failed result carrying its message.
inline CriterionResult run_criterion(int id) {
    const auto criteria = all_criteria();
    if (id < 1 || id > static_cast<int>(criteria.size())) throw UsageError("no criterion " + std::to_string(id));
    try {
        return criteria[static_cast<std::size_t>(id - 1)]();
    } catch (const std::exception& e) {
        CriterionResult r{id, "(threw)"};
        r.details["exception"] = e.what();
        return r;
    }
}

inline json to_json(const CriterionResult& r) {
    return {{"id", r.id}, {"title", r.title}, {"pass", r.pass}, {"seconds", r.seconds}, {"details", r.details}};
}

}  // namespace balayage::acceptance
