#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "balayage/grid.hpp"
#include "balayage/potential.hpp"
#include "balayage/spectral.hpp"

namespace balayage {

struct FamilyCube {
    Cube cube;
    IndexBox cells;
    int level = 0;  ///< side = 2L / 2^level for lattice cubes
    int shift = 0;  ///< 0, 1, 2: diagonal offset in thirds of the side
};

/// Dyadic lattice of the domain plus two copies shifted by one and two thirds of the side
/// (rounded to whole cells), together with the dyadic tree of Q0; cubes lie inside the domain.
class CubeFamily {
public:
    CubeFamily() = default;

    static CubeFamily three_lattice(const Grid& g, double min_side = 0.0) {
        CubeFamily fam;
        const double h = g.spacing();
        const double L = g.half_width();
        if (min_side <= 0.0) min_side = h;
        std::set<std::vector<long>> seen;
        auto add = [&](const Cube& c, int level, int shift) {
            // key on the exact integer cell box
            const IndexBox box = cells_in(g, c);
            if (box.count() == 0) return;
            std::vector<long> key;
            for (int d = 0; d < g.dim(); ++d) {
                key.push_back(box.lo[d]);
                key.push_back(box.hi[d]);
            }
            if (!seen.insert(key).second) return;
            fam.cubes_.push_back({c, box, level, shift});
        };
        for (int level = 0;; ++level) {
            const long cells = static_cast<long>(g.points_per_side()) >> level;
            if (cells < 1) break;
            const double side = cells * h;
            if (side < min_side * (1 - 1e-12)) break;
            for (int shift = 0; shift < 3; ++shift) {
                const long off = shift == 0 ? 0 : std::max(1L, std::lround(static_cast<double>(shift * cells) / 3.0));
                if (shift > 0 && cells < 3) break;
                const long count = static_cast<long>(g.points_per_side()) / cells;
                MultiIndex k{0, 0, 0};
                for (;;) {
                    Cube c;
                    c.dim = g.dim();
                    c.side = side;
                    bool inside = true;
                    for (int d = 0; d < g.dim(); ++d) {
                        const long lo_cell = off + k[d] * cells;
                        inside = inside && lo_cell + cells <= g.points_per_side();
                        c.lower[d] = -L + static_cast<double>(lo_cell) * h;
                    }
                    if (inside) add(c, level, shift);
                    int d = g.dim() - 1;
                    while (d >= 0) {
                        if (++k[d] < count) break;
                        k[d] = 0;
                        --d;
                    }
                    if (d < 0) break;
                }
            }
        }
        // dyadic tree of Q0 when Q0 is strictly inside the domain
        const DyadicCube root = DyadicCube::root(g.dim());
        if (L > 2.0 + 1e-12) {
            const int depth = max_resolvable_depth(g, root);
            for (const auto& q : make_dyadic_tree(g, root, depth))
                if (q.side() >= min_side * (1 - 1e-12)) add(q.cube(), -1 - q.level(), 0);
        }
        return fam;
    }

    static CubeFamily from_cubes(const Grid& g, const std::vector<Cube>& cubes) {
        CubeFamily fam;
        for (const auto& c : cubes) {
            const IndexBox box = cells_in(g, c);
            if (box.count() == 0) throw GeometryError("family cube contains no cell center");
            fam.cubes_.push_back({c, box, 0, 0});
        }
        return fam;
    }

    const std::vector<FamilyCube>& cubes() const noexcept { return cubes_; }
    std::size_t size() const noexcept { return cubes_.size(); }

private:
    std::vector<FamilyCube> cubes_;
};

namespace detail {

inline double box_mean(const GridFunction& f, const IndexBox& box) {
    double s = 0.0;
    box.for_each(f.grid(), [&](std::size_t i) { s += f[i]; });
    return s / static_cast<double>(box.count());
}

inline double box_mean_abs_dev(const GridFunction& f, const IndexBox& box, double c, double p = 1.0) {
    double s = 0.0;
    box.for_each(f.grid(), [&](std::size_t i) { s += std::pow(std::abs(f[i] - c), p); });
    return std::pow(s / static_cast<double>(box.count()), 1.0 / p);
}

}  // namespace detail

inline double bmo_classical_norm(const GridFunction& f, const CubeFamily& fam) {
    double best = 0.0;
    for (const auto& q : fam.cubes()) best = std::max(best, detail::box_mean_abs_dev(f, q.cells, detail::box_mean(f, q.cells)));
    return best;
}

struct BmoReport {
    double oscillation_norm = 0.0;
    double average_norm = 0.0;
    double bmoL_norm = 0.0;
    std::optional<Cube> oscillation_cube;
    std::optional<Cube> average_cube;
    bool average_vacuous = false;  ///< no family cube satisfies l(Q) > rho(x_Q)
};

/// A cube enters the average part iff l(Q) > rho(x_Q); rho truncated at the domain radius never qualifies.
inline BmoReport bmo_L_norm(const GridFunction& f, const CubeFamily& fam, const CriticalRadiusField& rho) {
    BmoReport rep;
    bool any_large = false;
    for (const auto& q : fam.cubes()) {
        const double mean = detail::box_mean(f, q.cells);
        const double osc = detail::box_mean_abs_dev(f, q.cells, mean);
        if (!rep.oscillation_cube || osc > rep.oscillation_norm) {
            rep.oscillation_norm = osc;
            rep.oscillation_cube = q.cube;
        }
        if (q.cube.side > rho.at(q.cube.center())) {
            any_large = true;
            const double avg = detail::box_mean_abs_dev(f, q.cells, 0.0);
            if (!rep.average_cube || avg > rep.average_norm) {
                rep.average_norm = avg;
                rep.average_cube = q.cube;
            }
        }
    }
    rep.average_vacuous = !any_large;
    rep.bmoL_norm = std::max(rep.oscillation_norm, rep.average_norm);
    return rep;
}

/// Kernel-family operator applied at time t.
using FamilyOperator = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>;

inline FamilyOperator as_operator(const KernelFamily& family) {
    return [family](double t, const Eigen::VectorXd& f) { return family.at(t).apply(f); };
}
inline FamilyOperator poisson_operator(const SpectralDecomposition& dec) {
    return [&dec](double t, const Eigen::VectorXd& f) { return dec.apply(poisson_multiplier(dec, t), f); };
}

/// sup over the family of mean_Q |f - A_{l(Q)} f|.
inline double bmo_A_norm(const GridFunction& f, const FamilyOperator& A, const CubeFamily& fam) {
    std::map<double, GridFunction> smoothed;
    double best = 0.0;
    for (const auto& q : fam.cubes()) {
        auto it = smoothed.find(q.cube.side);
        if (it == smoothed.end()) it = smoothed.emplace(q.cube.side, GridFunction(f.grid(), f.values() - A(q.cube.side, f.values()))).first;
        best = std::max(best, detail::box_mean_abs_dev(it->second, q.cells, 0.0));
    }
    return best;
}

inline double bmo_A_norm(const GridFunction& f, const KernelFamily& family, const CubeFamily& fam) {
    return bmo_A_norm(f, as_operator(family), fam);
}

struct AverageGrowthReport {
    double log_growth_C = 0.0;     ///< max |f_2Q| / ((1 + log(rho/l)) ||f||) over cubes with l < rho
    double log_growth_slope = 0.0; ///< slope of the per-level max |f_2Q| against 1 + log(rho/l)
    std::map<double, double> max_average_by_side;  ///< side -> max |f_2Q|
    std::map<double, double> oscillation_C;  ///< oscillation bound, per p
    std::map<double, double> average_C;      ///< average bound, per p (cubes with l >= rho)
    double bmoL_norm = 0.0;
};

inline AverageGrowthReport check_average_growth(const GridFunction& f, const CriticalRadiusField& rho, const CubeFamily& fam,
                                   const std::vector<double>& ps = {1.0, 2.0, 4.0}) {
    const Grid& g = f.grid();
    AverageGrowthReport rep;
    rep.bmoL_norm = bmo_L_norm(f, fam, rho).bmoL_norm;
    if (!(rep.bmoL_norm > 0.0)) throw DomainError("average growth checks need a nonzero BMO_L norm");
    std::map<double, std::pair<double, double>> per_side;  // side -> (envelope, max |f_2Q|)
    for (const auto& q : fam.cubes()) {
        const Point c = q.cube.center();
        const double r = rho.at(c);
        if (q.cube.side < r) {
            const Cube twice = q.cube.dilate(2.0);
            bool inside = true;
            for (int d = 0; d < g.dim(); ++d)
                inside = inside && twice.lower[d] >= -g.half_width() - 1e-12 && twice.lower[d] + twice.side <= g.half_width() + 1e-12;
            if (inside) {
                const double avg = std::abs(cube_average(f, twice));
                const double env = 1.0 + std::log(r / q.cube.side);
                rep.log_growth_C = std::max(rep.log_growth_C, avg / (env * rep.bmoL_norm));
                auto& slot = per_side[q.cube.side];
                if (avg >= slot.second) slot = {env, avg};
            }
        }
        const double mean = detail::box_mean(f, q.cells);
        for (double p : ps) {
            rep.oscillation_C[p] = std::max(rep.oscillation_C[p], detail::box_mean_abs_dev(f, q.cells, mean, p) / rep.bmoL_norm);
            if (q.cube.side >= r) rep.average_C[p] = std::max(rep.average_C[p], detail::box_mean_abs_dev(f, q.cells, 0.0, p) / rep.bmoL_norm);
            else rep.average_C.try_emplace(p, 0.0);
        }
    }
    for (const auto& [side, ea] : per_side) rep.max_average_by_side[side] = ea.second;
    if (per_side.size() >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (const auto& [side, ea] : per_side) {
            sx += ea.first;
            sy += ea.second;
            sxx += ea.first * ea.first;
            sxy += ea.first * ea.second;
        }
        const double k = static_cast<double>(per_side.size());
        rep.log_growth_slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    }
    return rep;
}

struct NormRatio {
    double ratio = 0.0;
    bool degenerate = false;
    double numerator = 0.0;
    double denominator = 0.0;
};

/// ||f||_{BMO_P} / ||f||_{BMO_L} with the Poisson semigroup of L.
inline NormRatio compare_bmoL_bmoP(const GridFunction& f, const SpectralDecomposition& dec, const CubeFamily& fam,
                                   const CriticalRadiusField& rho) {
    NormRatio r;
    r.denominator = bmo_L_norm(f, fam, rho).bmoL_norm;
    r.numerator = bmo_A_norm(f, poisson_operator(dec), fam);
    if (!(r.denominator > 0.0)) {
        r.degenerate = true;
        return r;
    }
    r.ratio = r.numerator / r.denominator;
    return r;
}

struct PoissonOscillationReport {
    double fitted_C = 0.0;
    double raw_sup = 0.0;  ///< sup before dividing by ||f||_{BMO_L}
    Point x{0.0, 0.0, 0.0};
    double t = 0.0;
};

/// sup over (x, t) of |P_t(f - f_{Q(x,t)})(x)| / ||f||_{BMO_L}, Q(x, t) the cube centered at x with side t.
inline PoissonOscillationReport check_poisson_oscillation(const GridFunction& f, const SpectralDecomposition& dec, const CubeFamily& fam,
                                  const CriticalRadiusField& rho, std::vector<double> t_values = {}, int stride = 1) {
    const Grid& g = f.grid();
    if (t_values.empty()) t_values = geometric_heights(g.spacing(), g.half_width());
    const double norm = bmo_L_norm(f, fam, rho).bmoL_norm;
    PoissonOscillationReport rep;
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(dec.size());
    for (double t : t_values) {
        const Eigen::VectorXd Pf = dec.apply(poisson_multiplier(dec, t), f.values());
        const Eigen::VectorXd P1 = dec.apply(poisson_multiplier(dec, t), one);
        for (std::size_t i = 0; i < g.size(); i += static_cast<std::size_t>(stride)) {
            Cube q;
            q.dim = g.dim();
            q.side = t;
            const Point x = g.point(i);
            for (int d = 0; d < g.dim(); ++d) q.lower[d] = x[d] - 0.5 * t;
            const IndexBox box = cells_in(g, q);
            if (box.count() == 0) continue;
            const double fq = detail::box_mean(f, box);
            const double v = std::abs(Pf[static_cast<Eigen::Index>(i)] - fq * P1[static_cast<Eigen::Index>(i)]);
            if (v > rep.raw_sup) {
                rep.raw_sup = v;
                rep.x = x;
                rep.t = t;
            }
        }
    }
    rep.fitted_C = norm > 0.0 ? rep.raw_sup / norm : 0.0;
    return rep;
}

}  // namespace balayage
