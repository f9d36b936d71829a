#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "balayage/bmo.hpp"
#include "balayage/carleson.hpp"
#include "balayage/decomposition.hpp"
#include "balayage/grid.hpp"
#include "balayage/spectral.hpp"

namespace balayage {

/// Geometric heights t_min 2^{k/per_octave} up to t_max. Doubling per_octave nests the lattice.
struct HeightLattice {
    double t_min = 0.0;
    double t_max = 0.0;
    int per_octave = 4;

    std::vector<double> heights() const {
        if (!(t_min > 0.0) || !(t_max >= t_min) || per_octave < 1) throw DomainError("bad height lattice");
        std::vector<double> out;
        for (int k = 0;; ++k) {
            const double t = t_min * std::exp2(static_cast<double>(k) / per_octave);
            if (t > t_max * (1 + 1e-12)) break;
            out.push_back(t);
        }
        return out;
    }

    static HeightLattice for_grid(const Grid& g, int per_octave = 4) { return {g.spacing(), 2.0 * g.half_width(), per_octave}; }
};

struct MaximalSample {
    std::size_t x = 0;
    std::size_t y = 0;
    double t = 0.0;
};

struct MaximalReport {
    GridFunction pstar;
    double l1 = 0.0;  ///< ||P* f||_1, the H^1_L norm on the lattice
    std::vector<MaximalSample> attained;  ///< per grid point
};

/// P* f(x) = max over lattice heights t and grid points y with |x - y| <= t of |u(y, t)|.
inline MaximalReport nontangential_maximal(const HarmonicExtension& u, const HeightLattice& lattice) {
    const Grid& g = u.decomposition().grid();
    const int n = g.dim();
    const double h = g.spacing();
    MaximalReport rep{GridFunction(g), 0.0, std::vector<MaximalSample>(g.size())};
    Eigen::VectorXd best = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(g.size()), -1.0);
    for (double t : lattice.heights()) {
        const Eigen::VectorXd U = u.at(t).cwiseAbs();
        const long r = static_cast<long>(std::floor(t / h + 1e-9));
        std::vector<MultiIndex> offsets;
        MultiIndex o{0, 0, 0};
        for (o[0] = -r; o[0] <= r; ++o[0])
            for (o[1] = n > 1 ? -r : 0; o[1] <= (n > 1 ? r : 0); ++o[1])
                for (o[2] = n > 2 ? -r : 0; o[2] <= (n > 2 ? r : 0); ++o[2]) {
                    const double d2 = static_cast<double>(o[0] * o[0] + o[1] * o[1] + o[2] * o[2]) * h * h;
                    if (d2 <= t * t * (1 + 1e-12)) offsets.push_back(o);
                }
        for (std::size_t i = 0; i < g.size(); ++i) {
            const MultiIndex xi = g.unflatten(i);
            for (const auto& off : offsets) {
                MultiIndex yi = xi;
                for (int d = 0; d < n; ++d) yi[d] += off[d];
                if (!g.contains_index(yi)) continue;
                const std::size_t j = g.flatten(yi);
                if (U[static_cast<Eigen::Index>(j)] > best[static_cast<Eigen::Index>(i)]) {
                    best[static_cast<Eigen::Index>(i)] = U[static_cast<Eigen::Index>(j)];
                    rep.attained[i] = {i, j, t};
                }
            }
        }
    }
    rep.pstar = GridFunction(g, best.cwiseMax(0.0));
    rep.l1 = rep.pstar.l1_norm();
    return rep;
}

struct EmbeddingReport {
    double ratio = 0.0;
    double pairing = 0.0;  ///< |sum mass u(y, t)|
    double carleson = 0.0;
    double pstar_l1 = 0.0;
    bool degenerate = false;
};

/// |sum over atoms of mass u(y, t)| against |||mu|||_c ||P* f||_1; atoms are read at their nearest grid point.
inline EmbeddingReport carleson_embedding_check(const HarmonicExtension& u, double pstar_l1, const AtomicMeasure& mu) {
    EmbeddingReport rep;
    const Grid& g = u.decomposition().grid();
    rep.pstar_l1 = pstar_l1;
    rep.carleson = carleson_norm(mu).carleson_norm;
    double s = 0.0;
    for (const auto& a : mu.atoms()) s += a.mass * u.at(g.nearest_flat(a.z.x), a.z.t);
    rep.pairing = std::abs(s);
    if (!(rep.carleson > 0.0) || !(pstar_l1 > 0.0)) {
        rep.degenerate = true;
        return rep;
    }
    rep.ratio = rep.pairing / (rep.carleson * pstar_l1);
    return rep;
}

struct DualityReport {
    double ratio = 0.0;         ///< |int f g| / (||f||_{H^1_L} ||g||_{BMO_L})
    double pairing = 0.0;       ///< |int f g|
    double bounded_term = 0.0;  ///< |int f g_b|
    double bounded_C = 0.0;     ///< bounded_term / (||f||_1 ||g_b||_inf), at most 1
    double sweep_term = 0.0;    ///< |int f S_mu| = |sum mass P_t f(y)|
    double embedding_C = 0.0;   ///< sweep_term / (|||mu|||_c ||P* f||_1)
    double split_defect = 0.0;  ///< |int f (g - g_b - S_mu)|, the reconstruction residual paired with f
    double h1_norm = 0.0;
    double bmo_norm = 0.0;
    bool degenerate = false;
};

/// Pairs f with g = g_b + S_mu through the two-term split: Hoelder on g_b, Carleson embedding on S_mu.
inline DualityReport duality_pairing_check(const GridFunction& f, const GridFunction& g, const DecompositionResult& dg,
                                           const SpectralDecomposition& dec, const CubeFamily& fam, const CriticalRadiusField& rho,
                                           const HeightLattice& lattice) {
    DualityReport rep;
    const Grid& grid = dec.grid();
    const HarmonicExtension u(dec, f);
    const MaximalReport pstar = nontangential_maximal(u, lattice);
    rep.h1_norm = pstar.l1;
    rep.bmo_norm = bmo_L_norm(g, fam, rho).bmoL_norm;
    if (!(rep.h1_norm > 0.0) || !(rep.bmo_norm > 0.0) || dg.degenerate) {
        rep.degenerate = true;
        return rep;
    }
    const double hn = grid.cell_volume();
    rep.pairing = std::abs(f.values().dot(g.values()) * hn);
    rep.ratio = rep.pairing / (rep.h1_norm * rep.bmo_norm);
    rep.bounded_term = std::abs(f.values().dot(dg.g.values()) * hn);
    const double gb = dg.g.sup_norm();
    rep.bounded_C = gb > 0.0 ? rep.bounded_term / (f.l1_norm() * gb) : 0.0;
    const EmbeddingReport emb = carleson_embedding_check(u, pstar.l1, dg.mu);
    rep.sweep_term = emb.pairing;
    rep.embedding_C = emb.ratio;
    const Eigen::VectorXd rest = g.values() - dg.g.values() - sweep(dec, dg.mu).values();
    rep.split_defect = std::abs(f.values().dot(rest) * hn);
    return rep;
}

// ---------------------------------------------------------------------------------------------
// H^1_L test functions: mean-zero atoms below the critical radius, plain bumps above it

/// L^1-normalized atom on a dyadic cube: plain |Q|^{-1} chi_Q when l(Q) >= rho(x_Q), otherwise the
/// mean-zero split into halves along the first axis.
inline GridFunction h1_atom(const Grid& g, const DyadicCube& q, const CriticalRadiusField& rho) {
    const Cube c = q.cube();
    const bool large = c.side >= rho.at(c.center());
    const IndexBox box = cells_in(g, q);
    if (box.count() < 2) throw ResolutionError("atom cube holds fewer than two cells");
    GridFunction a(g);
    const double w = 1.0 / (static_cast<double>(box.count()) * g.cell_volume());
    const double mid = c.center()[0];
    box.for_each(g, [&](std::size_t i) { a.values()[static_cast<Eigen::Index>(i)] = large ? w : (g.point(i)[0] < mid ? w : -w); });
    return a;
}

/// Random atom from the dyadic tree of [-1, 1]^n (levels 2..depth below Q0).
inline GridFunction random_h1_atom(const Grid& g, const CriticalRadiusField& rho, int depth, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> lev(2, std::max(2, depth));
    const int level = lev(rng);
    const long per = 1L << level;
    std::uniform_int_distribution<long> pos(per / 4, 3 * per / 4 - 1);
    MultiIndex idx{0, 0, 0};
    for (int d = 0; d < g.dim(); ++d) idx[d] = pos(rng);
    const DyadicCube root = DyadicCube::root(g.dim());
    const Cube rc = root.cube();
    return h1_atom(g, DyadicCube(g.dim(), level, idx, rc.lower, rc.side), rho);
}

}  // namespace balayage
