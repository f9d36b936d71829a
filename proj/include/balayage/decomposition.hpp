#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "balayage/bmo.hpp"
#include "balayage/carleson.hpp"
#include "balayage/grid.hpp"
#include "balayage/quadrature.hpp"
#include "balayage/spectral.hpp"

namespace balayage {

// ---------------------------------------------------------------------------------------------
// stopping-time forest

struct StoppingCube {
    DyadicCube cube;
    int generation = 0;
    int parent = -1;  ///< index into StoppingForest::cubes, -1 for Q0
    std::vector<int> children;
    double value = 0.0;  ///< u(z_Q), z_Q = (x_Q, l(Q))
};

struct StoppingForest {
    double threshold = 0.0;
    int depth_cap = 0;  ///< deepest dyadic level below Q0 where a cube may stop
    std::vector<StoppingCube> cubes;  ///< cubes[0] = Q0
    std::vector<std::vector<int>> generations;

    int max_generation() const noexcept { return static_cast<int>(generations.size()) - 1; }
    const StoppingCube& root() const { return cubes.front(); }
};

/// u at the top point of Q; an even cell count per side puts x_Q between cells, where the
/// multilinear interpolant is the mean of the 2^n central cells.
inline double stopping_value(const HarmonicExtension& u, const DyadicCube& q) {
    const Grid& g = u.decomposition().grid();
    const IndexBox box = cells_in(g, q);
    if (box.count() == 0) throw ResolutionError("dyadic cube holds no grid cell");
    IndexBox mid;
    mid.dim = g.dim();
    for (int d = 0; d < g.dim(); ++d) {
        const long n = box.hi[d] - box.lo[d];
        mid.lo[d] = box.lo[d] + (n - 1) / 2;
        mid.hi[d] = box.lo[d] + n / 2 + 1;
    }
    double s = 0.0;
    mid.for_each(g, [&](std::size_t i) { s += u.at(i, q.top_height()); });
    return s / static_cast<double>(mid.count());
}

/// Default generation cap: log2(cells of Q0 per side) - 2 levels below Q0.
inline int default_depth_cap(const Grid& g, const DyadicCube& Q0) { return std::max(0, max_resolvable_depth(g, Q0) - 2); }

namespace detail {

inline void link_generations(StoppingForest& forest) {
    forest.generations.clear();
    for (std::size_t i = 0; i < forest.cubes.size(); ++i) {
        const int k = forest.cubes[i].generation;
        if (static_cast<int>(forest.generations.size()) <= k) forest.generations.resize(static_cast<std::size_t>(k) + 1);
        forest.generations[static_cast<std::size_t>(k)].push_back(static_cast<int>(i));
    }
}

}  // namespace detail

/// G_{k+1} = maximal dyadic subcubes Q' of each Q in G_k with |u(z_Q) - u(z_Q')| > A, found top-down
/// so that no dyadic ancestor strictly between Q and Q' already qualifies.
inline StoppingForest build_generations(const HarmonicExtension& u, const DyadicCube& Q0, double A, int max_depth) {
    if (!(A > 0.0)) throw DomainError("threshold A must be positive");
    const Grid& g = u.decomposition().grid();
    if (max_depth < 0 || max_depth > max_resolvable_depth(g, Q0)) throw ResolutionError("generation depth finer than the grid");
    StoppingForest forest;
    forest.threshold = A;
    forest.depth_cap = max_depth;
    forest.cubes.push_back({Q0, 0, -1, {}, stopping_value(u, Q0)});
    for (std::size_t head = 0; head < forest.cubes.size(); ++head) {
        const int owner = static_cast<int>(head);
        const double c = forest.cubes[head].value;
        const int gen = forest.cubes[head].generation;
        std::vector<DyadicCube> stack = forest.cubes[head].cube.children();
        while (!stack.empty()) {
            const DyadicCube q = stack.back();
            stack.pop_back();
            if (q.level() - Q0.level() > max_depth) continue;
            const double v = stopping_value(u, q);
            if (std::abs(v - c) > A) {
                forest.cubes[static_cast<std::size_t>(owner)].children.push_back(static_cast<int>(forest.cubes.size()));
                forest.cubes.push_back({q, gen + 1, owner, {}, v});
            } else {
                for (auto& ch : q.children()) stack.push_back(ch);
            }
        }
    }
    detail::link_generations(forest);
    return forest;
}

/// Forest from an explicit list of stopping cubes (parents found by containment); values from u when given.
inline StoppingForest make_forest(const DyadicCube& Q0, std::vector<DyadicCube> stopping, double A = 1.0,
                                  const HarmonicExtension* u = nullptr) {
    std::sort(stopping.begin(), stopping.end());
    StoppingForest forest;
    forest.threshold = A;
    forest.cubes.push_back({Q0, 0, -1, {}, u ? stopping_value(*u, Q0) : 0.0});
    for (const auto& q : stopping) {
        if (!q.is_within(Q0) || q == Q0) throw GeometryError("stopping cube outside Q0");
        int parent = 0;
        for (std::size_t i = 1; i < forest.cubes.size(); ++i)
            if (q.is_within(forest.cubes[i].cube)) {
                if (q == forest.cubes[i].cube) throw GeometryError("duplicate stopping cube");
                parent = static_cast<int>(i);  // sorted by level, so the last hit is the deepest
            }
        const int idx = static_cast<int>(forest.cubes.size());
        forest.cubes.push_back({q, forest.cubes[static_cast<std::size_t>(parent)].generation + 1, parent, {}, u ? stopping_value(*u, q) : 0.0});
        forest.cubes[static_cast<std::size_t>(parent)].children.push_back(idx);
        forest.depth_cap = std::max(forest.depth_cap, q.level() - Q0.level());
    }
    detail::link_generations(forest);
    return forest;
}

/// Per stopping cube: sum of its stopping children's measures over its own.
inline std::vector<double> packing_ratios(const StoppingForest& forest) {
    std::vector<double> out;
    for (const auto& q : forest.cubes) {
        double s = 0.0;
        for (int c : q.children) s += forest.cubes[static_cast<std::size_t>(c)].cube.volume();
        out.push_back(s / q.cube.volume());
    }
    return out;
}

inline double packing_ratio(const StoppingForest& forest) {
    const auto r = packing_ratios(forest);
    return r.empty() ? 0.0 : *std::max_element(r.begin(), r.end());
}

struct ThresholdChoice {
    double A = 0.0;
    int j = 0;  ///< A = 2^j ||f||_{BMO_L}
    double bmo_norm = 0.0;
    double packing = 0.0;
    bool degenerate = false;
};

/// Smallest A in {2^j ||f||_{BMO_L}} whose forest packs to at most 1/2.
inline ThresholdChoice choose_threshold(const HarmonicExtension& u, const DyadicCube& Q0, double bmo_norm, int max_depth) {
    ThresholdChoice out;
    out.bmo_norm = bmo_norm;
    if (!(bmo_norm > 0.0)) {
        out.degenerate = true;
        return out;
    }
    for (int j = 0; j < 64; ++j) {
        const double A = std::ldexp(bmo_norm, j);
        const double p = packing_ratio(build_generations(u, Q0, A, max_depth));
        if (p <= 0.5) {
            out.A = A;
            out.j = j;
            out.packing = p;
            return out;
        }
    }
    throw ConvergenceError("no threshold packs the forest", 0.0);
}

// ---------------------------------------------------------------------------------------------
// sawtooth regions: Q0-hat above the floor is tiled by T(J) = J x [l(J)/2, l(J)), l(J) >= h,
// and T(J) belongs to the smallest stopping cube containing J

struct SawtoothRegion {
    int owner = 0;  ///< stopping cube index
    std::vector<DyadicCube> boxes;  ///< the J with T(J) inside the region
};

struct SawtoothPartition {
    Grid grid;
    DyadicCube Q0;
    int levels = 0;       ///< dyadic levels 0..levels-1 below Q0 carry boxes; the last has l(J) = h
    double t_floor = 0.0; ///< h / 2
    std::vector<SawtoothRegion> regions;  ///< regions[r].owner == r
    /// owner[k][cell] = region of the level-k box over the cell, or exterior() for cells outside Q0
    std::vector<std::vector<int>> owner;
    std::vector<char> in_Q0;

    int exterior() const noexcept { return static_cast<int>(regions.size()); }
    int region_count() const noexcept { return static_cast<int>(regions.size()) + 1; }
    double level_side(int k) const noexcept { return Q0.side() / static_cast<double>(1L << k); }
    /// Region holding (cell, t) for t >= t_floor.
    int region_at(std::size_t cell, double t) const {
        if (!in_Q0[cell] || t >= Q0.side()) return exterior();
        int k = 0;
        while (k + 1 < levels && t < level_side(k + 1)) ++k;
        return owner[static_cast<std::size_t>(k)][cell];
    }
};

inline SawtoothPartition sawtooth_regions(const StoppingForest& forest, const Grid& g) {
    SawtoothPartition part;
    part.grid = g;
    part.Q0 = forest.root().cube;
    part.levels = max_resolvable_depth(g, part.Q0) + 1;
    part.t_floor = 0.5 * g.spacing();
    part.regions.resize(forest.cubes.size());
    for (std::size_t r = 0; r < forest.cubes.size(); ++r) part.regions[r].owner = static_cast<int>(r);
    part.in_Q0.assign(g.size(), 0);
    cells_in(g, part.Q0).for_each(g, [&](std::size_t i) { part.in_Q0[i] = 1; });

    std::map<DyadicCube, int> stop_index;
    for (std::size_t r = 0; r < forest.cubes.size(); ++r) stop_index[forest.cubes[r].cube] = static_cast<int>(r);
    part.owner.assign(static_cast<std::size_t>(part.levels), std::vector<int>(g.size(), part.exterior()));
    // walk the dyadic tree carrying the current owner
    std::vector<std::pair<DyadicCube, int>> stack{{part.Q0, 0}};
    std::size_t boxes = 0;
    while (!stack.empty()) {
        auto [J, own] = stack.back();
        stack.pop_back();
        if (auto it = stop_index.find(J); it != stop_index.end()) own = it->second;
        const int k = J.level() - part.Q0.level();
        part.regions[static_cast<std::size_t>(own)].boxes.push_back(J);
        ++boxes;
        cells_in(g, J).for_each(g, [&](std::size_t i) {
            auto& slot = part.owner[static_cast<std::size_t>(k)][i];
            if (slot != part.exterior()) throw ConsistencyError("sawtooth boxes overlap");
            slot = own;
        });
        if (k + 1 < part.levels)
            for (auto& c : J.children()) stack.emplace_back(c, own);
    }
    // partition check by box counting
    std::size_t expected = 0;
    for (int k = 0; k < part.levels; ++k) expected += std::size_t{1} << (g.dim() * k);
    std::size_t counted = 0;
    for (const auto& r : part.regions) counted += r.boxes.size();
    if (boxes != expected || counted != expected) throw ConsistencyError("sawtooth regions do not partition Q0-hat");
    for (int k = 0; k < part.levels; ++k)
        for (std::size_t i = 0; i < g.size(); ++i)
            if (part.in_Q0[i] != (part.owner[static_cast<std::size_t>(k)][i] != part.exterior()))
                throw ConsistencyError("sawtooth covering defect");
    return part;
}

// ---------------------------------------------------------------------------------------------
// boundary tiles

enum class TileKind { lateral, horizontal, wall };

/// One cell face of a region boundary above the floor. Lateral and wall tiles span the dyadic
/// segment [s, 2s] in t across the face between `cell` and its neighbour along `axis` in direction
/// `side`; horizontal tiles are the face of `cell` at t = t_lo = t_hi, side +1 for a region top.
struct Tile {
    int region = 0;
    TileKind kind = TileKind::lateral;
    std::size_t cell = 0;
    std::size_t neighbor = 0;  ///< lateral only
    int axis = 0;
    int side = 1;
    double t_lo = 0.0, t_hi = 0.0;
    Point centroid_x{0, 0, 0};
    double centroid_t = 0.0;
    double smear_t = 0.0;  ///< half the centroid height
    double area = 0.0;
};

namespace detail {

inline bool neighbor_of(const Grid& g, std::size_t cell, int axis, int side, std::size_t& out) {
    MultiIndex idx = g.unflatten(cell);
    idx[axis] += side;
    if (!g.contains_index(idx)) return false;
    out = g.flatten(idx);
    return true;
}

inline Tile make_lateral(const Grid& g, int region, TileKind kind, std::size_t cell, std::size_t nb, int axis, int side,
                         double lo, double hi) {
    Tile t;
    t.region = region;
    t.kind = kind;
    t.cell = cell;
    t.neighbor = nb;
    t.axis = axis;
    t.side = side;
    t.t_lo = lo;
    t.t_hi = hi;
    t.centroid_x = g.point(cell);
    t.centroid_x[axis] += 0.5 * side * g.spacing();
    t.centroid_t = 0.5 * (lo + hi);
    t.smear_t = 0.5 * t.centroid_t;
    t.area = std::pow(g.spacing(), g.dim() - 1) * (hi - lo);
    return t;
}

inline Tile make_horizontal(const Grid& g, int region, std::size_t cell, double height, int side) {
    Tile t;
    t.region = region;
    t.kind = TileKind::horizontal;
    t.cell = cell;
    t.side = side;
    t.t_lo = t.t_hi = height;
    t.centroid_x = g.point(cell);
    t.centroid_t = height;
    t.smear_t = 0.5 * height;
    t.area = g.cell_volume();
    return t;
}

}  // namespace detail

/// Tiles of every region boundary (stopping regions and the exterior) above the floor. Exterior
/// wall tiles continue above Q0 in dyadic segments up to t_max.
inline std::vector<Tile> tile_all(const SawtoothPartition& part, const StoppingForest& forest, double t_max) {
    const Grid& g = part.grid;
    const int ext = part.exterior();
    std::vector<Tile> tiles;
    // lateral and wall tiles inside the box levels
    for (int k = 0; k < part.levels; ++k) {
        const double hi = part.level_side(k), lo = 0.5 * hi;
        const auto& own = part.owner[static_cast<std::size_t>(k)];
        for (std::size_t i = 0; i < g.size(); ++i)
            for (int d = 0; d < g.dim(); ++d)
                for (int side : {-1, 1}) {
                    std::size_t j = 0;
                    if (!detail::neighbor_of(g, i, d, side, j))
                        tiles.push_back(detail::make_lateral(g, own[i], TileKind::wall, i, i, d, side, lo, hi));
                    else if (own[i] != own[j])
                        tiles.push_back(detail::make_lateral(g, own[i], TileKind::lateral, i, j, d, side, lo, hi));
                }
    }
    // exterior walls above Q0
    for (double lo = part.Q0.side(); lo < t_max * (1 - 1e-12); lo *= 2.0)
        for (std::size_t i = 0; i < g.size(); ++i)
            for (int d = 0; d < g.dim(); ++d)
                for (int side : {-1, 1}) {
                    std::size_t j = 0;
                    if (!detail::neighbor_of(g, i, d, side, j)) tiles.push_back(detail::make_lateral(g, ext, TileKind::wall, i, i, d, side, lo, 2.0 * lo));
                }
    // horizontal faces: each stopping cube's top is its region's top and its parent's bottom
    for (std::size_t r = 0; r < forest.cubes.size(); ++r) {
        const auto& q = forest.cubes[r];
        const int above = q.parent < 0 ? ext : q.parent;
        cells_in(g, q.cube).for_each(g, [&](std::size_t i) {
            tiles.push_back(detail::make_horizontal(g, static_cast<int>(r), i, q.cube.side(), 1));
            tiles.push_back(detail::make_horizontal(g, above, i, q.cube.side(), -1));
        });
    }
    for (const auto& t : tiles) {
        // the smear point sits low enough that t - t* >= t*/3 and t <= 8t*/3 on the whole tile
        if (t.t_lo - t.smear_t < t.smear_t / 3.0 * (1 - 1e-12) || t.t_hi > 8.0 * t.smear_t / 3.0 * (1 + 1e-12))
            throw GeometryError("tile violates the smear-point geometry");
        if (!(t.area > 0.0)) throw GeometryError("tile with empty area");
    }
    return tiles;
}

/// Boundary area of a region from its box list: box faces not shared with a box of the same region,
/// floor faces excluded; independent of the tiling.
inline double region_boundary_area(const SawtoothPartition& part, int r) {
    const Grid& g = part.grid;
    const int n = g.dim();
    std::set<DyadicCube> mine(part.regions[static_cast<std::size_t>(r)].boxes.begin(), part.regions[static_cast<std::size_t>(r)].boxes.end());
    double area = 0.0;
    for (const auto& J : mine) {
        const double l = J.side();
        const int k = J.level() - part.Q0.level();
        // top face
        if (k == 0 || !mine.count(J.parent())) area += std::pow(l, n);
        // bottom faces over the children
        if (k + 1 < part.levels)
            for (const auto& c : J.children())
                if (!mine.count(c)) area += std::pow(c.side(), n);
        // lateral faces
        for (int d = 0; d < n; ++d)
            for (int side : {-1, 1}) {
                const DyadicCube nb = J.neighbor(d, side);
                const bool shared = nb.index()[d] >= 0 && nb.is_within(part.Q0) && mine.count(nb) > 0;
                if (!shared) area += std::pow(l, n - 1) * 0.5 * l;
            }
    }
    return area;
}

// ---------------------------------------------------------------------------------------------
// checks on the forest and regions

struct OscillationReport {
    double sup = 0.0;     ///< max over regions of sup |u - u(z_Q)| on sampled points of Sigma_Q and its boundary
    double fitted = 0.0;  ///< (sup - A)_+ / ||f||
    int worst_region = 0;
};

/// Samples every box T(J) at t = l/2, 3l/4, l over the cells of J.
inline OscillationReport check_oscillation_bound(const HarmonicExtension& u, const StoppingForest& forest, const SawtoothPartition& part,
                                                 double bmo_norm) {
    OscillationReport rep;
    const Grid& g = part.grid;
    for (int k = 0; k < part.levels; ++k) {
        const double l = part.level_side(k);
        for (double t : {0.5 * l, 0.75 * l, l}) {
            const Eigen::VectorXd U = u.at(t);
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (!part.in_Q0[i]) continue;
                const int r = part.owner[static_cast<std::size_t>(k)][i];
                const double d = std::abs(U[static_cast<Eigen::Index>(i)] - forest.cubes[static_cast<std::size_t>(r)].value);
                if (d > rep.sup) {
                    rep.sup = d;
                    rep.worst_region = r;
                }
            }
        }
    }
    rep.fitted = bmo_norm > 0.0 ? std::max(0.0, rep.sup - forest.threshold) / bmo_norm : 0.0;
    return rep;
}

/// Unweighted surface measure sum_Q dsigma_Q of the stopping regions: lateral tiles by Gauss nodes
/// at the face position, horizontal tiles as one atom per cell face.
inline AtomicMeasure sigma_measure(const SawtoothPartition& part, const std::vector<Tile>& tiles, int nodes = 8) {
    const Grid& g = part.grid;
    AtomicMeasure sigma(g.dim());
    for (const auto& t : tiles) {
        if (t.region == part.exterior()) continue;
        if (t.kind == TileKind::horizontal) {
            sigma.add(t.centroid_x, t.t_lo, t.area);
            continue;
        }
        const QuadratureRule q = gauss_legendre(nodes, t.t_lo, t.t_hi);
        for (std::size_t j = 0; j < q.size(); ++j) sigma.add(t.centroid_x, q.nodes[j], q.weights[j] * std::pow(g.spacing(), g.dim() - 1));
    }
    return sigma.merged();
}

inline CarlesonReport sigma_measure_carleson(const SawtoothPartition& part, const std::vector<Tile>& tiles) {
    return carleson_norm(sigma_measure(part, tiles));
}

// ---------------------------------------------------------------------------------------------
// assembly of g and mu from the region-wise Green identity
//
// With w = u - c_R on a region R (ghost cells carry w = -c_R), summation by parts gives
//   f ~ sum_R c_R int int_R t P V + boundary terms,
// where a horizontal face at height b contributes +-h^n [P (b u' - w) + b w dP/dt], a lateral cell
// face h^{n-1} int t [avg(P) dw/dnu + avg(w) dP/dnu] dt with outward differences, a wall face
// h^{n-2} int t c P dt, and the floor face gives an exact boundary term h_b. With h_b in g the residual
// is the floor truncation f - e^{-2 t_f sqrt(L)} (1 + 2 t_f sqrt(L)) f plus t-quadrature error on
// lateral faces. g itself carries the pointwise floor term h = f - c_{Q(x)}, the t -> 0 limit of h_b,
// which leaves f - g - S = trunc + h_b - h.

struct DecompositionConfig {
    std::string exterior_constant = "zero";  ///< "zero" or "top_value" (c = u(z_Q0) outside Q0-hat)
    int lateral_nodes = 8;                    ///< Gauss nodes per lateral segment
    double drift_tolerance = 1e-6;            ///< lateral node doubling, relative to ||f||_inf
    int max_depth = -1;                       ///< -1 selects default_depth_cap
    double t_max_factor = 8.0;                ///< exterior walls truncated at t_max_factor * L
    double threshold = 0.0;                   ///< > 0 fixes A instead of choose_threshold
    int lambda_tile_samples = 200;
};

struct DecompositionDiagnostics {
    double A = 0.0;
    int threshold_j = 0;
    double bmo_norm = 0.0;
    double packing = 0.0;
    std::vector<double> packing_ratios;
    double I_sum_sup = 0.0;     ///< ||sum_Q I_Q||_inf
    double I_abs_sup = 0.0;     ///< ||sum_Q |I_Q| ||_inf
    double I_fitted_A = 0.0;    ///< I_abs_sup / (A + ||f||)
    double I_fitted_f = 0.0;    ///< I_abs_sup / ||f||
    double h_sup = 0.0;
    double h_fitted = 0.0;      ///< (||h||_inf - A)_+ / ||f||
    double III_sup = 0.0;
    double oscillation_sup = 0.0;
    double oscillation_fitted = 0.0;
    double sigma_carleson = 0.0;
    double mu_data_carleson = 0.0;
    double mu_smear_carleson = 0.0;
    double mu_ext_carleson = 0.0;
    double mu_carleson = 0.0;
    double lambda_fitted = 0.0; ///< max |tile plane density| / (||f|| area Phi_{t*}(z, x_tile)) over sampled tiles
    double lateral_drift = 0.0;
    double residual_l1 = 0.0;
    double residual_l2 = 0.0;
    double floor_truncation_l1 = 0.0;  ///< relative L1 norm of the closed-form floor truncation
    double identity_defect = 0.0;      ///< ||f - (g - h + h_b) - S - trunc||_1 / ||f||_1, lateral quadrature only
    double g_sup = 0.0;
    double stability_ratio = 0.0;      ///< (||g||_inf + |||mu|||_c) / ||f||
    std::string exterior_constant;
    std::size_t regions = 0;
    std::size_t tiles = 0;
};

struct DecompositionResult {
    GridFunction g;
    AtomicMeasure mu;        ///< merged data + smear + exterior atoms
    AtomicMeasure mu_data;
    AtomicMeasure mu_smear;
    AtomicMeasure mu_ext;
    GridFunction h;          ///< f - u(z_{Q(x)}) on the floor
    GridFunction h_boundary; ///< exact boundary term of the floor face at t_floor
    GridFunction I_sum;      ///< sum over stopping regions of I_Q
    GridFunction III;        ///< exterior V-term
    StoppingForest forest;
    std::vector<Tile> tiles;
    DecompositionDiagnostics diagnostics;
    bool degenerate = false;
};

namespace detail {

/// int_0^t tau e^{-tau s} dtau per mode, stable as t s -> 0; t = inf gives 1/s^2.
inline Eigen::ArrayXd ramp_integral(const Eigen::ArrayXd& s, double t) {
    Eigen::ArrayXd out(s.size());
    for (Eigen::Index k = 0; k < s.size(); ++k) {
        if (std::isinf(t)) {
            out[k] = 1.0 / (s[k] * s[k]);
            continue;
        }
        const double x = t * s[k];
        if (x < 0.1) {
            double term = 1.0, sum = 0.0;
            for (int j = 0; j < 14; ++j) {
                sum += term / (j + 2);
                term *= -x / (j + 1);
            }
            out[k] = t * t * sum;
        } else {
            out[k] = -std::expm1(-x) / (s[k] * s[k]) - t * std::exp(-x) / s[k];
        }
    }
    return out;
}

/// Atoms at grid points by height, and smear planes as spectral coefficients of the plane density.
struct MeasureParts {
    std::map<double, Eigen::VectorXd> data;
    std::map<double, Eigen::VectorXd> planes;

    Eigen::VectorXd& data_at(double t, Eigen::Index n) {
        auto [it, fresh] = data.try_emplace(t, Eigen::VectorXd::Zero(n));
        return it->second;
    }
    Eigen::VectorXd& plane_at(double t, Eigen::Index n) {
        auto [it, fresh] = planes.try_emplace(t, Eigen::VectorXd::Zero(n));
        return it->second;
    }

    AtomicMeasure to_measure(const SpectralDecomposition& dec, bool with_data, bool with_planes) const {
        const Grid& g = dec.grid();
        AtomicMeasure mu(g.dim());
        if (with_data)
            for (const auto& [t, m] : data)
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (m[static_cast<Eigen::Index>(i)] != 0.0) mu.add(g.point(i), t, m[static_cast<Eigen::Index>(i)]);
        if (with_planes)
            for (const auto& [t, a] : planes) {
                const Eigen::VectorXd lambda = dec.synthesize(a);
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (lambda[static_cast<Eigen::Index>(i)] != 0.0) mu.add(g.point(i), t, lambda[static_cast<Eigen::Index>(i)] * g.cell_volume());
            }
        return mu;
    }

    /// Spectral coefficients of the Poisson sweep of these parts.
    Eigen::VectorXd sweep_coefficients(const SpectralDecomposition& dec) const {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(dec.size());
        for (const auto& [t, m] : data) c += poisson_multiplier(dec, t).cwiseProduct(dec.eigenfunctions().transpose() * m);
        for (const auto& [t, a] : planes) c += poisson_multiplier(dec, t).cwiseProduct(a);
        return c;
    }
};

struct TileContext {
    const SpectralDecomposition& dec;
    const HarmonicExtension& u;
    const std::vector<double>& c;  ///< region constants, exterior last
    int ext;
};

/// Lateral and wall tiles, grouped by segment so u(., t) is synthesized once per node.
inline void assemble_lateral(const TileContext& ctx, const std::vector<Tile>& tiles, int nodes, MeasureParts& data,
                             MeasureParts& smear, MeasureParts& ext) {
    const Grid& g = ctx.dec.grid();
    const double h = g.spacing();
    const double hn1 = std::pow(h, g.dim() - 1), hn2 = std::pow(h, g.dim() - 2);
    const Eigen::Index N = ctx.dec.size();
    std::map<std::pair<double, double>, std::vector<const Tile*>> by_segment;
    for (const auto& t : tiles)
        if (t.kind != TileKind::horizontal) by_segment[{t.t_lo, t.t_hi}].push_back(&t);
    for (const auto& [seg, group] : by_segment) {
        const QuadratureRule q = gauss_legendre(nodes, seg.first, seg.second);
        const double tstar = group.front()->smear_t;
        for (std::size_t j = 0; j < q.size(); ++j) {
            const double t = q.nodes[j], om = q.weights[j];
            const Eigen::VectorXd U = ctx.u.at(t);
            Eigen::VectorXd D_in = Eigen::VectorXd::Zero(N), D_ext = Eigen::VectorXd::Zero(N);
            for (const Tile* tile : group) {
                const double c = ctx.c[static_cast<std::size_t>(tile->region)];
                const bool outside = tile->region == ctx.ext;
                MeasureParts& dpart = outside ? ext : data;
                const auto i = static_cast<Eigen::Index>(tile->cell);
                if (tile->kind == TileKind::wall) {
                    if (c != 0.0) dpart.data_at(t, N)[i] += om * t * c * hn2;
                    continue;
                }
                const auto k = static_cast<Eigen::Index>(tile->neighbor);
                const double wbar = 0.5 * (U[i] + U[k]) - c;
                const double dw = (U[k] - U[i]) / h;
                auto& m = dpart.data_at(t, N);
                m[i] += 0.5 * om * t * hn1 * dw;
                m[k] += 0.5 * om * t * hn1 * dw;
                Eigen::VectorXd& D = outside ? D_ext : D_in;
                D[k] += om * t * wbar * hn2;
                D[i] -= om * t * wbar * hn2;
            }
            const Eigen::VectorXd decay = poisson_multiplier(ctx.dec, t - tstar);
            const Eigen::MatrixXd& psi = ctx.dec.eigenfunctions();
            if (D_in.any()) smear.plane_at(tstar, N) += decay.cwiseProduct(psi.transpose() * D_in);
            if (D_ext.any()) ext.plane_at(tstar, N) += decay.cwiseProduct(psi.transpose() * D_ext);
        }
    }
}

inline void assemble_horizontal(const TileContext& ctx, const std::vector<Tile>& tiles, MeasureParts& data, MeasureParts& smear,
                                MeasureParts& ext) {
    const Grid& g = ctx.dec.grid();
    const double hn = g.cell_volume();
    const Eigen::Index N = ctx.dec.size();
    std::map<double, std::vector<const Tile*>> by_height;
    for (const auto& t : tiles)
        if (t.kind == TileKind::horizontal) by_height[t.t_lo].push_back(&t);
    const Eigen::MatrixXd& psi = ctx.dec.eigenfunctions();
    for (const auto& [b, group] : by_height) {
        const Eigen::VectorXd U = ctx.u.at(b), dU = ctx.u.dt(b);
        Eigen::VectorXd S_in = Eigen::VectorXd::Zero(N), S_ext = Eigen::VectorXd::Zero(N);
        for (const Tile* tile : group) {
            const bool outside = tile->region == ctx.ext;
            const auto i = static_cast<Eigen::Index>(tile->cell);
            const double w = U[i] - ctx.c[static_cast<std::size_t>(tile->region)];
            (outside ? ext : data).data_at(b, N)[i] += tile->side * hn * (b * dU[i] - w);
            (outside ? S_ext : S_in)[i] += tile->side * hn * b * w;
        }
        const Eigen::VectorXd dP = poisson_dt_multiplier(ctx.dec, 0.5 * b);
        if (S_in.any()) smear.plane_at(0.5 * b, N) += dP.cwiseProduct(psi.transpose() * S_in);
        if (S_ext.any()) ext.plane_at(0.5 * b, N) += dP.cwiseProduct(psi.transpose() * S_ext);
    }
}

/// Plane density of a single tile, for the pointwise Lambda scan.
inline Eigen::VectorXd tile_density(const TileContext& ctx, const Tile& tile, int nodes) {
    const Grid& g = ctx.dec.grid();
    const double h = g.spacing();
    const Eigen::MatrixXd& psi = ctx.dec.eigenfunctions();
    const double c = ctx.c[static_cast<std::size_t>(tile.region)];
    const auto i = static_cast<Eigen::Index>(tile.cell);
    Eigen::VectorXd a = Eigen::VectorXd::Zero(ctx.dec.size());
    if (tile.kind == TileKind::horizontal) {
        const double w = ctx.u.at(tile.cell, tile.t_lo) - c;
        a = poisson_dt_multiplier(ctx.dec, tile.smear_t).cwiseProduct(psi.row(i).transpose()) * (tile.side * g.cell_volume() * tile.t_lo * w);
    } else if (tile.kind == TileKind::lateral) {
        const auto k = static_cast<Eigen::Index>(tile.neighbor);
        const QuadratureRule q = gauss_legendre(nodes, tile.t_lo, tile.t_hi);
        for (std::size_t j = 0; j < q.size(); ++j) {
            const double t = q.nodes[j];
            const double wbar = 0.5 * (ctx.u.at(tile.cell, t) + ctx.u.at(tile.neighbor, t)) - c;
            a += poisson_multiplier(ctx.dec, t - tile.smear_t).cwiseProduct(psi.row(k).transpose() - psi.row(i).transpose()) *
                 (q.weights[j] * t * wbar * std::pow(h, g.dim() - 2));
        }
    }
    return ctx.dec.synthesize(a);
}

}  // namespace detail

/// f = g + S_{mu, P} up to the floor discretization, with g = sum_Q I_Q + h + III.
inline DecompositionResult decompose(const GridFunction& f, const SpectralDecomposition& dec, const CubeFamily& fam,
                                     const CriticalRadiusField& rho, const DecompositionConfig& cfg = {}) {
    const Grid& g = dec.grid();
    if (!(f.grid() == g)) throw GeometryError("function lives on a different grid");
    if (cfg.exterior_constant != "zero" && cfg.exterior_constant != "top_value") throw DomainError("exterior_constant must be zero or top_value");
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Point p = g.point(i);
        bool inside = true;
        for (int d = 0; d < g.dim(); ++d) inside = inside && std::abs(p[d]) <= 1.0 + 1e-12;
        if (!inside && f[i] != 0.0) throw DomainError("f must be supported in [-1, 1]^n");
    }
    const DyadicCube Q0 = DyadicCube::root(g.dim());
    DecompositionResult res{GridFunction(g), AtomicMeasure(g.dim()), AtomicMeasure(g.dim()), AtomicMeasure(g.dim()), AtomicMeasure(g.dim()),
                            GridFunction(g), GridFunction(g), GridFunction(g), GridFunction(g), {}, {}, {}, false};
    auto& diag = res.diagnostics;
    diag.exterior_constant = cfg.exterior_constant;
    diag.bmo_norm = bmo_L_norm(f, fam, rho).bmoL_norm;
    if (!(diag.bmo_norm > 0.0)) {
        res.degenerate = true;
        return res;
    }
    const HarmonicExtension u(dec, f);
    const int depth = cfg.max_depth >= 0 ? cfg.max_depth : default_depth_cap(g, Q0);
    if (cfg.threshold > 0.0) {
        diag.A = cfg.threshold;
    } else {
        const ThresholdChoice tc = choose_threshold(u, Q0, diag.bmo_norm, depth);
        diag.A = tc.A;
        diag.threshold_j = tc.j;
    }
    res.forest = build_generations(u, Q0, diag.A, depth);
    diag.packing_ratios = packing_ratios(res.forest);
    diag.packing = packing_ratio(res.forest);
    const SawtoothPartition part = sawtooth_regions(res.forest, g);
    const double t_max = cfg.t_max_factor * g.half_width();
    res.tiles = tile_all(part, res.forest, t_max);
    diag.regions = part.regions.size();
    diag.tiles = res.tiles.size();

    std::vector<double> c(static_cast<std::size_t>(part.region_count()));
    for (std::size_t r = 0; r < res.forest.cubes.size(); ++r) c[r] = res.forest.cubes[r].value;
    c.back() = cfg.exterior_constant == "zero" ? 0.0 : res.forest.root().value;
    const int ext = part.exterior();
    const detail::TileContext ctx{dec, u, c, ext};

    const Eigen::MatrixXd& psi = dec.eigenfunctions();
    const Eigen::ArrayXd s = dec.sqrt_eigenvalues().array();
    const double hn = g.cell_volume();
    const Eigen::VectorXd& V = dec.potential().values().values();
    const double tf = part.t_floor;

    // V-terms with the t-integral done in closed form per mode
    Eigen::VectorXd I_sum = Eigen::VectorXd::Zero(dec.size()), I_abs = Eigen::VectorXd::Zero(dec.size());
    auto region_V_term = [&](int r, const std::vector<std::pair<std::size_t, std::pair<double, double>>>& columns) {
        Eigen::VectorXd a = Eigen::VectorXd::Zero(dec.size());
        const double cr = c[static_cast<std::size_t>(r)];
        if (cr == 0.0) return a;
        std::map<std::pair<double, double>, Eigen::VectorXd> by_interval;
        for (const auto& [i, iv] : columns) {
            if (V[static_cast<Eigen::Index>(i)] == 0.0) continue;
            auto [it, fresh] = by_interval.try_emplace(iv, Eigen::VectorXd::Zero(dec.size()));
            it->second += psi.row(static_cast<Eigen::Index>(i)).transpose() * V[static_cast<Eigen::Index>(i)];
        }
        for (const auto& [iv, proj] : by_interval)
            a += ((detail::ramp_integral(s, iv.second) - detail::ramp_integral(s, iv.first)) * proj.array()).matrix() * (cr * hn);
        return a;
    };
    for (std::size_t r = 0; r < res.forest.cubes.size(); ++r) {
        const auto& q = res.forest.cubes[r];
        std::vector<std::pair<std::size_t, std::pair<double, double>>> cols;
        const double top = q.cube.side();
        cells_in(g, q.cube).for_each(g, [&](std::size_t i) { cols.push_back({i, {tf, top}}); });
        for (int ch : q.children) {
            const auto& qc = res.forest.cubes[static_cast<std::size_t>(ch)].cube;
            const double lo = qc.side();
            cells_in(g, qc).for_each(g, [&](std::size_t i) {
                for (auto& col : cols)
                    if (col.first == i) col.second.first = lo;
            });
        }
        const Eigen::VectorXd a = region_V_term(static_cast<int>(r), cols);
        if (a.any()) {
            const Eigen::VectorXd Ir = dec.synthesize(a);
            I_sum += Ir;
            I_abs += Ir.cwiseAbs();
        }
    }
    {
        std::vector<std::pair<std::size_t, std::pair<double, double>>> cols;
        const double inf = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < g.size(); ++i) cols.push_back({i, {part.in_Q0[i] ? Q0.side() : tf, inf}});
        res.III = GridFunction(g, dec.synthesize(region_V_term(ext, cols)));
    }
    res.I_sum = GridFunction(g, I_sum);

    // floor term
    {
        const Eigen::VectorXd U = u.at(tf), dU = u.dt(tf);
        Eigen::VectorXd alpha(dec.size()), beta(dec.size()), pointwise(dec.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            const double cr = c[static_cast<std::size_t>(part.region_at(i, tf))];
            const double w = U[ii] - cr;
            alpha[ii] = (w - tf * dU[ii]) * hn;
            beta[ii] = -tf * w * hn;
            pointwise[ii] = f[i] - cr;
        }
        const Eigen::VectorXd a = poisson_multiplier(dec, tf).cwiseProduct(psi.transpose() * alpha) +
                                  poisson_dt_multiplier(dec, tf).cwiseProduct(psi.transpose() * beta);
        res.h_boundary = GridFunction(g, dec.synthesize(a));
        res.h = GridFunction(g, pointwise);
    }
    res.g = GridFunction(g, res.I_sum.values() + res.h.values() + res.III.values());

    // boundary measures
    detail::MeasureParts data, smear, outside;
    detail::assemble_horizontal(ctx, res.tiles, data, smear, outside);
    {
        detail::MeasureParts d2, s2, o2;
        detail::assemble_lateral(ctx, res.tiles, 2 * cfg.lateral_nodes, d2, s2, o2);
        detail::MeasureParts d1, s1, o1;
        detail::assemble_lateral(ctx, res.tiles, cfg.lateral_nodes, d1, s1, o1);
        const Eigen::VectorXd diff = dec.synthesize(d2.sweep_coefficients(dec) + s2.sweep_coefficients(dec) + o2.sweep_coefficients(dec) -
                                                    d1.sweep_coefficients(dec) - s1.sweep_coefficients(dec) - o1.sweep_coefficients(dec));
        diag.lateral_drift = diff.lpNorm<Eigen::Infinity>() / std::max(f.sup_norm(), 1e-300);
        if (diag.lateral_drift > cfg.drift_tolerance) throw ConvergenceError("lateral tile quadrature drifts under node doubling", diag.lateral_drift);
        for (const auto& pair : {std::pair{&d1, &data}, std::pair{&s1, &smear}, std::pair{&o1, &outside}}) {
            for (auto& [t, m] : pair.first->data) pair.second->data_at(t, dec.size()) += m;
            for (auto& [t, a] : pair.first->planes) pair.second->plane_at(t, dec.size()) += a;
        }
    }
    res.mu_data = data.to_measure(dec, true, false).merged();
    res.mu_smear = smear.to_measure(dec, false, true).merged();
    res.mu_ext = outside.to_measure(dec, true, true).merged();
    res.mu = res.mu_data.concat(res.mu_smear).concat(res.mu_ext).merged();

    // diagnostics
    const double fn = diag.bmo_norm;
    diag.I_sum_sup = res.I_sum.sup_norm();
    diag.I_abs_sup = I_abs.lpNorm<Eigen::Infinity>();
    diag.I_fitted_A = diag.I_abs_sup / (diag.A + fn);
    diag.I_fitted_f = diag.I_abs_sup / fn;
    diag.h_sup = res.h.sup_norm();
    diag.h_fitted = std::max(0.0, diag.h_sup - diag.A) / fn;
    diag.III_sup = res.III.sup_norm();
    diag.g_sup = res.g.sup_norm();
    const OscillationReport osc = check_oscillation_bound(u, res.forest, part, fn);
    diag.oscillation_sup = osc.sup;
    diag.oscillation_fitted = osc.fitted;
    diag.sigma_carleson = sigma_measure_carleson(part, res.tiles).carleson_norm;
    diag.mu_data_carleson = carleson_norm(res.mu_data).carleson_norm;
    diag.mu_smear_carleson = carleson_norm(res.mu_smear).carleson_norm;
    diag.mu_ext_carleson = carleson_norm(res.mu_ext).carleson_norm;
    diag.mu_carleson = carleson_norm(res.mu).carleson_norm;
    diag.stability_ratio = (diag.g_sup + diag.mu_carleson) / fn;

    // pointwise scan of single-tile plane densities against Phi_{t*}
    {
        std::vector<const Tile*> cand;
        for (const auto& t : res.tiles)
            if (t.kind != TileKind::wall) cand.push_back(&t);
        const std::size_t want = static_cast<std::size_t>(std::max(1, cfg.lambda_tile_samples));
        const std::size_t stride = std::max<std::size_t>(1, cand.size() / want);
        for (std::size_t m = 0; m < cand.size(); m += stride) {
            const Tile& t = *cand[m];
            const Eigen::VectorXd dens = detail::tile_density(ctx, t, cfg.lateral_nodes);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double phi = t.smear_t / std::pow(t.smear_t + distance(g.point(i), t.centroid_x, g.dim()), g.dim() + 1);
                diag.lambda_fitted = std::max(diag.lambda_fitted, std::abs(dens[static_cast<Eigen::Index>(i)]) / (fn * t.area * phi));
            }
        }
    }

    // reconstruction against f and the closed-form floor truncation
    const Eigen::VectorXd S = sweep(dec, res.mu).values();
    const Eigen::VectorXd r = f.values() - res.g.values() - S;
    diag.residual_l1 = r.lpNorm<1>() / f.values().lpNorm<1>();
    diag.residual_l2 = r.norm() / f.values().norm();
    const Eigen::VectorXd fh = dec.coefficients(f.values());
    const Eigen::ArrayXd x = 2.0 * tf * s;
    const Eigen::VectorXd trunc = dec.synthesize(((1.0 - (-x).exp() * (1.0 + x)) * fh.array()).matrix());
    diag.floor_truncation_l1 = trunc.lpNorm<1>() / f.values().lpNorm<1>();
    diag.identity_defect = (r + res.h.values() - res.h_boundary.values() - trunc).lpNorm<1>() / f.values().lpNorm<1>();
    return res;
}

/// Relative defect of b against lambda * a: sup of g, and total variation of mu_b - lambda mu_a over
/// the gross mass of b's three parts (the merged mu can be pure cancellation).
inline double equivariance_defect(const DecompositionResult& a, const DecompositionResult& b, double lambda) {
    const double gs = std::max(b.g.sup_norm(), 1e-300);
    const double eg = (b.g.values() - lambda * a.g.values()).lpNorm<Eigen::Infinity>() / gs;
    const double gross = b.mu_data.total_variation() + b.mu_smear.total_variation() + b.mu_ext.total_variation();
    const double em = b.mu.concat(a.mu.scaled(-lambda)).merged().total_variation() / std::max(gross, 1e-300);
    return std::max(eg, em);
}

struct ReconstructionResidual {
    double l1 = 0.0;
    double l2 = 0.0;
};

/// Relative L1 and L2 norms of f - g - S_{mu, P}.
inline ReconstructionResidual reconstruction_residual(const GridFunction& f, const DecompositionResult& res, const SpectralDecomposition& dec) {
    ReconstructionResidual out;
    if (res.degenerate || f.values().lpNorm<1>() == 0.0) return out;
    const Eigen::VectorXd r = f.values() - res.g.values() - sweep(dec, res.mu).values();
    out.l1 = r.lpNorm<1>() / f.values().lpNorm<1>();
    out.l2 = r.norm() / f.values().norm();
    return out;
}

}  // namespace balayage
