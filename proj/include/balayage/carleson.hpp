#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <vector>

#include "balayage/bmo.hpp"
#include "balayage/grid.hpp"
#include "balayage/quadrature.hpp"
#include "balayage/spectral.hpp"

namespace balayage {

struct Atom {
    HalfSpacePoint z;
    double mass = 0.0;
};

/// Finite signed measure on the upper half-space.
class AtomicMeasure {
public:
    explicit AtomicMeasure(int dim = 1) : dim_(dim) {
        if (dim < 1 || dim > kMaxDim) throw DomainError("measure dimension must be 1, 2 or 3");
    }
    AtomicMeasure(int dim, std::vector<Atom> atoms) : AtomicMeasure(dim) {
        for (const auto& a : atoms) add(a);
    }

    void add(const Atom& a) {
        if (!(a.z.t > 0.0) || !std::isfinite(a.z.t)) throw DomainError("atom heights must be positive");
        if (!std::isfinite(a.mass)) throw DomainError("atom masses must be finite");
        atoms_.push_back(a);
    }
    void add(const Point& x, double t, double mass) { add(Atom{{x, t}, mass}); }

    int dim() const noexcept { return dim_; }
    const std::vector<Atom>& atoms() const noexcept { return atoms_; }
    std::size_t size() const noexcept { return atoms_.size(); }
    bool empty() const noexcept { return atoms_.empty(); }

    double total_variation() const {
        double s = 0.0;
        for (const auto& a : atoms_) s += std::abs(a.mass);
        return s;
    }
    double total_mass() const {
        double s = 0.0;
        for (const auto& a : atoms_) s += a.mass;
        return s;
    }

    AtomicMeasure scaled(double s) const {
        AtomicMeasure out(dim_);
        out.atoms_ = atoms_;
        for (auto& a : out.atoms_) a.mass *= s;
        return out;
    }

    AtomicMeasure concat(const AtomicMeasure& o) const {
        if (o.dim_ != dim_) throw DomainError("measure dimension mismatch");
        AtomicMeasure out(dim_);
        out.atoms_ = atoms_;
        out.atoms_.insert(out.atoms_.end(), o.atoms_.begin(), o.atoms_.end());
        return out;
    }

    /// Coincident atoms combined and zero masses dropped: the atom list of the measure itself.
    AtomicMeasure merged() const {
        std::vector<Atom> sorted = atoms_;
        auto key = [this](const Atom& a) {
            std::array<double, kMaxDim + 1> k{};
            for (int d = 0; d < dim_; ++d) k[static_cast<std::size_t>(d)] = a.z.x[d];
            k[static_cast<std::size_t>(dim_)] = a.z.t;
            return k;
        };
        std::sort(sorted.begin(), sorted.end(), [&](const Atom& a, const Atom& b) { return key(a) < key(b); });
        AtomicMeasure out(dim_);
        for (std::size_t i = 0; i < sorted.size();) {
            std::size_t j = i;
            double m = 0.0;
            double gross = 0.0;
            while (j < sorted.size() && key(sorted[j]) == key(sorted[i])) {
                gross += std::abs(sorted[j].mass);
                m += sorted[j++].mass;
            }
            // contributions that cancel to roundoff are dropped
            if (std::abs(m) > 1e-12 * gross) out.atoms_.push_back({sorted[i].z, m});
            i = j;
        }
        return out;
    }

private:
    int dim_;
    std::vector<Atom> atoms_;
};

struct CarlesonReport {
    double carleson_norm = 0.0;
    Cube attaining_cube;
    double box_mass = 0.0;  ///< |mu| of the attaining box
    std::vector<std::pair<std::size_t, double>> attribution;  ///< (atom index, |mass|) inside the attaining box
};

/// Closed box [a, a + l]^n x (0, l].
inline bool in_closed_box(const Atom& a, const Point& lower, double side, int dim) {
    if (a.z.t > side) return false;
    for (int d = 0; d < dim; ++d)
        if (a.z.x[d] < lower[d] || a.z.x[d] - lower[d] > side) return false;
    return true;
}

/// Exact sup of |mu|(Q-hat) / |Q| over all cubes.
///
/// Any cube can be shrunk to the one whose lower corner is the coordinatewise minimum of the atoms
/// it holds and whose side is the least l with every held atom satisfying t <= l and x - a <= l;
/// this never loses mass and never grows |Q|. So the sup runs over lower corners drawn from atom
/// coordinates, and for a fixed corner a over the entry sides l_j(a) = max(t_j, max_d (x_jd - a_d)).
inline CarlesonReport carleson_norm(const AtomicMeasure& mu) {
    CarlesonReport rep;
    const int n = mu.dim();
    rep.attaining_cube.dim = n;
    if (mu.empty()) return rep;
    const auto& atoms = mu.atoms();

    std::array<std::vector<double>, kMaxDim> coords;
    for (int d = 0; d < n; ++d) {
        for (const auto& a : atoms) coords[d].push_back(a.z.x[d]);
        std::sort(coords[d].begin(), coords[d].end());
        coords[d].erase(std::unique(coords[d].begin(), coords[d].end()), coords[d].end());
    }

    double best = 0.0;
    Point best_lower{0, 0, 0};
    double best_side = 0.0;
    std::vector<std::pair<double, double>> entries;  // (entry side, |mass|)
    entries.reserve(atoms.size());
    std::array<std::size_t, kMaxDim> k{0, 0, 0};
    for (;;) {
        Point a{0, 0, 0};
        for (int d = 0; d < n; ++d) a[d] = coords[d][k[d]];
        entries.clear();
        for (const auto& at : atoms) {
            double l = at.z.t;
            bool above = true;
            for (int d = 0; d < n && above; ++d) {
                above = at.z.x[d] >= a[d];
                l = std::max(l, at.z.x[d] - a[d]);
            }
            if (above && at.mass != 0.0) entries.emplace_back(l, std::abs(at.mass));
        }
        std::sort(entries.begin(), entries.end());
        double m = 0.0;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            m += entries[i].second;
            if (i + 1 < entries.size() && entries[i + 1].first == entries[i].first) continue;
            const double ratio = m / std::pow(entries[i].first, n);
            if (ratio > best) {
                best = ratio;
                best_lower = a;
                best_side = entries[i].first;
            }
        }
        int d = n - 1;
        while (d >= 0) {
            if (++k[d] < coords[d].size()) break;
            k[d] = 0;
            --d;
        }
        if (d < 0) break;
    }

    rep.carleson_norm = best;
    rep.attaining_cube.lower = best_lower;
    rep.attaining_cube.side = best_side;
    for (std::size_t i = 0; i < atoms.size(); ++i)
        if (atoms[i].mass != 0.0 && in_closed_box(atoms[i], best_lower, best_side, n)) {
            rep.attribution.emplace_back(i, std::abs(atoms[i].mass));
            rep.box_mass += std::abs(atoms[i].mass);
        }
    return rep;
}

namespace detail {

inline void check_balayage_inputs(const Grid& g, const AtomicMeasure& mu) {
    if (mu.dim() != g.dim()) throw DomainError("measure and grid dimensions differ");
    for (const auto& a : mu.atoms())
        if (a.z.t < 0.25 * g.spacing()) throw ResolutionError("atom height below h/4 is not resolved by the grid");
}

}  // namespace detail

/// S(x) = sum_atoms mass K_t(x, y*) with y* the grid point nearest the atom.
inline GridFunction sweep(const KernelFamily& kernels, const Grid& g, const AtomicMeasure& mu) {
    detail::check_balayage_inputs(g, mu);
    std::map<double, std::vector<const Atom*>> by_height;
    for (const auto& a : mu.atoms()) by_height[a.z.t].push_back(&a);
    Eigen::VectorXd S = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.size()));
    for (const auto& [t, group] : by_height) {
        const KernelMatrix K = kernels.at(t);
        for (const Atom* a : group) S += a->mass * K.matrix.col(static_cast<Eigen::Index>(g.nearest_flat(a->z.x)));
    }
    return GridFunction(g, S);
}

enum class SweepKernel { poisson, heat_squared };

/// Spectral path: sum over modes of psi_k(x) sum_atoms mass m_k(t) psi_k(y*), with
/// m_k(t) = e^{-t sqrt(lambda_k)} (Poisson) or e^{-t^2 lambda_k} (heat at time t^2).
/// Heat atoms are not subject to the h/4 limit: the transform places negligible mass far below it.
inline GridFunction sweep(const SpectralDecomposition& dec, const AtomicMeasure& mu, SweepKernel kind = SweepKernel::poisson) {
    const Grid& g = dec.grid();
    if (kind == SweepKernel::poisson) detail::check_balayage_inputs(g, mu);
    else if (mu.dim() != g.dim()) throw DomainError("measure and grid dimensions differ");
    const Eigen::MatrixXd& psi = dec.eigenfunctions();
    const Eigen::ArrayXd rate = kind == SweepKernel::poisson ? dec.sqrt_eigenvalues().array() : dec.eigenvalues().array();
    Eigen::VectorXd coeff = Eigen::VectorXd::Zero(dec.size());
    for (const auto& a : mu.atoms()) {
        const double time = kind == SweepKernel::poisson ? a.z.t : a.z.t * a.z.t;
        const auto row = psi.row(static_cast<Eigen::Index>(g.nearest_flat(a.z.x)));
        coeff.array() += a.mass * detail::flushed_exp(-time * rate) * row.transpose().array();
    }
    return GridFunction(g, dec.synthesize(coeff));
}

/// ||S_mu||_{BMO_L} / |||mu|||_c with the Poisson sweep.
inline NormRatio balayage_bmo_ratio(const AtomicMeasure& mu, const SpectralDecomposition& dec, const CubeFamily& fam,
                                    const CriticalRadiusField& rho) {
    NormRatio r;
    r.denominator = carleson_norm(mu).carleson_norm;
    if (!(r.denominator > 0.0)) {
        r.degenerate = true;
        return r;
    }
    r.numerator = bmo_L_norm(sweep(dec, mu), fam, rho).bmoL_norm;
    r.ratio = r.numerator / r.denominator;
    return r;
}

/// Atoms uniform in the Carleson box of Q0 = [-2, 2]^n with heights in [t_min, 4] and masses in [0, 1].
inline AtomicMeasure random_carleson_measure(int dim, int atoms, double t_min, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> x(-2.0, 2.0), t(t_min, 4.0), m(0.0, 1.0);
    AtomicMeasure mu(dim);
    for (int i = 0; i < atoms; ++i) {
        Point p{0, 0, 0};
        for (int d = 0; d < dim; ++d) p[d] = x(rng);
        const double ti = t(rng);
        mu.add(p, ti, m(rng));
    }
    return mu;
}

struct HeatTransformSpec {
    int nodes = 256;
    double lower_factor = 1.0 / 20.0;  ///< s grid starts at lower_factor * min atom height
    double upper_factor = 1e6;         ///< and ends at upper_factor * max atom height
    double drift_tolerance = 1e-5;
};

struct HeatTransformResult {
    AtomicMeasure nu;
    double mass_drift = 0.0;  ///< max over atoms of |sum_j omega_j(t) - sum at doubled nodes|
    double max_mass_defect = 0.0;  ///< max over atoms of |sum_j omega_j(t) - 1|
};

namespace detail {

inline std::vector<double> heat_weights(const QuadratureRule& s, double t) {
    std::vector<double> w(s.size());
    for (std::size_t j = 0; j < s.size(); ++j) {
        const double sj = s.nodes[j];
        w[j] = t * std::exp(-t * t / (4.0 * sj * sj)) / (sj * sj) * s.weights[j] / std::sqrt(std::numbers::pi);
    }
    return w;
}

inline double sum(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

}  // namespace detail

/// nu = sum_i sum_j mass_i omega_j(t_i) delta_{(y_i, s_j)}, omega_j(t) = t e^{-t^2/4s_j^2} s_j^{-2} ds_j / sqrt(pi),
/// so that S_{mu, Poisson} = S_{nu, heat at s^2} up to quadrature error.
inline HeatTransformResult heat_balayage_transform(const AtomicMeasure& mu, const HeatTransformSpec& spec = {}) {
    HeatTransformResult out{AtomicMeasure(mu.dim())};
    if (mu.empty()) return out;
    double tmin = std::numeric_limits<double>::infinity(), tmax = 0.0;
    for (const auto& a : mu.atoms()) {
        tmin = std::min(tmin, a.z.t);
        tmax = std::max(tmax, a.z.t);
    }
    const double lo = spec.lower_factor * tmin, hi = spec.upper_factor * tmax;
    const QuadratureRule s = log_trapezoid(lo, hi, spec.nodes);
    const QuadratureRule s2 = log_trapezoid(lo, hi, 2 * spec.nodes - 1);
    for (const auto& a : mu.atoms()) {
        const auto w = detail::heat_weights(s, a.z.t);
        const double total = detail::sum(w);
        out.mass_drift = std::max(out.mass_drift, std::abs(total - detail::sum(detail::heat_weights(s2, a.z.t))));
        out.max_mass_defect = std::max(out.max_mass_defect, std::abs(total - 1.0));
        for (std::size_t j = 0; j < s.size(); ++j)
            if (w[j] > 0.0) out.nu.add(a.z.x, s.nodes[j], a.mass * w[j]);
    }
    if (out.mass_drift > spec.drift_tolerance) throw ConvergenceError("heat transform quadrature drifts under node doubling", out.mass_drift);
    return out;
}

struct SmearedMeasure {
    AtomicMeasure measure;
    double normalization = 1.0;  ///< factor applied so the input has Carleson norm <= 1
    double input_norm = 0.0;     ///< of sum mass_i t_i^n delta_{z_i}, after normalization
    double output_norm = 0.0;
    double ratio = 0.0;          ///< output_norm / input_norm
};

/// Replace each t_i^n delta_{z_i} by the plane density t_i^n Phi_{t_i}(x, x_i) dx at height t_i,
/// Phi_t(x, y) = t / (t + |x - y|)^{n+1}, one atom per grid cell.
inline SmearedMeasure smeared_dirac_measure(const Grid& g, const std::vector<Atom>& atoms) {
    const int n = g.dim();
    SmearedMeasure out{AtomicMeasure(n)};
    AtomicMeasure input(n);
    for (const auto& a : atoms) input.add(a.z.x, a.z.t, a.mass * std::pow(a.z.t, n));
    if (input.empty()) return out;
    const double raw = carleson_norm(input).carleson_norm;
    if (raw > 1.0) out.normalization = 1.0 / raw;
    out.input_norm = raw * out.normalization;
    const double hn = g.cell_volume();
    for (const auto& a : input.atoms())
        for (std::size_t i = 0; i < g.size(); ++i) {
            const Point x = g.point(i);
            const double phi = a.z.t / std::pow(a.z.t + distance(x, a.z.x, n), n + 1);
            out.measure.add(x, a.z.t, out.normalization * a.mass * phi * hn);
        }
    out.output_norm = carleson_norm(out.measure).carleson_norm;
    out.ratio = out.input_norm > 0.0 ? out.output_norm / out.input_norm : 0.0;
    return out;
}

}  // namespace balayage
