#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "balayage/grid.hpp"
#include "balayage/quadrature.hpp"

namespace balayage {

enum class PotentialKind { constant, polynomial, well, samples, zero };

/// Nonnegative potential sampled at cell centers, taken piecewise constant on cells.
class Potential {
public:
    Potential(GridFunction values, PotentialKind kind, double parameter = 0.0)
        : values_(std::move(values)), kind_(kind), parameter_(parameter) {
        if (values_.values().size() && values_.values().minCoeff() < 0.0)
            throw DomainError("potential must be nonnegative");
        if (kind_ != PotentialKind::zero && values_.values().cwiseAbs().maxCoeff() == 0.0)
            throw DomainError("potential vanishes identically; use Potential::zero for the free operator");
    }

    static Potential constant(const Grid& g, double c) {
        if (!(c > 0.0)) throw DomainError("constant potential must be positive");
        return Potential(GridFunction::constant(g, c), PotentialKind::constant, c);
    }
    /// The free case V = 0; critical radius is infinite (reported as truncated).
    static Potential zero(const Grid& g) { return Potential(GridFunction(g), PotentialKind::zero); }
    /// V(x) = |x|^2.
    static Potential quadratic(const Grid& g) {
        return Potential(GridFunction::sample(g,
                                              [&](const Point& p) {
                                                  double s = 0.0;
                                                  for (int d = 0; d < g.dim(); ++d) s += p[d] * p[d];
                                                  return s;
                                              }),
                         PotentialKind::polynomial);
    }
    /// V = depth outside the ball |x| < width and 0 inside it.
    static Potential well(const Grid& g, double depth, double width) {
        if (!(depth > 0.0) || !(width > 0.0)) throw DomainError("well needs positive depth and width");
        const Point origin{0.0, 0.0, 0.0};
        return Potential(GridFunction::sample(g, [&](const Point& p) { return distance(p, origin, g.dim()) < width ? 0.0 : depth; }),
                         PotentialKind::well, depth);
    }
    static Potential from_samples(GridFunction v) { return Potential(std::move(v), PotentialKind::samples); }

    const GridFunction& values() const noexcept { return values_; }
    const Grid& grid() const noexcept { return values_.grid(); }
    PotentialKind kind() const noexcept { return kind_; }
    double parameter() const noexcept { return parameter_; }
    bool is_zero() const noexcept { return kind_ == PotentialKind::zero; }

    Potential scaled(double s) const {
        if (!(s > 0.0)) throw DomainError("potential scale must be positive");
        return Potential(values_ * s, kind_, parameter_ * s);
    }

private:
    GridFunction values_;
    PotentialKind kind_;
    double parameter_;
};

namespace detail {

// Measure of {y in box : |y - c| <= r} by exact chords along axis 0 and
// piecewise Gauss-Legendre (split at the kinks) along the remaining axes.
inline double box_ball_overlap(int dims, const double* lo, const double* hi, const double* c, double r2) {
    if (r2 <= 0.0) return 0.0;
    const double r = std::sqrt(r2);
    if (dims == 1) {
        const double a = std::max(lo[0], c[0] - r), b = std::min(hi[0], c[0] + r);
        return std::max(0.0, b - a);
    }
    const int k = dims - 1;
    const double zlo = std::max(lo[k], c[k] - r), zhi = std::min(hi[k], c[k] + r);
    if (zhi <= zlo) return 0.0;

    // Inner overlap changes shape when the sub-radius crosses a face or corner distance.
    std::vector<double> crit;
    std::vector<double> per_dim_options[kMaxDim];
    for (int d = 0; d < k; ++d) {
        per_dim_options[d].push_back(0.0);
        per_dim_options[d].push_back(std::abs(lo[d] - c[d]));
        per_dim_options[d].push_back(std::abs(hi[d] - c[d]));
    }
    const int combos = k == 1 ? 3 : 9;
    for (int m = 0; m < combos; ++m) {
        double s = 0.0;
        int mm = m;
        for (int d = 0; d < k; ++d) {
            const double v = per_dim_options[d][static_cast<std::size_t>(mm % 3)];
            mm /= 3;
            s += v * v;
        }
        crit.push_back(s);
    }
    std::vector<double> breaks{zlo, zhi, c[k]};
    for (double s : crit) {
        const double dz2 = r2 - s;
        if (dz2 > 0.0) {
            const double dz = std::sqrt(dz2);
            breaks.push_back(c[k] - dz);
            breaks.push_back(c[k] + dz);
        }
    }
    std::sort(breaks.begin(), breaks.end());
    static const QuadratureRule gl = gauss_legendre(12);
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        const double a = std::max(breaks[i], zlo), b = std::min(breaks[i + 1], zhi);
        if (b <= a) continue;
        const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
        for (std::size_t j = 0; j < gl.size(); ++j) {
            const double z = mid + half * gl.nodes[j];
            const double dz = z - c[k];
            total += gl.weights[j] * half * box_ball_overlap(k, lo, hi, c, r2 - dz * dz);
        }
    }
    return total;
}

}  // namespace detail

/// Integral of the cellwise-constant potential over the Euclidean ball B(x, r).
inline double ball_integral(const Potential& V, const Point& x, double r) {
    const Grid& g = V.grid();
    const int n = g.dim();
    const double h = g.spacing();
    const double L = g.half_width();
    IndexBox box;
    box.dim = n;
    for (int d = 0; d < n; ++d) {
        box.lo[d] = std::max(0L, static_cast<long>(std::floor((x[d] - r + L) / h)));
        box.hi[d] = std::min(static_cast<long>(g.points_per_side()), static_cast<long>(std::floor((x[d] + r + L) / h)) + 1);
        if (box.hi[d] <= box.lo[d]) return 0.0;
    }
    const double r2 = r * r;
    double total = 0.0;
    box.for_each(g, [&](std::size_t flat) {
        const double v = V.values()[flat];
        if (v == 0.0) return;
        const MultiIndex idx = g.unflatten(flat);
        double lo[kMaxDim], hi[kMaxDim], c[kMaxDim];
        double dmin2 = 0.0, dmax2 = 0.0;
        for (int d = 0; d < n; ++d) {
            lo[d] = -L + static_cast<double>(idx[d]) * h;
            hi[d] = lo[d] + h;
            c[d] = x[d];
            const double near = std::clamp(x[d], lo[d], hi[d]) - x[d];
            const double far = std::max(std::abs(lo[d] - x[d]), std::abs(hi[d] - x[d]));
            dmin2 += near * near;
            dmax2 += far * far;
        }
        if (dmin2 >= r2) return;
        if (dmax2 <= r2) {
            total += v * std::pow(h, n);
            return;
        }
        total += v * detail::box_ball_overlap(n, lo, hi, c, r2);
    });
    return total;
}

struct CriticalRadius {
    double value = 0.0;
    bool truncated = false;  ///< sup exceeds the resolvable range; value is the domain radius
};

struct CriticalRadiusOptions {
    double relative_tolerance = 1e-8;
    int scan_steps_per_octave = 8;
};

namespace detail {

// Cumulative integral of a cellwise-constant 1D potential; used as a fast path.
class Cumulative1D {
public:
    explicit Cumulative1D(const Potential& V) : h_(V.grid().spacing()), L_(V.grid().half_width()) {
        const auto& v = V.values().values();
        cum_.resize(static_cast<std::size_t>(v.size()) + 1, 0.0);
        for (Eigen::Index i = 0; i < v.size(); ++i) cum_[static_cast<std::size_t>(i) + 1] = cum_[static_cast<std::size_t>(i)] + v[i] * h_;
        vals_.assign(v.data(), v.data() + v.size());
    }
    double at(double x) const {
        const double s = (x + L_) / h_;
        if (s <= 0.0) return 0.0;
        const auto m = static_cast<double>(vals_.size());
        if (s >= m) return cum_.back();
        const auto i = static_cast<std::size_t>(std::floor(s));
        return cum_[i] + (s - static_cast<double>(i)) * h_ * vals_[i];
    }
    double interval(double a, double b) const { return at(b) - at(a); }

private:
    double h_, L_;
    std::vector<double> cum_;
    std::vector<double> vals_;
};

template <typename BallIntegral>
CriticalRadius critical_radius_impl(int n, double r_min, double r_max, BallIntegral&& ball, const CriticalRadiusOptions& opt) {
    auto F = [&](double r) { return std::pow(r, 2.0 - n) * ball(r); };
    if (F(r_max) <= 1.0) return {r_max, true};
    const double step = std::exp2(1.0 / opt.scan_steps_per_octave);
    std::vector<double> radii;
    for (double r = r_max; r > r_min; r /= step) radii.push_back(r);
    radii.push_back(r_min);
    std::reverse(radii.begin(), radii.end());
    // last crossing: largest bracket [r_j, r_{j+1}] with F(r_j) <= 1 < F(r_{j+1})
    double lo = 0.0, hi = radii.front();
    double f_next = F(radii.back());
    for (std::size_t j = radii.size() - 1; j-- > 0;) {
        const double f_here = F(radii[j]);
        if (f_here <= 1.0 && f_next > 1.0) {
            lo = radii[j];
            hi = radii[j + 1];
            break;
        }
        f_next = f_here;
        if (j == 0) {
            lo = 0.0;
            hi = radii.front();
        }
    }
    while (hi - lo > opt.relative_tolerance * hi) {
        const double mid = lo == 0.0 ? 0.5 * hi : 0.5 * (lo + hi);
        if (F(mid) <= 1.0)
            lo = mid;
        else
            hi = mid;
    }
    return {lo == 0.0 ? hi : lo, false};
}

}  // namespace detail

inline double domain_radius(const Grid& g) { return 2.0 * g.half_width() * std::sqrt(static_cast<double>(g.dim())); }

/// rho(x) = sup{r > 0 : r^{2-n} int_{B(x,r)} V <= 1}, by geometric scan for the last
/// sub-level crossing followed by bisection.
inline CriticalRadius critical_radius(const Potential& V, const Point& x, const CriticalRadiusOptions& opt = {}) {
    const Grid& g = V.grid();
    const double r_max = domain_radius(g);
    if (V.is_zero()) return {r_max, true};
    const double r_min = g.spacing() / 64.0;
    if (g.dim() == 1) {
        const detail::Cumulative1D cum(V);
        return detail::critical_radius_impl(1, r_min, r_max, [&](double r) { return cum.interval(x[0] - r, x[0] + r); }, opt);
    }
    return detail::critical_radius_impl(g.dim(), r_min, r_max, [&](double r) { return ball_integral(V, x, r); }, opt);
}

struct CriticalRadiusField {
    GridFunction values;
    bool any_truncated = false;
    double relative_tolerance = 1e-8;

    /// Multilinear interpolation of rho at an arbitrary point (clamped to cell centers).
    double at(const Point& x) const {
        const Grid& g = values.grid();
        const int n = g.dim();
        long base[kMaxDim];
        double frac[kMaxDim];
        for (int d = 0; d < n; ++d) {
            const double s = (x[d] + g.half_width()) / g.spacing() - 0.5;
            const double sc = std::clamp(s, 0.0, static_cast<double>(g.points_per_side() - 1));
            base[d] = std::min(static_cast<long>(std::floor(sc)), static_cast<long>(g.points_per_side()) - 2);
            base[d] = std::max(base[d], 0L);
            frac[d] = g.points_per_side() == 1 ? 0.0 : sc - static_cast<double>(base[d]);
        }
        double acc = 0.0;
        for (int corner = 0; corner < (1 << n); ++corner) {
            MultiIndex idx{0, 0, 0};
            double w = 1.0;
            for (int d = 0; d < n; ++d) {
                const int bit = (corner >> d) & 1;
                idx[d] = std::min(base[d] + bit, static_cast<long>(g.points_per_side()) - 1);
                w *= bit ? frac[d] : 1.0 - frac[d];
            }
            if (w != 0.0) acc += w * values[g.flatten(idx)];
        }
        return acc;
    }
};

inline CriticalRadiusField critical_radius_field(const Potential& V, const CriticalRadiusOptions& opt = {}) {
    const Grid& g = V.grid();
    CriticalRadiusField field;
    field.relative_tolerance = opt.relative_tolerance;
    Eigen::VectorXd v(static_cast<Eigen::Index>(g.size()));
    for (std::size_t i = 0; i < g.size(); ++i) {
        const CriticalRadius r = critical_radius(V, g.point(i), opt);
        v[static_cast<Eigen::Index>(i)] = r.value;
        field.any_truncated = field.any_truncated || r.truncated;
    }
    field.values = GridFunction(g, std::move(v));
    return field;
}

struct Ball {
    Point center{0.0, 0.0, 0.0};
    double radius = 1.0;
};

struct RevHolderReport {
    double q = 1.0;
    double fitted_constant = 1.0;
    Ball attaining_ball;
    bool q_at_least_dim = false;  ///< q >= n
    bool q_at_least_half_dim = false;   ///< q >= n/2
};

/// Cell centers within Euclidean distance r of the ball center.
inline std::vector<std::size_t> cells_in_ball(const Grid& g, const Ball& b) {
    std::vector<std::size_t> out;
    IndexBox box;
    box.dim = g.dim();
    for (int d = 0; d < g.dim(); ++d) {
        box.lo[d] = std::max(0L, static_cast<long>(std::floor((b.center[d] - b.radius + g.half_width()) / g.spacing() - 0.5)));
        box.hi[d] = std::min(static_cast<long>(g.points_per_side()),
                             static_cast<long>(std::ceil((b.center[d] + b.radius + g.half_width()) / g.spacing() - 0.5)) + 1);
    }
    box.for_each(g, [&](std::size_t i) {
        if (distance(g.point(i), b.center, g.dim()) <= b.radius) out.push_back(i);
    });
    return out;
}

/// Fitted reverse Holder constant max_B (mean_B V^q)^{1/q} / mean_B V over a ball family.
inline RevHolderReport reverse_holder_constant(const Potential& V, double q, const std::vector<Ball>& balls) {
    if (q < 1.0) throw DomainError("reverse Holder exponent must be >= 1");
    const Grid& g = V.grid();
    RevHolderReport rep;
    rep.q = q;
    rep.fitted_constant = 0.0;
    rep.q_at_least_dim = q >= g.dim();
    rep.q_at_least_half_dim = q >= 0.5 * g.dim();
    for (const Ball& b : balls) {
        for (int d = 0; d < g.dim(); ++d)
            if (std::abs(b.center[d]) > g.half_width()) throw GeometryError("ball center outside the domain");
        const auto cells = cells_in_ball(g, b);
        if (cells.empty()) throw GeometryError("ball contains no cell center");
        double m1 = 0.0, mq = 0.0;
        for (std::size_t i : cells) {
            m1 += V.values()[i];
            mq += std::pow(V.values()[i], q);
        }
        m1 /= static_cast<double>(cells.size());
        mq /= static_cast<double>(cells.size());
        if (m1 == 0.0) continue;
        const double c = std::pow(mq, 1.0 / q) / m1;
        if (c > rep.fitted_constant) {
            rep.fitted_constant = c;
            rep.attaining_ball = b;
        }
    }
    return rep;
}

struct RhoComparabilityReport {
    double C = 1.0;
    double k0 = 1.0;
    std::vector<std::pair<double, double>> constant_by_k0;  ///< (k0, smallest C)
    double local_max_ratio = 1.0;  ///< max rho(y)/rho(x) or inverse over pairs with |x-y| <= rho(x)/4
};

/// Smallest constants (C, k0) on a k0 lattice making the rho comparability envelope hold.
inline RhoComparabilityReport check_rho_comparability(const CriticalRadiusField& rho,
                                                      const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                                      const std::vector<double>& k0_lattice = {1, 1.5, 2, 3, 4, 6, 8}) {
    const Grid& g = rho.values.grid();
    RhoComparabilityReport rep;
    rep.C = std::numeric_limits<double>::infinity();
    rep.local_max_ratio = 1.0;
    for (double k0 : k0_lattice) {
        double C = 1.0;
        for (auto [ix, iy] : pairs) {
            const double rx = rho.values[ix], ry = rho.values[iy];
            const double d = distance(g.point(ix), g.point(iy), g.dim());
            const double s = 1.0 + d / rx;
            C = std::max(C, rx * std::pow(s, -k0) / ry);
            C = std::max(C, ry / (rx * std::pow(s, k0 / (k0 + 1.0))));
        }
        rep.constant_by_k0.emplace_back(k0, C);
        if (C < rep.C) {
            rep.C = C;
            rep.k0 = k0;
        }
    }
    for (auto [ix, iy] : pairs) {
        const double rx = rho.values[ix], ry = rho.values[iy];
        if (distance(g.point(ix), g.point(iy), g.dim()) <= 0.25 * rx) rep.local_max_ratio = std::max({rep.local_max_ratio, ry / rx, rx / ry});
    }
    return rep;
}

/// Doubling exponent log2 max_B V(2B)/V(B) over balls centered at the sample points.
inline double fitted_doubling_exponent(const Potential& V, const std::vector<Point>& centers, const std::vector<double>& radii) {
    double best = 0.0;
    for (const auto& c : centers)
        for (double r : radii) {
            const double a = ball_integral(V, c, r);
            if (a <= 0.0) continue;
            best = std::max(best, std::log2(ball_integral(V, c, 2.0 * r) / a));
        }
    return best;
}

}  // namespace balayage
