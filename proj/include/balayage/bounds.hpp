#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "balayage/potential.hpp"
#include "balayage/spectral.hpp"

namespace balayage {

struct Sample {
    Point x{0.0, 0.0, 0.0};
    Point y{0.0, 0.0, 0.0};
    double t = 0.0;
};

/// Smallest constant making one envelope hold over the sampled lattice.
struct BoundRecord {
    std::string estimate_id;
    double fitted_C = 0.0;
    Sample argmax;
    std::map<std::string, double> params;
};

struct BoundReport {
    std::vector<BoundRecord> records;

    const BoundRecord* find(const std::string& id) const {
        for (const auto& r : records)
            if (r.estimate_id == id) return &r;
        return nullptr;
    }
    /// Record with the given id whose params contain every given key/value.
    const BoundRecord* find(const std::string& id, const std::map<std::string, double>& where) const {
        for (const auto& r : records) {
            if (r.estimate_id != id) continue;
            bool ok = true;
            for (const auto& [k, v] : where) {
                auto it = r.params.find(k);
                ok = ok && it != r.params.end() && it->second == v;
            }
            if (ok) return &r;
        }
        return nullptr;
    }
};

namespace detail {

struct Fit {
    double C = 0.0;
    Sample at;
    void offer(double ratio, const Sample& s) {
        if (std::isfinite(ratio) && ratio > C) {
            C = ratio;
            at = s;
        }
    }
};

inline std::vector<std::size_t> strided(const Grid& g, int stride) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const MultiIndex idx = g.unflatten(i);
        bool keep = true;
        for (int d = 0; d < g.dim(); ++d) keep = keep && idx[d] % stride == 0;
        if (keep) out.push_back(i);
    }
    return out;
}

inline double rho_at(const CriticalRadiusField* rho, std::size_t i) {
    return rho ? rho->values[i] : std::numeric_limits<double>::infinity();
}

}  // namespace detail

struct KernelBoundParams {
    std::vector<double> N_values{1, 2, 4, 8};
    std::vector<double> c_values{2, 4, 8};
    double beta = 0.5;
    std::vector<double> t_values;  ///< empty selects powers of sqrt 2 from h/2 to 4L
    int sample_stride = 1;
    /// entries below this fraction of the diagonal are roundoff and skipped in the Gaussian fits
    double relative_floor = 1e-10;
    /// samples of the t grad e^{-t sqrt L}(1) bound keep |x_i| <= interior_fraction * L, away from the Dirichlet walls
    double interior_fraction = 0.5;
};

inline std::vector<double> default_t_lattice(const Grid& g) { return geometric_heights(0.5 * g.spacing(), 4.0 * g.half_width()); }

/// Fitted constants for the heat-kernel Gaussian bound and its Holder variant, the
/// Poisson size and gradient bounds, and the bound on t grad e^{-t sqrt L}(1).
/// A null `rho` means rho = infinity (free operator).
inline BoundReport verify_kernel_bounds(const SpectralDecomposition& dec, const CriticalRadiusField* rho, const KernelBoundParams& p = {}) {
    const Grid& g = dec.grid();
    const int n = g.dim();
    if (!(p.beta > 0.0 && p.beta < 1.0)) throw DomainError("beta must lie in (0, 1)");
    const auto ts = p.t_values.empty() ? default_t_lattice(g) : p.t_values;
    const auto pts = detail::strided(g, p.sample_stride);
    const std::size_t nc = p.c_values.size(), nN = p.N_values.size();
    std::vector<detail::Fit> hk(nc * nN), hold(nc * nN), psize(nN), pgrad(nN), pone(nN);

    for (double t : ts) {
        const Eigen::MatrixXd H = heat_kernel(dec, t).matrix;
        const Eigen::MatrixXd P = poisson_kernel_spectral(dec, t).matrix;
        const GradientKernels G = gradient_kernels(dec, t);
        const Eigen::MatrixXd Gmag = gradient_magnitude(G);
        const double st = std::sqrt(t);
        for (std::size_t a : pts) {
            const Point x = g.point(a);
            const auto ia = static_cast<Eigen::Index>(a);
            const double floor_h = p.relative_floor * std::abs(H(ia, ia));
            const double rx = detail::rho_at(rho, a);
            for (std::size_t b : pts) {
                const Point y = g.point(b);
                const auto ib = static_cast<Eigen::Index>(b);
                const double d = distance(x, y, n);
                const double ry = detail::rho_at(rho, b);
                const Sample s{x, y, t};
                const double R = std::sqrt(t * t + d * d);
                const double size_env = t / std::pow(R, n + 1);
                for (std::size_t iN = 0; iN < nN; ++iN) {
                    const double N = p.N_values[iN];
                    const double heat_damp = std::pow(1.0 + st / rx + st / ry, -N);
                    const double pois_damp = std::pow(1.0 + R / rx + R / ry, -N);
                    psize[iN].offer(std::abs(P(ia, ib)) / (size_env * pois_damp), s);
                    pgrad[iN].offer(t * Gmag(ia, ib) / (size_env * pois_damp), s);
                    if (std::abs(H(ia, ib)) < floor_h) continue;
                    for (std::size_t ic = 0; ic < nc; ++ic) {
                        const double gauss = std::exp(-d * d / (p.c_values[ic] * t)) / std::pow(t, 0.5 * n);
                        hk[ic * nN + iN].offer(H(ia, ib) / (gauss * heat_damp), s);
                    }
                }
            }
            // Holder variant: x' ranges over sampled points with |x - x'| <= sqrt t
            for (std::size_t a2 : pts) {
                if (a2 == a) continue;
                const Point x2 = g.point(a2);
                const double dx = distance(x, x2, n);
                if (dx > st) continue;
                const auto ia2 = static_cast<Eigen::Index>(a2);
                for (std::size_t b : pts) {
                    const auto ib = static_cast<Eigen::Index>(b);
                    if (std::abs(H(ia, ib)) < floor_h) continue;
                    const Point y = g.point(b);
                    const double d = distance(x, y, n);
                    const double ry = detail::rho_at(rho, b);
                    const double diff = std::abs(H(ia, ib) - H(ia2, ib));
                    for (std::size_t iN = 0; iN < nN; ++iN) {
                        const double damp = std::pow(1.0 + st / rx + st / ry, -p.N_values[iN]);
                        for (std::size_t ic = 0; ic < nc; ++ic) {
                            const double env = std::pow(dx / st, p.beta) * std::exp(-d * d / (p.c_values[ic] * t)) / std::pow(t, 0.5 * n) * damp;
                            hold[ic * nN + iN].offer(diff / env, {x, y, t});
                        }
                    }
                }
            }
        }
        // t grad e^{-t sqrt L}(1) at interior points
        const Eigen::VectorXd one = Eigen::VectorXd::Ones(dec.size());
        const Eigen::VectorXd u1 = dec.apply(poisson_multiplier(dec, t), one);
        const Eigen::VectorXd du1 = dec.apply(poisson_dt_multiplier(dec, t), one);
        Eigen::VectorXd gx2 = Eigen::VectorXd::Zero(dec.size());
        for (int d = 0; d < n; ++d) gx2 += difference_rows(g, Eigen::MatrixXd(u1), d).col(0).cwiseAbs2();
        for (std::size_t a : pts) {
            const Point x = g.point(a);
            bool interior = true;
            for (int d = 0; d < n; ++d) interior = interior && std::abs(x[d]) <= p.interior_fraction * g.half_width();
            if (!interior) continue;
            const auto ia = static_cast<Eigen::Index>(a);
            const double grad = t * (std::sqrt(gx2[ia]) + std::abs(du1[ia]));
            const double rx = detail::rho_at(rho, a);
            for (std::size_t iN = 0; iN < nN; ++iN) {
                const double env = std::pow(t / rx, p.beta) * std::pow(1.0 + t / rx, -p.N_values[iN]);
                pone[iN].offer(grad / env, {x, x, t});
            }
        }
    }

    BoundReport rep;
    for (std::size_t iN = 0; iN < nN; ++iN) {
        const double N = p.N_values[iN];
        for (std::size_t ic = 0; ic < nc; ++ic) {
            const double c = p.c_values[ic];
            rep.records.push_back({"hk_bound", hk[ic * nN + iN].C, hk[ic * nN + iN].at, {{"N", N}, {"c", c}}});
            rep.records.push_back({"hk_holder", hold[ic * nN + iN].C, hold[ic * nN + iN].at, {{"N", N}, {"c", c}, {"beta", p.beta}}});
        }
        // best Gaussian width for this N
        std::size_t best = 0;
        for (std::size_t ic = 1; ic < nc; ++ic)
            if (hk[ic * nN + iN].C < hk[best * nN + iN].C) best = ic;
        rep.records.push_back({"hk_bound_best", hk[best * nN + iN].C, hk[best * nN + iN].at, {{"N", N}, {"c", p.c_values[best]}}});
        rep.records.push_back({"poisson_size", psize[iN].C, psize[iN].at, {{"N", N}}});
        rep.records.push_back({"poisson_gradient", pgrad[iN].C, pgrad[iN].at, {{"N", N}}});
        rep.records.push_back({"poisson_of_one_gradient", pone[iN].C, pone[iN].at, {{"N", N}, {"beta", p.beta}}});
    }
    return rep;
}

struct VIntegralParams {
    double delta = 0.5;
    double N = 8.0;
    /// doubling exponent C0; negative selects the value fitted from V
    double C0 = -1.0;
    std::vector<double> t_values;
    int sample_stride = 1;
    double interior_fraction = 0.5;
};

/// int_0^inf min{(t/rho)^delta, (t/rho)^{2 - N/2}} dt/t by Gauss panels in log t on each side
/// of the kink at t = rho; equals 1/delta + 1/(N/2 - 2).
inline double envelope_log_integral(double delta, double N, int panels = 64) {
    if (!(N > 4.0) || !(delta > 0.0)) throw DomainError("envelope integral needs N > 4 and delta > 0");
    const double decay = 0.5 * N - 2.0;
    const double span = 40.0 / std::min(delta, decay);
    const QuadratureRule ref = gauss_legendre(16, 0.0, span / panels);
    double acc = 0.0;
    for (int k = 0; k < panels; ++k)
        for (std::size_t j = 0; j < ref.size(); ++j) {
            const double v = k * span / panels + ref.nodes[j];
            acc += ref.weights[j] * (std::exp(-delta * v) + std::exp(-decay * v));
        }
    return acc;
}

/// Fitted constants and envelope exponents for the two V-integral estimates.
inline BoundReport verify_V_integrals(const SpectralDecomposition& dec, const Potential& V, const CriticalRadiusField& rho,
                                      const VIntegralParams& p = {}) {
    const Grid& g = dec.grid();
    const int n = g.dim();
    const auto ts = p.t_values.empty() ? default_t_lattice(g) : p.t_values;
    BoundReport rep;
    if (V.is_zero()) {
        for (const char* id : {"V_gaussian_average", "V_poisson_log_weighted"}) rep.records.push_back({id, 0.0, {}, {{"delta", p.delta}, {"N", p.N}}});
        return rep;
    }
    double C0 = p.C0;
    if (C0 < 0.0) {
        std::vector<Point> centers{g.point(g.size() / 2)};
        C0 = fitted_doubling_exponent(V, centers, geometric_heights(2.0 * g.spacing(), 0.5 * g.half_width(), 2.0));
    }
    std::vector<std::size_t> pts;
    for (std::size_t a : detail::strided(g, p.sample_stride)) {
        bool interior = true;
        const Point x = g.point(a);
        for (int d = 0; d < n; ++d) interior = interior && std::abs(x[d]) <= p.interior_fraction * g.half_width();
        if (interior) pts.push_back(a);
    }
    detail::Fit fit22, fit23;
    // (log ratio, log value) pairs for exponent fits
    std::vector<std::pair<double, double>> small22, small23, large23;
    const Eigen::VectorXd& v = V.values().values();
    for (double t : ts) {
        const Eigen::MatrixXd P = poisson_kernel_spectral(dec, t).matrix;
        for (std::size_t a : pts) {
            const Point x = g.point(a);
            const double rx = rho.values[a];
            double lhs22 = 0.0, lhs23 = 0.0;
            for (std::size_t b = 0; b < g.size(); ++b) {
                const auto ib = static_cast<Eigen::Index>(b);
                if (v[ib] == 0.0) continue;
                const double d = distance(x, g.point(b), n);
                const double phi = std::exp(-d * d / (4.0 * t)) / std::pow(4.0 * std::numbers::pi * t, 0.5 * n);
                lhs22 += phi * v[ib];
                lhs23 += (1.0 + std::abs(std::log(rho.values[b] / t))) * t * P(static_cast<Eigen::Index>(a), ib) * v[ib];
            }
            lhs22 *= g.cell_volume();
            lhs23 *= g.cell_volume();
            const double r = std::sqrt(t) / rx;
            const double env22 = t <= rx * rx ? std::pow(r, p.delta) / t : std::pow(r, C0 + 2.0 - n);
            const double q = t / rx;
            const double env23 = std::min(std::pow(q, p.delta), std::pow(q, 2.0 - 0.5 * p.N)) / t;
            const Sample s{x, x, t};
            fit22.offer(lhs22 / env22, s);
            fit23.offer(lhs23 / env23, s);
            if (a == pts[pts.size() / 2] && lhs22 > 0.0 && lhs23 > 0.0) {
                if (t <= rx * rx) small22.emplace_back(std::log(r), std::log(t * lhs22));
                if (q < 1.0) small23.emplace_back(std::log(q), std::log(t * lhs23));
                if (q > 1.0) large23.emplace_back(std::log(q), std::log(t * lhs23));
            }
        }
    }
    auto slope = [](const std::vector<std::pair<double, double>>& xy) {
        if (xy.size() < 2) return std::numeric_limits<double>::quiet_NaN();
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (auto [x, y] : xy) {
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double k = static_cast<double>(xy.size());
        return (k * sxy - sx * sy) / (k * sxx - sx * sx);
    };
    rep.records.push_back({"V_gaussian_average", fit22.C, fit22.at, {{"delta", p.delta}, {"C0", C0}, {"small_t_exponent", slope(small22)}}});
    rep.records.push_back({"V_poisson_log_weighted", fit23.C, fit23.at,
                           {{"delta", p.delta}, {"N", p.N}, {"small_t_exponent", slope(small23)}, {"large_t_exponent", slope(large23)}}});
    return rep;
}

/// Continuum Gaussian family A_t(x, y) = (4 pi t^2)^{-n/2} e^{-|x-y|^2 / 4t^2} sampled on the grid.
inline KernelFamily free_gaussian_family(const Grid& g) {
    return {"free_gaussian", [g](double t) {
                KernelMatrix K{g, Eigen::MatrixXd(g.size(), g.size()), t, KernelKind::heat};
                const double norm = std::pow(4.0 * std::numbers::pi * t * t, -0.5 * g.dim());
                for (std::size_t a = 0; a < g.size(); ++a)
                    for (std::size_t b = 0; b < g.size(); ++b) {
                        const double d = distance(g.point(a), g.point(b), g.dim());
                        K.matrix(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = norm * std::exp(-d * d / (4.0 * t * t));
                    }
                return K;
            }};
}

struct AoiParams {
    double eps = 1.0;
    double eps_prime = 1.0;
    std::vector<double> t_values;
    double dt_relative_step = 1e-3;
};

/// Decay constants for the size and t-derivative axioms and the semigroup defect.
inline BoundReport verify_aoi_axioms(const KernelFamily& family, const Grid& g, const AoiParams& p = {}) {
    if (p.eps_prime > p.eps) throw DomainError("eps_prime must not exceed eps");
    const int n = g.dim();
    const auto ts = p.t_values.empty() ? geometric_heights(2.0 * g.spacing(), g.half_width(), 2.0) : p.t_values;
    detail::Fit size, deriv;
    double defect = 0.0;
    Sample defect_at;
    for (std::size_t k = 0; k < ts.size(); ++k) {
        const double t = ts[k];
        const KernelMatrix A = family.at(t);
        const double e = p.dt_relative_step * t;
        const Eigen::MatrixXd tdA = t * (family.at(t + e).matrix - family.at(t - e).matrix) / (2.0 * e);
        for (std::size_t a = 0; a < g.size(); ++a)
            for (std::size_t b = 0; b < g.size(); ++b) {
                const double d = distance(g.point(a), g.point(b), n);
                const auto ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b);
                const Sample s{g.point(a), g.point(b), t};
                size.offer(std::abs(A.matrix(ia, ib)) * std::pow(t, n) * std::pow(1.0 + d / t, n + p.eps), s);
                deriv.offer(std::abs(tdA(ia, ib)) * std::pow(t, n) * std::pow(1.0 + d / t, n + p.eps_prime), s);
            }
        const double s2 = ts[(k + 1) % ts.size()];
        const double dft = (A.compose(family.at(s2)).matrix - family.at(t + s2).matrix).cwiseAbs().maxCoeff();
        if (dft > defect) {
            defect = dft;
            defect_at = {{0, 0, 0}, {0, 0, 0}, t};
        }
    }
    BoundReport rep;
    rep.records.push_back({"aoi_size", size.C, size.at, {{"eps", p.eps}}});
    rep.records.push_back({"aoi_time_derivative", deriv.C, deriv.at, {{"eps_prime", p.eps_prime}}});
    rep.records.push_back({"aoi_semigroup_defect", defect, defect_at, {}});
    return rep;
}

}  // namespace balayage
