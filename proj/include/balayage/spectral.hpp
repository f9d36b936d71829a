#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "balayage/grid.hpp"
#include "balayage/potential.hpp"
#include "balayage/quadrature.hpp"

namespace balayage {

/// -Delta_h + diag(V) with the (2n+1)-point stencil and zero Dirichlet data outside the box.
struct SchrodingerMatrix {
    Grid grid;
    Eigen::MatrixXd matrix;
};

inline SchrodingerMatrix assemble_operator(const Grid& grid, const Potential& V) {
    if (!(V.grid() == grid)) throw GeometryError("potential lives on a different grid");
    if (V.values().values().minCoeff() < 0.0) throw DomainError("negative potential entry");
    const auto N = static_cast<Eigen::Index>(grid.size());
    const double inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    SchrodingerMatrix op{grid, Eigen::MatrixXd::Zero(N, N)};
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto a = static_cast<Eigen::Index>(i);
        op.matrix(a, a) = 2.0 * grid.dim() * inv_h2 + V.values()[i];
        MultiIndex idx = grid.unflatten(i);
        for (int d = 0; d < grid.dim(); ++d) {
            for (int step : {-1, 1}) {
                MultiIndex nb = idx;
                nb[d] += step;
                if (!grid.contains_index(nb)) continue;
                op.matrix(a, static_cast<Eigen::Index>(grid.flatten(nb))) = -inv_h2;
            }
        }
    }
    return op;
}

/// Eigenpairs of L with psi_k orthonormal in the h^n-weighted inner product.
class SpectralDecomposition {
public:
    SpectralDecomposition(const SchrodingerMatrix& op, Potential V) : grid_(op.grid), potential_(std::move(V)) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(op.matrix);
        if (es.info() != Eigen::Success) throw ConvergenceError("eigendecomposition failed", 0.0);
        lambda_ = es.eigenvalues().cwiseMax(0.0);
        psi_ = es.eigenvectors() / std::sqrt(grid_.cell_volume());
        root_ = lambda_.cwiseSqrt();
    }

    static SpectralDecomposition compute(const Grid& grid, const Potential& V) {
        return SpectralDecomposition(assemble_operator(grid, V), V);
    }

    const Grid& grid() const noexcept { return grid_; }
    const Potential& potential() const noexcept { return potential_; }
    const Eigen::VectorXd& eigenvalues() const noexcept { return lambda_; }
    const Eigen::VectorXd& sqrt_eigenvalues() const noexcept { return root_; }
    /// Columns are the eigenfunctions psi_k sampled at the grid points.
    const Eigen::MatrixXd& eigenfunctions() const noexcept { return psi_; }
    Eigen::Index size() const noexcept { return lambda_.size(); }

    /// f_hat_k = <f, psi_k> with the h^n weight.
    Eigen::VectorXd coefficients(const Eigen::VectorXd& f) const {
        return psi_.transpose() * f * grid_.cell_volume();
    }
    Eigen::VectorXd synthesize(const Eigen::VectorXd& coeffs) const { return psi_ * coeffs; }

    /// m(L) f for a multiplier given per mode.
    Eigen::VectorXd apply(const Eigen::VectorXd& multiplier, const Eigen::VectorXd& f) const {
        return synthesize(multiplier.cwiseProduct(coefficients(f)));
    }

    /// Gram matrix of the eigenfunctions in the weighted inner product.
    Eigen::MatrixXd gram() const { return psi_.transpose() * psi_ * grid_.cell_volume(); }

private:
    Grid grid_;
    Potential potential_;
    Eigen::VectorXd lambda_;
    Eigen::VectorXd root_;
    Eigen::MatrixXd psi_;
};

enum class KernelKind { heat, poisson, grad_poisson_x, grad_poisson_t, custom };

inline std::string to_string(KernelKind k) {
    switch (k) {
        case KernelKind::heat: return "heat";
        case KernelKind::poisson: return "poisson";
        case KernelKind::grad_poisson_x: return "grad_poisson_x";
        case KernelKind::grad_poisson_t: return "grad_poisson_t";
        case KernelKind::custom: return "custom";
    }
    return "custom";
}

/// K(x, y) with the convention (K f)(x) = sum_y K(x, y) f(y) h^n.
struct KernelMatrix {
    Grid grid;
    Eigen::MatrixXd matrix;
    double t = 0.0;
    KernelKind kind = KernelKind::custom;

    Eigen::VectorXd apply(const Eigen::VectorXd& f) const { return matrix * f * grid.cell_volume(); }
    GridFunction apply(const GridFunction& f) const { return GridFunction(grid, apply(f.values())); }
    /// Row sums times h^n: the kernel applied to the constant 1.
    Eigen::VectorXd mass() const { return matrix.rowwise().sum() * grid.cell_volume(); }
    KernelMatrix compose(const KernelMatrix& o) const {
        return KernelMatrix{grid, matrix * o.matrix * grid.cell_volume(), t + o.t, kind};
    }
};

inline Eigen::MatrixXd spectral_matrix(const SpectralDecomposition& dec, const Eigen::VectorXd& multiplier) {
    const Eigen::MatrixXd& psi = dec.eigenfunctions();
    return (psi * multiplier.asDiagonal()) * psi.transpose();
}

namespace detail {

// e^{x} with deep underflow flushed to zero; denormals make dense products crawl.
inline Eigen::ArrayXd flushed_exp(const Eigen::ArrayXd& x) { return (x < -700.0).select(0.0, x.exp()); }

}  // namespace detail

inline Eigen::VectorXd heat_multiplier(const SpectralDecomposition& dec, double t) {
    return detail::flushed_exp(-t * dec.eigenvalues().array()).matrix();
}
inline Eigen::VectorXd poisson_multiplier(const SpectralDecomposition& dec, double t) {
    return detail::flushed_exp(-t * dec.sqrt_eigenvalues().array()).matrix();
}
/// d/dt e^{-t sqrt(lambda)}.
inline Eigen::VectorXd poisson_dt_multiplier(const SpectralDecomposition& dec, double t) {
    return -(dec.sqrt_eigenvalues().array() * detail::flushed_exp(-t * dec.sqrt_eigenvalues().array())).matrix();
}

inline KernelMatrix heat_kernel(const SpectralDecomposition& dec, double t) {
    if (!(t > 0.0)) throw DomainError("heat kernel needs t > 0");
    return {dec.grid(), spectral_matrix(dec, heat_multiplier(dec, t)), t, KernelKind::heat};
}

inline KernelMatrix poisson_kernel_spectral(const SpectralDecomposition& dec, double t) {
    if (!(t > 0.0)) throw DomainError("Poisson kernel needs t > 0");
    return {dec.grid(), spectral_matrix(dec, poisson_multiplier(dec, t)), t, KernelKind::poisson};
}

/// Time-indexed kernel provider t -> K_t.
struct KernelFamily {
    std::string name;
    std::function<KernelMatrix(double)> at;
};

inline KernelFamily heat_family(const SpectralDecomposition& dec) {
    return {"heat", [&dec](double t) { return heat_kernel(dec, t); }};
}
inline KernelFamily poisson_family(const SpectralDecomposition& dec) {
    return {"poisson", [&dec](double t) { return poisson_kernel_spectral(dec, t); }};
}

/// Node-doubled refinement of a subordination rule: halves the log-u spacing.
inline SubordinationSpec doubled(const SubordinationSpec& s) { return {s.log_u_min, s.log_u_max, 2 * s.points - 1}; }

namespace detail {

template <typename Accumulate>
void subordinate(double t, const SubordinationSpec& spec, Accumulate&& acc) {
    const QuadratureRule rule = subordination_rule(spec);
    for (std::size_t j = 0; j < rule.size(); ++j) {
        if (rule.weights[j] < 1e-300) continue;
        acc(t * t / (4.0 * rule.nodes[j]), rule.weights[j]);
    }
}

}  // namespace detail

/// Subordinated multiplier sum_j w_j e^{-s_j lambda} with s_j = t^2 / (4 u_j).
inline Eigen::VectorXd subordinated_poisson_multiplier(const SpectralDecomposition& dec, double t, const SubordinationSpec& spec = {}) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(dec.size());
    detail::subordinate(t, spec, [&](double s, double w) { m += w * heat_multiplier(dec, s); });
    return m;
}

/// Scalar check of the subordination rule: approximates e^{-t sqrt(lambda)}.
inline double subordinated_scalar(double lambda, double t, const SubordinationSpec& spec = {}) {
    double acc = 0.0;
    detail::subordinate(t, spec, [&](double s, double w) { acc += w * std::exp(-s * lambda); });
    return acc;
}

struct SubordinationResult {
    KernelMatrix kernel;
    double drift = 0.0;  ///< max |K(spec) - K(doubled spec)| / max |K|
};

/// Poisson kernel from a heat-kernel provider via Bochner subordination, with a node-doubling check.
inline SubordinationResult poisson_kernel_subordination(const KernelFamily& heat, double t, const SubordinationSpec& spec = {},
                                                        double drift_tolerance = 1e-7) {
    if (!(t > 0.0)) throw DomainError("Poisson kernel needs t > 0");
    auto run = [&](const SubordinationSpec& s) {
        KernelMatrix out;
        bool first = true;
        detail::subordinate(t, s, [&](double time, double w) {
            KernelMatrix h = heat.at(time);
            if (first) {
                out = KernelMatrix{h.grid, w * h.matrix, t, KernelKind::poisson};
                first = false;
            } else {
                out.matrix.noalias() += w * h.matrix;
            }
        });
        return out;
    };
    KernelMatrix coarse = run(spec);
    KernelMatrix fine = run(doubled(spec));
    const double scale = std::max(fine.matrix.cwiseAbs().maxCoeff(), 1e-300);
    const double drift = (fine.matrix - coarse.matrix).cwiseAbs().maxCoeff() / scale;
    if (drift > drift_tolerance) throw ConvergenceError("subordination quadrature did not converge under node doubling", drift);
    return {std::move(fine), drift};
}

struct GradientKernels {
    std::vector<KernelMatrix> grad_x;  ///< one matrix per spatial axis, derivative in x
    KernelMatrix grad_t;
};

/// Centered (one-sided at the walls) difference along axis d of every column of K.
inline Eigen::MatrixXd difference_rows(const Grid& g, const Eigen::MatrixXd& K, int d) {
    Eigen::MatrixXd out(K.rows(), K.cols());
    const double h = g.spacing();
    for (std::size_t i = 0; i < g.size(); ++i) {
        MultiIndex idx = g.unflatten(i);
        MultiIndex lo = idx, hi = idx;
        lo[d] -= 1;
        hi[d] += 1;
        const auto a = static_cast<Eigen::Index>(i);
        if (!g.contains_index(lo)) {
            MultiIndex hi2 = idx;
            hi2[d] += 2;
            out.row(a) = (-3.0 * K.row(a) + 4.0 * K.row(static_cast<Eigen::Index>(g.flatten(hi))) -
                          K.row(static_cast<Eigen::Index>(g.flatten(hi2)))) /
                         (2.0 * h);
        } else if (!g.contains_index(hi)) {
            MultiIndex lo2 = idx;
            lo2[d] -= 2;
            out.row(a) = (3.0 * K.row(a) - 4.0 * K.row(static_cast<Eigen::Index>(g.flatten(lo))) +
                          K.row(static_cast<Eigen::Index>(g.flatten(lo2)))) /
                         (2.0 * h);
        } else {
            out.row(a) = (K.row(static_cast<Eigen::Index>(g.flatten(hi))) - K.row(static_cast<Eigen::Index>(g.flatten(lo)))) / (2.0 * h);
        }
    }
    return out;
}

inline GradientKernels gradient_kernels(const SpectralDecomposition& dec, double t) {
    if (!(t > 0.0)) throw DomainError("gradient kernels need t > 0");
    const Grid& g = dec.grid();
    if (g.points_per_side() < 3) throw ResolutionError("gradient kernels need at least 3 points per side");
    GradientKernels out;
    const Eigen::MatrixXd P = spectral_matrix(dec, poisson_multiplier(dec, t));
    for (int d = 0; d < g.dim(); ++d) out.grad_x.push_back({g, difference_rows(g, P, d), t, KernelKind::grad_poisson_x});
    out.grad_t = {g, spectral_matrix(dec, poisson_dt_multiplier(dec, t)), t, KernelKind::grad_poisson_t};
    return out;
}

/// |grad_X K| = |grad_x K| + |d_t K| entrywise.
inline Eigen::MatrixXd gradient_magnitude(const GradientKernels& gk) {
    Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(gk.grad_t.matrix.rows(), gk.grad_t.matrix.cols());
    for (const auto& k : gk.grad_x) sq += k.matrix.cwiseAbs2();
    return sq.cwiseSqrt() + gk.grad_t.matrix.cwiseAbs();
}

/// Poisson extension u(x, t) = e^{-t sqrt(L)} f, evaluated by spectral synthesis at any height.
class HarmonicExtension {
public:
    HarmonicExtension(const SpectralDecomposition& dec, const GridFunction& f) : dec_(&dec), coeffs_(dec.coefficients(f.values())) {
        if (!(f.grid() == dec.grid())) throw GeometryError("function lives on a different grid");
    }

    const SpectralDecomposition& decomposition() const noexcept { return *dec_; }
    const Eigen::VectorXd& coefficients() const noexcept { return coeffs_; }

    Eigen::VectorXd at(double t) const { return dec_->synthesize(poisson_multiplier(*dec_, t).cwiseProduct(coeffs_)); }
    Eigen::VectorXd dt(double t) const { return dec_->synthesize(poisson_dt_multiplier(*dec_, t).cwiseProduct(coeffs_)); }
    /// Second t-derivative, which must equal L u.
    Eigen::VectorXd dtt(double t) const {
        return dec_->synthesize(dec_->eigenvalues().cwiseProduct(poisson_multiplier(*dec_, t)).cwiseProduct(coeffs_));
    }
    /// u at a single grid point.
    double at(std::size_t flat, double t) const {
        return dec_->eigenfunctions().row(static_cast<Eigen::Index>(flat)).dot(poisson_multiplier(*dec_, t).cwiseProduct(coeffs_));
    }
    double dt(std::size_t flat, double t) const {
        return dec_->eigenfunctions().row(static_cast<Eigen::Index>(flat)).dot(poisson_dt_multiplier(*dec_, t).cwiseProduct(coeffs_));
    }

private:
    const SpectralDecomposition* dec_;
    Eigen::VectorXd coeffs_;
};

/// u(., t) sampled on sorted positive heights.
struct ExtensionTable {
    Grid grid;
    std::vector<double> t_levels;
    Eigen::MatrixXd values;  ///< column j holds u(., t_levels[j])
};

inline ExtensionTable harmonic_extension(const SpectralDecomposition& dec, const GridFunction& f, const std::vector<double>& t_levels) {
    for (std::size_t j = 0; j < t_levels.size(); ++j) {
        if (!(t_levels[j] > 0.0)) throw DomainError("extension heights must be positive");
        if (j && t_levels[j] <= t_levels[j - 1]) throw DomainError("extension heights must be increasing");
    }
    const HarmonicExtension u(dec, f);
    ExtensionTable tab{dec.grid(), t_levels, Eigen::MatrixXd(dec.size(), static_cast<Eigen::Index>(t_levels.size()))};
    for (std::size_t j = 0; j < t_levels.size(); ++j) tab.values.col(static_cast<Eigen::Index>(j)) = u.at(t_levels[j]);
    return tab;
}

/// Heights (sqrt 2)^k from lo up to hi inclusive.
inline std::vector<double> geometric_heights(double lo, double hi, double ratio = std::numbers::sqrt2) {
    std::vector<double> out;
    for (double t = lo; t <= hi * (1.0 + 1e-12); t *= ratio) out.push_back(t);
    return out;
}

struct ReproducingResidual {
    double exact = 0.0;        ///< ||f - 2 int_0^T sqrt(L) e^{-2t sqrt(L)} f dt||_2 via the spectral antiderivative
    double closed_form = 0.0;  ///< || e^{-2T sqrt(lambda)} f_hat ||
    double quadrature = 0.0;   ///< same residual with the time integral done by quadrature
    double discrepancy = 0.0;  ///< || r_quadrature - r_exact ||_2 / ||f||_2
};

/// Residual of f = 2 int_0^T sqrt(L) e^{-2t sqrt(L)} f dt, exactly and by a logistic trapezoid in t.
inline ReproducingResidual reproducing_formula_residual(const SpectralDecomposition& dec, const GridFunction& f, double T,
                                                        int nodes = 200) {
    if (T < 0.0) throw DomainError("T must be nonnegative");
    const Eigen::VectorXd fh = dec.coefficients(f.values());
    const Eigen::ArrayXd s = dec.sqrt_eigenvalues().array();
    const double w = std::sqrt(dec.grid().cell_volume());
    ReproducingResidual out;
    out.closed_form = ((-2.0 * T * s).exp() * fh.array()).matrix().norm();
    // antiderivative of 2 s e^{-2ts} over [0, T] is 1 - e^{-2Ts}
    const Eigen::VectorXd r_exact = f.values() - dec.synthesize((1.0 - (-2.0 * T * s).exp()).matrix().cwiseProduct(fh));
    out.exact = r_exact.norm() * w;
    if (T == 0.0) {
        out.quadrature = out.exact;
        return out;
    }
    const double tmin = 1e-8 / std::max(s.maxCoeff(), 1.0);
    const QuadratureRule rule = logistic_trapezoid(T, std::log(tmin / T), 24.0, nodes);
    Eigen::ArrayXd integral = Eigen::ArrayXd::Zero(s.size());
    for (std::size_t j = 0; j < rule.size(); ++j) integral += rule.weights[j] * 2.0 * s * (-2.0 * rule.nodes[j] * s).exp();
    const Eigen::VectorXd r_quad = f.values() - dec.synthesize((integral * fh.array()).matrix());
    out.quadrature = r_quad.norm() * w;
    out.discrepancy = (r_quad - r_exact).norm() * w / std::max(f.l2_norm(), 1e-300);
    return out;
}

/// Edge-difference Dirichlet form: <D p, D q> with ghost values 0, which equals <p, -Delta_h q>.
inline Eigen::VectorXd negative_laplacian(const Grid& g, const Eigen::VectorXd& q) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(q.size());
    const double inv_h2 = 1.0 / (g.spacing() * g.spacing());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const MultiIndex idx = g.unflatten(i);
        double acc = 2.0 * g.dim() * q[static_cast<Eigen::Index>(i)];
        for (int d = 0; d < g.dim(); ++d)
            for (int step : {-1, 1}) {
                MultiIndex nb = idx;
                nb[d] += step;
                if (g.contains_index(nb)) acc -= q[static_cast<Eigen::Index>(g.flatten(nb))];
            }
        out[static_cast<Eigen::Index>(i)] = acc * inv_h2;
    }
    return out;
}

struct GreenIdentitySpec {
    double t_min = 0.0;  ///< 0 selects h / 2
    double t_max = 16.0;
    int nodes = 400;
    double drift_tolerance = 1e-4;
};

struct GreenIdentityResult {
    double residual = 0.0;  ///< relative L2 residual of f against the assembled right side
    double drift = 0.0;     ///< change under node doubling, relative to ||f||_2
};

/// Composite Gauss-Legendre in log t (16-point panels, at least `nodes` nodes); weights are in dt.
inline QuadratureRule composite_log_gauss(double lo, double hi, int nodes) {
    constexpr int per_panel = 16;
    const int panels = std::max(1, (nodes + per_panel - 1) / per_panel);
    const double a = std::log(lo), b = std::log(hi), width = (b - a) / panels;
    const QuadratureRule ref = gauss_legendre(per_panel, 0.0, width);
    QuadratureRule rule;
    for (int p = 0; p < panels; ++p)
        for (std::size_t j = 0; j < ref.size(); ++j) {
            const double t = std::exp(a + p * width + ref.nodes[j]);
            rule.nodes.push_back(t);
            rule.weights.push_back(ref.weights[j] * t);
        }
    return rule;
}

/// Right side 2 int int t (grad P . grad u + P V u) dy dt with the full gradient (grad_y, d_t),
/// y-integral by grid summation (Dirichlet summation by parts) and t by panels in log t.
inline GreenIdentityResult green_identity_residual(const SpectralDecomposition& dec, const GridFunction& f,
                                                   const GreenIdentitySpec& spec = {}) {
    const Grid& g = dec.grid();
    const double t_lo = spec.t_min > 0.0 ? spec.t_min : 0.5 * g.spacing();
    if (!(spec.t_max > t_lo)) throw DomainError("Green identity window is empty");
    const HarmonicExtension u(dec, f);
    const Eigen::VectorXd& V = dec.potential().values().values();
    auto assemble = [&](int nodes) {
        const QuadratureRule rule = composite_log_gauss(t_lo, spec.t_max, nodes);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dec.size());
        for (std::size_t j = 0; j < rule.size(); ++j) {
            const double t = rule.nodes[j];
            const Eigen::VectorXd ut = u.at(t);
            const Eigen::VectorXd space = negative_laplacian(g, ut) + V.cwiseProduct(ut);
            const Eigen::VectorXd time = u.dt(t);
            // P_t applied to the spatial form plus d_t P_t applied to d_t u
            const Eigen::VectorXd integrand =
                dec.apply(poisson_multiplier(dec, t), space) + dec.apply(poisson_dt_multiplier(dec, t), time);
            rhs += rule.weights[j] * 2.0 * t * integrand;
        }
        return rhs;
    };
    const Eigen::VectorXd coarse = assemble(spec.nodes);
    const Eigen::VectorXd fine = assemble(2 * spec.nodes);
    const double w = std::sqrt(g.cell_volume());
    const double fn = std::max(f.l2_norm(), 1e-300);
    GreenIdentityResult out;
    out.drift = (fine - coarse).norm() * w / fn;
    if (out.drift > spec.drift_tolerance) throw ConvergenceError("Green identity quadrature did not converge under node doubling", out.drift);
    out.residual = (f.values() - fine).norm() * w / fn;
    return out;
}

}  // namespace balayage
