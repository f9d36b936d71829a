#include <gtest/gtest.h>

#include <numbers>

#include "balayage/spectral.hpp"

using namespace balayage;

namespace {

double free_heat(double t, double x) { return std::exp(-x * x / (4.0 * t)) / std::sqrt(4.0 * std::numbers::pi * t); }
double free_poisson(double t, double x) { return t / (std::numbers::pi * (t * t + x * x)); }

const SpectralDecomposition& free_fine() {
    static const Grid g(1, 512, 8.0);
    static const SpectralDecomposition dec = SpectralDecomposition::compute(g, Potential::zero(g));
    return dec;
}

}  // namespace

TEST(Operator, StencilAndDirichletSpectrum) {
    Grid g(1, 64);
    const auto V = Potential::from_samples(GridFunction::sample(g, [](const Point& p) { return 1.0 + p[0] * p[0]; }));
    const auto op = assemble_operator(g, V);
    const double h = g.spacing();
    EXPECT_DOUBLE_EQ(op.matrix(5, 5), 2.0 / (h * h) + V.values()[5]);
    EXPECT_DOUBLE_EQ(op.matrix(5, 6), -1.0 / (h * h));
    EXPECT_DOUBLE_EQ(op.matrix(5, 7), 0.0);
    EXPECT_TRUE(op.matrix.isApprox(op.matrix.transpose()));

    const auto dec = SpectralDecomposition::compute(g, Potential::zero(g));
    const int m = 64;
    for (int k = 1; k <= m; ++k) {
        const double s = std::sin(k * std::numbers::pi / (2.0 * (m + 1)));
        EXPECT_NEAR(dec.eigenvalues()[k - 1], 4.0 / (h * h) * s * s, 1e-9 * 4.0 / (h * h));
    }
    EXPECT_LT((dec.gram() - Eigen::MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff(), 1e-10);

    const auto shifted = SpectralDecomposition::compute(g, Potential::constant(g, 2.5));
    EXPECT_LT((shifted.eigenvalues() - dec.eigenvalues() - Eigen::VectorXd::Constant(m, 2.5)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Operator, TwoDimensionalStencil) {
    Grid g(2, 8);
    const auto op = assemble_operator(g, Potential::constant(g, 1.0));
    const double h2 = g.spacing() * g.spacing();
    const auto c = g.flatten({3, 4, 0});
    EXPECT_DOUBLE_EQ(op.matrix(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c)), 4.0 / h2 + 1.0);
    EXPECT_DOUBLE_EQ(op.matrix(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(g.flatten({3, 5, 0}))), -1.0 / h2);
    EXPECT_DOUBLE_EQ(op.matrix(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(g.flatten({4, 4, 0}))), -1.0 / h2);
}

TEST(Kernels, FreeContinuumAnchors) {
    const auto& dec = free_fine();
    const Grid& g = dec.grid();
    // x = y = 0 lies on a cell face; average the two central cells
    const auto i = static_cast<Eigen::Index>(g.size() / 2);
    const auto H = heat_kernel(dec, 1.0);
    const auto P = poisson_kernel_spectral(dec, 1.0);
    auto centre = [&](const Eigen::MatrixXd& K) { return 0.5 * (K(i, i) + K(i - 1, i)); };
    EXPECT_NEAR(centre(H.matrix) / (1.0 / std::sqrt(4.0 * std::numbers::pi)), 1.0, 0.01);
    EXPECT_NEAR(centre(P.matrix) / (1.0 / std::numbers::pi), 1.0, 0.01);
    const auto G = gradient_kernels(dec, 1.0);
    EXPECT_NEAR(centre(G.grad_t.matrix) / (-1.0 / std::numbers::pi), 1.0, 0.02);
}

TEST(Kernels, SemigroupShiftAndSymmetry) {
    Grid g(1, 64);
    const auto dec0 = SpectralDecomposition::compute(g, Potential::zero(g));
    const auto decc = SpectralDecomposition::compute(g, Potential::constant(g, 0.7));
    const auto H0 = heat_kernel(dec0, 0.3), Hc = heat_kernel(decc, 0.3);
    EXPECT_LT((Hc.matrix - std::exp(-0.7 * 0.3) * H0.matrix).cwiseAbs().maxCoeff(), 1e-10);
    for (auto make : {heat_kernel, poisson_kernel_spectral}) {
        const auto a = make(decc, 0.2), b = make(decc, 0.5), ab = make(decc, 0.7);
        EXPECT_LT((a.compose(b).matrix - ab.matrix).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT((a.matrix - a.matrix.transpose()).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_GT(a.matrix.minCoeff(), -1e-12);
    }
}

TEST(Kernels, DominationAndMass) {
    // the discrete symbol undershoots |xi|^2, so the comparison needs t well above h
    Grid g(1, 256, 4.0);
    const auto dec = SpectralDecomposition::compute(g, Potential::constant(g, 1.0));
    for (double t : {0.5, 1.0, 4.0}) {
        const auto P = poisson_kernel_spectral(dec, t);
        const auto H = heat_kernel(dec, t);
        double excess_p = 0.0, excess_h = 0.0;
        for (Eigen::Index a = 0; a < P.matrix.rows(); ++a)
            for (Eigen::Index b = 0; b < P.matrix.cols(); ++b) {
                const double d = g.coordinate(static_cast<long>(a)) - g.coordinate(static_cast<long>(b));
                excess_p = std::max(excess_p, P.matrix(a, b) - free_poisson(t, d));
                excess_h = std::max(excess_h, H.matrix(a, b) - free_heat(t, d));
            }
        EXPECT_LE(excess_p, 1e-3) << t;
        EXPECT_LE(excess_h, 1e-3) << t;
        const Eigen::VectorXd mass = P.mass();
        EXPECT_LT(mass.maxCoeff(), 1.0);
        EXPECT_GT(P.matrix.minCoeff(), -1e-12);
    }
}

TEST(Subordination, ScalarModes) {
    EXPECT_NEAR(subordinated_scalar(0.0, 1.0), 1.0, 1e-9);
    EXPECT_NEAR(subordinated_scalar(1.0, 1.0), std::exp(-1.0), 1e-10);
    for (double lambda : {1e-3, 0.5, 10.0, 1e4})
        for (double t : {0.01, 0.1, 1.0, 4.0}) EXPECT_NEAR(subordinated_scalar(lambda, t), std::exp(-t * std::sqrt(lambda)), 1e-9);
}

TEST(Subordination, MatrixAgainstSpectralOracle) {
    Grid g(1, 64);
    const auto dec = SpectralDecomposition::compute(g, Potential::constant(g, 1.0));
    const auto heat = heat_family(dec);
    SubordinationSpec spec;
    spec.points = 256;
    for (double t : {0.1, 1.0, 4.0}) {
        const auto sub = poisson_kernel_subordination(heat, t, spec, 1e-7);
        const Eigen::MatrixXd exact = poisson_kernel_spectral(dec, t).matrix;
        EXPECT_LE((sub.kernel.matrix - exact).cwiseAbs().maxCoeff() / exact.cwiseAbs().maxCoeff(), 1e-6);
        EXPECT_LT(sub.drift, 1e-7);
    }
    SubordinationSpec coarse{-46.0, 4.5, 8};
    EXPECT_THROW(poisson_kernel_subordination(heat, 1.0, coarse, 1e-7), ConvergenceError);
}

TEST(Gradient, TimeDerivativeMatchesFiniteDifference) {
    Grid g(1, 64);
    const auto dec = SpectralDecomposition::compute(g, Potential::constant(g, 1.0));
    const double t = 0.5;
    const auto G = gradient_kernels(dec, t);
    double prev = 1.0;
    for (double eps : {1e-2, 5e-3}) {
        const Eigen::MatrixXd fd =
            (poisson_kernel_spectral(dec, t + eps).matrix - poisson_kernel_spectral(dec, t - eps).matrix) / (2.0 * eps);
        const double err = (fd - G.grad_t.matrix).cwiseAbs().maxCoeff();
        EXPECT_LT(err, 1.0 * eps * eps * G.grad_t.matrix.cwiseAbs().maxCoeff() * 10.0);
        if (prev < 1.0) {
            EXPECT_NEAR(prev / err, 4.0, 0.2);
        }
        prev = err;
    }
    // spatial derivative of a smooth kernel column against the known sine modes
    ASSERT_EQ(G.grad_x.size(), 1u);
    EXPECT_EQ(G.grad_x[0].kind, KernelKind::grad_poisson_x);
}

TEST(Extension, EigenvectorAndContraction) {
    Grid g(1, 64);
    const auto dec = SpectralDecomposition::compute(g, Potential::constant(g, 1.0));
    const Eigen::VectorXd psi3 = dec.eigenfunctions().col(3);
    const HarmonicExtension u(dec, GridFunction(g, psi3));
    EXPECT_LT((u.at(0.7) - std::exp(-0.7 * dec.sqrt_eigenvalues()[3]) * psi3).cwiseAbs().maxCoeff(), 1e-10);

    const auto f = GridFunction::sample(g, [](const Point& p) { return std::abs(p[0]) < 1 ? 1.0 : 0.0; });
    const auto tab = harmonic_extension(dec, f, geometric_heights(g.spacing() / 2, 4.0));
    double prev = -1.0;
    for (Eigen::Index j = 0; j < tab.values.cols(); ++j) {
        const double err = (tab.values.col(j) - f.values()).norm();
        EXPECT_GT(err, prev);
        prev = err;
    }
    const auto op = assemble_operator(g, Potential::constant(g, 1.0));
    const HarmonicExtension uf(dec, f);
    const Eigen::VectorXd Lu = op.matrix * uf.at(0.3);
    EXPECT_LT((uf.dtt(0.3) - Lu).cwiseAbs().maxCoeff(), 1e-10 * Lu.cwiseAbs().maxCoeff() + 1e-9);
    EXPECT_THROW(harmonic_extension(dec, f, {0.5, 0.2}), DomainError);
}

TEST(Reproducing, ExactAndQuadrature) {
    Grid g(1, 256);
    const auto dec = SpectralDecomposition::compute(g, Potential::constant(g, 1.0));
    const auto f = GridFunction::sample(g, [](const Point& p) { return std::exp(-4.0 * p[0] * p[0]) * (p[0] > 0.3 ? 2.0 : 1.0); });
    const double T = 10.0 / std::sqrt(dec.eigenvalues()[0]);
    for (double tt : {0.05, 0.5, T}) {
        const auto r = reproducing_formula_residual(dec, f, tt, 200);
        EXPECT_NEAR(r.exact, r.closed_form, 1e-10 * f.l2_norm());
        EXPECT_LE(r.discrepancy, 1e-6);
    }
    EXPECT_LE(reproducing_formula_residual(dec, f, T).exact, std::exp(-20.0) * f.l2_norm() * (1 + 1e-6) + 1e-12);
    EXPECT_NEAR(reproducing_formula_residual(dec, f, 0.0).exact, f.l2_norm(), 1e-12);
}

TEST(GreenIdentity, EigenvectorTruncationAndBump) {
    Grid g(1, 128);
    const auto dec = SpectralDecomposition::compute(g, Potential::constant(g, 1.0));
    const int k = 5;
    const auto psi = GridFunction(g, dec.eigenfunctions().col(k));
    GreenIdentitySpec spec;
    spec.t_min = 0.01;
    spec.t_max = 2.0;
    spec.nodes = 300;
    const double s = dec.sqrt_eigenvalues()[k];
    const double kept = (1 + 2 * spec.t_min * s) * std::exp(-2 * spec.t_min * s) - (1 + 2 * spec.t_max * s) * std::exp(-2 * spec.t_max * s);
    EXPECT_NEAR(green_identity_residual(dec, psi, spec).residual, std::abs(1.0 - kept), 1e-7);

    Grid gf(1, 512);
    const auto free = SpectralDecomposition::compute(gf, Potential::zero(gf));
    const auto bump = GridFunction::sample(gf, [](const Point& p) { return std::abs(p[0]) < 1 ? std::exp(-1.0 / (1 - p[0] * p[0])) : 0.0; });
    GreenIdentitySpec window;
    window.t_max = 16.0;
    const double r16 = green_identity_residual(free, bump, window).residual;
    EXPECT_LE(r16, 0.02);
    window.t_max = 1.0;
    const double r1 = green_identity_residual(free, bump, window).residual;
    window.t_max = 2.0;
    const double r2 = green_identity_residual(free, bump, window).residual;
    EXPECT_GT(r1, r2);
    EXPECT_GE(r2, r16);
}
