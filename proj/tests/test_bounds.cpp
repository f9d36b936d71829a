#include <gtest/gtest.h>

#include <numbers>

#include "balayage/bounds.hpp"

using namespace balayage;

namespace {

std::vector<double> resolved_times(const Grid& g) { return geometric_heights(8.0 * g.spacing(), g.half_width()); }

AoiParams aoi(double eps, double eps_prime) {
    AoiParams p;
    p.eps = eps;
    p.eps_prime = eps_prime;
    return p;
}

}  // namespace

TEST(KernelBounds, FreePoissonSizeConstant) {
    Grid g(1, 128, 4.0);
    const auto dec = SpectralDecomposition::compute(g, Potential::zero(g));
    KernelBoundParams p;
    p.t_values = resolved_times(g);
    p.N_values = {1};
    const auto rep = verify_kernel_bounds(dec, nullptr, p);
    // rho = infinity: the envelope is the free Poisson kernel without the 1/pi
    EXPECT_NEAR(rep.find("poisson_size", {{"N", 1}})->fitted_C / (1.0 / std::numbers::pi), 1.0, 0.1);
    for (const auto& r : rep.records) EXPECT_TRUE(std::isfinite(r.fitted_C)) << r.estimate_id;
}

TEST(KernelBounds, ConstantPotentialFiniteAndRefinementStable) {
    double prev = 0.0;
    for (int m : {64, 128}) {
        Grid g(1, m, 4.0);
        const auto V = Potential::constant(g, 1.0);
        const auto dec = SpectralDecomposition::compute(g, V);
        const auto rho = critical_radius_field(V);
        KernelBoundParams p;
        p.t_values = geometric_heights(0.5, 4.0);
        p.sample_stride = m / 64;
        const auto rep = verify_kernel_bounds(dec, &rho, p);
        for (const auto& r : rep.records) {
            EXPECT_TRUE(std::isfinite(r.fitted_C)) << r.estimate_id;
            EXPECT_GT(r.fitted_C, 0.0) << r.estimate_id;
        }
        // larger N needs a larger constant
        EXPECT_LE(rep.find("poisson_size", {{"N", 1}})->fitted_C, rep.find("poisson_size", {{"N", 8}})->fitted_C);
        const double c = rep.find("poisson_of_one_gradient", {{"N", 2}})->fitted_C;
        if (prev > 0.0) {
            EXPECT_NEAR(c / prev, 1.0, 0.2);
        }
        prev = c;
    }
}

TEST(KernelBounds, HolderOnlyWithinSqrtT) {
    Grid g(1, 32);
    const auto V = Potential::constant(g, 1.0);
    const auto dec = SpectralDecomposition::compute(g, V);
    const auto rho = critical_radius_field(V);
    KernelBoundParams p;
    p.t_values = {0.25, 1.0};
    const auto rep = verify_kernel_bounds(dec, &rho, p);
    const auto* r = rep.find("hk_holder", {{"N", 1}, {"c", 4}});
    ASSERT_NE(r, nullptr);
    EXPECT_GT(r->fitted_C, 0.0);
    KernelBoundParams steep;
    steep.beta = 1.5;
    EXPECT_THROW(verify_kernel_bounds(dec, &rho, steep), DomainError);
}

TEST(VIntegrals, ZeroPotential) {
    Grid g(1, 32);
    const auto V = Potential::zero(g);
    const auto dec = SpectralDecomposition::compute(g, V);
    const auto rho = critical_radius_field(V);
    const auto rep = verify_V_integrals(dec, V, rho);
    for (const auto& r : rep.records) EXPECT_EQ(r.fitted_C, 0.0);
}

TEST(VIntegrals, ConstantPotentialSmallTimeExponent) {
    Grid g(1, 128, 4.0);
    const auto V = Potential::constant(g, 1.0);
    const auto dec = SpectralDecomposition::compute(g, V);
    const auto rho = critical_radius_field(V);
    VIntegralParams p;
    p.delta = 0.5;
    p.sample_stride = 4;
    const auto rep = verify_V_integrals(dec, V, rho, p);
    const auto* gauss_avg = rep.find("V_gaussian_average");
    ASSERT_NE(gauss_avg, nullptr);
    EXPECT_GE(gauss_avg->params.at("small_t_exponent"), 0.5);
    EXPECT_TRUE(std::isfinite(gauss_avg->fitted_C));
    const auto* poisson_log = rep.find("V_poisson_log_weighted");
    EXPECT_TRUE(std::isfinite(poisson_log->fitted_C));
    EXPECT_GE(poisson_log->params.at("small_t_exponent"), 0.5);
}

TEST(VIntegrals, EnvelopeIntegralClosedForm) {
    for (double N : {5.0, 8.0, 12.0})
        for (double delta : {0.25, 0.5, 0.9}) EXPECT_NEAR(envelope_log_integral(delta, N), 1.0 / delta + 1.0 / (0.5 * N - 2.0), 1e-6);
    EXPECT_THROW(envelope_log_integral(0.5, 4.0), DomainError);
}

TEST(Aoi, GaussianAndPoissonFamilies) {
    Grid g(1, 64);
    const auto gauss = verify_aoi_axioms(free_gaussian_family(g), g, aoi(3.0, 2.0));
    EXPECT_TRUE(std::isfinite(gauss.find("aoi_size")->fitted_C));
    EXPECT_TRUE(std::isfinite(gauss.find("aoi_time_derivative")->fitted_C));

    const auto V = Potential::constant(g, 1.0);
    const auto dec = SpectralDecomposition::compute(g, V);
    const auto rep = verify_aoi_axioms(poisson_family(dec), g, aoi(1.0, 1.0));
    EXPECT_TRUE(std::isfinite(rep.find("aoi_size")->fitted_C));
    EXPECT_LE(rep.find("aoi_semigroup_defect")->fitted_C, 1e-10);
    // the size axiom with eps = 1 is the N = 0 Poisson bound up to the (1 + d/t) vs R rewrite: 2^{-1} <= ratio <= 2^{1}
    const auto rho = critical_radius_field(V);
    KernelBoundParams kp;
    kp.t_values = geometric_heights(2.0 * g.spacing(), g.half_width(), 2.0);
    kp.N_values = {1};
    const double kernel_C = verify_kernel_bounds(dec, nullptr, kp).find("poisson_size")->fitted_C;
    EXPECT_LE(rep.find("aoi_size")->fitted_C, 4.0 * kernel_C);
    EXPECT_THROW(verify_aoi_axioms(poisson_family(dec), g, aoi(0.5, 1.0)), DomainError);
}
