#include <gtest/gtest.h>

#include <random>

#include "balayage/carleson.hpp"

using namespace balayage;

namespace {

// sup over atom subsets S of |mu|(S) / l(S)^n, l(S) the least side of a box holding S
double subset_oracle(const AtomicMeasure& mu) {
    const auto& a = mu.atoms();
    const int n = mu.dim();
    double best = 0.0;
    for (unsigned mask = 1; mask < (1u << a.size()); ++mask) {
        double m = 0.0, l = 0.0;
        Point lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
        for (std::size_t i = 0; i < a.size(); ++i)
            if (mask & (1u << i)) {
                m += std::abs(a[i].mass);
                l = std::max(l, a[i].z.t);
                for (int d = 0; d < n; ++d) {
                    lo[d] = std::min(lo[d], a[i].z.x[d]);
                    hi[d] = std::max(hi[d], a[i].z.x[d]);
                }
            }
        for (int d = 0; d < n; ++d) l = std::max(l, hi[d] - lo[d]);
        best = std::max(best, m / std::pow(l, n));
    }
    return best;
}

AtomicMeasure signed_measure(int dim, int count, std::mt19937_64& rng) {
    auto mu = random_carleson_measure(dim, count, 0.05, rng);
    std::vector<Atom> atoms = mu.atoms();
    for (std::size_t i = 0; i < atoms.size(); i += 2) atoms[i].mass = -atoms[i].mass;
    return AtomicMeasure(dim, atoms);
}

}  // namespace

TEST(AtomicMeasure, InvariantsAndAlgebra) {
    AtomicMeasure mu(1);
    EXPECT_THROW(mu.add(Point{0, 0, 0}, 0.0, 1.0), DomainError);
    mu.add(Point{0, 0, 0}, 1.0, -2.0);
    mu.add(Point{1, 0, 0}, 0.5, 1.0);
    EXPECT_DOUBLE_EQ(mu.total_variation(), 3.0);
    EXPECT_DOUBLE_EQ(mu.total_mass(), -1.0);
    EXPECT_DOUBLE_EQ(mu.scaled(2.0).total_variation(), 6.0);
    EXPECT_EQ(mu.concat(mu).size(), 4u);
}

TEST(CarlesonNorm, SingleAtomAndEmpty) {
    AtomicMeasure mu(1);
    EXPECT_EQ(carleson_norm(mu).carleson_norm, 0.0);
    mu.add(Point{0, 0, 0}, 0.5, 1.0);
    const auto rep = carleson_norm(mu);
    EXPECT_DOUBLE_EQ(rep.carleson_norm, 2.0);
    EXPECT_DOUBLE_EQ(rep.attaining_cube.side, 0.5);
    ASSERT_EQ(rep.attribution.size(), 1u);
}

TEST(CarlesonNorm, MatchesSubsetEnumeration) {
    std::mt19937_64 rng(17);
    for (int dim : {1, 2, 3})
        for (int r = 0; r < 30; ++r) {
            const auto mu = signed_measure(dim, 9, rng);
            const auto rep = carleson_norm(mu);
            EXPECT_NEAR(rep.carleson_norm, subset_oracle(mu), 1e-12 * rep.carleson_norm) << dim;
            // the attaining box realizes the norm
            EXPECT_NEAR(rep.carleson_norm * std::pow(rep.attaining_cube.side, dim), rep.box_mass, 1e-12 * rep.box_mass);
        }
}

TEST(CarlesonNorm, HomogeneousAndSubadditive) {
    std::mt19937_64 rng(5);
    for (int r = 0; r < 20; ++r) {
        const auto a = signed_measure(1, 12, rng);
        auto atoms = a.atoms();
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (auto& at : atoms) at.mass = u(rng);
        const AtomicMeasure b(1, atoms);  // same support
        const double na = carleson_norm(a).carleson_norm, nb = carleson_norm(b).carleson_norm;
        EXPECT_NEAR(carleson_norm(a.scaled(3.5)).carleson_norm, 3.5 * na, 1e-12 * na);
        std::vector<Atom> sum = a.atoms();
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i].mass += atoms[i].mass;
        EXPECT_LE(carleson_norm(AtomicMeasure(1, sum)).carleson_norm, na + nb + 1e-12);
    }
}

TEST(Balayage, SingleAtomIsKernelColumn) {
    Grid g(1, 64);
    const auto dec = SpectralDecomposition::compute(g, Potential::constant(g, 1.0));
    AtomicMeasure mu(1);
    mu.add(Point{0.3, 0, 0}, 0.7, 1.0);
    const auto K = poisson_kernel_spectral(dec, 0.7);
    const Eigen::VectorXd col = K.matrix.col(static_cast<Eigen::Index>(g.nearest_flat(Point{0.3, 0, 0})));
    EXPECT_LT((sweep(dec, mu).values() - col).lpNorm<Eigen::Infinity>(), 1e-12 * col.lpNorm<Eigen::Infinity>());
    EXPECT_LT((sweep(poisson_family(dec), g, mu).values() - col).lpNorm<Eigen::Infinity>(), 1e-12 * col.lpNorm<Eigen::Infinity>());
}

TEST(Balayage, LinearPositiveAndMassBounded) {
    Grid g(1, 128);
    const auto dec = SpectralDecomposition::compute(g, Potential::constant(g, 1.0));
    std::mt19937_64 rng(9);
    for (int r = 0; r < 10; ++r) {
        const auto a = random_carleson_measure(1, 15, 0.05, rng).scaled(1.0 / 15.0);
        const auto b = random_carleson_measure(1, 15, 0.05, rng).scaled(1.0 / 15.0);
        const auto Sa = sweep(dec, a), Sb = sweep(dec, b), Sab = sweep(dec, a.concat(b));
        EXPECT_LT((Sab.values() - Sa.values() - Sb.values()).lpNorm<Eigen::Infinity>(), 1e-12 * Sab.sup_norm());
        EXPECT_GE(Sa.values().minCoeff(), -1e-10 * Sa.sup_norm());
        EXPECT_LE(Sa.l1_norm(), (1.0 + 1e-3) * a.total_variation());
    }
    AtomicMeasure low(1);
    low.add(Point{0, 0, 0}, 0.2 * g.spacing(), 1.0);
    EXPECT_THROW(sweep(dec, low), ResolutionError);
}

TEST(BalayageBmoRatio, DegenerateScalingAndRefinement) {
    std::vector<double> maxima;
    for (int m : {128, 256}) {
        Grid g(1, m);
        const auto V = Potential::constant(g, 1.0);
        const auto dec = SpectralDecomposition::compute(g, V);
        const auto fam = CubeFamily::three_lattice(g);
        const auto rho = critical_radius_field(V);
        EXPECT_TRUE(balayage_bmo_ratio(AtomicMeasure(1), dec, fam, rho).degenerate);
        std::mt19937_64 rng(23);
        double mx = 0.0;
        for (int r = 0; r < 20; ++r) {
            const auto mu = random_carleson_measure(1, 10, 4.0 / 64.0, rng);
            const auto q = balayage_bmo_ratio(mu, dec, fam, rho);
            ASSERT_FALSE(q.degenerate);
            EXPECT_NEAR(balayage_bmo_ratio(mu.scaled(7.0), dec, fam, rho).ratio, q.ratio, 1e-12 * q.ratio);
            mx = std::max(mx, q.ratio);
        }
        maxima.push_back(mx);
    }
    EXPECT_TRUE(std::isfinite(maxima[0]));
    EXPECT_NEAR(maxima[1] / maxima[0], 1.0, 0.2);
}

TEST(BalayageBmoRatio, FreePoissonBounded) {
    Grid g(1, 128, 4.0);
    const auto V = Potential::zero(g);
    const auto dec = SpectralDecomposition::compute(g, V);
    const auto fam = CubeFamily::three_lattice(g);
    const auto rho = critical_radius_field(V);
    std::mt19937_64 rng(29);
    for (int r = 0; r < 10; ++r) {
        const auto q = balayage_bmo_ratio(random_carleson_measure(1, 10, 0.125, rng), dec, fam, rho);
        EXPECT_TRUE(std::isfinite(q.ratio));
        EXPECT_LT(q.ratio, 10.0);
    }
}

TEST(HeatTransform, MassReproductionAndScaling) {
    Grid g(1, 128);
    const auto dec = SpectralDecomposition::compute(g, Potential::constant(g, 1.0));
    AtomicMeasure mu(1);
    mu.add(Point{0.25, 0, 0}, 0.5, 1.0);
    const auto res = heat_balayage_transform(mu);
    EXPECT_LE(res.max_mass_defect, 1e-5);
    EXPECT_NEAR(res.nu.total_mass(), 1.0, 1e-5);
    const auto SP = sweep(dec, mu), SH = sweep(dec, res.nu, SweepKernel::heat_squared);
    EXPECT_LE((SP.values() - SH.values()).lpNorm<Eigen::Infinity>(), 1e-4);

    const auto scaled = heat_balayage_transform(mu.scaled(-3.0));
    ASSERT_EQ(scaled.nu.size(), res.nu.size());
    for (std::size_t i = 0; i < res.nu.size(); ++i) EXPECT_EQ(scaled.nu.atoms()[i].mass, -3.0 * res.nu.atoms()[i].mass);

    std::mt19937_64 rng(31);
    for (int r = 0; r < 5; ++r) {
        const auto m = random_carleson_measure(1, 8, 0.05, rng);
        const double ratio = carleson_norm(heat_balayage_transform(m).nu).carleson_norm / carleson_norm(m).carleson_norm;
        EXPECT_TRUE(std::isfinite(ratio));
        EXPECT_GT(ratio, 0.0);
    }
    EXPECT_THROW(heat_balayage_transform(mu, {.nodes = 8}), ConvergenceError);
}

TEST(SmearedDirac, PlaneMassAndRatio) {
    Grid g(1, 1024, 8.0);
    const auto one = smeared_dirac_measure(g, {Atom{{Point{0, 0, 0}, 1.0}, 1.0}});
    // integral of 1/(1+|x|)^2 over [-8, 8]
    EXPECT_NEAR(one.measure.total_mass() / (2.0 * (1.0 - 1.0 / 9.0)), 1.0, 0.01);
    EXPECT_TRUE(smeared_dirac_measure(g, {}).measure.empty());

    Grid gc(1, 128);
    std::mt19937_64 rng(37);
    for (int r = 0; r < 5; ++r) {
        const auto mu = random_carleson_measure(1, 5, 0.1, rng);
        const auto s = smeared_dirac_measure(gc, mu.atoms());
        EXPECT_LE(s.input_norm, 1.0 + 1e-12);
        EXPECT_TRUE(std::isfinite(s.ratio));
        EXPECT_GT(s.ratio, 0.0);
    }
}
