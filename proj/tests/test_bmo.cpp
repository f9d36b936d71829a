#include <gtest/gtest.h>

#include <random>

#include "balayage/bmo.hpp"

using namespace balayage;

namespace {

GridFunction sign_fn(const Grid& g) {
    return GridFunction::sample(g, [](const Point& p) { return p[0] > 0 ? 1.0 : -1.0; });
}

GridFunction dyadic_steps(const Grid& g, std::mt19937& rng) {
    // random +-1 values on the 8 dyadic intervals of [-2, 2]
    std::uniform_int_distribution<int> coin(0, 1);
    std::vector<double> vals(8);
    for (auto& v : vals) v = coin(rng) ? 1.0 : -1.0;
    return GridFunction::sample(g, [&](const Point& p) {
        const int k = std::clamp(static_cast<int>(std::floor((p[0] + 2.0) * 2.0)), 0, 7);
        return vals[static_cast<std::size_t>(k)];
    });
}

}  // namespace

TEST(CubeFamily, ContainsRootTreeAndShifts) {
    Grid g(1, 64);
    const auto fam = CubeFamily::three_lattice(g);
    int shifted = 0;
    for (const auto& q : fam.cubes()) {
        EXPECT_GE(q.cells.count(), 1u);
        EXPECT_GE(q.cube.lower[0], -2.0 - 1e-12);
        EXPECT_LE(q.cube.lower[0] + q.cube.side, 2.0 + 1e-12);
        shifted += q.shift > 0;
    }
    EXPECT_GT(shifted, 0);
    // every dyadic cube of the root tree is present
    for (const auto& d : make_dyadic_tree(g, DyadicCube::root(1), 6)) {
        bool found = false;
        for (const auto& q : fam.cubes()) found = found || (std::abs(q.cube.lower[0] - d.cube().lower[0]) < 1e-12 && q.cube.side == d.side());
        EXPECT_TRUE(found);
    }
    Grid g4(1, 128, 4.0);
    const auto fam4 = CubeFamily::three_lattice(g4);
    bool has_root = false;
    for (const auto& q : fam4.cubes()) has_root = has_root || (q.cube.lower[0] == -2.0 && q.cube.side == 4.0);
    EXPECT_TRUE(has_root);
}

TEST(BmoClassical, Examples) {
    Grid g(1, 128);
    const auto fam = CubeFamily::three_lattice(g);
    EXPECT_DOUBLE_EQ(bmo_classical_norm(GridFunction::constant(g, 4.0), fam), 0.0);
    const auto s = sign_fn(g);
    EXPECT_NEAR(bmo_classical_norm(s, fam), 1.0, 1e-14);
    // exhaustive scan oracle: every cell-aligned interval
    double scan = 0.0;
    for (int a = 0; a < 128; ++a)
        for (int b = a + 1; b <= 128; ++b) {
            double mean = 0.0;
            for (int i = a; i < b; ++i) mean += s[static_cast<std::size_t>(i)];
            mean /= (b - a);
            double osc = 0.0;
            for (int i = a; i < b; ++i) osc += std::abs(s[static_cast<std::size_t>(i)] - mean);
            scan = std::max(scan, osc / (b - a));
        }
    EXPECT_NEAR(bmo_classical_norm(s, fam), scan, 1e-14);
    EXPECT_NEAR(bmo_classical_norm(s * -3.0, fam), 3.0 * bmo_classical_norm(s, fam), 1e-13);
}

TEST(BmoL, ConstantSignAndMonotoneInV) {
    Grid g(1, 128);
    const auto fam = CubeFamily::three_lattice(g);
    const auto V = Potential::constant(g, 1.0);
    const auto rho = critical_radius_field(V);
    const auto rc = bmo_L_norm(GridFunction::constant(g, -2.5), fam, rho);
    EXPECT_DOUBLE_EQ(rc.oscillation_norm, 0.0);
    EXPECT_NEAR(rc.bmoL_norm, 2.5, 1e-14);
    EXPECT_FALSE(rc.average_vacuous);

    const auto s = sign_fn(g);
    const auto rs = bmo_L_norm(s, fam, rho);
    EXPECT_GE(rs.bmoL_norm, bmo_classical_norm(s, fam));
    EXPECT_GE(rs.bmoL_norm, rs.oscillation_norm);

    const auto f = GridFunction::sample(g, [](const Point& p) { return std::abs(p[0]) < 0.3 ? 1.0 : 0.0; });
    double prev = 0.0;
    for (double c : {0.1, 1.0, 10.0, 100.0}) {
        const double v = bmo_L_norm(f, fam, critical_radius_field(V.scaled(c))).bmoL_norm;
        EXPECT_GE(v, prev - 1e-15);
        prev = v;
    }
}

TEST(BmoL, SeminormAndDefiniteness) {
    Grid g(1, 64);
    const auto fam = CubeFamily::three_lattice(g);
    const auto rho = critical_radius_field(Potential::constant(g, 1.0));
    std::mt19937 rng(3);
    const auto a = dyadic_steps(g, rng), b = dyadic_steps(g, rng);
    const double na = bmo_L_norm(a, fam, rho).bmoL_norm, nb = bmo_L_norm(b, fam, rho).bmoL_norm;
    EXPECT_LE(bmo_L_norm(a + b, fam, rho).bmoL_norm, na + nb + 1e-14);
    EXPECT_NEAR(bmo_L_norm(a * 3.0, fam, rho).bmoL_norm, 3.0 * na, 1e-13);
    EXPECT_EQ(bmo_L_norm(GridFunction(g), fam, rho).bmoL_norm, 0.0);
    Eigen::VectorXd tiny = Eigen::VectorXd::Zero(64);
    tiny[40] = 1e-3;
    EXPECT_GT(bmo_L_norm(GridFunction(g, tiny), fam, rho).bmoL_norm, 0.0);
}

TEST(BmoL, VacuousAveragePartFlagged) {
    Grid g(1, 64);
    const auto fam = CubeFamily::three_lattice(g);
    const auto rep = bmo_L_norm(sign_fn(g), fam, critical_radius_field(Potential::zero(g)));
    EXPECT_TRUE(rep.average_vacuous);
}

TEST(BmoA, EigenvectorClosedFormAndEmbedding) {
    Grid g(1, 64);
    const auto dec = SpectralDecomposition::compute(g, Potential::constant(g, 1.0));
    const auto fam = CubeFamily::three_lattice(g);
    const int k = 4;
    const auto psi = GridFunction(g, dec.eigenfunctions().col(k));
    double oracle = 0.0;
    for (const auto& q : fam.cubes()) {
        double m = 0.0;
        q.cells.for_each(g, [&](std::size_t i) { m += std::abs(psi[i]); });
        oracle = std::max(oracle, (1.0 - std::exp(-q.cube.side * dec.sqrt_eigenvalues()[k])) * m / static_cast<double>(q.cells.count()));
    }
    EXPECT_NEAR(bmo_A_norm(psi, poisson_operator(dec), fam), oracle, 1e-10);
    EXPECT_NEAR(bmo_A_norm(psi, poisson_family(dec), fam), oracle, 1e-10);
    EXPECT_EQ(bmo_A_norm(GridFunction(g), poisson_operator(dec), fam), 0.0);
    std::mt19937 rng(5);
    for (int r = 0; r < 5; ++r) {
        const auto f = dyadic_steps(g, rng);
        EXPECT_LE(bmo_A_norm(f, poisson_operator(dec), fam), 2.0 * f.sup_norm());
    }
}

TEST(AverageGrowth, ConstantLogAndPowerMeans) {
    Grid g(1, 1024, 4.0);
    const auto fam = CubeFamily::three_lattice(g);
    const auto rho = critical_radius_field(Potential::constant(g, 0.05));
    const auto rc = check_average_growth(GridFunction::constant(g, 2.0), rho, fam);
    EXPECT_LE(rc.log_growth_C, 1.0);

    const double h = g.spacing();
    const auto f = GridFunction::sample(g, [&](const Point& p) { return std::abs(p[0]) <= 1 ? std::log(1.0 / std::max(std::abs(p[0]), h)) : 0.0; });
    const auto rep = check_average_growth(f, rho, fam);
    EXPECT_GT(rep.log_growth_slope, 0.0);
    // the mean of log(1/|x|) over [-l, l] is 1 + log(1/l); resolved sides inside the support
    for (const auto& [side, avg] : rep.max_average_by_side)
        if (side >= 8 * h && side <= 0.5) {
            EXPECT_NEAR(avg / (1.0 + std::log(1.0 / side)), 1.0, 0.05) << side;
        }
    double prev = 0.0;
    for (const auto& [p, c] : rep.oscillation_C) {
        EXPECT_GE(c, prev - 1e-12);
        prev = c;
    }
    EXPECT_THROW(check_average_growth(GridFunction(g), rho, fam), DomainError);
}

TEST(CompareBmoLBmoP, CorpusStableUnderRefinement) {
    std::vector<double> lo, hi;
    for (int m : {128, 256}) {
        Grid g(1, m);
        const auto V = Potential::constant(g, 1.0);
        const auto dec = SpectralDecomposition::compute(g, V);
        const auto fam = CubeFamily::three_lattice(g);
        const auto rho = critical_radius_field(V);
        EXPECT_TRUE(compare_bmoL_bmoP(GridFunction(g), dec, fam, rho).degenerate);
        const auto r1 = compare_bmoL_bmoP(GridFunction(g, dec.eigenfunctions().col(0)), dec, fam, rho);
        EXPECT_GT(r1.numerator, 0.0);
        EXPECT_GT(r1.denominator, 0.0);
        std::mt19937 rng(11);
        double mn = 1e300, mx = 0.0;
        for (int r = 0; r < 20; ++r) {
            const auto q = compare_bmoL_bmoP(dyadic_steps(g, rng), dec, fam, rho);
            ASSERT_FALSE(q.degenerate);
            ASSERT_TRUE(std::isfinite(q.ratio));
            mn = std::min(mn, q.ratio);
            mx = std::max(mx, q.ratio);
        }
        lo.push_back(mn);
        hi.push_back(mx);
    }
    EXPECT_NEAR(hi[1] / hi[0], 1.0, 0.2);
    EXPECT_NEAR(lo[1] / lo[0], 1.0, 0.2);
}

TEST(PoissonOscillation, ConstantSignAndLinearity) {
    std::vector<double> fitted;
    for (int m : {128, 256}) {
        Grid g(1, m);
        const auto V = Potential::constant(g, 1.0);
        const auto dec = SpectralDecomposition::compute(g, V);
        const auto fam = CubeFamily::three_lattice(g);
        const auto rho = critical_radius_field(V);
        EXPECT_LT(check_poisson_oscillation(GridFunction::constant(g, 3.0), dec, fam, rho).raw_sup, 1e-12);
        const auto s = sign_fn(g);
        const auto r = check_poisson_oscillation(s, dec, fam, rho);
        EXPECT_TRUE(std::isfinite(r.fitted_C));
        EXPECT_NEAR(check_poisson_oscillation(s * 2.0, dec, fam, rho).raw_sup, 2.0 * r.raw_sup, 1e-12);
        fitted.push_back(r.fitted_C);
    }
    EXPECT_NEAR(fitted[1] / fitted[0], 1.0, 0.2);
}
