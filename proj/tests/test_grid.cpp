#include <gtest/gtest.h>

#include <set>

#include "balayage/grid.hpp"

using namespace balayage;

TEST(Grid, InvariantsAndCoordinates) {
    Grid g(2, 8);
    EXPECT_EQ(g.size(), 64u);
    EXPECT_DOUBLE_EQ(g.spacing(), 0.5);
    EXPECT_DOUBLE_EQ(g.coordinate(0), -1.75);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(g.flatten(g.unflatten(i)), i);
    EXPECT_THROW(Grid(1, 12), DomainError);
    EXPECT_THROW(Grid(4, 8), DomainError);
    EXPECT_THROW(Grid(1, 8, 0.0), DomainError);
}

TEST(GridFunction, RejectsBadValues) {
    Grid g(1, 4);
    EXPECT_THROW(GridFunction(g, Eigen::VectorXd::Zero(3)), GeometryError);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(4);
    v[2] = std::nan("");
    EXPECT_THROW(GridFunction(g, v), DomainError);
}

TEST(DyadicTree, Counts) {
    Grid g1(1, 16), g2(2, 16);
    EXPECT_EQ(make_dyadic_tree(g1, DyadicCube::root(1), 0).size(), 1u);
    EXPECT_EQ(make_dyadic_tree(g1, DyadicCube::root(1), 2).size(), 7u);
    // enumeration oracle: count every (level, index) pair directly
    std::size_t expected = 0;
    for (int k = 0; k <= 3; ++k)
        for (long i = 0; i < (1L << k); ++i)
            for (long j = 0; j < (1L << k); ++j) ++expected;
    const auto tree = make_dyadic_tree(g2, DyadicCube::root(2), 3);
    EXPECT_EQ(tree.size(), expected);
    std::set<std::tuple<int, long, long>> seen;
    for (const auto& q : tree) seen.insert({q.level(), q.index()[0], q.index()[1]});
    EXPECT_EQ(seen.size(), expected);
    EXPECT_THROW(make_dyadic_tree(g1, DyadicCube::root(1), 5), ResolutionError);
    EXPECT_THROW(make_dyadic_tree(g1, DyadicCube::root(1), -1), DomainError);
}

TEST(DyadicTree, ChildrenTileParent) {
    const auto root = DyadicCube::root(2);
    for (const auto& c : root.children()) {
        EXPECT_DOUBLE_EQ(c.side(), root.side() / 2);
        EXPECT_EQ(c.parent(), root);
        EXPECT_TRUE(c.is_within(root));
    }
    Grid g(2, 32);
    double covered = 0.0;
    for (const auto& c : root.children()) covered += static_cast<double>(cells_in(g, c).count());
    EXPECT_DOUBLE_EQ(covered, static_cast<double>(g.size()));
}

TEST(CubeAverage, Examples) {
    Grid g(1, 64);
    const auto root = DyadicCube::root(1);
    EXPECT_DOUBLE_EQ(cube_average(GridFunction::constant(g, 3.5), root), 3.5);
    EXPECT_NEAR(cube_average(GridFunction::sample(g, [](const Point& p) { return p[0]; }), root), 0.0, 1e-14);
    EXPECT_DOUBLE_EQ(cube_average(GridFunction::sample(g, [](const Point& p) { return p[0] > 0 ? 1.0 : 0.0; }), root), 0.5);
    Cube outside{1, {5.0, 0, 0}, 1.0};
    EXPECT_THROW(cube_average(GridFunction::constant(g, 1.0), outside), GeometryError);
}

TEST(CubeAverage, LinearAndMonotone) {
    Grid g(1, 32);
    auto f = GridFunction::sample(g, [](const Point& p) { return std::sin(p[0]); });
    auto h = GridFunction::sample(g, [](const Point& p) { return std::sin(p[0]) + 1.0 + p[0] * p[0]; });
    const auto q = DyadicCube::root(1).children()[1];
    EXPECT_NEAR(cube_average(f * 2.0 + h, q), 2.0 * cube_average(f, q) + cube_average(h, q), 1e-14);
    EXPECT_LE(cube_average(f, q), cube_average(h, q));
}

TEST(CarlesonBox, Examples) {
    const auto root = DyadicCube::root(1);
    const auto box = carleson_box(root);
    EXPECT_DOUBLE_EQ(box.height(), 4.0);
    EXPECT_DOUBLE_EQ(box.base.lower[0], -2.0);
    EXPECT_TRUE(box.contains({{0.0, 0, 0}, 4.0}));
    EXPECT_FALSE(box.contains({{0.0, 0, 0}, 4.0001}));
    const auto child = carleson_box(root.children()[0]);
    EXPECT_DOUBLE_EQ(child.base.side, 2.0);
    EXPECT_DOUBLE_EQ(child.height(), 2.0);
    const DyadicCube unit(2, 2, {0, 0, 0}, {-2, -2, -2}, 4.0);
    EXPECT_DOUBLE_EQ(carleson_box(unit).volume(), 1.0);
}

TEST(CarlesonBox, ChildrenAndTopSlabPartition) {
    // volume bookkeeping of Q-hat = top slab + children boxes
    const auto q = DyadicCube::root(2);
    double vol = q.volume() * q.side() / 2.0;
    for (const auto& c : q.children()) vol += carleson_box(c).volume();
    EXPECT_DOUBLE_EQ(vol, carleson_box(q).volume());
}
