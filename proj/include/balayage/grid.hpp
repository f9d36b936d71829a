#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "balayage/errors.hpp"

namespace balayage {

inline constexpr int kMaxDim = 3;

using Point = std::array<double, kMaxDim>;
using MultiIndex = std::array<long, kMaxDim>;

/// Uniform tensor grid of cell centers covering [-L, L]^n.
///
/// Cell i along an axis has center -L + (i + 1/2) h with h = 2L / m.  Flat
/// indices run with the last coordinate fastest.
class Grid {
public:
    Grid() = default;

    Grid(int dim, int points_per_side, double half_width = 2.0)
        : dim_(dim), m_(points_per_side), half_width_(half_width) {
        if (dim < 1 || dim > kMaxDim) throw DomainError("grid dimension must be 1, 2 or 3");
        if (points_per_side < 1 || (points_per_side & (points_per_side - 1)) != 0)
            throw DomainError("points_per_side must be a power of two");
        if (!(half_width > 0.0)) throw DomainError("half_width must be positive");
        spacing_ = 2.0 * half_width / points_per_side;
        size_ = 1;
        for (int d = 0; d < dim; ++d) size_ *= static_cast<std::size_t>(m_);
    }

    int dim() const noexcept { return dim_; }
    int points_per_side() const noexcept { return m_; }
    double half_width() const noexcept { return half_width_; }
    double spacing() const noexcept { return spacing_; }
    std::size_t size() const noexcept { return size_; }
    /// Measure h^n carried by each cell.
    double cell_volume() const noexcept { return std::pow(spacing_, dim_); }

    double coordinate(long i) const noexcept { return -half_width_ + (static_cast<double>(i) + 0.5) * spacing_; }

    MultiIndex unflatten(std::size_t flat) const noexcept {
        MultiIndex idx{0, 0, 0};
        for (int d = dim_ - 1; d >= 0; --d) {
            idx[d] = static_cast<long>(flat % static_cast<std::size_t>(m_));
            flat /= static_cast<std::size_t>(m_);
        }
        return idx;
    }

    std::size_t flatten(const MultiIndex& idx) const noexcept {
        std::size_t flat = 0;
        for (int d = 0; d < dim_; ++d) flat = flat * static_cast<std::size_t>(m_) + static_cast<std::size_t>(idx[d]);
        return flat;
    }

    Point point(std::size_t flat) const noexcept {
        const MultiIndex idx = unflatten(flat);
        Point p{0.0, 0.0, 0.0};
        for (int d = 0; d < dim_; ++d) p[d] = coordinate(idx[d]);
        return p;
    }

    bool contains_index(const MultiIndex& idx) const noexcept {
        for (int d = 0; d < dim_; ++d)
            if (idx[d] < 0 || idx[d] >= m_) return false;
        return true;
    }

    /// Nearest cell index along one axis (clamped into the grid).
    long nearest_index(double x) const noexcept {
        const long i = static_cast<long>(std::floor((x + half_width_) / spacing_));
        return std::clamp(i, 0L, static_cast<long>(m_) - 1);
    }

    std::size_t nearest_flat(const Point& p) const noexcept {
        MultiIndex idx{0, 0, 0};
        for (int d = 0; d < dim_; ++d) idx[d] = nearest_index(p[d]);
        return flatten(idx);
    }

    bool operator==(const Grid& o) const noexcept {
        return dim_ == o.dim_ && m_ == o.m_ && half_width_ == o.half_width_;
    }

private:
    int dim_ = 1;
    int m_ = 1;
    double half_width_ = 2.0;
    double spacing_ = 4.0;
    std::size_t size_ = 1;
};

inline double distance(const Point& a, const Point& b, int dim) noexcept {
    double s = 0.0;
    for (int d = 0; d < dim; ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
    return std::sqrt(s);
}

/// Real samples at the cell centers of a grid.
class GridFunction {
public:
    GridFunction() = default;
    explicit GridFunction(const Grid& grid) : grid_(grid), values_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()))) {}
    GridFunction(const Grid& grid, Eigen::VectorXd values) : grid_(grid), values_(std::move(values)) {
        if (static_cast<std::size_t>(values_.size()) != grid_.size())
            throw GeometryError("grid function length does not match the grid");
        if (!values_.allFinite()) throw DomainError("grid function values must be finite");
    }

    static GridFunction constant(const Grid& grid, double c) {
        return GridFunction(grid, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(grid.size()), c));
    }

    template <typename F>
    static GridFunction sample(const Grid& grid, F&& f) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(grid.size()));
        for (std::size_t i = 0; i < grid.size(); ++i) v[static_cast<Eigen::Index>(i)] = f(grid.point(i));
        return GridFunction(grid, std::move(v));
    }

    const Grid& grid() const noexcept { return grid_; }
    const Eigen::VectorXd& values() const noexcept { return values_; }
    Eigen::VectorXd& values() noexcept { return values_; }
    std::size_t size() const noexcept { return grid_.size(); }
    double operator[](std::size_t i) const noexcept { return values_[static_cast<Eigen::Index>(i)]; }

    double integral() const { return values_.sum() * grid_.cell_volume(); }
    double l1_norm() const { return values_.cwiseAbs().sum() * grid_.cell_volume(); }
    double l2_norm() const { return std::sqrt(values_.squaredNorm() * grid_.cell_volume()); }
    double sup_norm() const { return values_.size() ? values_.cwiseAbs().maxCoeff() : 0.0; }

    GridFunction operator+(const GridFunction& o) const { return GridFunction(grid_, values_ + o.values_); }
    GridFunction operator-(const GridFunction& o) const { return GridFunction(grid_, values_ - o.values_); }
    GridFunction operator*(double s) const { return GridFunction(grid_, values_ * s); }

private:
    Grid grid_;
    Eigen::VectorXd values_;
};

/// Half-open index box [lo, hi) of cells.
struct IndexBox {
    int dim = 1;
    MultiIndex lo{0, 0, 0};
    MultiIndex hi{1, 1, 1};

    std::size_t count() const noexcept {
        std::size_t c = 1;
        for (int d = 0; d < dim; ++d) c *= static_cast<std::size_t>(std::max(0L, hi[d] - lo[d]));
        return c;
    }

    bool contains(const MultiIndex& idx) const noexcept {
        for (int d = 0; d < dim; ++d)
            if (idx[d] < lo[d] || idx[d] >= hi[d]) return false;
        return true;
    }

    template <typename F>
    void for_each(const Grid& grid, F&& f) const {
        if (count() == 0) return;
        MultiIndex idx = lo;
        for (;;) {
            f(grid.flatten(idx));
            int d = dim - 1;
            while (d >= 0) {
                if (++idx[d] < hi[d]) break;
                idx[d] = lo[d];
                --d;
            }
            if (d < 0) return;
        }
    }
};

/// Closed axis-parallel cube [lower, lower + side]^n.
struct Cube {
    int dim = 1;
    Point lower{0.0, 0.0, 0.0};
    double side = 1.0;

    Point center() const noexcept {
        Point c{0.0, 0.0, 0.0};
        for (int d = 0; d < dim; ++d) c[d] = lower[d] + 0.5 * side;
        return c;
    }
    double volume() const noexcept { return std::pow(side, dim); }
    bool contains(const Point& p) const noexcept {
        for (int d = 0; d < dim; ++d)
            if (p[d] < lower[d] || p[d] > lower[d] + side) return false;
        return true;
    }
    /// Concentric cube with side scaled by `factor`.
    Cube dilate(double factor) const noexcept {
        Cube c = *this;
        for (int d = 0; d < dim; ++d) c.lower[d] = lower[d] + 0.5 * side * (1.0 - factor);
        c.side = side * factor;
        return c;
    }
};

/// Cells whose centers lie in the closed cube, clipped to the grid; may be empty.
inline IndexBox cells_in(const Grid& grid, const Cube& q) {
    IndexBox box;
    box.dim = grid.dim();
    const double h = grid.spacing();
    const double L = grid.half_width();
    constexpr double eps = 1e-9;
    for (int d = 0; d < grid.dim(); ++d) {
        const double a = (q.lower[d] + L) / h - 0.5;
        const double b = (q.lower[d] + q.side + L) / h - 0.5;
        long lo = static_cast<long>(std::ceil(a - eps));
        long hi = static_cast<long>(std::floor(b + eps)) + 1;
        lo = std::max(lo, 0L);
        hi = std::min(hi, static_cast<long>(grid.points_per_side()));
        box.lo[d] = lo;
        box.hi[d] = std::max(hi, lo);
    }
    return box;
}

/// Dyadic descendant of a root cube, addressed by level and integer multi-index.
class DyadicCube {
public:
    DyadicCube() = default;
    DyadicCube(int dim, int level, MultiIndex index, Point root_lower, double root_side)
        : dim_(dim), level_(level), index_(index), root_lower_(root_lower), root_side_(root_side) {}

    /// The normalized root Q0 = [-2, 2]^n.
    static DyadicCube root(int dim) { return DyadicCube(dim, 0, {0, 0, 0}, {-2.0, -2.0, -2.0}, 4.0); }

    int dim() const noexcept { return dim_; }
    int level() const noexcept { return level_; }
    const MultiIndex& index() const noexcept { return index_; }
    double side() const noexcept { return root_side_ / static_cast<double>(1L << level_); }
    Cube cube() const noexcept {
        Cube c;
        c.dim = dim_;
        c.side = side();
        for (int d = 0; d < dim_; ++d) c.lower[d] = root_lower_[d] + static_cast<double>(index_[d]) * c.side;
        return c;
    }
    Point center() const noexcept { return cube().center(); }
    /// Height of the top point z_Q = (x_Q, l(Q)).
    double top_height() const noexcept { return side(); }
    double volume() const noexcept { return std::pow(side(), dim_); }

    std::vector<DyadicCube> children() const {
        std::vector<DyadicCube> out;
        const int count = 1 << dim_;
        out.reserve(static_cast<std::size_t>(count));
        for (int c = 0; c < count; ++c) {
            MultiIndex idx{0, 0, 0};
            for (int d = 0; d < dim_; ++d) idx[d] = 2 * index_[d] + ((c >> (dim_ - 1 - d)) & 1);
            out.emplace_back(dim_, level_ + 1, idx, root_lower_, root_side_);
        }
        return out;
    }

    DyadicCube parent() const {
        if (level_ == 0) throw GeometryError("root cube has no parent");
        MultiIndex idx{0, 0, 0};
        for (int d = 0; d < dim_; ++d) idx[d] = index_[d] / 2;
        return DyadicCube(dim_, level_ - 1, idx, root_lower_, root_side_);
    }

    /// Same-level cube shifted by `step` along `axis` (may leave the root).
    DyadicCube neighbor(int axis, long step) const {
        MultiIndex idx = index_;
        idx[axis] += step;
        return DyadicCube(dim_, level_, idx, root_lower_, root_side_);
    }

    /// True when this cube is `other` or lies inside it.
    bool is_within(const DyadicCube& other) const noexcept {
        if (other.level_ > level_) return false;
        const int shift = level_ - other.level_;
        for (int d = 0; d < dim_; ++d)
            if ((index_[d] >> shift) != other.index_[d]) return false;
        return true;
    }

    bool operator==(const DyadicCube& o) const noexcept {
        if (dim_ != o.dim_ || level_ != o.level_) return false;
        for (int d = 0; d < dim_; ++d)
            if (index_[d] != o.index_[d]) return false;
        return true;
    }
    bool operator<(const DyadicCube& o) const noexcept {
        if (level_ != o.level_) return level_ < o.level_;
        for (int d = 0; d < dim_; ++d)
            if (index_[d] != o.index_[d]) return index_[d] < o.index_[d];
        return false;
    }

private:
    int dim_ = 1;
    int level_ = 0;
    MultiIndex index_{0, 0, 0};
    Point root_lower_{-2.0, -2.0, -2.0};
    double root_side_ = 4.0;
};

/// Deepest level whose cubes still contain whole cells of the grid.
inline int max_resolvable_depth(const Grid& grid, const DyadicCube& root) {
    const double cells = root.side() / grid.spacing();
    int depth = 0;
    while (std::ldexp(1.0, depth + 1) <= cells + 1e-9) ++depth;
    return depth;
}

/// All descendants of `root` down to `max_depth` levels below it, breadth first.
inline std::vector<DyadicCube> make_dyadic_tree(const Grid& grid, const DyadicCube& root, int max_depth) {
    if (max_depth < 0) throw DomainError("max_depth must be non-negative");
    if (max_depth > max_resolvable_depth(grid, root))
        throw ResolutionError("dyadic depth exceeds grid resolution");
    std::vector<DyadicCube> out{root};
    std::size_t begin = 0;
    for (int k = 0; k < max_depth; ++k) {
        const std::size_t end = out.size();
        for (std::size_t i = begin; i < end; ++i)
            for (auto& c : out[i].children()) out.push_back(c);
        begin = end;
    }
    return out;
}

inline IndexBox cells_in(const Grid& grid, const DyadicCube& q) { return cells_in(grid, q.cube()); }

/// Mean of f over the cell centers inside Q.
inline double cube_average(const GridFunction& f, const Cube& q) {
    const IndexBox box = cells_in(f.grid(), q);
    if (box.count() == 0) throw GeometryError("cube contains no cell center");
    double s = 0.0;
    box.for_each(f.grid(), [&](std::size_t i) { s += f[i]; });
    return s / static_cast<double>(box.count());
}

inline double cube_average(const GridFunction& f, const DyadicCube& q) { return cube_average(f, q.cube()); }

struct HalfSpacePoint {
    Point x{0.0, 0.0, 0.0};
    double t = 1.0;
};

/// Q-hat = {(x, t): x in Q, 0 < t <= l(Q)}; the top face is closed.
struct CarlesonBox {
    Cube base;

    double height() const noexcept { return base.side; }
    double volume() const noexcept { return base.volume() * base.side; }
    bool contains(const HalfSpacePoint& p) const noexcept {
        return p.t > 0.0 && p.t <= base.side && base.contains(p.x);
    }
};

inline CarlesonBox carleson_box(const DyadicCube& q) { return CarlesonBox{q.cube()}; }
inline CarlesonBox carleson_box(const Cube& q) { return CarlesonBox{q}; }

}  // namespace balayage
