#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "balayage/errors.hpp"
#include "balayage/grid.hpp"

namespace balayage::corpus {

/// Test functions supported in [-1, 1]^n; variation is along the first axis, the other axes only cut the support.
inline bool in_support(const Point& p, int dim) {
    for (int d = 0; d < dim; ++d)
        if (std::abs(p[d]) > 1.0) return false;
    return true;
}

inline GridFunction sign_bump(const Grid& g) {
    return GridFunction::sample(g, [&](const Point& p) { return in_support(p, g.dim()) ? (p[0] > 0 ? 1.0 : -1.0) : 0.0; });
}

/// log(1/|x|) on the support, cut at |x| = h.
inline GridFunction truncated_log(const Grid& g) {
    const double h = g.spacing();
    return GridFunction::sample(g, [&](const Point& p) { return in_support(p, g.dim()) ? std::log(1.0 / std::max(std::abs(p[0]), h)) : 0.0; });
}

/// Sum over dyadic levels 1..levels of [-1, 1] of random-sign Haar functions with amplitude 1/2.
inline GridFunction dyadic_martingale(const Grid& g, std::uint64_t seed, int levels = 4) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5);
    std::vector<std::vector<double>> eps(static_cast<std::size_t>(levels));
    for (int k = 0; k < levels; ++k)
        for (long j = 0; j < (1L << k); ++j) eps[static_cast<std::size_t>(k)].push_back(coin(rng) ? 0.5 : -0.5);
    return GridFunction::sample(g, [&](const Point& p) {
        if (!in_support(p, g.dim())) return 0.0;
        const double s = 0.5 * (p[0] + 1.0);  // in [0, 1]
        double v = 0.0;
        for (int k = 0; k < levels; ++k) {
            const double scaled = s * static_cast<double>(1L << k);
            const long j = std::min(static_cast<long>(scaled), (1L << k) - 1);
            const double frac = scaled - static_cast<double>(j);
            v += eps[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] * (frac < 0.5 ? 1.0 : -1.0);
        }
        return v;
    });
}

/// Random mixture of the first `modes` Dirichlet modes sin(k pi (x + 1) / 2) of [-1, 1], coefficients in [-1, 1] / k.
inline GridFunction eigen_mixture(const Grid& g, std::uint64_t seed, int modes = 6) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> c(static_cast<std::size_t>(modes));
    for (int k = 0; k < modes; ++k) c[static_cast<std::size_t>(k)] = u(rng) / (k + 1);
    return GridFunction::sample(g, [&](const Point& p) {
        if (!in_support(p, g.dim())) return 0.0;
        double v = 0.0;
        for (int k = 0; k < modes; ++k) v += c[static_cast<std::size_t>(k)] * std::sin((k + 1) * std::numbers::pi * 0.5 * (p[0] + 1.0));
        return v;
    });
}

/// Smooth bump (1 - |x|^2)^2 on the unit ball.
inline GridFunction smooth_bump(const Grid& g) {
    return GridFunction::sample(g, [&](const Point& p) {
        double r2 = 0.0;
        for (int d = 0; d < g.dim(); ++d) r2 += p[d] * p[d];
        return r2 < 1.0 ? (1.0 - r2) * (1.0 - r2) : 0.0;
    });
}

/// By name: zero, sign_bump, truncated_log, smooth_bump, dyadic_martingale[:seed], eigen_mixture[:seed].
inline GridFunction by_name(const Grid& g, const std::string& spec) {
    const auto colon = spec.find(':');
    const std::string name = spec.substr(0, colon);
    std::uint64_t seed = 1;
    if (colon != std::string::npos) {
        try {
            seed = std::stoull(spec.substr(colon + 1));
        } catch (const std::exception&) {
            throw UsageError("bad seed in function spec '" + spec + "'");
        }
    }
    if (name == "zero") return GridFunction(g);
    if (name == "sign_bump") return sign_bump(g);
    if (name == "truncated_log") return truncated_log(g);
    if (name == "smooth_bump") return smooth_bump(g);
    if (name == "dyadic_martingale") return dyadic_martingale(g, seed);
    if (name == "eigen_mixture") return eigen_mixture(g, seed);
    throw UsageError("unknown function '" + spec + "'");
}

/// The stopping-time corpus: sign bump, truncated log, one dyadic martingale, two eigen-mixtures.
inline std::vector<std::string> stopping_corpus() { return {"sign_bump", "truncated_log", "dyadic_martingale:7", "eigen_mixture:3", "eigen_mixture:11"}; }

}  // namespace balayage::corpus
