#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "balayage/errors.hpp"

namespace balayage {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    std::size_t size() const noexcept { return nodes.size(); }

    template <typename F>
    double integrate(F&& f) const {
        double s = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(nodes[i]);
        return s;
    }
};

/// Gauss-Legendre rule on [a, b] (Golub-Welsch).
inline QuadratureRule gauss_legendre(int points, double a = -1.0, double b = 1.0) {
    if (points < 1) throw DomainError("Gauss-Legendre needs at least one node");
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(points, points);
    for (int k = 1; k < points; ++k) {
        const double beta = k / std::sqrt(4.0 * k * k - 1.0);
        jacobi(k, k - 1) = beta;
        jacobi(k - 1, k) = beta;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
    QuadratureRule rule;
    rule.nodes.resize(static_cast<std::size_t>(points));
    rule.weights.resize(static_cast<std::size_t>(points));
    const double half = 0.5 * (b - a);
    for (int k = 0; k < points; ++k) {
        const double v0 = es.eigenvectors()(0, k);
        rule.nodes[static_cast<std::size_t>(k)] = a + half * (es.eigenvalues()[k] + 1.0);
        rule.weights[static_cast<std::size_t>(k)] = 2.0 * v0 * v0 * half;
    }
    return rule;
}

/// Trapezoid rule in the variable v = log(s) for s in [lo, hi]; weights are in ds.
inline QuadratureRule log_trapezoid(double lo, double hi, int points) {
    if (!(lo > 0.0) || !(hi > lo) || points < 2) throw DomainError("log_trapezoid needs 0 < lo < hi and >= 2 nodes");
    QuadratureRule rule;
    const double a = std::log(lo), b = std::log(hi);
    const double dv = (b - a) / (points - 1);
    for (int j = 0; j < points; ++j) {
        const double s = std::exp(a + j * dv);
        const double w = (j == 0 || j == points - 1) ? 0.5 * dv : dv;
        rule.nodes.push_back(s);
        rule.weights.push_back(w * s);
    }
    return rule;
}

/// Trapezoid rule for integrals over (0, T] in the variable v with t = T / (1 + e^{-v}).
///
/// Near t = 0 the nodes are geometrically spaced (t ~ T e^v) and near t = T the
/// Jacobian decays like e^{-v}, so integrands that vanish at t = 0 like a power of t
/// get exponential convergence with no endpoint correction.
inline QuadratureRule logistic_trapezoid(double horizon, double v_lo, double v_hi, int points) {
    if (!(horizon > 0.0) || !(v_hi > v_lo) || points < 2) throw DomainError("bad logistic trapezoid parameters");
    QuadratureRule rule;
    const double dv = (v_hi - v_lo) / (points - 1);
    for (int j = 0; j < points; ++j) {
        const double v = v_lo + j * dv;
        const double sig = 1.0 / (1.0 + std::exp(-v));
        rule.nodes.push_back(horizon * sig);
        rule.weights.push_back(dv * horizon * sig * (1.0 - sig));
    }
    return rule;
}

/// Nodes for Bochner subordination in the variable u = t^2 / (4 s).
///
/// The weight e^{-u} u^{-1/2} / sqrt(pi) has unit mass; it is integrated with a
/// trapezoid rule in log u, which turns the endpoint singularity at u = 0 into a
/// decaying exponential e^{v/2}.  `weights` already include the 1/sqrt(pi) e^{-u} u^{-1/2}
/// factor, so sum_j w_j g(u_j) approximates (1/sqrt(pi)) int e^{-u} u^{-1/2} g(u) du.
struct SubordinationSpec {
    double log_u_min = -46.0;
    double log_u_max = 4.5;
    int points = 512;
};

inline QuadratureRule subordination_rule(const SubordinationSpec& spec) {
    if (spec.points < 2 || !(spec.log_u_max > spec.log_u_min)) throw DomainError("bad subordination spec");
    QuadratureRule rule;
    const double dv = (spec.log_u_max - spec.log_u_min) / (spec.points - 1);
    for (int j = 0; j < spec.points; ++j) {
        const double v = spec.log_u_min + j * dv;
        const double u = std::exp(v);
        rule.nodes.push_back(u);
        rule.weights.push_back(dv * std::exp(-u + 0.5 * v) / std::sqrt(std::numbers::pi));
    }
    return rule;
}

}  // namespace balayage
