#pragma once
#include <cstddef>
#include <functional>
#include <vector>

namespace branchsim {

struct QuadRule {
    std::vector<double> nodes;   // on [0,1]
    std::vector<double> weights; // sum to 1
};

// Gauss-Legendre rule mapped to [0,1]. Rules are cached per order.
const QuadRule& gauss_legendre01(int order);

inline double integrate01(const QuadRule& q, const std::function<double(double)>& f) {
    double acc = 0.0;
    for (std::size_t i = 0; i < q.nodes.size(); ++i) acc += q.weights[i] * f(q.nodes[i]);
    return acc;
}

// Composite Simpson on [a,b] with n (even) intervals.
double simpson(const std::function<double(double)>& f, double a, double b, int n);

// Adaptive Simpson; used as the independent quadrature oracle in tests.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-10, int max_depth = 40);

} // namespace branchsim
