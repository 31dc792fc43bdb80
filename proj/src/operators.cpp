#include "branchsim/model.hpp"

#include <cmath>
#include <stdexcept>

#include "branchsim/quadrature.hpp"

namespace branchsim {

double ModelSpec::pmf(StateView x, int k) const {
    std::vector<double> p(max_arity + 1, 0.0);
    offspring_pmf(x, p);
    return (k >= 0 && k <= max_arity) ? p[k] : 0.0;
}

double ModelSpec::mean_offspring(StateView x) const {
    std::vector<double> p(max_arity + 1, 0.0);
    offspring_pmf(x, p);
    double m = 0.0;
    for (int k = 0; k <= max_arity; ++k) m += k * p[k];
    return m;
}

namespace {

// Integrate h(theta) over [0,1] respecting the model's theta structure.
double theta_integral(const ModelSpec& m, int k, const std::function<double(double)>& h,
                      int quad_order) {
    switch (m.theta_kind) {
        case ThetaKind::Independent:
            return h(0.5);
        case ThetaKind::PiecewiseConst: {
            std::vector<double> br = m.theta_breaks ? m.theta_breaks(k) : std::vector<double>{};
            double acc = 0.0, lo = 0.0;
            for (double b : br) {
                if (b > lo) acc += (b - lo) * h(0.5 * (lo + b));
                lo = b;
            }
            if (lo < 1.0) acc += (1.0 - lo) * h(0.5 * (lo + 1.0));
            return acc;
        }
        case ThetaKind::Continuous:
            return integrate01(gauss_legendre01(quad_order), h);
    }
    return 0.0;
}

} // namespace

double branch_expectation(const ModelSpec& m, StateView x,
                          const std::function<double(StateView)>& f, int quad_order) {
    const int d = m.dim();
    std::vector<double> p(m.max_arity + 1, 0.0);
    m.offspring_pmf(x, p);
    std::vector<double> buf(static_cast<std::size_t>(m.max_arity) * d);
    double acc = 0.0;
    for (int k = 1; k <= m.max_arity; ++k) {
        if (p[k] <= 0.0) continue;
        auto h = [&](double theta) {
            m.children(k, x, theta, std::span<double>(buf.data(), static_cast<std::size_t>(k) * d));
            double s = 0.0;
            for (int j = 0; j < k; ++j) s += f(StateView(buf.data() + j * d, d));
            return s;
        };
        acc += p[k] * theta_integral(m, k, h, quad_order);
    }
    return acc;
}

double branch_family_integral(const ModelSpec& m, StateView x,
                              const std::function<double(int, StateView)>& h, int quad_order) {
    const int d = m.dim();
    std::vector<double> p(m.max_arity + 1, 0.0);
    m.offspring_pmf(x, p);
    std::vector<double> buf(static_cast<std::size_t>(m.max_arity) * d);
    double acc = 0.0;
    for (int k = 1; k <= m.max_arity; ++k) {
        if (p[k] <= 0.0) continue;
        auto hk = [&](double theta) {
            const std::size_t n = static_cast<std::size_t>(k) * d;
            m.children(k, x, theta, std::span<double>(buf.data(), n));
            return h(k, StateView(buf.data(), n));
        };
        acc += p[k] * theta_integral(m, k, hk, quad_order);
    }
    return acc;
}

void fn_gradient(const TestFunction& f, StateView x, StateOut out) {
    if (f.gradient) { f.gradient(x, out); return; }
    std::vector<double> y(x.begin(), x.end());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double h = 1e-5 * std::max(1.0, std::abs(x[i]));
        const double xi = y[i];
        y[i] = xi + h;
        const double fp = f.value(y);
        y[i] = xi - h;
        const double fm = f.value(y);
        y[i] = xi;
        out[i] = (fp - fm) / (2.0 * h);
    }
}

double fn_laplacian(const TestFunction& f, StateView x) {
    if (f.laplacian) return f.laplacian(x);
    std::vector<double> y(x.begin(), x.end());
    const double f0 = f.value(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double h = 1e-5 * std::max(1.0, std::abs(x[i]));
        const double xi = y[i];
        y[i] = xi + h;
        const double fp = f.value(y);
        y[i] = xi - h;
        const double fm = f.value(y);
        y[i] = xi;
        acc += (fp - 2.0 * f0 + fm) / (h * h);
    }
    return acc;
}

double apply_mean_generator(const ModelSpec& m, const TestFunction& f, StateView x,
                            int quad_order) {
    if (!m.space.contains(x))
        throw std::invalid_argument("apply_mean_generator: state outside the state space");
    const int d = m.dim();
    std::vector<double> b(d), g(d);
    m.drift(x, b);
    fn_gradient(f, x, g);
    double motion = 0.0;
    for (int i = 0; i < d; ++i) motion += b[i] * g[i];
    if (m.has_diffusion) {
        const double s = m.diffusion(x);
        if (s != 0.0) motion += s * fn_laplacian(f, x);
    }
    const double fx = f.value(x);
    const double jump = m.rate(x) * (branch_expectation(m, x, f.value, quad_order) - fx);
    return motion + jump;
}

double eigen_residual(const ModelSpec& m, const EigenPair& e,
                      const std::vector<std::vector<double>>& grid, int quad_order) {
    if (grid.empty()) throw std::invalid_argument("eigen_residual: empty grid");
    double worst = 0.0;
    for (const auto& x : grid) {
        const double v = e.V.value(x);
        const double gv = apply_mean_generator(m, e.V, x, quad_order);
        const double res = std::abs(gv - e.lambda0 * v) / std::max(1.0, std::abs(v));
        worst = std::max(worst, res);
    }
    return worst;
}

double fork_operator_J2(const ModelSpec& m, const std::function<double(StateView)>& f,
                        const std::function<double(StateView)>& g, StateView x,
                        int quad_order) {
    const int d = m.dim();
    std::vector<double> p(m.max_arity + 1, 0.0);
    m.offspring_pmf(x, p);
    std::vector<double> buf(static_cast<std::size_t>(m.max_arity) * d);
    double acc = 0.0;
    for (int k = 2; k <= m.max_arity; ++k) {
        if (p[k] <= 0.0) continue;
        auto h = [&](double theta) {
            m.children(k, x, theta, std::span<double>(buf.data(), static_cast<std::size_t>(k) * d));
            double sf = 0.0, sg = 0.0, sfg = 0.0;
            for (int j = 0; j < k; ++j) {
                StateView c(buf.data() + j * d, d);
                const double fv = f(c), gv = g(c);
                sf += fv;
                sg += gv;
                sfg += fv * gv;
            }
            // ordered pairs a != b
            return sf * sg - sfg;
        };
        acc += p[k] * theta_integral(m, k, h, quad_order);
    }
    return acc;
}

} // namespace branchsim
