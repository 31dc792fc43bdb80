#include "branchsim/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include "branchsim/quadrature.hpp"

namespace branchsim {

TestFunction fn_scalar(std::function<double(double)> f) {
    TestFunction t;
    t.value = [f = std::move(f)](StateView x) { return f(x[0]); };
    return t;
}

TestFunction fn_nd(std::function<double(StateView)> f) {
    TestFunction t;
    t.value = std::move(f);
    return t;
}

double rate_eval(const RateKind& rk, double x) {
    return std::visit(
        [x](const auto& r) -> double {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, ConstantRate>) return r.r0;
            else if constexpr (std::is_same_v<T, AffineRate>) return r.a * x + r.b;
            else if constexpr (std::is_same_v<T, PlateauRate>)
                return std::min(r.a * x + r.b, r.a * r.xstar + r.b);
            else return r.a * std::pow(x, r.p);
        },
        rk);
}

namespace {

void validate_rate(const RateKind& rk) {
    std::visit(
        [](const auto& r) {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, ConstantRate>) {
                if (r.r0 < 0.0) throw std::invalid_argument("rate: r0 must be >= 0");
            } else if constexpr (std::is_same_v<T, AffineRate>) {
                if (r.a < 0.0 || r.b < 0.0)
                    throw std::invalid_argument("rate: affine coefficients must be >= 0");
            } else if constexpr (std::is_same_v<T, PlateauRate>) {
                if (r.a < 0.0 || r.b < 0.0 || r.xstar < 0.0)
                    throw std::invalid_argument("rate: plateau parameters must be >= 0");
            } else {
                if (r.a < 0.0 || r.p < 0.0)
                    throw std::invalid_argument("rate: power parameters must be >= 0");
            }
        },
        rk);
}

// Division time under the unit-drift flow x+s: solve int_0^s r(x+u) du = e.
double mitosis_hazard_inverse(const RateKind& rk, double x, double e) {
    return std::visit(
        [x, e](const auto& r) -> double {
            using T = std::decay_t<decltype(r)>;
            const double inf = std::numeric_limits<double>::infinity();
            if constexpr (std::is_same_v<T, ConstantRate>) {
                return r.r0 > 0.0 ? e / r.r0 : inf;
            } else if constexpr (std::is_same_v<T, AffineRate>) {
                if (r.a == 0.0) return r.b > 0.0 ? e / r.b : inf;
                const double q = r.a * x + r.b;
                return 2.0 * e / (q + std::sqrt(q * q + 2.0 * r.a * e));
            } else if constexpr (std::is_same_v<T, PlateauRate>) {
                const double rinf = r.a * r.xstar + r.b;
                if (rinf <= 0.0) return inf;
                if (r.a == 0.0 || x >= r.xstar) return e / rinf;
                const double sstar = r.xstar - x;
                const double hstar = (r.a * x + r.b) * sstar + 0.5 * r.a * sstar * sstar;
                if (e <= hstar) {
                    const double q = r.a * x + r.b;
                    return 2.0 * e / (q + std::sqrt(q * q + 2.0 * r.a * e));
                }
                return sstar + (e - hstar) / rinf;
            } else {
                if (r.a <= 0.0) return inf;
                if (r.p == 0.0) return e / r.a;
                const double q = r.p + 1.0;
                return std::pow(std::pow(x, q) + q * e / r.a, 1.0 / q) - x;
            }
        },
        rk);
}

// int_0^1 icdf within tol of 1/2; the builders reject asymmetric laws.
void validate_split_symmetric(const SplitLaw& s) {
    if (!s.icdf) throw std::invalid_argument("split law: missing inverse CDF");
    if (s.is_atom) return; // deterministic half
    const QuadRule& q = gauss_legendre01(512);
    double mean = 0.0;
    for (std::size_t i = 0; i < q.nodes.size(); ++i) {
        const double v = s.icdf(q.nodes[i]);
        if (v < 0.0 || v > 1.0)
            throw std::invalid_argument("split law: inverse CDF leaves [0,1]");
        mean += q.weights[i] * v;
    }
    if (std::abs(mean - 0.5) > 1e-4)
        throw std::invalid_argument("split law '" + s.name +
                                    "' is not symmetric: mean fraction " + std::to_string(mean));
}

ModelSpec mitosis_base(const RateKind& rk, SplitLaw split, std::string name) {
    validate_rate(rk);
    validate_split_symmetric(split);
    ModelSpec m;
    m.name = std::move(name);
    m.space = {StateSpace::Kind::HalfLine, 1};
    m.drift = [](StateView, StateOut out) { out[0] = 1.0; };
    m.has_diffusion = false;
    m.rate = [rk](StateView x) { return rate_eval(rk, x[0]); };
    m.rate_bound = [rk](StateView x, double h) { return rate_eval(rk, x[0] + h); };
    m.max_arity = 2;
    m.offspring_pmf = [](StateView, StateOut p) { p[0] = 0.0; p[1] = 0.0; p[2] = 1.0; };
    const bool atom = split.is_atom;
    m.children = [sp = split](int, StateView x, double theta, StateOut out) {
        const double q = sp.is_atom ? 0.5 : sp.icdf(theta);
        out[0] = q * x[0];
        out[1] = (1.0 - q) * x[0];
    };
    m.theta_kind = atom ? ThetaKind::Independent : ThetaKind::Continuous;
    m.max_child_state = [atom](int, StateView x, StateOut out) {
        out[0] = atom ? 0.5 * x[0] : x[0];
    };
    m.size_structured = true;
    m.split = std::move(split);
    m.has_split = true;
    m.flow = [](StateView x, double s, StateOut out) { out[0] = x[0] + s; };
    m.hazard_inverse = [rk](StateView x, double e) { return mitosis_hazard_inverse(rk, x[0], e); };
    return m;
}

} // namespace

SplitLaw split_deterministic_half() {
    SplitLaw s;
    s.name = "half";
    s.is_atom = true;
    s.icdf = [](double) { return 0.5; };
    return s;
}

SplitLaw split_uniform() {
    SplitLaw s;
    s.name = "uniform";
    s.icdf = [](double t) { return t; };
    s.density = [](double q) { return (q >= 0.0 && q <= 1.0) ? 1.0 : 0.0; };
    s.cdf = [](double q) { return std::clamp(q, 0.0, 1.0); };
    return s;
}

SplitLaw split_beta22() {
    SplitLaw s;
    s.name = "beta22";
    s.density = [](double q) { return (q >= 0.0 && q <= 1.0) ? 6.0 * q * (1.0 - q) : 0.0; };
    s.cdf = [](double q) {
        q = std::clamp(q, 0.0, 1.0);
        return q * q * (3.0 - 2.0 * q);
    };
    // Invert q^2 (3 - 2q) = u by Newton with bisection safeguard.
    s.icdf = [](double u) {
        double lo = 0.0, hi = 1.0, q = u;
        for (int it = 0; it < 60; ++it) {
            const double f = q * q * (3.0 - 2.0 * q) - u;
            if (f > 0.0) hi = q; else lo = q;
            const double df = 6.0 * q * (1.0 - q);
            double step = df > 1e-12 ? q - f / df : 0.5 * (lo + hi);
            if (step <= lo || step >= hi) step = 0.5 * (lo + hi);
            if (std::abs(step - q) < 1e-15) { q = step; break; }
            q = step;
        }
        return q;
    };
    return s;
}

ModelSpec make_equal_mitosis(const RateKind& rk) {
    return mitosis_base(rk, split_deterministic_half(), "equal_mitosis");
}

ModelSpec make_asymmetric_mitosis(const RateKind& rk, SplitLaw split) {
    auto m = mitosis_base(rk, std::move(split), "asymmetric_mitosis");
    return m;
}

ModelSpec make_parasite(double a, double b, const RateKind& rk, SplitLaw h_law) {
    if (a < 0.0 || b < 0.0)
        throw std::invalid_argument("make_parasite: a, b must be >= 0");
    validate_rate(rk);
    validate_split_symmetric(h_law);
    ModelSpec m;
    m.name = "parasite";
    m.space = {StateSpace::Kind::HalfLine, 1};
    m.drift = [a](StateView x, StateOut out) { out[0] = a * x[0]; };
    m.has_diffusion = b > 0.0;
    m.diffusion = [b](StateView x) { return b * std::max(x[0], 0.0); };
    m.rate = [rk](StateView x) { return rate_eval(rk, x[0]); };
    m.rate_bound = [rk, a](StateView x, double h) {
        return rate_eval(rk, x[0] * std::exp(std::max(a, 0.0) * h));
    };
    m.max_arity = 2;
    m.offspring_pmf = [](StateView, StateOut p) { p[0] = 0.0; p[1] = 0.0; p[2] = 1.0; };
    const bool atom = h_law.is_atom;
    m.children = [sp = h_law](int, StateView x, double theta, StateOut out) {
        const double q = sp.is_atom ? 0.5 : sp.icdf(theta);
        out[0] = q * x[0];
        out[1] = (1.0 - q) * x[0];
    };
    m.theta_kind = atom ? ThetaKind::Independent : ThetaKind::Continuous;
    m.max_child_state = [atom](int, StateView x, StateOut out) {
        out[0] = atom ? 0.5 * x[0] : x[0];
    };
    m.size_structured = true;
    m.split = std::move(h_law);
    m.has_split = true;
    if (!m.has_diffusion) {
        m.flow = [a](StateView x, double s, StateOut out) { out[0] = x[0] * std::exp(a * s); };
        if (const auto* c = std::get_if<ConstantRate>(&rk)) {
            const double r0 = c->r0;
            m.hazard_inverse = [r0](StateView, double e) {
                return r0 > 0.0 ? e / r0 : std::numeric_limits<double>::infinity();
            };
        }
    }
    return m;
}

ModelSpec make_branching_ou(int dim, double sigma, double g, double a, double b) {
    if (dim < 1) throw std::invalid_argument("make_branching_ou: dim must be >= 1");
    if (sigma <= 0.0 || g <= 0.0 || a < 0.0 || b < 0.0)
        throw std::invalid_argument("make_branching_ou: need sigma > 0, g > 0, a,b >= 0");
    ModelSpec m;
    m.name = "branching_ou";
    m.space = {StateSpace::Kind::FullSpace, dim};
    m.drift = [g, dim](StateView x, StateOut out) {
        for (int i = 0; i < dim; ++i) out[i] = -g * x[i];
    };
    m.has_diffusion = true;
    const double s2 = 0.5 * sigma * sigma; // Laplacian coefficient
    m.diffusion = [s2](StateView) { return s2; };
    m.rate = [a, b, dim](StateView x) {
        double n2 = 0.0;
        for (int i = 0; i < dim; ++i) n2 += x[i] * x[i];
        return b * n2 + a;
    };
    // |x| contracts along the deterministic flow, so r(x) bounds the window.
    m.rate_bound = [a, b, dim](StateView x, double) {
        double n2 = 0.0;
        for (int i = 0; i < dim; ++i) n2 += x[i] * x[i];
        return b * n2 + a;
    };
    m.max_arity = 2;
    m.offspring_pmf = [](StateView, StateOut p) { p[0] = 0.0; p[1] = 0.0; p[2] = 1.0; };
    m.children = [dim](int k, StateView x, double, StateOut out) {
        for (int j = 0; j < k; ++j)
            for (int i = 0; i < dim; ++i) out[j * dim + i] = x[i];
    };
    m.theta_kind = ThetaKind::Independent;
    m.max_child_state = [dim](int, StateView x, StateOut out) {
        for (int i = 0; i < dim; ++i) out[i] = x[i];
    };
    m.local_branching = true;
    return m;
}

ModelSpec make_fragmentation(double alpha, std::vector<FragPartition> partitions) {
    if (partitions.empty())
        throw std::invalid_argument("make_fragmentation: empty dislocation measure");
    double nu = 0.0;
    int kmax = 0;
    for (auto& p : partitions) {
        if (p.weight <= 0.0)
            throw std::invalid_argument("make_fragmentation: weights must be > 0");
        std::sort(p.fractions.begin(), p.fractions.end(), std::greater<double>());
        double sum = 0.0;
        for (double s : p.fractions) {
            if (s <= 0.0) throw std::invalid_argument("make_fragmentation: fractions must be > 0");
            sum += s;
        }
        if (sum > 1.0 + 1e-12)
            throw std::invalid_argument("make_fragmentation: fractions must sum to <= 1");
        if (p.fractions.empty())
            throw std::invalid_argument("make_fragmentation: empty partition");
        nu += p.weight;
        kmax = std::max(kmax, static_cast<int>(p.fractions.size()));
    }
    // Group partitions by child count; theta selects within a group.
    struct Group { std::vector<double> cum; std::vector<const FragPartition*> parts; double prob; };
    auto parts = std::make_shared<std::vector<FragPartition>>(std::move(partitions));
    auto groups = std::make_shared<std::vector<Group>>(kmax + 1);
    for (const auto& p : *parts) {
        auto& gr = (*groups)[p.fractions.size()];
        gr.parts.push_back(&p);
        gr.prob += p.weight / nu;
    }
    for (auto& gr : *groups) {
        double c = 0.0;
        for (const auto* p : gr.parts) {
            c += (p->weight / nu) / std::max(gr.prob, 1e-300);
            gr.cum.push_back(c);
        }
        if (!gr.cum.empty()) gr.cum.back() = 1.0;
    }

    ModelSpec m;
    m.name = "fragmentation";
    m.space = {StateSpace::Kind::HalfLine, 1};
    m.drift = [](StateView, StateOut out) { out[0] = 0.0; };
    m.has_diffusion = false;
    m.rate = [alpha, nu](StateView x) { return nu * std::pow(x[0], alpha); };
    m.rate_bound = [alpha, nu](StateView x, double) { return nu * std::pow(x[0], alpha); };
    m.max_arity = kmax;
    m.offspring_pmf = [groups, kmax](StateView, StateOut p) {
        for (int k = 0; k <= kmax; ++k) p[k] = (*groups)[k].prob;
    };
    m.children = [groups, parts](int k, StateView x, double theta, StateOut out) {
        const auto& gr = (*groups)[k];
        std::size_t i = 0;
        while (i + 1 < gr.cum.size() && theta > gr.cum[i]) ++i;
        const auto& fr = gr.parts[i]->fractions;
        for (int j = 0; j < k; ++j) out[j] = fr[j] * x[0];
    };
    m.theta_kind = ThetaKind::PiecewiseConst;
    m.theta_breaks = [groups](int k) {
        const auto& gr = (*groups)[k];
        std::vector<double> br(gr.cum.begin(), gr.cum.end());
        if (!br.empty()) br.pop_back(); // interior breakpoints only
        return br;
    };
    m.max_child_state = [groups, parts](int k, StateView x, StateOut out) {
        double smax = 0.0;
        for (const auto* p : (*groups)[k].parts) smax = std::max(smax, p->fractions[0]);
        out[0] = smax * x[0];
    };
    m.size_structured = true;
    m.flow = [](StateView x, double, StateOut out) { out[0] = x[0]; };
    m.hazard_inverse = [alpha, nu](StateView x, double e) {
        const double r = nu * std::pow(x[0], alpha);
        return r > 0.0 ? e / r : std::numeric_limits<double>::infinity();
    };
    return m;
}

EigenPair eigenpair_affine_mitosis(double a, double b) {
    if (a < 0.0 || b < 0.0 || a + b <= 0.0)
        throw std::invalid_argument("eigenpair_affine_mitosis: need a,b >= 0 and a+b > 0");
    const double root = std::sqrt(b * b + 4.0 * a);
    const double c = 0.5 * (root - b);
    EigenPair e;
    e.lambda0 = 0.5 * (root + b);
    e.label = "affine_mitosis";
    e.V.value = [c](StateView x) { return c * x[0] + 1.0; };
    e.V.gradient = [c](StateView, StateOut out) { out[0] = c; };
    e.V.laplacian = [](StateView) { return 0.0; };
    return e;
}

EigenPair eigenpair_parasite_linear(double a) {
    EigenPair e;
    e.lambda0 = a;
    e.label = "parasite_linear";
    e.V.value = [](StateView x) { return x[0]; };
    e.V.gradient = [](StateView, StateOut out) { out[0] = 1.0; };
    e.V.laplacian = [](StateView) { return 0.0; };
    return e;
}

EigenPair eigenpair_parasite_affine(double a, double c, double d) {
    if (d <= a) throw std::invalid_argument("eigenpair_parasite_affine: needs d > a");
    if (c < 0.0) throw std::invalid_argument("eigenpair_parasite_affine: needs c >= 0");
    const double tau = c / (d - a);
    EigenPair e;
    e.lambda0 = d;
    e.label = "parasite_affine";
    e.V.value = [tau](StateView x) { return tau * x[0] + 1.0; };
    e.V.gradient = [tau](StateView, StateOut out) { out[0] = tau; };
    e.V.laplacian = [](StateView) { return 0.0; };
    return e;
}

EigenPair eigenpair_branching_ou(int dim, double sigma, double g, double a, double b) {
    if (sigma <= 0.0 || g <= 0.0)
        throw std::invalid_argument("eigenpair_branching_ou: need sigma > 0, g > 0");
    const double disc = g * g - 2.0 * b * sigma * sigma;
    if (disc < 0.0)
        throw std::invalid_argument("eigenpair_branching_ou: needs g^2 >= 2 b sigma^2");
    const double alpha = std::sqrt(disc);
    const double Gamma = (g - alpha) / (2.0 * sigma * sigma);
    EigenPair e;
    e.lambda0 = dim * sigma * sigma * Gamma + a;
    e.label = "branching_ou";
    e.V.value = [Gamma, dim](StateView x) {
        double n2 = 0.0;
        for (int i = 0; i < dim; ++i) n2 += x[i] * x[i];
        return std::exp(Gamma * n2);
    };
    e.V.gradient = [Gamma, dim](StateView x, StateOut out) {
        double n2 = 0.0;
        for (int i = 0; i < dim; ++i) n2 += x[i] * x[i];
        const double v = std::exp(Gamma * n2);
        for (int i = 0; i < dim; ++i) out[i] = 2.0 * Gamma * x[i] * v;
    };
    e.V.laplacian = [Gamma, dim](StateView x) {
        double n2 = 0.0;
        for (int i = 0; i < dim; ++i) n2 += x[i] * x[i];
        return (2.0 * Gamma * dim + 4.0 * Gamma * Gamma * n2) * std::exp(Gamma * n2);
    };
    return e;
}

EigenPair eigenpair_fragmentation(double p, const std::vector<FragPartition>& partitions) {
    if (p <= 0.0) throw std::invalid_argument("eigenpair_fragmentation: needs p > 0");
    double nu = 0.0, moment = 0.0;
    for (const auto& part : partitions) {
        nu += part.weight;
        for (double s : part.fractions) moment += part.weight * std::pow(s, p);
    }
    EigenPair e;
    e.lambda0 = moment - nu; // nu(S) * (sum s_i^p - 1) aggregated over partitions
    e.label = "fragmentation_power";
    e.V.value = [p](StateView x) { return std::pow(x[0], p); };
    e.V.gradient = [p](StateView x, StateOut out) { out[0] = p * std::pow(x[0], p - 1.0); };
    e.V.laplacian = [p](StateView x) {
        return p * (p - 1.0) * std::pow(x[0], p - 2.0);
    };
    return e;
}

} // namespace branchsim
