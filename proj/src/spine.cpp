#include "branchsim/spine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace branchsim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Division time within one step when the intensity is interpolated linearly
// between its endpoint values; e is the standard-exponential mark, already
// known to land inside the step.
double step_event_time(double l0, double l1, double h, double e) {
    const double A = (l1 - l0) / (2.0 * h);
    const double disc = l0 * l0 + 4.0 * A * e;
    const double denom = l0 + std::sqrt(std::max(disc, 0.0));
    if (denom <= 0.0) return h;
    return std::min(2.0 * e / denom, h);
}

// Next jump delay along the deterministic flow started at x, by thinning
// against kbar * rate_bound. Valid whenever children are dominated by their
// parent in V; the acceptance ratio is checked at every proposal.
double aux_delay_exact(const ModelSpec& m, const EigenPair& eig, double x, double max_delay,
                       Rng& rng, int quad_order) {
    if (max_delay <= 0.0) return kInf;
    const double kbar = static_cast<double>(m.max_arity);
    double s = 0.0, y = x;
    const double xv[1] = {x};
    while (s < max_delay) {
        const double yv[1] = {y};
        const double probe = kbar * m.rate_bound(StateView(yv, 1), 1.0);
        const double H = probe > 0.0 ? std::min(1.0, 1.5 / probe) : 1.0;
        const double lb = probe > 0.0 ? kbar * m.rate_bound(StateView(yv, 1), H) : 0.0;
        if (lb > 0.0) {
            double u = 0.0;
            for (;;) {
                u += rng.exponential(lb);
                if (u >= H) break;
                double zv[1];
                m.flow(StateView(xv, 1), s + u, zv);
                const double lam = aux_jump_rate(m, eig, StateView(zv, 1), quad_order);
                if (lam > lb * (1.0 + 1e-9))
                    throw std::runtime_error("simulate_aux: jump intensity exceeds its bound");
                if (rng.uniform() * lb <= lam) return s + u;
            }
        }
        s += H;
        double ynext[1];
        m.flow(StateView(xv, 1), s, ynext);
        y = ynext[0];
    }
    return kInf;
}

std::vector<double> simulate_aux_exact(const ModelSpec& m, const EigenPair& eig, double x0,
                                       std::span<const double> times, Rng& rng,
                                       const AuxConfig& acfg) {
    std::vector<double> out;
    out.reserve(times.size());
    const double horizon = times.empty() ? 0.0 : times.back();
    double t = 0.0, x = x0;
    std::size_t ri = 0;
    std::uint64_t events = 0;
    while (ri < times.size()) {
        const double delay = aux_delay_exact(m, eig, x, horizon - t, rng, acfg.quad_order);
        const double t_next = t + delay;
        // record strictly before the jump; a tie takes the post-jump state
        while (ri < times.size() && times[ri] < t_next) {
            const double xv[1] = {x};
            double yv[1];
            m.flow(StateView(xv, 1), times[ri] - t, yv);
            out.push_back(yv[0]);
            ++ri;
        }
        if (ri >= times.size() || !std::isfinite(t_next)) break;
        const double xv[1] = {x};
        double yv[1];
        m.flow(StateView(xv, 1), delay, yv);
        const AuxJump jp = aux_jump_sample(m, eig, StateView(yv, 1), rng);
        x = jp.state[0];
        t = t_next;
        if (++events > acfg.max_events)
            throw std::runtime_error("simulate_aux: event cap exceeded");
    }
    return out;
}

std::vector<double> simulate_aux_euler(const ModelSpec& m, const EigenPair& eig, StateView x0,
                                       std::span<const double> times, Rng& rng,
                                       const AuxConfig& acfg) {
    const int d = m.dim();
    const std::size_t n = times.size();
    std::vector<double> out;
    out.reserve(n * d);
    std::vector<double> x(x0.begin(), x0.end()), mu(d), x1(d);
    const bool half_line = m.space.kind == StateSpace::Kind::HalfLine;
    const double horizon = n ? times.back() : 0.0;
    double t = 0.0;
    std::size_t ri = 0;
    while (ri < n && times[ri] <= 1e-15) {
        out.insert(out.end(), x.begin(), x.end());
        ++ri;
    }
    std::uint64_t events = 0;
    while (t < horizon - 1e-15 && ri < n) {
        double h = std::min(acfg.dt, horizon - t);
        h = std::min(h, times[ri] - t);
        if (h <= 0.0) h = acfg.dt * 1e-6; // defensive against rounding stalls
        aux_drift(m, eig, x, mu);
        const double sig = m.diffusion ? m.diffusion(x) : 0.0;
        const double noise = sig > 0.0 ? std::sqrt(2.0 * sig * h) : 0.0;
        for (int i = 0; i < d; ++i) {
            x1[i] = x[i] + mu[i] * h + (noise > 0.0 ? noise * rng.normal() : 0.0);
            if (half_line && x1[i] < 0.0) x1[i] = 0.0;
        }
        if (m.local_branching) {
            // reproduction leaves the auxiliary state where it is, so the
            // state law needs no jump clock at all
            x.assign(x1.begin(), x1.end());
            t += h;
        } else {
            const double l0 = aux_jump_rate(m, eig, x, acfg.quad_order);
            const double l1 = aux_jump_rate(m, eig, x1, acfg.quad_order);
            const double hz = 0.5 * h * (l0 + l1);
            const double e = rng.exponential(1.0);
            if (e < hz) {
                const double tau = step_event_time(l0, l1, h, e);
                const double frac = tau / h;
                for (int i = 0; i < d; ++i) x[i] += (x1[i] - x[i]) * frac;
                const AuxJump jp = aux_jump_sample(m, eig, x, rng);
                x.assign(jp.state.begin(), jp.state.end());
                t += tau;
                if (++events > acfg.max_events)
                    throw std::runtime_error("simulate_aux: event cap exceeded");
            } else {
                x.assign(x1.begin(), x1.end());
                t += h;
            }
        }
        while (ri < n && times[ri] <= t + 1e-12) {
            out.insert(out.end(), x.begin(), x.end());
            ++ri;
        }
    }
    return out;
}

} // namespace

void aux_drift(const ModelSpec& m, const EigenPair& eig, StateView x, StateOut out) {
    m.drift(x, out);
    if (!m.has_diffusion) return;
    const double sig = m.diffusion(x);
    if (sig <= 0.0) return;
    const double v = eig.V.value(x);
    if (!(v > 0.0)) throw std::runtime_error("aux_drift: V must be positive at the state");
    std::vector<double> g(x.size());
    fn_gradient(eig.V, x, g);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] += 2.0 * sig * g[i] / v;
}

double aux_jump_rate(const ModelSpec& m, const EigenPair& eig, StateView x, int quad_order) {
    const double r = m.rate(x);
    if (r <= 0.0) return 0.0;
    if (m.local_branching) return r * m.mean_offspring(x); // V-weights cancel exactly
    const double v = eig.V.value(x);
    if (!(v > 0.0)) throw std::runtime_error("aux_jump_rate: V must be positive at the state");
    const double s = branch_expectation(
        m, x, [&](StateView c) { return eig.V.value(c); }, quad_order);
    return r * s / v;
}

AuxJump aux_jump_sample(const ModelSpec& m, const EigenPair& eig, StateView x, Rng& rng) {
    const int d = m.dim();
    std::vector<double> pbuf(m.max_arity + 1);
    m.offspring_pmf(x, pbuf);
    std::vector<double> buf(d), cbuf(static_cast<std::size_t>(m.max_arity) * d);

    double vmax = 0.0;
    for (int k = 1; k <= m.max_arity; ++k) {
        if (pbuf[k] <= 0.0) continue;
        m.max_child_state(k, x, buf);
        vmax = std::max(vmax, eig.V.value(buf));
    }
    if (!(vmax > 0.0))
        throw std::runtime_error("aux_jump_sample: no family with positive V-weight");

    // Rejection against the envelope kbar * vmax. Proposal: K ~ p_k, child
    // uniform, theta uniform; target weight of (k, j, theta) is p_k V(F_j),
    // so the 1/k of the uniform child pick must be cancelled.
    for (int attempt = 0; attempt < 1000000; ++attempt) {
        const double u = rng.uniform();
        int k = 0;
        double c = 0.0;
        for (int kk = 0; kk <= m.max_arity; ++kk) {
            c += pbuf[kk];
            if (u <= c) {
                k = kk;
                break;
            }
        }
        if (k == 0) continue; // childless families carry no weight
        const int j = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
        const double theta = rng.uniform();
        m.children(k, x, theta, std::span<double>(cbuf.data(), static_cast<std::size_t>(k) * d));
        const StateView child(cbuf.data() + static_cast<std::size_t>(j - 1) * d, d);
        const double vc = eig.V.value(child);
        const double ap = k * vc / (m.max_arity * vmax);
        if (ap > 1.0 + 1e-9)
            throw std::runtime_error("aux_jump_sample: envelope violated by a child state");
        if (rng.uniform() < ap)
            return {std::vector<double>(child.begin(), child.end()), k, j, theta};
    }
    throw std::runtime_error("aux_jump_sample: rejection sampling did not terminate");
}

std::vector<double> simulate_aux(const ModelSpec& m, const EigenPair& eig, StateView x0,
                                 std::span<const double> times, Rng& rng,
                                 const AuxConfig& acfg) {
    if (!m.space.contains(x0))
        throw std::domain_error("simulate_aux: start state outside the state space");
    for (std::size_t i = 1; i < times.size(); ++i)
        if (times[i] < times[i - 1])
            throw std::invalid_argument("simulate_aux: times must be sorted");
    if (!times.empty() && times.front() < 0.0)
        throw std::invalid_argument("simulate_aux: times must be nonnegative");
    if (!m.has_diffusion && m.flow && m.dim() == 1)
        return simulate_aux_exact(m, eig, x0[0], times, rng, acfg);
    return simulate_aux_euler(m, eig, x0, times, rng, acfg);
}

std::vector<double> long_run_distribution(const ModelSpec& m, const EigenPair& eig, StateView x0,
                                          std::size_t n_samples, double burn_in,
                                          double thin_interval, std::uint64_t seed,
                                          const AuxConfig& acfg) {
    if (thin_interval <= 0.0)
        throw std::invalid_argument("long_run_distribution: thin_interval must be > 0");
    std::vector<double> times(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i)
        times[i] = burn_in + static_cast<double>(i) * thin_interval;
    Rng rng(seed);
    return simulate_aux(m, eig, x0, times, rng, acfg);
}

} // namespace branchsim
