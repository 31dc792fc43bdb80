#include "branchsim/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace branchsim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void validate_config(const SimConfig& cfg) {
    if (cfg.horizon < 0.0) throw std::invalid_argument("SimConfig: horizon must be >= 0");
    if (cfg.dt <= 0.0) throw std::invalid_argument("SimConfig: dt must be > 0");
    if (cfg.max_particles == 0) throw std::invalid_argument("SimConfig: max_particles must be > 0");
    double prev = 0.0;
    for (double t : cfg.snapshot_times) {
        if (t < prev) throw std::invalid_argument("SimConfig: snapshot_times must be sorted");
        if (t > cfg.horizon + 1e-12)
            throw std::invalid_argument("SimConfig: snapshot time beyond horizon");
        prev = t;
    }
}

int draw_offspring(const ModelSpec& m, StateView x, Rng& rng, std::vector<double>& pbuf) {
    m.offspring_pmf(x, pbuf);
    const double u = rng.uniform();
    double c = 0.0;
    for (int k = 0; k <= m.max_arity; ++k) {
        c += pbuf[k];
        if (u <= c) return k;
    }
    return m.max_arity;
}

// ---------- exact-flow engine (sigma == 0, 1-D, explicit flow) ----------

double division_delay_exact(const ModelSpec& m, double x, double max_delay, Rng& rng) {
    const double xv[1] = {x};
    if (m.hazard_inverse) return m.hazard_inverse(StateView(xv, 1), rng.exponential(1.0));
    // Exact thinning along the deterministic flow, window by window.
    double s = 0.0, y = x;
    double yv[1];
    while (s < max_delay) {
        yv[0] = y;
        const double rb1 = m.rate_bound(StateView(yv, 1), 1.0);
        const double H = rb1 > 0.0 ? std::min(1.0, 1.5 / rb1) : 1.0;
        const double rb = rb1 > 0.0 ? m.rate_bound(StateView(yv, 1), H) : 0.0;
        if (rb > 0.0) {
            double u = 0.0;
            for (;;) {
                u += rng.exponential(rb);
                if (u >= H) break;
                double zv[1];
                m.flow(StateView(xv, 1), s + u, zv);
                if (rng.uniform() * rb <= m.rate(StateView(zv, 1))) return s + u;
            }
        }
        s += H;
        m.flow(StateView(xv, 1), s, yv);
        y = yv[0];
    }
    return kInf;
}

struct ActiveA {
    double beta;
    double alpha;
    double x_birth;
    std::int64_t idx;
};
struct ActiveALater {
    bool operator()(const ActiveA& a, const ActiveA& b) const {
        if (a.beta != b.beta) return a.beta > b.beta;
        return a.idx > b.idx;
    }
};

SimResult simulate_exact(const ModelSpec& m, const std::vector<double>& init,
                         const SimConfig& cfg) {
    SimResult res;
    res.dim = 1;
    res.seed = cfg.seed;
    Rng rng(cfg.seed);
    std::vector<ActiveA> heap;
    ActiveALater later;
    std::vector<double> pbuf(m.max_arity + 1);
    std::vector<double> cbuf(m.max_arity);

    for (double t : cfg.snapshot_times) res.snapshots.push_back({t, {}, {}});

    auto flow_state = [&](const ActiveA& a, double t) {
        const double xv[1] = {a.x_birth};
        double out[1];
        m.flow(StateView(xv, 1), t - a.alpha, out);
        return out[0];
    };
    auto spawn = [&](double alpha, double x, std::int64_t parent, std::int32_t rank) {
        const double delay = division_delay_exact(m, x, cfg.horizon - alpha, rng);
        const std::int64_t idx = static_cast<std::int64_t>(res.created++);
        if (cfg.record_dead) {
            res.particles.push_back({parent, rank, alpha, kInf});
            res.birth_states.push_back(x);
            res.death_states.push_back(0.0);
        }
        heap.push_back({alpha + delay, alpha, x, idx});
        std::push_heap(heap.begin(), heap.end(), later);
        res.peak_alive = std::max(res.peak_alive, heap.size());
    };

    for (double x : init) spawn(0.0, x, -1, 0);

    std::size_t si = 0;
    for (;;) {
        const double next = heap.empty() ? kInf : heap.front().beta;
        while (si < res.snapshots.size() && res.snapshots[si].t <= next &&
               res.snapshots[si].t <= cfg.horizon) {
            auto& snap = res.snapshots[si];
            snap.states.reserve(heap.size());
            for (const auto& a : heap) {
                snap.states.push_back(flow_state(a, snap.t));
                if (cfg.record_dead) snap.labels.push_back(a.idx);
            }
            ++si;
        }
        if (heap.empty() || next > cfg.horizon) break;

        std::pop_heap(heap.begin(), heap.end(), later);
        const ActiveA a = heap.back();
        heap.pop_back();
        const double xd = flow_state(a, a.beta);
        if (cfg.record_dead) {
            res.particles[a.idx].beta = a.beta;
            res.death_states[a.idx] = xd;
        }
        const double xv[1] = {xd};
        const int k = draw_offspring(m, StateView(xv, 1), rng, pbuf);
        const double theta = rng.uniform();
        if (k > 0) {
            m.children(k, StateView(xv, 1), theta, std::span<double>(cbuf.data(), k));
            for (int j = 0; j < k; ++j) {
                if (heap.size() >= cfg.max_particles) {
                    res.truncated = true;
                    res.truncation_time = a.beta;
                    break;
                }
                spawn(a.beta, cbuf[j], a.idx, j + 1);
            }
        }
        if (res.truncated) break;
    }

    res.final_alive = heap.size();
    if (cfg.record_dead) {
        const double t_end = res.truncated ? res.truncation_time : cfg.horizon;
        for (const auto& a : heap) res.death_states[a.idx] = flow_state(a, t_end);
    }
    return res;
}

// ---------- diffusive engine (Euler-Maruyama + per-step hazard) ----------

// Conditional division time within a step with linearly interpolated rate.
double step_division_time(double r0, double r1, double h, double e) {
    const double A = (r1 - r0) / (2.0 * h);
    const double disc = r0 * r0 + 4.0 * A * e;
    const double denom = r0 + std::sqrt(std::max(disc, 0.0));
    if (denom <= 0.0) return h; // defensive; only reachable at zero rates
    return std::min(2.0 * e / denom, h);
}

struct ActiveB {
    std::int64_t idx;
    double alpha;
    std::vector<double> x;
};

SimResult simulate_diffusive(const ModelSpec& m, const std::vector<double>& init,
                             const SimConfig& cfg) {
    const int d = m.dim();
    SimResult res;
    res.dim = d;
    res.seed = cfg.seed;
    Rng rng(cfg.seed);
    std::vector<double> pbuf(m.max_arity + 1);
    std::vector<double> cbuf(static_cast<std::size_t>(m.max_arity) * d);
    std::vector<double> mu(d), x1(d);
    const bool half_line = m.space.kind == StateSpace::Kind::HalfLine;

    for (double t : cfg.snapshot_times) res.snapshots.push_back({t, {}, {}});

    std::vector<ActiveB> alive;
    auto spawn = [&](double alpha, const double* x) {
        ActiveB a;
        a.idx = static_cast<std::int64_t>(res.created++);
        a.alpha = alpha;
        a.x.assign(x, x + d);
        if (cfg.record_dead) {
            res.particles.push_back({-1, 0, alpha, kInf});
            res.birth_states.insert(res.birth_states.end(), x, x + d);
            res.death_states.insert(res.death_states.end(), d, 0.0);
        }
        return a;
    };

    for (std::size_t i = 0; i * d < init.size(); ++i)
        alive.push_back(spawn(0.0, init.data() + i * d));
    res.peak_alive = alive.size();

    // Slab boundaries: snapshot times and horizon, refined to steps <= dt.
    std::vector<double> marks;
    for (double t : cfg.snapshot_times)
        if (t > 0.0) marks.push_back(t);
    marks.push_back(cfg.horizon);
    std::sort(marks.begin(), marks.end());
    marks.erase(std::unique(marks.begin(), marks.end()), marks.end());

    std::size_t si = 0;
    auto record_snaps_at = [&](double t) {
        while (si < res.snapshots.size() && res.snapshots[si].t <= t + 1e-15) {
            auto& snap = res.snapshots[si];
            for (const auto& a : alive) {
                snap.states.insert(snap.states.end(), a.x.begin(), a.x.end());
                if (cfg.record_dead) snap.labels.push_back(a.idx);
            }
            ++si;
        }
    };
    record_snaps_at(0.0);

    double t0 = 0.0;
    std::vector<ActiveB> pending; // children finishing the current slab
    for (double mark : marks) {
        if (res.truncated) break;
        const int nsub = std::max(1, static_cast<int>(std::ceil((mark - t0) / cfg.dt - 1e-12)));
        const double h_slab = (mark - t0) / nsub;
        for (int sub = 0; sub < nsub && !res.truncated; ++sub) {
            const double sub_start = t0 + sub * h_slab;
            const double t1 = (sub + 1 == nsub) ? mark : sub_start + h_slab;
            std::size_t n_now = alive.size();
            for (std::size_t ia = 0; ia < n_now && !res.truncated; ++ia) {
                // Advance one particle (and recursively its in-slab offspring).
                std::vector<ActiveB*> todo_owned; // children created mid-step
                std::vector<ActiveB> stack;
                stack.push_back(std::move(alive[ia]));
                bool replaced = false;
                while (!stack.empty()) {
                    ActiveB cur = std::move(stack.back());
                    stack.pop_back();
                    double s = std::max(cur.alpha, sub_start);
                    bool dead = false;
                    while (s < t1 - 1e-15) {
                        const double h = t1 - s;
                        m.drift(cur.x, mu);
                        const double sig = m.diffusion ? m.diffusion(cur.x) : 0.0;
                        const double noise = sig > 0.0 ? std::sqrt(2.0 * sig * h) : 0.0;
                        for (int i = 0; i < d; ++i) {
                            x1[i] = cur.x[i] + mu[i] * h + (noise > 0.0 ? noise * rng.normal() : 0.0);
                            if (half_line && x1[i] < 0.0) x1[i] = 0.0;
                        }
                        const double r0 = m.rate(cur.x);
                        const double r1 = m.rate(x1);
                        const double hz = 0.5 * h * (r0 + r1);
                        const double e = rng.exponential(1.0);
                        if (e >= hz) {
                            cur.x.assign(x1.begin(), x1.end());
                            s = t1;
                            break;
                        }
                        // death inside the step
                        const double tau = step_division_time(r0, r1, h, e);
                        const double frac = tau / h;
                        for (int i = 0; i < d; ++i)
                            cur.x[i] = cur.x[i] + (x1[i] - cur.x[i]) * frac;
                        const double td = s + tau;
                        if (cfg.record_dead) {
                            res.particles[cur.idx].beta = td;
                            std::copy(cur.x.begin(), cur.x.end(),
                                      res.death_states.begin() + cur.idx * d);
                        }
                        const int k = draw_offspring(m, cur.x, rng, pbuf);
                        const double theta = rng.uniform();
                        if (k > 0) {
                            m.children(k, cur.x, theta,
                                       std::span<double>(cbuf.data(), static_cast<std::size_t>(k) * d));
                            const std::size_t live_now =
                                alive.size() + pending.size() + stack.size() - (replaced ? 0 : 1);
                            if (live_now + k > cfg.max_particles) {
                                res.truncated = true;
                                res.truncation_time = td;
                            } else {
                                for (int j = k - 1; j >= 0; --j) {
                                    ActiveB child = spawn(td, cbuf.data() + j * d);
                                    if (cfg.record_dead) {
                                        res.particles[child.idx].parent = cur.idx;
                                        res.particles[child.idx].rank = j + 1;
                                    }
                                    stack.push_back(std::move(child));
                                }
                                res.peak_alive = std::max(
                                    res.peak_alive, alive.size() + pending.size() + stack.size());
                            }
                        }
                        dead = true;
                        break;
                    }
                    if (res.truncated) break;
                    if (!dead) {
                        if (!replaced) {
                            alive[ia] = std::move(cur);
                            replaced = true;
                        } else {
                            pending.push_back(std::move(cur));
                        }
                    }
                }
                if (!replaced && !res.truncated) {
                    // particle died and all descendants died too; mark slot dead
                    alive[ia].idx = -1;
                }
            }
            if (res.truncated) break;
            // compact: drop dead slots, append slab-born survivors
            alive.erase(std::remove_if(alive.begin(), alive.end(),
                                       [](const ActiveB& a) { return a.idx < 0; }),
                        alive.end());
            alive.insert(alive.end(), std::make_move_iterator(pending.begin()),
                         std::make_move_iterator(pending.end()));
            pending.clear();
            record_snaps_at(t1);
            if (alive.empty()) break;
        }
        t0 = mark;
        if (alive.empty()) break;
    }

    res.final_alive = alive.size();
    if (cfg.record_dead)
        for (const auto& a : alive)
            std::copy(a.x.begin(), a.x.end(), res.death_states.begin() + a.idx * d);
    return res;
}

} // namespace

SimResult simulate_population(const ModelSpec& m, const std::vector<double>& init_states,
                              const SimConfig& cfg) {
    validate_config(cfg);
    const int d = m.dim();
    if (init_states.empty() || init_states.size() % d != 0)
        throw std::invalid_argument("simulate: initial states size must be a multiple of dim");
    for (std::size_t i = 0; i * d < init_states.size(); ++i)
        if (!m.space.contains(StateView(init_states.data() + i * d, d)))
            throw std::domain_error("simulate: initial state outside the state space");
    if (!m.has_diffusion && m.flow && d == 1) return simulate_exact(m, init_states, cfg);
    return simulate_diffusive(m, init_states, cfg);
}

SimResult simulate(const ModelSpec& m, StateView x0, const SimConfig& cfg) {
    return simulate_population(m, std::vector<double>(x0.begin(), x0.end()), cfg);
}

EmpiricalMeasure snapshot(const SimResult& res, double t) {
    for (const auto& s : res.snapshots) {
        if (std::abs(s.t - t) <= 1e-12 * std::max(1.0, std::abs(t))) {
            EmpiricalMeasure mu;
            mu.dim = res.dim;
            mu.states = s.states;
            mu.weights.assign(s.states.size() / res.dim, 1.0);
            return mu;
        }
    }
    throw std::invalid_argument("snapshot: time was not recorded (no interpolation)");
}

double integrate(const EmpiricalMeasure& mu, const std::function<double(StateView)>& f) {
    double acc = 0.0;
    for (std::size_t i = 0; i < mu.weights.size(); ++i)
        acc += mu.weights[i] * f(StateView(mu.states.data() + i * mu.dim, mu.dim));
    return acc;
}

std::vector<std::pair<std::vector<double>, double>> dead_set(const SimResult& res, double T) {
    if (res.particles.empty() && res.created > 0)
        throw std::logic_error("dead_set: requires full recording (record_dead)");
    std::vector<std::pair<std::vector<double>, double>> out;
    for (std::size_t i = 0; i < res.particles.size(); ++i) {
        const auto& p = res.particles[i];
        if (p.beta <= T && std::isfinite(p.beta)) {
            out.emplace_back(std::vector<double>(res.death_states.begin() + i * res.dim,
                                                 res.death_states.begin() + (i + 1) * res.dim),
                             p.beta);
        }
    }
    return out;
}

CoupledResult coupled_mitosis_simulate(double r0, double x0, double y0, const SimConfig& cfg) {
    validate_config(cfg);
    if (r0 <= 0.0) throw std::invalid_argument("coupled_mitosis_simulate: r0 must be > 0");
    if (x0 < 0.0 || y0 < 0.0)
        throw std::domain_error("coupled_mitosis_simulate: sizes must be >= 0");
    CoupledResult res;
    res.seed = cfg.seed;
    Rng rng(cfg.seed);

    struct Node {
        double beta, alpha, xb, yb;
        std::int64_t idx;
    };
    auto later = [](const Node& a, const Node& b) {
        if (a.beta != b.beta) return a.beta > b.beta;
        return a.idx > b.idx;
    };
    std::vector<Node> heap;
    auto spawn = [&](double alpha, double xb, double yb) {
        heap.push_back({alpha + rng.exponential(r0), alpha, xb, yb,
                        static_cast<std::int64_t>(res.created++)});
        std::push_heap(heap.begin(), heap.end(), later);
    };
    spawn(0.0, x0, y0);

    for (double t : cfg.snapshot_times) res.snapshots.push_back({t, {}, {}, 0.0});
    std::size_t si = 0;
    for (;;) {
        const double next = heap.empty() ? kInf : heap.front().beta;
        while (si < res.snapshots.size() && res.snapshots[si].t <= next) {
            auto& s = res.snapshots[si];
            double disp = 0.0;
            for (const auto& n : heap) {
                const double el = s.t - n.alpha;
                s.x_states.push_back(n.xb + el);
                s.y_states.push_back(n.yb + el);
                disp += std::abs(n.xb - n.yb);
            }
            s.displacement_sum = disp;
            ++si;
        }
        if (heap.empty() || next > cfg.horizon) break;
        std::pop_heap(heap.begin(), heap.end(), later);
        const Node n = heap.back();
        heap.pop_back();
        if (heap.size() + 2 > cfg.max_particles) {
            res.truncated = true;
            break;
        }
        const double el = n.beta - n.alpha;
        const double xd = n.xb + el, yd = n.yb + el;
        spawn(n.beta, 0.5 * xd, 0.5 * yd);
        spawn(n.beta, 0.5 * xd, 0.5 * yd);
    }
    return res;
}

} // namespace branchsim
