#include "branchsim/pde.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "branchsim/quadrature.hpp"

namespace branchsim {

namespace {

void check_grid(const Grid& g) {
    if (g.n_cells < 16) throw std::invalid_argument("Grid: n_cells must be >= 16");
    if (g.x_max <= 0.0) throw std::invalid_argument("Grid: x_max must be > 0");
}

// Cloud-in-cell deposit onto cell centers: a point mass at pos is shared
// linearly between the two neighbouring centers, which keeps the first
// moment of the deposit exact away from the boundary cells.
void cic_deposit(std::vector<double>& row, const Grid& g, double pos, double w) {
    const double u = pos / g.dx() - 0.5;
    if (u <= 0.0) {
        row[0] += w;
        return;
    }
    const int n = static_cast<int>(row.size());
    if (u >= n - 1) {
        row[n - 1] += w;
        return;
    }
    const int i = static_cast<int>(u);
    const double fr = u - i;
    row[i] += w * (1.0 - fr);
    row[i + 1] += w * fr;
}

// Cumulative table of int_0^u q g(q) dq on a dense uniform grid, from the
// split density, for exact-enough partial first moments of the child law.
class SplitMoment {
  public:
    explicit SplitMoment(const SplitLaw& s) : table_(kN + 1, 0.0) {
        const double h = 1.0 / kN;
        double acc = 0.0;
        auto f = [&](double q) { return q * s.density(q); };
        for (int i = 0; i < kN; ++i) {
            const double a = i * h;
            // Simpson on each sub-interval
            acc += h / 6.0 * (f(a) + 4.0 * f(a + 0.5 * h) + f(a + h));
            table_[i + 1] = acc;
        }
    }
    double operator()(double u) const {
        if (u <= 0.0) return 0.0;
        if (u >= 1.0) return table_[kN];
        const double p = u * kN;
        const int i = static_cast<int>(p);
        const double fr = p - i;
        return table_[i] * (1.0 - fr) + table_[i + 1] * fr;
    }

  private:
    static constexpr int kN = 8192;
    std::vector<double> table_;
};

} // namespace

double grid_mass(const Grid& g, const GridDensity& n) {
    double acc = 0.0;
    for (double v : n.cells) acc += v;
    return acc * g.dx();
}

double grid_moment(const Grid& g, const GridDensity& n, const std::function<double(double)>& f) {
    double acc = 0.0;
    for (int i = 0; i < g.n_cells; ++i) acc += f(g.center(i)) * n.cells[i];
    return acc * g.dx();
}

GridDensity pde_init(const Grid& g, const std::function<double(double)>& density,
                     double total_mass) {
    check_grid(g);
    GridDensity n;
    n.cells.resize(g.n_cells);
    for (int i = 0; i < g.n_cells; ++i) {
        const double v = density(g.center(i));
        if (v < 0.0) throw std::invalid_argument("pde_init: negative density");
        n.cells[i] = v;
    }
    const double mass = grid_mass(g, n);
    if (mass <= 0.0) throw std::invalid_argument("pde_init: zero mass on the grid");
    for (double& v : n.cells) v *= total_mass / mass;
    return n;
}

GridDensity pde_init_point(const Grid& g, double x0, double mass) {
    check_grid(g);
    if (x0 < 0.0 || x0 > g.x_max) throw std::invalid_argument("pde_init_point: x0 outside grid");
    GridDensity n;
    n.cells.assign(g.n_cells, 0.0);
    cic_deposit(n.cells, g, x0, mass / g.dx());
    return n;
}

PdeOperator::PdeOperator(const ModelSpec& m, const Grid& g) : grid_(g) {
    check_grid(g);
    if (m.dim() != 1 || !m.size_structured || m.has_diffusion)
        throw std::invalid_argument(
            "PdeOperator: only 1-D size-structured drift models are supported");
    const int n = g.n_cells;
    rate_.resize(n);
    drift_center_.resize(n);
    drift_edge_.resize(n + 1);
    for (int i = 0; i < n; ++i) {
        const double xc[1] = {g.center(i)};
        rate_[i] = m.rate(StateView(xc, 1));
        double b[1];
        m.drift(StateView(xc, 1), b);
        drift_center_[i] = b[0];
    }
    for (int i = 0; i <= n; ++i) {
        const double xe[1] = {g.edge(i)};
        double b[1];
        m.drift(StateView(xe, 1), b);
        drift_edge_[i] = b[0];
    }

    deposit_.resize(n);
    child_eval_.resize(n);
    const bool atom_split = m.has_split && m.split.is_atom;
    if (atom_split) {
        // Equal mitosis: donor cell j sends both children to cell j/2 exactly;
        // donor pairs (2i, 2i+1) average to the center of cell i, so the first
        // moment of the source is right to second order for smooth densities.
        if (n % 2 != 0)
            throw std::invalid_argument("PdeOperator: equal mitosis needs an even n_cells");
        for (int j = 0; j < n; ++j) deposit_[j] = {{j / 2, 2.0}};
        for (int i = 0; i < n; ++i) child_eval_[i] = {{0.5 * g.center(i), 2.0}};
    } else if (m.has_split) {
        if (!m.split.cdf || !m.split.density)
            throw std::invalid_argument("PdeOperator: continuous split needs cdf and density");
        const SplitMoment mom(m.split);
        const auto& F = m.split.cdf;
        std::vector<double> row(n);
        for (int j = 0; j < n; ++j) {
            const double y = g.center(j);
            std::fill(row.begin(), row.end(), 0.0);
            // children live in [0, y]; per target cell, mass and mean position
            // from the split cdf and its partial first moment, then CIC
            const int top = std::min(n - 1, static_cast<int>(y / g.dx()));
            for (int i = 0; i <= top; ++i) {
                const double ulo = std::min(1.0, g.edge(i) / y);
                const double uhi = std::min(1.0, g.edge(i + 1) / y);
                const double mass = 2.0 * (F(uhi) - F(ulo));
                if (mass <= 1e-300) continue;
                const double pmom = 2.0 * y * (mom(uhi) - mom(ulo));
                cic_deposit(row, g, pmom / mass, mass);
            }
            for (int i = 0; i < n; ++i)
                if (row[i] != 0.0) deposit_[j].emplace_back(i, row[i]);
            // dual stencil: 2 int_0^1 g(q) f(q y) dq by Gauss-Legendre
            const QuadRule& qr = gauss_legendre01(64);
            for (std::size_t q = 0; q < qr.nodes.size(); ++q)
                child_eval_[j].emplace_back(qr.nodes[q] * y,
                                            2.0 * m.split.density(qr.nodes[q]) * qr.weights[q]);
        }
    } else {
        // generic finite theta structure (fragmentation): enumerate the pieces
        if (m.theta_kind == ThetaKind::Continuous)
            throw std::invalid_argument(
                "PdeOperator: continuous division law without a split cdf is not representable");
        std::vector<double> p(m.max_arity + 1);
        std::vector<double> cbuf(m.max_arity);
        std::vector<double> row(n);
        for (int j = 0; j < n; ++j) {
            const double y[1] = {g.center(j)};
            m.offspring_pmf(StateView(y, 1), p);
            std::fill(row.begin(), row.end(), 0.0);
            for (int k = 1; k <= m.max_arity; ++k) {
                if (p[k] <= 0.0) continue;
                std::vector<double> br =
                    (m.theta_kind == ThetaKind::PiecewiseConst && m.theta_breaks)
                        ? m.theta_breaks(k)
                        : std::vector<double>{};
                br.push_back(1.0);
                double lo = 0.0;
                for (double hi : br) {
                    if (hi <= lo) continue;
                    const double w = p[k] * (hi - lo);
                    m.children(k, StateView(y, 1), 0.5 * (lo + hi),
                               std::span<double>(cbuf.data(), k));
                    for (int c = 0; c < k; ++c) {
                        cic_deposit(row, grid_, cbuf[c], w);
                        child_eval_[j].emplace_back(cbuf[c], w);
                    }
                    lo = hi;
                }
            }
            for (int i = 0; i < n; ++i)
                if (row[i] != 0.0) deposit_[j].emplace_back(i, row[i]);
        }
    }
}

double PdeOperator::cfl_dt() const {
    double bmax = 1e-300, rmax = 0.0;
    for (double b : drift_edge_) bmax = std::max(bmax, std::abs(b));
    for (double r : rate_) rmax = std::max(rmax, r);
    // transport CFL plus an explicit-Euler positivity bound on the sink
    const double dt_adv = grid_.dx() / bmax;
    const double dt_sink = rmax > 0.0 ? 1.0 / rmax : dt_adv;
    return 0.9 * std::min(dt_adv, dt_sink);
}

double PdeOperator::dual_dt() const {
    double worst = 1e-300;
    for (int i = 0; i < grid_.n_cells; ++i) {
        double wsum = 0.0;
        for (const auto& [pos, w] : child_eval_[i]) wsum += std::abs(w);
        worst = std::max(worst,
                         std::abs(drift_center_[i]) / grid_.dx() + rate_[i] * (wsum + 1.0));
    }
    return 0.9 / worst;
}

void PdeOperator::step(GridDensity& n, double dt) const {
    const int nc = grid_.n_cells;
    const double dx = grid_.dx();
    if (dt > cfl_dt() * (1.0 + 1e-9)) {
        throw std::invalid_argument("pde_step: dt " + std::to_string(dt) +
                                    " violates stability; use dt <= " + std::to_string(cfl_dt()));
    }
    std::vector<double> flux(nc + 1, 0.0); // flux[i] crosses edge i
    for (int i = 1; i < nc; ++i) {
        const double b = drift_edge_[i];
        flux[i] = b >= 0.0 ? b * n.cells[i - 1] : b * n.cells[i];
    }
    // no inflow at 0; pure outflow at x_max
    flux[0] = std::min(drift_edge_[0], 0.0) * n.cells[0];
    flux[nc] = std::max(drift_edge_[nc], 0.0) * n.cells[nc - 1];

    std::vector<double> src(nc, 0.0);
    for (int j = 0; j < nc; ++j) {
        const double emit = rate_[j] * n.cells[j];
        if (emit == 0.0) continue;
        for (const auto& [i, w] : deposit_[j]) src[i] += w * emit;
    }
    for (int i = 0; i < nc; ++i) {
        double v = n.cells[i] - dt / dx * (flux[i + 1] - flux[i]) - dt * rate_[i] * n.cells[i] +
                   dt * src[i];
        if (v < 0.0) {
            n.clipped_mass += -v * dx;
            v = 0.0;
        }
        n.cells[i] = v;
    }
    n.t += dt;
}

double PdeOperator::interp(const std::vector<double>& f, double x) const {
    const int n = grid_.n_cells;
    const double u = x / grid_.dx() - 0.5;
    if (u <= 0.0) return f[0] + (f[1] - f[0]) * u; // extrapolate toward 0
    if (u >= n - 1) return f[n - 1] + (f[n - 1] - f[n - 2]) * (u - (n - 1));
    const int i = static_cast<int>(u);
    const double fr = u - i;
    return f[i] * (1.0 - fr) + f[i + 1] * fr;
}

std::vector<double> PdeOperator::apply_dual(const std::vector<double>& f) const {
    const int n = grid_.n_cells;
    const double dx = grid_.dx();
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) {
        // upwind on the dual side: information flows from larger x under b > 0
        const double slope = (i + 1 < n) ? (f[i + 1] - f[i]) / dx : (f[i] - f[i - 1]) / dx;
        double children = 0.0;
        for (const auto& [pos, w] : child_eval_[i]) children += w * interp(f, pos);
        out[i] = drift_center_[i] * slope + rate_[i] * (children - f[i]);
    }
    return out;
}

void PdeOperator::dual_step(std::vector<double>& f, double dt) const {
    const std::vector<double> gf = apply_dual(f);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] += dt * gf[i];
}

void pde_step(const ModelSpec& m, const Grid& g, GridDensity& n, double dt) {
    PdeOperator(m, g).step(n, dt);
}

PdeTrajectory pde_solve(const ModelSpec& m, const Grid& g, GridDensity init,
                        std::span<const double> times, double dt) {
    PdeOperator op(m, g);
    // auto step: stability allows cfl_dt, but the explicit Euler time bias is
    // first order, so default far enough below it to keep that bias well under
    // the tolerances quoted by the grid checks
    if (dt <= 0.0) dt = op.cfl_dt() / 8.0;
    dt = std::min(dt, op.cfl_dt());
    PdeTrajectory traj;
    traj.grid = g;
    GridDensity cur = std::move(init);
    double prev = cur.t;
    for (double target : times) {
        if (target < prev - 1e-12)
            throw std::invalid_argument("pde_solve: times must be sorted and >= init time");
        if (target > prev) {
            const int steps = std::max(1, static_cast<int>(std::ceil((target - prev) / dt - 1e-9)));
            const double h = (target - prev) / steps;
            for (int s = 0; s < steps; ++s) op.step(cur, h);
            cur.t = target; // kill step-count rounding drift
        }
        traj.snapshots.push_back(cur);
        prev = target;
    }
    return traj;
}

DualTrajectory dual_solve(const ModelSpec& m, const Grid& g,
                          const std::function<double(double)>& f, std::span<const double> times,
                          double dt) {
    PdeOperator op(m, g);
    if (dt <= 0.0) dt = op.dual_dt() / 8.0; // see pde_solve on the auto step
    dt = std::min(dt, op.dual_dt());
    DualTrajectory traj;
    traj.grid = g;
    std::vector<double> cur(g.n_cells);
    for (int i = 0; i < g.n_cells; ++i) cur[i] = f(g.center(i));
    double prev = 0.0;
    for (double target : times) {
        if (target < prev - 1e-12)
            throw std::invalid_argument("dual_solve: times must be sorted and nonnegative");
        if (target > prev) {
            const int steps = std::max(1, static_cast<int>(std::ceil((target - prev) / dt - 1e-9)));
            const double h = (target - prev) / steps;
            for (int s = 0; s < steps; ++s) op.dual_step(cur, h);
        }
        traj.times.push_back(target);
        traj.values.push_back(cur);
        prev = target;
    }
    return traj;
}

NumericEigen pde_power_iteration(const ModelSpec& m, const Grid& g, double tol, int max_iters) {
    PdeOperator op(m, g);
    const int n = g.n_cells;
    const double tau = op.dual_dt();
    std::vector<double> v(n, 1.0);
    double lambda = 0.0, lambda_prev = 1e300;
    int it = 0;
    std::string trace;
    for (; it < max_iters; ++it) {
        std::vector<double> gv = op.apply_dual(v);
        // Rayleigh quotient on the discrete operator
        double num = 0.0, den = 0.0;
        for (int i = 0; i < n; ++i) {
            num += v[i] * gv[i];
            den += v[i] * v[i];
        }
        lambda = num / den;
        double mx = 0.0;
        for (int i = 0; i < n; ++i) {
            v[i] += tau * gv[i];
            mx = std::max(mx, std::abs(v[i]));
        }
        for (int i = 0; i < n; ++i) v[i] /= mx;
        if (std::abs(lambda - lambda_prev) < tol * std::max(1.0, std::abs(lambda))) break;
        lambda_prev = lambda;
        if (it % 1000 == 0) trace = "last lambda " + std::to_string(lambda);
    }
    if (it >= max_iters)
        throw std::runtime_error("pde_power_iteration: no convergence in " +
                                 std::to_string(max_iters) + " iterations; " + trace);
    NumericEigen ne;
    ne.grid = g;
    ne.iterations = it + 1;
    ne.lambda0 = lambda;
    const double anchor = v[0];
    if (!(anchor > 0.0)) throw std::runtime_error("pde_power_iteration: eigenvector not positive");
    ne.V.resize(n);
    for (int i = 0; i < n; ++i) {
        if (v[i] <= 0.0) throw std::runtime_error("pde_power_iteration: eigenvector not positive");
        ne.V[i] = v[i] / anchor;
    }
    const std::vector<double> gv = op.apply_dual(ne.V);
    double res = 0.0;
    for (int i = 0; i < n - 2; ++i) // boundary cells use extrapolated slopes
        res = std::max(res, std::abs(gv[i] - lambda * ne.V[i]) / std::max(1.0, ne.V[i]));
    ne.residual = res;
    return ne;
}

EigenPair eigenpair_from_numeric(const NumericEigen& ne) {
    EigenPair e;
    e.lambda0 = ne.lambda0;
    e.label = "numeric";
    const Grid g = ne.grid;
    const std::vector<double> tab = ne.V;
    e.V = fn_scalar([g, tab](double x) {
        const int n = g.n_cells;
        const double u = x / g.dx() - 0.5;
        if (u <= 0.0) return tab[0] + (tab[1] - tab[0]) * u;
        if (u >= n - 1) return tab[n - 1] + (tab[n - 1] - tab[n - 2]) * (u - (n - 1));
        const int i = static_cast<int>(u);
        const double fr = u - i;
        return tab[i] * (1.0 - fr) + tab[i + 1] * fr;
    });
    return e;
}

double frag_kernel(const ModelSpec& m, double x, double y) {
    if (!m.has_split || !m.split.density)
        throw std::invalid_argument("frag_kernel: model has no continuous split density");
    if (y <= 0.0 || x < 0.0 || x > y) return 0.0;
    const double yv[1] = {y};
    return 2.0 / y * m.rate(StateView(yv, 1)) * m.split.density(x / y);
}

} // namespace branchsim
