#pragma once
// Closed-form evaluators and Monte Carlo verifiers: every quantitative
// identity the library claims is checked here as an lhs/rhs CheckReport.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "branchsim/model.hpp"
#include "branchsim/pde.hpp"
#include "branchsim/simulate.hpp"
#include "branchsim/spine.hpp"
#include "branchsim/stats.hpp"

namespace branchsim {

// ---- constant-rate equal mitosis (drift 1) closed forms ----

// m-th population moment u_m(t) = E[sum_u X_u(t)^m] from the triangular
// recursion u_m' = m u_{m-1} + r (2^{1-m} - 1) u_m, solved exactly as a sum
// of exponentials.
double closed_moment_tcp(int m, double r, double x0, double t);

struct MomentTable {
    double r = 1.0, x0 = 0.0;
    std::vector<int> orders;
    std::vector<double> times;
    std::vector<std::vector<double>> values; // values[time][order index]
};
MomentTable moment_table_tcp(std::span<const int> orders, double r, double x0,
                             std::span<const double> times);

// Invariant size density of the auxiliary process: the alternating
// exponential series and its term-by-term antiderivative.
double tcp_invariant_density(double x, double r, double tol = 1e-14);
double tcp_invariant_cdf(double x, double r, double tol = 1e-14);
// E[Y_t] for the constant-rate auxiliary size: 1/r + (x0 - 1/r) e^{-rt}.
double tcp_aux_mean(double r, double x0, double t);

struct YuleFunctionals {
    double mean_n;     // e^{rt}
    double mean_inv_n; // r t e^{-rt} / (1 - e^{-rt})
    double var_n;      // e^{rt}(e^{rt} - 1)
};
YuleFunctionals yule_functionals(double r, double t);

// ---- branching Ornstein-Uhlenbeck closed forms ----
struct OuClosedForms {
    int dim = 1;
    double sigma = 1.0, g = 1.0, a = 0.0, b = 0.0;
    double alpha = 0.0;  // sqrt(g^2 - 2 b sigma^2)
    double Gamma = 0.0;  // (g - alpha) / (2 sigma^2)
    double lambda = 0.0; // dim (g - alpha)/2 + a

    double mean_n(StateView x0, double t) const;
    double limit_variance() const; // per coordinate: sigma^2 / (g + alpha)
    double limit_pdf(double y) const;
    double limit_cdf(double y) const;
};
OuClosedForms ou_closed_forms(int dim, double sigma, double g, double a, double b);

// ---- Monte Carlo verifiers ----

struct CheckBudget {
    std::size_t replicas = 10000;      // tree replicas
    std::size_t aux_replicas = 10000;  // auxiliary paths
    std::size_t inner_replicas = 200;  // nested paths per fork node
    int time_nodes = 33;               // composite Simpson nodes (odd)
    double dt = 1e-3;                  // diffusive step
    std::uint64_t max_particles = 1ull << 22;
    double fork_pop_cap = 1e4;         // refusal cap on expected population
    std::size_t pi_samples = 20000;    // long-run sample size
    double burn_in = 12.0;
    double thin = 1.0;
    int jobs = 1;
};

// V-weighted population average of f at time t against the auxiliary mean.
CheckReport weighted_mto_check(const ModelSpec& m, const EigenPair& eig,
                               const std::function<double(StateView)>& f,
                               const std::string& fname, StateView x0, double t,
                               const CheckBudget& budget, std::uint64_t seed);

// Sum of f over every death before T against the auxiliary time integral.
CheckReport whole_tree_check(const ModelSpec& m, const EigenPair& eig,
                             const std::function<double(StateView, double)>& f,
                             const std::string& fname, StateView x0, double T,
                             const CheckBudget& budget, std::uint64_t seed);

// V-weighted sum over ordered distinct alive pairs against the branch-time
// integral with nested inner estimates of the auxiliary semigroup.
CheckReport fork_check(const ModelSpec& m, const EigenPair& eig,
                       const std::function<double(StateView)>& f,
                       const std::function<double(StateView)>& g, const std::string& fgname,
                       StateView x0, double t, const CheckBudget& budget, std::uint64_t seed);

// Flatness of t -> E[Z_t(V) e^{-lambda0 t}] across the given times; the
// terminal sample quantiles of W are recorded in params.
CheckReport martingale_check(const ModelSpec& m, const EigenPair& eig, StateView x0,
                             std::span<const double> times, const CheckBudget& budget,
                             std::uint64_t seed);

// Population average of g at a large time against the auxiliary long-run
// ratio (or a supplied closed limit value).
CheckReport longtime_limit_check(const ModelSpec& m, const EigenPair& eig,
                                 const std::function<double(StateView)>& g,
                                 const std::string& gname, StateView x0, double t_large,
                                 const CheckBudget& budget, std::uint64_t seed,
                                 double bias_allowance = 0.01,
                                 std::optional<double> closed_rhs = std::nullopt);

// n * Var of the averaged population integral of f against the bracket
// integral computed from the forward PDE trajectory and the dual semigroup.
CheckReport variance_bracket_check(const ModelSpec& m, const TestFunction& f,
                                   const std::string& fname, double x0, std::size_t n_scale,
                                   double t, std::size_t replicas, const Grid& grid,
                                   int time_nodes, std::uint64_t seed, int jobs = 1);

// Coupled equal-mitosis pair: pathwise displacement identity (max abs error
// over replicas and snapshot times) and the one-sided W1 contraction bound.
double coupling_identity_error(double r0, double x, double y, std::span<const double> times,
                               std::size_t replicas, std::uint64_t seed);
CheckReport coupling_w1_check(double r0, double x, double y, double t, std::size_t replicas,
                              std::uint64_t seed, int jobs = 1);

// Yule count law at (r, t): mean, variance, mean inverse.
std::vector<CheckReport> yule_check(double r, double t, std::size_t replicas, std::uint64_t seed,
                                    int jobs = 1);

// Population moments Z_t(x^m) for constant-rate equal mitosis vs closed forms.
std::vector<CheckReport> moment_check(double r, double x0, double t, std::span<const int> orders,
                                      std::size_t replicas, std::uint64_t seed, int jobs = 1);

// KS of the auxiliary long-run sample against the invariant-density CDF.
CheckReport tcp_density_ks_check(double r, std::size_t samples, double burn_in, double thin,
                                 std::uint64_t seed, double ks_bound = 0.02);

// Macroscopic comparison at time t: n iid uniform(0,1) roots, population
// integrals of {1, x, e^-x} per unit mass vs the PDE solution.
std::vector<CheckReport> macro_lln_check(const ModelSpec& m, double t, std::size_t n_particles,
                                         std::size_t replicas, const Grid& grid,
                                         std::uint64_t seed, int jobs = 1,
                                         double rel_tol = 0.02);

// L1 distance of the normalized long-time PDE profile to the invariant
// density (constant-rate equal mitosis).
CheckReport pde_longtime_profile_check(double r, double t, const Grid& grid, double l1_bound);

// Branching OU: E[N_t] vs closed form, and pooled population KS at t_large.
CheckReport ou_mean_n_check(double sigma, double g, double a, double b, double x0, double t,
                            const CheckBudget& budget, std::uint64_t seed);
CheckReport ou_limit_law_check(double sigma, double g, double a, double b, double x0,
                               double t_large, const CheckBudget& budget, std::uint64_t seed,
                               double ks_bound = 0.05);

// Empirical mean population vs the crude growth bound N0 e^{(kbar-1) rbar T}
// for a bounded rate; one-sided with 3 sigma slack.
CheckReport growth_bound_check(const ModelSpec& m, double rate_sup, StateView x0, double T,
                               const CheckBudget& budget, std::uint64_t seed);

} // namespace branchsim
