#pragma once
// Branching Markov process description: motion generator Gf = b.grad f +
// sigma * lap f, state-dependent division rate r(x), offspring counts
// K ~ p_k(x), and children placed at F_j^(k)(x, theta) with one shared
// uniform theta per division event.

#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace branchsim {

using StateView = std::span<const double>;
using StateOut = std::span<double>;

struct StateSpace {
    enum class Kind { HalfLine, FullSpace };
    Kind kind = Kind::HalfLine;
    int dim = 1;
    bool contains(StateView x) const {
        if (static_cast<int>(x.size()) != dim) return false;
        if (kind == Kind::HalfLine)
            for (double v : x)
                if (v < 0.0) return false;
        return true;
    }
};

// How the child maps depend on the shared uniform theta. Exactness of the
// theta integral in the generator depends on this:
//   Independent    : maps ignore theta, single evaluation.
//   PiecewiseConst : maps constant between breakpoints (finite dislocation
//                    measures), integrated exactly piece by piece.
//   Continuous     : smooth dependence, Gauss-Legendre quadrature.
enum class ThetaKind { Independent, PiecewiseConst, Continuous };

// Symmetric division-fraction law on [0,1] given through its inverse CDF.
// density/cdf are optional; they are required only by the PDE kernel.
struct SplitLaw {
    std::string name;
    std::function<double(double)> icdf;
    std::function<double(double)> density; // may be null (atoms)
    std::function<double(double)> cdf;     // may be null
    bool is_atom = false;                  // point mass at 1/2
};

SplitLaw split_deterministic_half();
SplitLaw split_uniform();
SplitLaw split_beta22();

struct ModelSpec {
    std::string name;
    StateSpace space;

    // Motion. drift fills b(x); diffusion returns sigma(x) >= 0 (the
    // generator's Laplacian coefficient, so the SDE noise is sqrt(2 sigma)).
    std::function<void(StateView, StateOut)> drift;
    std::function<double(StateView)> diffusion; // null => sigma == 0
    bool has_diffusion = false;

    // Branching.
    std::function<double(StateView)> rate;
    // Upper bound for the rate over a window of length h along the
    // deterministic flow started at x. Used by exact thinning.
    std::function<double(StateView, double)> rate_bound;
    int max_arity = 2;
    std::function<void(StateView, StateOut)> offspring_pmf; // fills p_0..p_max_arity
    // Fill k child states (k*dim doubles, child-major) for shared theta.
    std::function<void(int, StateView, double, StateOut)> children;
    ThetaKind theta_kind = ThetaKind::Independent;
    std::function<std::vector<double>(int)> theta_breaks; // PiecewiseConst: interior breakpoints
    // A state z with V(z) >= sup_{j,theta} V(F_j^(k)(x,theta)) for every V
    // that is nondecreasing in |coordinates| (all shipped eigenfunctions are).
    std::function<void(int, StateView, StateOut)> max_child_state;

    bool size_structured = false; // 1-D, children sizes sum to <= parent
    bool local_branching = false; // children at the parent state
    SplitLaw split;               // division-fraction law when size_structured
    bool has_split = false;

    // Exact deterministic flow y = phi_s(x) when sigma == 0; null => Euler only.
    std::function<void(StateView, double, StateOut)> flow;
    // s such that int_0^s r(phi_u(x)) du = e (or +inf); null => thinning.
    std::function<double(StateView, double)> hazard_inverse;

    int dim() const { return space.dim; }
    double pmf(StateView x, int k) const;
    double mean_offspring(StateView x) const;
};

// Test function with optional analytic derivatives; finite differences
// (central, relative step 1e-5) fill in when absent.
struct TestFunction {
    std::function<double(StateView)> value;
    std::function<void(StateView, StateOut)> gradient; // may be null
    std::function<double(StateView)> laplacian;        // may be null
};

TestFunction fn_scalar(std::function<double(double)> f);
TestFunction fn_nd(std::function<double(StateView)> f);

struct EigenPair {
    TestFunction V; // positive on the state space
    double lambda0 = 0.0;
    std::string label;
};

// ---- rate kinds for the size-structured builders ----
struct ConstantRate { double r0; };
struct AffineRate { double a, b; };          // r(x) = a x + b
struct PlateauRate { double a, b, xstar; };  // r(x) = min(a x + b, a xstar + b)
struct PowerRate { double a, p; };           // r(x) = a x^p
using RateKind = std::variant<ConstantRate, AffineRate, PlateauRate, PowerRate>;

double rate_eval(const RateKind& rk, double x);

// ---- built-in models ----
ModelSpec make_equal_mitosis(const RateKind& rk);
ModelSpec make_asymmetric_mitosis(const RateKind& rk, SplitLaw split);
// dX = a X dt + sqrt(2 b X) dW, binary division into (H x, (1-H) x).
ModelSpec make_parasite(double a, double b, const RateKind& rk, SplitLaw h_law);
// dX = -g X dt + sigma dW per coordinate, r(x) = b|x|^2 + a, two children in place.
ModelSpec make_branching_ou(int dim, double sigma, double g, double a, double b);

struct FragPartition {
    std::vector<double> fractions; // positive, nonincreasing, sum <= 1
    double weight;                 // nu-mass of this partition
};
// G = 0, division rate x^alpha * nu(S), children at s_i * x.
ModelSpec make_fragmentation(double alpha, std::vector<FragPartition> partitions);

// ---- eigenpairs ----
// Equal/asymmetric mitosis with r(x) = a x + b: V(x) = c x + 1 with
// c = (sqrt(b^2+4a)-b)/2 and lambda0 = (sqrt(b^2+4a)+b)/2. a=0 degenerates
// to V == 1, lambda0 = b.
EigenPair eigenpair_affine_mitosis(double a, double b);
EigenPair eigenpair_parasite_linear(double a);                    // V = x, lambda = a
EigenPair eigenpair_parasite_affine(double a, double c, double d); // needs d > a
EigenPair eigenpair_branching_ou(int dim, double sigma, double g, double a, double b);
// alpha = 0 only: V = x^p, lambda = nu(S) (sum_i s_i^p - 1).
EigenPair eigenpair_fragmentation(double p, const std::vector<FragPartition>& partitions);

// ---- generator-side operators ----
// sum_k p_k(x) int_0^1 sum_{j<=k} f(F_j^(k)(x,theta)) dtheta
double branch_expectation(const ModelSpec& m, StateView x,
                          const std::function<double(StateView)>& f, int quad_order = 64);
// Mean-semigroup generator applied to f at x.
double apply_mean_generator(const ModelSpec& m, const TestFunction& f, StateView x,
                            int quad_order = 64);
// sup over grid of |(G V)(x) - lambda0 V(x)| / max(1, |V(x)|).
double eigen_residual(const ModelSpec& m, const EigenPair& e,
                      const std::vector<std::vector<double>>& grid, int quad_order = 64);
// J2(f,g)(x) = sum_k p_k int sum_{a != b <= k} f(F_a) g(F_b) dtheta.
double fork_operator_J2(const ModelSpec& m, const std::function<double(StateView)>& f,
                        const std::function<double(StateView)>& g, StateView x,
                        int quad_order = 64);
// sum_k p_k(x) int_0^1 h(k, children) dtheta over families with k >= 1;
// h receives the k child states flattened child-major.
double branch_family_integral(const ModelSpec& m, StateView x,
                              const std::function<double(int, StateView)>& h,
                              int quad_order = 64);

// Gradient/Laplacian with analytic evaluators when present, else central
// finite differences at relative step 1e-5.
void fn_gradient(const TestFunction& f, StateView x, StateOut out);
double fn_laplacian(const TestFunction& f, StateView x);

} // namespace branchsim
