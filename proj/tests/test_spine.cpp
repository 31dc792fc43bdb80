#include <doctest.h>

#include <cmath>
#include <vector>

#include "branchsim/estimators.hpp"
#include "branchsim/model.hpp"
#include "branchsim/rng.hpp"
#include "branchsim/spine.hpp"
#include "branchsim/stats.hpp"

using namespace branchsim;

TEST_CASE("auxiliary jump rate: closed values") {
    // equal mitosis, V == 1: rate * mean offspring
    ModelSpec mc = make_equal_mitosis(ConstantRate{1.7});
    EigenPair ec = eigenpair_affine_mitosis(0.0, 1.7);
    const double x = 2.3;
    CHECK(aux_jump_rate(mc, ec, StateView(&x, 1)) == doctest::Approx(2.0 * 1.7).epsilon(1e-12));

    // affine rate, V = c x + 1: r(x) (2 V(x/2)) / V(x) = r(x) (c x + 2)/(c x + 1)
    ModelSpec ma = make_equal_mitosis(AffineRate{4.0, 0.0});
    EigenPair ea = eigenpair_affine_mitosis(4.0, 0.0);
    const double want = 4.0 * x * (2.0 * x + 2.0) / (2.0 * x + 1.0);
    CHECK(aux_jump_rate(ma, ea, StateView(&x, 1)) == doctest::Approx(want).epsilon(1e-10));

    // branching OU divides in place, so V cancels: rate * 2
    ModelSpec mo = make_branching_ou(1, 1.0, 1.0, 0.0, 0.25);
    EigenPair eo = eigenpair_branching_ou(1, 1.0, 1.0, 0.0, 0.25);
    const double y = 0.8;
    CHECK(aux_jump_rate(mo, eo, StateView(&y, 1)) ==
          doctest::Approx(2.0 * (0.25 * y * y)).epsilon(1e-10));
}

TEST_CASE("auxiliary drift carries the logarithmic gradient correction") {
    // OU: -g x + 2 (sigma^2/2) (V'/V) = -(g - 2 sigma^2 Gamma) x = -alpha x
    ModelSpec mo = make_branching_ou(1, 1.0, 1.0, 0.0, 0.25);
    EigenPair eo = eigenpair_branching_ou(1, 1.0, 1.0, 0.0, 0.25);
    const double alpha = std::sqrt(1.0 - 0.5);
    for (double x : {-1.5, -0.3, 0.0, 0.7, 2.0}) {
        std::vector<double> out(1);
        aux_drift(mo, eo, StateView(&x, 1), out);
        CHECK(out[0] == doctest::Approx(-alpha * x).epsilon(1e-6));
    }
    // no diffusion: drift is untouched
    ModelSpec ma = make_equal_mitosis(AffineRate{4.0, 0.0});
    EigenPair ea = eigenpair_affine_mitosis(4.0, 0.0);
    const double x = 1.1;
    std::vector<double> out(1);
    aux_drift(ma, ea, StateView(&x, 1), out);
    CHECK(out[0] == doctest::Approx(1.0));
}

TEST_CASE("auxiliary jump sample respects family structure") {
    Rng rng(19);
    ModelSpec m = make_equal_mitosis(ConstantRate{1.0});
    EigenPair e = eigenpair_affine_mitosis(0.0, 1.0);
    const double x = 2.0;
    for (int i = 0; i < 50; ++i) {
        AuxJump j = aux_jump_sample(m, e, StateView(&x, 1), rng);
        CHECK(j.k == 2);
        CHECK((j.j == 1 || j.j == 2));
        CHECK(j.state.size() == 1);
        CHECK(j.state[0] == doctest::Approx(1.0)); // both children sit at x/2
        CHECK(j.theta >= 0.0);
        CHECK(j.theta <= 1.0);
    }
    ModelSpec mu = make_asymmetric_mitosis(ConstantRate{1.0}, split_uniform());
    Welford frac;
    for (int i = 0; i < 4000; ++i) {
        AuxJump j = aux_jump_sample(mu, e, StateView(&x, 1), rng);
        CHECK(j.state[0] > 0.0);
        CHECK(j.state[0] < x);
        // V == 1: child is theta x or (1-theta) x with equal probability
        frac.add(j.state[0] / x);
    }
    CHECK(std::abs(frac.mean - 0.5) < 5.0 * frac.stderr_mean());
}

TEST_CASE("constant-rate mitosis auxiliary is the classic size process") {
    // V == 1, drift 1, jumps x -> x/2 at rate 2r; E[Y_t] solves the closed form
    const double r = 1.0, x0 = 2.0, t = 1.5;
    ModelSpec m = make_equal_mitosis(ConstantRate{r});
    EigenPair e = eigenpair_affine_mitosis(0.0, r);
    std::vector<double> times{0.0, 0.4, t};
    Welford w0, w1, w2;
    for (int i = 0; i < 4000; ++i) {
        Rng rng = Rng::stream(555, i);
        std::vector<double> path = simulate_aux(m, e, StateView(&x0, 1), times, rng);
        REQUIRE(path.size() == 3);
        w0.add(path[0]);
        w1.add(path[1]);
        w2.add(path[2]);
    }
    CHECK(w0.mean == doctest::Approx(x0)); // time zero is the start state
    CHECK(w0.variance() == doctest::Approx(0.0));
    CHECK(std::abs(w1.mean - tcp_aux_mean(r, x0, 0.4)) < 4.0 * w1.stderr_mean());
    CHECK(std::abs(w2.mean - tcp_aux_mean(r, x0, t)) < 4.0 * w2.stderr_mean());
}

TEST_CASE("affine-rate auxiliary stays positive and reproduces the seed") {
    ModelSpec m = make_equal_mitosis(AffineRate{4.0, 0.0});
    EigenPair e = eigenpair_affine_mitosis(4.0, 0.0);
    const double x0 = 0.7;
    std::vector<double> times{0.25, 0.5, 1.0, 2.0};
    Rng r1 = Rng::stream(77, 0);
    Rng r2 = Rng::stream(77, 0);
    std::vector<double> a = simulate_aux(m, e, StateView(&x0, 1), times, r1);
    std::vector<double> b = simulate_aux(m, e, StateView(&x0, 1), times, r2);
    REQUIRE(a.size() == times.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i] == b[i]);
        CHECK(a[i] > 0.0);
    }
}

TEST_CASE("OU auxiliary long run settles at the reweighted Gaussian") {
    // aux drift is -alpha x with noise sigma: invariant variance sigma^2/(2 alpha)
    const double sigma = 1.0, g = 1.0, b = 0.25;
    ModelSpec m = make_branching_ou(1, sigma, g, 0.0, b);
    EigenPair e = eigenpair_branching_ou(1, sigma, g, 0.0, b);
    const double alpha = std::sqrt(g * g - 2.0 * b * sigma * sigma);
    const double x0 = 0.0;
    std::vector<double> s =
        long_run_distribution(m, e, StateView(&x0, 1), 8000, 10.0, 0.5, 303);
    REQUIRE(s.size() == 8000);
    Welford w;
    for (double v : s) w.add(v);
    const double var_want = sigma * sigma / (2.0 * alpha);
    CHECK(std::abs(w.mean) < 5.0 * w.stderr_mean() + 0.01);
    CHECK(w.variance() == doctest::Approx(var_want).epsilon(0.08));
    // deterministic in the seed
    std::vector<double> s2 =
        long_run_distribution(m, e, StateView(&x0, 1), 8000, 10.0, 0.5, 303);
    CHECK(s == s2);
}

TEST_CASE("size-structured long run matches the invariant density moments") {
    const double r = 1.0;
    ModelSpec m = make_equal_mitosis(ConstantRate{r});
    EigenPair e = eigenpair_affine_mitosis(0.0, r);
    const double x0 = 1.0;
    std::vector<double> s =
        long_run_distribution(m, e, StateView(&x0, 1), 20000, 12.0, 1.0, 707);
    Welford w;
    for (double v : s) {
        CHECK(v > 0.0);
        w.add(v);
    }
    // invariant mean is 1/r; thinned draws are correlated, allow a wide band
    CHECK(std::abs(w.mean - 1.0 / r) < 10.0 * w.stderr_mean() + 0.01);
    const double ks = ks_statistic(std::vector<double>(s.begin(), s.end()),
                                   [r](double x) { return tcp_invariant_cdf(x, r); });
    CHECK(ks < 0.02);
}
