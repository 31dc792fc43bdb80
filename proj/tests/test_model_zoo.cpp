#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "branchsim/model.hpp"
#include "branchsim/quadrature.hpp"

using namespace branchsim;

namespace {

std::vector<std::vector<double>> size_grid() {
    std::vector<std::vector<double>> g;
    for (int i = 0; i <= 32; ++i) g.push_back({0.125 * std::pow(64.0, i / 32.0)});
    return g;
}

} // namespace

TEST_CASE("rate_eval covers all four kinds") {
    CHECK(rate_eval(ConstantRate{3.0}, 17.0) == 3.0);
    CHECK(rate_eval(AffineRate{2.0, 0.5}, 3.0) == doctest::Approx(6.5));
    CHECK(rate_eval(PlateauRate{1.0, 0.0, 10.0}, 5.0) == doctest::Approx(5.0));
    CHECK(rate_eval(PlateauRate{1.0, 0.0, 10.0}, 50.0) == doctest::Approx(10.0));
    CHECK(rate_eval(PowerRate{2.0, 1.5}, 4.0) == doctest::Approx(16.0));
}

TEST_CASE("split laws: shapes and symmetry") {
    SplitLaw half = split_deterministic_half();
    CHECK(half.is_atom);
    CHECK(half.icdf(0.1) == 0.5);
    CHECK(half.icdf(0.9) == 0.5);

    SplitLaw unif = split_uniform();
    CHECK_FALSE(unif.is_atom);
    CHECK(unif.icdf(0.25) == doctest::Approx(0.25));
    CHECK(unif.density(0.3) == doctest::Approx(1.0));
    CHECK(unif.cdf(0.7) == doctest::Approx(0.7));

    SplitLaw b22 = split_beta22();
    CHECK_FALSE(b22.is_atom);
    // density 6 u (1 - u): symmetric, integrates to 1, cdf consistent
    CHECK(b22.density(0.5) == doctest::Approx(1.5));
    CHECK(b22.density(0.2) == doctest::Approx(b22.density(0.8)).epsilon(1e-12));
    const double mass = adaptive_simpson([&](double u) { return b22.density(u); }, 0.0, 1.0);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
    const double cdf_half = adaptive_simpson([&](double u) { return b22.density(u); }, 0.0, 0.5);
    CHECK(b22.cdf(0.5) == doctest::Approx(cdf_half).epsilon(1e-9));
    // icdf inverts cdf
    for (double u : {0.1, 0.37, 0.5, 0.81}) CHECK(b22.cdf(b22.icdf(u)) == doctest::Approx(u).epsilon(1e-8));
}

TEST_CASE("asymmetric builders reject a lopsided split law") {
    SplitLaw skew;
    skew.name = "skew";
    skew.icdf = [](double u) { return u * u; }; // mean 1/3
    CHECK_THROWS_AS(make_asymmetric_mitosis(ConstantRate{1.0}, skew), std::invalid_argument);
    SplitLaw no_icdf;
    no_icdf.name = "empty";
    CHECK_THROWS_AS(make_asymmetric_mitosis(ConstantRate{1.0}, no_icdf), std::invalid_argument);
}

TEST_CASE("mean generator oracle: equal mitosis, affine test function") {
    // unit growth, r(x) = 4x, f = 2x+1:
    // (Gf)(1) = f'(1) + r(1) * (2 f(1/2) - f(1)) = 2 + 4 * (4 - 3) = 6
    ModelSpec m = make_equal_mitosis(AffineRate{4.0, 0.0});
    TestFunction f = fn_scalar([](double x) { return 2.0 * x + 1.0; });
    const double x = 1.0;
    CHECK(apply_mean_generator(m, f, StateView(&x, 1)) == doctest::Approx(6.0).epsilon(1e-9));
}

TEST_CASE("mitosis affine eigenpair closed coefficients") {
    EigenPair e = eigenpair_affine_mitosis(4.0, 0.0);
    CHECK(e.lambda0 == doctest::Approx(2.0));
    const double one = 1.0;
    CHECK(e.V.value(StateView(&one, 1)) == doctest::Approx(3.0)); // 2x + 1 at 1
    EigenPair c = eigenpair_affine_mitosis(0.0, 1.7); // constant rate degenerates
    CHECK(c.lambda0 == doctest::Approx(1.7));
    const double x = 5.0;
    CHECK(c.V.value(StateView(&x, 1)) == doctest::Approx(1.0));
    CHECK_THROWS_AS(eigenpair_affine_mitosis(0.0, 0.0), std::invalid_argument);
}

TEST_CASE("eigen residuals vanish for every shipped closed-form pair") {
    const auto grid = size_grid();

    SUBCASE("equal mitosis, constant rate") {
        ModelSpec m = make_equal_mitosis(ConstantRate{1.3});
        CHECK(eigen_residual(m, eigenpair_affine_mitosis(0.0, 1.3), grid) < 1e-10);
    }
    SUBCASE("equal mitosis, affine rate") {
        ModelSpec m = make_equal_mitosis(AffineRate{4.0, 0.0});
        CHECK(eigen_residual(m, eigenpair_affine_mitosis(4.0, 0.0), grid) < 1e-8);
        ModelSpec m2 = make_equal_mitosis(AffineRate{2.0, 1.0});
        CHECK(eigen_residual(m2, eigenpair_affine_mitosis(2.0, 1.0), grid) < 1e-8);
    }
    SUBCASE("asymmetric mitosis shares the affine eigenpair for any symmetric split") {
        ModelSpec mu = make_asymmetric_mitosis(AffineRate{4.0, 0.0}, split_uniform());
        CHECK(eigen_residual(mu, eigenpair_affine_mitosis(4.0, 0.0), grid) < 1e-8);
        ModelSpec mb = make_asymmetric_mitosis(AffineRate{2.0, 1.0}, split_beta22());
        CHECK(eigen_residual(mb, eigenpair_affine_mitosis(2.0, 1.0), grid) < 1e-8);
    }
    SUBCASE("parasite linear pair holds for any rate (mass conservation)") {
        ModelSpec mc = make_parasite(0.5, 0.3, ConstantRate{2.0}, split_uniform());
        CHECK(eigen_residual(mc, eigenpair_parasite_linear(0.5), grid) < 1e-10);
        ModelSpec ma = make_parasite(0.5, 0.3, AffineRate{1.0, 2.0}, split_beta22());
        CHECK(eigen_residual(ma, eigenpair_parasite_linear(0.5), grid) < 1e-10);
        ModelSpec mp = make_parasite(0.5, 0.0, PowerRate{1.0, 2.0}, split_uniform());
        CHECK(eigen_residual(mp, eigenpair_parasite_linear(0.5), grid) < 1e-8);
    }
    SUBCASE("parasite affine pair") {
        ModelSpec m = make_parasite(0.5, 0.3, AffineRate{1.0, 2.0}, split_uniform());
        EigenPair e = eigenpair_parasite_affine(0.5, 1.0, 2.0);
        CHECK(e.lambda0 == doctest::Approx(2.0));
        const double one = 1.0;
        // V = x c/(d-a) + 1 = (2/3) x + 1
        CHECK(e.V.value(StateView(&one, 1)) == doctest::Approx(5.0 / 3.0).epsilon(1e-12));
        CHECK(eigen_residual(m, e, grid) < 1e-8);
        // constant rate r(x) = d is the c = 0 case
        ModelSpec m0 = make_parasite(0.5, 0.1, ConstantRate{2.0}, split_beta22());
        CHECK(eigen_residual(m0, eigenpair_parasite_affine(0.5, 0.0, 2.0), grid) < 1e-10);
        CHECK_THROWS_AS(eigenpair_parasite_affine(2.0, 1.0, 2.0), std::invalid_argument);
    }
    SUBCASE("branching OU in one and three dimensions") {
        for (int dim : {1, 3}) {
            ModelSpec m = make_branching_ou(dim, 1.0, 1.0, 0.0, 0.25);
            EigenPair e = eigenpair_branching_ou(dim, 1.0, 1.0, 0.0, 0.25);
            std::vector<std::vector<double>> g;
            for (double v : {-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0}) g.push_back(std::vector<double>(dim, v));
            CHECK(eigen_residual(m, e, g) < 1e-7);
            const double alpha = std::sqrt(1.0 - 2.0 * 0.25);
            CHECK(e.lambda0 == doctest::Approx(dim * (1.0 - alpha) / 2.0).epsilon(1e-12));
        }
        CHECK_THROWS_AS(eigenpair_branching_ou(1, 1.0, 1.0, 0.0, 0.6), std::invalid_argument);
    }
    SUBCASE("fragmentation with zero size exponent") {
        std::vector<FragPartition> parts{{{0.6, 0.4}, 1.0}};
        ModelSpec m = make_fragmentation(0.0, parts);
        EigenPair e = eigenpair_fragmentation(2.0, parts);
        CHECK(e.lambda0 == doctest::Approx(-0.48).epsilon(1e-12));
        CHECK(eigen_residual(m, e, grid) < 1e-8);
        // three-part dislocation with two partitions in the measure
        std::vector<FragPartition> p2{{{0.5, 0.3, 0.2}, 0.7}, {{0.5, 0.5}, 0.5}};
        ModelSpec m2 = make_fragmentation(0.0, p2);
        EigenPair e2 = eigenpair_fragmentation(1.5, p2);
        const double want = 0.7 * (std::pow(0.5, 1.5) + std::pow(0.3, 1.5) + std::pow(0.2, 1.5) - 1.0)
                          + 0.5 * (2.0 * std::pow(0.5, 1.5) - 1.0);
        CHECK(e2.lambda0 == doctest::Approx(want).epsilon(1e-12));
        CHECK(eigen_residual(m2, e2, grid) < 1e-8);
    }
}

TEST_CASE("branch_expectation closed cases") {
    const double x = 1.7;
    StateView xv(&x, 1);
    ModelSpec em = make_equal_mitosis(ConstantRate{1.0});
    auto sq = [](StateView y) { return y[0] * y[0]; };
    CHECK(branch_expectation(em, xv, sq) == doctest::Approx(x * x / 2.0).epsilon(1e-12));
    ModelSpec am = make_asymmetric_mitosis(ConstantRate{1.0}, split_uniform());
    auto id = [](StateView y) { return y[0]; };
    CHECK(branch_expectation(am, xv, id) == doctest::Approx(x).epsilon(1e-12));
    // uniform split: E[(theta x)^2 + ((1-theta) x)^2] = 2 x^2 / 3
    CHECK(branch_expectation(am, xv, sq) == doctest::Approx(2.0 * x * x / 3.0).epsilon(1e-9));
    ModelSpec pa = make_parasite(0.1, 0.2, ConstantRate{1.0}, split_beta22());
    CHECK(branch_expectation(pa, xv, id) == doctest::Approx(x).epsilon(1e-9));
}

TEST_CASE("fork operator closed cases") {
    const double x = 1.7, one_x = 1.0;
    StateView xv(&x, 1);
    auto id = [](StateView y) { return y[0]; };
    auto one = [](StateView) { return 1.0; };

    ModelSpec em = make_equal_mitosis(ConstantRate{1.0});
    CHECK(fork_operator_J2(em, one, one, StateView(&one_x, 1)) == doctest::Approx(2.0));
    CHECK(fork_operator_J2(em, id, id, xv) == doctest::Approx(2.0 * (x / 2) * (x / 2)).epsilon(1e-12));

    ModelSpec au = make_asymmetric_mitosis(ConstantRate{1.0}, split_uniform());
    CHECK(fork_operator_J2(au, id, id, xv) == doctest::Approx(x * x / 3.0).epsilon(1e-9));

    // beta22 icdf has sqrt endpoints, so the theta quadrature converges
    // polynomially: ~2e-6 relative at the default order, refining with order
    ModelSpec ab = make_asymmetric_mitosis(ConstantRate{1.0}, split_beta22());
    CHECK(fork_operator_J2(ab, id, id, xv) == doctest::Approx(0.4 * x * x).epsilon(1e-5));
    CHECK(fork_operator_J2(ab, id, id, xv, 1024) == doctest::Approx(0.4 * x * x).epsilon(1e-8));

    // three fragments: six ordered distinct pairs for f = g = 1
    ModelSpec fr = make_fragmentation(0.0, {{{0.5, 0.3, 0.2}, 1.0}});
    CHECK(fork_operator_J2(fr, one, one, xv) == doctest::Approx(6.0).epsilon(1e-12));
    const double pair_sum = 2.0 * (0.5 * 0.3 + 0.5 * 0.2 + 0.3 * 0.2);
    CHECK(fork_operator_J2(fr, id, id, xv) == doctest::Approx(pair_sum * x * x).epsilon(1e-12));
}

TEST_CASE("branch_family_integral sees whole families") {
    const double x = 2.0;
    StateView xv(&x, 1);
    ModelSpec am = make_asymmetric_mitosis(ConstantRate{1.0}, split_uniform());
    // children conserve mass exactly for every theta
    const double dev = branch_family_integral(am, xv, [&](int k, StateView cs) {
        double s = 0.0;
        for (int j = 0; j < k; ++j) s += cs[j];
        return s - x;
    });
    CHECK(std::abs(dev) < 1e-12);
    CHECK(branch_family_integral(am, xv, [](int k, StateView) { return double(k); }) ==
          doctest::Approx(2.0));
}

TEST_CASE("max_child_state dominates children coordinatewise") {
    ModelSpec au = make_asymmetric_mitosis(ConstantRate{1.0}, split_uniform());
    const double x = 3.0;
    StateView xv(&x, 1);
    std::vector<double> cap(1), kids(2);
    au.max_child_state(2, xv, cap);
    for (double th : {0.01, 0.3, 0.77, 0.999}) {
        au.children(2, xv, th, kids);
        CHECK(kids[0] <= cap[0] + 1e-15);
        CHECK(kids[1] <= cap[0] + 1e-15);
        CHECK(kids[0] + kids[1] == doctest::Approx(x).epsilon(1e-12));
    }
}

TEST_CASE("offspring pmf and mean") {
    ModelSpec em = make_equal_mitosis(ConstantRate{1.0});
    const double x = 1.0;
    StateView xv(&x, 1);
    CHECK(em.pmf(xv, 2) == doctest::Approx(1.0));
    CHECK(em.pmf(xv, 0) == doctest::Approx(0.0));
    CHECK(em.mean_offspring(xv) == doctest::Approx(2.0));
    ModelSpec fr = make_fragmentation(0.0, {{{0.5, 0.3, 0.2}, 0.25}, {{0.5, 0.5}, 0.75}});
    CHECK(fr.pmf(xv, 3) == doctest::Approx(0.25));
    CHECK(fr.pmf(xv, 2) == doctest::Approx(0.75));
    CHECK(fr.mean_offspring(xv) == doctest::Approx(2.25));
}

TEST_CASE("hazard inverse matches the integrated rate along the flow") {
    auto roundtrip = [](const ModelSpec& m, double x0, double e) {
        const double x = x0;
        const double s = m.hazard_inverse(StateView(&x, 1), e);
        REQUIRE(std::isfinite(s));
        // integrate r along the deterministic flow and compare with e
        const double back = adaptive_simpson(
            [&](double u) {
                std::vector<double> y(1);
                m.flow(StateView(&x, 1), u, y);
                return m.rate(y);
            },
            0.0, s, 1e-12);
        CHECK(back == doctest::Approx(e).epsilon(1e-8));
    };
    roundtrip(make_equal_mitosis(ConstantRate{1.5}), 0.7, 2.0);
    roundtrip(make_equal_mitosis(AffineRate{2.0, 0.5}), 0.7, 2.0);
    roundtrip(make_equal_mitosis(AffineRate{2.0, 0.0}), 0.0, 1.0);
    roundtrip(make_equal_mitosis(PlateauRate{1.0, 0.0, 2.0}), 0.5, 0.4);
    roundtrip(make_equal_mitosis(PlateauRate{1.0, 0.0, 2.0}), 0.5, 6.0); // crosses xstar
    roundtrip(make_equal_mitosis(PowerRate{0.5, 2.0}), 1.0, 3.0);
    roundtrip(make_parasite(0.4, 0.0, ConstantRate{2.0}, split_uniform()), 1.0, 1.0);
}

TEST_CASE("rate bounds dominate the rate over the window") {
    ModelSpec mp = make_equal_mitosis(PowerRate{1.0, 2.0});
    ModelSpec pa = make_parasite(0.5, 0.0, PowerRate{1.0, 2.0}, split_uniform());
    for (double x : {0.3, 1.0, 4.0}) {
        for (double h : {0.1, 0.5, 2.0}) {
            StateView xv(&x, 1);
            for (double u = 0.0; u <= h; u += h / 16) {
                std::vector<double> y(1);
                mp.flow(xv, u, y);
                CHECK(mp.rate(y) <= mp.rate_bound(xv, h) * (1 + 1e-12));
                pa.flow(xv, u, y);
                CHECK(pa.rate(y) <= pa.rate_bound(xv, h) * (1 + 1e-12));
            }
        }
    }
}

TEST_CASE("finite-difference fallbacks for gradients and laplacians") {
    TestFunction f = fn_scalar([](double x) { return std::sin(x); });
    const double x = 0.8;
    std::vector<double> g(1);
    fn_gradient(f, StateView(&x, 1), g);
    CHECK(g[0] == doctest::Approx(std::cos(x)).epsilon(1e-6));
    CHECK(fn_laplacian(f, StateView(&x, 1)) == doctest::Approx(-std::sin(x)).epsilon(1e-4));
    TestFunction h = fn_nd([](StateView y) { return y[0] * y[0] + 3.0 * y[1]; });
    std::vector<double> p{1.0, 2.0}, gp(2);
    fn_gradient(h, p, gp);
    CHECK(gp[0] == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(gp[1] == doctest::Approx(3.0).epsilon(1e-6));
    CHECK(fn_laplacian(h, p) == doctest::Approx(2.0).epsilon(1e-3));
}
