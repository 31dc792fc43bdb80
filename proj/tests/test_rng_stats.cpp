#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "branchsim/rng.hpp"
#include "branchsim/stats.hpp"

using namespace branchsim;

TEST_CASE("uniform draws live in (0,1) with the right first two moments") {
    Rng rng(12345);
    const int n = 200000;
    Welford w;
    double min_v = 1.0, max_v = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
        w.add(u);
        min_v = std::min(min_v, u);
        max_v = std::max(max_v, u);
    }
    // 5 sigma bands; se(mean) = sqrt(1/12/n)
    CHECK(std::abs(w.mean - 0.5) < 5.0 * std::sqrt(1.0 / 12.0 / n));
    CHECK(std::abs(w.variance() - 1.0 / 12.0) < 0.002);
    // with 2e5 draws the extremes should approach the ends
    CHECK(min_v < 1e-4);
    CHECK(max_v > 1.0 - 1e-4);
}

TEST_CASE("normal draws match the first four moments") {
    Rng rng(777);
    const int n = 200000;
    double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        s1 += x;
        s2 += x * x;
        s3 += x * x * x;
        s4 += x * x * x * x;
    }
    s1 /= n; s2 /= n; s3 /= n; s4 /= n;
    CHECK(std::abs(s1) < 5.0 / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(s2 - 1.0) < 0.02);
    CHECK(std::abs(s3) < 0.05);       // E X^3 = 0, se ~ sqrt(15/n)
    CHECK(std::abs(s4 - 3.0) < 0.15); // E X^4 = 3
}

TEST_CASE("exponential has mean 1/rate") {
    Rng rng(2024);
    const int n = 100000;
    Welford w;
    for (int i = 0; i < n; ++i) w.add(rng.exponential(2.5));
    CHECK(std::abs(w.mean - 0.4) < 5.0 * w.stderr_mean());
    CHECK(w.variance() == doctest::Approx(0.16).epsilon(0.05));
}

TEST_CASE("below(n) is uniform on {0..n-1} and never out of range") {
    Rng rng(5);
    const std::uint64_t m = 7;
    const int n = 140000;
    std::vector<int> counts(m, 0);
    for (int i = 0; i < n; ++i) {
        const std::uint64_t v = rng.below(m);
        REQUIRE(v < m);
        ++counts[v];
    }
    const double expect = static_cast<double>(n) / m;
    const double se = std::sqrt(expect * (1.0 - 1.0 / m));
    for (std::uint64_t k = 0; k < m; ++k) CHECK(std::abs(counts[k] - expect) < 5.0 * se);
}

TEST_CASE("streams are reproducible and mutually decorrelated") {
    Rng a1 = Rng::stream(42, 3);
    Rng a2 = Rng::stream(42, 3);
    Rng b = Rng::stream(42, 4);
    Rng c = Rng::stream(43, 3);
    bool same_ab = true, same_ac = true;
    double corr_ab = 0.0;
    for (int i = 0; i < 4096; ++i) {
        const double u1 = a1.uniform();
        const double u2 = a2.uniform();
        REQUIRE(u1 == u2); // identical (seed, idx) replays bit-exactly
        const double ub = b.uniform();
        const double uc = c.uniform();
        same_ab = same_ab && (u1 == ub);
        same_ac = same_ac && (u1 == uc);
        corr_ab += (u1 - 0.5) * (ub - 0.5);
    }
    CHECK_FALSE(same_ab);
    CHECK_FALSE(same_ac);
    CHECK(std::abs(corr_ab / 4096 * 12.0) < 0.1); // sample correlation near 0
}

TEST_CASE("derive_seed is deterministic and spreads") {
    CHECK(derive_seed(9, 0) == derive_seed(9, 0));
    CHECK(derive_seed(9, 0) != derive_seed(9, 1));
    CHECK(derive_seed(9, 0) != derive_seed(10, 0));
    // sub-seeded streams should not collide with plain streams of the parent
    Rng s = Rng::stream(9, 0);
    Rng d(derive_seed(9, 0));
    bool same = true;
    for (int i = 0; i < 64; ++i) same = same && (s.next_u64() == d.next_u64());
    CHECK_FALSE(same);
}

TEST_CASE("Welford matches the two-pass formulas") {
    Rng rng(1);
    std::vector<double> xs(1000);
    for (auto& x : xs) x = rng.normal() * 3.0 + 1.0;
    Welford w;
    for (double x : xs) w.add(x);
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= xs.size();
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= (xs.size() - 1);
    CHECK(w.mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(w.variance() == doctest::Approx(var).epsilon(1e-12));
    CHECK(w.stderr_mean() == doctest::Approx(std::sqrt(var / xs.size())).epsilon(1e-12));
}

TEST_CASE("Welford merge equals sequential accumulation") {
    Rng rng(2);
    Welford whole, left, right, empty;
    for (int i = 0; i < 501; ++i) {
        const double x = rng.uniform(-2.0, 5.0);
        whole.add(x);
        (i < 137 ? left : right).add(x);
    }
    Welford merged = left;
    merged.merge(right);
    merged.merge(empty); // no-op
    CHECK(merged.n == whole.n);
    CHECK(merged.mean == doctest::Approx(whole.mean).epsilon(1e-13));
    CHECK(merged.m2 == doctest::Approx(whole.m2).epsilon(1e-12));
    Welford onto_empty;
    onto_empty.merge(whole);
    CHECK(onto_empty.mean == whole.mean);
    CHECK(onto_empty.m2 == whole.m2);
}

TEST_CASE("RatioWelford ratio, merge, and delta-method stderr") {
    Rng rng(3);
    RatioWelford whole, left, right;
    double sn = 0.0, sd = 0.0;
    std::vector<std::pair<double, double>> pairs;
    for (int i = 0; i < 400; ++i) {
        const double d = rng.uniform(0.5, 1.5);
        const double nmr = d * 2.0 + rng.normal() * 0.1;
        pairs.emplace_back(nmr, d);
        whole.add(nmr, d);
        (i % 3 == 0 ? left : right).add(nmr, d);
        sn += nmr;
        sd += d;
    }
    CHECK(whole.ratio() == doctest::Approx(sn / sd).epsilon(1e-12));
    RatioWelford merged = left;
    merged.merge(right);
    CHECK(merged.n == whole.n);
    CHECK(merged.ratio() == doctest::Approx(whole.ratio()).epsilon(1e-12));
    CHECK(merged.stderr_ratio() == doctest::Approx(whole.stderr_ratio()).epsilon(1e-10));
    // delta method against direct covariance sums
    const double r = whole.ratio();
    const int n = 400;
    const double mn = sn / n, md = sd / n;
    double vn = 0, vd = 0, cnd = 0;
    for (auto& [a, b] : pairs) {
        vn += (a - mn) * (a - mn);
        vd += (b - md) * (b - md);
        cnd += (a - mn) * (b - md);
    }
    vn /= (n - 1); vd /= (n - 1); cnd /= (n - 1);
    const double want = std::sqrt((vn - 2 * r * cnd + r * r * vd) / (md * md) / n);
    CHECK(whole.stderr_ratio() == doctest::Approx(want).epsilon(1e-10));
    // exact ratio pairs (num = 2 den) give stderr 0 up to cancellation
    RatioWelford exact;
    for (int i = 0; i < 50; ++i) {
        const double d = rng.uniform(0.5, 1.5);
        exact.add(2.0 * d, d);
    }
    CHECK(exact.ratio() == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(exact.stderr_ratio() < 1e-7);
}

TEST_CASE("make_check gating: three sigma plus allowance") {
    CheckReport ok = make_check("a", 1.0, 0.1, 1.25, 0.0, 1);
    CHECK(ok.pass);
    CHECK(ok.z == doctest::Approx(2.5));
    CheckReport bad = make_check("b", 1.0, 0.1, 1.35, 0.0, 1);
    CHECK_FALSE(bad.pass);
    CHECK(bad.z == doctest::Approx(3.5));
    // allowance absorbs deterministic bias before the z-score
    CheckReport allow = make_check("c", 1.0, 0.1, 1.35, 0.0, 1, 0.1);
    CHECK(allow.pass);
    CHECK(allow.z == doctest::Approx(2.5));
    // se == 0: pass iff the gap is inside the allowance
    CheckReport exact_ok = make_check("d", 1.0, 0.0, 1.0 + 5e-9, 0.0, 1, 1e-8);
    CHECK(exact_ok.pass);
    CHECK(exact_ok.z == 0.0);
    CheckReport exact_bad = make_check("e", 1.0, 0.0, 1.1, 0.0, 1, 1e-8);
    CHECK_FALSE(exact_bad.pass);
    CHECK(std::isinf(exact_bad.z));
    // two-sided se combination
    CheckReport both = make_check("f", 0.0, 0.3, 1.2, 0.4, 1);
    CHECK(both.z == doctest::Approx(1.2 / 0.5));
    CHECK(both.pass);
}

TEST_CASE("ks_statistic on tiny hand cases and a real sample") {
    auto unif = [](double x) { return std::clamp(x, 0.0, 1.0); };
    CHECK(ks_statistic({0.5}, unif) == doctest::Approx(0.5));
    CHECK(ks_statistic({0.0, 1.0}, unif) == doctest::Approx(0.5));
    Rng rng(11);
    std::vector<double> s(20000);
    for (auto& v : s) v = rng.uniform();
    // Kolmogorov: D_n ~ 1.36/sqrt(n) at the 5% level; allow double that
    CHECK(ks_statistic(s, unif) < 2.72 / std::sqrt(20000.0));
    for (auto& v : s) v = 0.25 + 0.5 * v; // squeeze: D = 1/4 against U(0,1)
    CHECK(ks_statistic(s, unif) == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("wasserstein1d closed cases") {
    CHECK(wasserstein1d(std::vector<double>{0.0}, std::vector<double>{1.0}) ==
          doctest::Approx(1.0));
    // translation invariance: W1(S, S + c) = |c|
    Rng rng(13);
    std::vector<double> s(500), t(500);
    for (int i = 0; i < 500; ++i) {
        s[i] = rng.normal();
        t[i] = s[i] + 0.7;
    }
    CHECK(wasserstein1d(s, t) == doctest::Approx(0.7).epsilon(1e-12));
    // different sample sizes normalize to probability measures
    std::vector<double> u1{0.0, 1.0}, u2{0.0, 0.0, 1.0, 1.0};
    CHECK(wasserstein1d(u1, u2) == doctest::Approx(0.0));
    // U(0,1) against a point at 1/2: W1 = E|U - 1/2| = 1/4
    std::vector<double> grid(4000), half{0.5};
    for (int i = 0; i < 4000; ++i) grid[i] = (i + 0.5) / 4000.0;
    CHECK(wasserstein1d(grid, half) == doctest::Approx(0.25).epsilon(1e-3));
}

TEST_CASE("weighted wasserstein matches replicated plain samples") {
    std::vector<std::pair<double, double>> a{{0.0, 2.0}, {1.0, 1.0}};
    std::vector<std::pair<double, double>> b{{0.5, 3.0}};
    // plain version: {0,0,1} vs {1/2,1/2,1/2}
    const double plain = wasserstein1d(std::vector<double>{0.0, 0.0, 1.0},
                                       std::vector<double>{0.5, 0.5, 0.5});
    CHECK(wasserstein1d(a, b) == doctest::Approx(plain).epsilon(1e-12));
}

TEST_CASE("wasserstein1d metric axioms on random weighted measures") {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        auto draw = [&](int n) {
            std::vector<std::pair<double, double>> m(n);
            double tot = 0.0;
            for (auto& [x, w] : m) {
                x = rng.uniform(-3.0, 3.0);
                w = rng.uniform(0.1, 1.0);
                tot += w;
            }
            for (auto& [x, w] : m) w /= tot; // normalize so totals agree
            return m;
        };
        auto a = draw(1 + static_cast<int>(rng.below(6)));
        auto b = draw(1 + static_cast<int>(rng.below(6)));
        auto c = draw(1 + static_cast<int>(rng.below(6)));
        const double ab = wasserstein1d(a, b);
        const double ba = wasserstein1d(b, a);
        const double ac = wasserstein1d(a, c);
        const double cb = wasserstein1d(c, b);
        CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
        CHECK(ab >= 0.0);
        CHECK(ab <= ac + cb + 1e-12);
        CHECK(wasserstein1d(a, a) == doctest::Approx(0.0));
    }
}

TEST_CASE("wasserstein1d input validation") {
    using WPairs = std::vector<std::pair<double, double>>;
    CHECK_THROWS_AS(wasserstein1d(WPairs{}, WPairs{{0.0, 1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(wasserstein1d(WPairs{{0.0, 1.0}}, WPairs{{0.0, 2.0}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(wasserstein1d(WPairs{{0.0, -1.0}, {1.0, 2.0}}, WPairs{{0.0, 1.0}}),
                    std::invalid_argument);
}
