#pragma once
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace branchsim {

// Count/mean/M2 accumulator (Welford). merge() is the parallel-variance
// combination, so replica summaries can be folded in a fixed order
// independent of which worker produced them.
struct Welford {
    std::int64_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++n;
        const double d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    void merge(const Welford& o) {
        if (o.n == 0) return;
        if (n == 0) { *this = o; return; }
        const double d = o.mean - mean;
        const std::int64_t tot = n + o.n;
        mean += d * (static_cast<double>(o.n) / tot);
        m2 += o.m2 + d * d * (static_cast<double>(n) * o.n / tot);
        n = tot;
    }
    double variance() const { return n > 1 ? m2 / (n - 1) : 0.0; }
    double stderr_mean() const;
};

// Paired accumulator for ratio estimators E[N]/E[D]; stderr by the delta
// method with the empirical covariance.
struct RatioWelford {
    std::int64_t n = 0;
    double mean_n = 0.0, mean_d = 0.0;
    double m2_n = 0.0, m2_d = 0.0, cov_nd = 0.0;

    void add(double num, double den);
    void merge(const RatioWelford& o);
    double ratio() const { return mean_n / mean_d; }
    double stderr_ratio() const;
};

// One verification line: an estimated LHS against a reference RHS, pass iff
// |lhs-rhs| <= 3*sqrt(se_l^2+se_r^2) + allowance.
struct CheckReport {
    std::string name;
    double lhs = 0.0, lhs_stderr = 0.0;
    double rhs = 0.0, rhs_stderr = 0.0;
    double z = 0.0;
    bool pass = false;
    double allowance = 0.0; // documented deterministic-bias budget (dt, quadrature)
    std::uint64_t seed = 0;
    nlohmann::ordered_json params; // free-form: replica counts, model, tolerances

    nlohmann::ordered_json to_json() const;
};

CheckReport make_check(const std::string& name, double lhs, double lhs_se, double rhs,
                       double rhs_se, std::uint64_t seed, double allowance = 0.0);

// Kolmogorov-Smirnov statistic of a sample against a CDF. Sorts a copy.
double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf);

// Exact 1-D Wasserstein-1 distance between weighted empirical measures,
// after normalization to probability measures; totals must match to rel_tol
// (weights all 1 for plain samples). Computed as the area between CDFs.
double wasserstein1d(std::vector<std::pair<double, double>> a,
                     std::vector<std::pair<double, double>> b,
                     double total_rel_tol = 1e-9);
double wasserstein1d(const std::vector<double>& a, const std::vector<double>& b);

} // namespace branchsim
