#include "branchsim/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace branchsim {

double Welford::stderr_mean() const {
    return n > 1 ? std::sqrt(variance() / n) : 0.0;
}

void RatioWelford::add(double num, double den) {
    ++n;
    const double dn = num - mean_n;
    const double dd = den - mean_d;
    mean_n += dn / n;
    mean_d += dd / n;
    m2_n += dn * (num - mean_n);
    m2_d += dd * (den - mean_d);
    cov_nd += dn * (den - mean_d);
}

void RatioWelford::merge(const RatioWelford& o) {
    if (o.n == 0) return;
    if (n == 0) { *this = o; return; }
    const std::int64_t tot = n + o.n;
    const double dn = o.mean_n - mean_n;
    const double dd = o.mean_d - mean_d;
    const double w = static_cast<double>(n) * o.n / tot;
    m2_n += o.m2_n + dn * dn * w;
    m2_d += o.m2_d + dd * dd * w;
    cov_nd += o.cov_nd + dn * dd * w;
    mean_n += dn * (static_cast<double>(o.n) / tot);
    mean_d += dd * (static_cast<double>(o.n) / tot);
    n = tot;
}

double RatioWelford::stderr_ratio() const {
    if (n < 2 || mean_d == 0.0) return 0.0;
    const double r = ratio();
    const double sn = m2_n / (n - 1);
    const double sd = m2_d / (n - 1);
    const double snd = cov_nd / (n - 1);
    double v = (sn - 2.0 * r * snd + r * r * sd) / (mean_d * mean_d);
    if (v < 0.0) v = 0.0; // fp cancellation near exact ratios
    return std::sqrt(v / n);
}

nlohmann::ordered_json CheckReport::to_json() const {
    nlohmann::ordered_json j;
    j["name"] = name;
    j["lhs"] = lhs;
    j["lhs_stderr"] = lhs_stderr;
    j["rhs"] = rhs;
    j["rhs_stderr"] = rhs_stderr;
    j["z"] = z;
    j["pass"] = pass;
    j["allowance"] = allowance;
    j["seed"] = seed;
    j["params"] = params.is_null() ? nlohmann::ordered_json::object() : params;
    return j;
}

CheckReport make_check(const std::string& name, double lhs, double lhs_se, double rhs,
                       double rhs_se, std::uint64_t seed, double allowance) {
    CheckReport r;
    r.name = name;
    r.lhs = lhs;
    r.lhs_stderr = lhs_se;
    r.rhs = rhs;
    r.rhs_stderr = rhs_se;
    r.seed = seed;
    r.allowance = allowance;
    const double se = std::sqrt(lhs_se * lhs_se + rhs_se * rhs_se);
    const double gap = std::abs(lhs - rhs);
    const double slack = std::max(gap - allowance, 0.0);
    r.z = se > 0.0 ? slack / se : (slack == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    r.pass = slack <= 3.0 * se;
    return r;
}

double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
    if (sample.empty()) throw std::invalid_argument("ks_statistic: empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double ks = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double F = cdf(sample[i]);
        ks = std::max(ks, std::abs((i + 1) / n - F));
        ks = std::max(ks, std::abs(i / n - F));
    }
    return ks;
}

double wasserstein1d(std::vector<std::pair<double, double>> a,
                     std::vector<std::pair<double, double>> b,
                     double total_rel_tol) {
    if (a.empty() || b.empty())
        throw std::invalid_argument("wasserstein1d: empty sample");
    double ta = 0.0, tb = 0.0;
    for (auto& [x, w] : a) {
        if (w < 0.0) throw std::invalid_argument("wasserstein1d: negative weight");
        ta += w;
    }
    for (auto& [x, w] : b) {
        if (w < 0.0) throw std::invalid_argument("wasserstein1d: negative weight");
        tb += w;
    }
    if (ta <= 0.0 || tb <= 0.0) throw std::invalid_argument("wasserstein1d: zero total mass");
    if (std::abs(ta - tb) > total_rel_tol * std::max(ta, tb))
        throw std::invalid_argument("wasserstein1d: total masses differ");
    auto cmp = [](const std::pair<double, double>& l, const std::pair<double, double>& r) {
        return l.first < r.first;
    };
    std::sort(a.begin(), a.end(), cmp);
    std::sort(b.begin(), b.end(), cmp);
    // Sweep merged support; integrate |F_a - F_b| dx with both CDFs normalized.
    std::size_t i = 0, j = 0;
    double Fa = 0.0, Fb = 0.0;
    double prev = std::min(a.front().first, b.front().first);
    double acc = 0.0;
    while (i < a.size() || j < b.size()) {
        double x;
        if (j >= b.size() || (i < a.size() && a[i].first <= b[j].first)) x = a[i].first;
        else x = b[j].first;
        acc += std::abs(Fa - Fb) * (x - prev);
        prev = x;
        while (i < a.size() && a[i].first == x) Fa += a[i++].second / ta;
        while (j < b.size() && b[j].first == x) Fb += b[j++].second / tb;
    }
    return acc;
}

double wasserstein1d(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<std::pair<double, double>> wa, wb;
    wa.reserve(a.size());
    wb.reserve(b.size());
    // Equal-weight samples of possibly different sizes: weight 1/size each.
    for (double x : a) wa.emplace_back(x, 1.0 / a.size());
    for (double x : b) wb.emplace_back(x, 1.0 / b.size());
    return wasserstein1d(std::move(wa), std::move(wb));
}

} // namespace branchsim
