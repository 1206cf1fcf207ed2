#pragma once

#include "refinery/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace refinery {

struct StatResult {
    double statistic = 0.0;
    std::optional<double> p_value;
    std::optional<int> df;
    std::string method;
    std::vector<std::string> notes;
};

namespace detail {

// Regularized upper incomplete gamma Q(s, x): series for the lower function
// when x < s + 1, Lentz continued fraction otherwise. Converges to relative
// accuracy well below 1e-10 for the chi-square tails used here.
inline double regularized_gamma_q(double s, double x) {
    if (x < 0 || s <= 0) throw ArgumentError("regularized_gamma_q: domain error");
    if (x == 0) return 1.0;

    constexpr int kMaxIter = 2000;
    constexpr double kEps = 1e-16;
    const double log_prefix = s * std::log(x) - x - std::lgamma(s);

    if (x < s + 1) {
        // P(s,x) = x^s e^-x / Gamma(s) * sum_{n>=0} x^n / (s (s+1) ... (s+n))
        double term = 1.0 / s;
        double sum = term;
        double denom = s;
        for (int n = 0; n < kMaxIter; ++n) {
            denom += 1.0;
            term *= x / denom;
            sum += term;
            if (std::abs(term) < std::abs(sum) * kEps) break;
        }
        return 1.0 - std::exp(log_prefix) * sum;
    }

    // Q(s,x) = x^s e^-x / Gamma(s) * 1/(x+1-s- 1(1-s)/(x+3-s- ...)) (Lentz)
    constexpr double kTiny = 1e-300;
    double b = x + 1.0 - s;
    double c = 1.0 / kTiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kMaxIter; ++i) {
        const double an = -i * (i - s);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEps) break;
    }
    return std::exp(log_prefix) * h;
}

inline double chi_square_tail(double x, int df) {
    if (df < 1) throw ArgumentError("chi_square_tail: df must be >= 1");
    if (x <= 0) return 1.0;
    return std::clamp(regularized_gamma_q(df / 2.0, x / 2.0), 0.0, 1.0);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Mid-ranks (1-based) of `values`, averaging ranks across ties.
inline std::vector<double> midranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double r = (double(i + 1) + double(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

// Sum over tie groups of t^3 - t.
inline double tie_cubes(const std::vector<double>& values) {
    std::map<double, std::size_t> counts;
    for (double v : values) ++counts[v];
    double sum = 0;
    for (const auto& [v, t] : counts) sum += double(t) * t * t - double(t);
    return sum;
}

} // namespace detail

// Kruskal-Wallis H with tie correction, p from the chi-square tail with
// df = groups - 1.
inline StatResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw ArgumentError("kruskal_wallis: need at least 2 groups");
    std::vector<double> pooled;
    for (const auto& g : groups) {
        if (g.empty()) throw ArgumentError("kruskal_wallis: empty group");
        pooled.insert(pooled.end(), g.begin(), g.end());
    }
    const double n = double(pooled.size());
    const double correction = 1.0 - detail::tie_cubes(pooled) / (n * n * n - n);
    if (correction <= 0) {
        throw UndefinedMetricError("kruskal_wallis: all values tied, H undefined");
    }

    const auto ranks = detail::midranks(pooled);
    double h = 0;
    std::size_t offset = 0;
    for (const auto& g : groups) {
        double rank_sum = 0;
        for (std::size_t i = 0; i < g.size(); ++i) rank_sum += ranks[offset + i];
        offset += g.size();
        h += rank_sum * rank_sum / double(g.size());
    }
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);
    h /= correction;

    StatResult r;
    r.statistic = h;
    r.df = int(groups.size()) - 1;
    r.p_value = detail::chi_square_tail(h, *r.df);
    r.method = "kruskal-wallis";
    return r;
}

struct MannWhitneyOptions {
    std::size_t exact_limit = 12;  // n + m at or below this uses full enumeration
};

// U statistic for sample `a`. Exact two-sided p enumerates every way the
// pooled values can be split between the samples; above the size limit a
// normal approximation with tie and continuity corrections is used.
inline StatResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b,
                                 const MannWhitneyOptions& opts = {}) {
    if (a.empty() || b.empty()) throw ArgumentError("mann_whitney_u: empty sample");
    const std::size_t n = a.size(), m = b.size(), total = n + m;

    std::vector<double> pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    const auto ranks = detail::midranks(pooled);

    double rank_sum_a = 0;
    for (std::size_t i = 0; i < n; ++i) rank_sum_a += ranks[i];
    const double u = rank_sum_a - double(n) * (n + 1) / 2.0;

    StatResult r;
    r.statistic = u;

    if (total <= opts.exact_limit) {
        // Enumerate all C(total, n) index subsets of the pooled mid-ranks.
        const double u_lo = std::min(u, double(n) * m - u);
        std::uint64_t count_extreme = 0, count_total = 0;
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        while (true) {
            double rs = 0;
            for (std::size_t i : idx) rs += ranks[i];
            const double u_split = rs - double(n) * (n + 1) / 2.0;
            ++count_total;
            if (u_split <= u_lo + 1e-12) ++count_extreme;

            // next combination
            std::size_t k = n;
            while (k > 0 && idx[k - 1] == total - n + k - 1) --k;
            if (k == 0) break;
            ++idx[k - 1];
            for (std::size_t j = k; j < n; ++j) idx[j] = idx[j - 1] + 1;
        }
        r.p_value = std::min(1.0, 2.0 * double(count_extreme) / double(count_total));
        r.method = "mann-whitney-exact";
    } else {
        const double mean = double(n) * m / 2.0;
        const double tie_term = detail::tie_cubes(pooled) / (double(total) * (total - 1));
        const double var = double(n) * m / 12.0 * (double(total) + 1.0 - tie_term);
        if (var <= 0) {
            r.p_value = 1.0;
            r.notes.push_back("all values tied; p forced to 1");
        } else {
            const double diff = u - mean;
            const double cc = diff > 0 ? -0.5 : (diff < 0 ? 0.5 : 0.0);
            const double z = (diff + cc) / std::sqrt(var);
            r.p_value = std::clamp(2.0 * (1.0 - detail::normal_cdf(std::abs(z))), 0.0, 1.0);
        }
        r.method = "mann-whitney-normal";
    }
    return r;
}

// Pearson chi-square test of independence on an R x C count table.
template <typename Derived>
StatResult chi_square_independence(const Eigen::MatrixBase<Derived>& table) {
    const Eigen::Index rows = table.rows(), cols = table.cols();
    if (rows < 1 || cols < 1) throw ArgumentError("chi_square_independence: empty table");
    if ((table.array() < 0).any()) {
        throw ArgumentError("chi_square_independence: negative count");
    }

    Eigen::VectorXd row_sum(rows), col_sum(cols);
    for (Eigen::Index i = 0; i < rows; ++i) row_sum[i] = double(table.row(i).sum());
    for (Eigen::Index j = 0; j < cols; ++j) col_sum[j] = double(table.col(j).sum());
    if ((row_sum.array() == 0).any() || (col_sum.array() == 0).any()) {
        throw ArgumentError("chi_square_independence: zero marginal");
    }
    const int df = int(rows - 1) * int(cols - 1);
    if (df < 1) throw ArgumentError("chi_square_independence: df = 0, table too small");

    const double grand = row_sum.sum();
    double chi2 = 0;
    bool low_expected = false;
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            const double expected = row_sum[i] * col_sum[j] / grand;
            if (expected < 5.0) low_expected = true;
            const double diff = double(table(i, j)) - expected;
            chi2 += diff * diff / expected;
        }
    }

    StatResult r;
    r.statistic = chi2;
    r.df = df;
    r.p_value = detail::chi_square_tail(chi2, df);
    r.method = "chi-square";
    if (low_expected) r.notes.push_back("expected count below 5 in at least one cell");
    return r;
}

// Cohen's kappa over two equal-length categorical ratings.
template <typename T>
StatResult cohens_kappa(const std::vector<T>& rater_a, const std::vector<T>& rater_b) {
    if (rater_a.size() != rater_b.size() || rater_a.empty()) {
        throw ArgumentError("cohens_kappa: ratings must be equal-length and non-empty");
    }
    const double n = double(rater_a.size());
    std::map<T, double> freq_a, freq_b;
    double agree = 0;
    for (std::size_t i = 0; i < rater_a.size(); ++i) {
        ++freq_a[rater_a[i]];
        ++freq_b[rater_b[i]];
        if (rater_a[i] == rater_b[i]) ++agree;
    }
    const double p_o = agree / n;
    double p_e = 0;
    for (const auto& [cat, ca] : freq_a) {
        auto it = freq_b.find(cat);
        if (it != freq_b.end()) p_e += (ca / n) * (it->second / n);
    }
    if (p_e >= 1.0) {
        throw UndefinedMetricError("cohens_kappa: both raters constant and equal, kappa undefined");
    }
    StatResult r;
    r.statistic = (p_o - p_e) / (1.0 - p_e);
    r.method = "cohens-kappa";
    return r;
}

// Sample Pearson correlation.
template <typename DerivedX, typename DerivedY>
StatResult pearson_r(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw ArgumentError("pearson_r: need equal-length inputs with >= 2 values");
    }
    const double mx = x.template cast<double>().mean();
    const double my = y.template cast<double>().mean();
    double sxx = 0, syy = 0, sxy = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double dx = double(x(i)) - mx;
        const double dy = double(y(i)) - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0 || syy == 0) {
        throw UndefinedMetricError("pearson_r: zero variance");
    }
    StatResult r;
    r.statistic = sxy / std::sqrt(sxx * syy);
    r.method = "pearson-r";
    return r;
}

} // namespace refinery
