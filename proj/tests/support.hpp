// Shared fixtures and independent oracles. Everything here recomputes
// expected values from first principles so library code is never checked
// against itself.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace support {

class TempDir {
public:
    TempDir() {
        std::string tpl = (std::filesystem::temp_directory_path() / "refinery-XXXXXX").string();
        if (!mkdtemp(tpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p);
    out << content;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Adjusted Rand index; noise (-1) counts as an ordinary category.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    const std::size_t n = a.size();
    std::map<std::pair<int, int>, double> cell;
    std::map<int, double> row, col;
    for (std::size_t i = 0; i < n; ++i) {
        ++cell[{a[i], b[i]}];
        ++row[a[i]];
        ++col[b[i]];
    }
    auto comb2 = [](double x) { return x * (x - 1) / 2.0; };
    double sum_cell = 0, sum_row = 0, sum_col = 0;
    for (auto& [k, v] : cell) sum_cell += comb2(v);
    for (auto& [k, v] : row) sum_row += comb2(v);
    for (auto& [k, v] : col) sum_col += comb2(v);
    const double expected = sum_row * sum_col / comb2(double(n));
    const double max_index = (sum_row + sum_col) / 2.0;
    if (max_index == expected) return 1.0;
    return (sum_cell - expected) / (max_index - expected);
}

// ---- metric oracles: plain loops over std::vector, no Eigen reductions ----

inline double euclid(const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0;
    for (std::size_t d = 0; d < x.size(); ++d) s += (x[d] - y[d]) * (x[d] - y[d]);
    return std::sqrt(s);
}

inline double silhouette_oracle(const std::vector<std::vector<double>>& pts,
                                const std::vector<int>& labels) {
    std::map<int, std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= 0) clusters[labels[i]].push_back(i);
    }
    double total = 0;
    std::size_t counted = 0;
    for (auto& [cid, members] : clusters) {
        for (std::size_t i : members) {
            ++counted;
            if (members.size() == 1) continue;  // singleton contributes s = 0
            double a = 0;
            for (std::size_t j : members) {
                if (j != i) a += euclid(pts[i], pts[j]);
            }
            a /= double(members.size() - 1);
            double b = std::numeric_limits<double>::infinity();
            for (auto& [other, oms] : clusters) {
                if (other == cid) continue;
                double mean = 0;
                for (std::size_t j : oms) mean += euclid(pts[i], pts[j]);
                b = std::min(b, mean / double(oms.size()));
            }
            total += (b - a) / std::max(a, b);
        }
    }
    return total / double(counted);
}

inline double davies_bouldin_oracle(const std::vector<std::vector<double>>& pts,
                                    const std::vector<int>& labels) {
    std::map<int, std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= 0) clusters[labels[i]].push_back(i);
    }
    const std::size_t dim = pts.front().size();
    std::map<int, std::vector<double>> centroid;
    std::map<int, double> sigma;
    for (auto& [cid, members] : clusters) {
        std::vector<double> c(dim, 0.0);
        for (std::size_t i : members) {
            for (std::size_t d = 0; d < dim; ++d) c[d] += pts[i][d];
        }
        for (double& v : c) v /= double(members.size());
        double s = 0;
        for (std::size_t i : members) s += euclid(pts[i], c);
        centroid[cid] = std::move(c);
        sigma[cid] = s / double(members.size());
    }
    double db = 0;
    for (auto& [i, ci] : centroid) {
        double worst = 0;
        for (auto& [j, cj] : centroid) {
            if (i == j) continue;
            worst = std::max(worst, (sigma[i] + sigma[j]) / euclid(ci, cj));
        }
        db += worst;
    }
    return db / double(centroid.size());
}

// ---- Mann-Whitney enumeration oracle (pairwise U, recursive splits) ----

inline double pairwise_u(const std::vector<double>& a, const std::vector<double>& b) {
    double u = 0;
    for (double x : a) {
        for (double y : b) {
            if (x > y) u += 1;
            else if (x == y) u += 0.5;
        }
    }
    return u;
}

inline double mwu_exact_p_oracle(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    const std::size_t n = a.size(), total = pooled.size();
    const double nm = double(n) * double(total - n);
    const double u_obs = pairwise_u(a, b);
    const double u_lo = std::min(u_obs, nm - u_obs);

    std::uint64_t extreme = 0, splits = 0;
    std::vector<std::size_t> pick;
    auto recurse = [&](auto&& self, std::size_t next) -> void {
        if (pick.size() == n) {
            std::vector<double> xa, xb;
            std::vector<bool> in_a(total, false);
            for (std::size_t i : pick) in_a[i] = true;
            for (std::size_t i = 0; i < total; ++i) (in_a[i] ? xa : xb).push_back(pooled[i]);
            ++splits;
            if (pairwise_u(xa, xb) <= u_lo + 1e-12) ++extreme;
            return;
        }
        for (std::size_t i = next; i < total; ++i) {
            pick.push_back(i);
            self(self, i + 1);
            pick.pop_back();
        }
    };
    recurse(recurse, 0);
    return std::min(1.0, 2.0 * double(extreme) / double(splits));
}

// ---- exhaustive MST oracle via Prufer sequences (n <= 6) ----

inline double mst_weight_oracle(const Eigen::MatrixXd& w) {
    const int n = int(w.rows());
    if (n < 2) return 0;
    if (n == 2) return w(0, 1);
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> prufer(std::size_t(n - 2), 0);
    while (true) {
        // decode the Prufer sequence into tree edges
        std::vector<int> degree(std::size_t(n), 1);
        for (int v : prufer) ++degree[std::size_t(v)];
        double weight = 0;
        std::vector<int> deg = degree;
        for (int v : prufer) {
            for (int leaf = 0; leaf < n; ++leaf) {
                if (deg[std::size_t(leaf)] == 1) {
                    weight += w(leaf, v);
                    --deg[std::size_t(leaf)];
                    --deg[std::size_t(v)];
                    break;
                }
            }
        }
        int u = -1, v = -1;
        for (int i = 0; i < n; ++i) {
            if (deg[std::size_t(i)] == 1) (u < 0 ? u : v) = i;
        }
        weight += w(u, v);
        best = std::min(best, weight);

        // next sequence in base-n counting
        std::size_t k = prufer.size();
        while (k > 0 && prufer[k - 1] == n - 1) prufer[--k] = 0;
        if (k == 0) break;
        ++prufer[k - 1];
    }
    return best;
}

// ---- densest-window brute force over every candidate start day ----

struct WindowOracle {
    std::int64_t start_day;  // earliest maximizer among in-range starts
    std::int64_t count;      // maximum over every conceivable start
};

inline WindowOracle densest_window_oracle(const std::vector<std::int64_t>& days,
                                          std::int64_t window) {
    const auto lo = *std::min_element(days.begin(), days.end());
    const auto hi = *std::max_element(days.begin(), days.end());
    auto count_at = [&](std::int64_t s) {
        std::int64_t c = 0;
        for (auto d : days) {
            if (d >= s && d <= s + window - 1) ++c;
        }
        return c;
    };
    WindowOracle best{lo, -1};
    for (std::int64_t s = lo; s <= hi; ++s) {
        const auto c = count_at(s);
        if (c > best.count) best = {s, c};
    }
    // starts before the first post day can only see a suffix of the first
    // in-range window, so they never beat the count found above
    for (std::int64_t s = lo - window + 1; s < lo; ++s) {
        if (count_at(s) > best.count) best.count = count_at(s);
    }
    return best;
}

// ---- synthetic data ----

inline Eigen::MatrixXd gaussian_blobs(const std::vector<std::vector<double>>& centers,
                                      std::size_t per_blob, double sigma, std::uint64_t seed,
                                      std::vector<int>* labels_out = nullptr) {
    const std::size_t dim = centers.front().size();
    Eigen::MatrixXd pts(centers.size() * per_blob, dim);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, sigma);
    Eigen::Index row = 0;
    for (std::size_t c = 0; c < centers.size(); ++c) {
        for (std::size_t i = 0; i < per_blob; ++i, ++row) {
            for (std::size_t d = 0; d < dim; ++d) {
                pts(row, Eigen::Index(d)) = centers[c][d] + gauss(rng);
            }
            if (labels_out) labels_out->push_back(int(c));
        }
    }
    return pts;
}

inline std::vector<std::vector<double>> to_rows(const Eigen::MatrixXd& m) {
    std::vector<std::vector<double>> rows(std::size_t(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        rows[std::size_t(i)].assign(m.row(i).begin(), m.row(i).end());
    }
    return rows;
}

// Unit vectors in 2-D with exact pairwise cosine control.
inline Eigen::RowVector2d unit_at(double radians) {
    return {std::cos(radians), std::sin(radians)};
}

} // namespace support
