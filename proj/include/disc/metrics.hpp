#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <vector>

#include "disc/error.hpp"
#include "disc/matrix.hpp"

namespace disc {

struct Assignment {
    std::vector<std::size_t> column_of_row;  // perfect matching row -> column
    double cost = 0.0;
};

/// Minimum-cost perfect matching on a square cost matrix (Kuhn-Munkres with
/// potentials, O(n^3)).
inline Assignment hungarian(const Matrix& cost) {
    if (cost.rows != cost.cols) throw ShapeError("hungarian: cost matrix must be square (pad rectangular inputs)");
    for (double v : cost.values) {
        if (!std::isfinite(v)) throw NumericError("hungarian: non-finite cost entry");
    }
    const std::size_t n = cost.rows;
    Assignment out;
    if (n == 0) return out;
    constexpr double inf = std::numeric_limits<double>::infinity();
    // 1-based arrays; index 0 is the virtual root column.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<std::size_t> row_of_col(n + 1, 0), way(n + 1, 0);
    std::vector<bool> used(n + 1);
    for (std::size_t i = 1; i <= n; ++i) {
        row_of_col[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), false);
        do {
            used[j0] = true;
            const std::size_t i0 = row_of_col[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (row_of_col[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    out.column_of_row.assign(n, 0);
    for (std::size_t j = 1; j <= n; ++j) out.column_of_row[row_of_col[j] - 1] = j - 1;
    for (std::size_t i = 0; i < n; ++i) out.cost += cost(i, out.column_of_row[i]);
    return out;
}

/// Class x cluster count table over the distinct values that occur.
struct Contingency {
    std::vector<int> classes;   // sorted distinct true labels (row ids)
    std::vector<int> clusters;  // sorted distinct cluster ids (column ids)
    Matrix table;
    std::size_t n = 0;
};

inline Contingency contingency(const std::vector<int>& truth, const std::vector<int>& pred) {
    if (truth.size() != pred.size()) throw ShapeError("label vectors differ in length");
    if (truth.empty()) throw ConfigError("cannot evaluate an empty labeling");
    Contingency c;
    std::map<int, std::size_t> rows, cols;
    for (int t : truth) rows.emplace(t, 0);
    for (int p : pred) cols.emplace(p, 0);
    for (auto& [id, idx] : rows) {
        idx = c.classes.size();
        c.classes.push_back(id);
    }
    for (auto& [id, idx] : cols) {
        idx = c.clusters.size();
        c.clusters.push_back(id);
    }
    c.table = Matrix(c.classes.size(), c.clusters.size());
    for (std::size_t i = 0; i < truth.size(); ++i) c.table(rows[truth[i]], cols[pred[i]]) += 1.0;
    c.n = truth.size();
    return c;
}

struct AccuracyResult {
    double acc = 0.0;
    std::map<int, int> mapping;  // cluster id -> class id; clusters left unmatched are absent
};

/// max over one-to-one cluster->class maps of the fraction of agreeing
/// samples, solved by Hungarian matching on the negated (zero-padded)
/// contingency table.
inline AccuracyResult clustering_accuracy(const std::vector<int>& truth, const std::vector<int>& pred) {
    Contingency c = contingency(truth, pred);
    const std::size_t n = std::max(c.classes.size(), c.clusters.size());
    Matrix cost(n, n, 0.0);
    for (std::size_t i = 0; i < c.classes.size(); ++i)
        for (std::size_t j = 0; j < c.clusters.size(); ++j) cost(j, i) = -c.table(i, j);
    Assignment a = hungarian(cost);
    AccuracyResult r;
    double hits = 0.0;
    for (std::size_t j = 0; j < c.clusters.size(); ++j) {
        const std::size_t cls = a.column_of_row[j];
        if (cls < c.classes.size()) {
            r.mapping[c.clusters[j]] = c.classes[cls];
            hits += c.table(cls, j);
        }
    }
    r.acc = hits / static_cast<double>(c.n);
    return r;
}

/// 2 I(y, c) / (H(y) + H(c)), natural log. Two single-cluster partitions
/// score 1.
inline double nmi(const std::vector<int>& truth, const std::vector<int>& pred) {
    Contingency c = contingency(truth, pred);
    const double n = static_cast<double>(c.n);
    std::vector<double> row(c.classes.size(), 0.0), col(c.clusters.size(), 0.0);
    for (std::size_t i = 0; i < row.size(); ++i)
        for (std::size_t j = 0; j < col.size(); ++j) {
            row[i] += c.table(i, j);
            col[j] += c.table(i, j);
        }
    auto entropy = [n](const std::vector<double>& counts) {
        double h = 0.0;
        for (double k : counts) {
            if (k > 0.0) h -= k / n * std::log(k / n);
        }
        return h;
    };
    const double hy = entropy(row), hc = entropy(col);
    if (hy + hc == 0.0) return 1.0;
    double mi = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i)
        for (std::size_t j = 0; j < col.size(); ++j) {
            const double nij = c.table(i, j);
            if (nij > 0.0) mi += nij / n * std::log(nij * n / (row[i] * col[j]));
        }
    return std::clamp(2.0 * mi / (hy + hc), 0.0, 1.0);
}

struct EvalReport {
    double acc = 0.0;
    double nmi = 0.0;
    std::map<int, int> mapping;
    std::map<int, std::size_t> cluster_sizes;
    Contingency table;
};

inline EvalReport evaluate(const std::vector<int>& truth, const std::vector<int>& pred) {
    EvalReport r;
    auto a = clustering_accuracy(truth, pred);
    r.acc = a.acc;
    r.mapping = std::move(a.mapping);
    r.nmi = nmi(truth, pred);
    for (int p : pred) ++r.cluster_sizes[p];
    r.table = contingency(truth, pred);
    return r;
}

}  // namespace disc
