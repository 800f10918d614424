#pragma once

// Cluster assignment hardening head (Student-t soft assignment, sharpened
// target distribution, KL loss) and the classical algorithms used for
// centroid initialization and baselines: k-means++ / Lloyd and agglomerative
// clustering with average, complete or ward linkage.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "disc/error.hpp"
#include "disc/matrix.hpp"
#include "disc/ops.hpp"
#include "disc/tensor.hpp"

namespace disc {

struct ClusterHead {
    Tensor centroids;  // [k x d], trainable
    double gamma = 0.1;

    ClusterHead() = default;
    ClusterHead(const Matrix& init, double gamma_) : centroids(init.to_tensor(true)), gamma(gamma_) { validate(); }

    std::size_t k() const { return centroids.dim(0); }
    std::size_t dim() const { return centroids.dim(1); }

    void validate() const {
        if (centroids.rank() != 2 || centroids.dim(0) < 2) throw ConfigError("cluster head needs k >= 2 centroids");
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
        for (double v : centroids.data()) {
            if (!std::isfinite(v)) throw NumericError("non-finite centroid");
        }
    }
};

/// q_ij = (1 + |z_i - mu_j|^2)^-1 / sum_j' (1 + |z_i - mu_j'|^2)^-1
inline Tensor soft_assign(const Tensor& centroids, const Tensor& z) {
    if (centroids.rank() != 2 || centroids.dim(0) < 2) throw ConfigError("soft_assign needs k >= 2 centroids");
    if (z.rank() != 2 || z.dim(0) == 0) throw ShapeError("soft_assign needs a non-empty [m x d] embedding matrix");
    return row_normalize(reciprocal(add_scalar(sq_dist(z, centroids), 1.0)));
}

inline Tensor soft_assign(const ClusterHead& head, const Tensor& z) { return soft_assign(head.centroids, z); }

/// p_ij = (q_ij^2 / f_j) / sum_j' (q_ij'^2 / f_j'), f_j = sum_i q_ij.
/// The result is a constant: no gradient flows through it.
inline Matrix target_distribution(const Matrix& q) {
    const std::size_t m = q.rows, k = q.cols;
    std::vector<double> freq(k, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) freq[j] += q(i, j);
    Matrix p(m, k);
    for (std::size_t i = 0; i < m; ++i) {
        double norm = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            p(i, j) = q(i, j) * q(i, j) / freq[j];
            norm += p(i, j);
        }
        for (std::size_t j = 0; j < k; ++j) p(i, j) /= norm;
    }
    return p;
}

inline Matrix target_distribution(const Tensor& q) { return target_distribution(Matrix::from_tensor(q)); }

/// KL(P || Q) = sum_ij p_ij log(p_ij / q_ij); gradient reaches Q only.
inline Tensor kl_loss(const Matrix& p, const Tensor& q) { return kl_div(p.to_tensor(), q); }
inline Tensor kl_loss(const Tensor& p, const Tensor& q) { return kl_div(p, q); }

/// L = gamma * L_C + L_AE
inline Tensor joint_loss(const Tensor& clustering, const Tensor& autoencoder, double gamma) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
    return add(scale(clustering, gamma), autoencoder);
}

/// Index of the row maximum; ties go to the smallest index.
inline int argmax_row(std::span<const double> row) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j) {
        if (row[j] > row[best]) best = j;
    }
    return static_cast<int>(best);
}

inline std::vector<int> hard_labels(const Matrix& q) {
    std::vector<int> out(q.rows);
    for (std::size_t i = 0; i < q.rows; ++i) out[i] = argmax_row(q.row(i));
    return out;
}

/// Nearest centroid per row (ties to the smallest index).
inline std::vector<int> nearest_centroid(const Matrix& z, const Matrix& centroids) {
    std::vector<int> out(z.rows);
    for (std::size_t i = 0; i < z.rows; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < centroids.rows; ++j) {
            const double d = squared_distance(z.row(i), centroids.row(j));
            if (d < best) {
                best = d;
                out[i] = static_cast<int>(j);
            }
        }
    }
    return out;
}

/// Member mean of each cluster; labels must lie in [0, k).
inline Matrix cluster_means(const Matrix& z, const std::vector<int>& labels, std::size_t k) {
    Matrix c(k, z.cols);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < z.rows; ++i) {
        const auto l = static_cast<std::size_t>(labels[i]);
        if (l >= k) throw ShapeError("cluster label out of range");
        ++counts[l];
        for (std::size_t f = 0; f < z.cols; ++f) c(l, f) += z(i, f);
    }
    for (std::size_t j = 0; j < k; ++j) {
        if (counts[j] == 0) throw NumericError("cluster " + std::to_string(j) + " has no members");
        for (std::size_t f = 0; f < z.cols; ++f) c(j, f) /= static_cast<double>(counts[j]);
    }
    return c;
}

struct KMeansResult {
    Matrix centroids;
    std::vector<int> labels;
    double inertia = 0.0;
    std::vector<double> inertia_history;  // after each assignment step
    std::size_t iterations = 0;
    bool converged = false;
};

struct KMeansOptions {
    std::size_t max_iterations = 300;
    std::uint64_t seed = 0;
    // Independent seedings; the run with the lowest inertia wins (first on ties).
    std::size_t restarts = 10;
};

namespace detail {

inline KMeansResult kmeans_once(const Matrix& z, std::size_t k, std::size_t max_iterations, std::mt19937_64& rng) {
    const std::size_t m = z.rows;

    KMeansResult res;
    res.centroids = Matrix(k, z.cols);
    std::vector<double> d2(m, std::numeric_limits<double>::infinity());
    std::size_t first = std::uniform_int_distribution<std::size_t>(0, m - 1)(rng);
    std::copy(z.row(first).begin(), z.row(first).end(), res.centroids.row(0).begin());
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            d2[i] = std::min(d2[i], squared_distance(z.row(i), res.centroids.row(c - 1)));
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            double u = std::uniform_real_distribution<double>(0.0, total)(rng);
            pick = m - 1;
            for (std::size_t i = 0; i < m; ++i) {
                if (u < d2[i]) {
                    pick = i;
                    break;
                }
                u -= d2[i];
            }
        } else {
            pick = std::uniform_int_distribution<std::size_t>(0, m - 1)(rng);
        }
        std::copy(z.row(pick).begin(), z.row(pick).end(), res.centroids.row(c).begin());
    }

    res.labels.assign(m, -1);
    std::vector<double> dist(m, 0.0);
    for (std::size_t it = 0; it < max_iterations; ++it) {
        bool changed = false;
        double inertia = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            int best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < k; ++j) {
                const double d = squared_distance(z.row(i), res.centroids.row(j));
                if (d < bd) {
                    bd = d;
                    best = static_cast<int>(j);
                }
            }
            changed = changed || best != res.labels[i];
            res.labels[i] = best;
            dist[i] = bd;
            inertia += bd;
        }
        res.inertia_history.push_back(inertia);
        res.iterations = it + 1;
        if (!changed) {
            res.converged = true;
            break;
        }

        std::vector<std::size_t> counts(k, 0);
        Matrix sums(k, z.cols);
        for (std::size_t i = 0; i < m; ++i) {
            const auto l = static_cast<std::size_t>(res.labels[i]);
            ++counts[l];
            for (std::size_t f = 0; f < z.cols; ++f) sums(l, f) += z(i, f);
        }
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] == 0) {
                std::size_t far = 0;
                for (std::size_t i = 1; i < m; ++i) {
                    if (dist[i] > dist[far]) far = i;
                }
                std::copy(z.row(far).begin(), z.row(far).end(), res.centroids.row(j).begin());
                dist[far] = 0.0;
                continue;
            }
            for (std::size_t f = 0; f < z.cols; ++f) res.centroids(j, f) = sums(j, f) / static_cast<double>(counts[j]);
        }
    }
    res.inertia = 0.0;
    for (std::size_t i = 0; i < m; ++i) res.inertia += squared_distance(z.row(i), res.centroids.row(res.labels[i]));
    return res;
}

}  // namespace detail

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing, repeated `restarts` times from one RNG stream. Empty clusters
/// are re-seeded at the point farthest from its current centroid.
inline KMeansResult kmeans(const Matrix& z, std::size_t k, const KMeansOptions& opts = {}) {
    if (k == 0) throw ConfigError("k must be >= 1");
    if (z.rows < k) throw ConfigError("k-means needs at least k points");
    if (opts.restarts == 0) throw ConfigError("k-means restarts must be >= 1");
    std::mt19937_64 rng(opts.seed);
    KMeansResult best = detail::kmeans_once(z, k, opts.max_iterations, rng);
    for (std::size_t r = 1; r < opts.restarts; ++r) {
        KMeansResult run = detail::kmeans_once(z, k, opts.max_iterations, rng);
        if (run.inertia < best.inertia) best = std::move(run);
    }
    return best;
}

enum class Linkage { average, complete, ward };

inline Linkage parse_linkage(std::string_view name) {
    if (name == "average") return Linkage::average;
    if (name == "complete") return Linkage::complete;
    if (name == "ward") return Linkage::ward;
    throw ConfigError("unknown linkage '" + std::string(name) + "' (valid: average, complete, ward)");
}

/// Relabels so cluster ids appear in order of each cluster's first member.
inline std::vector<int> canonical_labels(const std::vector<int>& labels) {
    std::vector<int> map;
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto l = static_cast<std::size_t>(labels[i]);
        if (l >= map.size()) map.resize(l + 1, -1);
        if (map[l] < 0) map[l] = static_cast<int>(std::count_if(map.begin(), map.end(), [](int v) { return v >= 0; }));
        out[i] = map[l];
    }
    return out;
}

/// Bottom-up clustering with Lance-Williams updates until k clusters remain.
/// Average and complete linkage act on Euclidean distances, ward on squared
/// ones. The closest pair is merged first; ties go to the lexicographically
/// smallest (i, j). Returned labels are canonical (see canonical_labels).
inline std::vector<int> agglomerative(const Matrix& z, std::size_t k, Linkage linkage) {
    const std::size_t m = z.rows;
    if (k == 0) throw ConfigError("k must be >= 1");
    if (m < k) throw ConfigError("agglomerative clustering needs at least k points");

    // Condensed upper triangle, i < j.
    auto at = [m](std::size_t i, std::size_t j) { return i * m - i * (i + 1) / 2 + (j - i - 1); };
    std::vector<double> dist(m * (m - 1) / 2);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) {
            const double d2 = squared_distance(z.row(i), z.row(j));
            dist[at(i, j)] = linkage == Linkage::ward ? d2 : std::sqrt(d2);
        }
    auto d = [&](std::size_t a, std::size_t b) -> double& { return a < b ? dist[at(a, b)] : dist[at(b, a)]; };

    std::vector<std::size_t> size(m, 1);
    std::vector<bool> active(m, true);
    std::vector<std::size_t> parent(m);
    for (std::size_t i = 0; i < m; ++i) parent[i] = i;

    // Nearest active neighbour with a larger index, for every active row.
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> nn_dist(m, inf);
    std::vector<std::size_t> nn(m, m);
    auto rescan = [&](std::size_t i) {
        nn_dist[i] = inf;
        nn[i] = m;
        for (std::size_t j = i + 1; j < m; ++j) {
            if (active[j] && d(i, j) < nn_dist[i]) {
                nn_dist[i] = d(i, j);
                nn[i] = j;
            }
        }
    };
    for (std::size_t i = 0; i < m; ++i) rescan(i);

    for (std::size_t remaining = m; remaining > k; --remaining) {
        std::size_t a = m;
        for (std::size_t i = 0; i < m; ++i) {
            if (active[i] && nn[i] < m && (a == m || nn_dist[i] < nn_dist[a])) a = i;
        }
        const std::size_t b = nn[a];
        const double dab = d(a, b);
        const double na = static_cast<double>(size[a]), nb = static_cast<double>(size[b]);
        for (std::size_t c = 0; c < m; ++c) {
            if (!active[c] || c == a || c == b) continue;
            const double dac = d(a, c), dbc = d(b, c);
            double merged = 0.0;
            switch (linkage) {
                case Linkage::average:
                    merged = (na * dac + nb * dbc) / (na + nb);
                    break;
                case Linkage::complete:
                    merged = std::max(dac, dbc);
                    break;
                case Linkage::ward: {
                    const double nc = static_cast<double>(size[c]);
                    merged = ((na + nc) * dac + (nb + nc) * dbc - nc * dab) / (na + nb + nc);
                    break;
                }
            }
            d(a, c) = merged;
        }
        active[b] = false;
        size[a] += size[b];
        parent[b] = a;

        for (std::size_t c = 0; c < m; ++c) {
            if (!active[c]) continue;
            if (c == a || nn[c] == a || nn[c] == b) {
                rescan(c);
            } else if (c < a && (d(c, a) < nn_dist[c] || (d(c, a) == nn_dist[c] && a < nn[c]))) {
                nn_dist[c] = d(c, a);
                nn[c] = a;
            }
        }
    }

    std::vector<int> labels(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t r = i;
        while (parent[r] != r) r = parent[r];
        labels[i] = static_cast<int>(r);
    }
    return canonical_labels(labels);
}

}  // namespace disc
