#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "disc/error.hpp"
#include "disc/matrix.hpp"

namespace disc {

struct SymmetricEigen {
    std::vector<double> values;  // descending
    Matrix vectors;              // column j pairs with values[j]
};

/// Cyclic Jacobi rotations on a symmetric matrix. Deterministic: fixed sweep
/// order, stable sort of the eigenvalues.
inline SymmetricEigen jacobi_eigen(Matrix a, std::size_t max_sweeps = 100) {
    if (a.rows != a.cols) throw ShapeError("jacobi_eigen: matrix must be square");
    const std::size_t n = a.rows;
    Matrix v(n, n);
    for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

    double scale = 0.0;
    for (double x : a.values) scale += x * x;
    const double tol = 1e-26 * std::max(scale, 1e-300);
    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off <= tol) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
    SymmetricEigen out;
    out.vectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.values.push_back(a(order[j], order[j]));
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
    }
    return out;
}

struct PcaResult {
    Matrix projected;                 // m x out_dim
    Matrix components;                // d x out_dim, unit columns
    std::vector<double> mean;         // d
    std::vector<double> eigenvalues;  // all d, descending
    std::vector<std::string> warnings;
};

/// Centers z, eigendecomposes its covariance and projects onto the leading
/// out_dim eigenvectors. Each component's largest-magnitude entry is made
/// positive. Directions beyond the numerical rank are zeroed with a warning.
inline PcaResult pca_project(const Matrix& z, std::size_t out_dim = 50) {
    const std::size_t m = z.rows, d = z.cols;
    if (m < 2) throw ConfigError("PCA needs at least 2 samples");
    if (out_dim == 0 || out_dim > std::min(m, d)) {
        throw ConfigError("PCA output dimension must lie in [1, min(samples, features)]");
    }
    PcaResult r;
    r.mean.assign(d, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t f = 0; f < d; ++f) r.mean[f] += z(i, f);
    for (auto& x : r.mean) x /= static_cast<double>(m);
    Matrix centered(m, d);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t f = 0; f < d; ++f) centered(i, f) = z(i, f) - r.mean[f];
    Matrix cov(d, d);
    for (std::size_t i = 0; i < m; ++i) {
        auto row = centered.row(i);
        for (std::size_t a = 0; a < d; ++a) {
            if (row[a] == 0.0) continue;
            for (std::size_t b = a; b < d; ++b) cov(a, b) += row[a] * row[b];
        }
    }
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a; b < d; ++b) {
            cov(a, b) /= static_cast<double>(m - 1);
            cov(b, a) = cov(a, b);
        }

    SymmetricEigen eig = jacobi_eigen(cov);
    r.eigenvalues = eig.values;
    const double top = std::max(eig.values.empty() ? 0.0 : eig.values[0], 0.0);
    r.components = Matrix(d, out_dim);
    std::size_t dropped = 0;
    for (std::size_t j = 0; j < out_dim; ++j) {
        if (!(eig.values[j] > 1e-12 * top) || top == 0.0) {
            ++dropped;
            continue;
        }
        std::size_t big = 0;
        for (std::size_t i = 1; i < d; ++i) {
            if (std::abs(eig.vectors(i, j)) > std::abs(eig.vectors(big, j))) big = i;
        }
        const double sign = eig.vectors(big, j) < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < d; ++i) r.components(i, j) = sign * eig.vectors(i, j);
    }
    if (dropped) {
        r.warnings.push_back(std::to_string(dropped) + " requested components exceed the data rank; padded with zeros");
    }
    r.projected = Matrix(m, out_dim);
    for (std::size_t i = 0; i < m; ++i) {
        auto row = centered.row(i);
        for (std::size_t j = 0; j < out_dim; ++j) {
            double acc = 0.0;
            for (std::size_t f = 0; f < d; ++f) acc += row[f] * r.components(f, j);
            r.projected(i, j) = acc;
        }
    }
    return r;
}

}  // namespace disc
