#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "disc/error.hpp"
#include "disc/tensor.hpp"

namespace disc {

/// Plain row-major matrix for the non-differentiable parts of the pipeline
/// (classical clustering, metrics, PCA).
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> v) : rows(r), cols(c), values(std::move(v)) {
        if (values.size() != rows * cols) throw ShapeError("matrix data does not match its extents");
    }

    double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
    std::span<const double> row(std::size_t i) const { return std::span<const double>(values).subspan(i * cols, cols); }
    std::span<double> row(std::size_t i) { return std::span<double>(values).subspan(i * cols, cols); }

    static Matrix from_tensor(const Tensor& t) {
        if (t.rank() != 2) throw ShapeError("matrix from tensor of shape " + shape_str(t.shape()));
        return Matrix(t.dim(0), t.dim(1), std::vector<double>(t.data().begin(), t.data().end()));
    }
    Tensor to_tensor(bool requires_grad = false) const { return Tensor::from({rows, cols}, values, requires_grad); }
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace disc
