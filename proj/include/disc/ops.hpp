#pragma once

// Differentiable tensor operations. Binary ops never broadcast: shapes must
// match exactly, and expansion is spelled out with repeat_rows().

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "disc/error.hpp"
#include "disc/tensor.hpp"

namespace disc {

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

inline bool wants_grad(const std::shared_ptr<Node>& n) { return n->requires_grad; }

}  // namespace detail

inline Tensor Tensor::reshape(Shape new_shape) const {
    if (numel(new_shape) != size()) {
        throw ShapeError("reshape from " + shape_str(shape()) + " to " + shape_str(new_shape));
    }
    return detail::make_result(
        std::move(new_shape), node().value, {*this},
        [](detail::Node& self) {
            auto& p = *self.parents[0];
            auto& g = p.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        },
        "reshape");
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
    return detail::make_result(
        a.shape(), std::move(out), {a, b},
        [](detail::Node& self) {
            for (auto& p : self.parents) {
                if (!p->requires_grad) continue;
                auto& g = p->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
        },
        "add");
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
    return detail::make_result(
        a.shape(), std::move(out), {a, b},
        [](detail::Node& self) {
            for (std::size_t k = 0; k < 2; ++k) {
                auto& p = self.parents[k];
                if (!p->requires_grad) continue;
                const double sign = k == 0 ? 1.0 : -1.0;
                auto& g = p->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
            }
        },
        "sub");
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
    return detail::make_result(
        a.shape(), std::move(out), {a, b},
        [](detail::Node& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            if (pa.requires_grad) {
                auto& g = pa.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
            }
            if (pb.requires_grad) {
                auto& g = pb.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
            }
        },
        "mul");
}

inline Tensor sigmoid(const Tensor& a) {
    std::vector<double> out(a.size());
    auto x = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
    return detail::make_result(
        a.shape(), std::move(out), {a},
        [](detail::Node& self) {
            auto& g = self.parents[0]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double s = self.value[i];
                g[i] += self.grad[i] * s * (1.0 - s);
            }
        },
        "sigmoid");
}

inline Tensor tanh(const Tensor& a) {
    std::vector<double> out(a.size());
    auto x = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x[i]);
    return detail::make_result(
        a.shape(), std::move(out), {a},
        [](detail::Node& self) {
            auto& g = self.parents[0]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double t = self.value[i];
                g[i] += self.grad[i] * (1.0 - t * t);
            }
        },
        "tanh");
}

enum class Elementwise { add, sub, mul, sigmoid, tanh };

/// Single entry point over the elementwise family; unary ops ignore `b`.
inline Tensor elementwise(Elementwise op, const Tensor& a, const std::optional<Tensor>& b = std::nullopt) {
    auto rhs = [&]() -> const Tensor& {
        if (!b) throw ShapeError("binary elementwise op needs two operands");
        return *b;
    };
    switch (op) {
        case Elementwise::add:
            return add(a, rhs());
        case Elementwise::sub:
            return sub(a, rhs());
        case Elementwise::mul:
            return mul(a, rhs());
        case Elementwise::sigmoid:
            return sigmoid(a);
        case Elementwise::tanh:
            return tanh(a);
    }
    throw ConfigError("unknown elementwise op");
}

/// a * s for a constant s.
inline Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.size());
    auto x = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * s;
    return detail::make_result(
        a.shape(), std::move(out), {a},
        [s](detail::Node& self) {
            auto& g = self.parents[0]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
        },
        "scale");
}

/// a + s for a constant s.
inline Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.size());
    auto x = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + s;
    return detail::make_result(
        a.shape(), std::move(out), {a},
        [](detail::Node& self) {
            auto& g = self.parents[0]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        },
        "add_scalar");
}

/// 1 - a
inline Tensor one_minus(const Tensor& a) { return add_scalar(scale(a, -1.0), 1.0); }

inline Tensor reciprocal(const Tensor& a) {
    std::vector<double> out(a.size());
    auto x = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / x[i];
    return detail::make_result(
        a.shape(), std::move(out), {a},
        [](detail::Node& self) {
            auto& g = self.parents[0]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i] * self.value[i] * self.value[i];
        },
        "reciprocal");
}

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double x : a.data()) s += x;
    return detail::make_result(
        {}, {s}, {a},
        [](detail::Node& self) {
            auto& g = self.parents[0]->grad_buffer();
            for (auto& v : g) v += self.grad[0];
        },
        "sum");
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

/// [m x k] . [k x n] -> [m x n]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n, 0.0);
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double xv = x[i * k + p];
            if (xv == 0.0) continue;
            const double* brow = y.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += xv * brow[j];
        }
    }
    return detail::make_result(
        {m, n}, std::move(out), {a, b},
        [m, k, n](detail::Node& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            const double* go = self.grad.data();
            if (pa.requires_grad) {
                auto& ga = pa.grad_buffer();
                std::vector<double> bt(n * k);  // b transposed to [n x k]
                for (std::size_t p = 0; p < k; ++p)
                    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = pb.value[p * n + j];
                for (std::size_t i = 0; i < m; ++i) {
                    double* grow = ga.data() + i * k;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double g = go[i * n + j];
                        if (g == 0.0) continue;
                        const double* brow = bt.data() + j * k;
                        for (std::size_t p = 0; p < k; ++p) grow[p] += g * brow[p];
                    }
                }
            }
            if (pb.requires_grad) {
                auto& gb = pb.grad_buffer();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        const double av = pa.value[i * k + p];
                        if (av == 0.0) continue;
                        double* grow = gb.data() + p * n;
                        for (std::size_t j = 0; j < n; ++j) grow[j] += av * go[i * n + j];
                    }
                }
            }
        },
        "matmul");
}

/// Same-padded 1D convolution (cross-correlation, as in every NN library).
/// input [batch x c_in x length] or [c_in x length]; kernels [c_out x c_in x m]
/// with odd m; bias [c_out]. Zero padding at the borders.
inline Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
    if (kernels.rank() != 3) throw ShapeError("conv1d: kernels must be [c_out x c_in x m]");
    const std::size_t c_out = kernels.dim(0), c_in = kernels.dim(1), m = kernels.dim(2);
    if (m % 2 == 0) throw ConfigError("conv1d: kernel width must be odd, got " + std::to_string(m));
    if (bias.shape() != Shape{c_out}) throw ShapeError("conv1d: bias must be [c_out]");
    if (input.rank() == 2) {
        Tensor out = conv1d(input.reshape({1, input.dim(0), input.dim(1)}), kernels, bias);
        return out.reshape({c_out, input.dim(1)});
    }
    if (input.rank() != 3 || input.dim(1) != c_in) {
        throw ShapeError("conv1d: input " + shape_str(input.shape()) + " incompatible with kernels " +
                         shape_str(kernels.shape()));
    }
    const std::size_t batch = input.dim(0), len = input.dim(2);
    const std::size_t pad = m / 2, patch = c_in * m, rows = batch * len;
    // Patch matrix: row (b, l) holds x[b, c, l + t - pad] at column c * m + t.
    auto patches = std::make_shared<std::vector<double>>(rows * patch, 0.0);
    auto x = input.data(), w = kernels.data(), bv = bias.data();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < c_in; ++c) {
            const double* irow = x.data() + (b * c_in + c) * len;
            for (std::size_t l = 0; l < len; ++l) {
                double* prow = patches->data() + (b * len + l) * patch + c * m;
                for (std::size_t t = 0; t < m; ++t) {
                    const std::size_t src = l + t;
                    if (src >= pad && src - pad < len) prow[t] = irow[src - pad];
                }
            }
        }
    }
    std::vector<double> wt(patch * c_out);  // kernels transposed to [patch x c_out]
    for (std::size_t o = 0; o < c_out; ++o)
        for (std::size_t j = 0; j < patch; ++j) wt[j * c_out + o] = w[o * patch + j];
    std::vector<double> out(batch * c_out * len), acc(c_out);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t l = 0; l < len; ++l) {
            const double* prow = patches->data() + (b * len + l) * patch;
            std::copy(bv.begin(), bv.end(), acc.begin());
            for (std::size_t j = 0; j < patch; ++j) {
                const double pv = prow[j];
                if (pv == 0.0) continue;
                const double* wrow = wt.data() + j * c_out;
                for (std::size_t o = 0; o < c_out; ++o) acc[o] += pv * wrow[o];
            }
            for (std::size_t o = 0; o < c_out; ++o) out[(b * c_out + o) * len + l] = acc[o];
        }
    }
    return detail::make_result(
        {batch, c_out, len}, std::move(out), {input, kernels, bias},
        [batch, c_in, c_out, len, m, pad, patch, patches](detail::Node& self) {
            auto& pin = *self.parents[0];
            auto& pk = *self.parents[1];
            auto& pb = *self.parents[2];
            double* gk = pk.requires_grad ? pk.grad_buffer().data() : nullptr;
            double* gb = pb.requires_grad ? pb.grad_buffer().data() : nullptr;
            std::vector<double> gpatch(pin.requires_grad ? patch : 0);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t l = 0; l < len; ++l) {
                    const double* prow = patches->data() + (b * len + l) * patch;
                    std::fill(gpatch.begin(), gpatch.end(), 0.0);
                    for (std::size_t o = 0; o < c_out; ++o) {
                        const double g = self.grad[(b * c_out + o) * len + l];
                        if (g == 0.0) continue;
                        if (gb) gb[o] += g;
                        if (gk) {
                            double* grow = gk + o * patch;
                            for (std::size_t j = 0; j < patch; ++j) grow[j] += g * prow[j];
                        }
                        if (!gpatch.empty()) {
                            const double* wrow = pk.value.data() + o * patch;
                            for (std::size_t j = 0; j < patch; ++j) gpatch[j] += g * wrow[j];
                        }
                    }
                    if (gpatch.empty()) continue;
                    auto& gin = pin.grad_buffer();
                    for (std::size_t c = 0; c < c_in; ++c) {
                        double* irow = gin.data() + (b * c_in + c) * len;
                        for (std::size_t t = 0; t < m; ++t) {
                            const std::size_t src = l + t;
                            if (src >= pad && src - pad < len) irow[src - pad] += gpatch[c * m + t];
                        }
                    }
                }
            }
        },
        "conv1d");
}

/// Concatenation along `axis`; all other extents must agree.
inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    const Shape& first = parts[0].shape();
    if (axis >= first.size()) throw ShapeError("concat: axis out of range");
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == first.size();
        for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
        if (!ok) throw ShapeError("concat: incompatible shape " + shape_str(s) + " vs " + shape_str(first));
        out_shape[axis] += s[axis];
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
    for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
    const std::size_t out_chunk = out_shape[axis] * inner;

    std::vector<double> out(numel(out_shape));
    std::vector<std::size_t> chunks;
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t chunk = p.dim(axis) * inner;
        auto v = p.data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(v.data() + o * chunk, chunk, out.data() + o * out_chunk + offset);
        }
        chunks.push_back(chunk);
        offset += chunk;
    }
    return detail::make_result(
        std::move(out_shape), std::move(out), parts,
        [outer, out_chunk, chunks](detail::Node& self) {
            std::size_t off = 0;
            for (std::size_t k = 0; k < self.parents.size(); ++k) {
                auto& p = *self.parents[k];
                const std::size_t chunk = chunks[k];
                if (p.requires_grad) {
                    auto& g = p.grad_buffer();
                    for (std::size_t o = 0; o < outer; ++o) {
                        const double* src = self.grad.data() + o * out_chunk + off;
                        double* dst = g.data() + o * chunk;
                        for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                    }
                }
                off += chunk;
            }
        },
        "concat");
}

/// Mean over one axis; the axis is removed from the shape.
inline Tensor mean_axis(const Tensor& a, std::size_t axis) {
    const Shape& s = a.shape();
    if (axis >= s.size()) throw ShapeError("mean_axis: axis out of range");
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
    for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    const std::size_t n = s[axis];
    Shape out_shape;
    for (std::size_t d = 0; d < s.size(); ++d) {
        if (d != axis) out_shape.push_back(s[d]);
    }
    std::vector<double> out(outer * inner, 0.0);
    auto v = a.data();
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += v[(o * n + j) * inner + i] * inv;
        }
    }
    return detail::make_result(
        std::move(out_shape), std::move(out), {a},
        [outer, inner, n, inv](detail::Node& self) {
            auto& g = self.parents[0]->grad_buffer();
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t j = 0; j < n; ++j) {
                    for (std::size_t i = 0; i < inner; ++i) g[(o * n + j) * inner + i] += self.grad[o * inner + i] * inv;
                }
            }
        },
        "mean_axis");
}

/// [n] -> [rows x n], each row a copy of v.
inline Tensor repeat_rows(const Tensor& v, std::size_t rows) {
    if (v.rank() != 1) throw ShapeError("repeat_rows expects a vector, got " + shape_str(v.shape()));
    const std::size_t n = v.dim(0);
    std::vector<double> out(rows * n);
    for (std::size_t r = 0; r < rows; ++r) std::copy(v.data().begin(), v.data().end(), out.begin() + r * n);
    return detail::make_result(
        {rows, n}, std::move(out), {v},
        [rows, n](detail::Node& self) {
            auto& g = self.parents[0]->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[r * n + j];
            }
        },
        "repeat_rows");
}

/// x [batch x in] . weight [in x out] + bias [out]
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    return add(matmul(x, weight), repeat_rows(bias, x.dim(0)));
}

/// Mean over all elements of (pred - target)^2.
inline Tensor mse(const Tensor& pred, const Tensor& target) {
    detail::require_same_shape(pred, target, "mse");
    const std::size_t n = pred.size();
    double acc = 0.0;
    auto p = pred.data(), t = target.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double d = p[i] - t[i];
        acc += d * d;
    }
    return detail::make_result(
        {}, {acc / static_cast<double>(n)}, {pred, target},
        [n](detail::Node& self) {
            auto& pp = *self.parents[0];
            auto& pt = *self.parents[1];
            const double c = 2.0 * self.grad[0] / static_cast<double>(n);
            if (pp.requires_grad) {
                auto& g = pp.grad_buffer();
                for (std::size_t i = 0; i < n; ++i) g[i] += c * (pp.value[i] - pt.value[i]);
            }
            if (pt.requires_grad) {
                auto& g = pt.grad_buffer();
                for (std::size_t i = 0; i < n; ++i) g[i] -= c * (pp.value[i] - pt.value[i]);
            }
        },
        "mse");
}

/// Pairwise squared Euclidean distances: z [m x d], c [k x d] -> [m x k].
inline Tensor sq_dist(const Tensor& z, const Tensor& c) {
    if (z.rank() != 2 || c.rank() != 2 || z.dim(1) != c.dim(1)) {
        throw ShapeError("sq_dist: incompatible shapes " + shape_str(z.shape()) + " and " + shape_str(c.shape()));
    }
    const std::size_t m = z.dim(0), k = c.dim(0), d = z.dim(1);
    std::vector<double> out(m * k);
    auto zv = z.data(), cv = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            double acc = 0.0;
            for (std::size_t f = 0; f < d; ++f) {
                const double diff = zv[i * d + f] - cv[j * d + f];
                acc += diff * diff;
            }
            out[i * k + j] = acc;
        }
    }
    return detail::make_result(
        {m, k}, std::move(out), {z, c},
        [m, k, d](detail::Node& self) {
            auto& pz = *self.parents[0];
            auto& pc = *self.parents[1];
            double* gz = pz.requires_grad ? pz.grad_buffer().data() : nullptr;
            double* gc = pc.requires_grad ? pc.grad_buffer().data() : nullptr;
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < k; ++j) {
                    const double g = 2.0 * self.grad[i * k + j];
                    for (std::size_t f = 0; f < d; ++f) {
                        const double diff = pz.value[i * d + f] - pc.value[j * d + f];
                        if (gz) gz[i * d + f] += g * diff;
                        if (gc) gc[j * d + f] -= g * diff;
                    }
                }
            }
        },
        "sq_dist");
}

/// Divides each row of a [m x k] matrix by its sum.
inline Tensor row_normalize(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("row_normalize expects a matrix");
    const std::size_t m = a.dim(0), k = a.dim(1);
    std::vector<double> out(m * k);
    auto v = a.data();
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += v[i * k + j];
        for (std::size_t j = 0; j < k; ++j) out[i * k + j] = v[i * k + j] / s;
    }
    return detail::make_result(
        {m, k}, std::move(out), {a},
        [m, k](detail::Node& self) {
            auto& p = *self.parents[0];
            auto& g = p.grad_buffer();
            for (std::size_t i = 0; i < m; ++i) {
                double s = 0.0, dot = 0.0;
                for (std::size_t j = 0; j < k; ++j) {
                    s += p.value[i * k + j];
                    dot += self.grad[i * k + j] * self.value[i * k + j];
                }
                for (std::size_t j = 0; j < k; ++j) g[i * k + j] += (self.grad[i * k + j] - dot) / s;
            }
        },
        "row_normalize");
}

/// Sum_ij p_ij log(p_ij / q_ij) with 0 log 0 = 0. Gradients reach q only;
/// p is always treated as a constant target.
inline Tensor kl_div(const Tensor& p, const Tensor& q) {
    detail::require_same_shape(p, q, "kl_div");
    const std::size_t n = p.size();
    auto pv = p.data(), qv = q.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (pv[i] == 0.0) continue;
        if (qv[i] <= 0.0) throw NumericError("kl_div: q == 0 where p > 0");
        acc += pv[i] * std::log(pv[i] / qv[i]);
    }
    Tensor target = p.detach();
    return detail::make_result(
        {}, {acc}, {target, q},
        [n](detail::Node& self) {
            auto& pp = *self.parents[0];
            auto& pq = *self.parents[1];
            auto& g = pq.grad_buffer();
            for (std::size_t i = 0; i < n; ++i) {
                if (pp.value[i] != 0.0) g[i] -= self.grad[0] * pp.value[i] / pq.value[i];
            }
        },
        "kl_div");
}

}  // namespace disc
