#pragma once

// Multi-task recurrent autoencoder.
//
// Encoder: stacked bi-directional ConvGRU layers. Each timestep x_t is a
// 1-map signal over the N sensor channels (the spatial axis); gate transforms
// are same-padded width-m 1D convolutions. The last layer's forward and
// backward final states are mean-pooled over the spatial axis, concatenated
// and mapped by a fully connected layer + batch norm to the embedding z.
//
// Decoders: two GRUs with their own parameters. Each starts from the
// context vector context_map(z), takes a zero input at the first step and
// its own previous hidden state afterwards, and projects every hidden state
// to an N-channel frame. One decoder targets the time-reversed input, the
// other the future half of the window.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "disc/batchnorm.hpp"
#include "disc/data.hpp"
#include "disc/error.hpp"
#include "disc/ops.hpp"
#include "disc/tensor.hpp"

namespace disc {

struct ModelConfig {
    std::size_t channels = 9;          // N
    std::size_t encoder_maps = 256;    // hidden feature maps per direction and layer
    std::size_t encoder_layers = 2;
    std::size_t kernel_width = 3;      // m
    std::size_t embedding_dim = 256;   // d
    std::size_t decoder_hidden = 512;
    double bn_momentum = 0.1;
    double bn_epsilon = 1e-5;

    void validate() const {
        if (channels == 0 || encoder_maps == 0 || encoder_layers == 0 || embedding_dim == 0 || decoder_hidden == 0) {
            throw ConfigError("model sizes must be positive");
        }
        if (kernel_width % 2 == 0) throw ConfigError("kernel_width must be odd");
    }
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

namespace detail {

inline Tensor uniform_param(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor::from(std::move(shape), std::move(v), true);
}

[[noreturn]] inline void rethrow_with_context(const NumericError& e, const std::string& where) {
    throw NumericError(std::string(e.what()) + " (" + where + ")");
}

}  // namespace detail

/// g = sigma(W_g * [h; x] + b_g), r = sigma(W_r * [h; x] + b_r),
/// h~ = tanh(W_c * [x; g . h] + b_c), h' = (1 - r) . h~ + r . h
struct ConvGruCell {
    std::size_t input_maps = 0;
    std::size_t hidden_maps = 0;
    std::size_t kernel_width = 3;
    Tensor w_g, w_r, w_c;  // [hidden x (hidden + input) x m]
    Tensor b_g, b_r, b_c;  // [hidden]

    ConvGruCell() = default;
    ConvGruCell(std::size_t in, std::size_t hidden, std::size_t m, std::mt19937_64& rng)
        : input_maps(in), hidden_maps(hidden), kernel_width(m) {
        const std::size_t fan_in = (in + hidden) * m;
        w_g = detail::uniform_param({hidden, hidden + in, m}, fan_in, rng);
        w_r = detail::uniform_param({hidden, hidden + in, m}, fan_in, rng);
        w_c = detail::uniform_param({hidden, in + hidden, m}, fan_in, rng);
        b_g = Tensor::zeros({hidden}, true);
        b_r = Tensor::zeros({hidden}, true);
        b_c = Tensor::zeros({hidden}, true);
    }

    /// h_prev [batch x hidden x L], x [batch x input x L] -> [batch x hidden x L]
    Tensor step(const Tensor& h_prev, const Tensor& x) const {
        if (h_prev.rank() != 3 || x.rank() != 3 || h_prev.dim(0) != x.dim(0) || h_prev.dim(2) != x.dim(2)) {
            throw ShapeError("convgru_step: state " + shape_str(h_prev.shape()) + " and input " +
                             shape_str(x.shape()) + " disagree");
        }
        Tensor hx = concat({h_prev, x}, 1);
        Tensor g = sigmoid(conv1d(hx, w_g, b_g));
        Tensor r = sigmoid(conv1d(hx, w_r, b_r));
        Tensor candidate = tanh(conv1d(concat({x, mul(g, h_prev)}, 1), w_c, b_c));
        return add(mul(one_minus(r), candidate), mul(r, h_prev));
    }

    std::vector<NamedTensor> parameters(const std::string& prefix) const {
        return {{prefix + ".w_g", w_g}, {prefix + ".b_g", b_g}, {prefix + ".w_r", w_r},
                {prefix + ".b_r", b_r}, {prefix + ".w_c", w_c}, {prefix + ".b_c", b_c}};
    }
};

inline Tensor convgru_step(const ConvGruCell& cell, const Tensor& h_prev, const Tensor& x) { return cell.step(h_prev, x); }

/// g = sigma(x W_g + h U_g), r = sigma(x W_r + h U_r),
/// h~ = tanh(x W + (r . h) U), h' = (1 - g) . h + g . h~
struct GruCell {
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    Tensor w_g, w_r, w;  // [input x hidden]
    Tensor u_g, u_r, u;  // [hidden x hidden]

    GruCell() = default;
    GruCell(std::size_t in, std::size_t hidden, std::mt19937_64& rng) : input_dim(in), hidden_dim(hidden) {
        w_g = detail::uniform_param({in, hidden}, in, rng);
        u_g = detail::uniform_param({hidden, hidden}, hidden, rng);
        w_r = detail::uniform_param({in, hidden}, in, rng);
        u_r = detail::uniform_param({hidden, hidden}, hidden, rng);
        w = detail::uniform_param({in, hidden}, in, rng);
        u = detail::uniform_param({hidden, hidden}, hidden, rng);
    }

    Tensor step(const Tensor& h_prev, const Tensor& x) const {
        Tensor g = sigmoid(add(matmul(x, w_g), matmul(h_prev, u_g)));
        Tensor r = sigmoid(add(matmul(x, w_r), matmul(h_prev, u_r)));
        Tensor candidate = tanh(add(matmul(x, w), matmul(mul(r, h_prev), u)));
        return add(mul(one_minus(g), h_prev), mul(g, candidate));
    }

    std::vector<NamedTensor> parameters(const std::string& prefix) const {
        return {{prefix + ".w_g", w_g}, {prefix + ".u_g", u_g}, {prefix + ".w_r", w_r},
                {prefix + ".u_r", u_r}, {prefix + ".w", w},     {prefix + ".u", u}};
    }
};

struct Decoder {
    GruCell cell;
    Tensor head_w;  // [hidden x N]
    Tensor head_b;  // [N]

    Decoder() = default;
    Decoder(std::size_t hidden, std::size_t channels, std::mt19937_64& rng)
        : cell(hidden, hidden, rng),
          head_w(detail::uniform_param({hidden, channels}, hidden, rng)),
          head_b(Tensor::zeros({channels}, true)) {}

    /// context [batch x hidden] -> frames [batch x steps x N]
    Tensor run(const Tensor& context, std::size_t steps, const std::string& name) const {
        const std::size_t batch = context.dim(0), channels = head_b.dim(0);
        Tensor h = context;
        Tensor x = Tensor::zeros({batch, cell.hidden_dim});
        std::vector<Tensor> frames;
        frames.reserve(steps);
        for (std::size_t t = 0; t < steps; ++t) {
            try {
                h = cell.step(h, x);
                frames.push_back(linear(h, head_w, head_b).reshape({batch, 1, channels}));
            } catch (const NumericError& e) {
                detail::rethrow_with_context(e, name + " step " + std::to_string(t));
            }
            x = h;
        }
        return concat(frames, 1);
    }

    std::vector<NamedTensor> parameters(const std::string& prefix) const {
        auto p = cell.parameters(prefix);
        p.push_back({prefix + ".head.weight", head_w});
        p.push_back({prefix + ".head.bias", head_b});
        return p;
    }
};

/// A mini-batch: input [batch x steps x N] plus both targets of equal shape.
struct Batch {
    Tensor input;
    Tensor rec_target;
    Tensor fut_target;

    std::size_t size() const { return input.dim(0); }
    std::size_t steps() const { return input.dim(1); }
};

inline Batch make_batch(const std::vector<SampleTriple>& triples, std::span<const std::size_t> indices,
                        std::size_t channels) {
    if (indices.empty()) throw ShapeError("empty batch");
    const std::size_t per = triples[indices[0]].input.size();
    if (per % channels != 0) throw ShapeError("triple length is not a multiple of the channel count");
    const std::size_t steps = per / channels;
    std::vector<double> in, rec, fut;
    in.reserve(indices.size() * per);
    rec.reserve(indices.size() * per);
    fut.reserve(indices.size() * per);
    for (std::size_t i : indices) {
        const auto& s = triples.at(i);
        if (s.input.size() != per || s.rec_target.size() != per || s.fut_target.size() != per) {
            throw ShapeError("triples in a batch differ in length");
        }
        in.insert(in.end(), s.input.begin(), s.input.end());
        rec.insert(rec.end(), s.rec_target.begin(), s.rec_target.end());
        fut.insert(fut.end(), s.fut_target.begin(), s.fut_target.end());
    }
    const std::size_t b = indices.size();
    return {Tensor::from({b, steps, channels}, std::move(in)), Tensor::from({b, steps, channels}, std::move(rec)),
            Tensor::from({b, steps, channels}, std::move(fut))};
}

struct AeLoss {
    Tensor total;  // rec + fut
    Tensor rec;
    Tensor fut;
};

struct Reconstruction {
    Tensor rec;
    Tensor fut;
};

class DiscModel {
   public:
    DiscModel() = default;
    DiscModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        std::mt19937_64 rng(seed);
        std::size_t in_maps = 1;
        for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
            ConvGruCell fwd(in_maps, cfg_.encoder_maps, cfg_.kernel_width, rng);
            ConvGruCell bwd(in_maps, cfg_.encoder_maps, cfg_.kernel_width, rng);
            encoder_.push_back({std::move(fwd), std::move(bwd)});
            in_maps = 2 * cfg_.encoder_maps;
        }
        const std::size_t pooled = 2 * cfg_.encoder_maps;
        fc_w_ = detail::uniform_param({pooled, cfg_.embedding_dim}, pooled, rng);
        fc_b_ = Tensor::zeros({cfg_.embedding_dim}, true);
        bn_ = BatchNorm(cfg_.embedding_dim, cfg_.bn_momentum, cfg_.bn_epsilon);
        ctx_w_ = detail::uniform_param({cfg_.embedding_dim, cfg_.decoder_hidden}, cfg_.embedding_dim, rng);
        ctx_b_ = Tensor::zeros({cfg_.decoder_hidden}, true);
        dec_rec_ = Decoder(cfg_.decoder_hidden, cfg_.channels, rng);
        dec_fut_ = Decoder(cfg_.decoder_hidden, cfg_.channels, rng);
    }

    const ModelConfig& config() const { return cfg_; }
    BatchNorm& batchnorm() { return bn_; }
    const BatchNorm& batchnorm() const { return bn_; }
    void set_mode(NormMode mode) { bn_.mode = mode; }
    NormMode mode() const { return bn_.mode; }

    const ConvGruCell& encoder_cell(std::size_t layer, std::size_t direction) const {
        return encoder_.at(layer).at(direction);
    }
    const Decoder& rec_decoder() const { return dec_rec_; }
    const Decoder& fut_decoder() const { return dec_fut_; }

    /// input [batch x steps x N] -> z [batch x d]
    Tensor encode(const Tensor& input) {
        if (input.rank() != 3 || input.dim(2) != cfg_.channels || input.dim(1) == 0) {
            throw ShapeError("encode: expected [batch x steps x " + std::to_string(cfg_.channels) + "], got " +
                             shape_str(input.shape()));
        }
        const std::size_t batch = input.dim(0), steps = input.dim(1), n = cfg_.channels;
        std::vector<Tensor> seq;
        seq.reserve(steps);
        auto v = input.data();
        for (std::size_t t = 0; t < steps; ++t) {
            std::vector<double> frame(batch * n);
            for (std::size_t b = 0; b < batch; ++b)
                std::copy_n(v.data() + (b * steps + t) * n, n, frame.data() + b * n);
            seq.push_back(Tensor::from({batch, 1, n}, std::move(frame)));
        }

        Tensor last_fwd, last_bwd;
        for (std::size_t l = 0; l < encoder_.size(); ++l) {
            std::vector<Tensor> fwd(steps), bwd(steps);
            Tensor h = Tensor::zeros({batch, cfg_.encoder_maps, n});
            for (std::size_t t = 0; t < steps; ++t) {
                h = run_cell(encoder_[l][0], h, seq[t], l, "forward", t);
                fwd[t] = h;
            }
            last_fwd = h;
            h = Tensor::zeros({batch, cfg_.encoder_maps, n});
            for (std::size_t t = steps; t-- > 0;) {
                h = run_cell(encoder_[l][1], h, seq[t], l, "backward", t);
                bwd[t] = h;
            }
            last_bwd = h;
            if (l + 1 < encoder_.size()) {
                for (std::size_t t = 0; t < steps; ++t) seq[t] = concat({fwd[t], bwd[t]}, 1);
            }
        }
        Tensor pooled = concat({mean_axis(last_fwd, 2), mean_axis(last_bwd, 2)}, 1);
        return bn_.forward(linear(pooled, fc_w_, fc_b_));
    }

    /// Context vector used as both decoders' initial hidden state.
    Tensor context(const Tensor& z) const { return linear(z, ctx_w_, ctx_b_); }

    Reconstruction decode(const Tensor& z, std::size_t steps) const {
        if (z.rank() != 2 || z.dim(1) != cfg_.embedding_dim) {
            throw ShapeError("decode: expected [batch x " + std::to_string(cfg_.embedding_dim) + "], got " +
                             shape_str(z.shape()));
        }
        Tensor c = context(z);
        return {dec_rec_.run(c, steps, "rec decoder"), dec_fut_.run(c, steps, "fut decoder")};
    }

    /// L_AE = mse(rec) + mse(fut); also returns z for the clustering head.
    std::pair<AeLoss, Tensor> ae_loss_with_embedding(const Batch& batch) {
        if (batch.size() == 0) throw ShapeError("ae_loss: empty batch");
        Tensor z = encode(batch.input);
        Reconstruction out = decode(z, batch.steps());
        Tensor rec = mse(out.rec, batch.rec_target);
        Tensor fut = mse(out.fut, batch.fut_target);
        return {AeLoss{add(rec, fut), rec, fut}, z};
    }

    AeLoss ae_loss(const Batch& batch) { return ae_loss_with_embedding(batch).first; }

    /// Trainable tensors in their fixed checkpoint order.
    std::vector<NamedTensor> parameters() const {
        std::vector<NamedTensor> out;
        for (std::size_t l = 0; l < encoder_.size(); ++l) {
            for (std::size_t d = 0; d < 2; ++d) {
                auto p = encoder_[l][d].parameters("encoder.l" + std::to_string(l) + (d == 0 ? ".fwd" : ".bwd"));
                out.insert(out.end(), p.begin(), p.end());
            }
        }
        out.push_back({"bottleneck.weight", fc_w_});
        out.push_back({"bottleneck.bias", fc_b_});
        out.push_back({"bottleneck.bn.scale", bn_.scale});
        out.push_back({"bottleneck.bn.shift", bn_.shift});
        out.push_back({"context.weight", ctx_w_});
        out.push_back({"context.bias", ctx_b_});
        auto r = dec_rec_.parameters("dec_rec");
        out.insert(out.end(), r.begin(), r.end());
        auto f = dec_fut_.parameters("dec_fut");
        out.insert(out.end(), f.begin(), f.end());
        return out;
    }

    std::vector<Tensor> parameter_tensors() const {
        std::vector<Tensor> out;
        for (auto& p : parameters()) out.push_back(p.tensor);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (auto& p : parameters()) n += p.tensor.size();
        return n;
    }

   private:
    Tensor run_cell(const ConvGruCell& cell, const Tensor& h, const Tensor& x, std::size_t layer, const char* dir,
                    std::size_t t) const {
        try {
            return cell.step(h, x);
        } catch (const NumericError& e) {
            detail::rethrow_with_context(
                e, "encoder layer " + std::to_string(layer) + " " + dir + " step " + std::to_string(t));
        }
    }

    ModelConfig cfg_;
    std::vector<std::array<ConvGruCell, 2>> encoder_;
    Tensor fc_w_, fc_b_;
    BatchNorm bn_;
    Tensor ctx_w_, ctx_b_;
    Decoder dec_rec_, dec_fut_;
};

/// Values of every parameter plus the batch-norm running statistics.
struct ModelSnapshot {
    std::vector<std::vector<double>> params;
    std::vector<double> running_mean, running_var;
};

inline ModelSnapshot snapshot(const DiscModel& model) {
    ModelSnapshot s;
    for (auto& p : model.parameters()) s.params.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    s.running_mean = model.batchnorm().running_mean;
    s.running_var = model.batchnorm().running_var;
    return s;
}

inline void restore(DiscModel& model, const ModelSnapshot& s) {
    auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto dst = params[i].tensor.mutable_data();
        std::copy(s.params[i].begin(), s.params[i].end(), dst.begin());
    }
    model.batchnorm().running_mean = s.running_mean;
    model.batchnorm().running_var = s.running_var;
}

}  // namespace disc
