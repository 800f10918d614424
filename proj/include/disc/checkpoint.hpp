#pragma once

// Checkpoint container, little-endian:
//
//   "DISC1\n"                      6-byte magic
//   u64 meta_len, meta bytes       UTF-8 `key = value` lines: model sizes,
//                                  seed, presence flags, embedded config
//   u64 tensor_count
//   per tensor:                    u32 name_len, name, u32 rank,
//                                  u64 dims[rank], f64 values (row-major)
//   u64 checksum                   FNV-1a 64 over every preceding byte
//
// Tensor order: model parameters (DiscModel::parameters order), then
// bottleneck.bn.running_mean, bottleneck.bn.running_var, then optionally
// norm.mean, norm.std, then optionally cluster.centroids.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "disc/cluster.hpp"
#include "disc/config.hpp"
#include "disc/data.hpp"
#include "disc/error.hpp"
#include "disc/io.hpp"
#include "disc/model.hpp"

namespace disc {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr std::string_view kCheckpointMagic = "DISC1\n";

inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

struct Checkpoint {
    DiscModel model;
    std::optional<NormStats> norm_stats;
    std::optional<ClusterHead> head;
    std::uint64_t seed = 0;
    std::string config_text;  // effective experiment config, possibly empty
};

namespace detail {

class ByteWriter {
   public:
    template <typename T>
    void put(T v) {
        char buf[sizeof(T)];
        std::memcpy(buf, &v, sizeof(T));
        out_.append(buf, sizeof(T));
    }
    void bytes(std::string_view s) { out_.append(s); }
    void tensor(const std::string& name, const Shape& shape, std::span<const double> values) {
        put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
        bytes(name);
        put<std::uint32_t>(static_cast<std::uint32_t>(shape.size()));
        for (auto d : shape) put<std::uint64_t>(d);
        out_.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
    }
    std::string& str() { return out_; }

   private:
    std::string out_;
};

class ByteReader {
   public:
    ByteReader(std::string_view data, std::string source) : data_(data), source_(std::move(source)) {}
    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string_view bytes(std::size_t n) {
        need(n);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return data_.size() - pos_; }

   private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw ParseError(source_ + ": truncated checkpoint");
    }
    std::string_view data_;
    std::size_t pos_ = 0;
    std::string source_;
};

struct RawTensor {
    Shape shape;
    std::vector<double> values;
};

inline std::map<std::string, std::string> parse_meta(std::string_view text) {
    std::map<std::string, std::string> out;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        out[std::string(trim(std::string_view(line).substr(0, eq)))] =
            std::string(trim(std::string_view(line).substr(eq + 1)));
    }
    return out;
}

}  // namespace detail

inline std::string serialize_checkpoint(const DiscModel& model, const NormStats* norm, const ClusterHead* head,
                                        std::uint64_t seed, const std::string& config_text = {}) {
    const ModelConfig& mc = model.config();
    std::ostringstream meta;
    meta << "format = 1\n"
         << "channels = " << mc.channels << '\n'
         << "encoder_maps = " << mc.encoder_maps << '\n'
         << "encoder_layers = " << mc.encoder_layers << '\n'
         << "kernel_width = " << mc.kernel_width << '\n'
         << "embedding_dim = " << mc.embedding_dim << '\n'
         << "decoder_hidden = " << mc.decoder_hidden << '\n'
         << "bn_momentum = " << format_double(mc.bn_momentum) << '\n'
         << "bn_epsilon = " << format_double(mc.bn_epsilon) << '\n'
         << "seed = " << seed << '\n'
         << "norm_stats = " << (norm ? "present" : "absent") << '\n'
         << "cluster_head = " << (head ? "present" : "absent") << '\n';
    if (head) meta << "gamma = " << format_double(head->gamma) << '\n';
    std::istringstream cfg(config_text);
    for (std::string line; std::getline(cfg, line);) {
        if (!line.empty()) meta << "config." << line << '\n';
    }

    detail::ByteWriter w;
    w.bytes(kCheckpointMagic);
    const std::string meta_text = meta.str();
    w.put<std::uint64_t>(meta_text.size());
    w.bytes(meta_text);

    auto params = model.parameters();
    std::uint64_t count = params.size() + 2 + (norm ? 2 : 0) + (head ? 1 : 0);
    w.put<std::uint64_t>(count);
    for (const auto& p : params) w.tensor(p.name, p.tensor.shape(), p.tensor.data());
    const auto& bn = model.batchnorm();
    w.tensor("bottleneck.bn.running_mean", {bn.features()}, bn.running_mean);
    w.tensor("bottleneck.bn.running_var", {bn.features()}, bn.running_var);
    if (norm) {
        w.tensor("norm.mean", {norm->mean.size()}, norm->mean);
        w.tensor("norm.std", {norm->stddev.size()}, norm->stddev);
    }
    if (head) w.tensor("cluster.centroids", head->centroids.shape(), head->centroids.data());
    w.put<std::uint64_t>(fnv1a64(w.str()));
    return std::move(w.str());
}

inline void save_checkpoint(const std::filesystem::path& path, const DiscModel& model, const NormStats* norm,
                            const ClusterHead* head, std::uint64_t seed, const std::string& config_text = {}) {
    write_file_atomic(path, serialize_checkpoint(model, norm, head, seed, config_text));
}

inline Checkpoint deserialize_checkpoint(std::string_view data, const std::string& source = "<checkpoint>") {
    if (data.size() < kCheckpointMagic.size() + 8 || data.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
        throw ParseError(source + ": not a DISC1 checkpoint");
    }
    const std::string_view body = data.substr(0, data.size() - 8);
    std::uint64_t stored = 0;
    std::memcpy(&stored, data.data() + body.size(), 8);
    if (stored != fnv1a64(body)) throw ParseError(source + ": checksum mismatch (corrupt or truncated checkpoint)");

    detail::ByteReader r(body, source);
    r.bytes(kCheckpointMagic.size());
    const auto meta_len = r.get<std::uint64_t>();
    auto meta = detail::parse_meta(r.bytes(meta_len));
    auto need = [&](const std::string& key) -> const std::string& {
        auto it = meta.find(key);
        if (it == meta.end()) throw ParseError(source + ": metadata lacks '" + key + "'");
        return it->second;
    };
    auto need_size = [&](const std::string& key) {
        std::size_t v = 0;
        if (!detail::parse_number(std::string_view(need(key)), v)) throw ParseError(source + ": bad '" + key + "'");
        return v;
    };
    auto need_double = [&](const std::string& key) {
        double v = 0;
        if (!detail::parse_double(need(key), v)) throw ParseError(source + ": bad '" + key + "'");
        return v;
    };
    if (need("format") != "1") throw ParseError(source + ": unsupported checkpoint format " + need("format"));

    ModelConfig mc;
    mc.channels = need_size("channels");
    mc.encoder_maps = need_size("encoder_maps");
    mc.encoder_layers = need_size("encoder_layers");
    mc.kernel_width = need_size("kernel_width");
    mc.embedding_dim = need_size("embedding_dim");
    mc.decoder_hidden = need_size("decoder_hidden");
    mc.bn_momentum = need_double("bn_momentum");
    mc.bn_epsilon = need_double("bn_epsilon");

    std::map<std::string, detail::RawTensor> tensors;
    const auto count = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = r.get<std::uint32_t>();
        std::string name(r.bytes(name_len));
        const auto rank = r.get<std::uint32_t>();
        detail::RawTensor t;
        for (std::uint32_t d = 0; d < rank; ++d) t.shape.push_back(r.get<std::uint64_t>());
        auto raw = r.bytes(numel(t.shape) * sizeof(double));
        t.values.resize(numel(t.shape));
        std::memcpy(t.values.data(), raw.data(), raw.size());
        tensors[name] = std::move(t);
    }
    if (r.remaining() != 0) throw ParseError(source + ": trailing bytes after tensors");

    auto take = [&](const std::string& name, const Shape& expected) -> detail::RawTensor& {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw ParseError(source + ": missing tensor '" + name + "'");
        if (it->second.shape != expected) {
            throw ParseError(source + ": tensor '" + name + "' has shape " + shape_str(it->second.shape) +
                             ", expected " + shape_str(expected));
        }
        return it->second;
    };

    Checkpoint ck;
    ck.seed = 0;
    detail::parse_number(std::string_view(need("seed")), ck.seed);
    ck.model = DiscModel(mc, 0);
    for (auto& p : ck.model.parameters()) {
        auto& raw = take(p.name, p.tensor.shape());
        auto dst = p.tensor.mutable_data();
        std::copy(raw.values.begin(), raw.values.end(), dst.begin());
    }
    ck.model.batchnorm().running_mean = take("bottleneck.bn.running_mean", {mc.embedding_dim}).values;
    ck.model.batchnorm().running_var = take("bottleneck.bn.running_var", {mc.embedding_dim}).values;
    if (need("norm_stats") == "present") {
        NormStats ns;
        ns.mean = take("norm.mean", {mc.channels}).values;
        ns.stddev = take("norm.std", {mc.channels}).values;
        ck.norm_stats = std::move(ns);
    }
    if (need("cluster_head") == "present") {
        auto it = tensors.find("cluster.centroids");
        if (it == tensors.end() || it->second.shape.size() != 2 || it->second.shape[1] != mc.embedding_dim) {
            throw ParseError(source + ": malformed tensor 'cluster.centroids'");
        }
        Matrix c(it->second.shape[0], it->second.shape[1], it->second.values);
        ck.head = ClusterHead(c, need_double("gamma"));
    }
    std::ostringstream cfg;
    for (const auto& [key, value] : meta) {
        if (key.rfind("config.", 0) == 0) cfg << key.substr(7) << " = " << value << '\n';
    }
    ck.config_text = cfg.str();
    return ck;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open checkpoint " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return deserialize_checkpoint(ss.str(), path.string());
}

/// Throws naming the first architecture field where the checkpoint and the
/// requested configuration disagree.
inline void require_same_architecture(const ModelConfig& stored, const ModelConfig& wanted) {
    auto check = [](const char* field, std::size_t a, std::size_t b) {
        if (a != b) {
            throw ConfigError(std::string("checkpoint/config mismatch in '") + field + "': checkpoint has " +
                              std::to_string(a) + ", config has " + std::to_string(b));
        }
    };
    check("channels", stored.channels, wanted.channels);
    check("encoder_maps", stored.encoder_maps, wanted.encoder_maps);
    check("encoder_layers", stored.encoder_layers, wanted.encoder_layers);
    check("kernel_width", stored.kernel_width, wanted.kernel_width);
    check("embedding_dim", stored.embedding_dim, wanted.embedding_dim);
    check("decoder_hidden", stored.decoder_hidden, wanted.decoder_hidden);
}

}  // namespace disc
