#pragma once

// Experiment configuration: a flat `key = value` text file. '#' starts a
// comment. Paths are resolved against the directory holding the file.

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "disc/data.hpp"
#include "disc/error.hpp"
#include "disc/io.hpp"
#include "disc/model.hpp"

namespace disc {

enum class CentroidInit { kmeans, ac_average, ac_complete, ac_ward };

inline constexpr std::string_view kCentroidInitNames = "kmeans, ac-average, ac-complete, ac-ward";

inline std::optional<CentroidInit> parse_centroid_init(std::string_view s) {
    if (s == "kmeans") return CentroidInit::kmeans;
    if (s == "ac-average") return CentroidInit::ac_average;
    if (s == "ac-complete") return CentroidInit::ac_complete;
    if (s == "ac-ward") return CentroidInit::ac_ward;
    return std::nullopt;
}

inline std::string to_string(CentroidInit c) {
    switch (c) {
        case CentroidInit::kmeans:
            return "kmeans";
        case CentroidInit::ac_average:
            return "ac-average";
        case CentroidInit::ac_complete:
            return "ac-complete";
        case CentroidInit::ac_ward:
            return "ac-ward";
    }
    return "?";
}

struct ExperimentConfig {
    std::filesystem::path manifest;
    std::size_t window = 128;
    double overlap = 0.5;
    std::size_t k = 6;
    double gamma = 0.1;
    std::size_t kernel_width = 3;
    std::size_t encoder_maps = 256;
    std::size_t encoder_layers = 2;
    std::size_t embedding_dim = 256;
    std::size_t decoder_hidden = 512;
    std::size_t batch_size = 256;
    std::size_t epochs = 100;
    double lr = 1e-3;
    std::size_t decay_epoch = 70;
    double decay_factor = 0.1;
    double refine_lr = 1e-3;
    std::size_t refine_batch_size = 256;
    std::size_t refine_max_epochs = 200;
    double stop_tolerance = 0.001;
    std::optional<CentroidInit> centroid_init;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = ".";
    std::size_t pca_dim = 50;
    double bn_momentum = 0.1;
    double bn_epsilon = 1e-5;

    ModelConfig model(std::size_t channels) const {
        ModelConfig m;
        m.channels = channels;
        m.encoder_maps = encoder_maps;
        m.encoder_layers = encoder_layers;
        m.kernel_width = kernel_width;
        m.embedding_dim = embedding_dim;
        m.decoder_hidden = decoder_hidden;
        m.bn_momentum = bn_momentum;
        m.bn_epsilon = bn_epsilon;
        return m;
    }

    /// One message per invalid field; empty when the config is usable.
    std::vector<std::string> problems() const {
        std::vector<std::string> out;
        auto positive = [&](const char* key, double v) {
            if (!(v > 0.0)) out.push_back(std::string(key) + ": must be positive");
        };
        if (manifest.empty()) out.push_back("manifest: required");
        positive("window", static_cast<double>(window));
        if (window % 2 != 0) out.push_back("window: must be even");
        if (!(overlap >= 0.0 && overlap < 1.0)) out.push_back("overlap: must lie in [0, 1)");
        if (k < 2) out.push_back("k: must be >= 2");
        if (!(gamma >= 0.0 && gamma <= 1.0)) out.push_back("gamma: must lie in [0, 1]");
        if (kernel_width == 0 || kernel_width % 2 == 0) out.push_back("kernel_width: must be a positive odd number");
        positive("encoder_maps", static_cast<double>(encoder_maps));
        positive("encoder_layers", static_cast<double>(encoder_layers));
        positive("embedding_dim", static_cast<double>(embedding_dim));
        positive("decoder_hidden", static_cast<double>(decoder_hidden));
        if (batch_size < 2) out.push_back("batch_size: must be >= 2");
        positive("epochs", static_cast<double>(epochs));
        positive("lr", lr);
        positive("decay_epoch", static_cast<double>(decay_epoch));
        positive("decay_factor", decay_factor);
        positive("refine_lr", refine_lr);
        if (refine_batch_size < 2) out.push_back("refine_batch_size: must be >= 2");
        positive("refine_max_epochs", static_cast<double>(refine_max_epochs));
        positive("stop_tolerance", stop_tolerance);
        positive("pca_dim", static_cast<double>(pca_dim));
        if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) out.push_back("bn_momentum: must lie in (0, 1]");
        positive("bn_epsilon", bn_epsilon);
        return out;
    }

    void validate() const {
        auto p = problems();
        if (p.empty()) return;
        std::string msg = "invalid configuration:";
        for (auto& s : p) msg += "\n  " + s;
        throw ConfigError(msg);
    }

    /// Effective configuration in canonical key order.
    std::string to_text() const {
        std::ostringstream os;
        os << "manifest = " << manifest.string() << '\n'
           << "window = " << window << '\n'
           << "overlap = " << format_double(overlap) << '\n'
           << "k = " << k << '\n'
           << "gamma = " << format_double(gamma) << '\n'
           << "kernel_width = " << kernel_width << '\n'
           << "encoder_maps = " << encoder_maps << '\n'
           << "encoder_layers = " << encoder_layers << '\n'
           << "embedding_dim = " << embedding_dim << '\n'
           << "decoder_hidden = " << decoder_hidden << '\n'
           << "batch_size = " << batch_size << '\n'
           << "epochs = " << epochs << '\n'
           << "lr = " << format_double(lr) << '\n'
           << "decay_epoch = " << decay_epoch << '\n'
           << "decay_factor = " << format_double(decay_factor) << '\n'
           << "refine_lr = " << format_double(refine_lr) << '\n'
           << "refine_batch_size = " << refine_batch_size << '\n'
           << "refine_max_epochs = " << refine_max_epochs << '\n'
           << "stop_tolerance = " << format_double(stop_tolerance) << '\n'
           << "centroid_init = " << (centroid_init ? to_string(*centroid_init) : std::string()) << '\n'
           << "seed = " << seed << '\n'
           << "output_dir = " << output_dir.string() << '\n'
           << "pca_dim = " << pca_dim << '\n'
           << "bn_momentum = " << format_double(bn_momentum) << '\n'
           << "bn_epsilon = " << format_double(bn_epsilon) << '\n';
        return os.str();
    }
};

namespace detail {

template <typename T>
bool parse_number(std::string_view s, T& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size() && !s.empty();
}

}  // namespace detail

/// Parses config text. Every unknown key and malformed value is reported
/// together in one ConfigError. Semantic checks are left to validate().
inline ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {}) {
    ExperimentConfig c;
    if (!base_dir.empty()) c.output_dir = base_dir;
    std::vector<std::string> errors;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    auto resolve = [&](std::string_view v) {
        std::filesystem::path p{std::string(v)};
        return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view l = line;
        if (auto hash = l.find('#'); hash != std::string_view::npos) l = l.substr(0, hash);
        l = detail::trim(l);
        if (l.empty()) continue;
        const auto eq = l.find('=');
        if (eq == std::string_view::npos) {
            errors.push_back("line " + std::to_string(lineno) + ": expected key = value");
            continue;
        }
        const std::string key{detail::trim(l.substr(0, eq))};
        const std::string_view value = detail::trim(l.substr(eq + 1));
        auto bad = [&]() { errors.push_back(key + ": invalid value '" + std::string(value) + "'"); };
        auto set_size = [&](std::size_t& f) {
            if (!detail::parse_number(value, f)) bad();
        };
        auto set_double = [&](double& f) {
            if (!detail::parse_double(value, f)) bad();
        };
        if (key == "manifest") c.manifest = resolve(value);
        else if (key == "window") set_size(c.window);
        else if (key == "overlap") set_double(c.overlap);
        else if (key == "k") set_size(c.k);
        else if (key == "gamma") set_double(c.gamma);
        else if (key == "kernel_width") set_size(c.kernel_width);
        else if (key == "encoder_maps") set_size(c.encoder_maps);
        else if (key == "encoder_layers") set_size(c.encoder_layers);
        else if (key == "embedding_dim") set_size(c.embedding_dim);
        else if (key == "decoder_hidden") set_size(c.decoder_hidden);
        else if (key == "batch_size") set_size(c.batch_size);
        else if (key == "epochs") set_size(c.epochs);
        else if (key == "lr") set_double(c.lr);
        else if (key == "decay_epoch") set_size(c.decay_epoch);
        else if (key == "decay_factor") set_double(c.decay_factor);
        else if (key == "refine_lr") set_double(c.refine_lr);
        else if (key == "refine_batch_size") set_size(c.refine_batch_size);
        else if (key == "refine_max_epochs") set_size(c.refine_max_epochs);
        else if (key == "stop_tolerance") set_double(c.stop_tolerance);
        else if (key == "centroid_init") {
            if (value.empty()) {
                c.centroid_init.reset();
            } else if (auto ci = parse_centroid_init(value)) {
                c.centroid_init = ci;
            } else {
                errors.push_back("centroid_init: '" + std::string(value) + "' is not one of " +
                                 std::string(kCentroidInitNames));
            }
        } else if (key == "seed") {
            if (!detail::parse_number(value, c.seed)) bad();
        } else if (key == "output_dir") c.output_dir = resolve(value);
        else if (key == "pca_dim") set_size(c.pca_dim);
        else if (key == "bn_momentum") set_double(c.bn_momentum);
        else if (key == "bn_epsilon") set_double(c.bn_epsilon);
        else errors.push_back("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    if (!errors.empty()) {
        std::string msg = "invalid configuration:";
        for (auto& e : errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

}  // namespace disc
