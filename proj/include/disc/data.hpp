#pragma once

// Ingest, per-channel normalization, windowing and training-triple
// derivation for multi-channel inertial recordings.
//
// CSV layout: header `t,c0,c1,...,c{N-1}[,label]`, one sample per row.
// `t` is parsed but ignored; samples are assumed uniformly spaced.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "disc/error.hpp"

namespace disc {

struct RawRecording {
    std::size_t channels = 0;
    std::vector<double> samples;  // length x channels, row-major
    std::optional<std::vector<int>> labels;
    double sample_rate_hz = 0.0;

    std::size_t length() const { return channels == 0 ? 0 : samples.size() / channels; }
    double at(std::size_t row, std::size_t channel) const { return samples[row * channels + channel]; }
};

struct CsvSchema {
    std::size_t channels = 0;  // 0 accepts any channel count
    bool require_labels = false;
    double sample_rate_hz = 0.0;
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size() && !s.empty();
}

inline bool parse_int(std::string_view s, int& out) {
    s = trim(s);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size() && !s.empty();
}

}  // namespace detail

inline RawRecording parse_csv(std::istream& in, const CsvSchema& schema = {}, const std::string& source = "<csv>") {
    auto fail = [&](std::size_t line, const std::string& what) -> ParseError {
        return ParseError(source + ":" + std::to_string(line) + ": " + what);
    };

    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw fail(1, "missing header");
    ++lineno;
    auto header = detail::split_csv_line(line);
    for (auto& h : header) h = detail::trim(h);
    if (header.empty() || header[0] != "t") throw fail(lineno, "header must start with column 't'");

    bool has_label = header.back() == "label";
    const std::size_t channels = header.size() - 1 - (has_label ? 1 : 0);
    if (channels == 0) throw fail(lineno, "header declares no channel columns");
    for (std::size_t c = 0; c < channels; ++c) {
        if (header[c + 1] != "c" + std::to_string(c)) {
            throw fail(lineno, "expected column 'c" + std::to_string(c) + "', found '" + std::string(header[c + 1]) + "'");
        }
    }
    if (schema.channels != 0 && schema.channels != channels) {
        throw fail(lineno, "expected " + std::to_string(schema.channels) + " channels, header has " +
                               std::to_string(channels));
    }
    if (schema.require_labels && !has_label) throw fail(lineno, "missing column 'label'");

    RawRecording rec;
    rec.channels = channels;
    rec.sample_rate_hz = schema.sample_rate_hz;
    std::vector<int> labels;
    const std::size_t width = header.size();
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != width) {
            throw fail(lineno, "expected " + std::to_string(width) + " cells, found " + std::to_string(cells.size()));
        }
        double t = 0.0;
        if (!detail::parse_double(cells[0], t)) throw fail(lineno, "non-numeric cell in column 't'");
        for (std::size_t c = 0; c < channels; ++c) {
            double v = 0.0;
            if (!detail::parse_double(cells[c + 1], v) || !std::isfinite(v)) {
                throw fail(lineno, "non-numeric cell in column 'c" + std::to_string(c) + "'");
            }
            rec.samples.push_back(v);
        }
        if (has_label) {
            int label = 0;
            if (!detail::parse_int(cells.back(), label) || label < 0) {
                throw fail(lineno, "label must be a non-negative integer");
            }
            labels.push_back(label);
        }
    }
    if (rec.samples.empty()) throw ParseError(source + ": no samples");
    if (has_label) rec.labels = std::move(labels);
    return rec;
}

inline RawRecording load_csv(const std::filesystem::path& path, const CsvSchema& schema = {}) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    return parse_csv(in, schema, path.string());
}

struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;  // population std; 1 substitutes for zero-variance channels
};

struct Normalized {
    RawRecording recording;
    NormStats stats;
    std::vector<std::string> warnings;
};

/// Per-channel mean and population std pooled over several recordings.
inline NormStats compute_norm_stats(std::span<const RawRecording> recs, std::vector<std::string>* warnings = nullptr) {
    if (recs.empty()) throw ConfigError("normalization needs at least one recording");
    const std::size_t n = recs[0].channels;
    std::vector<double> sum(n, 0.0);
    std::size_t count = 0;
    for (const auto& r : recs) {
        if (r.channels != n) throw ShapeError("recordings disagree on channel count");
        for (std::size_t i = 0; i < r.length(); ++i)
            for (std::size_t c = 0; c < n; ++c) sum[c] += r.at(i, c);
        count += r.length();
    }
    if (count < 2) throw ConfigError("normalization needs at least 2 samples");
    NormStats s;
    s.mean.resize(n);
    s.stddev.assign(n, 0.0);
    for (std::size_t c = 0; c < n; ++c) s.mean[c] = sum[c] / static_cast<double>(count);
    for (const auto& r : recs)
        for (std::size_t i = 0; i < r.length(); ++i)
            for (std::size_t c = 0; c < n; ++c) {
                const double d = r.at(i, c) - s.mean[c];
                s.stddev[c] += d * d;
            }
    for (std::size_t c = 0; c < n; ++c) {
        s.stddev[c] = std::sqrt(s.stddev[c] / static_cast<double>(count));
        if (!(s.stddev[c] > 1e-12 * std::max(1.0, std::abs(s.mean[c])))) {
            s.stddev[c] = 1.0;
            if (warnings) warnings->push_back("channel c" + std::to_string(c) + " has zero variance; left centered only");
        }
    }
    return s;
}

/// z-scores each channel with `stats` when given (test split), otherwise with
/// statistics computed from `rec` itself.
inline Normalized normalize(const RawRecording& rec, const std::optional<NormStats>& stats = std::nullopt) {
    Normalized out;
    out.stats = stats ? *stats : compute_norm_stats(std::span<const RawRecording>(&rec, 1), &out.warnings);
    if (out.stats.mean.size() != rec.channels) throw ShapeError("normalization stats do not match channel count");
    out.recording = rec;
    auto& v = out.recording.samples;
    for (std::size_t i = 0; i < rec.length(); ++i)
        for (std::size_t c = 0; c < rec.channels; ++c) {
            auto& x = v[i * rec.channels + c];
            x = (x - out.stats.mean[c]) / out.stats.stddev[c];
        }
    return out;
}

inline RawRecording denormalize(const RawRecording& rec, const NormStats& stats) {
    RawRecording out = rec;
    for (std::size_t i = 0; i < rec.length(); ++i)
        for (std::size_t c = 0; c < rec.channels; ++c) {
            auto& x = out.samples[i * rec.channels + c];
            x = x * stats.stddev[c] + stats.mean[c];
        }
    return out;
}

struct WindowedDataset {
    std::size_t window = 0;  // T
    std::size_t stride = 0;
    std::size_t channels = 0;
    std::vector<double> data;  // count x T x channels
    std::optional<std::vector<int>> labels;
    NormStats norm_stats;

    std::size_t size() const { return window * channels == 0 ? 0 : data.size() / (window * channels); }
    std::span<const double> window_at(std::size_t i) const {
        return std::span<const double>(data).subspan(i * window * channels, window * channels);
    }
};

inline std::size_t window_stride(std::size_t window, double overlap) {
    if (!(overlap >= 0.0 && overlap < 1.0)) throw ConfigError("overlap must lie in [0, 1)");
    const auto stride = static_cast<std::size_t>(std::llround(static_cast<double>(window) * (1.0 - overlap)));
    if (stride == 0) throw ConfigError("overlap leaves a zero stride");
    return stride;
}

/// Majority vote; ties go to the smallest class index.
inline int majority_label(std::span<const int> labels) {
    std::map<int, std::size_t> counts;
    for (int l : labels) ++counts[l];
    int best = counts.begin()->first;
    std::size_t best_count = 0;
    for (auto [label, count] : counts) {
        if (count > best_count) {
            best = label;
            best_count = count;
        }
    }
    return best;
}

inline WindowedDataset make_windows(const RawRecording& rec, std::size_t window, double overlap = 0.5) {
    if (window == 0 || window % 2 != 0) throw ConfigError("window length must be a positive even number");
    if (window > rec.length()) throw ConfigError("recording shorter than window");
    WindowedDataset ds;
    ds.window = window;
    ds.stride = window_stride(window, overlap);
    ds.channels = rec.channels;
    const std::size_t count = (rec.length() - window) / ds.stride + 1;
    ds.data.reserve(count * window * rec.channels);
    std::vector<int> labels;
    for (std::size_t w = 0; w < count; ++w) {
        const std::size_t start = w * ds.stride;
        auto first = rec.samples.begin() + static_cast<std::ptrdiff_t>(start * rec.channels);
        ds.data.insert(ds.data.end(), first, first + static_cast<std::ptrdiff_t>(window * rec.channels));
        if (rec.labels) labels.push_back(majority_label(std::span<const int>(*rec.labels).subspan(start, window)));
    }
    if (rec.labels) ds.labels = std::move(labels);
    return ds;
}

/// Appends the windows of `more` (same T and channel count) to `into`.
inline void append_windows(WindowedDataset& into, const WindowedDataset& more) {
    if (into.size() == 0 && into.window == 0) {
        into = more;
        return;
    }
    if (into.window != more.window || into.channels != more.channels) {
        throw ShapeError("cannot merge datasets with different window or channel counts");
    }
    const bool both_labeled = into.labels.has_value() && more.labels.has_value();
    into.data.insert(into.data.end(), more.data.begin(), more.data.end());
    if (both_labeled) {
        into.labels->insert(into.labels->end(), more.labels->begin(), more.labels->end());
    } else {
        into.labels.reset();
    }
}

/// The three (T/2) x N sequences of one training sample.
struct SampleTriple {
    std::vector<double> input;
    std::vector<double> rec_target;  // input, time reversed
    std::vector<double> fut_target;  // second half of the window
};

inline SampleTriple make_triple(std::span<const double> window, std::size_t length, std::size_t channels) {
    const std::size_t half = length / 2;
    SampleTriple s;
    s.input.assign(window.begin(), window.begin() + static_cast<std::ptrdiff_t>(half * channels));
    s.fut_target.assign(window.begin() + static_cast<std::ptrdiff_t>(half * channels), window.end());
    s.rec_target.resize(half * channels);
    for (std::size_t t = 0; t < half; ++t)
        std::copy_n(s.input.begin() + static_cast<std::ptrdiff_t>((half - 1 - t) * channels), channels,
                    s.rec_target.begin() + static_cast<std::ptrdiff_t>(t * channels));
    return s;
}

inline std::vector<SampleTriple> make_triples(const WindowedDataset& ds) {
    if (ds.size() == 0) throw ConfigError("dataset has no windows");
    std::vector<SampleTriple> out;
    out.reserve(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) out.push_back(make_triple(ds.window_at(i), ds.window, ds.channels));
    return out;
}

/// One recording listed in a dataset manifest.
struct ManifestEntry {
    std::string split;  // "train" or "test"
    std::filesystem::path path;
};

/// Manifest format: a header line `split,path`, then one `train|test,<csv>`
/// row per recording. Relative paths resolve against the manifest's folder.
/// Blank lines and lines starting with '#' are ignored.
inline std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open manifest " + path.string());
    std::vector<ManifestEntry> entries;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = detail::trim(line);
        if (t.empty() || t.front() == '#') continue;
        auto cells = detail::split_csv_line(t);
        if (cells.size() != 2) throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected 'split,path'");
        auto split = detail::trim(cells[0]);
        auto file = detail::trim(cells[1]);
        if (!header_seen) {
            header_seen = true;
            if (split == "split" && file == "path") continue;
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": missing 'split,path' header");
        }
        if (split != "train" && split != "test") {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": split must be train or test");
        }
        std::filesystem::path p(std::string{file});
        if (p.is_relative()) p = path.parent_path() / p;
        entries.push_back({std::string(split), p});
    }
    if (entries.empty()) throw ParseError(path.string() + ": manifest lists no recordings");
    return entries;
}

}  // namespace disc
