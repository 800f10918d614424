#pragma once

// Labeled multi-channel sinusoid recordings for smoke tests and the
// end-to-end convergence check. One recording per class per split, so no
// window straddles two classes; each recording is a run of bouts.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "disc/data.hpp"
#include "disc/error.hpp"
#include "disc/io.hpp"

namespace disc {

struct SyntheticOptions {
    std::size_t classes = 3;
    std::size_t channels = 3;
    std::size_t window = 64;
    double overlap = 0.5;
    std::size_t train_windows_per_class = 300;
    std::size_t test_windows_per_class = 100;
    double noise = 0.1;
    std::uint64_t seed = 0;
    // Class c oscillates cycles_per_stride[c % size] times per window stride,
    // so its period divides the stride and every window of a bout starts at
    // the same phase.
    std::vector<std::size_t> cycles_per_stride{1, 2, 4, 3, 6, 8};
    // A recording is a run of bouts of bout_windows windows; each bout draws
    // a phase offset in [-phase_jitter, phase_jitter] and an amplitude in
    // [1 - amplitude_jitter, 1 + amplitude_jitter].
    std::size_t bout_windows = 10;
    double phase_jitter = std::numbers::pi / 4.0;
    double amplitude_jitter = 0.2;
};

struct SyntheticData {
    std::vector<RawRecording> train;
    std::vector<RawRecording> test;
};

inline RawRecording synthetic_recording(const SyntheticOptions& o, std::size_t cls, std::size_t windows,
                                        std::mt19937_64& rng) {
    if (windows == 0 || o.bout_windows == 0) throw ConfigError("synthetic: window counts must be positive");
    const std::size_t stride = window_stride(o.window, o.overlap);
    const std::size_t length = o.window + (windows - 1) * stride;
    const auto cycles = static_cast<double>(o.cycles_per_stride[cls % o.cycles_per_stride.size()]);
    const double omega = 2.0 * std::numbers::pi * cycles / static_cast<double>(stride);
    std::uniform_real_distribution<double> phase_dist(-o.phase_jitter, o.phase_jitter);
    std::uniform_real_distribution<double> amp_dist(1.0 - o.amplitude_jitter, 1.0 + o.amplitude_jitter);
    std::normal_distribution<double> noise(0.0, o.noise);

    RawRecording rec;
    rec.channels = o.channels;
    rec.sample_rate_hz = 50.0;
    rec.samples.resize(length * o.channels);
    rec.labels = std::vector<int>(length, static_cast<int>(cls));
    const std::size_t bout_length = o.bout_windows * stride;
    double phase = 0.0, amplitude = 1.0;
    for (std::size_t t = 0; t < length; ++t) {
        if (t % bout_length == 0) {
            phase = phase_dist(rng);
            amplitude = amp_dist(rng);
        }
        for (std::size_t c = 0; c < o.channels; ++c) {
            const double channel_phase = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(o.channels);
            rec.samples[t * o.channels + c] =
                amplitude * std::sin(omega * static_cast<double>(t) + phase + channel_phase) + noise(rng);
        }
    }
    return rec;
}

inline SyntheticData make_synthetic(const SyntheticOptions& o) {
    if (o.classes == 0 || o.channels == 0 || o.cycles_per_stride.empty()) throw ConfigError("synthetic: empty configuration");
    std::mt19937_64 rng(o.seed);
    SyntheticData d;
    for (std::size_t c = 0; c < o.classes; ++c) d.train.push_back(synthetic_recording(o, c, o.train_windows_per_class, rng));
    for (std::size_t c = 0; c < o.classes; ++c) d.test.push_back(synthetic_recording(o, c, o.test_windows_per_class, rng));
    return d;
}

inline std::string recording_to_csv(const RawRecording& rec) {
    std::ostringstream os;
    os << 't';
    for (std::size_t c = 0; c < rec.channels; ++c) os << ",c" << c;
    if (rec.labels) os << ",label";
    os << '\n';
    const std::size_t length = rec.length();
    for (std::size_t t = 0; t < length; ++t) {
        os << t;
        for (std::size_t c = 0; c < rec.channels; ++c) os << ',' << format_double(rec.samples[t * rec.channels + c]);
        if (rec.labels) os << ',' << (*rec.labels)[t];
        os << '\n';
    }
    return os.str();
}

/// Writes one CSV per recording plus `manifest.csv` into dir; returns the
/// manifest path.
inline std::filesystem::path write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticOptions& o) {
    std::filesystem::create_directories(dir);
    const SyntheticData d = make_synthetic(o);
    std::ostringstream manifest;
    manifest << "split,path\n";
    auto emit = [&](const std::vector<RawRecording>& recs, const std::string& split) {
        for (std::size_t i = 0; i < recs.size(); ++i) {
            const std::string name = split + "_" + std::to_string(i) + ".csv";
            write_file_atomic(dir / name, recording_to_csv(recs[i]));
            manifest << split << ',' << name << '\n';
        }
    };
    emit(d.train, "train");
    emit(d.test, "test");
    write_file_atomic(dir / "manifest.csv", manifest.str());
    return dir / "manifest.csv";
}

}  // namespace disc
