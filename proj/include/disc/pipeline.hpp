#pragma once

// Command implementations behind the `disc` executable. Each command reads
// the experiment config, does its work, writes its artifacts atomically
// into output_dir and returns a summary for callers and tests.
//
// Window ids: train windows are numbered first in manifest order, then
// test windows, continuing the count.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "disc/checkpoint.hpp"
#include "disc/cluster.hpp"
#include "disc/config.hpp"
#include "disc/data.hpp"
#include "disc/error.hpp"
#include "disc/io.hpp"
#include "disc/matrix.hpp"
#include "disc/metrics.hpp"
#include "disc/model.hpp"
#include "disc/pca.hpp"
#include "disc/refine.hpp"
#include "disc/train.hpp"

namespace disc {

struct LoadedData {
    std::size_t channels = 0;
    WindowedDataset train;
    WindowedDataset test;
    std::vector<SampleTriple> train_triples;
    std::vector<SampleTriple> test_triples;
    NormStats stats;
    std::vector<std::string> warnings;

    std::size_t total() const { return train.size() + test.size(); }
};

inline void require_file(const std::filesystem::path& path, const std::string& what) {
    if (!std::filesystem::is_regular_file(path)) throw ConfigError(what + ": file not found: " + path.string());
}

/// Loads every manifest recording, normalizes with `stats` (or statistics of
/// the train split when absent) and windows each recording separately.
inline LoadedData load_dataset(const ExperimentConfig& cfg, const std::optional<NormStats>& stats = std::nullopt) {
    require_file(cfg.manifest, "manifest");
    const auto entries = load_manifest(cfg.manifest);
    std::vector<RawRecording> train, test;
    CsvSchema schema;
    for (const auto& e : entries) {
        RawRecording rec = load_csv(e.path, schema);
        schema.channels = rec.channels;
        (e.split == "train" ? train : test).push_back(std::move(rec));
    }
    if (train.empty()) throw ConfigError("manifest " + cfg.manifest.string() + " lists no train recordings");

    LoadedData d;
    d.channels = schema.channels;
    d.stats = stats ? *stats : compute_norm_stats(train, &d.warnings);
    if (d.stats.mean.size() != d.channels) {
        throw ConfigError("normalization statistics cover " + std::to_string(d.stats.mean.size()) +
                          " channels, data has " + std::to_string(d.channels));
    }
    auto window_all = [&](const std::vector<RawRecording>& recs, WindowedDataset& into) {
        for (const auto& rec : recs) {
            Normalized n = normalize(rec, d.stats);
            append_windows(into, make_windows(n.recording, cfg.window, cfg.overlap));
        }
        into.norm_stats = d.stats;
    };
    window_all(train, d.train);
    window_all(test, d.test);
    d.train_triples = make_triples(d.train);
    if (d.test.size() > 0) d.test_triples = make_triples(d.test);
    return d;
}

/// Flattened T x N windows, one row per window.
inline Matrix window_matrix(const WindowedDataset& ds) {
    Matrix m(ds.size(), ds.window * ds.channels);
    std::copy(ds.data.begin(), ds.data.end(), m.values.begin());
    return m;
}

// ---- label files ----------------------------------------------------------

inline std::string labels_csv(const std::vector<int>& clusters, std::size_t first_id = 0) {
    std::ostringstream os;
    os << "id,cluster\n";
    for (std::size_t i = 0; i < clusters.size(); ++i) os << first_id + i << ',' << clusters[i] << '\n';
    return os.str();
}

inline std::map<std::size_t, int> read_labels_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("labels: file not found: " + path.string());
    std::map<std::size_t, int> out;
    std::string line;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& what) { return ParseError(path.string() + ":" + std::to_string(lineno) + ": " + what); };
    while (std::getline(in, line)) {
        ++lineno;
        auto t = detail::trim(line);
        if (t.empty()) continue;
        auto cells = detail::split_csv_line(t);
        if (lineno == 1) {
            if (cells.size() != 2 || detail::trim(cells[0]) != "id" || detail::trim(cells[1]) != "cluster") {
                throw fail("expected header 'id,cluster'");
            }
            continue;
        }
        std::size_t id = 0;
        int cluster = 0;
        if (cells.size() != 2 || !detail::parse_number(detail::trim(cells[0]), id) ||
            !detail::parse_int(detail::trim(cells[1]), cluster)) {
            throw fail("expected '<id>,<cluster>'");
        }
        if (!out.emplace(id, cluster).second) throw fail("duplicate id " + std::to_string(id));
    }
    return out;
}

// ---- evaluation -----------------------------------------------------------

struct SplitReport {
    std::string split;
    EvalReport report;
    std::size_t k = 0;  // distinct cluster ids among the split's predictions
    std::size_t samples = 0;
};

inline SplitReport evaluate_split(const std::string& split, const std::vector<int>& truth, const std::vector<int>& pred) {
    SplitReport r;
    r.split = split;
    r.report = evaluate(truth, pred);
    r.k = r.report.cluster_sizes.size();
    r.samples = truth.size();
    return r;
}

inline std::vector<SplitReport> evaluate_splits(const LoadedData& d, const std::vector<int>& train_pred,
                                                const std::vector<int>& test_pred) {
    if (!d.train.labels) throw ConfigError("evaluation needs labeled recordings");
    std::vector<SplitReport> out;
    out.push_back(evaluate_split("train", *d.train.labels, train_pred));
    if (d.test.size() > 0) {
        if (!d.test.labels) throw ConfigError("evaluation needs labeled test recordings");
        out.push_back(evaluate_split("test", *d.test.labels, test_pred));
    }
    return out;
}

inline std::string report_csv(const std::vector<SplitReport>& reports) {
    std::ostringstream os;
    os << "split,acc,nmi,k,m_samples\n";
    for (const auto& r : reports) {
        os << r.split << ',' << format_double(r.report.acc) << ',' << format_double(r.report.nmi) << ',' << r.k << ','
           << r.samples << '\n';
    }
    return os.str();
}

inline void print_reports(std::ostream& log, const std::vector<SplitReport>& reports) {
    for (const auto& r : reports) {
        log << r.split << ": acc=" << format_double(r.report.acc) << " nmi=" << format_double(r.report.nmi)
            << " k=" << r.k << " m=" << r.samples << '\n';
    }
}

// ---- helpers shared by commands -------------------------------------------

inline std::vector<int> cluster_partition(const Matrix& z, std::size_t k, CentroidInit algo, std::uint64_t seed,
                                          Matrix* centroids = nullptr) {
    std::vector<int> labels;
    if (algo == CentroidInit::kmeans) {
        KMeansResult km = kmeans(z, k, KMeansOptions{.seed = seed});
        labels = std::move(km.labels);
        if (centroids) *centroids = std::move(km.centroids);
        return labels;
    }
    const Linkage linkage = algo == CentroidInit::ac_average    ? Linkage::average
                            : algo == CentroidInit::ac_complete ? Linkage::complete
                                                                : Linkage::ward;
    labels = agglomerative(z, k, linkage);
    if (centroids) *centroids = cluster_means(z, labels, k);
    return labels;
}

inline void warn_all(std::ostream& log, const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) log << "warning: " << w << '\n';
}

inline Checkpoint load_matching_checkpoint(const std::filesystem::path& path, const ExperimentConfig& cfg) {
    require_file(path, "checkpoint");
    Checkpoint ck = load_checkpoint(path);
    require_same_architecture(ck.model.config(), cfg.model(ck.model.config().channels));
    return ck;
}

// ---- commands -------------------------------------------------------------

inline constexpr const char* kPretrainCheckpoint = "model.ckpt";
inline constexpr const char* kRefinedCheckpoint = "model_refined.ckpt";

struct PretrainSummary {
    std::vector<EpochLoss> history;
    std::filesystem::path checkpoint;
};

inline PretrainSummary cmd_pretrain(const ExperimentConfig& cfg, std::ostream& log) {
    cfg.validate();
    LoadedData d = load_dataset(cfg);
    warn_all(log, d.warnings);
    log << "pretrain: " << d.train.size() << " train windows, " << d.channels << " channels\n";

    DiscModel model(cfg.model(d.channels), cfg.seed);
    PretrainOptions opts;
    opts.batch_size = cfg.batch_size;
    opts.epochs = cfg.epochs;
    opts.lr = cfg.lr;
    opts.decay_epoch = cfg.decay_epoch;
    opts.decay_factor = cfg.decay_factor;
    opts.seed = cfg.seed + 1;
    opts.on_epoch = [&](const EpochLoss& e) {
        log << "epoch " << e.epoch << " L_rec=" << format_double(e.rec) << " L_fut=" << format_double(e.fut) << '\n';
    };
    PretrainResult result = pretrain(model, d.train_triples, opts);

    std::filesystem::create_directories(cfg.output_dir);
    PretrainSummary s;
    s.history = result.history;
    s.checkpoint = cfg.output_dir / kPretrainCheckpoint;
    std::ostringstream csv;
    csv << "epoch,L_rec,L_fut\n";
    for (const auto& e : result.history) csv << e.epoch << ',' << format_double(e.rec) << ',' << format_double(e.fut) << '\n';
    write_file_atomic(cfg.output_dir / "pretrain_loss.csv", csv.str());
    save_checkpoint(s.checkpoint, model, &d.stats, nullptr, cfg.seed, cfg.to_text());
    if (result.diverged) {
        throw NumericError("pretraining diverged (" + result.message + "); last good state saved to " +
                           s.checkpoint.string());
    }
    return s;
}

struct RefineSummary {
    std::vector<int> initial_train_labels;  // centroid-init partition of the pretrained embedding
    std::vector<int> initial_test_labels;   // test windows by nearest initial centroid
    std::vector<int> train_labels;
    std::vector<int> test_labels;
    std::vector<RefineEpoch> history;
    bool converged = false;
};

inline RefineSummary cmd_refine(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint, std::ostream& log) {
    cfg.validate();
    if (!cfg.centroid_init) {
        throw ConfigError("centroid_init: required for refine (one of " + std::string(kCentroidInitNames) + ")");
    }
    Checkpoint ck = load_matching_checkpoint(checkpoint, cfg);
    LoadedData d = load_dataset(cfg, ck.norm_stats);
    warn_all(log, d.warnings);
    require_same_architecture(ck.model.config(), cfg.model(d.channels));
    DiscModel& model = ck.model;

    RefineSummary s;
    Matrix z_train = encode_all(model, d.train_triples);
    Matrix centroids;
    s.initial_train_labels = cluster_partition(z_train, cfg.k, *cfg.centroid_init, cfg.seed + 2, &centroids);
    if (d.test.size() > 0) s.initial_test_labels = nearest_centroid(encode_all(model, d.test_triples), centroids);
    log << "refine: centroids initialized by " << to_string(*cfg.centroid_init) << " on " << d.train.size()
        << " windows\n";

    ClusterHead head(centroids, cfg.gamma);
    RefineOptions opts;
    opts.gamma = cfg.gamma;
    opts.lr = cfg.refine_lr;
    opts.batch_size = cfg.refine_batch_size;
    opts.max_epochs = cfg.refine_max_epochs;
    opts.tolerance = cfg.stop_tolerance;
    opts.seed = cfg.seed + 3;
    opts.on_epoch = [&](const RefineEpoch& e) {
        log << "epoch " << e.epoch << " L=" << format_double(e.loss) << " changed=" << format_double(e.changed_fraction)
            << '\n';
    };
    RefineResult result = refine(model, head, d.train_triples, opts);
    if (!result.converged) {
        log << "warning: assignments still changing after " << cfg.refine_max_epochs << " epochs\n";
    }
    s.train_labels = result.labels;
    s.history = result.history;
    s.converged = result.converged;
    if (d.test.size() > 0) s.test_labels = hard_labels(soft_assign_matrix(head, encode_all(model, d.test_triples)));

    std::vector<int> all = s.train_labels;
    all.insert(all.end(), s.test_labels.begin(), s.test_labels.end());
    std::ostringstream csv;
    csv << "epoch,L,L_C,L_AE,changed_fraction\n";
    for (const auto& e : result.history) {
        csv << e.epoch << ',' << format_double(e.loss) << ',' << format_double(e.clustering) << ','
            << format_double(e.autoencoder) << ',' << format_double(e.changed_fraction) << '\n';
    }
    std::filesystem::create_directories(cfg.output_dir);
    write_file_atomic(cfg.output_dir / "refine_log.csv", csv.str());
    write_file_atomic(cfg.output_dir / "labels.csv", labels_csv(all));
    save_checkpoint(cfg.output_dir / kRefinedCheckpoint, model, &d.stats, &head, cfg.seed, cfg.to_text());
    return s;
}

inline std::vector<SplitReport> cmd_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& labels_path,
                                             std::ostream& log) {
    cfg.validate();
    const auto by_id = read_labels_csv(labels_path);
    LoadedData d = load_dataset(cfg);
    std::vector<std::size_t> missing;
    std::vector<int> train_pred, test_pred;
    for (std::size_t id = 0; id < d.total(); ++id) {
        auto it = by_id.find(id);
        if (it == by_id.end()) {
            missing.push_back(id);
            continue;
        }
        (id < d.train.size() ? train_pred : test_pred).push_back(it->second);
    }
    std::vector<std::size_t> unknown;
    for (const auto& [id, cluster] : by_id) {
        if (id >= d.total()) unknown.push_back(id);
    }
    auto list = [](const std::vector<std::size_t>& ids) {
        std::string s;
        for (std::size_t i = 0; i < ids.size() && i < 20; ++i) s += (i ? "," : "") + std::to_string(ids[i]);
        if (ids.size() > 20) s += ",... (" + std::to_string(ids.size()) + " total)";
        return s;
    };
    if (!missing.empty()) throw ConfigError("labels file lacks window ids: " + list(missing));
    if (!unknown.empty()) throw ConfigError("labels file has ids beyond the dataset: " + list(unknown));

    auto reports = evaluate_splits(d, train_pred, test_pred);
    print_reports(log, reports);
    std::filesystem::create_directories(cfg.output_dir);
    write_file_atomic(cfg.output_dir / "report.csv", report_csv(reports));
    return reports;
}

enum class FeatureSpace { raw, embedding };

inline FeatureSpace parse_space(std::string_view s) {
    if (s == "raw") return FeatureSpace::raw;
    if (s == "embedding") return FeatureSpace::embedding;
    throw ConfigError("space: '" + std::string(s) + "' is not one of raw, embedding");
}

inline CentroidInit parse_algo(std::string_view s) {
    if (auto a = parse_centroid_init(s)) return *a;
    throw ConfigError("algo: '" + std::string(s) + "' is not one of " + std::string(kCentroidInitNames));
}

struct BaselineSummary {
    std::vector<int> train_labels;
    std::vector<int> test_labels;
    std::vector<SplitReport> reports;
};

/// Fits the classical algorithm on the train split; test windows go to the
/// nearest train-cluster mean.
inline BaselineSummary cmd_baseline(const ExperimentConfig& cfg, FeatureSpace space, CentroidInit algo,
                                    const std::filesystem::path& checkpoint, std::ostream& log) {
    cfg.validate();
    std::optional<Checkpoint> ck;
    if (space == FeatureSpace::embedding) ck = load_matching_checkpoint(checkpoint, cfg);
    LoadedData d = load_dataset(cfg, ck ? ck->norm_stats : std::nullopt);
    warn_all(log, d.warnings);

    Matrix train_x, test_x;
    if (ck) {
        require_same_architecture(ck->model.config(), cfg.model(d.channels));
        train_x = encode_all(ck->model, d.train_triples);
        if (d.test.size() > 0) test_x = encode_all(ck->model, d.test_triples);
    } else {
        train_x = window_matrix(d.train);
        test_x = window_matrix(d.test);
    }
    BaselineSummary s;
    s.train_labels = cluster_partition(train_x, cfg.k, algo, cfg.seed + 2);
    if (d.test.size() > 0) s.test_labels = nearest_centroid(test_x, cluster_means(train_x, s.train_labels, cfg.k));

    const std::string stem =
        std::string("baseline_") + (space == FeatureSpace::raw ? "raw" : "embedding") + "_" + to_string(algo);
    std::vector<int> all = s.train_labels;
    all.insert(all.end(), s.test_labels.begin(), s.test_labels.end());
    std::filesystem::create_directories(cfg.output_dir);
    write_file_atomic(cfg.output_dir / (stem + "_labels.csv"), labels_csv(all));
    if (d.train.labels) {
        s.reports = evaluate_splits(d, s.train_labels, s.test_labels);
        print_reports(log, s.reports);
        write_file_atomic(cfg.output_dir / (stem + "_report.csv"), report_csv(s.reports));
    } else {
        log << "warning: recordings carry no labels; report skipped\n";
    }
    return s;
}

struct ExportSummary {
    std::filesystem::path path;
    std::size_t rows = 0;
    std::size_t columns = 0;
    std::vector<std::string> warnings;
};

/// PCA over every window (train then test). The cluster column comes from
/// the checkpoint's cluster head, else from `labels_path`, else it is empty.
inline ExportSummary cmd_export_embeddings(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                                           std::size_t out_dim, const std::optional<std::filesystem::path>& labels_path,
                                           std::ostream& log) {
    cfg.validate();
    Checkpoint ck = load_matching_checkpoint(checkpoint, cfg);
    const std::size_t dim = ck.model.config().embedding_dim;
    if (out_dim == 0 || out_dim > dim) {
        throw ConfigError("out_dim must lie in [1, " + std::to_string(dim) + "], got " + std::to_string(out_dim));
    }
    LoadedData d = load_dataset(cfg, ck.norm_stats);
    std::vector<SampleTriple> all = d.train_triples;
    all.insert(all.end(), d.test_triples.begin(), d.test_triples.end());
    Matrix z = encode_all(ck.model, all);
    PcaResult pca = pca_project(z, out_dim);
    warn_all(log, pca.warnings);

    std::vector<std::optional<int>> cluster(all.size());
    if (ck.head) {
        auto labels = hard_labels(soft_assign_matrix(*ck.head, z));
        for (std::size_t i = 0; i < labels.size(); ++i) cluster[i] = labels[i];
    } else if (labels_path) {
        for (const auto& [id, c] : read_labels_csv(*labels_path)) {
            if (id < cluster.size()) cluster[id] = c;
        }
    }
    std::vector<std::optional<int>> truth(all.size());
    if (d.train.labels) {
        for (std::size_t i = 0; i < d.train.size(); ++i) truth[i] = (*d.train.labels)[i];
    }
    if (d.test.labels) {
        for (std::size_t i = 0; i < d.test.size(); ++i) truth[d.train.size() + i] = (*d.test.labels)[i];
    }

    std::ostringstream os;
    os << "id";
    for (std::size_t j = 0; j < out_dim; ++j) os << ",p" << j;
    os << ",cluster,label\n";
    for (std::size_t i = 0; i < all.size(); ++i) {
        os << i;
        for (std::size_t j = 0; j < out_dim; ++j) os << ',' << format_double(pca.projected(i, j));
        os << ',';
        if (cluster[i]) os << *cluster[i];
        os << ',';
        if (truth[i]) os << *truth[i];
        os << '\n';
    }
    ExportSummary s;
    s.path = cfg.output_dir / "embeddings.csv";
    s.rows = all.size();
    s.columns = out_dim;
    s.warnings = pca.warnings;
    std::filesystem::create_directories(cfg.output_dir);
    write_file_atomic(s.path, os.str());
    return s;
}

}  // namespace disc
