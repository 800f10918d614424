#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "disc/checkpoint.hpp"
#include "disc/config.hpp"
#include "disc/pipeline.hpp"

namespace fs = std::filesystem;
using namespace disc;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct RunResult {
    int code = -1;
    std::string out, err;
};

struct Cli {
    fs::path root;

    RunResult run(const std::string& args) const {
        const fs::path out = root / "stdout.txt", err = root / "stderr.txt";
        const std::string cmd = std::string(DISC_CLI_PATH) + " " + args + " > " + out.string() + " 2> " + err.string();
        const int status = std::system(cmd.c_str());
        return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
    }
};

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(slurp(p));
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

// Shared tiny dataset: two sinusoid classes.
class CliTest : public ::testing::Test {
   protected:
    static fs::path dir;

    static void SetUpTestSuite() {
        dir = fs::temp_directory_path() / ("disc_cli_test_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
        const std::string cmd = std::string(DISC_SYNTH_PATH) + " --out " + (dir / "data").string() +
                                " --classes 2 --channels 2 --window 16 --train-windows 20 --test-windows 5 > /dev/null";
        ASSERT_EQ(std::system(cmd.c_str()), 0);
    }
    static void TearDownTestSuite() { fs::remove_all(dir); }

    fs::path write_config(const std::string& name, const std::string& extra = "") const {
        const fs::path out = dir / name;
        fs::create_directories(out);
        std::ofstream(out / "config.txt") << "manifest = ../data/manifest.csv\n"
                                          << "window = 16\nk = 2\n"
                                          << "encoder_maps = 2\nembedding_dim = 4\ndecoder_hidden = 4\n"
                                          << "batch_size = 16\nepochs = 2\nrefine_batch_size = 16\n"
                                          << "refine_max_epochs = 3\ncentroid_init = kmeans\npca_dim = 3\n"
                                          << "output_dir = .\n"
                                          << extra;
        return out / "config.txt";
    }

    Cli cli() const { return Cli{dir}; }

    static std::pair<std::size_t, std::size_t> split_sizes(const fs::path& cfg) {
        LoadedData d = load_dataset(load_config(cfg));
        return {d.train.size(), d.test.size()};
    }
};

fs::path CliTest::dir;

}  // namespace

TEST(Config, DefaultsMatchTrainingSchedule) {
    ExperimentConfig c = parse_config("manifest = m.csv\n");
    EXPECT_EQ(c.batch_size, 256u);
    EXPECT_EQ(c.epochs, 100u);
    EXPECT_EQ(c.decay_epoch, 70u);
    EXPECT_EQ(c.gamma, 0.1);
    EXPECT_EQ(c.stop_tolerance, 0.001);
    EXPECT_EQ(c.embedding_dim, 256u);
    EXPECT_EQ(c.encoder_maps, 256u);
    EXPECT_EQ(c.decoder_hidden, 512u);
    EXPECT_EQ(c.window, 128u);
    EXPECT_FALSE(c.centroid_init.has_value());
    EXPECT_NO_THROW(c.validate());
}

TEST(Config, ReportsEveryBadKeyTogether) {
    try {
        parse_config("windw = 3\nk = two\ncentroid_init = dbscan\nnonsense line\n");
        FAIL();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("unknown key 'windw'"), std::string::npos);
        EXPECT_NE(msg.find("k: invalid value 'two'"), std::string::npos);
        EXPECT_NE(msg.find("kmeans, ac-average, ac-complete, ac-ward"), std::string::npos);
        EXPECT_NE(msg.find("line 4"), std::string::npos);
    }
}

TEST(Config, ValidationListsEachField) {
    ExperimentConfig c = parse_config("manifest = m.csv\noverlap = 1\ngamma = 2\nbatch_size = 1\nkernel_width = 4\n");
    auto p = c.problems();
    ASSERT_EQ(p.size(), 4u);
    try {
        c.validate();
        FAIL();
    } catch (const ConfigError& e) {
        for (const char* f : {"overlap", "gamma", "batch_size", "kernel_width"}) {
            EXPECT_NE(std::string(e.what()).find(f), std::string::npos) << f;
        }
    }
    EXPECT_FALSE(parse_config("").problems().empty());
}

TEST(Config, TextRoundTripAndRelativePaths) {
    ExperimentConfig c = parse_config("manifest = data/m.csv # comment\nk=4\nlr = 0.0025\ncentroid_init = ac-ward\n", "/base");
    EXPECT_EQ(c.manifest, fs::path("/base/data/m.csv"));
    EXPECT_EQ(c.output_dir, fs::path("/base"));
    EXPECT_EQ(parse_config("manifest = m.csv\n").output_dir, fs::path("."));
    EXPECT_EQ(c.centroid_init, CentroidInit::ac_ward);
    ExperimentConfig back = parse_config(c.to_text());
    EXPECT_EQ(back.to_text(), c.to_text());
    EXPECT_EQ(back.lr, 0.0025);
    EXPECT_EQ(parse_config("manifest = /abs/m.csv\n", "/base").manifest, fs::path("/abs/m.csv"));
}

TEST_F(CliTest, PretrainWritesArtifactsDeterministically) {
    const fs::path a = write_config("pre_a"), b = write_config("pre_b");
    RunResult r = cli().run("pretrain --config " + a.string());
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(a.parent_path() / "model.ckpt"));
    auto rows = read_csv(a.parent_path() / "pretrain_loss.csv");
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"epoch", "L_rec", "L_fut"}));
    ASSERT_EQ(cli().run("pretrain --config " + b.string()).code, 0);
    EXPECT_EQ(slurp(a.parent_path() / "pretrain_loss.csv"), slurp(b.parent_path() / "pretrain_loss.csv"));
    // Embedded config text records each run's own paths; compare the model state.
    auto state = [](const fs::path& p) {
        Checkpoint ck = load_checkpoint(p);
        return serialize_checkpoint(ck.model, ck.norm_stats ? &*ck.norm_stats : nullptr, nullptr, ck.seed, "");
    };
    EXPECT_EQ(state(a.parent_path() / "model.ckpt"), state(b.parent_path() / "model.ckpt"));
}

TEST_F(CliTest, SeedOverrideChangesModel) {
    const fs::path a = write_config("seed_a"), b = write_config("seed_b");
    ASSERT_EQ(cli().run("pretrain --config " + a.string()).code, 0);
    ASSERT_EQ(cli().run("pretrain --config " + b.string() + " --seed 9").code, 0);
    EXPECT_NE(slurp(a.parent_path() / "pretrain_loss.csv"), slurp(b.parent_path() / "pretrain_loss.csv"));
}

TEST_F(CliTest, MissingManifestNamesPath) {
    const fs::path out = dir / "nomanifest";
    fs::create_directories(out);
    std::ofstream(out / "config.txt") << "manifest = /no/such/manifest.csv\nwindow = 16\n";
    RunResult r = cli().run("pretrain --config " + (out / "config.txt").string());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("/no/such/manifest.csv"), std::string::npos) << r.err;
}

TEST_F(CliTest, InvalidConfigExitsOneBeforeWork) {
    const fs::path cfg = write_config("invalid", "gamma = 3\nwindow = 15\n");
    RunResult r = cli().run("pretrain --config " + cfg.string());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("gamma"), std::string::npos);
    EXPECT_NE(r.err.find("window"), std::string::npos);
    EXPECT_FALSE(fs::exists(cfg.parent_path() / "model.ckpt"));
    EXPECT_EQ(cli().run("pretrain").code, 1);
    EXPECT_EQ(cli().run("frobnicate --config " + cfg.string()).code, 1);
}

TEST_F(CliTest, ShowConfigPrintsEffectiveConfig) {
    const fs::path cfg = write_config("show");
    RunResult r = cli().run("pretrain --config " + cfg.string() + " --seed 17 --show-config");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("seed = 17"), std::string::npos);
    EXPECT_NE(r.out.find("embedding_dim = 4"), std::string::npos);
    EXPECT_FALSE(fs::exists(cfg.parent_path() / "model.ckpt"));
}

TEST_F(CliTest, RefineEvaluateAndExport) {
    const fs::path cfg = write_config("full");
    const fs::path out = cfg.parent_path();
    ASSERT_EQ(cli().run("pretrain --config " + cfg.string()).code, 0);
    RunResult r = cli().run("refine --config " + cfg.string());
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"model_refined.ckpt", "labels.csv", "refine_log.csv"}) EXPECT_TRUE(fs::exists(out / f)) << f;

    auto log = read_csv(out / "refine_log.csv");
    ASSERT_GE(log.size(), 2u);
    EXPECT_EQ(log[0], (std::vector<std::string>{"epoch", "L", "L_C", "L_AE", "changed_fraction"}));
    for (std::size_t i = 1; i < log.size(); ++i) EXPECT_GE(std::stod(log[i][4]), 0.0);

    const auto [n_train, n_test] = split_sizes(cfg);
    ASSERT_GT(n_test, 0u);
    auto labels = read_csv(out / "labels.csv");
    ASSERT_EQ(labels.size(), 1u + n_train + n_test);
    EXPECT_EQ(labels[0], (std::vector<std::string>{"id", "cluster"}));

    // Rerun from the same pretrained checkpoint reproduces the labels.
    const std::string first = slurp(out / "labels.csv");
    ASSERT_EQ(cli().run("refine --config " + cfg.string() + " --checkpoint " + (out / "model.ckpt").string()).code, 0);
    EXPECT_EQ(slurp(out / "labels.csv"), first);

    r = cli().run("evaluate --config " + cfg.string());
    ASSERT_EQ(r.code, 0) << r.err;
    auto report = read_csv(out / "report.csv");
    ASSERT_EQ(report.size(), 3u);
    EXPECT_EQ(report[0], (std::vector<std::string>{"split", "acc", "nmi", "k", "m_samples"}));
    EXPECT_EQ(report[1][0], "train");
    EXPECT_EQ(report[1][4], std::to_string(n_train));
    EXPECT_EQ(report[2][0], "test");
    EXPECT_EQ(report[2][4], std::to_string(n_test));

    r = cli().run("export-embeddings --config " + cfg.string());
    ASSERT_EQ(r.code, 0) << r.err;
    auto emb = read_csv(out / "embeddings.csv");
    ASSERT_EQ(emb.size(), 1u + n_train + n_test);
    EXPECT_EQ(emb[0], (std::vector<std::string>{"id", "p0", "p1", "p2", "cluster", "label"}));
    EXPECT_FALSE(emb[1][4].empty());
    EXPECT_EQ(cli().run("export-embeddings --config " + cfg.string() + " --out-dim 4").code, 0);
    EXPECT_EQ(read_csv(out / "embeddings.csv")[0].size(), 4u + 3u);
    r = cli().run("export-embeddings --config " + cfg.string() + " --out-dim 5");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("out_dim"), std::string::npos);
}

TEST_F(CliTest, GammaZeroLossEqualsAutoencoderLoss) {
    const fs::path cfg = write_config("gamma0", "gamma = 0\n");
    ASSERT_EQ(cli().run("pretrain --config " + cfg.string()).code, 0);
    ASSERT_EQ(cli().run("refine --config " + cfg.string()).code, 0);
    auto log = read_csv(cfg.parent_path() / "refine_log.csv");
    for (std::size_t i = 1; i < log.size(); ++i) EXPECT_EQ(log[i][1], log[i][3]);
}

TEST_F(CliTest, RefineNeedsCentroidInitAndMatchingCheckpoint) {
    const fs::path cfg = write_config("mismatch");
    ASSERT_EQ(cli().run("pretrain --config " + cfg.string()).code, 0);
    const fs::path other = write_config("mismatch_other", "encoder_maps = 3\n");
    RunResult r = cli().run("refine --config " + other.string() + " --checkpoint " +
                            (cfg.parent_path() / "model.ckpt").string());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("encoder_maps"), std::string::npos) << r.err;

    const fs::path noinit = write_config("noinit", "centroid_init =\n");
    r = cli().run("refine --config " + noinit.string() + " --checkpoint " + (cfg.parent_path() / "model.ckpt").string());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("centroid_init"), std::string::npos);

    std::string bytes = slurp(cfg.parent_path() / "model.ckpt");
    bytes[bytes.size() / 2] ^= 0x01;
    std::ofstream(cfg.parent_path() / "bad.ckpt", std::ios::binary) << bytes;
    r = cli().run("refine --config " + cfg.string() + " --checkpoint " + (cfg.parent_path() / "bad.ckpt").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("checksum"), std::string::npos);
}

TEST_F(CliTest, EvaluatePerfectShuffledAndMissingLabels) {
    const fs::path cfg = write_config("eval");
    const fs::path out = cfg.parent_path();
    ExperimentConfig c = load_config(cfg);
    LoadedData d = load_dataset(c);
    std::vector<int> truth = *d.train.labels;
    truth.insert(truth.end(), d.test.labels->begin(), d.test.labels->end());

    write_file_atomic(out / "perfect.csv", labels_csv(truth));
    ASSERT_EQ(cli().run("evaluate --config " + cfg.string() + " --labels " + (out / "perfect.csv").string()).code, 0);
    const std::string perfect = slurp(out / "report.csv");
    auto rows = read_csv(out / "report.csv");
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i][1], "1");
        EXPECT_EQ(rows[i][2], "1");
    }

    // Swap cluster ids and write rows in reverse order.
    std::ostringstream shuffled;
    shuffled << "id,cluster\n";
    for (std::size_t i = truth.size(); i-- > 0;) shuffled << i << ',' << (truth[i] == 0 ? 5 : 3) << '\n';
    write_file_atomic(out / "shuffled.csv", shuffled.str());
    ASSERT_EQ(cli().run("evaluate --config " + cfg.string() + " --labels " + (out / "shuffled.csv").string()).code, 0);
    EXPECT_EQ(slurp(out / "report.csv"), perfect);

    std::vector<int> partial(truth.begin(), truth.end() - 3);
    write_file_atomic(out / "partial.csv", labels_csv(partial));
    RunResult r = cli().run("evaluate --config " + cfg.string() + " --labels " + (out / "partial.csv").string());
    EXPECT_EQ(r.code, 1);
    const std::size_t n = truth.size();
    EXPECT_NE(r.err.find(std::to_string(n - 3) + "," + std::to_string(n - 2) + "," + std::to_string(n - 1)),
              std::string::npos)
        << r.err;
}

TEST_F(CliTest, BaselineRawOnSeparableBlobs) {
    // Two constant-level classes far apart: raw-space k-means must be exact.
    const fs::path data = dir / "blobs";
    fs::create_directories(data);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> noise(0.0, 0.1);
    for (const char* split : {"train", "test"}) {
        for (int cls = 0; cls < 2; ++cls) {
            std::ofstream f(data / (std::string(split) + "_" + std::to_string(cls) + ".csv"));
            f << "t,c0,c1,label\n";
            for (int t = 0; t < 96; ++t) {
                const double level = cls == 0 ? -3.0 : 3.0;
                f << t << ',' << level + noise(rng) << ',' << -level + noise(rng) << ',' << cls << '\n';
            }
        }
    }
    std::ofstream(data / "manifest.csv") << "split,path\ntrain,train_0.csv\ntrain,train_1.csv\ntest,test_0.csv\ntest,test_1.csv\n";
    const fs::path out = dir / "baseline";
    fs::create_directories(out);
    std::ofstream(out / "config.txt") << "manifest = ../blobs/manifest.csv\nwindow = 16\nk = 2\n"
                                      << "encoder_maps = 2\nembedding_dim = 4\ndecoder_hidden = 4\n";
    const std::string cfg = (out / "config.txt").string();
    for (const char* algo : {"kmeans", "ac-average", "ac-complete", "ac-ward"}) {
        RunResult r = cli().run("baseline --config " + cfg + " --space raw --algo " + algo);
        ASSERT_EQ(r.code, 0) << algo << ": " << r.err;
        auto rows = read_csv(out / ("baseline_raw_" + std::string(algo) + "_report.csv"));
        ASSERT_EQ(rows.size(), 3u);
        EXPECT_EQ(rows[1][1], "1") << algo;
        EXPECT_EQ(rows[2][1], "1") << algo;
        EXPECT_TRUE(fs::exists(out / ("baseline_raw_" + std::string(algo) + "_labels.csv")));
    }
    RunResult r = cli().run("baseline --config " + cfg + " --space raw --algo dbscan");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("kmeans, ac-average, ac-complete, ac-ward"), std::string::npos);
    r = cli().run("baseline --config " + cfg + " --space embedding --algo kmeans");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("checkpoint"), std::string::npos);
    EXPECT_EQ(cli().run("baseline --config " + cfg + " --space latent").code, 1);
}

TEST_F(CliTest, BaselineEmbeddingUsesCheckpoint) {
    const fs::path cfg = write_config("base_emb");
    ASSERT_EQ(cli().run("pretrain --config " + cfg.string()).code, 0);
    RunResult r = cli().run("baseline --config " + cfg.string() + " --space embedding --algo ac-ward");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto [n_train, n_test] = split_sizes(cfg);
    EXPECT_EQ(read_csv(cfg.parent_path() / "baseline_embedding_ac-ward_labels.csv").size(), 1u + n_train + n_test);
}
