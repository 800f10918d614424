#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "disc/checkpoint.hpp"
#include "disc/model.hpp"
#include "disc/train.hpp"
#include "gradcheck.hpp"

using namespace disc;

namespace {

void zero_all(const std::vector<NamedTensor>& params) {
    for (auto p : params) {
        auto v = p.tensor.mutable_data();
        std::fill(v.begin(), v.end(), 0.0);
    }
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool grad = false) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = n(rng);
    return Tensor::from(std::move(shape), std::move(v), grad);
}

ModelConfig tiny_config() {
    ModelConfig c;
    c.channels = 2;
    c.encoder_maps = 4;
    c.embedding_dim = 4;
    c.decoder_hidden = 8;
    return c;
}

std::vector<SampleTriple> random_triples(std::size_t count, std::size_t window, std::size_t channels,
                                         std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<SampleTriple> out;
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<double> w(window * channels);
        for (auto& v : w) v = n(rng);
        out.push_back(make_triple(w, window, channels));
    }
    return out;
}

Batch whole_batch(const std::vector<SampleTriple>& triples, std::size_t channels) {
    std::vector<std::size_t> idx(triples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return make_batch(triples, idx, channels);
}

}  // namespace

TEST(ConvGru, ZeroWeightsFixedPoint) {
    std::mt19937_64 rng(1);
    ConvGruCell cell(1, 3, 3, rng);
    zero_all(cell.parameters("c"));
    Tensor h = cell.step(Tensor::zeros({2, 3, 5}), random_tensor({2, 1, 5}, rng));
    for (double v : h.data()) EXPECT_EQ(v, 0.0);
}

TEST(ConvGru, ZeroWeightsHalveState) {
    std::mt19937_64 rng(2);
    ConvGruCell cell(2, 3, 3, rng);
    zero_all(cell.parameters("c"));
    Tensor prev = random_tensor({1, 3, 4}, rng);
    Tensor h = cell.step(prev, random_tensor({1, 2, 4}, rng));
    for (std::size_t i = 0; i < h.size(); ++i) EXPECT_DOUBLE_EQ(h[i], 0.5 * prev[i]);
}

TEST(ConvGru, SpatialMismatchRejected) {
    std::mt19937_64 rng(3);
    ConvGruCell cell(1, 2, 3, rng);
    EXPECT_THROW(cell.step(Tensor::zeros({1, 2, 4}), Tensor::zeros({1, 1, 5})), ShapeError);
    EXPECT_EQ(cell.step(Tensor::zeros({1, 2, 7}), Tensor::zeros({1, 1, 7})).shape(), (Shape{1, 2, 7}));
}

TEST(ConvGru, StateIsConvexCombinationOfCandidateAndPrevious) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        ConvGruCell cell(2, 3, 3, rng);
        Tensor prev = random_tensor({2, 3, 5}, rng), x = random_tensor({2, 2, 5}, rng);
        // Recompute the candidate from the same parameters.
        Tensor g = sigmoid(conv1d(concat({prev, x}, 1), cell.w_g, cell.b_g));
        Tensor cand = disc::tanh(conv1d(concat({x, mul(g, prev)}, 1), cell.w_c, cell.b_c));
        Tensor h = cell.step(prev, x);
        for (std::size_t i = 0; i < h.size(); ++i) {
            EXPECT_GE(h[i], std::min(cand[i], prev[i]) - 1e-15);
            EXPECT_LE(h[i], std::max(cand[i], prev[i]) + 1e-15);
        }
    }
}

TEST(ConvGru, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(5);
    ConvGruCell cell(2, 3, 3, rng);
    for (auto p : cell.parameters("c")) {
        auto v = p.tensor.mutable_data();
        for (auto& e : v) e = std::normal_distribution<double>(0.0, 0.5)(rng);
    }
    Tensor prev = random_tensor({2, 3, 4}, rng, true), x = random_tensor({2, 2, 4}, rng, true);
    Tensor weights = random_tensor({2, 3, 4}, rng);
    std::vector<std::pair<std::string, Tensor>> params{{"h_prev", prev}, {"x", x}};
    for (auto& p : cell.parameters("cell")) params.emplace_back(p.name, p.tensor);
    auto loss = [&] { return sum(mul(cell.step(prev, x), weights)); };
    for (const auto& m : disc::testing::check_gradients(loss, params, 1e-5)) {
        EXPECT_LT(m.rel_error, 1e-4) << m.name << "[" << m.index << "]";
    }
}

TEST(Encoder, FullSizeEmbeddingHas256Entries) {
    ModelConfig c;  // full-size defaults
    DiscModel model(c, 1);
    model.set_mode(NormMode::eval);
    NoGradGuard ng;
    std::mt19937_64 rng(6);
    Tensor z = model.encode(random_tensor({1, 64, 9}, rng));
    EXPECT_EQ(z.shape(), (Shape{1, 256}));
    EXPECT_EQ(model.encoder_cell(1, 0).hidden_maps + model.encoder_cell(1, 1).hidden_maps, 512u);
}

TEST(Encoder, ZeroInputAndWeightsGiveBatchNormShift) {
    DiscModel model(tiny_config(), 2);
    zero_all(model.parameters());
    Tensor shift = model.batchnorm().shift;
    auto s = shift.mutable_data();
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = 0.25 * static_cast<double>(i) - 0.3;
    for (NormMode mode : {NormMode::train, NormMode::eval}) {
        model.set_mode(mode);
        Tensor z = model.encode(Tensor::zeros({3, 4, 2}));
        for (std::size_t b = 0; b < 3; ++b)
            for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(z[b * 4 + j], s[j], 1e-12);
    }
}

TEST(Encoder, IdenticalInputsIdenticalEmbeddings) {
    DiscModel model(tiny_config(), 3);
    std::mt19937_64 rng(7);
    Tensor one = random_tensor({1, 4, 2}, rng);
    std::vector<double> twice(one.data().begin(), one.data().end());
    twice.insert(twice.end(), one.data().begin(), one.data().end());
    model.set_mode(NormMode::eval);
    Tensor z = model.encode(Tensor::from({2, 4, 2}, twice));
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(z[j], z[4 + j]);
}

TEST(Encoder, WrongInputShapeRejected) {
    DiscModel model(tiny_config(), 3);
    EXPECT_THROW(model.encode(Tensor::zeros({2, 4, 3})), ShapeError);
    EXPECT_THROW(model.encode(Tensor::zeros({2, 8})), ShapeError);
}

TEST(Decoder, BothOutputsHaveHalfWindowFrames) {
    DiscModel model(tiny_config(), 4);
    std::mt19937_64 rng(8);
    Reconstruction r = model.decode(random_tensor({3, 4}, rng), 5);
    EXPECT_EQ(r.rec.shape(), (Shape{3, 5, 2}));
    EXPECT_EQ(r.fut.shape(), (Shape{3, 5, 2}));
    EXPECT_THROW(model.decode(Tensor::zeros({3, 5}), 5), ShapeError);
}

TEST(Decoder, ZeroWeightsQuarterContextAfterTwoSteps) {
    std::mt19937_64 rng(9);
    Decoder dec(3, 3, rng);
    zero_all(dec.parameters("d"));
    auto head = dec.head_w.mutable_data();
    for (std::size_t i = 0; i < 3; ++i) head[i * 3 + i] = 1.0;
    Tensor context = Tensor::from({1, 3}, {0.8, -0.4, 2.0});
    Tensor frames = dec.run(context, 2, "d");
    for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_DOUBLE_EQ(frames[c], 0.5 * context[c]);
        EXPECT_DOUBLE_EQ(frames[3 + c], 0.25 * context[c]);
    }
}

TEST(Decoder, DecodersHaveIndependentParameters) {
    DiscModel model(tiny_config(), 5);
    std::mt19937_64 rng(10);
    Tensor z = random_tensor({2, 4}, rng);
    Reconstruction before = model.decode(z, 4);
    for (auto p : model.rec_decoder().parameters("r")) {
        for (auto& v : p.tensor.mutable_data()) v += 0.3;
    }
    Reconstruction after = model.decode(z, 4);
    EXPECT_TRUE(std::equal(before.fut.data().begin(), before.fut.data().end(), after.fut.data().begin()));
    EXPECT_FALSE(std::equal(before.rec.data().begin(), before.rec.data().end(), after.rec.data().begin()));
}

TEST(AeLoss, IsSumOfComponents) {
    DiscModel model(tiny_config(), 6);
    Batch batch = whole_batch(random_triples(3, 8, 2, 11), 2);
    AeLoss l = model.ae_loss(batch);
    EXPECT_EQ(l.total.item(), l.rec.item() + l.fut.item());
    EXPECT_GT(l.rec.item(), 0.0);
}

TEST(AeLoss, ZeroWhenOutputsMatchTargets) {
    DiscModel model(tiny_config(), 7);
    zero_all(model.parameters());
    // All-zero weights decode to zero frames; zero targets are then matched exactly.
    std::vector<SampleTriple> triples(2, make_triple(std::vector<double>(16, 0.0), 8, 2));
    EXPECT_EQ(model.ae_loss(whole_batch(triples, 2)).total.item(), 0.0);
}

TEST(AeLoss, GradientsMatchFiniteDifferencesOnMiniatureModel) {
    DiscModel model(tiny_config(), 8);
    Batch batch = whole_batch(random_triples(2, 8, 2, 12), 2);
    std::vector<std::pair<std::string, Tensor>> params;
    for (auto& p : model.parameters()) params.emplace_back(p.name, p.tensor);
    auto loss = [&] { return model.ae_loss(batch).total; };
    for (const auto& m : disc::testing::check_gradients(loss, params, 1e-5)) {
        EXPECT_LT(m.rel_error, 1e-4) << m.name << "[" << m.index << "]";
    }
}

TEST(Pretrain, LearningRateSchedule) {
    PretrainOptions o;
    o.lr = 2e-3;
    for (std::size_t e = 0; e < 70; ++e) EXPECT_EQ(scheduled_lr(o, e), 2e-3);
    for (std::size_t e = 70; e < 100; ++e) EXPECT_DOUBLE_EQ(scheduled_lr(o, e), 2e-4);
}

TEST(Pretrain, BatchesCoverEveryIndexOnce) {
    std::mt19937_64 rng(13);
    auto batches = make_batches(257, 256, rng);
    ASSERT_EQ(batches.size(), 1u);  // trailing singleton folded back
    EXPECT_EQ(batches[0].size(), 257u);
    auto more = make_batches(100, 32, rng);
    std::vector<std::size_t> all;
    for (auto& b : more) all.insert(all.end(), b.begin(), b.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(all[i], i);
}

TEST(Pretrain, OverfitsSingleSample) {
    DiscModel model(tiny_config(), 9);
    auto one = random_triples(1, 8, 2, 14);
    std::vector<SampleTriple> copies(2, one[0]);
    PretrainOptions o;
    o.batch_size = 2;
    o.epochs = 500;
    o.lr = 1e-2;
    o.decay_epoch = 500;
    PretrainResult r = pretrain(model, copies, o);
    ASSERT_FALSE(r.diverged) << r.message;
    const double first = r.history.front().rec + r.history.front().fut;
    const double last = r.history.back().rec + r.history.back().fut;
    EXPECT_LT(last, 1e-2);
    EXPECT_LT(last, 0.1 * first);
    // Downward trend: each 50-epoch block averages below the previous one.
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < 500; s += 50) {
        double block = 0.0;
        for (std::size_t e = s; e < s + 50; ++e) block += r.history[e].rec + r.history[e].fut;
        EXPECT_LT(block, prev) << "block starting at epoch " << s;
        prev = block;
    }
}

TEST(Pretrain, SameSeedSameHistory) {
    auto run = [] {
        DiscModel model(tiny_config(), 10);
        PretrainOptions o;
        o.batch_size = 4;
        o.epochs = 3;
        o.seed = 5;
        std::vector<double> out;
        for (auto& e : pretrain(model, random_triples(10, 8, 2, 15), o).history) {
            out.push_back(e.rec);
            out.push_back(e.fut);
        }
        return out;
    };
    EXPECT_EQ(run(), run());
}

TEST(Pretrain, RejectsTooFewWindows) {
    DiscModel model(tiny_config(), 10);
    EXPECT_THROW(pretrain(model, random_triples(1, 8, 2, 16), PretrainOptions{}), ConfigError);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
    DiscModel model(tiny_config(), 11);
    auto triples = random_triples(6, 8, 2, 17);
    PretrainOptions o;
    o.batch_size = 3;
    o.epochs = 2;
    pretrain(model, triples, o);
    NormStats stats{{0.1, 0.2}, {1.5, 2.5}};
    Matrix centroids(2, 4, std::vector<double>{1, 2, 3, 4, -1, -2, -3, -4});
    ClusterHead head(centroids, 0.2);
    const std::string bytes = serialize_checkpoint(model, &stats, &head, 42, "k = 2\n");

    Checkpoint back = deserialize_checkpoint(bytes);
    EXPECT_EQ(back.seed, 42u);
    EXPECT_EQ(back.config_text, "k = 2\n");
    ASSERT_TRUE(back.head);
    EXPECT_EQ(back.head->gamma, 0.2);
    ASSERT_TRUE(back.norm_stats);
    EXPECT_EQ(back.norm_stats->stddev, stats.stddev);
    EXPECT_EQ(back.model.batchnorm().running_var, model.batchnorm().running_var);
    EXPECT_EQ(encode_all(back.model, triples).values, encode_all(model, triples).values);
    EXPECT_EQ(serialize_checkpoint(back.model, &*back.norm_stats, &*back.head, 42, "k = 2\n"), bytes);
}

TEST(Checkpoint, FileRoundTrip) {
    auto dir = std::filesystem::temp_directory_path() / "disc_ckpt_test";
    std::filesystem::create_directories(dir);
    DiscModel model(tiny_config(), 12);
    save_checkpoint(dir / "m.ckpt", model, nullptr, nullptr, 3, "");
    Checkpoint back = load_checkpoint(dir / "m.ckpt");
    EXPECT_FALSE(back.head);
    EXPECT_FALSE(back.norm_stats);
    EXPECT_EQ(back.model.parameter_count(), model.parameter_count());
    EXPECT_THROW(load_checkpoint(dir / "absent.ckpt"), Error);
    std::filesystem::remove_all(dir);
}

TEST(Checkpoint, CorruptionDetected) {
    DiscModel model(tiny_config(), 13);
    const std::string bytes = serialize_checkpoint(model, nullptr, nullptr, 0, "");
    std::string flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x40;
    EXPECT_THROW(deserialize_checkpoint(flipped), Error);
    EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 9)), Error);
    EXPECT_THROW(deserialize_checkpoint("DISC2\n" + bytes.substr(6)), Error);
    EXPECT_THROW(deserialize_checkpoint(""), Error);
}

TEST(Checkpoint, ArchitectureMismatchNamesField) {
    ModelConfig a = tiny_config(), b = tiny_config();
    b.decoder_hidden = 16;
    try {
        require_same_architecture(a, b);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("decoder_hidden"), std::string::npos);
    }
    EXPECT_NO_THROW(require_same_architecture(a, tiny_config()));
}
