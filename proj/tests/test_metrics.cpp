#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "disc/metrics.hpp"
#include "disc/pca.hpp"

using namespace disc;

namespace {

double brute_force_cost(const Matrix& cost) {
    std::vector<std::size_t> perm(cost.rows);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = std::numeric_limits<double>::infinity();
    do {
        double c = 0.0;
        for (std::size_t i = 0; i < cost.rows; ++i) c += cost(i, perm[i]);
        best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

double joint_histogram_nmi(const std::vector<int>& a, const std::vector<int>& b) {
    const double n = static_cast<double>(a.size());
    std::map<int, double> pa, pb;
    std::map<std::pair<int, int>, double> pab;
    for (std::size_t i = 0; i < a.size(); ++i) {
        pa[a[i]] += 1.0 / n;
        pb[b[i]] += 1.0 / n;
        pab[{a[i], b[i]}] += 1.0 / n;
    }
    double ha = 0, hb = 0, mi = 0;
    for (auto& [k, p] : pa) ha -= p * std::log(p);
    for (auto& [k, p] : pb) hb -= p * std::log(p);
    for (auto& [k, p] : pab) mi += p * std::log(p / (pa[k.first] * pb[k.second]));
    return ha + hb == 0.0 ? 1.0 : 2.0 * mi / (ha + hb);
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(rows, cols);
    for (auto& v : m.values) v = n(rng);
    return m;
}

}  // namespace

TEST(Hungarian, DiagonalOptimum) {
    Matrix cost(3, 3, 1.0);
    for (std::size_t i = 0; i < 3; ++i) cost(i, i) = 0.0;
    Assignment a = hungarian(cost);
    EXPECT_EQ(a.column_of_row, (std::vector<std::size_t>{0, 1, 2}));
    EXPECT_EQ(a.cost, 0.0);
}

TEST(Hungarian, SwapOptimum) {
    Assignment a = hungarian(Matrix(2, 2, std::vector<double>{1, 0, 0, 1}));
    EXPECT_EQ(a.column_of_row, (std::vector<std::size_t>{1, 0}));
    EXPECT_EQ(a.cost, 0.0);
}

TEST(Hungarian, MatchesBruteForceOnIntegerMatrices) {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> v(0, 9);
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 1 + static_cast<std::size_t>(t % 7);
        Matrix cost(n, n);
        for (auto& c : cost.values) c = v(rng);
        EXPECT_EQ(hungarian(cost).cost, brute_force_cost(cost));
    }
}

TEST(Hungarian, Errors) {
    EXPECT_THROW(hungarian(Matrix(2, 3)), ShapeError);
    Matrix bad(2, 2);
    bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(hungarian(bad), Error);
    EXPECT_TRUE(hungarian(Matrix()).column_of_row.empty());
}

TEST(Accuracy, Relabeling) {
    auto r = clustering_accuracy({0, 0, 1, 1, 2, 2}, {2, 2, 0, 0, 1, 1});
    EXPECT_EQ(r.acc, 1.0);
    EXPECT_EQ(r.mapping, (std::map<int, int>{{2, 0}, {0, 1}, {1, 2}}));
}

TEST(Accuracy, HalfRight) { EXPECT_EQ(clustering_accuracy({0, 0, 1, 1}, {0, 1, 0, 1}).acc, 0.5); }

TEST(Accuracy, IdentityMapping) {
    auto r = clustering_accuracy({0, 1, 2, 1}, {0, 1, 2, 1});
    EXPECT_EQ(r.acc, 1.0);
    for (auto [c, l] : r.mapping) EXPECT_EQ(c, l);
}

TEST(Accuracy, MoreClustersThanClasses) {
    // Only two of the three clusters can be mapped; the best choice covers 5 of 6.
    auto r = clustering_accuracy({0, 0, 0, 1, 1, 1}, {0, 0, 1, 2, 2, 2});
    EXPECT_NEAR(r.acc, 5.0 / 6.0, 1e-15);
    EXPECT_EQ(r.mapping.size(), 2u);
}

TEST(Accuracy, Errors) {
    EXPECT_THROW(clustering_accuracy({}, {}), ConfigError);
    EXPECT_THROW(clustering_accuracy({0}, {0, 1}), ShapeError);
}

TEST(Nmi, Examples) {
    EXPECT_NEAR(nmi({0, 0, 1, 1}, {1, 1, 0, 0}), 1.0, 1e-15);
    EXPECT_NEAR(nmi({0, 0, 1, 1}, {0, 1, 0, 1}), 0.0, 1e-15);
    EXPECT_EQ(nmi({3, 3, 3}, {1, 1, 1}), 1.0);
    EXPECT_THROW(nmi({}, {}), ConfigError);
}

TEST(Nmi, MatchesJointHistogram) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 200; ++t) {
        const std::size_t m = 1 + static_cast<std::size_t>(t % 12);
        std::vector<int> a(m), b(m);
        for (auto& v : a) v = std::uniform_int_distribution<int>(0, 3)(rng);
        for (auto& v : b) v = std::uniform_int_distribution<int>(0, 4)(rng);
        EXPECT_NEAR(nmi(a, b), joint_histogram_nmi(a, b), 1e-12);
        EXPECT_NEAR(nmi(a, b), nmi(b, a), 1e-15);
    }
}

TEST(Metrics, InvariantUnderClusterRelabeling) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 30; ++t) {
        std::vector<int> truth(40), pred(40);
        for (auto& v : truth) v = std::uniform_int_distribution<int>(0, 3)(rng);
        for (auto& v : pred) v = std::uniform_int_distribution<int>(0, 4)(rng);
        std::vector<int> ids{7, 2, 9, 0, 4};
        std::shuffle(ids.begin(), ids.end(), rng);
        std::vector<int> renamed(40);
        for (std::size_t i = 0; i < 40; ++i) renamed[i] = ids[static_cast<std::size_t>(pred[i])];
        EXPECT_EQ(clustering_accuracy(truth, pred).acc, clustering_accuracy(truth, renamed).acc);
        EXPECT_NEAR(nmi(truth, pred), nmi(truth, renamed), 1e-15);
    }
}

TEST(Metrics, EvaluateReportsSizesAndBounds) {
    EvalReport r = evaluate({0, 0, 1, 1, 1}, {5, 5, 5, 6, 6});
    EXPECT_EQ(r.cluster_sizes, (std::map<int, std::size_t>{{5, 3}, {6, 2}}));
    EXPECT_EQ(r.table.n, 5u);
    EXPECT_GE(r.nmi, 0.0);
    EXPECT_LE(r.nmi, 1.0);
    EXPECT_NEAR(r.acc, 0.8, 1e-15);
}

TEST(Pca, EigenvaluesMatchReferenceSolver) {
    std::mt19937_64 rng(4);
    Matrix z = random_matrix(10, 6, rng);
    PcaResult r = pca_project(z, 6);
    Eigen::MatrixXd x(10, 6);
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 6; ++j) x(i, j) = z(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    Eigen::MatrixXd cov = centered.transpose() * centered / 9.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    for (int j = 0; j < 6; ++j) {
        EXPECT_NEAR(r.eigenvalues[static_cast<std::size_t>(j)], solver.eigenvalues()(5 - j), 1e-9);
        // Same direction up to sign.
        double dot = 0.0;
        for (int f = 0; f < 6; ++f) {
            dot += solver.eigenvectors()(f, 5 - j) * r.components(static_cast<std::size_t>(f), static_cast<std::size_t>(j));
        }
        EXPECT_NEAR(std::abs(dot), 1.0, 1e-9);
    }
}

TEST(Pca, PlanarDataReconstructsExactly) {
    std::mt19937_64 rng(5);
    Matrix z(30, 4);
    const double u[4] = {1, 2, 0, -1}, v[4] = {0, 1, 1, 1}, offset[4] = {3, -2, 1, 0.5};
    for (std::size_t i = 0; i < 30; ++i) {
        const double a = std::normal_distribution<double>(0, 2)(rng), b = std::normal_distribution<double>(0, 1)(rng);
        for (std::size_t f = 0; f < 4; ++f) z(i, f) = offset[f] + a * u[f] + b * v[f];
    }
    PcaResult r = pca_project(z, 2);
    for (std::size_t i = 0; i < 30; ++i)
        for (std::size_t f = 0; f < 4; ++f) {
            double rec = r.mean[f];
            for (std::size_t j = 0; j < 2; ++j) rec += r.projected(i, j) * r.components(f, j);
            EXPECT_NEAR(rec, z(i, f), 1e-9);
        }
}

TEST(Pca, FullDimensionPreservesDistances) {
    std::mt19937_64 rng(6);
    Matrix z = random_matrix(12, 5, rng);
    PcaResult r = pca_project(z, 5);
    for (std::size_t i = 0; i < 12; ++i)
        for (std::size_t j = i + 1; j < 12; ++j) {
            EXPECT_NEAR(squared_distance(r.projected.row(i), r.projected.row(j)), squared_distance(z.row(i), z.row(j)),
                        1e-9);
        }
}

TEST(Pca, ProjectedColumnsUncorrelatedAndSignFixed) {
    std::mt19937_64 rng(7);
    Matrix z = random_matrix(40, 6, rng);
    PcaResult r = pca_project(z, 4);
    for (std::size_t a = 0; a < 4; ++a) {
        for (std::size_t b = a + 1; b < 4; ++b) {
            double cov = 0.0;
            for (std::size_t i = 0; i < 40; ++i) cov += r.projected(i, a) * r.projected(i, b) / 39.0;
            EXPECT_LT(std::abs(cov), 1e-9);
        }
        std::size_t big = 0;
        for (std::size_t f = 1; f < 6; ++f) {
            if (std::abs(r.components(f, a)) > std::abs(r.components(big, a))) big = f;
        }
        EXPECT_GT(r.components(big, a), 0.0);
    }
    EXPECT_TRUE(std::is_sorted(r.eigenvalues.rbegin(), r.eigenvalues.rend()));
}

TEST(Pca, RankDeficientPaddedWithWarning) {
    Matrix z(5, 3);
    for (std::size_t i = 0; i < 5; ++i) z(i, 0) = static_cast<double>(i);
    PcaResult r = pca_project(z, 3);
    ASSERT_EQ(r.warnings.size(), 1u);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_EQ(r.projected(i, 1), 0.0);
        EXPECT_EQ(r.projected(i, 2), 0.0);
    }
}

TEST(Pca, Errors) {
    EXPECT_THROW(pca_project(Matrix(1, 3), 1), ConfigError);
    EXPECT_THROW(pca_project(Matrix(4, 3), 4), ConfigError);
    EXPECT_THROW(pca_project(Matrix(4, 3), 0), ConfigError);
}
