#include "wogan/error.hpp"
#include "wogan/models.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace wogan;
using namespace wogan::nn;

namespace {

std::vector<wogan::Test> box_tests(Rng& rng, std::size_t n, std::size_t dim, double half) {
    std::vector<wogan::Test> out(n, wogan::Test(dim));
    for (auto& t : out) {
        for (auto& v : t) v = uniform(rng, -half, half);
    }
    return out;
}

std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
        i = j + 1;
    }
    return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    const auto ra = ranks(a), rb = ranks(b);
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / static_cast<double>(ra.size());
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / static_cast<double>(rb.size());
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

double mean_label(const wogan::Test& t) {
    return std::clamp(std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(t.size()) + 0.5, 0.0, 1.0);
}

Tensor random_batch(Rng& rng, const std::vector<wogan::Test>& pool, std::size_t m) {
    std::vector<wogan::Test> batch;
    for (std::size_t i = 0; i < m; ++i) batch.push_back(pool[uniform_index(rng, pool.size())]);
    return tests_to_tensor(batch, pool[0].size());
}

}  // namespace

TEST(Models, ArchitectureShapes) {
    EXPECT_EQ(generator_spec(10, 6).output_shape(), (Shape{6}));
    EXPECT_FALSE(critic_spec(6).has_batchnorm());
    EXPECT_EQ(critic_spec(6).output_shape(), (Shape{1}));
    const auto conv = analyzer_spec(6, true);
    EXPECT_EQ(conv.input_shape, (Shape{1, 6}));
    EXPECT_EQ(conv.output_shape(), (Shape{1}));
    EXPECT_EQ(analyzer_spec(3, false).output_shape(), (Shape{1}));
    EXPECT_FALSE(analyzer_spec(3, false).has_batchnorm());
}

TEST(Models, GeneratorOutputsStayInBox) {
    Rng rng(1);
    ModelBundle b(4, 10, false, rng);
    auto check = [&] {
        for (const auto& t : sample_generator(b, 10000, rng)) {
            for (double v : t) ASSERT_TRUE(v >= -1.0 && v <= 1.0);
        }
    };
    check();
    const auto real = box_tests(rng, 64, 4, 1.0);
    for (int i = 0; i < 20; ++i) wgan_step(b, random_batch(rng, real, 32), TrainHyper{}, rng);
    check();
}

TEST(Models, GeneratorSamplingIsDeterministic) {
    Rng a(3), b(3);
    ModelBundle m1(3, 10, false, a), m2(3, 10, false, b);
    EXPECT_EQ(sample_generator(m1, 20, a), sample_generator(m2, 20, b));
    EXPECT_THROW(sample_generator(m1, 0, a), PreconditionError);
}

TEST(Models, WganStepMovesCritic) {
    Rng rng(4);
    ModelBundle b(2, 10, false, rng);
    const auto before = b.critic.to_json()["params"];
    const auto diag = wgan_step(b, tests_to_tensor(box_tests(rng, 8, 2, 0.5), 2), TrainHyper{}, rng);
    EXPECT_NE(b.critic.to_json()["params"], before);
    EXPECT_EQ(b.critic.params().step, 5u);
    EXPECT_EQ(b.generator.params().step, 1u);
    EXPECT_TRUE(std::isfinite(diag.wasserstein));
    EXPECT_THROW(wgan_step(b, tests_to_tensor(box_tests(rng, 1, 2, 0.5), 2), TrainHyper{}, rng), PreconditionError);
}

TEST(Models, UnitLinearCriticOnIdenticalBatchesHasZeroLoss) {
    // f(x) = w·x with |w| = 1: penalty vanishes and the margin term cancels.
    Rng rng(5);
    Network critic({{2}, {dense(1)}}, rng);
    critic.params().set("L0.weight", Tensor({2, 1}, std::vector<double>{0.6, -0.8}));
    const Tensor x = tests_to_tensor(box_tests(rng, 16, 2, 1.0), 2);
    const Var margin = sub(mean(critic.forward(Var::constant(x), Mode::Train)),
                           mean(critic.forward(Var::constant(x), Mode::Train)));
    const Var gap = add_scalar(input_gradient_norm(critic, x), -1.0);
    EXPECT_EQ(margin.value().item(), 0.0);
    EXPECT_NEAR(mean(mul(gap, gap)).value().item(), 0.0, 1e-30);
}

TEST(Models, AnalyzerLossExamples) {
    EXPECT_EQ(analyzer_loss(0.3, 0.3), 0.0);
    EXPECT_EQ(analyzer_loss(0.5, 0.5), 0.0);
    EXPECT_EQ(analyzer_transform(0.5), 0.0);
    // direct evaluation of the formula
    auto logit = [](double p) { return std::log(p / (1.0 - p)); };
    const double t1 = logit(0.98 * 0.9 + 0.01) - logit(0.98 * 0.1 + 0.01);
    const double t2 = logit(0.98 * (0.5 - 0.4) + 0.01);
    EXPECT_GT(t1 * t1, 0.0);
    EXPECT_GT(t2 * t2, 0.0);
    EXPECT_NEAR(analyzer_loss(0.9, 0.1), t1 * t1 + 0.001 * t2 * t2, 1e-12);
    EXPECT_THROW(analyzer_loss(0.0, 0.5), RangeError);
    EXPECT_THROW(analyzer_loss(0.5, 1.5), RangeError);
}

TEST(Models, AnalyzerLossIsZeroOnlyOnDiagonal) {
    for (int i = 1; i <= 100; ++i) {
        for (int j = 1; j <= 100; ++j) {
            const double yhat = i / 101.0, y = j / 101.0;
            const double l = analyzer_loss(yhat, y);
            if (i == j) {
                EXPECT_EQ(l, 0.0);
            } else {
                EXPECT_GT(l, 0.0);
            }
        }
    }
}

TEST(Models, BatchAnalyzerLossMatchesScalar) {
    const std::vector<double> est{0.2, 0.7, 0.55}, lab{0.0, 1.0, 0.4};
    const Var v = analyzer_loss(Var::constant(Tensor({3, 1}, est)), lab, 0.001);
    double expected = 0.0;
    for (int i = 0; i < 3; ++i) expected += analyzer_loss(est[i], lab[i]) / 3.0;
    EXPECT_NEAR(v.value().item(), expected, 1e-12);
}

TEST(Models, AnalyzerTrainingImprovesSinglePoint) {
    Rng rng(6);
    ModelBundle b(6, 10, true, rng);
    const std::vector<wogan::Test> tests(5, wogan::Test{0.1, -0.3, 0.5, 0.9, -0.9, 0.0});
    const std::vector<double> labels(5, 0.2);
    const double before = analyzer_loss(analyzer_estimate(b, tests[0]), 0.2);
    const auto losses = analyzer_train(b, tests, labels, TrainHyper{});
    EXPECT_EQ(losses.size(), 10u);
    EXPECT_LE(analyzer_loss(analyzer_estimate(b, tests[0]), 0.2), before);
    EXPECT_THROW(analyzer_train(b, {}, {}, TrainHyper{}), PreconditionError);
}

TEST(Models, AnalyzerTrainingIsDeterministic) {
    Rng a(7), c(7);
    ModelBundle b1(3, 10, false, a), b2(3, 10, false, c);
    Rng data(8);
    const auto tests = box_tests(data, 50, 3, 1.0);
    std::vector<double> labels;
    for (const auto& t : tests) labels.push_back(mean_label(t));
    analyzer_train(b1, tests, labels, TrainHyper{});
    analyzer_train(b2, tests, labels, TrainHyper{});
    EXPECT_EQ(b1.analyzer.to_json(), b2.analyzer.to_json());
}

TEST(Models, AnalyzerTrainingReducesError) {
    Rng rng(9);
    for (bool signal : {false, true}) {
        ModelBundle b(6, 10, signal, rng);
        const auto tests = box_tests(rng, 200, 6, 1.0);
        std::vector<double> labels;
        for (const auto& t : tests) labels.push_back(mean_label(t));
        auto mae = [&] {
            const auto est = analyzer_estimate(b, tests);
            double s = 0.0;
            for (std::size_t i = 0; i < est.size(); ++i) s += std::abs(est[i] - labels[i]);
            return s / static_cast<double>(est.size());
        };
        const double before = mae();
        analyzer_train(b, tests, labels, TrainHyper{});
        EXPECT_LT(mae(), before) << (signal ? "conv" : "dense");
    }
}

TEST(Models, AnalyzerRanksHeldOutPoints) {
    Rng rng(10);
    ModelBundle b(3, 10, false, rng);
    const auto train = box_tests(rng, 200, 3, 1.0);
    std::vector<double> labels;
    for (const auto& t : train) labels.push_back(mean_label(t));
    const double untrained = analyzer_estimate(b, train[0]);
    EXPECT_TRUE(untrained > 0.0 && untrained < 1.0);
    EXPECT_EQ(analyzer_estimate(b, train[0]), untrained);
    for (int event = 0; event < 30; ++event) analyzer_train(b, train, labels, TrainHyper{});
    const auto held = box_tests(rng, 200, 3, 1.0);
    std::vector<double> truth;
    for (const auto& t : held) truth.push_back(mean_label(t));
    EXPECT_GT(spearman(analyzer_estimate(b, held), truth), 0.5);
}

TEST(Models, BundleCheckpointRoundTrip) {
    Rng rng(11);
    ModelBundle b(5, 10, true, rng);
    const auto j = b.to_json();
    const auto back = ModelBundle::from_json(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(back.to_json(), j);
}
