#include "wogan/error.hpp"
#include "wogan/wogan.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

using namespace wogan;

namespace {

// Forwards to a real SUT while counting simulations; optionally fails.
class CountingSut : public Sut {
public:
    explicit CountingSut(const Sut& inner, std::size_t fail_after = 0) : inner_(inner), fail_after_(fail_after) {}

    std::string name() const override { return inner_.name(); }
    std::size_t dimension() const override { return inner_.dimension(); }
    bool signal_input() const override { return inner_.signal_input(); }
    const SignalRanges& output_ranges() const override { return inner_.output_ranges(); }
    std::string default_requirement() const override { return inner_.default_requirement(); }
    bool has_validity() const override { return inner_.has_validity(); }
    bool valid(const wogan::Test& t) const override { return inner_.valid(t); }
    Trace simulate(const wogan::Test& t) const override {
        ++calls;
        if (fail_after_ && calls > fail_after_) throw ExecutionError("simulator crashed");
        return inner_.simulate(t);
    }

    mutable std::size_t calls = 0;

private:
    const Sut& inner_;
    std::size_t fail_after_;
};

Repository repo_of(const std::vector<double>& rhos) {
    Repository r;
    for (double v : rhos) r.add({v}, v, Source::Random);
    return r;
}

WoganConfig small_config(std::size_t budget, std::size_t random_budget) {
    WoganConfig c;
    c.budget = budget;
    c.random_budget = random_budget;
    return c;
}

}  // namespace

TEST(Repository, AppendOnlyWithIncreasingIterations) {
    Repository r;
    r.add({0.1, 0.2}, 0.5, Source::Random);
    r.add({0.3, 0.4}, 0.0, Source::Wgan);
    EXPECT_EQ(r[0].iteration, 0u);
    EXPECT_EQ(r[1].iteration, 1u);
    EXPECT_THROW(r.add({0.0, 0.0}, 1.5, Source::Random), RangeError);
    EXPECT_THROW(r.add({0.0}, 0.5, Source::Random), DimensionError);
    const Repository back = Repository::from_jsonl(r.to_jsonl());
    EXPECT_EQ(back.to_jsonl(), r.to_jsonl());
    EXPECT_EQ(back[1].source, Source::Wgan);
    EXPECT_THROW(Repository::from_jsonl("{\"iteration\":3,\"source\":\"random\",\"rho_bar\":0.1,\"test\":[0]}\n"),
                 FormatError);
}

TEST(Config, JsonRoundTripAndValidation) {
    WoganConfig c;
    c.explore = 0.21;
    c.ablation.random_sampler = true;
    c.remaining = RemainingRule::Linear;
    const WoganConfig back = WoganConfig::from_json(c.to_json());
    EXPECT_EQ(back.to_json(), c.to_json());
    EXPECT_THROW(WoganConfig::from_json({{"budget", 10}, {"random_budget", 20}}), PreconditionError);
    EXPECT_THROW(WoganConfig::from_json({{"alpha", 1.0}}), PreconditionError);
    EXPECT_THROW(WoganConfig::from_json({{"bogus", 1}}), SchemaError);
    EXPECT_THROW(WoganConfig::from_json({{"train", {{"lr", "x"}}}}), SchemaError);
}

TEST(Rejection, ConstantOneNeedsExactly180Draws) {
    // 1 - 0.95^k >= 1 - 1e-4 first at k = ceil(ln 1e-4 / ln 0.95)
    const auto k = static_cast<std::size_t>(std::ceil(std::log(1e-4) / std::log(0.95)));
    ASSERT_EQ(k, 180u);
    RejectionStats stats;
    std::size_t calls = 0;
    rejection_sample([&] { return wogan::Test{static_cast<double>(calls++)}; }, [](const wogan::Test&) { return 1.0; },
                     0.95, 1e-4, &stats);
    EXPECT_EQ(stats.draws, 180u);
    EXPECT_EQ(calls, 180u);
    EXPECT_NEAR(stats.threshold, 1.0 - std::pow(0.95, 180), 1e-12);
}

TEST(Rejection, ConstantZeroAcceptsFirstDraw) {
    RejectionStats stats;
    std::size_t calls = 0;
    const auto t = rejection_sample([&] { return wogan::Test{static_cast<double>(calls++)}; },
                                    [](const wogan::Test&) { return 0.0; }, 0.95, 1e-4, &stats);
    EXPECT_EQ(stats.draws, 1u);
    EXPECT_EQ(t[0], 0.0);
    EXPECT_NEAR(stats.threshold, 0.05, 1e-15);
}

TEST(Rejection, ReturnsQueueMinimumAndRespectsBound) {
    Rng rng(21);
    const std::size_t bound = rejection_draw_bound(0.95, 1e-4);
    EXPECT_EQ(bound, 181u);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<wogan::Test> drawn;
        // coordinate in [-1,1] mapped to (0,1)
        const auto t = rejection_sample(
            [&] {
                drawn.push_back({uniform(rng, -1.0, 1.0)});
                return drawn.back();
            },
            [](const wogan::Test& x) { return (x[0] + 1.0) / 2.0; }, 0.95);
        double best = 2.0;
        for (const auto& d : drawn) best = std::min(best, d[0]);
        EXPECT_EQ(t[0], best);
        EXPECT_LE(drawn.size(), bound);
        // the threshold trace must not have stopped earlier
        for (std::size_t k = 1; k < drawn.size(); ++k) {
            double m = 2.0;
            for (std::size_t i = 0; i < k; ++i) m = std::min(m, (drawn[i][0] + 1.0) / 2.0);
            EXPECT_GT(m - 1e-4, 1.0 - std::pow(0.95, static_cast<double>(k)) + 1e-12);
        }
    }
}

TEST(Quantile, LinearEndpoints) {
    EXPECT_DOUBLE_EQ(compute_quantile(1.0), 0.5);
    EXPECT_DOUBLE_EQ(compute_quantile(0.0), 0.1);
    EXPECT_DOUBLE_EQ(compute_quantile(0.5), 0.3);
    EXPECT_THROW(compute_quantile(1.5), RangeError);
}

TEST(Bins, AllZeroGoesToBinOne) {
    const auto p = bin_tests(repo_of({0, 0, 0, 0}), 0.5, 10);
    EXPECT_EQ(p.rho_max, 0.0);
    EXPECT_EQ(p.bin(1), (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(p.bin(p.sink()), (std::vector<std::size_t>{2, 3}));
}

TEST(Bins, HandTraceOfTenRecords) {
    const auto p = bin_tests(repo_of({0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}), 0.5, 10);
    EXPECT_DOUBLE_EQ(p.rho_max, 0.4);
    // bin of k/10 is floor(10 k / 4) + 1, the maximum forced into bin 10
    const std::vector<std::size_t> expected{1, 3, 6, 8, 10, 11, 11, 11, 11, 11};
    EXPECT_EQ(p.bin_of, expected);
    EXPECT_EQ(p.bin(p.sink()).size(), 5u);
}

TEST(Bins, SingleBinHoldsWholeQuantileAndTiesFollowInsertion) {
    const auto p = bin_tests(repo_of({0.3, 0.1, 0.3, 0.3, 0.9}), 0.6, 1);
    // lower ceil(0.6 * 5) = 3 records: 0.1 and the first two 0.3s
    EXPECT_EQ(p.bin(1), (std::vector<std::size_t>{0, 1, 2}));
    EXPECT_EQ(p.bin(2), (std::vector<std::size_t>{3, 4}));
    EXPECT_THROW(bin_tests(Repository{}, 0.5, 10), PreconditionError);
}

TEST(Weights, StatedArithmetic) {
    std::vector<double> rhos;
    for (int i = 0; i < 10; ++i) rhos.push_back(0.1 * i);
    const auto full = compute_weights(bin_tests(repo_of(rhos), 1.0, 10));
    for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(full[i], (10.0 - i) / 55.0, 1e-15);

    BinPartition only3{10, 1.0, {2}, std::vector<std::vector<std::size_t>>(11)};
    only3.members[2] = {0};
    const auto w3 = compute_weights(only3);
    EXPECT_EQ(w3[2], 1.0);
    EXPECT_EQ(std::accumulate(w3.begin(), w3.end(), 0.0), 1.0);

    const auto w2 = compute_weights(bin_tests(repo_of({0.0, 1.0}), 1.0, 2));
    EXPECT_NEAR(w2[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(w2[1], 1.0 / 3.0, 1e-15);
}

TEST(QuantileSample, NewRule) {
    Rng rng(22);
    // all quantile mass in bin 1: record 0 is NEW and must always enter
    const Repository all_zero = repo_of({0.0, 0.0, 0.5, 0.6, 0.7, 0.8});
    for (int trial = 0; trial < 50; ++trial) {
        const auto b = quantile_sample(all_zero, {0}, 1.0, 2, rng);
        ASSERT_TRUE(b.entries[0].via_new);
        EXPECT_EQ(b.entries[0].record, 0u);
    }
    // a NEW test in the sink never passes the rule
    for (int trial = 0; trial < 50; ++trial) {
        const auto b = quantile_sample(all_zero, {5}, 1.0, 3, rng);
        for (const auto& e : b.entries) EXPECT_FALSE(e.via_new);
    }
}

TEST(QuantileSample, ExhaustsSmallRepository) {
    Rng rng(23);
    const auto b = quantile_sample(repo_of({0.9, 0.1, 0.5, 0.3, 0.7}), {4}, 1.0, 32, rng);
    ASSERT_EQ(b.entries.size(), 5u);
    const auto recs = b.records();
    EXPECT_EQ(std::set<std::size_t>(recs.begin(), recs.end()).size(), 5u);
    EXPECT_TRUE(audit_batch(b));
}

TEST(QuantileSample, BatchesPassTheAuditOnRandomRepositories) {
    Rng rng(24);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + uniform_index(rng, 120);
        Repository repo;
        for (std::size_t i = 0; i < n; ++i) {
            // coarse values to create ties and zero runs
            const double v = uniform01(rng) < 0.3 ? 0.0 : std::round(uniform01(rng) * 20.0) / 20.0;
            repo.add({v}, v, Source::Random);
        }
        std::vector<std::size_t> fresh;
        for (std::size_t i = n - std::min<std::size_t>(3, n); i < n; ++i) fresh.push_back(i);
        const double r = uniform01(rng);
        const auto b = quantile_sample(repo, fresh, r, 32, rng);
        ASSERT_EQ(b.entries.size(), std::min<std::size_t>(32, n));
        ASSERT_TRUE(audit_batch(b)) << "trial " << trial;
    }
}

TEST(QuantileSample, AuditCatchesForgedBatches) {
    Rng rng(25);
    const Repository repo = repo_of({0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9});
    auto b = quantile_sample(repo, {9}, 1.0, 3, rng);
    ASSERT_TRUE(audit_batch(b));
    auto forged = b;
    forged.entries.push_back({9, 11, true});  // sink test claimed via NEW
    EXPECT_FALSE(audit_batch(forged));
    forged = b;
    forged.entries[0].bin = forged.entries[0].bin % 10 + 1;  // wrong bin label
    EXPECT_FALSE(audit_batch(forged));
    forged = b;
    forged.entries.push_back(forged.entries[0]);
    EXPECT_FALSE(audit_batch(forged));
}

TEST(OnlineTraining, EpochCountAndQuantileMembership) {
    Rng rng(26);
    Repository repo;
    for (int i = 0; i < 80; ++i) {
        const auto t = uniform_box(rng, 3);
        repo.add(t, (t[0] + 1.0) / 2.0, Source::Random);
    }
    ModelBundle bundle(3, 10, false, rng);
    WoganConfig config;
    std::size_t calls = 0;
    const std::vector<std::size_t> fresh{77, 78, 79};
    const auto lower = bin_tests(repo, 0.5, 10);
    const auto diags = train_wgan_online(bundle, repo, fresh, 1.0, config, rng, [&](const TrainingBatch& b) {
        ++calls;
        EXPECT_EQ(b.entries.size(), 32u);
        for (const auto& e : b.entries) {
            const bool in_quantile = lower.bin_of[e.record] <= 10;
            EXPECT_TRUE(in_quantile || (e.via_new && std::count(fresh.begin(), fresh.end(), e.record)));
        }
    });
    EXPECT_EQ(calls, 2u);
    EXPECT_EQ(diags.size(), 2u);
}

TEST(Remaining, ListingIsClampedAndLinearReachesZero) {
    WoganConfig c;
    c.budget = 300;
    c.random_budget = 75;
    EXPECT_EQ(remaining_fraction(c, 75), 1.0);
    EXPECT_DOUBLE_EQ(remaining_fraction(c, 270), 30.0 / 75.0);
    EXPECT_EQ(remaining_fraction(c, 300), 0.0);
    c.remaining = RemainingRule::Linear;
    EXPECT_DOUBLE_EQ(remaining_fraction(c, 75), 1.0);
    EXPECT_DOUBLE_EQ(remaining_fraction(c, 150), 150.0 / 225.0);
}

TEST(WoganRun, PureRandomPhase) {
    const MultimodalSut mm;
    const CountingSut sut(mm);
    const auto res = wogan_run(sut, stl::parse(mm.default_requirement()), small_config(5, 5), 1);
    EXPECT_EQ(res.repository.size(), 5u);
    EXPECT_TRUE(res.training_events.empty());
    EXPECT_EQ(sut.calls, 5u);
    for (const auto& r : res.repository.records()) EXPECT_EQ(r.source, Source::Random);
}

TEST(WoganRun, TrainingScheduleMatchesListing) {
    const MultimodalSut mm;
    const CountingSut sut(mm);
    const auto res = wogan_run(sut, stl::parse(mm.default_requirement()), small_config(80, 75), 2);
    // replay of the main loop with theta = 0
    std::vector<std::size_t> expected;
    std::size_t last = 0;
    for (std::size_t size = 0; size < 80; ++size) {
        if (size < 75) continue;
        if (size - last >= 3) {
            expected.push_back(size);
            last = size;
        }
    }
    EXPECT_EQ(res.training_events, expected);
    EXPECT_EQ(expected, (std::vector<std::size_t>{75, 78}));
    EXPECT_EQ(sut.calls, 80u);
    for (std::size_t i = 0; i < 80; ++i) {
        EXPECT_EQ(res.repository[i].source, i < 75 ? Source::Random : Source::Wgan);
    }
}

TEST(WoganRun, DeterministicBytes) {
    const OscillatorSut osc;
    const auto f = stl::parse(osc.default_requirement());
    const auto a = wogan_run(osc, f, small_config(90, 75), 3);
    const auto b = wogan_run(osc, f, small_config(90, 75), 3);
    EXPECT_EQ(a.repository.to_jsonl(), b.repository.to_jsonl());
    EXPECT_EQ(a.bundle.to_json().dump(), b.bundle.to_json().dump());
    const auto c = wogan_run(osc, f, small_config(90, 75), 4);
    EXPECT_NE(a.repository.to_jsonl(), c.repository.to_jsonl());
}

TEST(WoganRun, ExplorationCadenceAndAudit) {
    const MultimodalSut mm;
    const CountingSut sut(mm);
    auto config = small_config(120, 20);
    config.explore = 0.3;
    std::size_t batches = 0;
    RunHooks hooks;
    hooks.on_batch = [&](const TrainingBatch& b) {
        ++batches;
        EXPECT_TRUE(audit_batch(b));
    };
    const auto res = wogan_run(sut, stl::parse(mm.default_requirement()), config, 5, hooks);
    EXPECT_EQ(sut.calls, 120u);
    std::size_t explored = 0;
    for (const auto& r : res.repository.records()) explored += r.source == Source::Explore;
    EXPECT_GT(explored, 10u);
    for (std::size_t i = 1; i < res.training_events.size(); ++i) {
        EXPECT_GE(res.training_events[i] - res.training_events[i - 1], 3u);
    }
    EXPECT_EQ(batches, 2 * res.training_events.size());
}

TEST(WoganRun, AbortKeepsPartialRepository) {
    const MultimodalSut mm;
    const CountingSut sut(mm, 7);
    try {
        wogan_run(sut, stl::parse(mm.default_requirement()), small_config(20, 10), 6);
        FAIL() << "expected an abort";
    } catch (const RunAborted& e) {
        EXPECT_EQ(e.partial().size(), 7u);
    }
}

TEST(WoganRun, AblationsRun) {
    const MultimodalSut mm;
    const auto f = stl::parse(mm.default_requirement());
    auto config = small_config(84, 75);
    config.ablation.random_sampler = true;
    std::size_t uniform_batches = 0;
    RunHooks hooks;
    hooks.on_batch = [&](const TrainingBatch& b) { uniform_batches += b.uniform; };
    wogan_run(mm, f, config, 7, hooks);
    EXPECT_EQ(uniform_batches, 6u);

    config = small_config(80, 75);
    config.ablation.perfect_analyzer = true;
    const CountingSut counted(mm);
    const auto res = wogan_run(counted, f, config, 8);
    EXPECT_EQ(res.repository.size(), 80u);
    EXPECT_EQ(counted.calls, 80u + res.perfect_analyzer_executions);
    EXPECT_GT(res.perfect_analyzer_executions, 0u);

    config = small_config(80, 75);
    config.ablation.random_analyzer = true;
    EXPECT_EQ(wogan_run(mm, f, config, 9).repository.size(), 80u);
}

TEST(WoganRun, PathFollowTestsAreValid) {
    const PathFollowSut pf(9);
    const auto res = wogan_run(pf, stl::parse(pf.default_requirement()), small_config(85, 75), 10);
    for (const auto& r : res.repository.records()) EXPECT_TRUE(pf.valid(r.test));
    Rng rng(11);
    const auto suite = generator_sample_suite(res.bundle, 50, pf, rng);
    ASSERT_EQ(suite.size(), 50u);
    for (const auto& t : suite) {
        EXPECT_TRUE(pf.valid(t));
        for (double v : t) EXPECT_LE(std::abs(v), 1.0);
    }
}

TEST(Suite, NoEstimatorEqualsRawDraws) {
    const MultimodalSut mm;
    Rng init(12);
    const ModelBundle bundle(3, 10, false, init);
    Rng a(13), b(13);
    SuiteOptions raw;
    raw.estimator = SuiteEstimator::None;
    const auto suite = generator_sample_suite(bundle, 20, mm, a, raw);
    for (const auto& t : suite) EXPECT_EQ(t, sample_generator(bundle, 1, b)[0]);
    EXPECT_THROW(generator_sample_suite(bundle, 1, mm, a, {.estimator = SuiteEstimator::Perfect}),
                 PreconditionError);
    EXPECT_THROW(generator_sample_suite(bundle, 1, OscillatorSut{}, a), DimensionError);
}
