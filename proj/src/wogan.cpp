#include "wogan/wogan.hpp"

#include "wogan/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace wogan {

using nn::Tensor;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

// ------------------------------------------------------------ repository

std::string to_string(Source s) {
    switch (s) {
        case Source::Random: return "random";
        case Source::Explore: return "explore";
        case Source::Wgan: return "wgan";
    }
    return "random";
}

Source source_from_string(const std::string& s) {
    if (s == "random") return Source::Random;
    if (s == "explore") return Source::Explore;
    if (s == "wgan") return Source::Wgan;
    throw FormatError("unknown record source '" + s + "'");
}

const RepositoryRecord& Repository::add(Test test, double rho_bar, Source source) {
    if (!(rho_bar >= 0.0 && rho_bar <= 1.0)) throw RangeError("scaled robustness outside [0,1]");
    if (!records_.empty() && test.size() != records_.front().test.size()) {
        throw DimensionError("repository tests must share one dimension");
    }
    records_.push_back({std::move(test), rho_bar, records_.size(), source});
    return records_.back();
}

std::vector<Test> Repository::tests() const {
    std::vector<Test> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(r.test);
    return out;
}

std::vector<double> Repository::rho_bars() const {
    std::vector<double> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(r.rho_bar);
    return out;
}

std::string Repository::to_jsonl() const {
    std::string out;
    for (const auto& r : records_) {
        const nlohmann::json j{{"iteration", r.iteration}, {"source", to_string(r.source)}, {"rho_bar", r.rho_bar},
                               {"test", r.test}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

Repository Repository::from_jsonl(const std::string& text) {
    Repository repo;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            const auto& r = repo.add(j.at("test").get<Test>(), j.at("rho_bar").get<double>(),
                                     source_from_string(j.at("source").get<std::string>()));
            if (j.at("iteration").get<std::size_t>() != r.iteration) throw FormatError("repository iterations out of order");
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("bad repository line: ") + e.what());
        }
    }
    return repo;
}

// ------------------------------------------------------------ config

void WoganConfig::validate() const {
    if (random_budget < 1 || random_budget > budget) throw PreconditionError("need 1 <= B_R <= B");
    if (!(explore >= 0.0 && explore <= 1.0)) throw PreconditionError("exploration probability must lie in [0,1]");
    if (training_delay < 1) throw PreconditionError("training delay must be at least 1");
    if (latent_dim < 1) throw PreconditionError("latent dimension must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw PreconditionError("alpha must lie in (0,1)");
    if (!(epsilon > 0.0)) throw PreconditionError("epsilon must be positive");
    if (bins < 1) throw PreconditionError("at least one bin is needed");
    if (validity_attempts < 1) throw PreconditionError("validity_attempts must be positive");
    const double q0 = quantile_intercept, q1 = quantile_slope + quantile_intercept;
    if (!(q0 > 0.0 && q0 <= 1.0 && q1 > 0.0 && q1 <= 1.0)) throw PreconditionError("quantile line must stay in (0,1]");
    if (ablation.random_analyzer && ablation.perfect_analyzer) {
        throw PreconditionError("random and perfect analyzer ablations exclude each other");
    }
    hyper.validate();
}

nlohmann::json WoganConfig::to_json() const {
    return {{"budget", budget},
            {"random_budget", random_budget},
            {"explore", explore},
            {"training_delay", training_delay},
            {"latent_dim", latent_dim},
            {"alpha", alpha},
            {"epsilon", epsilon},
            {"bins", bins},
            {"quantile_slope", quantile_slope},
            {"quantile_intercept", quantile_intercept},
            {"remaining", remaining == RemainingRule::Listing ? "listing" : "linear"},
            {"validity_attempts", validity_attempts},
            {"ablation",
             {{"random_sampler", ablation.random_sampler},
              {"random_analyzer", ablation.random_analyzer},
              {"no_analyzer_sampling", ablation.no_analyzer_sampling},
              {"perfect_analyzer", ablation.perfect_analyzer}}},
            {"train",
             {{"lambda_gp", hyper.lambda_gp},
              {"n_critic", hyper.n_critic},
              {"batch_size", hyper.batch_size},
              {"wgan_epochs", hyper.wgan_epochs},
              {"analyzer_epochs", hyper.analyzer_epochs},
              {"analyzer_lambda", hyper.analyzer_lambda},
              {"lr", hyper.adam.lr},
              {"beta1", hyper.adam.beta1},
              {"beta2", hyper.adam.beta2},
              {"adam_eps", hyper.adam.eps}}}};
}

namespace {

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out, std::set<std::string>& seen) {
    if (!j.contains(key)) return;
    seen.insert(key);
    out = j.at(key).get<T>();
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& seen, const std::string& where) {
    for (const auto& [k, v] : j.items()) {
        if (!seen.count(k)) throw SchemaError("unknown key '" + k + "' in " + where);
    }
}

}  // namespace

WoganConfig WoganConfig::from_json(const nlohmann::json& j) {
    WoganConfig c;
    try {
        if (!j.is_object()) throw SchemaError("wogan config must be an object");
        std::set<std::string> seen;
        read_key(j, "budget", c.budget, seen);
        read_key(j, "random_budget", c.random_budget, seen);
        read_key(j, "explore", c.explore, seen);
        read_key(j, "training_delay", c.training_delay, seen);
        read_key(j, "latent_dim", c.latent_dim, seen);
        read_key(j, "alpha", c.alpha, seen);
        read_key(j, "epsilon", c.epsilon, seen);
        read_key(j, "bins", c.bins, seen);
        read_key(j, "quantile_slope", c.quantile_slope, seen);
        read_key(j, "quantile_intercept", c.quantile_intercept, seen);
        read_key(j, "validity_attempts", c.validity_attempts, seen);
        std::string rule = "listing";
        read_key(j, "remaining", rule, seen);
        if (rule == "listing") {
            c.remaining = RemainingRule::Listing;
        } else if (rule == "linear") {
            c.remaining = RemainingRule::Linear;
        } else {
            throw SchemaError("remaining must be 'listing' or 'linear'");
        }
        if (j.contains("ablation")) {
            seen.insert("ablation");
            const auto& a = j.at("ablation");
            std::set<std::string> s;
            read_key(a, "random_sampler", c.ablation.random_sampler, s);
            read_key(a, "random_analyzer", c.ablation.random_analyzer, s);
            read_key(a, "no_analyzer_sampling", c.ablation.no_analyzer_sampling, s);
            read_key(a, "perfect_analyzer", c.ablation.perfect_analyzer, s);
            reject_unknown(a, s, "ablation");
        }
        if (j.contains("train")) {
            seen.insert("train");
            const auto& t = j.at("train");
            std::set<std::string> s;
            read_key(t, "lambda_gp", c.hyper.lambda_gp, s);
            read_key(t, "n_critic", c.hyper.n_critic, s);
            read_key(t, "batch_size", c.hyper.batch_size, s);
            read_key(t, "wgan_epochs", c.hyper.wgan_epochs, s);
            read_key(t, "analyzer_epochs", c.hyper.analyzer_epochs, s);
            read_key(t, "analyzer_lambda", c.hyper.analyzer_lambda, s);
            read_key(t, "lr", c.hyper.adam.lr, s);
            read_key(t, "beta1", c.hyper.adam.beta1, s);
            read_key(t, "beta2", c.hyper.adam.beta2, s);
            read_key(t, "adam_eps", c.hyper.adam.eps, s);
            reject_unknown(t, s, "train");
        }
        reject_unknown(j, seen, "wogan config");
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("bad wogan config: ") + e.what());
    }
    c.validate();
    return c;
}

// ------------------------------------------------------------ rejection sampling

Test rejection_sample(const Candidates& draw, const Estimator& estimate, double alpha, double epsilon,
                      RejectionStats* stats) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw PreconditionError("alpha must lie in (0,1)");
    if (!(epsilon > 0.0)) throw PreconditionError("epsilon must be positive");
    // Only the queue minimum is ever read, so a running minimum stands in for it.
    Test best;
    double best_estimate = 0.0;
    double threshold = 0.0;
    std::size_t draws = 0;
    do {
        Test candidate = draw();
        const double e = estimate(candidate);
        if (draws == 0 || e < best_estimate) {
            best = std::move(candidate);
            best_estimate = e;
        }
        ++draws;
        threshold = 1.0 - alpha * (1.0 - threshold);
    } while (best_estimate - epsilon > threshold);
    if (stats) *stats = {draws, threshold, best_estimate};
    return best;
}

std::size_t rejection_draw_bound(double alpha, double epsilon) {
    return static_cast<std::size_t>(std::ceil(std::log(epsilon) / std::log(alpha))) + 1;
}

// ------------------------------------------------------------ quantile sampler

double compute_quantile(double remaining, double slope, double intercept) {
    if (!(remaining >= 0.0 && remaining <= 1.0)) throw RangeError("remaining fraction must lie in [0,1]");
    return slope * remaining + intercept;
}

BinPartition bin_tests(const Repository& repository, double quantile, std::size_t bins) {
    if (repository.empty()) throw PreconditionError("cannot bin an empty repository");
    if (!(quantile > 0.0 && quantile <= 1.0)) throw RangeError("quantile must lie in (0,1]");
    if (bins < 1) throw PreconditionError("at least one bin is needed");

    const std::size_t n = repository.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return repository[a].rho_bar < repository[b].rho_bar; });
    // Slack keeps products like 0.3 * 10 from rounding up to 4.
    const double want = quantile * static_cast<double>(n);
    const std::size_t k = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(want - 1e-9)), 1, n);

    BinPartition p;
    p.bins = bins;
    p.rho_max = repository[order[k - 1]].rho_bar;
    p.bin_of.assign(n, bins + 1);
    p.members.assign(bins + 1, {});
    const double width = p.rho_max / static_cast<double>(bins);
    for (std::size_t j = 0; j < k; ++j) {
        const double rho = repository[order[j]].rho_bar;
        std::size_t i = 1;
        if (p.rho_max > 0.0) {
            if (rho >= p.rho_max) {
                i = bins;
            } else {
                i = std::min(bins, static_cast<std::size_t>(std::floor(rho / width)) + 1);
                while (i > 1 && rho < static_cast<double>(i - 1) * width) --i;
                while (i < bins && rho >= static_cast<double>(i) * width) ++i;
            }
        }
        p.bin_of[order[j]] = i;
    }
    for (std::size_t r = 0; r < n; ++r) p.members[p.bin_of[r] - 1].push_back(r);
    return p;
}

std::vector<double> compute_weights(const BinPartition& partition) {
    std::vector<double> w(partition.bins, 0.0);
    double total = 0.0;
    for (std::size_t i = 1; i <= partition.bins; ++i) {
        if (partition.bin(i).empty()) continue;
        w[i - 1] = static_cast<double>(partition.bins - i + 1);
        total += w[i - 1];
    }
    if (total > 0.0) {
        for (auto& v : w) v /= total;
    }
    return w;
}

std::size_t sample_bin_index(const std::vector<double>& weights, Rng& rng) {
    const double u = uniform01(rng);
    double cum = 0.0;
    std::size_t last = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        cum += weights[i];
        last = i;
        if (u < cum) return i + 1;
    }
    return last + 1;
}

std::vector<std::size_t> TrainingBatch::records() const {
    std::vector<std::size_t> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.record);
    return out;
}

TrainingBatch quantile_sample(const Repository& repository, const std::vector<std::size_t>& fresh, double remaining,
                              std::size_t sample_size, Rng& rng, std::size_t bins, double slope, double intercept) {
    if (sample_size < 1) throw PreconditionError("sample size must be positive");
    TrainingBatch batch;
    batch.quantile = compute_quantile(remaining, slope, intercept);
    batch.partition = bin_tests(repository, batch.quantile, bins);
    batch.weights = compute_weights(batch.partition);
    batch.fresh = fresh;
    const std::size_t size = std::min(sample_size, repository.size());
    auto pools = batch.partition.members;
    auto take = [&](std::size_t bin, std::size_t pos, bool via_new) {
        auto& pool = pools[bin - 1];
        batch.entries.push_back({pool[pos], bin, via_new});
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pos));
    };

    for (std::size_t r : fresh) {
        if (r >= repository.size()) throw PreconditionError("NEW test not in the repository");
        const std::size_t i = batch.partition.bin_of[r];
        const std::size_t drawn = sample_bin_index(batch.weights, rng);
        if (batch.entries.size() >= size || i > drawn) continue;
        auto& pool = pools[i - 1];
        const auto it = std::find(pool.begin(), pool.end(), r);
        if (it == pool.end()) continue;  // repeated NEW entry
        take(i, static_cast<std::size_t>(it - pool.begin()), true);
    }
    while (batch.entries.size() < size) {
        std::size_t i = sample_bin_index(batch.weights, rng);
        // Past the sink the search wraps to bin 1; only reachable when the
        // sink itself has run dry.
        while (pools[i - 1].empty()) i = i % (bins + 1) + 1;
        take(i, uniform_index(rng, pools[i - 1].size()), false);
    }
    return batch;
}

TrainingBatch uniform_sample(const Repository& repository, std::size_t sample_size, Rng& rng) {
    if (sample_size < 1) throw PreconditionError("sample size must be positive");
    if (repository.empty()) throw PreconditionError("cannot sample an empty repository");
    TrainingBatch batch;
    batch.uniform = true;
    std::vector<std::size_t> pool(repository.size());
    std::iota(pool.begin(), pool.end(), 0);
    const std::size_t size = std::min(sample_size, repository.size());
    while (batch.entries.size() < size) {
        const std::size_t pos = uniform_index(rng, pool.size());
        batch.entries.push_back({pool[pos], 0, false});
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pos));
    }
    return batch;
}

bool audit_batch(const TrainingBatch& batch) {
    std::set<std::size_t> seen;
    for (const auto& e : batch.entries) {
        if (!seen.insert(e.record).second) return false;
    }
    if (batch.uniform) return true;
    const auto& p = batch.partition;
    const std::set<std::size_t> fresh(batch.fresh.begin(), batch.fresh.end());
    // A draw only lands in the sink after every bin from the drawn one upwards
    // ran dry, so the highest non-empty bin must then be exhausted.
    std::size_t top = 0;
    for (std::size_t i = p.bins; i >= 1; --i) {
        if (!p.bin(i).empty()) {
            top = i;
            break;
        }
    }
    bool sink_used = false;
    for (const auto& e : batch.entries) {
        if (e.record >= p.bin_of.size() || p.bin_of[e.record] != e.bin) return false;
        if (e.via_new) {
            if (!fresh.count(e.record) || e.bin > p.bins) return false;
        } else {
            sink_used = sink_used || e.bin == p.sink();
        }
    }
    if (sink_used && top > 0) {
        for (std::size_t r : p.bin(top)) {
            if (!seen.count(r)) return false;
        }
    }
    return true;
}

std::vector<WganDiagnostics> train_wgan_online(ModelBundle& bundle, const Repository& repository,
                                               const std::vector<std::size_t>& fresh, double remaining,
                                               const WoganConfig& config, Rng& rng, const BatchObserver& observer) {
    if (repository.size() < 2) throw PreconditionError("online WGAN training needs at least 2 records");
    std::vector<WganDiagnostics> diags;
    for (std::size_t e = 0; e < config.hyper.wgan_epochs; ++e) {
        const std::size_t size = std::min(repository.size(), config.hyper.batch_size);
        const TrainingBatch batch = config.ablation.random_sampler
                                        ? uniform_sample(repository, size, rng)
                                        : quantile_sample(repository, fresh, remaining, size, rng, config.bins,
                                                          config.quantile_slope, config.quantile_intercept);
        if (observer) observer(batch);
        std::vector<Test> tests;
        tests.reserve(batch.entries.size());
        for (const auto& entry : batch.entries) tests.push_back(repository[entry.record].test);
        diags.push_back(wgan_step(bundle, tests_to_tensor(tests, bundle.dim), config.hyper, rng));
    }
    return diags;
}

// ------------------------------------------------------------ main loop

double remaining_fraction(const WoganConfig& config, std::size_t executed) {
    const double left = static_cast<double>(config.budget) - static_cast<double>(executed);
    double r = 0.0;
    if (config.remaining == RemainingRule::Listing) {
        r = left / static_cast<double>(config.random_budget);
    } else if (config.budget > config.random_budget) {
        r = left / static_cast<double>(config.budget - config.random_budget);
    }
    return std::clamp(r, 0.0, 1.0);
}

Test sample_valid_uniform(const Sut& sut, Rng& rng, std::size_t attempts) {
    for (std::size_t a = 0; a < attempts; ++a) {
        Test t = uniform_box(rng, sut.dimension());
        if (sut.valid(t)) return t;
    }
    throw ExecutionError("no valid uniform test for " + sut.name() + " after " + std::to_string(attempts) + " attempts");
}

namespace {

// Invalid candidates get the worst estimate so they are never preferred.
double perfect_estimate(const Sut& sut, const stl::Formula& requirement, const Test& t) {
    if (!sut.valid(t)) return 1.0;
    return execute(sut, requirement, t).robustness.scaled;
}

Test sample_valid(const Sut& sut, std::size_t attempts, const std::function<Test()>& draw) {
    for (std::size_t a = 0; a < attempts; ++a) {
        Test t = draw();
        if (sut.valid(t)) return t;
    }
    throw ExecutionError("generator produced no valid test for " + sut.name() + " after " + std::to_string(attempts) +
                         " attempts");
}

}  // namespace

WoganResult wogan_run(const Sut& sut, const stl::Formula& requirement, const WoganConfig& config, std::uint64_t seed,
                      const RunHooks& hooks) {
    config.validate();
    const auto start = Clock::now();
    Rng rng(seed);
    WoganResult res;
    res.bundle = ModelBundle(sut.dimension(), config.latent_dim, sut.signal_input(), rng);
    Repository& repo = res.repository;
    std::size_t last_trained = 0;

    const Candidates draw = [&] { return sample_generator(res.bundle, 1, rng)[0]; };
    Estimator estimate;
    if (config.ablation.random_analyzer) {
        estimate = [&](const Test&) { return uniform01(rng); };
    } else if (config.ablation.perfect_analyzer) {
        estimate = [&](const Test& t) {
            ++res.perfect_analyzer_executions;
            return perfect_estimate(sut, requirement, t);
        };
    } else {
        estimate = [&](const Test& t) { return analyzer_estimate(res.bundle, t); };
    }
    const bool train_analyzer = !config.ablation.random_analyzer && !config.ablation.perfect_analyzer;

    while (repo.size() < config.budget) {
        Test test;
        Source source = Source::Wgan;
        const bool random_phase = repo.size() < config.random_budget;
        const bool explore = !random_phase && config.explore > 0.0 && uniform01(rng) < config.explore;
        auto t0 = Clock::now();
        if (random_phase || explore) {
            source = random_phase ? Source::Random : Source::Explore;
            test = sample_valid_uniform(sut, rng, config.validity_attempts);
            res.times.generation += seconds_since(t0);
        } else {
            if (repo.size() - last_trained >= config.training_delay) {
                // A single record cannot form a batch; the untrained models are sampled instead.
                if (repo.size() >= 2) {
                    if (train_analyzer) analyzer_train(res.bundle, repo.tests(), repo.rho_bars(), config.hyper);
                    const std::size_t d = std::min(config.training_delay, repo.size());
                    std::vector<std::size_t> fresh(d);
                    std::iota(fresh.begin(), fresh.end(), repo.size() - d);
                    train_wgan_online(res.bundle, repo, fresh, remaining_fraction(config, repo.size()), config, rng,
                                      hooks.on_batch);
                }
                last_trained = repo.size();
                res.training_events.push_back(repo.size());
                res.times.training += seconds_since(t0);
                t0 = Clock::now();
            }
            test = sample_valid(sut, config.validity_attempts,
                                [&] { return rejection_sample(draw, estimate, config.alpha, config.epsilon); });
            res.times.generation += seconds_since(t0);
        }

        t0 = Clock::now();
        double rho_bar = 0.0;
        try {
            rho_bar = execute(sut, requirement, test).robustness.scaled;
        } catch (const Error& e) {
            throw RunAborted(std::string("SUT execution failed: ") + e.what(), repo);
        }
        res.times.execution += seconds_since(t0);
        const auto& rec = repo.add(std::move(test), rho_bar, source);
        if (hooks.on_record) hooks.on_record(rec);
    }
    res.times.total = seconds_since(start);
    return res;
}

std::vector<Test> generator_sample_suite(const ModelBundle& bundle, std::size_t n, const Sut& sut, Rng& rng,
                                         const SuiteOptions& options, const stl::Formula* requirement) {
    if (sut.dimension() != bundle.dim) throw DimensionError("bundle and SUT dimensions differ");
    if (options.estimator == SuiteEstimator::Perfect && !requirement) {
        throw PreconditionError("perfect estimation needs the requirement");
    }
    const Candidates draw = [&] { return sample_generator(bundle, 1, rng)[0]; };
    Estimator estimate;
    switch (options.estimator) {
        case SuiteEstimator::Analyzer: estimate = [&](const Test& t) { return analyzer_estimate(bundle, t); }; break;
        case SuiteEstimator::None: estimate = [](const Test&) { return 0.0; }; break;
        case SuiteEstimator::Random: estimate = [&](const Test&) { return uniform01(rng); }; break;
        case SuiteEstimator::Perfect:
            estimate = [&](const Test& t) { return perfect_estimate(sut, *requirement, t); };
            break;
    }
    std::vector<Test> suite;
    suite.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        suite.push_back(sample_valid(sut, options.validity_attempts,
                                     [&] { return rejection_sample(draw, estimate, options.alpha, options.epsilon); }));
    }
    return suite;
}

}  // namespace wogan
