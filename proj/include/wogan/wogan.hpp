#pragma once

// The WOGAN main loop and its pieces: test repository, rejection sampling of
// the generator, the quantile training-data sampler and online WGAN training.

#include "wogan/error.hpp"
#include "wogan/models.hpp"
#include "wogan/sut.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace wogan {

enum class Source { Random, Explore, Wgan };

std::string to_string(Source s);
Source source_from_string(const std::string& s);

struct RepositoryRecord {
    Test test;
    double rho_bar = 0.0;
    std::size_t iteration = 0;
    Source source = Source::Random;
};

/// Append-only log of executed tests.
class Repository {
public:
    /// Appends with iteration = size(); rho_bar must lie in [0,1].
    const RepositoryRecord& add(Test test, double rho_bar, Source source);

    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    const RepositoryRecord& operator[](std::size_t i) const { return records_[i]; }
    const std::vector<RepositoryRecord>& records() const noexcept { return records_; }

    std::vector<Test> tests() const;
    std::vector<double> rho_bars() const;

    /// One JSON object per line.
    std::string to_jsonl() const;
    static Repository from_jsonl(const std::string& text);

private:
    std::vector<RepositoryRecord> records_;
};

/// How the remaining-budget fraction R handed to the sampler is computed.
enum class RemainingRule {
    Listing,  // (B - |T|) / B_R clamped to [0,1]
    Linear,   // (B - |T|) / (B - B_R), reaching 0 exactly at |T| = B
};

struct Ablation {
    bool random_sampler = false;        // uniform training batches instead of the quantile sampler
    bool random_analyzer = false;       // estimates drawn uniformly from [0,1]
    bool no_analyzer_sampling = false;  // final suite taken from raw generator draws
    bool perfect_analyzer = false;      // estimates from uncounted SUT executions
};

struct WoganConfig {
    std::size_t budget = 300;
    std::size_t random_budget = 75;
    double explore = 0.0;
    std::size_t training_delay = 3;
    std::size_t latent_dim = 10;
    double alpha = 0.95;
    double epsilon = 1e-4;
    std::size_t bins = 10;
    double quantile_slope = 0.4;
    double quantile_intercept = 0.1;
    RemainingRule remaining = RemainingRule::Listing;
    std::size_t validity_attempts = 100000;
    Ablation ablation{};
    TrainHyper hyper{};

    void validate() const;
    nlohmann::json to_json() const;
    /// Missing keys keep their defaults; unknown keys raise SchemaError.
    static WoganConfig from_json(const nlohmann::json& j);
};

// ------------------------------------------------------------ rejection sampling

using Estimator = std::function<double(const Test&)>;
using Candidates = std::function<Test()>;

struct RejectionStats {
    std::size_t draws = 0;
    double threshold = 0.0;
    double estimate = 0.0;
};

/// Draws candidates until min estimate - epsilon <= threshold, raising the
/// threshold as 1 - alpha (1 - threshold) after each draw. Returns the
/// candidate with the smallest estimate (first one on ties).
Test rejection_sample(const Candidates& draw, const Estimator& estimate, double alpha, double epsilon = 1e-4,
                      RejectionStats* stats = nullptr);

/// Upper bound on the draws of rejection_sample for estimates in [0,1].
std::size_t rejection_draw_bound(double alpha, double epsilon);

// ------------------------------------------------------------ quantile sampler

double compute_quantile(double remaining, double slope = 0.4, double intercept = 0.1);

struct BinPartition {
    std::size_t bins = 0;  // N_B; the sink has index bins + 1
    double rho_max = 0.0;
    /// bin_of[r] in 1..bins+1 for every repository record r.
    std::vector<std::size_t> bin_of;
    /// members[i - 1] lists the records of bin i, sink last.
    std::vector<std::vector<std::size_t>> members;

    std::size_t sink() const noexcept { return bins + 1; }
    const std::vector<std::size_t>& bin(std::size_t i) const { return members.at(i - 1); }
};

BinPartition bin_tests(const Repository& repository, double quantile, std::size_t bins);

/// Weights of bins 1..N_B (the sink always weighs 0, not stored).
std::vector<double> compute_weights(const BinPartition& partition);

/// Bin index in 1..N_B drawn with the given weights.
std::size_t sample_bin_index(const std::vector<double>& weights, Rng& rng);

struct BatchEntry {
    std::size_t record = 0;
    std::size_t bin = 0;
    bool via_new = false;
};

struct TrainingBatch {
    std::vector<BatchEntry> entries;
    BinPartition partition;
    std::vector<double> weights;
    std::vector<std::size_t> fresh;  // NEW, as repository indices
    double quantile = 0.0;
    bool uniform = false;  // drawn by the random-sampler ablation

    std::vector<std::size_t> records() const;
};

/// QUANTILE_SAMPLER; `fresh` lists repository indices of the NEW tests.
TrainingBatch quantile_sample(const Repository& repository, const std::vector<std::size_t>& fresh, double remaining,
                              std::size_t sample_size, Rng& rng, std::size_t bins = 10, double slope = 0.4,
                              double intercept = 0.1);

/// min(sample_size, |T|) distinct records drawn uniformly.
TrainingBatch uniform_sample(const Repository& repository, std::size_t sample_size, Rng& rng);

/// True when every entry is explained by its bin or by the NEW rule.
bool audit_batch(const TrainingBatch& batch);

using BatchObserver = std::function<void(const TrainingBatch&)>;

/// E_W epochs of one sampled batch and one wgan_step each.
std::vector<WganDiagnostics> train_wgan_online(ModelBundle& bundle, const Repository& repository,
                                               const std::vector<std::size_t>& fresh, double remaining,
                                               const WoganConfig& config, Rng& rng,
                                               const BatchObserver& observer = {});

// ------------------------------------------------------------ main loop

double remaining_fraction(const WoganConfig& config, std::size_t executed);

struct PhaseTimes {
    double generation = 0.0;  // seconds
    double training = 0.0;
    double execution = 0.0;
    double total = 0.0;
};

struct WoganResult {
    ModelBundle bundle;
    Repository repository;
    /// |T| at each training event.
    std::vector<std::size_t> training_events;
    std::size_t perfect_analyzer_executions = 0;
    PhaseTimes times;
};

/// Raised when the SUT fails mid-run; carries what was executed so far.
class RunAborted : public ExecutionError {
public:
    RunAborted(const std::string& what, Repository partial)
        : ExecutionError(what), partial_(std::move(partial)) {}

    const Repository& partial() const noexcept { return partial_; }

private:
    Repository partial_;
};

struct RunHooks {
    BatchObserver on_batch;
    std::function<void(const RepositoryRecord&)> on_record;
};

WoganResult wogan_run(const Sut& sut, const stl::Formula& requirement, const WoganConfig& config,
                      std::uint64_t seed, const RunHooks& hooks = {});

/// Uniform test that satisfies the SUT validity predicate.
Test sample_valid_uniform(const Sut& sut, Rng& rng, std::size_t attempts = 100000);

enum class SuiteEstimator { Analyzer, None, Random, Perfect };

struct SuiteOptions {
    double alpha = 0.95;
    double epsilon = 1e-4;
    SuiteEstimator estimator = SuiteEstimator::Analyzer;
    std::size_t validity_attempts = 100000;
};

/// n rejection-sampled generator draws, each redrawn until valid. Perfect
/// estimation needs `requirement`.
std::vector<Test> generator_sample_suite(const ModelBundle& bundle, std::size_t n, const Sut& sut, Rng& rng,
                                         const SuiteOptions& options = {},
                                         const stl::Formula* requirement = nullptr);

}  // namespace wogan
