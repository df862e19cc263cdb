#pragma once

// Replicated campaigns: configuration, per-replica artifacts, metric reports,
// ranking tables and histogram/falsification exports.

#include "wogan/eval.hpp"
#include "wogan/wogan.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace wogan {

enum class GeneratorKind { Wogan, Random };

struct MetricSettings {
    double q_lower = 0.25;
    /// Empty: the SUT's own kind and bound.
    std::optional<SimilarityKind> similarity;
    std::optional<double> bound;
};

struct ExperimentConfig {
    std::string name = "campaign";
    std::string sut = "oscillator";
    nlohmann::json sut_params = nlohmann::json::object();
    /// Empty: the SUT's default requirement.
    std::string requirement;
    GeneratorKind generator = GeneratorKind::Wogan;
    WoganConfig wogan{};
    std::size_t replicas = 1;
    std::size_t sample_size = 300;
    MetricSettings metrics{};
    std::uint64_t seed = 0;
    std::filesystem::path output = "runs";
    std::size_t jobs = 1;

    void validate() const;
    /// Fully resolved: requirement and similarity settings filled in.
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::filesystem::path& file);
};

/// The SUT, requirement and similarity a config refers to.
struct Resolved {
    std::unique_ptr<Sut> sut;
    stl::Formula requirement;
    SimilarityKind similarity;
    double bound;
};

Resolved resolve(const ExperimentConfig& config);

/// Output root, overridden by the WOGAN_OUTPUT_DIR environment variable.
std::filesystem::path output_root(const ExperimentConfig& config);

struct ReplicaOutcome {
    std::size_t index = 0;
    bool ok = false;
    std::string error;
    std::filesystem::path dir;
};

struct CampaignRun {
    std::filesystem::path dir;
    std::vector<ReplicaOutcome> replicas;
};

/// Writes <root>/<name>/config.json and one replica-XXX directory per replica.
/// Finished replicas appear atomically; failed ones as replica-XXX.failed
/// with error.json.
CampaignRun cmd_run(const ExperimentConfig& config);

/// The evaluation sample of one replica as stored in sample.csv.
Sample read_sample(const std::filesystem::path& file);
std::vector<Test> read_tests(const std::filesystem::path& file);

struct ReplicaMetrics {
    std::size_t index = 0;
    double diversity = 0.0;
    QuantileScores scores;
    DiversityLoss loss;
    std::size_t falsifying = 0;
};

struct CampaignReport {
    std::string name;
    std::vector<ReplicaMetrics> replicas;
    std::vector<std::size_t> failed;
    ScoreSummary summary;
    double mean_loss = 0.0;
    LossCategory loss_category = LossCategory::Negligible;
    FalsificationMetrics falsification;

    nlohmann::json to_json() const;
};

/// Computes per-replica and aggregate metrics, writing metrics.csv and summary.json.
CampaignReport cmd_evaluate(const std::filesystem::path& dir);

struct RankingRow {
    std::string name;
    ScoreSummary summary;
    std::size_t count = 0;
    std::size_t rank = 0;
};

/// Ranks campaigns by their summary.json (evaluated first when missing).
std::vector<RankingRow> cmd_rank(const std::vector<std::filesystem::path>& dirs);
std::string ranking_csv(const std::vector<RankingRow>& rows);
std::string ranking_table(const std::vector<RankingRow>& rows);

inline constexpr std::size_t kHistogramBins = 50;

struct CampaignExport {
    std::vector<std::size_t> histogram;  // kHistogramBins counts over [0,1]
    FalsificationMetrics falsification;
};

/// Writes histogram.csv and falsification.csv.
CampaignExport cmd_report(const std::filesystem::path& dir);

std::size_t histogram_bin(double rho_bar);

/// Writes `content` to `file` through a temporary sibling and a rename.
void write_atomic(const std::filesystem::path& file, const std::string& content);
std::string read_file(const std::filesystem::path& file);

/// Error class name used in machine-readable error records.
std::string error_kind(const std::exception& e);

}  // namespace wogan
