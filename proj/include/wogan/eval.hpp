#pragma once

// Generator evaluation: similarity, clustering, diversity, quantile scores,
// pairwise comparison with tournament ranking and falsification metrics.

#include "wogan/models.hpp"
#include "wogan/sut.hpp"

#include <functional>
#include <string>
#include <vector>

namespace wogan {

using Similarity = std::function<double(const Test&, const Test&)>;

/// 1 - 2 max_i |x_i - y_i|; negative for far-apart tests on [-1,1].
double similarity_maxnorm(const Test& a, const Test& b);

/// Sum of Euclidean gaps between corresponding control points of the roads
/// built from the (normalized) curvature tests.
double path_distance(const Test& a, const Test& b);

/// 1 - path_distance / scale, where scale stands for K_d (d + 1).
double similarity_path(const Test& a, const Test& b, double scale);

/// K_d (d + 1) quoted for d = 5, 7, 9 on the reference road geometry.
double reference_path_scale(std::size_t d);

/// K_d (d + 1) for this library's road geometry: slightly above the largest
/// distance to the all -1 test over a 5-point-per-axis grid.
double path_scale(std::size_t d);

Similarity similarity_for(SimilarityKind kind, std::size_t dim);

/// Lexicographic order, exact ties broken by the bytes of the coordinates.
bool lexicographic_less(const Test& a, const Test& b);

/// Greedy clustering of the lexicographically sorted tests.
std::vector<std::vector<Test>> cluster(std::vector<Test> tests, const Similarity& f, double bound);

/// Cluster count over sample size; 0 for an empty sample.
double diversity_score(const std::vector<Test>& tests, const Similarity& f, double bound);

enum class LossCategory { Negligible, Small, Moderate, Large };

std::string to_string(LossCategory c);
LossCategory loss_category(double ratio);

struct DiversityLoss {
    double ratio = 0.0;
    LossCategory category = LossCategory::Negligible;
};

/// D(sample) / D(reference); the reference must have the same size.
DiversityLoss diversity_loss(const std::vector<Test>& sample, const std::vector<Test>& reference, const Similarity& f,
                             double bound);

struct QuantileScores {
    double lower = 0.0;
    double upper = 0.0;
};

QuantileScores quantile_scores(std::vector<double> rho_bars, double q_lower = 0.25);

struct ScoreSummary {
    double mean_lower = 0.0;
    double mean_upper = 0.0;
    double sd_lower = 0.0;  // sample standard deviation (N - 1)
    double sd_upper = 0.0;
    double mean_diversity = 0.0;
    std::size_t replicas = 0;
    std::size_t sample_size = 0;
};

ScoreSummary summarize(const std::vector<QuantileScores>& scores, const std::vector<double>& diversity,
                       std::size_t sample_size);

/// Sample mean and standard deviation with N - 1 in the denominator (0 for N = 1).
std::pair<double, double> mean_sd(const std::vector<double>& values);

enum class Relation { Better, Worse, Equivalent };  // ≺, ≻, ∼

std::string to_string(Relation r);

/// Interval dominance of the L and U scores combined by the five rules.
Relation compare_generators(const ScoreSummary& a, const ScoreSummary& b);

/// C(G_i) = |{j : G_i ≺ G_j or G_i ∼ G_j}|, j = i included.
std::vector<std::size_t> tournament_counts(const std::vector<ScoreSummary>& summaries);

/// Dense ranks from counts: the highest count gets 1, the next group 2, ...
std::vector<std::size_t> ranks_from_counts(const std::vector<std::size_t>& counts);

std::vector<std::size_t> rank_generators(const std::vector<ScoreSummary>& summaries);

struct ScoredTest {
    Test test;
    double rho_bar = 0.0;
};

using Sample = std::vector<ScoredTest>;

struct FalsificationMetrics {
    double rate = 0.0;
    /// Mean cluster count of the falsifying subsets.
    double diversity = 0.0;
    double diversity_sd = 0.0;
    /// Mean of k / |F_i| (0 for samples without falsifiers).
    double normalized_diversity = 0.0;
    std::vector<std::size_t> clusters;  // per sample
    std::vector<std::size_t> falsifying;  // per sample
};

FalsificationMetrics falsification_metrics(const std::vector<Sample>& samples, const Similarity& f, double bound);

}  // namespace wogan
