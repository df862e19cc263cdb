#include "wogan/eval.hpp"

#include "wogan/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace wogan {

namespace {

void check_pair(const Test& a, const Test& b) {
    if (a.size() != b.size()) throw DimensionError("similarity of tests with different dimensions");
}

std::vector<double> to_curvatures(const Test& t) {
    std::vector<double> c(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) c[i] = kMaxCurvature * t[i];
    return c;
}

}  // namespace

double similarity_maxnorm(const Test& a, const Test& b) {
    check_pair(a, b);
    double gap = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) gap = std::max(gap, std::abs(a[i] - b[i]));
    return 1.0 - 2.0 * gap;
}

double path_distance(const Test& a, const Test& b) {
    check_pair(a, b);
    const Road ra = curvature_to_road(to_curvatures(a));
    const Road rb = curvature_to_road(to_curvatures(b));
    double d = 0.0;
    for (std::size_t i = 0; i < ra.points.size(); ++i) {
        d += std::hypot(ra.points[i][0] - rb.points[i][0], ra.points[i][1] - rb.points[i][1]);
    }
    return d;
}

double similarity_path(const Test& a, const Test& b, double scale) {
    if (!(scale > 0.0)) throw PreconditionError("path similarity scale must be positive");
    return 1.0 - path_distance(a, b) / scale;
}

double reference_path_scale(std::size_t d) {
    switch (d) {
        case 5: return 39.79;
        case 7: return 51.57;
        case 9: return 66.89;
        default: throw PreconditionError("no reference path scale for d = " + std::to_string(d));
    }
}

double path_scale(std::size_t d) {
    // grid maxima 321.6, 525.2, 833.4
    switch (d) {
        case 5: return 325.0;
        case 7: return 530.0;
        case 9: return 840.0;
        default: throw PreconditionError("no path scale for d = " + std::to_string(d));
    }
}

Similarity similarity_for(SimilarityKind kind, std::size_t dim) {
    if (kind == SimilarityKind::MaxNorm) return similarity_maxnorm;
    const double scale = path_scale(dim);
    return [scale](const Test& a, const Test& b) { return similarity_path(a, b, scale); };
}

bool lexicographic_less(const Test& a, const Test& b) {
    if (std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end())) return true;
    if (std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end())) return false;
    if (a.size() != b.size()) return a.size() < b.size();
    return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) < 0;
}

std::vector<std::vector<Test>> cluster(std::vector<Test> tests, const Similarity& f, double bound) {
    std::sort(tests.begin(), tests.end(), lexicographic_less);
    std::vector<std::vector<Test>> clusters;
    for (auto& t : tests) {
        bool placed = false;
        for (auto& c : clusters) {
            const bool fits = std::all_of(c.begin(), c.end(), [&](const Test& u) { return f(t, u) >= bound; });
            if (fits) {
                c.push_back(std::move(t));
                placed = true;
                break;
            }
        }
        if (!placed) clusters.push_back({std::move(t)});
    }
    return clusters;
}

double diversity_score(const std::vector<Test>& tests, const Similarity& f, double bound) {
    if (tests.empty()) return 0.0;
    return static_cast<double>(cluster(tests, f, bound).size()) / static_cast<double>(tests.size());
}

std::string to_string(LossCategory c) {
    switch (c) {
        case LossCategory::Negligible: return "negligible";
        case LossCategory::Small: return "small";
        case LossCategory::Moderate: return "moderate";
        case LossCategory::Large: return "large";
    }
    return "large";
}

LossCategory loss_category(double ratio) {
    if (ratio >= 0.98) return LossCategory::Negligible;
    if (ratio >= 0.75) return LossCategory::Small;
    if (ratio >= 0.50) return LossCategory::Moderate;
    return LossCategory::Large;
}

DiversityLoss diversity_loss(const std::vector<Test>& sample, const std::vector<Test>& reference, const Similarity& f,
                             double bound) {
    if (reference.empty()) throw PreconditionError("diversity loss needs a non-empty reference sample");
    if (sample.size() != reference.size()) throw PreconditionError("sample and reference sizes differ");
    const double ratio = diversity_score(sample, f, bound) / diversity_score(reference, f, bound);
    return {ratio, loss_category(ratio)};
}

QuantileScores quantile_scores(std::vector<double> rho_bars, double q_lower) {
    if (rho_bars.empty()) throw PreconditionError("quantile scores of an empty sample");
    if (!(q_lower > 0.0 && q_lower <= 0.5)) throw RangeError("q_L must lie in (0, 0.5]");
    std::sort(rho_bars.begin(), rho_bars.end());
    const double n = static_cast<double>(rho_bars.size());
    auto order_stat = [&](double q) {
        const auto k = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
        return rho_bars[std::clamp<std::size_t>(k, 1, rho_bars.size()) - 1];
    };
    return {order_stat(q_lower), order_stat(1.0 - q_lower)};
}

std::pair<double, double> mean_sd(const std::vector<double>& values) {
    if (values.empty()) return {0.0, 0.0};
    // Summation can drift off a constant sample; report it exactly.
    if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); })) {
        return {values.front(), 0.0};
    }
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    if (values.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

ScoreSummary summarize(const std::vector<QuantileScores>& scores, const std::vector<double>& diversity,
                       std::size_t sample_size) {
    if (scores.empty()) throw PreconditionError("summary of zero replicas");
    std::vector<double> lo, up;
    for (const auto& s : scores) {
        lo.push_back(s.lower);
        up.push_back(s.upper);
    }
    ScoreSummary out;
    std::tie(out.mean_lower, out.sd_lower) = mean_sd(lo);
    std::tie(out.mean_upper, out.sd_upper) = mean_sd(up);
    out.mean_diversity = mean_sd(diversity).first;
    out.replicas = scores.size();
    out.sample_size = sample_size;
    return out;
}

std::string to_string(Relation r) {
    switch (r) {
        case Relation::Better: return "<";
        case Relation::Worse: return ">";
        case Relation::Equivalent: return "~";
    }
    return "~";
}

namespace {

// -1: a's interval lies below b's, 1: above, 0: they overlap.
int interval_order(double ma, double sa, double mb, double sb) {
    if (ma + sa < mb - sb) return -1;
    if (mb + sb < ma - sa) return 1;
    return 0;
}

// Rules (i)-(iv) for a ≺ b.
bool rules_prefer(const ScoreSummary& a, const ScoreSummary& b) {
    const int l = interval_order(a.mean_lower, a.sd_lower, b.mean_lower, b.sd_lower);
    const int u = interval_order(a.mean_upper, a.sd_upper, b.mean_upper, b.sd_upper);
    if (l == -1 && u == -1) return true;
    if (l == 0 && u == -1) return true;
    if (l == -1 && u == 0) return true;
    const double dl = b.mean_lower - a.mean_lower;
    const double du = a.mean_upper - b.mean_upper;
    return l == -1 && u == 1 && 2.0 * dl > du;
}

// Rule (v) with a in the role of G1: yields b ≺ a.
bool rule_v(const ScoreSummary& a, const ScoreSummary& b) {
    const int l = interval_order(a.mean_lower, a.sd_lower, b.mean_lower, b.sd_lower);
    const int u = interval_order(a.mean_upper, a.sd_upper, b.mean_upper, b.sd_upper);
    const double dl = b.mean_lower - a.mean_lower;
    const double du = a.mean_upper - b.mean_upper;
    return l == -1 && u == 1 && 2.0 * dl < du;
}

}  // namespace

Relation compare_generators(const ScoreSummary& a, const ScoreSummary& b) {
    const bool a_first = rules_prefer(a, b) || rule_v(b, a);
    const bool b_first = rules_prefer(b, a) || rule_v(a, b);
    if (a_first && !b_first) return Relation::Better;
    if (b_first && !a_first) return Relation::Worse;
    return Relation::Equivalent;
}

std::vector<std::size_t> tournament_counts(const std::vector<ScoreSummary>& summaries) {
    std::vector<std::size_t> counts(summaries.size(), 0);
    for (std::size_t i = 0; i < summaries.size(); ++i) {
        for (std::size_t j = 0; j < summaries.size(); ++j) {
            const Relation r = i == j ? Relation::Equivalent : compare_generators(summaries[i], summaries[j]);
            counts[i] += r != Relation::Worse;
        }
    }
    return counts;
}

std::vector<std::size_t> ranks_from_counts(const std::vector<std::size_t>& counts) {
    std::vector<std::size_t> levels(counts);
    std::sort(levels.begin(), levels.end(), std::greater<>());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    std::vector<std::size_t> ranks(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        ranks[i] = static_cast<std::size_t>(std::find(levels.begin(), levels.end(), counts[i]) - levels.begin()) + 1;
    }
    return ranks;
}

std::vector<std::size_t> rank_generators(const std::vector<ScoreSummary>& summaries) {
    if (summaries.empty()) throw PreconditionError("ranking needs at least one generator");
    for (const auto& s : summaries) {
        if (s.sample_size != summaries.front().sample_size) throw PreconditionError("generator sample sizes differ");
    }
    return ranks_from_counts(tournament_counts(summaries));
}

FalsificationMetrics falsification_metrics(const std::vector<Sample>& samples, const Similarity& f, double bound) {
    if (samples.empty()) throw PreconditionError("falsification metrics need at least one sample");
    FalsificationMetrics m;
    std::vector<double> counts, normalized;
    std::size_t hit = 0;
    for (const auto& s : samples) {
        std::vector<Test> fals;
        for (const auto& st : s) {
            if (st.rho_bar == 0.0) fals.push_back(st.test);
        }
        const std::size_t k = fals.empty() ? 0 : cluster(fals, f, bound).size();
        hit += !fals.empty();
        m.clusters.push_back(k);
        m.falsifying.push_back(fals.size());
        counts.push_back(static_cast<double>(k));
        normalized.push_back(fals.empty() ? 0.0 : static_cast<double>(k) / static_cast<double>(fals.size()));
    }
    m.rate = static_cast<double>(hit) / static_cast<double>(samples.size());
    std::tie(m.diversity, m.diversity_sd) = mean_sd(counts);
    m.normalized_diversity = mean_sd(normalized).first;
    return m;
}

}  // namespace wogan
