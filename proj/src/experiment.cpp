#include "wogan/experiment.hpp"

#include "wogan/error.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

namespace wogan {

namespace fs = std::filesystem;

namespace {

std::string similarity_name(SimilarityKind k) { return k == SimilarityKind::Path ? "path" : "maxnorm"; }

SimilarityKind similarity_from(const std::string& s) {
    if (s == "maxnorm") return SimilarityKind::MaxNorm;
    if (s == "path") return SimilarityKind::Path;
    throw SchemaError("similarity must be 'maxnorm' or 'path'");
}

std::string replica_name(std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "replica-%03zu", k);
    return buf;
}

std::string number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string tests_csv(const std::vector<Test>& tests, std::size_t dim, const std::vector<double>* rho) {
    std::string out;
    for (std::size_t i = 0; i < dim; ++i) out += (i ? ",x" : "x") + std::to_string(i);
    if (rho) out += ",rho_bar";
    out += '\n';
    for (std::size_t r = 0; r < tests.size(); ++r) {
        for (std::size_t i = 0; i < dim; ++i) {
            if (i) out += ',';
            out += number(tests[r][i]);
        }
        if (rho) out += "," + number((*rho)[r]);
        out += '\n';
    }
    return out;
}

std::vector<std::vector<double>> parse_csv(const fs::path& file, std::vector<std::string>& header) {
    std::istringstream in(read_file(file));
    std::string line;
    if (!std::getline(in, line)) throw FormatError(file.string() + ": empty CSV");
    header.clear();
    {
        std::istringstream h(line);
        std::string cell;
        while (std::getline(h, cell, ',')) header.push_back(cell);
    }
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream l(line);
        std::string cell;
        while (std::getline(l, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0') throw FormatError(file.string() + ": bad number '" + cell + "'");
            row.push_back(v);
        }
        if (row.size() != header.size()) throw FormatError(file.string() + ": ragged row");
        rows.push_back(std::move(row));
    }
    return rows;
}

nlohmann::json read_json(const fs::path& file) {
    try {
        return nlohmann::json::parse(read_file(file));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(file.string() + ": " + e.what());
    }
}

}  // namespace

// ------------------------------------------------------------ files

std::string error_kind(const std::exception& e) {
    if (dynamic_cast<const RunAborted*>(&e)) return "RunAborted";
    if (dynamic_cast<const ExecutionError*>(&e)) return "ExecutionError";
    if (dynamic_cast<const PreconditionError*>(&e)) return "PreconditionError";
    if (dynamic_cast<const SchemaError*>(&e)) return "SchemaError";
    if (dynamic_cast<const FormatError*>(&e)) return "FormatError";
    if (dynamic_cast<const ParseError*>(&e)) return "ParseError";
    if (dynamic_cast<const RangeError*>(&e)) return "RangeError";
    if (dynamic_cast<const DimensionError*>(&e)) return "DimensionError";
    if (dynamic_cast<const Error*>(&e)) return "Error";
    return "InternalError";
}

std::string read_file(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw PreconditionError("missing artifact " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_atomic(const fs::path& file, const std::string& content) {
    fs::path tmp = file;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ExecutionError("cannot write " + tmp.string());
        out << content;
        if (!out) throw ExecutionError("write failed for " + tmp.string());
    }
    fs::rename(tmp, file);
}

// ------------------------------------------------------------ config

void ExperimentConfig::validate() const {
    if (name.empty() || name.find('/') != std::string::npos) throw PreconditionError("campaign name must be a plain name");
    if (replicas < 1) throw PreconditionError("at least one replica is needed");
    if (sample_size < 1) throw PreconditionError("sample size must be positive");
    if (jobs < 1) throw PreconditionError("jobs must be positive");
    if (!(metrics.q_lower > 0.0 && metrics.q_lower <= 0.5)) throw PreconditionError("q_lower must lie in (0, 0.5]");
    if (metrics.bound && !(*metrics.bound >= 0.0 && *metrics.bound <= 1.0)) {
        throw PreconditionError("similarity bound must lie in [0,1]");
    }
    if (generator == GeneratorKind::Wogan) wogan.validate();
    resolve(*this);
}

Resolved resolve(const ExperimentConfig& config) {
    auto sut = make_sut(config.sut, config.sut_params);
    const std::string text = config.requirement.empty() ? sut->default_requirement() : config.requirement;
    stl::Formula req = stl::parse(text);
    const SimilarityKind kind = config.metrics.similarity.value_or(sut->similarity_kind());
    const double bound = config.metrics.bound.value_or(sut->default_similarity_bound());
    if (kind == SimilarityKind::Path && sut->similarity_kind() != SimilarityKind::Path) {
        throw PreconditionError("path similarity needs a road SUT");
    }
    return {std::move(sut), std::move(req), kind, bound};
}

nlohmann::json ExperimentConfig::to_json() const {
    const Resolved r = resolve(*this);
    nlohmann::json j{{"name", name},
                     {"sut", {{"name", sut}, {"params", r.sut->parameters()}}},
                     {"requirement", r.requirement.to_string()},
                     {"generator", generator == GeneratorKind::Wogan ? "wogan" : "random"},
                     {"replicas", replicas},
                     {"sample_size", sample_size},
                     {"metrics", {{"q_lower", metrics.q_lower}, {"similarity", similarity_name(r.similarity)}, {"bound", r.bound}}},
                     {"seed", seed},
                     {"output", output.string()}};
    if (generator == GeneratorKind::Wogan) j["wogan"] = wogan.to_json();
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    try {
        if (!j.is_object()) throw SchemaError("experiment config must be an object");
        static const std::set<std::string> known{"name",   "sut",     "requirement", "generator", "wogan", "replicas",
                                                 "sample_size", "metrics", "seed",  "output",   "jobs"};
        for (const auto& [k, v] : j.items()) {
            if (!known.count(k)) throw SchemaError("unknown key '" + k + "' in experiment config");
        }
        c.name = j.value("name", c.name);
        if (j.contains("sut")) {
            const auto& s = j.at("sut");
            if (s.is_string()) {
                c.sut = s.get<std::string>();
            } else {
                c.sut = s.at("name").get<std::string>();
                c.sut_params = s.value("params", nlohmann::json::object());
            }
        }
        c.requirement = j.value("requirement", std::string{});
        const std::string gen = j.value("generator", std::string{"wogan"});
        if (gen == "wogan") {
            c.generator = GeneratorKind::Wogan;
        } else if (gen == "random") {
            c.generator = GeneratorKind::Random;
        } else {
            throw SchemaError("generator must be 'wogan' or 'random'");
        }
        if (j.contains("wogan")) c.wogan = WoganConfig::from_json(j.at("wogan"));
        c.replicas = j.value("replicas", c.replicas);
        c.sample_size = j.value("sample_size", c.sample_size);
        if (j.contains("metrics")) {
            const auto& m = j.at("metrics");
            for (const auto& [k, v] : m.items()) {
                if (k != "q_lower" && k != "similarity" && k != "bound") throw SchemaError("unknown key '" + k + "' in metrics");
            }
            c.metrics.q_lower = m.value("q_lower", c.metrics.q_lower);
            if (m.contains("similarity")) c.metrics.similarity = similarity_from(m.at("similarity").get<std::string>());
            if (m.contains("bound")) c.metrics.bound = m.at("bound").get<double>();
        }
        c.seed = j.value("seed", c.seed);
        c.output = j.value("output", c.output.string());
        c.jobs = j.value("jobs", c.jobs);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("bad experiment config: ") + e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& file) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(file));
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(file.string() + ": " + e.what());
    }
    return from_json(j);
}

fs::path output_root(const ExperimentConfig& config) {
    if (const char* env = std::getenv("WOGAN_OUTPUT_DIR"); env && *env) return env;
    return config.output;
}

// ------------------------------------------------------------ run

namespace {

SuiteEstimator suite_estimator(const Ablation& a) {
    if (a.no_analyzer_sampling) return SuiteEstimator::None;
    if (a.random_analyzer) return SuiteEstimator::Random;
    if (a.perfect_analyzer) return SuiteEstimator::Perfect;
    return SuiteEstimator::Analyzer;
}

void run_replica(const ExperimentConfig& config, const nlohmann::json& echo, const Resolved& r, std::size_t k,
                 const fs::path& tmp) {
    const std::uint64_t seed = derive_seed(config.seed, k);
    const Sut& sut = *r.sut;
    nlohmann::json timing = nlohmann::json::object();
    std::vector<std::string> files;
    std::vector<Test> sample;
    Rng sample_rng(derive_seed(seed, 1));

    if (config.generator == GeneratorKind::Wogan) {
        WoganResult res;
        try {
            res = wogan_run(sut, r.requirement, config.wogan, seed);
        } catch (const RunAborted& e) {
            write_atomic(tmp / "repository.jsonl", e.partial().to_jsonl());
            throw;
        }
        write_atomic(tmp / "repository.jsonl", res.repository.to_jsonl());
        const nlohmann::json checkpoint{{"format", "wogan-checkpoint/1"},
                                        {"replica", k},
                                        {"seed", seed},
                                        {"config", echo},
                                        {"training_events", res.training_events},
                                        {"bundle", res.bundle.to_json()}};
        write_atomic(tmp / "checkpoint.json", checkpoint.dump());
        files.insert(files.end(), {"repository.jsonl", "checkpoint.json"});
        timing = {{"generation", res.times.generation},
                  {"training", res.times.training},
                  {"execution", res.times.execution},
                  {"total", res.times.total},
                  {"perfect_analyzer_executions", res.perfect_analyzer_executions}};
        const auto t0 = std::chrono::steady_clock::now();
        SuiteOptions opts;
        opts.alpha = config.wogan.alpha;
        opts.epsilon = config.wogan.epsilon;
        opts.estimator = suite_estimator(config.wogan.ablation);
        opts.validity_attempts = config.wogan.validity_attempts;
        sample = generator_sample_suite(res.bundle, config.sample_size, sut, sample_rng, opts, &r.requirement);
        timing["sample_generation"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    } else {
        for (std::size_t i = 0; i < config.sample_size; ++i) sample.push_back(sample_valid_uniform(sut, sample_rng));
    }

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> rho;
    rho.reserve(sample.size());
    for (const auto& t : sample) rho.push_back(execute(sut, r.requirement, t).robustness.scaled);
    timing["sample_execution"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_atomic(tmp / "sample.csv", tests_csv(sample, sut.dimension(), &rho));

    Rng ref_rng(derive_seed(seed, 2));
    std::vector<Test> reference;
    for (std::size_t i = 0; i < config.sample_size; ++i) reference.push_back(sample_valid_uniform(sut, ref_rng));
    write_atomic(tmp / "reference.csv", tests_csv(reference, sut.dimension(), nullptr));
    write_atomic(tmp / "timing.json", timing.dump(2));
    files.insert(files.end(), {"sample.csv", "reference.csv", "timing.json"});

    const nlohmann::json manifest{{"replica", k}, {"seed", seed}, {"config", echo}, {"files", files}};
    write_atomic(tmp / "manifest.json", manifest.dump(2));
}

}  // namespace

CampaignRun cmd_run(const ExperimentConfig& config) {
    config.validate();
    const nlohmann::json echo = config.to_json();
    // Scheduling fields stay out of replica artifacts so replica k is the same for any N.
    nlohmann::json replica_echo = echo;
    for (const char* k : {"replicas", "output"}) replica_echo.erase(k);
    const Resolved r = resolve(config);
    CampaignRun run;
    run.dir = output_root(config) / config.name;
    fs::create_directories(run.dir);
    write_atomic(run.dir / "config.json", echo.dump(2));

    run.replicas.resize(config.replicas);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < config.replicas; k = next++) {
            ReplicaOutcome& out = run.replicas[k];
            out.index = k;
            const fs::path final_dir = run.dir / replica_name(k);
            const fs::path tmp = run.dir / (replica_name(k) + ".tmp");
            const fs::path failed = run.dir / (replica_name(k) + ".failed");
            fs::remove_all(tmp);
            fs::remove_all(failed);
            fs::create_directories(tmp);
            try {
                run_replica(config, replica_echo, r, k, tmp);
                fs::remove_all(final_dir);
                fs::rename(tmp, final_dir);
                out.ok = true;
                out.dir = final_dir;
            } catch (const std::exception& e) {
                out.error = e.what();
                const nlohmann::json err{{"replica", k}, {"error", error_kind(e)}, {"message", e.what()}, {"config", replica_echo}};
                write_atomic(tmp / "error.json", err.dump(2));
                fs::remove_all(final_dir);
                fs::rename(tmp, failed);
                out.dir = failed;
            }
        }
    };
    const std::size_t n = std::min(config.jobs, config.replicas);
    std::vector<std::thread> pool;
    for (std::size_t i = 1; i < n; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return run;
}

// ------------------------------------------------------------ evaluate

Sample read_sample(const fs::path& file) {
    std::vector<std::string> header;
    const auto rows = parse_csv(file, header);
    if (header.empty() || header.back() != "rho_bar") throw FormatError(file.string() + ": no rho_bar column");
    Sample s;
    for (const auto& row : rows) s.push_back({Test(row.begin(), row.end() - 1), row.back()});
    return s;
}

std::vector<Test> read_tests(const fs::path& file) {
    std::vector<std::string> header;
    const auto rows = parse_csv(file, header);
    return {rows.begin(), rows.end()};
}

nlohmann::json CampaignReport::to_json() const {
    return {{"name", name},
            {"replicas", summary.replicas},
            {"failed", failed},
            {"sample_size", summary.sample_size},
            {"mean_q_lower", summary.mean_lower},
            {"sd_q_lower", summary.sd_lower},
            {"mean_q_upper", summary.mean_upper},
            {"sd_q_upper", summary.sd_upper},
            {"mean_d_score", summary.mean_diversity},
            {"mean_diversity_loss", mean_loss},
            {"diversity_loss_category", to_string(loss_category)},
            {"falsification",
             {{"rate", falsification.rate},
              {"d_f", falsification.diversity},
              {"d_f_sd", falsification.diversity_sd},
              {"normalized_d_f", falsification.normalized_diversity}}}};
}

namespace {

struct Loaded {
    ExperimentConfig config;
    std::vector<std::size_t> ok;
    std::vector<std::size_t> failed;
};

Loaded load_campaign(const fs::path& dir) {
    Loaded l;
    l.config = ExperimentConfig::from_json(read_json(dir / "config.json"));
    for (std::size_t k = 0; k < l.config.replicas; ++k) {
        if (fs::is_directory(dir / replica_name(k))) {
            l.ok.push_back(k);
        } else {
            l.failed.push_back(k);
        }
    }
    if (l.ok.empty()) throw PreconditionError(dir.string() + ": no finished replica");
    return l;
}

}  // namespace

CampaignReport cmd_evaluate(const fs::path& dir) {
    const Loaded l = load_campaign(dir);
    const Resolved r = resolve(l.config);
    const Similarity f = similarity_for(r.similarity, r.sut->dimension());
    CampaignReport rep;
    rep.name = l.config.name;
    rep.failed = l.failed;
    std::vector<QuantileScores> scores;
    std::vector<double> diversity, losses;
    std::vector<Sample> samples;
    std::string csv = "replica,d_score,q_lower,q_upper,loss_ratio,loss_category,falsifying\n";
    for (std::size_t k : l.ok) {
        const fs::path rd = dir / replica_name(k);
        Sample s = read_sample(rd / "sample.csv");
        const auto reference = read_tests(rd / "reference.csv");
        std::vector<Test> tests;
        std::vector<double> rho;
        for (const auto& st : s) {
            tests.push_back(st.test);
            rho.push_back(st.rho_bar);
        }
        ReplicaMetrics m;
        m.index = k;
        m.diversity = diversity_score(tests, f, r.bound);
        m.scores = quantile_scores(rho, l.config.metrics.q_lower);
        m.loss = diversity_loss(tests, reference, f, r.bound);
        m.falsifying = static_cast<std::size_t>(std::count(rho.begin(), rho.end(), 0.0));
        csv += std::to_string(k) + "," + number(m.diversity) + "," + number(m.scores.lower) + "," +
               number(m.scores.upper) + "," + number(m.loss.ratio) + "," + to_string(m.loss.category) + "," +
               std::to_string(m.falsifying) + "\n";
        scores.push_back(m.scores);
        diversity.push_back(m.diversity);
        losses.push_back(m.loss.ratio);
        samples.push_back(std::move(s));
        rep.replicas.push_back(m);
    }
    rep.summary = summarize(scores, diversity, l.config.sample_size);
    rep.mean_loss = mean_sd(losses).first;
    rep.loss_category = loss_category(rep.mean_loss);
    rep.falsification = falsification_metrics(samples, f, r.bound);
    write_atomic(dir / "metrics.csv", csv);
    write_atomic(dir / "summary.json", rep.to_json().dump(2));
    return rep;
}

// ------------------------------------------------------------ rank

std::vector<RankingRow> cmd_rank(const std::vector<fs::path>& dirs) {
    if (dirs.empty()) throw PreconditionError("rank needs at least one campaign");
    std::vector<RankingRow> rows;
    for (const auto& d : dirs) {
        if (!fs::exists(d / "summary.json")) cmd_evaluate(d);
        const auto j = read_json(d / "summary.json");
        RankingRow row;
        try {
            row.name = j.at("name").get<std::string>();
            row.summary.mean_lower = j.at("mean_q_lower").get<double>();
            row.summary.sd_lower = j.at("sd_q_lower").get<double>();
            row.summary.mean_upper = j.at("mean_q_upper").get<double>();
            row.summary.sd_upper = j.at("sd_q_upper").get<double>();
            row.summary.mean_diversity = j.at("mean_d_score").get<double>();
            row.summary.replicas = j.at("replicas").get<std::size_t>();
            row.summary.sample_size = j.at("sample_size").get<std::size_t>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError((d / "summary.json").string() + ": " + e.what());
        }
        rows.push_back(row);
    }
    std::vector<ScoreSummary> summaries;
    for (const auto& r : rows) summaries.push_back(r.summary);
    const auto ranks = rank_generators(summaries);
    const auto counts = tournament_counts(summaries);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i].count = counts[i];
        rows[i].rank = ranks[i];
    }
    return rows;
}

std::string ranking_csv(const std::vector<RankingRow>& rows) {
    std::string out = "name,mean_q_lower,sd_q_lower,mean_q_upper,sd_q_upper,mean_d_score,count,rank\n";
    for (const auto& r : rows) {
        out += r.name + "," + number(r.summary.mean_lower) + "," + number(r.summary.sd_lower) + "," +
               number(r.summary.mean_upper) + "," + number(r.summary.sd_upper) + "," +
               number(r.summary.mean_diversity) + "," + std::to_string(r.count) + "," + std::to_string(r.rank) + "\n";
    }
    return out;
}

std::string ranking_table(const std::vector<RankingRow>& rows) {
    std::size_t w = 4;
    for (const auto& r : rows) w = std::max(w, r.name.size());
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(w)) << "name" << std::right << "  " << std::setw(14) << "Q_L"
       << "  " << std::setw(14) << "Q_U" << "  " << std::setw(7) << "D" << "  " << std::setw(5) << "count"
       << "  " << std::setw(4) << "rank" << '\n';
    for (const auto& r : rows) {
        char ql[32], qu[32];
        std::snprintf(ql, sizeof ql, "%.3f (%.2f)", r.summary.mean_lower, r.summary.sd_lower);
        std::snprintf(qu, sizeof qu, "%.3f (%.2f)", r.summary.mean_upper, r.summary.sd_upper);
        os << std::left << std::setw(static_cast<int>(w)) << r.name << std::right << "  " << std::setw(14) << ql
           << "  " << std::setw(14) << qu << "  " << std::setw(7) << std::fixed << std::setprecision(3)
           << r.summary.mean_diversity << "  " << std::setw(5) << r.count << "  " << std::setw(4) << r.rank << '\n';
    }
    return os.str();
}

// ------------------------------------------------------------ report

std::size_t histogram_bin(double rho_bar) {
    const auto i = static_cast<std::size_t>(std::floor(rho_bar * static_cast<double>(kHistogramBins)));
    return std::min(i, kHistogramBins - 1);
}

CampaignExport cmd_report(const fs::path& dir) {
    const Loaded l = load_campaign(dir);
    const Resolved r = resolve(l.config);
    const Similarity f = similarity_for(r.similarity, r.sut->dimension());
    CampaignExport ex;
    ex.histogram.assign(kHistogramBins, 0);
    std::vector<Sample> samples;
    std::size_t total = 0;
    for (std::size_t k : l.ok) {
        Sample s = read_sample(dir / replica_name(k) / "sample.csv");
        for (const auto& st : s) ++ex.histogram[histogram_bin(st.rho_bar)];
        total += s.size();
        samples.push_back(std::move(s));
    }
    ex.falsification = falsification_metrics(samples, f, r.bound);

    std::string hist = "bin,lower,upper,count,fraction\n";
    for (std::size_t i = 0; i < kHistogramBins; ++i) {
        const double lo = static_cast<double>(i) / kHistogramBins, hi = static_cast<double>(i + 1) / kHistogramBins;
        hist += std::to_string(i + 1) + "," + number(lo) + "," + number(hi) + "," + std::to_string(ex.histogram[i]) +
                "," + number(static_cast<double>(ex.histogram[i]) / static_cast<double>(total)) + "\n";
    }
    write_atomic(dir / "histogram.csv", hist);

    const auto& fm = ex.falsification;
    std::string fals = "campaign,replicas,rate,d_f,d_f_sd,normalized_d_f\n";
    fals += l.config.name + "," + std::to_string(samples.size()) + "," + number(fm.rate) + "," + number(fm.diversity) +
            "," + number(fm.diversity_sd) + "," + number(fm.normalized_diversity) + "\n";
    write_atomic(dir / "falsification.csv", fals);

    std::string per = "replica,falsifying,clusters\n";
    for (std::size_t i = 0; i < l.ok.size(); ++i) {
        per += std::to_string(l.ok[i]) + "," + std::to_string(fm.falsifying[i]) + "," + std::to_string(fm.clusters[i]) +
               "\n";
    }
    write_atomic(dir / "falsification_replicas.csv", per);
    return ex;
}

}  // namespace wogan
