// wogan: run, evaluate, rank and export falsification campaigns.

#include "wogan/experiment.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

int fail(const std::string& command, const std::string& kind, const std::string& message) {
    std::cerr << json{{"status", "error"}, {"command", command}, {"error", kind}, {"message", message}}.dump() << '\n';
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Requirement falsification campaigns with WOGAN"};
    app.require_subcommand(1);

    std::string config_file;
    std::optional<std::size_t> replicas, jobs;
    std::optional<std::uint64_t> seed;
    auto* run = app.add_subcommand("run", "Run a replicated campaign");
    run->add_option("--config", config_file, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--replicas", replicas, "Override the replica count");
    run->add_option("--seed", seed, "Override the master seed");
    run->add_option("--jobs", jobs, "Parallel replica slots");

    std::string eval_dir;
    auto* evaluate = app.add_subcommand("evaluate", "Compute per-replica and aggregate metrics");
    evaluate->add_option("dir", eval_dir, "Campaign directory")->required();

    std::vector<std::string> rank_dirs;
    std::string rank_out;
    auto* rank = app.add_subcommand("rank", "Rank evaluated campaigns");
    rank->add_option("dirs", rank_dirs, "Campaign directories")->required();
    rank->add_option("--out", rank_out, "Write the ranking CSV here");

    std::string report_dir;
    auto* report = app.add_subcommand("report", "Export histogram and falsification tables");
    report->add_option("dir", report_dir, "Campaign directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        return fail("parse", "UsageError", e.what()) + 1;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        if (*run) {
            auto config = wogan::ExperimentConfig::load(config_file);
            if (replicas) config.replicas = *replicas;
            if (seed) config.seed = *seed;
            if (jobs) config.jobs = *jobs;
            const auto result = wogan::cmd_run(config);
            json out{{"status", "ok"}, {"command", "run"}, {"dir", result.dir.string()}, {"replicas", json::array()}};
            bool any_failed = false;
            for (const auto& r : result.replicas) {
                json row{{"replica", r.index}, {"ok", r.ok}, {"dir", r.dir.string()}};
                if (!r.ok) row["error"] = r.error;
                any_failed |= !r.ok;
                out["replicas"].push_back(row);
            }
            if (any_failed) out["status"] = "partial";
            std::cout << out.dump(2) << '\n';
            return any_failed ? 3 : 0;
        }
        if (*evaluate) {
            const auto rep = wogan::cmd_evaluate(eval_dir);
            std::cout << rep.to_json().dump(2) << '\n';
            return 0;
        }
        if (*rank) {
            std::vector<fs::path> dirs(rank_dirs.begin(), rank_dirs.end());
            const auto rows = wogan::cmd_rank(dirs);
            if (!rank_out.empty()) wogan::write_atomic(rank_out, wogan::ranking_csv(rows));
            std::cout << wogan::ranking_table(rows);
            return 0;
        }
        if (*report) {
            const auto ex = wogan::cmd_report(report_dir);
            const auto& f = ex.falsification;
            std::cout << json{{"status", "ok"},
                              {"command", "report"},
                              {"histogram", ex.histogram},
                              {"rate", f.rate},
                              {"d_f", f.diversity},
                              {"normalized_d_f", f.normalized_diversity}}
                             .dump(2)
                      << '\n';
            return 0;
        }
    } catch (const std::exception& e) {
        return fail(command, wogan::error_kind(e), e.what());
    }
    return 0;
}
