#include "wogan/experiment.hpp"

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace wogan;

namespace {

// Python objects cross the boundary as JSON text.
nlohmann::json to_json(const py::object& o) {
    return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::object from_json(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

Trace make_trace(const std::map<std::string, std::vector<double>>& signals, double dt) {
    Trace tr;
    for (const auto& [name, values] : signals) tr.add(Signal{name, 0.0, dt, values});
    return tr;
}

py::dict trace_dict(const Trace& tr) {
    py::dict d;
    for (const auto& s : tr.signals()) d[py::str(s.name)] = s.values;
    return d;
}

Similarity similarity_of(const std::string& kind, std::size_t dim) {
    if (kind == "maxnorm") return similarity_maxnorm;
    if (kind == "path") return similarity_for(SimilarityKind::Path, dim);
    throw PreconditionError("similarity must be 'maxnorm' or 'path'");
}

py::dict summary_dict(const ScoreSummary& s) {
    py::dict d;
    d["mean_lower"] = s.mean_lower;
    d["mean_upper"] = s.mean_upper;
    d["sd_lower"] = s.sd_lower;
    d["sd_upper"] = s.sd_upper;
    d["mean_diversity"] = s.mean_diversity;
    d["replicas"] = s.replicas;
    d["sample_size"] = s.sample_size;
    return d;
}

ScoreSummary summary_from(const py::dict& d) {
    ScoreSummary s;
    s.mean_lower = d["mean_lower"].cast<double>();
    s.mean_upper = d["mean_upper"].cast<double>();
    s.sd_lower = d["sd_lower"].cast<double>();
    s.sd_upper = d["sd_upper"].cast<double>();
    if (d.contains("mean_diversity")) s.mean_diversity = d["mean_diversity"].cast<double>();
    if (d.contains("replicas")) s.replicas = d["replicas"].cast<std::size_t>();
    s.sample_size = d.contains("sample_size") ? d["sample_size"].cast<std::size_t>() : 0;
    return s;
}

}  // namespace

PYBIND11_MODULE(_wogan, m) {
    m.doc() = "WOGAN requirement falsification";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<RangeError>(m, "RangeError", base.ptr());
    py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
    py::register_exception<SchemaError>(m, "SchemaError", base.ptr());
    py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
    py::register_exception<ExecutionError>(m, "ExecutionError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());

    // ---- STL
    py::class_<stl::Formula>(m, "Formula")
        .def(py::init([](const std::string& text) { return stl::parse(text); }), py::arg("text"))
        .def("__str__", &stl::Formula::to_string)
        .def("__repr__", [](const stl::Formula& f) { return "Formula('" + f.to_string() + "')"; })
        .def("horizon", [](const stl::Formula& f) { return stl::horizon(f); })
        .def("signals", [](const stl::Formula& f) { return stl::signal_names(f); })
        .def(
            "robustness",
            [](const stl::Formula& f, const std::map<std::string, std::vector<double>>& signals, double dt) {
                return stl::robustness(f, make_trace(signals, dt));
            },
            py::arg("signals"), py::arg("dt"))
        .def(
            "scaled_robustness",
            [](const stl::Formula& f, const std::map<std::string, std::vector<double>>& signals, double dt,
               const std::map<std::string, std::pair<double, double>>& ranges) {
                SignalRanges r;
                for (const auto& [k, v] : ranges) r[k] = Interval{v.first, v.second};
                return stl::scaled_robustness(f, make_trace(signals, dt), r).scaled;
            },
            py::arg("signals"), py::arg("dt"), py::arg("ranges"));

    // ---- SUTs
    py::class_<Sut, std::shared_ptr<Sut>>(m, "Sut")
        .def_property_readonly("name", &Sut::name)
        .def_property_readonly("dimension", &Sut::dimension)
        .def_property_readonly("default_requirement", &Sut::default_requirement)
        .def_property_readonly("parameters", [](const Sut& s) { return from_json(s.parameters()); })
        .def("valid", &Sut::valid, py::arg("test"))
        .def("simulate", [](const Sut& s, const Test& t) { return trace_dict(s.simulate(t)); }, py::arg("test"))
        .def(
            "execute",
            [](const Sut& s, const Test& t, const std::string& requirement) {
                const auto f = stl::parse(requirement.empty() ? s.default_requirement() : requirement);
                return execute(s, f, t).robustness.scaled;
            },
            py::arg("test"), py::arg("requirement") = "");
    m.def(
        "make_sut",
        [](const std::string& name, const py::object& params) {
            return std::shared_ptr<Sut>(make_sut(name, params.is_none() ? nlohmann::json::object() : to_json(params)));
        },
        py::arg("name"), py::arg("params") = py::none());

    // ---- WOGAN
    m.def(
        "default_config", [] { return from_json(WoganConfig{}.to_json()); },
        "The default WOGAN configuration as a dict");
    m.def("compute_quantile", &compute_quantile, py::arg("remaining"), py::arg("slope") = 0.4,
          py::arg("intercept") = 0.1);
    m.def("rejection_draw_bound", &rejection_draw_bound, py::arg("alpha"), py::arg("epsilon"));
    m.def(
        "rejection_draws",
        [](const std::function<double(const Test&)>& estimate, std::size_t dim, double alpha, double epsilon,
           std::uint64_t seed) {
            Rng rng(seed);
            RejectionStats st;
            rejection_sample([&] { return uniform_box(rng, dim); }, estimate, alpha, epsilon, &st);
            return st.draws;
        },
        py::arg("estimate"), py::arg("dim"), py::arg("alpha") = 0.95, py::arg("epsilon") = 1e-4, py::arg("seed") = 0,
        "Number of candidates the rejection sampler draws with the given estimator");
    m.def(
        "run",
        [](const Sut& sut, const std::string& requirement, const py::object& config, std::uint64_t seed,
           std::size_t suite_size) {
            const WoganConfig c = config.is_none() ? WoganConfig{} : WoganConfig::from_json(to_json(config));
            const auto f = stl::parse(requirement.empty() ? sut.default_requirement() : requirement);
            WoganResult res;
            {
                py::gil_scoped_release release;
                res = wogan_run(sut, f, c, seed);
            }
            py::dict out;
            py::list records;
            for (const auto& r : res.repository.records()) {
                py::dict d;
                d["test"] = r.test;
                d["rho_bar"] = r.rho_bar;
                d["iteration"] = r.iteration;
                d["source"] = to_string(r.source);
                records.append(d);
            }
            out["repository"] = records;
            out["training_events"] = res.training_events;
            if (suite_size > 0) {
                Rng rng(derive_seed(seed, 1));
                SuiteOptions opts;
                opts.alpha = c.alpha;
                opts.epsilon = c.epsilon;
                out["suite"] = generator_sample_suite(res.bundle, suite_size, sut, rng, opts, &f);
            }
            return out;
        },
        py::arg("sut"), py::arg("requirement") = "", py::arg("config") = py::none(), py::arg("seed") = 0,
        py::arg("suite_size") = 0, "Runs WOGAN and returns the repository (and optionally a generated suite)");

    // ---- evaluation
    m.def("similarity_maxnorm", &similarity_maxnorm, py::arg("a"), py::arg("b"));
    m.def("quantile_scores",
          [](const std::vector<double>& rho, double q) {
              const auto s = quantile_scores(rho, q);
              return std::make_pair(s.lower, s.upper);
          },
          py::arg("rho_bars"), py::arg("q_lower") = 0.25);
    m.def(
        "cluster_count",
        [](const std::vector<Test>& tests, double bound, const std::string& kind) {
            if (tests.empty()) return std::size_t{0};
            return cluster(tests, similarity_of(kind, tests.front().size()), bound).size();
        },
        py::arg("tests"), py::arg("bound"), py::arg("similarity") = "maxnorm");
    m.def(
        "diversity_score",
        [](const std::vector<Test>& tests, double bound, const std::string& kind) {
            if (tests.empty()) throw PreconditionError("diversity of an empty sample");
            return diversity_score(tests, similarity_of(kind, tests.front().size()), bound);
        },
        py::arg("tests"), py::arg("bound"), py::arg("similarity") = "maxnorm");
    m.def(
        "compare",
        [](const py::dict& a, const py::dict& b) { return to_string(compare_generators(summary_from(a), summary_from(b))); },
        py::arg("a"), py::arg("b"), "'<' when a is better, '>' when worse, '~' otherwise");
    m.def(
        "rank",
        [](const std::vector<py::dict>& summaries) {
            std::vector<ScoreSummary> s;
            for (const auto& d : summaries) s.push_back(summary_from(d));
            return std::make_pair(tournament_counts(s), rank_generators(s));
        },
        py::arg("summaries"), "Tournament counts and dense ranks");
    m.def("ranks_from_counts", &ranks_from_counts, py::arg("counts"));
    m.def("summarize",
          [](const std::vector<std::pair<double, double>>& scores, const std::vector<double>& diversity,
             std::size_t sample_size) {
              std::vector<QuantileScores> q;
              for (const auto& [l, u] : scores) q.push_back({l, u});
              return summary_dict(summarize(q, diversity, sample_size));
          },
          py::arg("scores"), py::arg("diversity"), py::arg("sample_size"));

    // ---- campaigns
    m.def(
        "run_campaign",
        [](const py::object& config) {
            const auto c = ExperimentConfig::from_json(to_json(config));
            CampaignRun run;
            {
                py::gil_scoped_release release;
                run = cmd_run(c);
            }
            py::list reps;
            for (const auto& r : run.replicas) {
                py::dict d;
                d["replica"] = r.index;
                d["ok"] = r.ok;
                d["dir"] = r.dir;
                d["error"] = r.error;
                reps.append(d);
            }
            py::dict out;
            out["dir"] = run.dir;
            out["replicas"] = reps;
            return out;
        },
        py::arg("config"));
    m.def("evaluate", [](const std::filesystem::path& dir) { return from_json(cmd_evaluate(dir).to_json()); },
          py::arg("dir"));
    m.def(
        "rank_campaigns",
        [](const std::vector<std::filesystem::path>& dirs) { return ranking_csv(cmd_rank(dirs)); }, py::arg("dirs"),
        "Ranking of evaluated campaigns as CSV text");
    m.def(
        "report",
        [](const std::filesystem::path& dir) {
            const auto ex = cmd_report(dir);
            py::dict d;
            d["histogram"] = ex.histogram;
            d["rate"] = ex.falsification.rate;
            d["d_f"] = ex.falsification.diversity;
            d["normalized_d_f"] = ex.falsification.normalized_diversity;
            return d;
        },
        py::arg("dir"));
}
