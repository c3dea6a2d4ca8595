// causalgrid: command-line front end for the causal-analysis toolkit.
// Subcommands cover synthetic data generation, structural-model fitting,
// effect and crisis-impact reports, graph falsification, stratified
// regression, boosted-tree modeling, and flow-based edge attributions.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "causalgrid/falsify.hpp"
#include "causalgrid/gbt.hpp"
#include "causalgrid/graph.hpp"
#include "causalgrid/scm.hpp"
#include "causalgrid/shapflow.hpp"
#include "causalgrid/stratify.hpp"
#include "causalgrid/synthgen.hpp"
#include "causalgrid/timeseries.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace causalgrid;

namespace {

// Exit codes: 1 unexpected, 2 flag errors (CLI11), then one per error class.
constexpr int kExitFormat = 3;
constexpr int kExitSchema = 4;
constexpr int kExitGraph = 5;
constexpr int kExitDegenerate = 6;
constexpr int kExitInvalid = 7;
constexpr int kExitIo = 8;

int max_threads() {
    const char* env = std::getenv("CAUSALGRID_THREADS");
    if (!env) return 1;
    int v = std::atoi(env);
    if (v < 1) throw InvalidArgument("CAUSALGRID_THREADS must be a positive integer");
    return v;
}

// Accepts 2021-10-01, 2021-10-01T00:00Z, or the full 2021-10-01T00:00:00Z.
Instant parse_instant_flag(std::string s) {
    if (s.size() == 10) s += "T00:00:00Z";
    if (s.size() == 17 && s.back() == 'Z') s = s.substr(0, 16) + ":00Z";
    return parse_instant(s);
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Shared ingestion: CSV -> interpolate gaps -> calendar encodings -> derived
// system features (only when the raw source columns are present).
FeatureFrame load_pipeline(const std::string& data_path, const std::string& calendar_path) {
    FeatureFrame f = load_csv(data_path);
    if (f.has_missing()) f = clean(f);
    std::set<std::int64_t> holidays;
    if (!calendar_path.empty()) holidays = load_holidays(calendar_path);
    if (!f.has_column("hour_sin")) f = cyclical_encode(f, holidays);
    if (!f.has_column("residual_load") && f.has_column("nuclear_installed"))
        f = derive_features(f);
    return f;
}

json fit_report_json(const FitReport& rep) {
    json nodes = json::array();
    for (const auto& n : rep.nodes) {
        json e;
        e["node"] = n.node;
        if (n.r2)
            e["r2"] = *n.r2;
        else
            e["r2"] = nullptr;
        e["residual_std"] = n.residual_std;
        e["condition"] = n.condition;
        e["collinearity_warning"] = n.collinearity_warning;
        nodes.push_back(e);
    }
    return json{{"n_rows", rep.n_rows}, {"nodes", nodes}};
}

struct CommonOpts {
    std::string data;
    std::string graph;
    std::string calendar;
    std::string out = ".";
    std::string crisis = "2021-10-01T00:00Z";
    double alpha = 0.05;
    std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool need_graph) {
    cmd->add_option("--data", o.data, "input CSV")->required();
    auto* g = cmd->add_option("--graph", o.graph, "causal graph DSL file");
    if (need_graph) g->required();
    cmd->add_option("--calendar", o.calendar, "holiday calendar file");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--crisis", o.crisis, "crisis split instant");
    cmd->add_option("--alpha", o.alpha, "significance level");
    cmd->add_option("--seed", o.seed, "random seed");
}

int run(int argc, char** argv) {
    CLI::App app{"causal analysis toolkit for hourly time series"};
    app.require_subcommand(1);
    (void)max_threads();  // validate the env var up front

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "generate a preset synthetic dataset");
    std::string sy_preset, sy_out = ".", sy_calendar;
    std::uint64_t sy_seed = 0;
    std::size_t sy_hours = 0;
    bool sy_raw = false;
    synth->add_option("--preset", sy_preset, "preset name")->required();
    synth->add_option("--out", sy_out, "output directory");
    synth->add_option("--seed", sy_seed, "random seed");
    synth->add_option("--n-hours", sy_hours, "override preset length");
    synth->add_option("--calendar", sy_calendar, "holiday calendar for working-day roots");
    synth->add_flag("--raw", sy_raw, "emit raw market columns instead of model features");

    // ---- fit ----
    auto* fit_cmd = app.add_subcommand("fit", "fit the linear structural model");
    CommonOpts fo;
    add_common(fit_cmd, fo, true);

    // ---- effects ----
    auto* effects = app.add_subcommand("effects", "direct/indirect/total causal effects");
    CommonOpts eo;
    std::string e_src, e_dst;
    add_common(effects, eo, true);
    effects->add_option("--src", e_src, "source node")->required();
    effects->add_option("--dst", e_dst, "target node")->required();

    // ---- impact ----
    auto* impact = app.add_subcommand("impact", "per-edge crisis impact decomposition");
    CommonOpts io;
    add_common(impact, io, true);

    // ---- falsify ----
    auto* falsify = app.add_subcommand("falsify", "test the graph against the data");
    CommonOpts lo;
    std::size_t l_nperm = 50;
    add_common(falsify, lo, true);
    falsify->add_option("--n-perm", l_nperm, "number of permuted graphs");

    // ---- simpson ----
    auto* simpson = app.add_subcommand("simpson", "stratified regression slopes");
    CommonOpts so;
    std::string s_x, s_y, s_c;
    std::size_t s_k = 4;
    add_common(simpson, so, false);
    simpson->add_option("-x,--x", s_x, "regressor node")->required();
    simpson->add_option("-y,--y", s_y, "response node")->required();
    simpson->add_option("-c,--confounder", s_c, "stratification node")->required();
    simpson->add_option("--strata", s_k, "number of strata");

    // ---- gbt ----
    auto* gbt = app.add_subcommand("gbt", "train and evaluate a boosted-tree model");
    CommonOpts go;
    std::string g_target;
    std::size_t g_block = 96, g_k = 25;
    double g_testfrac = 0.2;
    add_common(gbt, go, false);
    gbt->add_option("--target", g_target, "target column")->required();
    gbt->add_option("--block-hours", g_block, "train/test block length");
    gbt->add_option("--test-frac", g_testfrac, "test fraction");
    gbt->add_option("--k", g_k, "random-search trials");

    // ---- shapflow ----
    auto* shap = app.add_subcommand("shapflow", "edge attributions for a model prediction");
    CommonOpts ho;
    std::size_t h_k = 25, h_orderings = 200, h_instances = 20, h_background = 100;
    std::string h_mechanism = "gbt";
    add_common(shap, ho, true);
    shap->add_option("--k", h_k, "edges in the ranked table");
    shap->add_option("--n-orderings", h_orderings, "Monte Carlo orderings per instance");
    shap->add_option("--instances", h_instances, "explained rows (seeded sample)");
    shap->add_option("--background", h_background, "background rows (seeded sample)");
    shap->add_option("--mechanism", h_mechanism, "intermediate mechanism kind: gbt|linear");

    // ---- report ----
    auto* report = app.add_subcommand("report", "run the full pipeline into one directory");
    CommonOpts ro;
    std::size_t r_nperm = 50, r_k = 25;
    add_common(report, ro, true);
    report->add_option("--n-perm", r_nperm, "permutations for falsification");
    report->add_option("--k", r_k, "search trials / ranked edges");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (*synth) {
        SyntheticSpec spec = presets::by_name(sy_preset);
        if (sy_hours > 0) spec.n_hours = sy_hours;
        if (!sy_calendar.empty()) spec.holidays = load_holidays(sy_calendar);
        auto [frame, truth] = generate(spec, sy_seed);
        fs::create_directories(sy_out);
        if (sy_raw) {
            if (sy_preset.rfind("fr_market", 0) != 0)
                throw InvalidArgument("--raw is only available for the fr_market presets");
            save_csv(fr_market_raw_view(frame), (fs::path(sy_out) / "data.csv").string());
        } else {
            save_csv(frame, (fs::path(sy_out) / "data.csv").string());
        }
        json truth_j = json::array();
        for (const auto& e : truth.edges)
            truth_j.push_back({{"source", e.source}, {"target", e.target}, {"coeff", e.coeff}});
        write_json(fs::path(sy_out) / "truth.json",
                   json{{"preset", sy_preset}, {"seed", sy_seed}, {"edges", truth_j}});
        write_text(fs::path(sy_out) / "graph.dsl", spec.graph().to_dsl());
        return 0;
    }

    if (*fit_cmd) {
        CausalGraph g = load_graph(fo.graph);
        FeatureFrame frame = load_pipeline(fo.data, fo.calendar);
        auto [scm, rep] = fit(g, frame);
        write_text(fs::path(fo.out) / "scm.txt", serialize_scm(scm));
        write_json(fs::path(fo.out) / "fit_report.json", fit_report_json(rep));
        return 0;
    }

    if (*effects) {
        CausalGraph g = load_graph(eo.graph);
        FeatureFrame frame = load_pipeline(eo.data, eo.calendar);
        auto [scm, rep] = fit(g, frame);
        (void)rep;
        std::size_t src = g.index_of(e_src), dst = g.index_of(e_dst);
        EffectReport er = total_effect(scm, src, dst);
        Line naive = ols_line(frame.values(e_src), frame.values(e_dst));
        json paths = json::array();
        for (const auto& c : er.contributions) {
            json names = json::array();
            for (std::size_t i : c.path) names.push_back(g.name(i));
            paths.push_back({{"path", names}, {"product", c.product}});
        }
        json j;
        j["source"] = er.source;
        j["target"] = er.target;
        j["units"] = er.units;
        j["regression_slope"] = naive.slope;
        j["total_effect"] = er.total;
        j["direct_effect"] = g.has_edge(src, dst) ? json(direct_effect(scm, src, dst)) : json();
        j["paths"] = paths;
        write_json(fs::path(eo.out) / "effects.json", j);
        return 0;
    }

    if (*impact) {
        CausalGraph g = load_graph(io.graph);
        FeatureFrame frame = load_pipeline(io.data, io.calendar);
        Instant split = parse_instant_flag(io.crisis);
        auto [scm, rep] = fit(g, frame);
        (void)rep;
        json edges = json::array();
        for (const auto& [src, dst] : g.edges()) {
            double val = crisis_impact(scm, frame, split, src, dst);
            edges.push_back({{"source", g.name(src)},
                             {"target", g.name(dst)},
                             {"impact", val},
                             {"unit", scm.unit(dst)}});
        }
        json j;
        j["crisis"] = format_instant(split);
        j["edges"] = edges;
        write_json(fs::path(io.out) / "impact.json", j);
        return 0;
    }

    if (*falsify) {
        CausalGraph g = load_graph(lo.graph);
        FeatureFrame frame = load_pipeline(lo.data, lo.calendar);
        FalsificationReport rep = permutation_test(g, frame, l_nperm, lo.alpha, lo.seed);
        json tests = json::array();
        for (const auto& t : rep.tests)
            tests.push_back({{"x", t.x},
                             {"y", t.y},
                             {"z", t.z},
                             {"partial_correlation", t.partial_correlation},
                             {"p_value", t.p_value},
                             {"independent", t.independent}});
        json j;
        j["violations"] = rep.violations;
        j["total_tests"] = rep.total_tests;
        j["p_lmc"] = rep.p_lmc;
        j["p_mec"] = rep.p_mec;
        j["n_permutations"] = rep.n_permutations;
        j["alpha"] = rep.alpha;
        j["seed"] = rep.seed;
        j["falsifiable"] = rep.falsifiable;
        j["not_falsified"] = rep.not_falsified;
        j["permutation_violations"] = rep.permutation_violations;
        j["tests"] = tests;
        write_json(fs::path(lo.out) / "falsify.json", j);
        return 0;
    }

    if (*simpson) {
        FeatureFrame frame = load_pipeline(so.data, so.calendar);
        StratifiedFit sf = stratified_slopes(frame, s_x, s_y, s_c, s_k);
        json strata = json::array();
        for (const auto& s : sf.strata)
            strata.push_back({{"confounder_lo", s.confounder_lo},
                              {"confounder_hi", s.confounder_hi},
                              {"slope", s.slope},
                              {"intercept", s.intercept},
                              {"n", s.n}});
        json j;
        j["x"] = sf.x;
        j["y"] = sf.y;
        j["confounder"] = sf.confounder;
        j["aggregate"] = {{"slope", sf.aggregate.slope}, {"intercept", sf.aggregate.intercept}};
        j["strata"] = strata;
        write_json(fs::path(so.out) / "simpson.json", j);
        return 0;
    }

    if (*gbt) {
        FeatureFrame frame = load_pipeline(go.data, go.calendar);
        Instant split_instant = parse_instant_flag(go.crisis);
        std::vector<std::string> feats;
        for (const auto& c : frame.columns)
            if (c.name != g_target) feats.push_back(c.name);
        BlockedSplit split = blocked_split(frame.n_rows(), g_block, g_testfrac, go.seed);
        SearchResult res = random_search(SearchSpace{}, g_k, frame, feats, g_target, split,
                                         go.seed);
        std::vector<std::span<const double>> cols;
        for (const auto& f : feats) cols.push_back(frame.values(f));
        GbtModel model = train(cols, frame.values(g_target), feats, res.best,
                               derive_seed(go.seed, "cli/gbt"), split.train_rows);
        write_text(fs::path(go.out) / "gbt_model.txt", serialize_gbt(model));

        auto metrics_json = [&](const Metrics& m) {
            return json{{"r2", m.r2},
                        {"mae", m.mae},
                        {"rmse", m.rmse},
                        {"mean_label", m.mean_label},
                        {"n", m.n}};
        };
        json periods;
        periods["full"] = metrics_json(evaluate(model, frame, g_target, split.test_rows));
        bool has_before = frame.timestamps.front() < split_instant;
        bool has_during = frame.timestamps.back() >= split_instant;
        if (has_before && has_during) {
            periods["before"] = metrics_json(evaluate(model, frame, g_target, split.test_rows,
                                                      std::nullopt, split_instant));
            periods["during"] = metrics_json(
                evaluate(model, frame, g_target, split.test_rows, split_instant, std::nullopt));
        }
        json trials = json::array();
        for (const auto& t : res.log)
            trials.push_back({{"n_trees", t.hp.n_trees},
                              {"max_depth", t.hp.max_depth},
                              {"learning_rate", t.hp.learning_rate},
                              {"min_leaf", t.hp.min_leaf},
                              {"row_subsample", t.hp.row_subsample},
                              {"feature_subsample", t.hp.feature_subsample},
                              {"train_r2", t.train_r2},
                              {"test_r2", t.test_r2}});
        json j;
        j["target"] = g_target;
        j["features"] = feats;
        j["best"] = trials[static_cast<std::size_t>(
            std::distance(res.log.begin(),
                          std::find_if(res.log.begin(), res.log.end(), [&](const Trial& t) {
                              return t.test_r2 == res.best_test_r2;
                          })))];
        j["test_metrics"] = periods;
        j["trials"] = trials;
        write_json(fs::path(go.out) / "gbt_metrics.json", j);
        return 0;
    }

    if (*shap) {
        CausalGraph g = load_graph(ho.graph);
        FeatureFrame frame = load_pipeline(ho.data, ho.calendar);
        auto sinks = g.sinks();
        if (sinks.size() != 1)
            throw GraphError("shapflow: graph must have exactly one sink node");
        std::string target = g.name(sinks.front());
        std::vector<std::string> feats;
        for (const auto& name : g.node_names())
            if (name != target) feats.push_back(name);
        std::vector<std::span<const double>> cols;
        for (const auto& f : feats) cols.push_back(frame.values(f));
        Hyperparams hp;
        hp.n_trees = 300;
        hp.max_depth = 5;
        hp.learning_rate = 0.08;
        hp.min_leaf = 20;
        GbtModel model = train(cols, frame.values(target), feats, hp,
                               derive_seed(ho.seed, "cli/shap/model"));

        MechanismKind kind;
        if (h_mechanism == "gbt")
            kind = MechanismKind::Gbt;
        else if (h_mechanism == "linear")
            kind = MechanismKind::Linear;
        else
            throw InvalidArgument("--mechanism must be gbt or linear");

        // When the data spans the crisis instant, explain crisis-period rows
        // against a pre-crisis baseline; otherwise sample both uniformly.
        Instant split = parse_instant_flag(ho.crisis);
        std::size_t split_row = frame.n_rows();
        for (std::size_t i = 0; i < frame.n_rows(); ++i)
            if (frame.timestamps[i] >= split) {
                split_row = i;
                break;
            }
        bool spans = split_row > 0 && split_row < frame.n_rows();
        std::size_t bg_lo = 0, bg_n = spans ? split_row : frame.n_rows();
        std::size_t in_lo = spans ? split_row : 0;
        std::size_t in_n = spans ? frame.n_rows() - split_row : frame.n_rows();

        Rng bg_rng(derive_seed(ho.seed, "cli/shap/background"));
        std::vector<std::size_t> background;
        for (std::size_t i = 0; i < std::min(h_background, bg_n); ++i)
            background.push_back(bg_lo + static_cast<std::size_t>(bg_rng.uniform_int(bg_n)));
        FlowGraph fg = build_flow_graph(g, frame, kind, model, background, ho.seed);

        Rng inst_rng(derive_seed(ho.seed, "cli/shap/instances"));
        std::vector<std::size_t> instances;
        for (std::size_t i = 0; i < std::min(h_instances, in_n); ++i)
            instances.push_back(in_lo + static_cast<std::size_t>(inst_rng.uniform_int(in_n)));

        bool exact = detail::ordering_count(fg) * static_cast<double>(fg.background_inputs.size()) <= 5e4;
        std::vector<FlowExplanation> explanations;
        json inst_j = json::array();
        for (std::size_t k = 0; k < instances.size(); ++k) {
            FlowExplanation ex =
                exact ? shapley_flow_exact(fg, frame, instances[k])
                      : shapley_flow_mc(fg, frame, instances[k], h_orderings,
                                        derive_seed(ho.seed, "cli/shap/mc", k));
            json edges = json::array();
            for (const auto& e : ex.edges)
                edges.push_back({{"from", e.from},
                                 {"to", e.to},
                                 {"value", e.value},
                                 {"std_error", e.std_error}});
            inst_j.push_back({{"row", instances[k]},
                              {"timestamp", format_instant(frame.timestamps[instances[k]])},
                              {"prediction", ex.foreground_prediction},
                              {"background_prediction", ex.background_prediction},
                              {"edges", edges}});
            explanations.push_back(std::move(ex));
        }
        write_json(fs::path(ho.out) / "shapflow.json",
                   json{{"target", target},
                        {"mechanism", h_mechanism},
                        {"method", exact ? "exact" : "mc"},
                        {"instances", inst_j}});

        auto ranked = top_k_edges(aggregate_mean_abs(explanations), h_k);
        json top = json::array();
        for (const auto& e : ranked)
            top.push_back({{"from", e.from}, {"to", e.to}, {"mean_abs_value", e.value}});
        write_json(fs::path(ho.out) / "top_edges.json", json{{"k", h_k}, {"edges", top}});

        for (std::size_t r = 0; r < std::min<std::size_t>(5, ranked.size()); ++r) {
            if (ranked[r].from == "__source__") continue;
            auto dep = dependence_data(frame, ranked[r].from, instances, explanations,
                                       ranked[r].from, ranked[r].to);
            std::string csv = "source_value,flow_value\n";
            char buf[80];
            for (const auto& [x, y] : dep) {
                std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", x, y);
                csv += buf;
            }
            write_text(fs::path(ho.out) / ("dependence_" + ranked[r].from + "__" + ranked[r].to +
                                           ".csv"),
                       csv);
        }
        return 0;
    }

    if (*report) {
        CausalGraph g = load_graph(ro.graph);
        FeatureFrame frame = load_pipeline(ro.data, ro.calendar);
        Instant split = parse_instant_flag(ro.crisis);
        fs::create_directories(ro.out);
        std::vector<std::string> files;

        auto [scm, fit_rep] = fit(g, frame);
        write_text(fs::path(ro.out) / "scm.txt", serialize_scm(scm));
        write_json(fs::path(ro.out) / "fit_report.json", fit_report_json(fit_rep));
        files.push_back("scm.txt");
        files.push_back("fit_report.json");

        json edges = json::array();
        for (const auto& [src, dst] : g.edges())
            edges.push_back({{"source", g.name(src)},
                             {"target", g.name(dst)},
                             {"impact", crisis_impact(scm, frame, split, src, dst)},
                             {"unit", scm.unit(dst)}});
        write_json(fs::path(ro.out) / "impact.json",
                   json{{"crisis", format_instant(split)}, {"edges", edges}});
        files.push_back("impact.json");

        FalsificationReport frep = permutation_test(g, frame, r_nperm, ro.alpha, ro.seed);
        write_json(fs::path(ro.out) / "falsify.json",
                   json{{"violations", frep.violations},
                        {"total_tests", frep.total_tests},
                        {"p_lmc", frep.p_lmc},
                        {"p_mec", frep.p_mec},
                        {"n_permutations", frep.n_permutations}});
        files.push_back("falsify.json");

        std::string target = g.name(g.sinks().front());
        if (frame.has_column("nuclear_availability") && frame.has_column("load") &&
            target != "load" && target != "nuclear_availability") {
            StratifiedFit sf = stratified_slopes(frame, "nuclear_availability", target, "load", 4);
            json strata = json::array();
            for (const auto& s : sf.strata) strata.push_back({{"slope", s.slope}, {"n", s.n}});
            write_json(fs::path(ro.out) / "simpson.json",
                       json{{"x", sf.x},
                            {"y", sf.y},
                            {"confounder", sf.confounder},
                            {"aggregate_slope", sf.aggregate.slope},
                            {"strata", strata}});
            files.push_back("simpson.json");
        }

        write_json(fs::path(ro.out) / "manifest.json", json{{"files", files}});
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const SchemaError& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return kExitSchema;
    } catch (const GraphError& e) {
        std::cerr << "graph error: " << e.what() << "\n";
        return kExitGraph;
    } catch (const DegenerateError& e) {
        std::cerr << "degenerate data: " << e.what() << "\n";
        return kExitDegenerate;
    } catch (const InvalidArgument& e) {
        std::cerr << "invalid argument: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
