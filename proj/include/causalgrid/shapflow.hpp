#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "causalgrid/common.hpp"
#include "causalgrid/gbt.hpp"
#include "causalgrid/graph.hpp"
#include "causalgrid/linalg.hpp"
#include "causalgrid/rng.hpp"
#include "causalgrid/timeseries.hpp"

namespace causalgrid {

enum class MechanismKind { Linear, Gbt };

// Message-passing graph for edge attributions. A super-source feeds every
// exogenous input: the causal roots plus one residual (noise) node per
// intermediate node, so propagating all foreground inputs reproduces the
// foreground prediction exactly. The graph's sink node is evaluated by the
// main model over all other feature nodes rather than by its own
// structural equation.
class FlowGraph {
  public:
    enum class Kind { Source, Passthrough, Linear, Gbt, Sink };

    struct Node {
        std::string name;
        Kind kind = Kind::Passthrough;
        bool noise = false;          // generated residual input
        std::vector<int> parents;    // flow-node index per message slot
        std::vector<double> coeffs;  // Linear: aligned with causal parents
        double intercept = 0.0;
        int mechanism = -1;          // Gbt: index into mechanisms
        std::vector<int> out_edges;  // edge ids in canonical order
    };

    struct Edge {
        int from = -1;
        int to = -1;
        int to_slot = -1;  // message slot in the target's parent list
    };

    std::vector<Node> nodes;
    std::vector<Edge> edges;
    std::vector<GbtModel> mechanisms;  // per-node intermediate models
    const GbtModel* model = nullptr;   // sink model
    int source = -1;
    int sink = -1;
    std::vector<std::size_t> background_rows;
    std::vector<std::vector<double>> background_inputs;  // per row: exogenous values

    int index_of(const std::string& name) const {
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (nodes[i].name == name) return static_cast<int>(i);
        throw GraphError("flow graph has no node named '" + name + "'");
    }

    std::size_t mechanism_count() const {
        std::size_t k = 0;
        for (const auto& n : nodes)
            if (n.kind == Kind::Linear || n.kind == Kind::Gbt) ++k;
        return k;
    }
};

namespace detail {

// Value of one non-sink mechanism given causal-parent messages (excludes
// the trailing noise slot).
inline double mechanism_value(const FlowGraph& fg, const FlowGraph::Node& n,
                              std::span<const double> parent_values) {
    if (n.kind == FlowGraph::Kind::Linear) {
        double s = n.intercept;
        for (std::size_t k = 0; k < n.coeffs.size(); ++k) s += n.coeffs[k] * parent_values[k];
        return s;
    }
    return fg.mechanisms[static_cast<std::size_t>(n.mechanism)].predict(parent_values);
}

// Exogenous inputs for one data row: the observed value for roots, the
// mechanism residual for noise nodes. Indexed by flow-node id; zero
// elsewhere.
inline std::vector<double> exogenous_inputs(const FlowGraph& fg, const FeatureFrame& frame,
                                            std::size_t row) {
    std::vector<double> ext(fg.nodes.size(), 0.0);
    std::vector<double> buf;
    for (std::size_t v = 0; v < fg.nodes.size(); ++v) {
        const FlowGraph::Node& n = fg.nodes[v];
        if (n.kind == FlowGraph::Kind::Passthrough && !n.noise) {
            ext[v] = frame.values(n.name)[row];
        } else if (n.kind == FlowGraph::Kind::Linear || n.kind == FlowGraph::Kind::Gbt) {
            buf.clear();
            for (std::size_t k = 0; k + 1 < n.parents.size(); ++k)
                buf.push_back(frame.values(fg.nodes[static_cast<std::size_t>(n.parents[k])].name)[row]);
            double fitted = mechanism_value(fg, n, buf);
            ext[static_cast<std::size_t>(n.parents.back())] = frame.values(n.name)[row] - fitted;
        }
    }
    return ext;
}

}  // namespace detail

// Builds the attribution graph: fits one mechanism per non-root
// intermediate node of g on its parents (linear least squares or a small
// boosted-tree model), attaches the main model at g's unique sink, and
// stores a background row sample (default: 100 seeded rows).
inline FlowGraph build_flow_graph(const CausalGraph& g, const FeatureFrame& frame,
                                  MechanismKind kind, const GbtModel& model,
                                  std::vector<std::size_t> background_rows = {},
                                  std::uint64_t seed = 0) {
    auto sinks = g.sinks();
    if (sinks.size() != 1)
        throw GraphError("build_flow_graph: graph must have exactly one sink, found " +
                         std::to_string(sinks.size()));
    std::size_t target = sinks.front();
    if (model.trees.empty() && !model.degenerate_target)
        throw InvalidArgument("build_flow_graph: model has no trees; train it first");
    if (model.feature_names.size() != g.size() - 1)
        throw SchemaError("build_flow_graph: model must use every non-sink graph node");
    for (const auto& f : model.feature_names) {
        if (!g.has_node(f) || g.index_of(f) == target)
            throw SchemaError("build_flow_graph: model feature '" + f +
                              "' is not a non-sink graph node");
    }
    if (frame.has_missing()) throw SchemaError("build_flow_graph: frame has missing values");

    FlowGraph fg;
    fg.model = &model;
    fg.source = 0;
    fg.nodes.push_back({"__source__", FlowGraph::Kind::Source, false, {}, {}, 0.0, -1, {}});

    std::vector<int> feat_idx(g.size(), -1);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (i == target) continue;
        feat_idx[i] = static_cast<int>(fg.nodes.size());
        FlowGraph::Node n;
        n.name = g.name(i);
        if (g.parents(i).empty()) {
            n.kind = FlowGraph::Kind::Passthrough;
            n.parents = {fg.source};
        } else {
            n.kind = kind == MechanismKind::Linear ? FlowGraph::Kind::Linear
                                                   : FlowGraph::Kind::Gbt;
        }
        fg.nodes.push_back(std::move(n));
    }

    // Fit mechanisms and wire causal parents plus a noise node per
    // intermediate node.
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (i == target || g.parents(i).empty()) continue;
        std::size_t ni = static_cast<std::size_t>(feat_idx[i]);
        std::vector<std::span<const double>> pcols;
        std::vector<std::string> pnames;
        for (std::size_t p : g.parents(i)) {
            fg.nodes[ni].parents.push_back(feat_idx[p]);
            pcols.push_back(frame.values(g.name(p)));
            pnames.push_back(g.name(p));
        }
        if (kind == MechanismKind::Linear) {
            OlsResult fit_res = ols(pcols, frame.values(g.name(i)), /*intercept=*/true);
            fg.nodes[ni].coeffs.assign(fit_res.coeffs.begin(), fit_res.coeffs.end() - 1);
            fg.nodes[ni].intercept = fit_res.coeffs.back();
        } else {
            Hyperparams hp;
            hp.n_trees = 60;
            hp.max_depth = 3;
            hp.learning_rate = 0.1;
            hp.min_leaf = 20;
            fg.nodes[ni].mechanism = static_cast<int>(fg.mechanisms.size());
            fg.mechanisms.push_back(train(pcols, frame.values(g.name(i)), pnames, hp,
                                          derive_seed(seed, "shapflow/mech", i)));
        }
        int noise = static_cast<int>(fg.nodes.size());
        fg.nodes.push_back({"u_" + g.name(i), FlowGraph::Kind::Passthrough, true,
                            {fg.source}, {}, 0.0, -1, {}});
        fg.nodes[ni].parents.push_back(noise);
    }

    fg.sink = static_cast<int>(fg.nodes.size());
    {
        FlowGraph::Node s;
        s.name = g.name(target);
        s.kind = FlowGraph::Kind::Sink;
        for (const auto& f : model.feature_names)
            s.parents.push_back(feat_idx[static_cast<std::size_t>(g.index_of(f))]);
        fg.nodes.push_back(std::move(s));
    }

    // Out-edge order per node: targets sorted by name, the sink last.
    std::vector<std::vector<std::pair<std::string, FlowGraph::Edge>>> outs(fg.nodes.size());
    for (std::size_t v = 0; v < fg.nodes.size(); ++v) {
        const FlowGraph::Node& n = fg.nodes[v];
        for (std::size_t slot = 0; slot < n.parents.size(); ++slot) {
            std::string key = n.kind == FlowGraph::Kind::Sink ? "\x7f" + n.name : n.name;
            outs[static_cast<std::size_t>(n.parents[slot])].push_back(
                {key, {n.parents[slot], static_cast<int>(v), static_cast<int>(slot)}});
        }
    }
    for (std::size_t u = 0; u < fg.nodes.size(); ++u) {
        std::sort(outs[u].begin(), outs[u].end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        for (auto& [key, e] : outs[u]) {
            fg.nodes[u].out_edges.push_back(static_cast<int>(fg.edges.size()));
            fg.edges.push_back(e);
        }
    }

    if (background_rows.empty()) {
        Rng rng(derive_seed(seed, "shapflow/background"));
        std::size_t count = std::min<std::size_t>(100, frame.n_rows());
        for (std::size_t k = 0; k < count; ++k)
            background_rows.push_back(static_cast<std::size_t>(rng.uniform_int(frame.n_rows())));
    }
    fg.background_rows = std::move(background_rows);
    for (std::size_t b : fg.background_rows)
        fg.background_inputs.push_back(detail::exogenous_inputs(fg, frame, b));
    return fg;
}

struct EdgeAttribution {
    std::string from;
    std::string to;
    double value = 0.0;
    double std_error = 0.0;
};

struct FlowExplanation {
    std::vector<EdgeAttribution> edges;  // aligned with FlowGraph::edges
    double foreground_prediction = 0.0;
    double background_prediction = 0.0;  // mean over background rows
    std::size_t n_evaluations = 0;       // (ordering, background) pairs used
};

namespace detail {

struct FlowState {
    const FlowGraph* fg = nullptr;
    std::vector<double> value;                  // current node values
    std::vector<std::vector<double>> messages;  // latest value per in-slot
    const std::vector<double>* ext_fore = nullptr;
    double sink_value = 0.0;
    std::vector<double> buf;

    double eval(std::size_t v) {
        const FlowGraph::Node& n = fg->nodes[v];
        switch (n.kind) {
            case FlowGraph::Kind::Passthrough:
                return (*ext_fore)[v];
            case FlowGraph::Kind::Linear:
            case FlowGraph::Kind::Gbt: {
                buf.assign(messages[v].begin(), messages[v].end() - 1);
                return mechanism_value(*fg, n, buf) + messages[v].back();
            }
            case FlowGraph::Kind::Sink:
                return fg->model->predict(messages[v]);
            case FlowGraph::Kind::Source:
                return 1.0;
        }
        throw Error("flow: unreachable node kind");
    }

    // Reset node values and messages to the background state.
    void reset(const std::vector<double>& ext_back) {
        value.assign(fg->nodes.size(), 0.0);
        std::vector<bool> done(fg->nodes.size(), false);
        for (std::size_t v = 0; v < fg->nodes.size(); ++v) {
            const FlowGraph::Node& n = fg->nodes[v];
            if (n.kind == FlowGraph::Kind::Passthrough) value[v] = ext_back[v];
            done[v] = n.kind == FlowGraph::Kind::Passthrough || n.kind == FlowGraph::Kind::Source;
        }
        bool changed = true;
        while (changed) {
            changed = false;
            for (std::size_t v = 0; v < fg->nodes.size(); ++v) {
                const FlowGraph::Node& n = fg->nodes[v];
                if (done[v] || n.kind == FlowGraph::Kind::Sink) continue;
                bool ready = true;
                for (int p : n.parents)
                    if (!done[static_cast<std::size_t>(p)]) ready = false;
                if (!ready) continue;
                buf.clear();
                for (std::size_t k = 0; k + 1 < n.parents.size(); ++k)
                    buf.push_back(value[static_cast<std::size_t>(n.parents[k])]);
                value[v] = mechanism_value(*fg, n, buf) +
                           value[static_cast<std::size_t>(n.parents.back())];
                done[v] = true;
                changed = true;
            }
        }
        messages.assign(fg->nodes.size(), {});
        for (std::size_t v = 0; v < fg->nodes.size(); ++v) {
            messages[v].resize(fg->nodes[v].parents.size());
            for (std::size_t k = 0; k < fg->nodes[v].parents.size(); ++k)
                messages[v][k] = value[static_cast<std::size_t>(fg->nodes[v].parents[k])];
        }
        sink_value = fg->model->predict(messages[static_cast<std::size_t>(fg->sink)]);
        value[static_cast<std::size_t>(fg->sink)] = sink_value;
    }

    // Deliver along one edge and cascade downstream in `perm` order,
    // crediting the edge with the total sink movement its delivery caused.
    void cascade(int edge_id, const std::vector<std::vector<int>>& perm,
                 std::vector<double>& credit) {
        const FlowGraph::Edge& e = fg->edges[static_cast<std::size_t>(edge_id)];
        std::size_t v = static_cast<std::size_t>(e.to);
        messages[v][static_cast<std::size_t>(e.to_slot)] = value[static_cast<std::size_t>(e.from)];
        double before = sink_value;
        value[v] = eval(v);
        if (static_cast<int>(v) == fg->sink) {
            sink_value = value[v];
        } else {
            for (int slot : perm[v])
                cascade(fg->nodes[v].out_edges[static_cast<std::size_t>(slot)], perm, credit);
        }
        credit[static_cast<std::size_t>(edge_id)] += sink_value - before;
    }

    // One complete pass: fire every source out-edge in `perm` order.
    void run(const std::vector<std::vector<int>>& perm, std::vector<double>& credit) {
        std::size_t s = static_cast<std::size_t>(fg->source);
        value[s] = 1.0;
        for (int slot : perm[s])
            cascade(fg->nodes[s].out_edges[static_cast<std::size_t>(slot)], perm, credit);
    }
};

inline double ordering_count(const FlowGraph& fg) {
    double total = 1.0;
    for (const auto& n : fg.nodes) {
        double f = 1.0;
        for (std::size_t k = 2; k <= n.out_edges.size(); ++k) f *= static_cast<double>(k);
        total *= f;
    }
    return total;
}

}  // namespace detail

// Exact edge attributions: averages the per-edge cascade credits over every
// combination of per-node out-edge orderings and every background row.
inline FlowExplanation shapley_flow_exact(const FlowGraph& fg, const FeatureFrame& frame,
                                          std::size_t foreground_row,
                                          double ordering_cap = 1e6) {
    double count = detail::ordering_count(fg);
    if (count > ordering_cap)
        throw InvalidArgument("shapley_flow_exact: " + std::to_string(count) +
                              " orderings exceed the cap of " + std::to_string(ordering_cap) +
                              "; use the Monte Carlo estimator");

    std::vector<std::vector<std::vector<int>>> perms(fg.nodes.size());
    for (std::size_t v = 0; v < fg.nodes.size(); ++v) {
        std::vector<int> slots(fg.nodes[v].out_edges.size());
        std::iota(slots.begin(), slots.end(), 0);
        do {
            perms[v].push_back(slots);
        } while (std::next_permutation(slots.begin(), slots.end()));
    }

    std::vector<double> ext_fore = detail::exogenous_inputs(fg, frame, foreground_row);
    std::vector<double> credit(fg.edges.size(), 0.0);
    std::size_t n_eval = 0;
    double back_sum = 0.0, fore_pred = 0.0;
    detail::FlowState st;
    st.fg = &fg;
    st.ext_fore = &ext_fore;
    std::vector<std::vector<int>> perm(fg.nodes.size());
    for (const auto& ext_back : fg.background_inputs) {
        std::vector<std::size_t> idx(fg.nodes.size(), 0);
        bool first = true;
        while (true) {
            for (std::size_t v = 0; v < fg.nodes.size(); ++v) perm[v] = perms[v][idx[v]];
            st.reset(ext_back);
            if (first) back_sum += st.sink_value;
            first = false;
            st.run(perm, credit);
            fore_pred = st.sink_value;
            ++n_eval;
            std::size_t v = 0;
            while (v < fg.nodes.size() && ++idx[v] == perms[v].size()) {
                idx[v] = 0;
                ++v;
            }
            if (v == fg.nodes.size()) break;
        }
    }
    FlowExplanation out;
    out.n_evaluations = n_eval;
    out.foreground_prediction = fore_pred;
    out.background_prediction = back_sum / static_cast<double>(fg.background_inputs.size());
    for (std::size_t e = 0; e < fg.edges.size(); ++e)
        out.edges.push_back({fg.nodes[static_cast<std::size_t>(fg.edges[e].from)].name,
                             fg.nodes[static_cast<std::size_t>(fg.edges[e].to)].name,
                             credit[e] / static_cast<double>(n_eval), 0.0});
    return out;
}

// Monte Carlo estimate: each sample draws one background row and one
// uniformly random ordering; reports per-edge mean and standard error.
inline FlowExplanation shapley_flow_mc(const FlowGraph& fg, const FeatureFrame& frame,
                                       std::size_t foreground_row, std::size_t n_orderings,
                                       std::uint64_t seed) {
    if (n_orderings < 2) throw InvalidArgument("shapley_flow_mc: need at least 2 samples");

    std::vector<double> ext_fore = detail::exogenous_inputs(fg, frame, foreground_row);
    std::vector<double> sum(fg.edges.size(), 0.0), sumsq(fg.edges.size(), 0.0);
    std::vector<double> credit(fg.edges.size());
    detail::FlowState st;
    st.fg = &fg;
    st.ext_fore = &ext_fore;
    std::vector<std::vector<int>> perm(fg.nodes.size());
    double back_sum = 0.0, fore_pred = 0.0;
    Rng rng(derive_seed(seed, "shapflow/mc"));
    for (std::size_t s = 0; s < n_orderings; ++s) {
        std::size_t bi = static_cast<std::size_t>(rng.uniform_int(fg.background_inputs.size()));
        for (std::size_t v = 0; v < fg.nodes.size(); ++v) {
            perm[v].resize(fg.nodes[v].out_edges.size());
            std::iota(perm[v].begin(), perm[v].end(), 0);
            rng.shuffle(perm[v]);
        }
        std::fill(credit.begin(), credit.end(), 0.0);
        st.reset(fg.background_inputs[bi]);
        back_sum += st.sink_value;
        st.run(perm, credit);
        fore_pred = st.sink_value;
        for (std::size_t e = 0; e < fg.edges.size(); ++e) {
            sum[e] += credit[e];
            sumsq[e] += credit[e] * credit[e];
        }
    }
    FlowExplanation out;
    out.n_evaluations = n_orderings;
    out.foreground_prediction = fore_pred;
    out.background_prediction = back_sum / static_cast<double>(n_orderings);
    double n = static_cast<double>(n_orderings);
    for (std::size_t e = 0; e < fg.edges.size(); ++e) {
        double m = sum[e] / n;
        double var = std::max(0.0, sumsq[e] / n - m * m);
        out.edges.push_back({fg.nodes[static_cast<std::size_t>(fg.edges[e].from)].name,
                             fg.nodes[static_cast<std::size_t>(fg.edges[e].to)].name, m,
                             std::sqrt(var / (n - 1.0))});
    }
    return out;
}

// Mean absolute attribution per edge across several explained instances.
inline std::vector<EdgeAttribution> aggregate_mean_abs(
    const std::vector<FlowExplanation>& explanations) {
    if (explanations.empty()) throw InvalidArgument("aggregate_mean_abs: no explanations");
    std::vector<EdgeAttribution> agg = explanations.front().edges;
    for (auto& e : agg) {
        e.value = 0.0;
        e.std_error = 0.0;
    }
    for (const auto& ex : explanations) {
        if (ex.edges.size() != agg.size())
            throw InvalidArgument("aggregate_mean_abs: explanations from different graphs");
        for (std::size_t i = 0; i < agg.size(); ++i) agg[i].value += std::fabs(ex.edges[i].value);
    }
    for (auto& e : agg) e.value /= static_cast<double>(explanations.size());
    return agg;
}

// Highest-magnitude edges, ties broken by name for stable output.
inline std::vector<EdgeAttribution> top_k_edges(std::vector<EdgeAttribution> edges,
                                                std::size_t k) {
    if (k == 0) throw InvalidArgument("top_k_edges: k must be positive");
    std::sort(edges.begin(), edges.end(), [](const EdgeAttribution& a, const EdgeAttribution& b) {
        if (std::fabs(a.value) != std::fabs(b.value)) return std::fabs(a.value) > std::fabs(b.value);
        if (a.from != b.from) return a.from < b.from;
        return a.to < b.to;
    });
    if (edges.size() > k) edges.resize(k);
    return edges;
}

// (source feature value, flow value) pairs for one edge across instances,
// ready for external plotting.
inline std::vector<std::pair<double, double>> dependence_data(
    const FeatureFrame& frame, const std::string& source_node,
    const std::vector<std::size_t>& instance_rows,
    const std::vector<FlowExplanation>& explanations, const std::string& edge_from,
    const std::string& edge_to) {
    if (instance_rows.size() != explanations.size())
        throw InvalidArgument("dependence_data: instance/explanation count mismatch");
    std::vector<std::pair<double, double>> out;
    auto vals = frame.values(source_node);
    for (std::size_t i = 0; i < instance_rows.size(); ++i) {
        const auto& edges = explanations[i].edges;
        bool found = false;
        for (const auto& e : edges)
            if (e.from == edge_from && e.to == edge_to) {
                out.push_back({vals[instance_rows[i]], e.value});
                found = true;
                break;
            }
        if (!found) throw GraphError("dependence_data: no edge " + edge_from + " -> " + edge_to);
    }
    return out;
}

struct FeatureAttribution {
    std::string feature;
    double value = 0.0;
    double std_error = 0.0;
};

// Plain permutation-sampling feature attributions that treat features as
// independent, for contrast with the flow-based values.
inline std::vector<FeatureAttribution> shap_independent(
    const GbtModel& model, const FeatureFrame& frame, std::size_t foreground_row,
    const std::vector<std::size_t>& background_rows, std::size_t n_perm, std::uint64_t seed) {
    if (background_rows.empty())
        throw InvalidArgument("shap_independent: need at least one background row");
    if (n_perm < 2) throw InvalidArgument("shap_independent: need at least 2 samples");
    const std::size_t d = model.feature_names.size();
    std::vector<std::span<const double>> cols;
    for (const auto& f : model.feature_names) cols.push_back(frame.values(f));

    std::vector<double> fore(d);
    for (std::size_t f = 0; f < d; ++f) fore[f] = cols[f][foreground_row];

    std::vector<double> sum(d, 0.0), sumsq(d, 0.0);
    std::vector<std::size_t> order(d);
    std::vector<double> row(d);
    Rng rng(derive_seed(seed, "shap/independent"));
    for (std::size_t s = 0; s < n_perm; ++s) {
        std::size_t b = background_rows[static_cast<std::size_t>(rng.uniform_int(background_rows.size()))];
        for (std::size_t f = 0; f < d; ++f) row[f] = cols[f][b];
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        double prev = model.predict(row);
        for (std::size_t f : order) {
            row[f] = fore[f];
            double cur = model.predict(row);
            sum[f] += cur - prev;
            sumsq[f] += (cur - prev) * (cur - prev);
            prev = cur;
        }
    }
    std::vector<FeatureAttribution> out;
    double n = static_cast<double>(n_perm);
    for (std::size_t f = 0; f < d; ++f) {
        double m = sum[f] / n;
        double var = std::max(0.0, sumsq[f] / n - m * m);
        out.push_back({model.feature_names[f], m, std::sqrt(var / (n - 1.0))});
    }
    return out;
}

}  // namespace causalgrid
