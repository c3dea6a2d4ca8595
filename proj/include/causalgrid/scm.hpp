#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "causalgrid/graph.hpp"
#include "causalgrid/linalg.hpp"
#include "causalgrid/rng.hpp"
#include "causalgrid/timeseries.hpp"

namespace causalgrid {

// Structural coefficients of one non-root node, aligned with the graph's
// (sorted) parent list. Roots have no coefficients and carry an empirical
// sample vector instead.
struct NodeMechanism {
    std::vector<double> coeffs;  // normalized space
    double noise_std = 0.0;      // residual std in normalized space
};

// 1 - RSS/TSS with TSS taken around the observed mean.
inline double r2(std::span<const double> observed, std::span<const double> predicted) {
    if (observed.size() != predicted.size() || observed.size() < 2)
        throw InvalidArgument("r2: need equal lengths >= 2");
    double m = mean(observed);
    double rss = 0.0, tss = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        rss += (observed[i] - predicted[i]) * (observed[i] - predicted[i]);
        tss += (observed[i] - m) * (observed[i] - m);
    }
    if (!(tss > 0.0)) throw DegenerateError("r2: observed values are constant");
    return 1.0 - rss / tss;
}

struct FitNodeReport {
    std::string node;
    std::optional<double> r2;  // absent for root nodes
    double residual_std = 0.0;
    double condition = 1.0;
    bool collinearity_warning = false;
};

struct FitReport {
    std::vector<FitNodeReport> nodes;
    std::size_t n_rows = 0;
};

// A fitted linear structural causal model over a declared DAG.
class LinearScm {
  public:
    LinearScm(CausalGraph graph, NormalizationStats stats, std::vector<NodeMechanism> mechanisms,
              std::vector<std::vector<double>> root_samples, std::vector<std::string> units)
        : graph_(std::move(graph)),
          stats_(std::move(stats)),
          mechanisms_(std::move(mechanisms)),
          root_samples_(std::move(root_samples)),
          units_(std::move(units)) {
        for (std::size_t i = 0; i < graph_.size(); ++i) {
            if (mechanisms_[i].coeffs.size() != graph_.parents(i).size())
                throw InvalidArgument("LinearScm: coefficient count mismatch at node " +
                                      graph_.name(i));
            if (graph_.parents(i).empty() && root_samples_[i].empty())
                throw InvalidArgument("LinearScm: root node " + graph_.name(i) +
                                      " has no empirical samples");
        }
    }

    const CausalGraph& graph() const { return graph_; }
    const NormalizationStats& stats() const { return stats_; }
    const NodeMechanism& mechanism(std::size_t i) const { return mechanisms_[i]; }
    const std::vector<double>& root_samples(std::size_t i) const { return root_samples_[i]; }
    const std::string& unit(std::size_t i) const { return units_[i]; }

    // Normalized structural coefficient of edge source -> target.
    double coeff_norm(std::size_t target, std::size_t source) const {
        const auto& pa = graph_.parents(target);
        auto it = std::lower_bound(pa.begin(), pa.end(), source);
        if (it == pa.end() || *it != source)
            throw GraphError("no edge " + graph_.name(source) + " -> " + graph_.name(target));
        return mechanisms_[target].coeffs[static_cast<std::size_t>(it - pa.begin())];
    }

    // Raw-unit structural coefficient c_ij = c_norm * sigma_i / sigma_j.
    double coeff_raw(std::size_t target, std::size_t source) const {
        return denormalize_coeff(coeff_norm(target, source), stats_, graph_.name(target),
                                 graph_.name(source));
    }

  private:
    CausalGraph graph_;
    NormalizationStats stats_;
    std::vector<NodeMechanism> mechanisms_;
    std::vector<std::vector<double>> root_samples_;
    std::vector<std::string> units_;
};

// Fits each non-root node by OLS of its normalized column on its normalized
// parents (no intercept; the data is centered). Roots store their normalized
// empirical values.
inline std::pair<LinearScm, FitReport> fit(const CausalGraph& g, const FeatureFrame& frame) {
    if (frame.has_missing()) throw InvalidArgument("fit: frame has missing values; clean it first");
    FeatureFrame sub = frame.select(g.node_names());
    auto [norm, stats] = normalize(sub);

    std::vector<NodeMechanism> mechanisms(g.size());
    std::vector<std::vector<double>> root_samples(g.size());
    std::vector<std::string> units(g.size());
    FitReport report;
    report.n_rows = frame.n_rows();

    for (std::size_t i = 0; i < g.size(); ++i) {
        const std::string& name = g.name(i);
        units[i] = sub.column(name).unit;
        FitNodeReport nr;
        nr.node = name;
        const auto& pa = g.parents(i);
        if (pa.empty()) {
            root_samples[i] = norm.column(name).values;
            nr.residual_std = 1.0;  // roots carry their full (unit) variance
        } else {
            std::vector<std::span<const double>> cols;
            cols.reserve(pa.size());
            for (std::size_t p : pa) cols.push_back(norm.values(g.name(p)));
            OlsResult res;
            try {
                res = ols(cols, norm.values(name), /*intercept=*/false);
            } catch (const DegenerateError&) {
                throw DegenerateError("fit: rank-deficient parent matrix at node " + name);
            }
            mechanisms[i].coeffs = std::move(res.coeffs);
            mechanisms[i].noise_std = res.residual_std;
            nr.residual_std = res.residual_std;
            nr.condition = res.condition;
            nr.collinearity_warning = res.condition > 1e8;
            // Normalized columns have unit variance, so R2 = 1 - RSS/n.
            double rss = 0.0;
            for (double e : res.residuals) rss += e * e;
            nr.r2 = 1.0 - rss / static_cast<double>(res.residuals.size());
        }
        report.nodes.push_back(std::move(nr));
    }
    return {LinearScm(g, std::move(stats), std::move(mechanisms), std::move(root_samples),
                      std::move(units)),
            std::move(report)};
}

struct PathContribution {
    DirectedPath path;
    double product = 0.0;  // raw-unit product of edge coefficients
};

struct EffectReport {
    std::string source;
    std::string target;
    std::vector<PathContribution> contributions;
    double total = 0.0;
    std::string units;  // target-unit per source-unit
};

// Raw-unit direct effect of source on target; the edge must exist.
inline double direct_effect(const LinearScm& scm, std::size_t source, std::size_t target) {
    return scm.coeff_raw(target, source);
}

// Product of raw-unit coefficients along a directed path.
inline double path_effect(const LinearScm& scm, const DirectedPath& path) {
    if (path.size() < 2) throw InvalidArgument("path_effect: path needs at least one edge");
    double p = 1.0;
    for (std::size_t k = 0; k + 1 < path.size(); ++k) p *= scm.coeff_raw(path[k + 1], path[k]);
    return p;
}

// Sum of path products over every directed path from source to target.
inline EffectReport total_effect(const LinearScm& scm, std::size_t source, std::size_t target) {
    EffectReport rep;
    rep.source = scm.graph().name(source);
    rep.target = scm.graph().name(target);
    rep.units = scm.unit(target) + " per " + scm.unit(source);
    for (auto& path : enumerate_paths(scm.graph(), source, target)) {
        PathContribution pc;
        pc.product = path_effect(scm, path);
        pc.path = std::move(path);
        rep.total += pc.product;
        rep.contributions.push_back(std::move(pc));
    }
    return rep;
}

// Average crisis impact c_ij * (mean of X_j during - mean of X_j before),
// in raw target units. The edge source -> target must exist.
inline double crisis_impact(const LinearScm& scm, const FeatureFrame& frame, Instant split,
                            std::size_t source, std::size_t target) {
    double c = scm.coeff_raw(target, source);  // validates the edge
    auto vals = frame.values(scm.graph().name(source));
    double sum_before = 0.0, sum_during = 0.0;
    std::size_t n_before = 0, n_during = 0;
    for (std::size_t i = 0; i < frame.n_rows(); ++i) {
        if (frame.timestamps[i] < split) {
            sum_before += vals[i];
            ++n_before;
        } else {
            sum_during += vals[i];
            ++n_during;
        }
    }
    if (n_before == 0 || n_during == 0)
        throw DegenerateError("crisis_impact: split instant leaves an empty before/during segment");
    return c * (sum_during / static_cast<double>(n_during) -
                sum_before / static_cast<double>(n_before));
}

// Forward generation in topological order. Roots resample their empirical
// values; non-roots are linear combinations plus Gaussian noise at the
// fitted std. Intervened nodes are clamped to the given raw value with
// parents and noise ignored. Noise uses per-node counter streams, so the
// result is deterministic per seed regardless of evaluation order.
inline FeatureFrame intervene_sample(const LinearScm& scm,
                                     const std::map<std::string, double>& interventions,
                                     std::size_t n, std::uint64_t seed,
                                     Instant start = parse_instant("2020-01-01T00:00:00Z")) {
    const CausalGraph& g = scm.graph();
    std::vector<std::optional<double>> clamp_norm(g.size());
    for (const auto& [name, raw] : interventions) {
        std::size_t i = g.index_of(name);  // throws on unknown node
        clamp_norm[i] = (raw - scm.stats().mean_of(name)) / scm.stats().std_of(name);
    }

    std::vector<std::vector<double>> vals(g.size(), std::vector<double>(n));
    for (std::size_t node : g.topological_order()) {
        auto& col = vals[node];
        if (clamp_norm[node]) {
            std::fill(col.begin(), col.end(), *clamp_norm[node]);
            continue;
        }
        const auto& pa = g.parents(node);
        // noise streams are keyed by node name so that models with the same
        // mechanisms sample identically regardless of node index order
        const std::uint64_t stream = hash_label(g.name(node));
        if (pa.empty()) {
            const auto& pool = scm.root_samples(node);
            for (std::size_t r = 0; r < n; ++r) {
                auto k = static_cast<std::size_t>(counter_uniform(seed, stream, r) *
                                                  static_cast<double>(pool.size()));
                col[r] = pool[std::min(k, pool.size() - 1)];
            }
        } else {
            const auto& mech = scm.mechanism(node);
            for (std::size_t r = 0; r < n; ++r) {
                double v = 0.0;
                for (std::size_t j = 0; j < pa.size(); ++j) v += mech.coeffs[j] * vals[pa[j]][r];
                if (mech.noise_std > 0.0) v += mech.noise_std * counter_normal(seed, stream, r);
                col[r] = v;
            }
        }
    }

    FeatureFrame out;
    out.timestamps.resize(n);
    for (std::size_t r = 0; r < n; ++r) out.timestamps[r] = start + static_cast<Instant>(r) * kHour;
    for (std::size_t i = 0; i < g.size(); ++i) {
        Column c{g.name(i), scm.unit(i), std::move(vals[i])};
        double m = scm.stats().mean_of(c.name), s = scm.stats().std_of(c.name);
        for (double& v : c.values) v = v * s + m;
        out.columns.push_back(std::move(c));
    }
    return out;
}

inline FeatureFrame sample(const LinearScm& scm, std::size_t n, std::uint64_t seed) {
    return intervene_sample(scm, {}, n, seed);
}

// ---- serialization: human-readable text, exact 17-significant-digit round
// trip ----

inline std::string serialize_scm(const LinearScm& scm) {
    const CausalGraph& g = scm.graph();
    std::ostringstream out;
    char buf[40];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    out << "causalgrid-scm v1\n";
    out << "graph begin\n" << g.to_dsl() << "graph end\n";
    for (std::size_t i = 0; i < g.size(); ++i) {
        const std::string& name = g.name(i);
        out << "node " << name << " unit " << (scm.unit(i).empty() ? "-" : scm.unit(i)) << " mean "
            << num(scm.stats().mean_of(name)) << " std " << num(scm.stats().std_of(name)) << "\n";
        const auto& pa = g.parents(i);
        if (pa.empty()) {
            const auto& samples = scm.root_samples(i);
            out << "  empirical " << samples.size() << "\n ";
            for (double v : samples) out << " " << num(v);
            out << "\n";
        } else {
            out << "  noise " << num(scm.mechanism(i).noise_std) << "\n";
            for (std::size_t j = 0; j < pa.size(); ++j)
                out << "  coeff " << g.name(pa[j]) << " " << num(scm.mechanism(i).coeffs[j]) << "\n";
        }
    }
    return out.str();
}

inline LinearScm parse_scm(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line != "causalgrid-scm v1")
        throw FormatError("parse_scm: bad header");
    if (!std::getline(in, line) || line != "graph begin") throw FormatError("parse_scm: expected graph");
    std::ostringstream dsl;
    while (std::getline(in, line) && line != "graph end") dsl << line << "\n";
    CausalGraph g = parse_graph(dsl.str());

    NormalizationStats stats;
    stats.names.assign(g.size(), "");
    stats.means.assign(g.size(), 0.0);
    stats.stds.assign(g.size(), 1.0);
    std::vector<NodeMechanism> mechanisms(g.size());
    std::vector<std::vector<double>> root_samples(g.size());
    std::vector<std::string> units(g.size());
    std::vector<std::map<std::string, double>> named_coeffs(g.size());

    std::size_t cur = g.size();
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tok;
        if (!(ls >> tok)) continue;
        if (tok == "node") {
            std::string name, kw_unit, unit, kw_mean, kw_std;
            double m, s;
            if (!(ls >> name >> kw_unit >> unit >> kw_mean >> m >> kw_std >> s) ||
                kw_unit != "unit" || kw_mean != "mean" || kw_std != "std")
                throw FormatError("parse_scm: bad node line: " + line);
            cur = g.index_of(name);
            stats.names[cur] = name;
            stats.means[cur] = m;
            stats.stds[cur] = s;
            units[cur] = unit == "-" ? "" : unit;
        } else if (tok == "noise") {
            if (cur >= g.size()) throw FormatError("parse_scm: noise before node");
            ls >> mechanisms[cur].noise_std;
        } else if (tok == "coeff") {
            std::string parent;
            double c;
            if (!(ls >> parent >> c)) throw FormatError("parse_scm: bad coeff line: " + line);
            named_coeffs[cur][parent] = c;
        } else if (tok == "empirical") {
            std::size_t count;
            ls >> count;
            root_samples[cur].reserve(count);
            while (root_samples[cur].size() < count) {
                double v;
                if (!(in >> v)) throw FormatError("parse_scm: truncated empirical samples");
                root_samples[cur].push_back(v);
            }
            std::getline(in, line);  // consume rest of the sample line
        } else {
            throw FormatError("parse_scm: unexpected token: " + tok);
        }
    }
    // stats vectors are indexed by graph order; names must all be present.
    for (std::size_t i = 0; i < g.size(); ++i)
        if (stats.names[i].empty()) throw FormatError("parse_scm: missing node record for " + g.name(i));
    // Re-align coefficients with each node's sorted parent list.
    for (std::size_t i = 0; i < g.size(); ++i) {
        for (std::size_t p : g.parents(i)) {
            auto it = named_coeffs[i].find(g.name(p));
            if (it == named_coeffs[i].end())
                throw FormatError("parse_scm: missing coefficient " + g.name(p) + " -> " + g.name(i));
            mechanisms[i].coeffs.push_back(it->second);
        }
    }
    return LinearScm(std::move(g), std::move(stats), std::move(mechanisms), std::move(root_samples),
                     std::move(units));
}

}  // namespace causalgrid
