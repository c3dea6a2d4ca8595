#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "causalgrid/common.hpp"
#include "causalgrid/graph.hpp"
#include "causalgrid/rng.hpp"
#include "causalgrid/timeseries.hpp"
#include "causalgrid/timeutil.hpp"

namespace causalgrid {

// Exogenous driver for a root node.
struct RootDriver {
    enum class Kind { HourSin, HourCos, DoySin, DoyCos, WorkingDay, Ar1, Iid, Uniform };
    Kind kind = Kind::Iid;
    double mu = 0.0;
    double sigma = 0.0;  // Uniform: half-width around mu
    double phi = 0.0;    // Ar1 persistence
};

struct SynthNode {
    std::string name;
    std::string unit;
    std::optional<RootDriver> driver;  // present iff the node is a root
    double intercept = 0.0;
    std::vector<std::pair<std::string, double>> terms;  // parent name -> coefficient
    double noise_std = 0.0;
    double crisis_shift = 0.0;  // added once timestamps reach the crisis instant
    // Optional saturating response: sat_coeff * max(sat_knee - parent, 0).
    std::string sat_parent;
    double sat_coeff = 0.0;
    double sat_knee = 0.0;
};

struct SyntheticSpec {
    std::vector<SynthNode> nodes;
    std::size_t n_hours = 2160;
    Instant start = 0;
    Instant crisis = 0;  // 0 disables crisis shifts
    std::set<std::int64_t> holidays;

    CausalGraph graph() const {
        std::vector<std::string> names;
        std::vector<std::pair<std::string, std::string>> edges;
        for (const auto& n : nodes) {
            names.push_back(n.name);
            for (const auto& [p, c] : n.terms) edges.push_back({p, n.name});
            if (!n.sat_parent.empty()) edges.push_back({n.sat_parent, n.name});
        }
        return CausalGraph(names, edges);
    }
};

struct GroundTruthEdge {
    std::string source;
    std::string target;
    double coeff = 0.0;  // raw-unit linear coefficient; omitted for saturating terms
};

struct GroundTruth {
    std::vector<GroundTruthEdge> edges;

    double coeff(const std::string& source, const std::string& target) const {
        for (const auto& e : edges)
            if (e.source == source && e.target == target) return e.coeff;
        throw GraphError("ground truth has no edge " + source + " -> " + target);
    }
};

// Simulates the structural equations hour by hour. Noise is drawn from
// counter streams keyed by node name and row, so results are identical for
// a given seed no matter the evaluation order.
inline std::pair<FeatureFrame, GroundTruth> generate(const SyntheticSpec& spec,
                                                     std::uint64_t seed) {
    if (spec.nodes.empty()) throw InvalidArgument("generate: spec has no nodes");
    if (spec.n_hours < 2) throw InvalidArgument("generate: need at least 2 hours");
    CausalGraph g = spec.graph();
    std::map<std::string, const SynthNode*> by_name;
    for (const auto& n : spec.nodes) {
        if (by_name.count(n.name)) throw InvalidArgument("generate: duplicate node " + n.name);
        by_name[n.name] = &n;
        bool is_root = g.parents(g.index_of(n.name)).empty();
        if (is_root != n.driver.has_value())
            throw InvalidArgument("generate: node " + n.name +
                                  (is_root ? " needs a driver" : " has both parents and a driver"));
    }

    FeatureFrame frame;
    frame.timestamps.resize(spec.n_hours);
    for (std::size_t t = 0; t < spec.n_hours; ++t)
        frame.timestamps[t] = spec.start + static_cast<Instant>(t) * kHour;

    std::map<std::string, std::vector<double>> values;
    for (std::size_t gi : g.topological_order()) {
        const SynthNode& n = *by_name.at(g.name(gi));
        std::uint64_t stream = hash_label(n.name);
        std::vector<double> col(spec.n_hours);
        if (n.driver) {
            const RootDriver& d = *n.driver;
            double prev = d.mu;
            for (std::size_t t = 0; t < spec.n_hours; ++t) {
                Instant ts = frame.timestamps[t];
                double v = 0.0;
                switch (d.kind) {
                    case RootDriver::Kind::HourSin:
                        v = std::sin(2.0 * M_PI * hour_of_day(ts) / 24.0);
                        break;
                    case RootDriver::Kind::HourCos:
                        v = std::cos(2.0 * M_PI * hour_of_day(ts) / 24.0);
                        break;
                    case RootDriver::Kind::DoySin:
                        v = std::sin(2.0 * M_PI * day_of_year(ts) / 365.25);
                        break;
                    case RootDriver::Kind::DoyCos:
                        v = std::cos(2.0 * M_PI * day_of_year(ts) / 365.25);
                        break;
                    case RootDriver::Kind::WorkingDay:
                        v = (weekday(ts) < 5 && !spec.holidays.count(day_index(ts))) ? 1.0 : 0.0;
                        break;
                    case RootDriver::Kind::Ar1:
                        v = d.mu + d.phi * (prev - d.mu) +
                            d.sigma * counter_normal(seed, stream, t);
                        prev = v;
                        break;
                    case RootDriver::Kind::Iid:
                        v = d.mu + d.sigma * counter_normal(seed, stream, t);
                        break;
                    case RootDriver::Kind::Uniform:
                        v = d.mu + d.sigma * (2.0 * counter_uniform(seed, stream, t) - 1.0);
                        break;
                }
                if (spec.crisis != 0 && ts >= spec.crisis) v += n.crisis_shift;
                col[t] = v;
            }
        } else {
            for (std::size_t t = 0; t < spec.n_hours; ++t) {
                double v = n.intercept;
                for (const auto& [p, c] : n.terms) v += c * values.at(p)[t];
                if (!n.sat_parent.empty())
                    v += n.sat_coeff * std::max(n.sat_knee - values.at(n.sat_parent)[t], 0.0);
                if (n.noise_std > 0.0) v += n.noise_std * counter_normal(seed, stream, t);
                if (spec.crisis != 0 && frame.timestamps[t] >= spec.crisis) v += n.crisis_shift;
                col[t] = v;
            }
        }
        values[n.name] = std::move(col);
    }
    for (const auto& n : spec.nodes) frame.add_column(n.name, n.unit, std::move(values.at(n.name)));

    GroundTruth truth;
    for (const auto& n : spec.nodes)
        for (const auto& [p, c] : n.terms) truth.edges.push_back({p, n.name, c});
    return {std::move(frame), std::move(truth)};
}

namespace presets {

// Electricity-market style system whose node set matches the shipped
// analysis graphs, generating both a price and a net-exports outcome.
// Plain variant: a stationary linear system (crisis shifts declared but
// disabled) so fitted coefficients are comparable to the ground truth.
inline SyntheticSpec fr_market() {
    SyntheticSpec spec;
    spec.n_hours = 2160;  // 90 days
    spec.start = parse_instant("2021-08-15T00:00:00Z");
    spec.crisis = 0;

    auto root = [&](const std::string& name, const std::string& unit, RootDriver d,
                    double shift = 0.0) {
        SynthNode n;
        n.name = name;
        n.unit = unit;
        n.driver = d;
        n.crisis_shift = shift;
        spec.nodes.push_back(n);
    };
    auto node = [&](const std::string& name, const std::string& unit, double intercept,
                    std::vector<std::pair<std::string, double>> terms, double noise,
                    double shift = 0.0) {
        SynthNode n;
        n.name = name;
        n.unit = unit;
        n.intercept = intercept;
        n.terms = std::move(terms);
        n.noise_std = noise;
        n.crisis_shift = shift;
        spec.nodes.push_back(n);
    };

    root("hour_sin", "1", {RootDriver::Kind::HourSin, 0, 0, 0});
    root("hour_cos", "1", {RootDriver::Kind::HourCos, 0, 0, 0});
    root("doy_sin", "1", {RootDriver::Kind::DoySin, 0, 0, 0});
    root("doy_cos", "1", {RootDriver::Kind::DoyCos, 0, 0, 0});
    root("working_day", "1", {RootDriver::Kind::WorkingDay, 0, 0, 0});
    root("gas_price", "eur_per_mwh", {RootDriver::Kind::Ar1, 20.0, 3.0, 0.98}, 90.0);
    root("carbon_price", "eur_per_t", {RootDriver::Kind::Ar1, 25.0, 1.5, 0.98}, 30.0);

    node("temperature", "degc", 12.0, {{"doy_cos", -7.0}, {"doy_sin", -2.0}}, 2.0);
    node("river_temperature", "degc", 8.0,
         {{"temperature", 0.6}, {"doy_cos", -2.0}, {"doy_sin", 0.5}}, 1.0);
    node("river_flow", "m3_per_s", 900.0,
         {{"temperature", -25.0}, {"doy_sin", 120.0}, {"doy_cos", 80.0}}, 60.0);
    node("wind", "mw", 6000.0,
         {{"doy_cos", 1200.0}, {"doy_sin", 300.0}, {"hour_sin", 400.0}, {"hour_cos", 300.0}},
         1800.0);
    node("solar", "mw", 3000.0,
         {{"doy_cos", -1500.0}, {"doy_sin", -300.0}, {"hour_cos", -2500.0}, {"hour_sin", 500.0}},
         700.0);
    node("ror", "mw", 4000.0,
         {{"river_flow", 2.0}, {"temperature", -30.0}, {"doy_sin", 100.0}, {"doy_cos", 80.0}},
         200.0);
    node("load", "mw", 52000.0,
         {{"temperature", -900.0}, {"working_day", 3000.0}, {"hour_cos", -2500.0},
          {"hour_sin", 1500.0}, {"doy_sin", -1000.0}, {"doy_cos", -2000.0}},
         1500.0);
    node("nuclear_availability", "mw", 40000.0,
         {{"load", 0.05}, {"river_flow", 1.5}, {"river_temperature", -300.0},
          {"working_day", 500.0}, {"doy_sin", -1500.0}, {"doy_cos", -1000.0}},
         800.0, -12000.0);
    node("rl_de", "mw", 38000.0,
         {{"temperature", -600.0}, {"working_day", 2500.0}, {"hour_cos", -1800.0},
          {"hour_sin", 900.0}, {"doy_cos", -1500.0}, {"doy_sin", -700.0}},
         1200.0);
    node("rl_be", "mw", 8000.0,
         {{"temperature", -150.0}, {"working_day", 600.0}, {"hour_cos", -450.0},
          {"hour_sin", 250.0}, {"doy_cos", -350.0}, {"doy_sin", -180.0}},
         400.0);
    node("residual_load", "mw", 0.0, {{"load", 1.0}, {"wind", -1.0}, {"solar", -1.0}}, 0.0);
    node("rl_ramp", "mw", 0.0,
         {{"residual_load", 0.02}, {"hour_cos", -800.0}, {"hour_sin", 600.0},
          {"working_day", 100.0}},
         300.0);
    node("price", "eur_per_mwh", -20.0,
         {{"gas_price", 1.6}, {"carbon_price", 0.8}, {"nuclear_availability", -0.00075},
          {"residual_load", 0.0015}, {"rl_de", 0.0003}, {"rl_be", 0.0008},
          {"rl_ramp", 0.004}, {"ror", -0.0008}},
         6.0);
    node("net_exports", "mw", -3000.0,
         {{"gas_price", -20.0}, {"carbon_price", -10.0}, {"nuclear_availability", 0.25},
          {"residual_load", -0.3}, {"rl_de", 0.05}, {"rl_be", 0.1}, {"rl_ramp", -0.05},
          {"ror", 0.2}},
         800.0);
    return spec;
}

// Market system with the level shifts switched on: gas and carbon prices
// jump and nuclear availability drops once timestamps reach the crisis
// instant.
inline SyntheticSpec fr_market_crisis() {
    SyntheticSpec spec = fr_market();
    spec.crisis = parse_instant("2021-10-01T00:00:00Z");
    return spec;
}

// Three variables where the aggregate regression slope and the
// within-stratum slopes have opposite signs.
inline SyntheticSpec simpson() {
    SyntheticSpec spec;
    spec.n_hours = 4000;
    spec.start = parse_instant("2021-01-01T00:00:00Z");
    SynthNode load;
    load.name = "load";
    load.unit = "gw";
    load.driver = RootDriver{RootDriver::Kind::Uniform, 50.0, 20.0, 0.0};
    SynthNode avail;
    avail.name = "availability";
    avail.unit = "gw";
    avail.terms = {{"load", 0.9}};
    avail.noise_std = 3.0;
    SynthNode price;
    price.name = "price";
    price.unit = "eur_per_mwh";
    price.terms = {{"load", 1.5}, {"availability", -1.0}};
    price.noise_std = 1.0;
    spec.nodes = {load, avail, price};
    return spec;
}

// Minimal system with level shifts after the crisis instant, for the
// before/during impact decomposition.
inline SyntheticSpec crisis() {
    SyntheticSpec spec;
    spec.n_hours = 2160;
    spec.start = parse_instant("2021-08-15T00:00:00Z");
    spec.crisis = parse_instant("2021-10-01T00:00:00Z");
    SynthNode gas;
    gas.name = "gas_price";
    gas.unit = "eur_per_mwh";
    gas.driver = RootDriver{RootDriver::Kind::Ar1, 20.0, 0.5, 0.99};
    gas.crisis_shift = 90.0;
    SynthNode nuc;
    nuc.name = "nuclear_availability";
    nuc.unit = "mw";
    nuc.driver = RootDriver{RootDriver::Kind::Ar1, 48000.0, 300.0, 0.99};
    nuc.crisis_shift = -12000.0;
    SynthNode price;
    price.name = "price";
    price.unit = "eur_per_mwh";
    price.intercept = 10.0;
    price.terms = {{"gas_price", 1.6}, {"nuclear_availability", -0.00075}};
    price.noise_std = 2.0;
    spec.nodes = {gas, nuc, price};
    return spec;
}

// Confounded pair: the plain regression slope of price on river_flow is
// three times the structural coefficient in expectation.
inline SyntheticSpec confounded() {
    SyntheticSpec spec;
    spec.n_hours = 20000;
    spec.start = parse_instant("2021-01-01T00:00:00Z");
    SynthNode season;
    season.name = "season";
    season.unit = "1";
    season.driver = RootDriver{RootDriver::Kind::Iid, 0.0, 1.0, 0.0};
    SynthNode flow;
    flow.name = "river_flow";
    flow.unit = "m3_per_s";
    flow.terms = {{"season", 1.0}};
    flow.noise_std = 1.0;
    SynthNode price;
    price.name = "price";
    price.unit = "eur_per_mwh";
    price.terms = {{"river_flow", -0.06}, {"season", -0.24}};
    price.noise_std = 0.05;
    spec.nodes = {season, flow, price};
    return spec;
}

// Saturating temperature response for tree models: demand rises sharply
// below the knee and is flat in temperature above it.
inline SyntheticSpec nonlinear() {
    SyntheticSpec spec;
    spec.n_hours = 4320;
    spec.start = parse_instant("2021-01-01T00:00:00Z");
    SynthNode temp;
    temp.name = "temperature";
    temp.unit = "degc";
    temp.driver = RootDriver{RootDriver::Kind::Ar1, 12.0, 1.0, 0.98};
    SynthNode hs;
    hs.name = "hour_sin";
    hs.unit = "1";
    hs.driver = RootDriver{RootDriver::Kind::HourSin, 0, 0, 0};
    SynthNode hc;
    hc.name = "hour_cos";
    hc.unit = "1";
    hc.driver = RootDriver{RootDriver::Kind::HourCos, 0, 0, 0};
    SynthNode load;
    load.name = "load";
    load.unit = "mw";
    load.intercept = 28000.0;
    load.terms = {{"hour_cos", -2500.0}, {"hour_sin", 1200.0}};
    load.sat_parent = "temperature";
    load.sat_coeff = 400.0;
    load.sat_knee = 10.0;
    load.noise_std = 500.0;
    spec.nodes = {temp, hs, hc, load};
    return spec;
}

inline SyntheticSpec by_name(const std::string& name) {
    if (name == "fr_market") return fr_market();
    if (name == "fr_market_crisis") return fr_market_crisis();
    if (name == "simpson") return simpson();
    if (name == "crisis") return crisis();
    if (name == "confounded") return confounded();
    if (name == "nonlinear") return nonlinear();
    throw InvalidArgument("unknown preset '" + name +
                          "'; expected fr_market, fr_market_crisis, simpson, crisis, confounded, "
                          "or nonlinear");
}

}  // namespace presets

// Maps the generated market system to the raw CSV column set: the physical
// inputs plus exports/imports and installed/unavailable nuclear capacity,
// from which the pipeline re-derives the modeling features.
inline FeatureFrame fr_market_raw_view(const FeatureFrame& generated,
                                       double installed_mw = 61400.0) {
    FeatureFrame raw;
    raw.timestamps = generated.timestamps;
    for (const char* name : {"load", "wind", "solar", "gas_price", "carbon_price", "temperature",
                             "river_temperature", "river_flow"})
        raw.add_column(name, generated.column(name).unit, std::vector<double>(generated.values(name).begin(), generated.values(name).end()));
    std::size_t n = generated.n_rows();
    std::vector<double> installed(n, installed_mw), unavailable(n);
    auto avail = generated.values("nuclear_availability");
    for (std::size_t t = 0; t < n; ++t) {
        if (avail[t] > installed_mw)
            throw InvalidArgument("fr_market_raw_view: availability above installed capacity");
        unavailable[t] = installed_mw - avail[t];
    }
    raw.add_column("nuclear_installed", "mw", std::move(installed));
    raw.add_column("nuclear_unavailable", "mw", std::move(unavailable));
    for (const char* name : {"ror", "rl_de", "rl_be"})
        raw.add_column(name, generated.column(name).unit, std::vector<double>(generated.values(name).begin(), generated.values(name).end()));
    auto net = generated.values("net_exports");
    std::vector<double> exports(n), imports(n);
    for (std::size_t t = 0; t < n; ++t) {
        exports[t] = std::max(net[t], 0.0);
        imports[t] = std::max(-net[t], 0.0);
    }
    raw.add_column("exports", "mw", std::move(exports));
    raw.add_column("imports", "mw", std::move(imports));
    raw.add_column("price", generated.column("price").unit,
                   std::vector<double>(generated.values("price").begin(), generated.values("price").end()));
    return raw;
}

}  // namespace causalgrid
