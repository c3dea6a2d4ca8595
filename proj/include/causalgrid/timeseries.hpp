#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "causalgrid/common.hpp"
#include "causalgrid/linalg.hpp"
#include "causalgrid/timeutil.hpp"

namespace causalgrid {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

// One named, unit-tagged hourly series. Missing values are NaN.
struct TimeSeries {
    std::string name;
    std::string unit;
    std::vector<Instant> timestamps;
    std::vector<double> values;
};

// A column inside a frame; the timestamp axis lives on the frame.
struct Column {
    std::string name;
    std::string unit;
    std::vector<double> values;
};

struct ColumnSpec {
    std::string name;
    std::string unit;
};

// Aligned hourly matrix of named series: every column shares the frame's
// timestamp axis.
class FeatureFrame {
  public:
    std::vector<Instant> timestamps;
    std::vector<Column> columns;

    std::size_t n_rows() const { return timestamps.size(); }
    std::size_t n_cols() const { return columns.size(); }

    bool has_column(std::string_view name) const {
        for (const auto& c : columns)
            if (c.name == name) return true;
        return false;
    }

    const Column& column(std::string_view name) const {
        for (const auto& c : columns)
            if (c.name == name) return c;
        throw SchemaError("missing column: " + std::string(name));
    }

    Column& column(std::string_view name) {
        for (auto& c : columns)
            if (c.name == name) return c;
        throw SchemaError("missing column: " + std::string(name));
    }

    std::span<const double> values(std::string_view name) const { return column(name).values; }

    void add_column(Column c) {
        if (c.values.size() != n_rows())
            throw SchemaError("column " + c.name + " length does not match frame");
        if (has_column(c.name)) throw SchemaError("duplicate column: " + c.name);
        columns.push_back(std::move(c));
    }

    void add_column(std::string name, std::string unit, std::vector<double> values_in) {
        add_column(Column{std::move(name), std::move(unit), std::move(values_in)});
    }

    FeatureFrame select(const std::vector<std::string>& names) const {
        FeatureFrame out;
        out.timestamps = timestamps;
        for (const auto& n : names) out.columns.push_back(column(n));
        return out;
    }

    // True when timestamps are strictly increasing with exact 1 h spacing.
    bool hourly_regular() const {
        for (std::size_t i = 1; i < timestamps.size(); ++i)
            if (timestamps[i] - timestamps[i - 1] != kHour) return false;
        return true;
    }

    bool has_missing() const {
        for (const auto& c : columns)
            for (double v : c.values)
                if (is_missing(v)) return true;
        return false;
    }
};

// Per-column mean and standard deviation, keyed by column name.
struct NormalizationStats {
    std::vector<std::string> names;
    std::vector<double> means;
    std::vector<double> stds;

    std::size_t index_of(std::string_view name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return i;
        throw SchemaError("no normalization stats for column: " + std::string(name));
    }
    double mean_of(std::string_view n) const { return means[index_of(n)]; }
    double std_of(std::string_view n) const { return stds[index_of(n)]; }
};

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}
}  // namespace detail

// CSV ingestion. Column 1 must be named "timestamp" and hold ISO-8601 UTC
// instants; empty cells are missing. When `schema` is non-empty only the
// declared columns are loaded (each must exist) and units are attached.
inline FeatureFrame load_csv(const std::string& path, const std::vector<ColumnSpec>& schema = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open CSV file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": missing header row");
    auto header = detail::split_csv_line(line);
    if (header.empty() || header[0] != "timestamp")
        throw SchemaError(path + ": first column must be 'timestamp'");

    FeatureFrame frame;
    std::vector<int> pick;  // CSV field index per frame column
    if (schema.empty()) {
        for (std::size_t i = 1; i < header.size(); ++i) {
            frame.columns.push_back({header[i], "", {}});
            pick.push_back(static_cast<int>(i));
        }
    } else {
        for (const auto& spec : schema) {
            auto it = std::find(header.begin(), header.end(), spec.name);
            if (it == header.end())
                throw SchemaError(path + ": missing declared column '" + spec.name + "'");
            frame.columns.push_back({spec.name, spec.unit, {}});
            pick.push_back(static_cast<int>(it - header.begin()));
        }
    }

    std::size_t rowno = 1;
    while (std::getline(in, line)) {
        ++rowno;
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size())
            throw FormatError(path + ": row " + std::to_string(rowno) + " has " +
                              std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(header.size()));
        Instant t;
        try {
            t = parse_instant(fields[0]);
        } catch (const FormatError&) {
            throw FormatError(path + ": row " + std::to_string(rowno) + ": unparseable timestamp '" +
                              fields[0] + "'");
        }
        if (!frame.timestamps.empty() && t <= frame.timestamps.back())
            throw FormatError(path + ": row " + std::to_string(rowno) +
                              ": timestamps not strictly increasing");
        frame.timestamps.push_back(t);
        for (std::size_t j = 0; j < pick.size(); ++j) {
            const std::string& cell = fields[static_cast<std::size_t>(pick[j])];
            if (cell.empty()) {
                frame.columns[j].values.push_back(kMissing);
                continue;
            }
            char* end = nullptr;
            double v = std::strtod(cell.c_str(), &end);
            if (end != cell.c_str() + cell.size())
                throw FormatError(path + ": row " + std::to_string(rowno) + ": bad number '" +
                                  cell + "' in column " + frame.columns[j].name);
            frame.columns[j].values.push_back(v);
        }
    }
    return frame;
}

inline void save_csv(const FeatureFrame& frame, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write CSV file: " + path);
    out << "timestamp";
    for (const auto& c : frame.columns) out << "," << c.name;
    out << "\n";
    char buf[40];
    for (std::size_t i = 0; i < frame.n_rows(); ++i) {
        out << format_instant(frame.timestamps[i]);
        for (const auto& c : frame.columns) {
            out << ",";
            if (!is_missing(c.values[i])) {
                std::snprintf(buf, sizeof(buf), "%.17g", c.values[i]);
                out << buf;
            }
        }
        out << "\n";
    }
}

// Holiday calendar: one YYYY-MM-DD per line, '#' comments. Returned as the
// set of UTC day indices.
inline std::set<std::int64_t> load_holidays(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open holiday calendar: " + path);
    std::set<std::int64_t> days;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        std::istringstream ls(line);
        std::string tok;
        if (!(ls >> tok)) continue;
        try {
            days.insert(day_index(parse_date(tok)));
        } catch (const FormatError&) {
            throw FormatError(path + ": line " + std::to_string(lineno) + ": bad date '" + tok +
                              "'");
        }
    }
    return days;
}

// Repeats each daily value for the 24 hours of its day. Gap days stay
// missing; duplicate days are an error.
inline TimeSeries pad_daily_to_hourly(const TimeSeries& daily) {
    if (daily.timestamps.empty()) throw InvalidArgument("pad_daily_to_hourly: empty series");
    TimeSeries out;
    out.name = daily.name;
    out.unit = daily.unit;
    std::int64_t first = day_index(daily.timestamps.front());
    std::int64_t last = day_index(daily.timestamps.back());
    std::size_t n_days = static_cast<std::size_t>(last - first + 1);
    std::vector<double> per_day(n_days, kMissing);
    for (std::size_t i = 0; i < daily.timestamps.size(); ++i) {
        std::int64_t d = day_index(daily.timestamps[i]);
        std::size_t k = static_cast<std::size_t>(d - first);
        if (!is_missing(per_day[k]))
            throw InvalidArgument("pad_daily_to_hourly: duplicate day " +
                                  format_instant(d * kDay).substr(0, 10));
        per_day[k] = daily.values[i];
    }
    out.timestamps.reserve(n_days * 24);
    out.values.reserve(n_days * 24);
    for (std::size_t k = 0; k < n_days; ++k) {
        for (int h = 0; h < 24; ++h) {
            out.timestamps.push_back((first + static_cast<std::int64_t>(k)) * kDay + h * kHour);
            out.values.push_back(per_day[k]);
        }
    }
    return out;
}

// Linear interpolation in time over interior gaps; endpoints extend by the
// nearest non-missing value.
inline TimeSeries interpolate_missing(const TimeSeries& series) {
    TimeSeries out = series;
    std::vector<std::size_t> known;
    for (std::size_t i = 0; i < out.values.size(); ++i)
        if (!is_missing(out.values[i])) known.push_back(i);
    if (known.empty()) throw DegenerateError("interpolate_missing: all values missing in series " +
                                             series.name);
    for (std::size_t i = 0; i < known.front(); ++i) out.values[i] = out.values[known.front()];
    for (std::size_t i = known.back() + 1; i < out.values.size(); ++i)
        out.values[i] = out.values[known.back()];
    for (std::size_t k = 0; k + 1 < known.size(); ++k) {
        std::size_t a = known[k], b = known[k + 1];
        if (b == a + 1) continue;
        double va = out.values[a], vb = out.values[b];
        double ta = static_cast<double>(out.timestamps[a]);
        double tb = static_cast<double>(out.timestamps[b]);
        for (std::size_t i = a + 1; i < b; ++i) {
            double w = (static_cast<double>(out.timestamps[i]) - ta) / (tb - ta);
            out.values[i] = va + w * (vb - va);
        }
    }
    return out;
}

// Frame-level cleaning: interpolate every column and require an
// hourly-regular axis afterwards.
inline FeatureFrame clean(const FeatureFrame& frame) {
    if (!frame.hourly_regular())
        throw InvalidArgument("clean: frame axis is not hourly-regular");
    FeatureFrame out = frame;
    for (auto& c : out.columns) {
        TimeSeries s{c.name, c.unit, out.timestamps, c.values};
        c.values = interpolate_missing(s).values;
    }
    return out;
}

// Appends hour-of-day and day-of-year sin/cos plus a binary working-day
// column (weekday and not in the holiday calendar).
inline FeatureFrame cyclical_encode(const FeatureFrame& frame,
                                    const std::set<std::int64_t>& holidays = {}) {
    FeatureFrame out = frame;
    std::size_t n = out.n_rows();
    Column hs{"hour_sin", "1", std::vector<double>(n)};
    Column hc{"hour_cos", "1", std::vector<double>(n)};
    Column ds{"doy_sin", "1", std::vector<double>(n)};
    Column dc{"doy_cos", "1", std::vector<double>(n)};
    Column wd{"working_day", "1", std::vector<double>(n)};
    constexpr double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t i = 0; i < n; ++i) {
        Instant t = out.timestamps[i];
        double hp = two_pi * hour_of_day(t) / 24.0;
        // 365.25-day period avoids a phase jump across leap years.
        double dp = two_pi * day_of_year(t) / 365.25;
        hs.values[i] = std::sin(hp);
        hc.values[i] = std::cos(hp);
        ds.values[i] = std::sin(dp);
        dc.values[i] = std::cos(dp);
        bool working = weekday(t) < 5 && holidays.find(day_index(t)) == holidays.end();
        wd.values[i] = working ? 1.0 : 0.0;
    }
    out.add_column(std::move(hs));
    out.add_column(std::move(hc));
    out.add_column(std::move(ds));
    out.add_column(std::move(dc));
    out.add_column(std::move(wd));
    return out;
}

// Derived system features:
//   residual_load        = load - wind - solar
//   nuclear_availability = nuclear_installed - nuclear_unavailable
//   net_exports          = sum of exports* columns - sum of imports* columns
//   rl_ramp              = residual_load(t) - residual_load(t-1), first hour 0
inline FeatureFrame derive_features(const FeatureFrame& frame) {
    FeatureFrame out = frame;
    std::size_t n = out.n_rows();
    for (const char* req : {"load", "wind", "solar", "nuclear_installed", "nuclear_unavailable"})
        if (!out.has_column(req)) throw SchemaError(std::string("derive_features: missing source column: ") + req);

    auto load = out.values("load");
    auto wind = out.values("wind");
    auto solar = out.values("solar");
    Column rl{"residual_load", out.column("load").unit, std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) rl.values[i] = load[i] - wind[i] - solar[i];

    auto inst = out.values("nuclear_installed");
    auto unav = out.values("nuclear_unavailable");
    Column na{"nuclear_availability", out.column("nuclear_installed").unit, std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) na.values[i] = inst[i] - unav[i];

    std::vector<const Column*> ex, im;
    for (const auto& c : out.columns) {
        if (c.name.rfind("exports", 0) == 0) ex.push_back(&c);
        if (c.name.rfind("imports", 0) == 0) im.push_back(&c);
    }
    if (ex.empty()) throw SchemaError("derive_features: missing source column: exports*");
    if (im.empty()) throw SchemaError("derive_features: missing source column: imports*");
    Column ne{"net_exports", ex.front()->unit, std::vector<double>(n, 0.0)};
    for (const Column* c : ex)
        for (std::size_t i = 0; i < n; ++i) ne.values[i] += c->values[i];
    for (const Column* c : im)
        for (std::size_t i = 0; i < n; ++i) ne.values[i] -= c->values[i];

    Column ramp{"rl_ramp", rl.unit, std::vector<double>(n, 0.0)};
    for (std::size_t i = 1; i < n; ++i) ramp.values[i] = rl.values[i] - rl.values[i - 1];

    out.add_column(std::move(rl));
    out.add_column(std::move(na));
    out.add_column(std::move(ne));
    out.add_column(std::move(ramp));
    return out;
}

// Centers and scales every column to mean 0, std 1. Constant columns are
// rejected rather than silently assigned std 1.
inline std::pair<FeatureFrame, NormalizationStats> normalize(const FeatureFrame& frame) {
    FeatureFrame out = frame;
    NormalizationStats stats;
    for (auto& c : out.columns) {
        double m = mean(c.values);
        double s = stddev_pop(c.values);
        if (!(s > 0.0)) throw DegenerateError("normalize: degenerate (constant) column: " + c.name);
        for (double& v : c.values) v = (v - m) / s;
        stats.names.push_back(c.name);
        stats.means.push_back(m);
        stats.stds.push_back(s);
    }
    return {std::move(out), std::move(stats)};
}

inline FeatureFrame denormalize(const FeatureFrame& frame, const NormalizationStats& stats) {
    FeatureFrame out = frame;
    for (auto& c : out.columns) {
        std::size_t k = stats.index_of(c.name);
        for (double& v : c.values) v = v * stats.stds[k] + stats.means[k];
    }
    return out;
}

// Converts a coefficient fitted in normalized space back to raw units:
// c_ij = c_ij,norm * sigma_i / sigma_j for target i and source j.
inline double denormalize_coeff(double c_norm, const NormalizationStats& stats,
                                std::string_view target, std::string_view source) {
    return c_norm * stats.std_of(target) / stats.std_of(source);
}

}  // namespace causalgrid
