#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>

#include "causalgrid/timeseries.hpp"

using namespace causalgrid;

namespace {

std::string write_temp(const std::string& text) {
    static int counter = 0;
    std::string path = "ts_tmp_" + std::to_string(counter++) + ".csv";
    std::ofstream out(path);
    out << text;
    return path;
}

FeatureFrame small_frame(std::size_t n = 48, Instant start = parse_instant("2021-03-01T00:00:00Z")) {
    FeatureFrame f;
    std::vector<double> a, b;
    for (std::size_t i = 0; i < n; ++i) {
        f.timestamps.push_back(start + static_cast<Instant>(i) * kHour);
        a.push_back(static_cast<double>(i));
        b.push_back(100.0 - 2.0 * static_cast<double>(i));
    }
    f.add_column("a", "MW", a);
    f.add_column("b", "EUR", b);
    return f;
}

}  // namespace

TEST_CASE("instant parsing and formatting round-trips") {
    const char* samples[] = {"2020-01-01T00:00:00Z", "2021-10-01T13:00:00Z",
                             "2019-12-31T23:00:00Z", "2024-02-29T06:00:00Z"};
    for (const char* s : samples) CHECK(format_instant(parse_instant(s)) == s);
    CHECK(parse_instant("1970-01-01T00:00:00Z") == 0);
    CHECK(parse_instant("1970-01-02T00:00:00Z") == kDay);
    CHECK(hour_of_day(parse_instant("2021-06-15T17:00:00Z")) == 17);
    CHECK(day_of_year(parse_instant("2021-01-01T05:00:00Z")) == 0);
    CHECK(day_of_year(parse_instant("2021-12-31T05:00:00Z")) == 364);
    CHECK(weekday(parse_instant("2021-10-04T00:00:00Z")) == 0);  // a Monday
    CHECK(weekday(parse_instant("2021-10-03T00:00:00Z")) == 6);  // a Sunday
    CHECK_THROWS_AS(parse_instant("2021-13-01T00:00:00Z"), FormatError);
    CHECK_THROWS_AS(parse_instant("garbage"), FormatError);
}

TEST_CASE("csv save/load round-trips values and units") {
    FeatureFrame f = small_frame(24);
    std::string path = write_temp("");
    save_csv(f, path);
    FeatureFrame g = load_csv(path);
    REQUIRE(g.n_rows() == 24);
    REQUIRE(g.n_cols() == 2);
    CHECK(g.timestamps == f.timestamps);
    for (std::size_t i = 0; i < 24; ++i) {
        CHECK(g.values("a")[i] == doctest::Approx(f.values("a")[i]).epsilon(1e-15));
        CHECK(g.values("b")[i] == doctest::Approx(f.values("b")[i]).epsilon(1e-15));
    }
    std::remove(path.c_str());
}

TEST_CASE("csv load enforces schema when given") {
    std::string path = write_temp(
        "timestamp,load\n"
        "2021-01-01T00:00:00Z,5\n"
        "2021-01-01T01:00:00Z,6\n");
    CHECK_THROWS_AS(load_csv(path, {{"load", ""}, {"wind", ""}}), SchemaError);
    FeatureFrame f = load_csv(path, {{"load", ""}});
    CHECK(f.values("load")[1] == 6.0);
    std::remove(path.c_str());
}

TEST_CASE("csv load rejects malformed rows and missing files") {
    CHECK_THROWS_AS(load_csv("does_not_exist_123.csv"), IoError);
    std::string bad = write_temp("timestamp,a\n2021-01-01T00:00:00Z\n");
    CHECK_THROWS_AS(load_csv(bad), FormatError);
    std::remove(bad.c_str());
    std::string badnum = write_temp("timestamp,a\n2021-01-01T00:00:00Z,xyz\n");
    CHECK_THROWS_AS(load_csv(badnum), FormatError);
    std::remove(badnum.c_str());
}

TEST_CASE("empty csv cells load as missing and clean() interpolates them") {
    std::string path = write_temp(
        "timestamp,a\n"
        "2021-01-01T00:00:00Z,1\n"
        "2021-01-01T01:00:00Z,\n"
        "2021-01-01T02:00:00Z,\n"
        "2021-01-01T03:00:00Z,4\n");
    FeatureFrame f = load_csv(path);
    CHECK(f.has_missing());
    FeatureFrame g = clean(f);
    CHECK_FALSE(g.has_missing());
    CHECK(g.values("a")[1] == doctest::Approx(2.0));
    CHECK(g.values("a")[2] == doctest::Approx(3.0));
    std::remove(path.c_str());
}

TEST_CASE("interpolation clamps at the boundaries") {
    TimeSeries s;
    s.name = "x";
    for (int i = 0; i < 6; ++i) {
        s.timestamps.push_back(i * kHour);
        s.values.push_back(kMissing);
    }
    s.values[2] = 10.0;
    s.values[4] = 20.0;
    TimeSeries out = interpolate_missing(s);
    CHECK(out.values[0] == 10.0);  // leading gap takes first known value
    CHECK(out.values[1] == 10.0);
    CHECK(out.values[3] == doctest::Approx(15.0));
    CHECK(out.values[5] == 20.0);  // trailing gap takes last known value
    TimeSeries all_missing;
    all_missing.name = "y";
    all_missing.timestamps = {0};
    all_missing.values = {kMissing};
    CHECK_THROWS_AS(interpolate_missing(all_missing), DegenerateError);
}

TEST_CASE("daily series pads to 24 identical hourly values") {
    TimeSeries d;
    d.name = "capacity";
    d.timestamps = {parse_instant("2021-05-01T00:00:00Z"), parse_instant("2021-05-02T00:00:00Z")};
    d.values = {7.0, 9.0};
    TimeSeries h = pad_daily_to_hourly(d);
    REQUIRE(h.values.size() == 48);
    for (int i = 0; i < 24; ++i) {
        CHECK(h.values[static_cast<std::size_t>(i)] == 7.0);
        CHECK(h.values[static_cast<std::size_t>(24 + i)] == 9.0);
        CHECK(h.timestamps[static_cast<std::size_t>(i)] == d.timestamps[0] + i * kHour);
    }
}

TEST_CASE("cyclical encoding matches the defining trigonometry") {
    FeatureFrame f = small_frame(30, parse_instant("2021-07-05T00:00:00Z"));  // a Monday
    std::set<std::int64_t> holidays = {day_index(parse_instant("2021-07-06T00:00:00Z"))};
    FeatureFrame g = cyclical_encode(f, holidays);
    for (const char* name : {"hour_sin", "hour_cos", "doy_sin", "doy_cos", "working_day"})
        CHECK(g.has_column(name));
    for (std::size_t i = 0; i < g.n_rows(); ++i) {
        int h = hour_of_day(g.timestamps[i]);
        CHECK(g.values("hour_sin")[i] ==
              doctest::Approx(std::sin(2.0 * M_PI * h / 24.0)).epsilon(1e-12));
        CHECK(g.values("hour_cos")[i] ==
              doctest::Approx(std::cos(2.0 * M_PI * h / 24.0)).epsilon(1e-12));
    }
    CHECK(g.values("working_day")[0] == 1.0);   // Monday
    CHECK(g.values("working_day")[25] == 0.0);  // Tuesday but a holiday
}

TEST_CASE("working day is zero on weekends") {
    FeatureFrame f = small_frame(24, parse_instant("2021-07-04T00:00:00Z"));  // a Sunday
    FeatureFrame g = cyclical_encode(f);
    for (std::size_t i = 0; i < g.n_rows(); ++i) CHECK(g.values("working_day")[i] == 0.0);
}

TEST_CASE("derived system features satisfy their defining identities") {
    std::size_t n = 30;
    FeatureFrame f;
    std::vector<double> load, wind, solar, inst, unav, exp_, imp;
    for (std::size_t i = 0; i < n; ++i) {
        f.timestamps.push_back(static_cast<Instant>(i) * kHour);
        load.push_back(50000.0 + 10.0 * i);
        wind.push_back(4000.0 + 5.0 * i);
        solar.push_back(1000.0 + 2.0 * i);
        inst.push_back(61400.0);
        unav.push_back(20000.0 + i);
        exp_.push_back(i % 2 == 0 ? 300.0 + i : 0.0);
        imp.push_back(i % 2 == 0 ? 0.0 : 200.0 + i);
    }
    f.add_column("load", "MW", load);
    f.add_column("wind", "MW", wind);
    f.add_column("solar", "MW", solar);
    f.add_column("nuclear_installed", "MW", inst);
    f.add_column("nuclear_unavailable", "MW", unav);
    f.add_column("exports_ch", "MW", exp_);
    f.add_column("imports_ch", "MW", imp);
    FeatureFrame g = derive_features(f);
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(g.values("residual_load")[i] == doctest::Approx(load[i] - wind[i] - solar[i]));
        CHECK(g.values("nuclear_availability")[i] == doctest::Approx(inst[i] - unav[i]));
        CHECK(g.values("net_exports")[i] == doctest::Approx(exp_[i] - imp[i]));
        double ramp = i == 0 ? 0.0
                             : (load[i] - wind[i] - solar[i]) -
                                   (load[i - 1] - wind[i - 1] - solar[i - 1]);
        CHECK(g.values("rl_ramp")[i] == doctest::Approx(ramp));
    }
    FeatureFrame missing = f.select({"load", "wind"});
    CHECK_THROWS_AS(derive_features(missing), SchemaError);
}

TEST_CASE("normalization produces zero mean unit variance and inverts") {
    FeatureFrame f = small_frame(100);
    auto [norm, stats] = normalize(f);
    for (const auto& c : norm.columns) {
        double m = mean(c.values);
        double s = stddev_pop(c.values);
        CHECK(std::fabs(m) < 1e-12);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    FeatureFrame back = denormalize(norm, stats);
    for (std::size_t i = 0; i < f.n_rows(); ++i)
        CHECK(back.values("a")[i] == doctest::Approx(f.values("a")[i]).epsilon(1e-12));
    // slope conversion: coeff in normalized space times sigma ratio
    double c_norm = 0.5;
    double expect = c_norm * stats.std_of("b") / stats.std_of("a");
    CHECK(denormalize_coeff(c_norm, stats, "b", "a") == doctest::Approx(expect));
}

TEST_CASE("normalize rejects constant columns") {
    FeatureFrame f;
    f.timestamps = {0, kHour};
    f.add_column("c", "", std::vector<double>{5.0, 5.0});
    CHECK_THROWS_AS(normalize(f), DegenerateError);
}

TEST_CASE("holiday calendar loads date lines and ignores comments") {
    std::string path = write_temp(
        "# calendar\n"
        "2021-07-14\n"
        "\n"
        "2021-12-25\n");
    auto h = load_holidays(path);
    CHECK(h.size() == 2);
    CHECK(h.count(day_index(parse_instant("2021-07-14T00:00:00Z"))) == 1);
    CHECK(h.count(day_index(parse_instant("2021-12-25T00:00:00Z"))) == 1);
    std::remove(path.c_str());
}

TEST_CASE("frame utility checks") {
    FeatureFrame f = small_frame(5);
    CHECK(f.hourly_regular());
    f.timestamps[4] += kHour;  // introduce a gap
    CHECK_FALSE(f.hourly_regular());
    CHECK_THROWS_AS(f.values("nope"), SchemaError);
    CHECK_THROWS_AS(f.add_column("a", "", std::vector<double>(5, 0.0)), SchemaError);
    CHECK_THROWS_AS(f.add_column("c", "", std::vector<double>(3, 0.0)), SchemaError);
}
