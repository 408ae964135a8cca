#include "fixtures.hpp"

#include "flowlab/error.hpp"
#include "flowlab/io.hpp"
#include "flowlab/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace flowlab;

TEST_SUITE("core") {

TEST_CASE("dates parse, print and skip weekends") {
    CHECK(format_date(parse_date("2020-02-29")) == "2020-02-29");
    CHECK_THROWS_AS(parse_date("2021-02-29"), ValidationError);
    CHECK_THROWS_AS(parse_date("2021/01/04"), ValidationError);
    CHECK_THROWS_AS(parse_date("2021-1-4"), ValidationError);
    const auto d = business_days(parse_date("2021-01-01"), 3);  // a Friday
    REQUIRE(d.size() == 3);
    CHECK(format_date(d[0]) == "2021-01-01");
    CHECK(format_date(d[1]) == "2021-01-04");
    CHECK(format_date(d[2]) == "2021-01-05");
    CHECK_FALSE(is_weekday(parse_date("2021-01-02")));
}

TEST_CASE("rng streams are keyed and reproducible") {
    Rng a(42, "fund", 3), b(42, "fund", 3), c(42, "fund", 4), d(43, "fund", 3);
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    CHECK(x != c.next_u64());
    CHECK(x != d.next_u64());

    Rng r(1, "moments");
    const int n = 200000;
    double s = 0, s2 = 0, lo = 1, hi = 0;
    for (int k = 0; k < n; ++k) {
        const double z = r.normal();
        s += z;
        s2 += z * z;
        const double u = r.uniform();
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    CHECK(std::abs(mean) < 4.0 / std::sqrt(n));
    CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / n));
    CHECK(lo > 0.0);
    CHECK(hi < 1.0);
    for (int k = 0; k < 1000; ++k) CHECK(r.below(7) < 7);
}

TEST_CASE("quantile matches numpy's linear rule") {
    // numpy.quantile([1, 2, 3, 4, 10], [0.1, 0.5, 0.95]) -> 1.4, 3.0, 8.8
    CHECK(quantile({10, 2, 1, 4, 3}, 0.1) == doctest::Approx(1.4).epsilon(1e-15));
    CHECK(quantile({10, 2, 1, 4, 3}, 0.5) == 3.0);
    CHECK(quantile({10, 2, 1, 4, 3}, 0.95) == doctest::Approx(8.8).epsilon(1e-15));
    CHECK(is_missing(quantile({}, 0.5)));
}

TEST_CASE("trailing statistics ignore missing values and respect min_obs") {
    const double w[] = {0.01, kMissing, -0.02, 0.03};
    CHECK(trailing_mean(w, 3) == doctest::Approx(0.02 / 3));
    // sample sd of {0.01, -0.02, 0.03}
    const double m = 0.02 / 3;
    const double sd = std::sqrt(((0.01 - m) * (0.01 - m) + (-0.02 - m) * (-0.02 - m) + (0.03 - m) * (0.03 - m)) / 2);
    CHECK(trailing_std(w, 3) == doctest::Approx(sd).epsilon(1e-14));
    CHECK(is_missing(trailing_std(w, 4)));
}

TEST_CASE("panel derives weights, returns and flows") {
    const MarketPanel p = fx::toy_panel();
    REQUIRE(p.n_days() == 4);
    REQUIRE(p.n_funds() == 2);
    const Index f1 = *p.find_fund("F1"), a = *p.find_security("AAA"), b = *p.find_security("BBB");

    CHECK(*p.weight(f1, a, 0) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(*p.weight(f1, b, 0) == doctest::Approx(0.4).epsilon(1e-15));

    // Accounting: fund return is the weight-lagged sum of security returns.
    for (Index t = 1; t < 4; ++t) {
        const double expect = *p.weight(f1, a, t - 1) * p.security(a, t).ret + *p.weight(f1, b, t - 1) * p.security(b, t).ret;
        CHECK(p.fund(f1, t).fund_return == doctest::Approx(expect).epsilon(1e-12));
    }

    // F_t = (S_t - S_{t-1}) P_{t-1}, f = F / A_{t-1}
    const auto& d0 = p.fund(f1, 0);
    const auto& d1 = p.fund(f1, 1);
    CHECK(is_missing(d0.flow_dollar));
    CHECK(d1.flow_dollar == doctest::Approx(100.0 * d0.nav_price));
    CHECK(d1.flow_rel == doctest::Approx(0.1));
    CHECK(d1.aum == doctest::Approx(d1.nav_price * 1100));

    // Sum over securities of w_{t-1} F_t is F_t.
    for (Index t = 1; t < 4; ++t) {
        double q = 0;
        for (Index s = 0; s < p.n_securities(); ++s)
            if (auto x = flow_driven_trade(f1, s, t, p)) q += *x;
        CHECK(std::abs(q - p.fund(f1, t).flow_dollar) <= 1e-12 * std::abs(p.fund(f1, t).flow_dollar));
    }
    CHECK_FALSE(flow_driven_trade(f1, a, 0, p).has_value());
}

TEST_CASE("panel validation names the offending row") {
    const auto day = parse_date("2021-01-04");
    {
        PanelBuilder b;
        b.add(SecurityRow{day, "AAA", 0.0, 10, 1e6, 1e7, 1e6});
        b.add(FundRow{day, "F1", 1.0, 100, true});
        b.add(HoldingRow{day, "F1", "ZZZ", 100});
        CHECK_THROWS_WITH_AS(std::move(b).build(), doctest::Contains("ZZZ"), ValidationError);
    }
    {
        PanelBuilder b;
        b.add(SecurityRow{day, "AAA", -1.5, 10, 1e6, 1e7, 1e6});
        CHECK_THROWS_AS(std::move(b).build(), ValidationError);
    }
    {
        PanelBuilder b;
        b.add(SecurityRow{day, "AAA", 0.0, 10, 1e6, 1e7, 1e6});
        b.add(SecurityRow{day, "AAA", 0.0, 10, 1e6, 1e7, 1e6});
        CHECK_THROWS_WITH_AS(std::move(b).build(), doctest::Contains("duplicate"), ValidationError);
    }
}

TEST_CASE("holdings are carried forward for a bounded number of days") {
    const auto days = business_days(parse_date("2021-01-04"), 9);
    PanelBuilder b;
    for (int t = 0; t < 9; ++t) {
        b.add(SecurityRow{days[t], "AAA", 0.0, 10, 1e6, 1e7, 1e6});
        b.add(FundRow{days[t], "F1", 1.0, 100, true});
    }
    b.add(HoldingRow{days[0], "F1", "AAA", 100});
    PanelWindows w;
    w.max_forward_fill = 3;
    const MarketPanel p = std::move(b).build(w);
    CHECK_FALSE(p.fund(0, 0).holdings_carried);
    for (Index t = 1; t <= 3; ++t) {
        CHECK(p.fund(0, t).holdings_carried);
        CHECK(p.holdings(0, t).size() == 1);
    }
    CHECK(p.holdings(0, 4).empty());
}

TEST_CASE("winsorization clamps flow_rel and keeps the raw flow") {
    const auto days = business_days(parse_date("2021-01-04"), 2);
    PanelBuilder b;
    for (int t = 0; t < 2; ++t) b.add(SecurityRow{days[t], "AAA", 0.0, 10, 1e6, 1e7, 1e6});
    for (int i = 0; i < 30; ++i) {
        const std::string id = "F" + std::to_string(100 + i);
        b.add(FundRow{days[0], id, 1.0, 100, true});
        b.add(FundRow{days[1], id, 1.0, 100.0 + i, true});  // flows 0 .. 0.29
    }
    const MarketPanel raw = std::move(b).build();
    const MarketPanel w = winsorize_flows(raw, 0.1, 0.9);
    std::vector<double> flows;
    for (Index f = 0; f < raw.n_funds(); ++f) flows.push_back(raw.fund(f, 1).flow_rel);
    const double lo = quantile(flows, 0.1), hi = quantile(flows, 0.9);
    for (Index f = 0; f < w.n_funds(); ++f) {
        const auto& d = w.fund(f, 1);
        CHECK(d.flow_rel_raw == raw.fund(f, 1).flow_rel);
        CHECK(d.flow_rel == std::clamp(d.flow_rel_raw, lo, hi));
    }
    CHECK_THROWS_AS(winsorize_flows(raw, 0.9, 0.1), ValidationError);
}

TEST_CASE("csv round trip preserves the panel") {
    const auto dir = fx::scratch_dir("roundtrip");
    const SimOutput sim = generate(fx::small_config());
    write_sim_output(dir, sim);
    const MarketPanel a = sim.panel();
    const MarketPanel b = read_panel(dir);
    REQUIRE(a.n_days() == b.n_days());
    REQUIRE(a.n_funds() == b.n_funds());
    REQUIRE(a.n_positions() == b.n_positions());
    for (Index f = 0; f < a.n_funds(); ++f)
        for (Index t = 0; t < a.n_days(); ++t) {
            CHECK(a.fund(f, t).nav_price == b.fund(f, t).nav_price);
            if (!is_missing(a.fund(f, t).flow_rel)) CHECK(a.fund(f, t).flow_rel == b.fund(f, t).flow_rel);
        }
    for (Index s = 0; s < a.n_securities(); ++s)
        for (Index t = 1; t < a.n_days(); ++t) CHECK(a.security(s, t).ret == b.security(s, t).ret);

    // Writing the re-read panel reproduces the files byte for byte.
    const auto dir2 = fx::scratch_dir("roundtrip2");
    write_panel(dir2, b);
    for (const char* f : {"securities.csv", "funds.csv"}) CHECK(fx::slurp(dir / f) == fx::slurp(dir2 / f));
}

TEST_CASE("doubles are written with 17 significant digits") {
    CHECK(format_double(0.1) == "0.10000000000000001");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
    CHECK(format_double(kMissing).empty());
}

TEST_CASE("csv reader reports file, line and column") {
    const auto dir = fx::scratch_dir("reader");
    {
        std::ofstream o(dir / "securities.csv");
        o << "date,security_id,ret,close,volume_usd,shares_outstanding\n2021-01-04,AAA,0,1,1,1\n";
    }
    CHECK_THROWS_WITH_AS(read_panel(dir), doctest::Contains("securities.csv: missing required column 'market_cap'"), ValidationError);
    {
        std::ofstream o(dir / "securities.csv");
        o << "\xEF\xBB\xBF" "date,security_id,ret,close,volume_usd,market_cap,shares_outstanding\r\n"
          << "2021-01-04,AAA,0,1,1,x1,1\r\n";
    }
    CHECK_THROWS_WITH_AS(read_panel(dir), doctest::Contains("line 2, column 'market_cap'"), ValidationError);
    CHECK_THROWS_AS(read_panel(dir / "nope"), IoError);
}

TEST_CASE("read-time filters restrict the universe") {
    const auto dir = fx::scratch_dir("filters");
    SimConfig c = fx::small_config();
    c.active_share = 0.5;
    const SimOutput sim = generate(c);
    write_sim_output(dir, sim);
    PanelFilter only_active;
    only_active.active_only = true;
    const MarketPanel a = read_panel(dir, {}, only_active);
    int active = 0;
    for (char x : sim.active) active += x;
    CHECK(a.n_funds() == active);
    for (Index f = 0; f < a.n_funds(); ++f) CHECK(a.fund(f, 0).is_active);

    PanelFilter top;
    top.top_liquidity = 10;
    const MarketPanel t = read_panel(dir, {}, top);
    CHECK(t.n_securities() == 10);
    for (Index f = 0; f < t.n_funds(); ++f)
        for (Index d = 0; d < t.n_days(); ++d)
            for (const auto& p : t.holdings(f, d)) CHECK(p.security < 10);
}

}  // TEST_SUITE
