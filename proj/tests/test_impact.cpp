#include "fixtures.hpp"

#include "flowlab/error.hpp"
#include "flowlab/impact.hpp"

#include <doctest.h>

#include <cmath>

using namespace flowlab;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }


}  // namespace

TEST_SUITE("impact") {

TEST_CASE("price impact law") {
    ImpactParams p;
    CHECK(price_impact(0.0, 1e6, 0.02, p) == 0.0);
    p.theta = 1.0;
    p.eta = 1.0;
    CHECK(rel(price_impact(3.5, 1.0, 0.013, p), 0.0455) < 1e-12);
    p.theta = 0.78;
    p.eta = 0.5;
    CHECK(rel(price_impact(-0.25, 1.0, 0.02, p), -0.0078) < 1e-12);
    // Odd and monotone.
    for (double q : {1e3, 1e5, 1e7}) {
        CHECK(price_impact(-q, 1e6, 0.02, p) == -price_impact(q, 1e6, 0.02, p));
        CHECK(price_impact(2 * q, 1e6, 0.02, p) > price_impact(q, 1e6, 0.02, p));
        CHECK(price_impact(q, 1e6, 0.03, p) > price_impact(q, 1e6, 0.02, p));
    }
    CHECK(self_inflated_return(0.0, 0.3, p) == 0.0);
    CHECK(rel(self_inflated_return(0.04, 0.3, p), 0.0468) < 1e-12);
    CHECK(rel(self_inflated_return(-0.04, 0.3, p), -0.0468) < 1e-12);
}

TEST_CASE("decay kernel and its long-run sum") {
    ImpactParams p;
    p.decay = DecayKernel{0.664, -0.087, 0.323};
    p.max_lag = 40;
    CHECK(p.coefficient(0) == 0.664);
    CHECK(p.coefficient(1) == -0.087);
    for (int s = 2; s <= 40; ++s) CHECK(rel(p.coefficient(s) / p.coefficient(s - 1), std::exp(-0.323)) < 1e-12);
    CHECK(p.coefficient(41) == 0.0);

    const double q = std::exp(-0.323);
    const double closed = 0.664 - 0.087 / (1.0 - q);
    CHECK(std::abs(closed - 0.349) < 5e-4);
    CHECK(std::abs(long_run_impact(p) - closed) < 1e-12);
    CHECK(std::abs(long_run_impact(p, LongRunForm::PrintedContinuum) - (0.664 + 0.087 / 0.323)) < 1e-12);
    for (int S : {1, 5, 40}) {
        const double geometric = 0.664 - 0.087 * (1.0 - std::pow(q, S)) / (1.0 - q);
        CHECK(std::abs(cumulative_kernel(p, S) - geometric) < 1e-12);
    }
    p.max_lag = 400;
    CHECK(std::abs(cumulative_kernel(p, 400) - closed) < 1e-12);

    ImpactParams bad;
    bad.eta = 0.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = ImpactParams{};
    bad.decay = DecayKernel{0.6, -0.1, 0.0};
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("weighted per-position impacts sum to the self-inflated return") {
    const MarketPanel panel = generate(fx::small_config()).panel();
    const LiquidityTable table(panel, LiquiditySpec{});
    ImpactParams p;
    int n = 0;
    for (Index f = 0; f < panel.n_funds(); ++f)
        for (Index t = 70; t < panel.n_days(); ++t) {
            const auto& d = panel.fund(f, t);
            const auto& m = table.fund(f, t - 1);
            if (!m.valid || is_missing(d.flow_dollar)) continue;
            double sum = 0.0;
            for (const auto& h : panel.holdings(f, t - 1)) {
                const double q = *flow_driven_trade(f, h.security, t, panel);
                sum += h.weight * price_impact(q, table.floored_supply(h.security, t - 1), table.floored_volatility(h.security, t - 1), p);
            }
            CHECK(rel(sum, self_inflated_return(d.flow_rel, m.fund_illiq, p)) < 1e-10);
            ++n;
        }
    CHECK(n > 500);
}

TEST_CASE("cross-fund illiquidity") {
    const int T = 6;
    const auto flat = fx::path({100, 100, 100, 100, 100, 100});
    const MarketPanel p = fx::build_funds({{"A", {{0, 600}, {1, 400}}, flat},
                                 {"B", {{0, 600}, {1, 400}}, flat},
                                 {"C", {{2, 500}, {3, 500}}, flat},
                                 {"D", {{0, 100}, {1, 900}, {2, 2000}}, flat}},
                                T);
    const LiquidityTable table(p, LiquiditySpec{});
    const Index a = 0, b = 1, c = 2, d = 3;
    const Index t = 4;
    REQUIRE(table.fund(a, t).valid);
    CHECK(rel(cross_fund_illiquidity(a, b, t, p, table), table.fund(a, t).fund_illiq) < 1e-12);
    CHECK(cross_fund_illiquidity(a, c, t, p, table) == 0.0);
    CHECK(cross_fund_illiquidity(c, a, t, p, table) == 0.0);

    // Brute force: fund j's weights on fund i's position illiquidities.
    auto brute = [&](Index i, Index j) {
        double s = 0.0;
        const auto hi = p.holdings(i, t);
        const auto pos = table.positions(i, t);
        for (const auto& hj : p.holdings(j, t))
            for (std::size_t k = 0; k < hi.size(); ++k)
                if (hi[k].security == hj.security) s += hj.weight * pos[k].illiq;
        return s;
    };
    CHECK(rel(cross_fund_illiquidity(a, d, t, p, table), brute(a, d)) < 1e-14);
    CHECK(rel(cross_fund_illiquidity(d, a, t, p, table), brute(d, a)) < 1e-14);
    CHECK(std::abs(cross_fund_illiquidity(a, d, t, p, table) - cross_fund_illiquidity(d, a, t, p, table)) > 1e-6);
}

TEST_CASE("total impact reductions") {
    const int T = 8;
    const auto flows = fx::path({100, 104, 101, 107, 107, 103, 110, 108});
    ImpactParams params;
    {
        // One fund, no decay: total equals own.
        const MarketPanel p = fx::build_funds({{"A", {{0, 600}, {1, 400}}, flows}}, T);
        const LiquidityTable table(p, LiquiditySpec{});
        const ImpactSeries series(p, table, params);
        for (Index t = 2; t < T; ++t) {
            const double own = self_inflated_return(p.fund(0, t).flow_rel, table.fund(0, t - 1).fund_illiq, params);
            CHECK(rel(series.self_return(0, t), own) < 1e-14);
            CHECK(rel(series.total_return(0, t), own) < 1e-12);
            CHECK(rel(total_impact(0, t, p, table, params), own) < 1e-12);
        }
        CHECK(is_missing(series.self_return(0, 0)));
    }
    {
        // Two identical funds with the same flows: total is twice own.
        const MarketPanel p = fx::build_funds({{"A", {{0, 600}, {1, 400}}, flows}, {"B", {{0, 600}, {1, 400}}, flows}}, T);
        const LiquidityTable table(p, LiquiditySpec{});
        const ImpactSeries series(p, table, params);
        for (Index t = 2; t < T; ++t) CHECK(rel(series.total_return(0, t), 2.0 * series.self_return(0, t)) < 1e-12);
    }
    {
        // Zero flow, zero impact.
        const MarketPanel p = fx::build_funds({{"A", {{0, 600}, {1, 400}}, fx::path({100, 100, 100, 100, 100, 100, 100, 100})}}, T);
        const LiquidityTable table(p, LiquiditySpec{});
        const ImpactSeries series(p, table, params);
        for (Index t = 2; t < T; ++t) CHECK(series.self_return(0, t) == 0.0);
    }
}

TEST_CASE("impact series agrees with direct evaluation, linear in theta") {
    const MarketPanel panel = generate(fx::small_config()).panel();
    const LiquidityTable table(panel, LiquiditySpec{});
    ImpactParams p;
    p.decay = DecayKernel{0.664, -0.087, 0.323};
    p.theta = 0.664;
    p.max_lag = 10;
    const ImpactSeries series(panel, table, p);
    ImpactParams p2 = p;
    p2.decay = DecayKernel{2 * 0.664, 2 * -0.087, 0.323};
    p2.theta = 2 * 0.664;
    const ImpactSeries doubled(panel, table, p2);
    int n = 0;
    for (Index f = 0; f < panel.n_funds(); f += 3)
        for (Index t = 60; t < panel.n_days(); t += 5) {
            const double direct = total_impact(f, t, panel, table, p);
            if (is_missing(direct)) continue;
            ++n;
            CHECK(std::abs(series.total_return(f, t) - direct) <= 1e-12 * std::max(1.0, std::abs(direct)));
            CHECK(std::abs(doubled.total_return(f, t) - 2 * direct) <= 1e-12 * std::max(1.0, std::abs(direct)));
        }
    CHECK(n > 50);
}

TEST_CASE("arbitrage-induced trading") {
    {
        // One ETF: dS = 10, q = 5 dollars per share, M = 10,000.
        const auto cal = business_days(parse_date("2021-01-04"), 2);
        PanelBuilder b;
        for (int t = 0; t < 2; ++t) {
            b.add(SecurityRow{cal[t], "AAA", 0.0, 10, 1e3, 1e4, 1e3});
            b.add(FundRow{cal[t], "E", 5.0, t == 0 ? 100.0 : 110.0, true});
            b.add(HoldingRow{cal[t], "E", "AAA", t == 0 ? 500.0 : 550.0});
        }
        const MarketPanel p = std::move(b).build(fx::short_windows());
        const LiquidityTable table(p, LiquiditySpec{});
        const AitSeries pro_rata(p, table);
        CHECK(rel(pro_rata.ait(0, 1), 0.005) < 1e-14);
        const CreationBasket over[] = {{0, 0, 0, 5.0}};
        CHECK(rel(AitSeries(p, table, over).ait(0, 1), 0.005) < 1e-14);
        const CreationBasket twice[] = {{0, 0, 0, 10.0}};
        CHECK(rel(AitSeries(p, table, twice).ait(0, 1), 0.01) < 1e-14);
    }
    {
        // No share changes: AIT = AIT-hat = 0.
        const MarketPanel p = fx::build_funds({{"A", {{0, 600}, {1, 400}}, fx::path({100, 100, 100, 100})}}, 4);
        const LiquidityTable table(p, LiquiditySpec{});
        const AitSeries ait(p, table);
        for (Index t = 3; t < 4; ++t) {
            CHECK(ait.ait(0, t) == 0.0);
            CHECK(ait.ait_hat(0, t) == 0.0);
        }
    }
    {
        // Pro-rata baskets reproduce sum_i w F / M on simulator output; AIT-hat carries the net sign.
        const MarketPanel panel = generate(fx::small_config()).panel();
        const LiquidityTable table(panel, LiquiditySpec{});
        const AitSeries ait(panel, table);
        for (Index t = 1; t < panel.n_days(); ++t)
            for (Index s = 0; s < panel.n_securities(); ++s) {
                double fit = 0.0, gross = 0.0;
                for (Index f = 0; f < panel.n_funds(); ++f)
                    if (auto q = flow_driven_trade(f, s, t, panel)) {
                        fit += *q;
                        gross += std::abs(*q);
                    }
                fit /= panel.security(s, t - 1).market_cap;
                gross /= panel.security(s, t - 1).market_cap;
                CHECK(std::abs(ait.ait(s, t) - fit) <= 1e-10 * std::max(gross, 1e-300));
                if (!is_missing(ait.ait_hat(s, t)) && fit != 0.0) CHECK(std::signbit(ait.ait_hat(s, t)) == std::signbit(fit));
            }
    }
}

}  // TEST_SUITE
