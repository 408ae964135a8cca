#include "fixtures.hpp"

#include "flowlab/analytics.hpp"
#include "flowlab/error.hpp"
#include "flowlab/illiquidity.hpp"
#include "flowlab/impact.hpp"
#include "flowlab/recovery.hpp"

#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

using namespace flowlab;

namespace {

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) mx += x[k], my += y[k];
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxy += (x[k] - mx) * (y[k] - my);
        sxx += (x[k] - mx) * (x[k] - mx);
        syy += (y[k] - my) * (y[k] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_SUITE("simulator") {

TEST_CASE("same seed, same output") {
    const SimOutput a = generate(fx::small_config(3)), b = generate(fx::small_config(3)), c = generate(fx::small_config(4));
    CHECK(a.sec_ret == b.sec_ret);
    CHECK(a.sec_volume == b.sec_volume);
    CHECK(a.nav == b.nav);
    CHECK(a.fund_shares == b.fund_shares);
    CHECK(a.positions == b.positions);
    CHECK(a.members == b.members);
    CHECK(a.sec_ret != c.sec_ret);
}

TEST_CASE("truth decomposes returns and flows") {
    const SimOutput sim = generate(fx::small_config());
    const MarketPanel panel = sim.panel();
    int n = 0;
    for (Index f = 0; f < panel.n_funds(); ++f)
        for (Index t = 1; t < panel.n_days(); ++t) {
            const auto& d = panel.fund(f, t);
            const auto& tr = sim.truth.at(f, t);
            CHECK(std::abs(d.fund_return - (tr.fundamental_return + tr.impact_return)) <= 1e-12);
            CHECK(std::abs(d.flow_rel - (tr.flow_chasing + tr.flow_noise)) <= 1e-12);
            double held = 0.0;
            for (const auto& p : panel.holdings(f, t)) held += p.dollar_position;
            CHECK(std::abs(held - d.aum) <= 1e-12 * d.aum);
            ++n;
        }
    CHECK(n == 20 * 129);
}

TEST_CASE("flow-driven trades add up to the fund flow") {
    const MarketPanel panel = generate(fx::small_config()).panel();
    for (Index f = 0; f < panel.n_funds(); ++f)
        for (Index t = 1; t < panel.n_days(); t += 5) {
            double q = 0.0;
            for (const auto& p : panel.holdings(f, t - 1)) q += *flow_driven_trade(f, p.security, t, panel);
            const double F = panel.fund(f, t).flow_dollar;
            CHECK(std::abs(q - F) <= 1e-12 * std::max(1.0, std::abs(F)));
        }
}

TEST_CASE("no impact and no chasing") {
    SimConfig c = fx::small_config();
    c.theta = 0.0;
    c.decay = false;
    c.chase = ChaseMode::None;
    c.beta = 0.0;
    const SimOutput sim = generate(c);
    for (Index f = 0; f < 20; ++f)
        for (Index t = 1; t < sim.n_days(); ++t) {
            CHECK(sim.truth.at(f, t).impact_return == 0.0);
            CHECK(sim.truth.at(f, t).flow_chasing == 0.0);
        }
    // Fundamentals do not depend on impact.
    SimConfig d = c;
    d.theta = 0.78;
    const SimOutput with = generate(d);
    for (Index f = 0; f < 20; ++f)
        for (Index t = 1; t < sim.n_days(); t += 11)
            CHECK(with.truth.at(f, t).flow_noise == sim.truth.at(f, t).flow_noise);
}

TEST_CASE("fundamental chasing uses the fundamental part only") {
    SimConfig c = fx::small_config();
    c.chase = ChaseMode::Fundamental;
    c.lambda_beta = 0.1;
    const SimOutput sim = generate(c);
    const auto w = exp_weights(0.1, 20);
    for (Index f = 0; f < 20; f += 3)
        for (Index t = 30; t < sim.n_days(); t += 9) {
            double x = 0.0;
            for (int s = 0; s <= 20; ++s) x += w[s] * sim.truth.at(f, t - 1 - s).fundamental_return;
            CHECK(sim.truth.at(f, t).flow_chasing == doctest::Approx(0.5 * x).epsilon(1e-12));
        }
}

TEST_CASE("config text round trip") {
    SimConfig c = fx::small_config();
    c.flow_noise = 0.0125;
    c.chase = ChaseMode::Fundamental;
    std::stringstream a;
    write_sim_config(a, c);
    const SimConfig back = parse_sim_config(a);
    std::stringstream b;
    write_sim_config(b, back);
    CHECK(a.str() == b.str());

    std::istringstream bad("n_funds = 10\nwidgets = 3\n");
    CHECK_THROWS_WITH_AS(parse_sim_config(bad), doctest::Contains("widgets"), ValidationError);
    std::istringstream junk("n_funds 10\n");
    CHECK_THROWS_AS(parse_sim_config(junk), ValidationError);
    SimConfig v = c;
    CHECK_THROWS_AS(set_sim_option(v, "n_days", "many"), ValidationError);
    v.flow_noise = 0.5;
    CHECK_THROWS_AS(v.validate(), ValidationError);
    v = c;
    v.holdings_min = 50;
    CHECK_THROWS_AS(generate(v), ValidationError);
    CHECK_THROWS_AS(read_sim_config("/nonexistent/sim.cfg"), IoError);
}

TEST_CASE("parallel_for") {
    std::vector<int> slots(100, 0);
    parallel_for(slots.size(), 4, [&](std::size_t k) { slots[k] = static_cast<int>(k * k); });
    for (std::size_t k = 0; k < slots.size(); ++k) CHECK(slots[k] == static_cast<int>(k * k));
    CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t k) { if (k == 5) throw EstimationError("five"); }), EstimationError);
    std::atomic<int> calls{0};
    parallel_for(0, 4, [&](std::size_t) { ++calls; });
    CHECK(calls == 0);
}

TEST_CASE("recovery does not depend on the thread count") {
    SimConfig c = fx::small_config();
    c.n_days = 200;
    RecoveryOptions o;
    o.seeds = 3;
    o.estimators = {Estimator::Impact, Estimator::Chase};
    o.threads = 1;
    const RecoveryReport one = recovery_suite(c, o);
    o.threads = 3;
    const RecoveryReport three = recovery_suite(c, o);
    REQUIRE(one.stats.size() == three.stats.size());
    for (std::size_t k = 0; k < one.stats.size(); ++k) {
        CHECK(one.stats[k].parameter == three.stats[k].parameter);
        for (std::size_t s = 0; s < 3; ++s) {
            const double a = one.stats[k].estimates[s], b = three.stats[k].estimates[s];
            CHECK(((std::isnan(a) && std::isnan(b)) || a == b));
        }
    }
    const auto& th = one.stat("impact", "theta");
    CHECK(th.truth == 0.664);
    CHECK(th.n == 3);
    CHECK_THROWS_AS(one.stat("impact", "gamma"), ValidationError);
    CHECK_THROWS_AS(parse_estimator("ols"), ValidationError);
    o.seeds = 0;
    CHECK_THROWS_AS(recovery_suite(c, o), ValidationError);
}

TEST_CASE("fund return is the lagged-weight sum of security returns") {
    const SimOutput sim = generate(fx::small_config(11));
    const Index T = sim.n_days();
    for (std::size_t f = 0; f < sim.fund_ids.size(); ++f) {
        const auto& m = sim.members[f];
        for (Index t = 1; t < T; ++t) {
            double total = 0.0, r = 0.0;
            for (std::size_t k = 0; k < m.size(); ++k) total += sim.positions[f][k * T + t - 1];
            for (std::size_t k = 0; k < m.size(); ++k) r += sim.positions[f][k * T + t - 1] / total * sim.sec_ret[m[k] * T + t];
            const double R = sim.nav[f * T + t] / sim.nav[f * T + t - 1] - 1.0;
            CHECK(std::abs(R - r) <= 1e-12);
        }
    }
}

TEST_CASE("a single flow's impact converges to the long-run kernel") {
    SimConfig c = fx::small_config();
    c.chase = ChaseMode::None;
    c.beta = 0.0;
    c.flow_noise = 1e-300;
    c.impact_lags = 200;
    c.case_fund = true;
    c.case_holdings = 1;
    c.case_start = 20;
    c.case_length = 1;
    c.n_days = 240;
    const SimOutput sim = generate(c);
    Index first = -1;
    double cum = 0.0;
    for (Index t = 1; t < sim.n_days(); ++t) {
        const double x = sim.truth.at(0, t).impact_return;
        if (first < 0 && std::abs(x) > 1e-20) first = t;
        if (first >= 0) cum += x;
    }
    REQUIRE(first > 0);
    const double unit = sim.truth.at(0, first).impact_return / c.theta;
    CHECK(std::abs(cum / unit - long_run_impact(c.impact_params())) <= 1e-6);
}

TEST_CASE("impact raises the variance of illiquid funds") {
    SimConfig c = fx::small_config(5);
    c.n_days = 250;
    c.chase = ChaseMode::Observed;
    c.beta = 0.5;
    SimConfig zero = c;
    zero.theta = 0.0;
    zero.decay = false;
    const SimOutput with = generate(c), without = generate(zero);
    const MarketPanel panel = without.panel();
    const LiquidityTable table(panel, LiquiditySpec{});
    std::vector<std::pair<double, Index>> illiq;
    for (Index f = 0; f < panel.n_funds(); ++f) {
        double s = 0.0;
        int n = 0;
        for (Index t = 0; t < panel.n_days(); ++t)
            if (table.fund(f, t).valid) s += table.fund(f, t).fund_illiq, ++n;
        illiq.emplace_back(n ? s / n : 0.0, f);
    }
    std::sort(illiq.rbegin(), illiq.rend());
    const Index T = with.n_days();
    auto var = [&](const SimOutput& sim, Index f) {
        double m = 0.0, q = 0.0;
        for (Index t = 1; t < T; ++t) m += sim.nav[f * T + t] / sim.nav[f * T + t - 1] - 1.0;
        m /= T - 1;
        for (Index t = 1; t < T; ++t) q += std::pow(sim.nav[f * T + t] / sim.nav[f * T + t - 1] - 1.0 - m, 2);
        return q / (T - 2);
    };
    for (int k = 0; k < 5; ++k) CHECK(var(with, illiq[k].second) > var(without, illiq[k].second));
}

TEST_CASE("case fund's cumulative return tracks its cumulative impact") {
    SimConfig c = fx::small_config(9);
    c.n_days = 250;
    c.case_fund = true;
    const SimOutput sim = generate(c);
    std::vector<double> ci, cr;
    double a = 0.0, b = 0.0;
    for (Index t = 1; t < sim.n_days(); ++t) {
        a += sim.truth.at(0, t).impact_return;
        b += sim.truth.at(0, t).impact_return + sim.truth.at(0, t).fundamental_return;
        ci.push_back(a);
        cr.push_back(b);
    }
    CHECK(pearson(ci, cr) > 0.4);
}

}  // TEST_SUITE
