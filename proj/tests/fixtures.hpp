#pragma once

#include "flowlab/calendar.hpp"
#include "flowlab/panel.hpp"
#include "flowlab/simulator.hpp"

#include <cmath>
#include <filesystem>
#include <functional>
#include <initializer_list>
#include <utility>
#include <vector>
#include <fstream>
#include <iterator>
#include <string>

namespace fx {

using namespace flowlab;

// Short feedback-loop simulation used by most property tests.
inline SimConfig small_config(std::uint64_t seed = 7) {
    SimConfig c;
    c.n_funds = 20;
    c.n_securities = 30;
    c.n_days = 130;
    c.seed = seed;
    c.decay = true;
    c.theta = 0.664;
    c.chase = ChaseMode::Observed;
    c.beta = 0.5;
    c.chase_lags = 20;
    return c;
}

inline PanelWindows short_windows() {
    PanelWindows w;
    w.volatility_window = 3;
    w.volatility_min_obs = 2;
    w.volume_window = 2;
    w.volume_min_obs = 1;
    w.momentum_window = 2;
    return w;
}

// Two securities (AAA, BBB), two funds (F1 holds both, F2 holds BBB), four days.
inline MarketPanel toy_panel(const PanelWindows& windows = short_windows()) {
    const auto days = business_days(parse_date("2021-01-04"), 4);
    PanelBuilder b;
    const double ret_a[] = {0.0, 0.01, -0.02, 0.03};
    const double ret_b[] = {0.0, -0.01, 0.02, 0.005};
    double pa = 10.0, pb = 20.0;
    for (int t = 0; t < 4; ++t) {
        if (t > 0) {
            pa *= 1.0 + ret_a[t];
            pb *= 1.0 + ret_b[t];
        }
        b.add(SecurityRow{days[t], "AAA", ret_a[t], pa, 1e6 * (1 + t), pa * 1e6, 1e6});
        b.add(SecurityRow{days[t], "BBB", ret_b[t], pb, 4e6, pb * 2e6, 2e6});
    }
    // F1: 60/40 at the start, shares 1000 -> 1100 -> 1050 -> 1050.
    const double s1[] = {1000, 1100, 1050, 1050};
    const double s2[] = {500, 500, 600, 550};
    double qa = 600.0 / 10.0, qb1 = 400.0 / 20.0, qb2 = 10000.0 / 20.0;
    pa = 10.0;
    pb = 20.0;
    double nav1 = 1.0, nav2 = 20.0;
    for (int t = 0; t < 4; ++t) {
        if (t > 0) {
            const double a0 = pa, b0 = pb;
            pa *= 1.0 + ret_a[t];
            pb *= 1.0 + ret_b[t];
            const double old1 = qa * a0 + qb1 * b0, new1 = qa * pa + qb1 * pb;
            nav1 *= new1 / old1;
            nav2 *= 1.0 + ret_b[t];
            // Flows reinvested pro rata.
            const double g1 = s1[t] / s1[t - 1], g2 = s2[t] / s2[t - 1];
            qa *= g1;
            qb1 *= g1;
            qb2 *= g2;
        }
        b.add(FundRow{days[t], "F1", nav1, s1[t], true});
        b.add(FundRow{days[t], "F2", nav2, s2[t], false});
        b.add(HoldingRow{days[t], "F1", "AAA", qa * pa});
        b.add(HoldingRow{days[t], "F1", "BBB", qb1 * pb});
        b.add(HoldingRow{days[t], "F2", "BBB", qb2 * pb});
    }
    return std::move(b).build(windows);
}

// Four securities with smooth deterministic returns; funds reinvest flows pro rata.
// Funds with given holdings (security index -> dollars at the start) and share paths.
struct FundSpec {
    std::string id;
    std::vector<std::pair<int, double>> start;
    std::vector<double> shares;
};

inline MarketPanel build_funds(const std::vector<FundSpec>& funds, int days) {
    const auto cal = business_days(parse_date("2021-01-04"), static_cast<std::size_t>(days));
    const int n_sec = 4;
    std::vector<std::vector<double>> price(n_sec, std::vector<double>(days));
    PanelBuilder b;
    for (int s = 0; s < n_sec; ++s) {
        double p = 10.0 + s;
        for (int t = 0; t < days; ++t) {
            const double r = t == 0 ? 0.0 : 0.01 * std::sin(1.0 + 3.0 * s + 1.7 * t);
            p *= 1.0 + r;
            price[s][t] = p;
            b.add(SecurityRow{cal[t], "S" + std::to_string(s), r, p, 1e5 * (1 + s), p * 1e6, 1e6});
        }
    }
    for (const auto& f : funds) {
        double aum0 = 0.0;
        for (const auto& [s, d] : f.start) aum0 += d;
        std::vector<double> units;
        for (const auto& [s, d] : f.start) units.push_back(d / price[s][0]);
        double nav = aum0 / f.shares[0];
        for (int t = 0; t < days; ++t) {
            if (t > 0) {
                double before = 0.0, after = 0.0;
                for (std::size_t k = 0; k < units.size(); ++k) {
                    before += units[k] * price[f.start[k].first][t - 1];
                    after += units[k] * price[f.start[k].first][t];
                }
                nav *= after / before;
                for (auto& u : units) u *= f.shares[t] / f.shares[t - 1];
            }
            b.add(FundRow{cal[t], f.id, nav, f.shares[t], true});
            for (std::size_t k = 0; k < units.size(); ++k)
                b.add(HoldingRow{cal[t], f.id, "S" + std::to_string(f.start[k].first), units[k] * price[f.start[k].first][t]});
        }
    }
    return std::move(b).build(short_windows());
}


inline std::vector<double> path(std::initializer_list<double> xs) { return xs; }

// Same panel in a currency worth 1/k: every dollar amount is multiplied by k.
// `rename` maps fund ids, which changes the internal fund order.
inline MarketPanel redenominate(const MarketPanel& base, double k,
                                const std::function<std::string(const std::string&)>& rename = {}) {
    auto id = [&](Index f) { return rename ? rename(base.fund_ids()[f]) : base.fund_ids()[f]; };
    PanelBuilder b;
    const auto days = base.dates();
    for (Index t = 0; t < base.n_days(); ++t) {
        for (Index s = 0; s < base.n_securities(); ++s) {
            const auto& d = base.security(s, t);
            if (d.present) b.add(SecurityRow{days[t], base.security_ids()[s], d.ret, k * d.close, k * d.volume_usd, k * d.market_cap, d.shares_outstanding});
        }
        for (Index f = 0; f < base.n_funds(); ++f) {
            const auto& d = base.fund(f, t);
            if (!d.present) continue;
            b.add(FundRow{days[t], id(f), k * d.nav_price, d.shares_outstanding, d.is_active});
            if (d.holdings_carried) continue;
            for (const auto& p : base.holdings(f, t))
                b.add(HoldingRow{days[t], id(f), base.security_ids()[p.security], k * p.dollar_position});
        }
    }
    return std::move(b).build(base.windows());
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("flowlab_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace fx
