#include "flowlab/summary.hpp"
#include "flowlab/analytics.hpp"
#include "flowlab/error.hpp"

namespace flowlab {

namespace {

SummaryRow describe(std::string name, std::vector<double> xs) {
    SummaryRow row;
    row.variable = std::move(name);
    std::erase_if(xs, [](double x) { return !std::isfinite(x); });
    row.count = static_cast<Index>(xs.size());
    if (xs.empty()) return row;
    row.median = quantile(xs, 0.5);
    row.p5 = quantile(xs, 0.05);
    row.p95 = quantile(xs, 0.95);
    return row;
}

}  // namespace

std::vector<SummaryRow> summarize(const MarketPanel& panel, const LiquidityTable& table) {
    std::vector<double> aum, holdings, flow, illiq, conc, size, adj;
    const auto market = market_returns(panel);
    for (Index f = 0; f < panel.n_funds(); ++f)
        for (Index t = 0; t < panel.n_days(); ++t) {
            const auto& d = panel.fund(f, t);
            if (!d.present) continue;
            aum.push_back(d.aum);
            holdings.push_back(static_cast<double>(panel.holdings(f, t).size()));
            flow.push_back(d.flow_rel);
            const auto& m = table.fund(f, t);
            if (m.valid) {
                illiq.push_back(m.fund_illiq);
                conc.push_back(m.fund_conc);
                size.push_back(m.fund_size);
            }
            adj.push_back(d.fund_return - market[t]);
        }
    if (aum.empty()) throw ValidationError("summarize: panel has no fund-days");

    std::vector<SummaryRow> out;
    out.push_back(describe("aum", std::move(aum)));
    out.push_back(describe("holdings", std::move(holdings)));
    out.push_back(describe("flow", std::move(flow)));
    out.push_back(describe("illiq", std::move(illiq)));
    out.push_back(describe("conc", std::move(conc)));
    out.push_back(describe("size", std::move(size)));
    out.push_back(describe("market_adjusted_return", std::move(adj)));
    return out;
}

}  // namespace flowlab
