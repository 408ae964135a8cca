#pragma once

#include "flowlab/illiquidity.hpp"
#include "flowlab/panel.hpp"

#include <string>
#include <vector>

namespace flowlab {

struct SummaryRow {
    std::string variable;
    Index count = 0;
    double median = kMissing;
    double p5 = kMissing;
    double p95 = kMissing;
};

// Pooled fund-day statistics: aum, holdings, flow, illiq, conc, size and the
// market-adjusted daily return. Throws ValidationError on a panel without fund-days.
std::vector<SummaryRow> summarize(const MarketPanel& panel, const LiquidityTable& table);

}  // namespace flowlab
