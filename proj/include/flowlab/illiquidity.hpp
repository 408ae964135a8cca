#pragma once

#include "flowlab/panel.hpp"

#include <span>
#include <string>
#include <vector>

namespace flowlab {

enum class Supply { DollarVolume, MarketCap };

// Linear: I = sum_n w_n I_n.  PowerMean: I = (sum_n w_n I_n)^(1/eta), with
// concentration raised alike and size reported as the raw ratio A / sum V~.
enum class FundAggregation { Linear, PowerMean };

struct LiquiditySpec {
    double eta = 0.5;
    Supply supply = Supply::DollarVolume;
    bool volatility_prefactor = true;
    FundAggregation aggregation = FundAggregation::Linear;
    double volatility_floor = 1e-4;
    double volume_floor_quantile = 0.01;

    // eta = 1, market-cap supply, no volatility prefactor.
    static LiquiditySpec legacy();
    void validate() const;
};

// V~ = V * sigma^(-1/eta).
double effective_liquidity(double volume, double sigma, double eta);
// I_n = sigma * (w A / V)^eta.
double position_illiquidity(double weight, double aum, double volume, double sigma, double eta);
// C_n = (w / v)^eta, v the liquidity weight of the security within the fund.
double position_concentration(double weight, double liquidity_weight, double eta);
// S = (A / sum V~)^eta. With this normalisation C_n * S equals
// sigma * (w A / V)^eta for every eta; at eta = 1 it is the plain ratio.
double fund_size(double aum, double sum_effective_liquidity, double eta);

struct FundMeasures {
    double fund_illiq = kMissing;
    double fund_conc = kMissing;
    double fund_size = kMissing;
    double size_ratio = kMissing;  // A / sum V~
    bool valid = false;
};

struct PositionMeasures {
    double illiq = kMissing;       // C_n * S
    double conc = kMissing;
    double route_gap = kMissing;   // |C_n*S - prefactor*(wA/supply)^eta|, relative
};

// Measures for every fund-day of a panel, aligned with the panel's holdings.
class LiquidityTable {
public:
    LiquidityTable() = default;
    LiquidityTable(const MarketPanel& panel, const LiquiditySpec& spec);

    const LiquiditySpec& spec() const { return spec_; }
    double eta() const { return spec_.eta; }
    const FundMeasures& fund(Index f, Index t) const { return funds_[f * n_days_ + t]; }
    std::span<const PositionMeasures> positions(Index f, Index t) const;
    const std::vector<std::string>& diagnostics() const { return diagnostics_; }

    // Liquidity actually used for (security, day) after floors; missing if unusable.
    double floored_supply(Index s, Index t) const { return supply_[s * n_days_ + t]; }
    double floored_volatility(Index s, Index t) const { return sigma_[s * n_days_ + t]; }

private:
    LiquiditySpec spec_;
    Index n_days_ = 0;
    std::vector<std::size_t> offsets_;
    std::vector<FundMeasures> funds_;
    std::vector<PositionMeasures> positions_;
    std::vector<double> supply_;
    std::vector<double> sigma_;
    std::vector<std::string> diagnostics_;
};

FundMeasures fund_measures(Index fund, Index t, const MarketPanel& panel, const LiquiditySpec& spec);

}  // namespace flowlab
