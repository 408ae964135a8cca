#pragma once

#include "flowlab/illiquidity.hpp"
#include "flowlab/panel.hpp"

#include <optional>
#include <span>
#include <vector>

namespace flowlab {

// Transient kernel: theta_0 at s = 0, theta_1 * exp(-lambda (s - 1)) for s >= 1.
struct DecayKernel {
    double theta0 = 0.664;
    double theta1 = -0.087;
    double lambda = 0.323;
};

struct ImpactParams {
    double theta = 0.78;
    double eta = 0.5;
    std::optional<DecayKernel> decay;
    int max_lag = 40;

    // theta_s; without a decay kernel impact is permanent and immediate.
    double coefficient(int s) const;
    void validate() const;
};

enum class LongRunForm {
    DiscreteSum,       // theta_0 + theta_1 / (1 - exp(-lambda)), the s -> infinity sum of theta_s
    PrintedContinuum,  // theta_0 - theta_1 / lambda
};

double long_run_impact(const ImpactParams& params, LongRunForm form = LongRunForm::DiscreteSum);
// sum_{s=0}^{lags} theta_s
double cumulative_kernel(const ImpactParams& params, int lags);

// sign(x) |x|^eta
double signed_power(double x, double eta);

// sign(Q) theta sigma (|Q| / V)^eta
double price_impact(double trade, double volume, double sigma, const ImpactParams& params);

// theta sign(f) |f|^eta I_{t-1}
double self_inflated_return(double flow_rel, double fund_illiq_prev, const ImpactParams& params);

// sum_n w_{j,n,t} I_{i,n,t}: fund j's exposure to impact caused by fund i's trades.
double cross_fund_illiquidity(Index i, Index j, Index t, const MarketPanel& panel, const LiquidityTable& table);

// R^{I,Total}_{i,t} = sum_s theta_s sum_j I_{t-1-s,ji} sign(f_{j,t-s}) |f_{j,t-s}|^eta.
// Direct evaluation; lags reaching before the panel start are truncated.
// Missing when fund i has no valid illiquidity on t-1.
double total_impact(Index fund, Index t, const MarketPanel& panel, const LiquidityTable& table, const ImpactParams& params);

// Full-panel evaluation of own and total self-inflated returns.
class ImpactSeries {
public:
    ImpactSeries() = default;
    ImpactSeries(const MarketPanel& panel, const LiquidityTable& table, const ImpactParams& params);

    double self_return(Index f, Index t) const { return self_[f * n_days_ + t]; }
    double total_return(Index f, Index t) const { return total_[f * n_days_ + t]; }
    Index n_days() const { return n_days_; }

private:
    Index n_days_ = 0;
    std::vector<double> self_;
    std::vector<double> total_;
};

// Optional provider baskets: q^CU_{i,n,t} in dollars per ETF share, keyed by (fund, security, day).
struct CreationBasket {
    Index fund = 0;
    Index security = 0;
    Index day = 0;
    double dollars_per_share = 0.0;
};

// Arbitrage-induced trading per (security, day).
//   AIT_{n,t}  = sum_i dS_{i,t} q_{i,n,t-1} / M_{n,t-1}
//   AIT^_{n,t} = sign(sum_i dS q) sigma_n sqrt(sum_i |dS_{i,t}| q_{i,n,t-1} / V_{n,t-1})
// Baskets default to the pro-rata q = w A / S of the prior day.
class AitSeries {
public:
    AitSeries() = default;
    AitSeries(const MarketPanel& panel, const LiquidityTable& table, std::span<const CreationBasket> overrides = {});

    double ait(Index s, Index t) const { return ait_[s * n_days_ + t]; }
    double ait_hat(Index s, Index t) const { return ait_hat_[s * n_days_ + t]; }

private:
    Index n_days_ = 0;
    std::vector<double> ait_;
    std::vector<double> ait_hat_;
};

}  // namespace flowlab
