#pragma once

#include "flowlab/econometrics.hpp"
#include "flowlab/illiquidity.hpp"
#include "flowlab/nlls.hpp"
#include "flowlab/panel.hpp"

#include <optional>
#include <string>
#include <vector>

namespace flowlab {

using EffectList = std::vector<std::vector<std::string>>;

// "fund-time" -> {{fund, day}}, "fund,time" -> {{fund}, {day}}, "time", "fund", "none".
EffectList parse_fixed_effects(const std::string& text);
// Comma list over {day, fund, stock, stockday, fundday}.
EffectList parse_clusters(const std::string& text);

// Fund-day rows of a panel. Series:
//   ret            R_{i,t}
//   flow           f_{i,t}
//   flow_eta       sign(f) |f|^eta
//   illiq, conc    I_{i,t-1}, C_{i,t-1}
//   flow_x_illiq   flow_eta * illiq
//   flow_x_conc    flow_eta * conc
// Labels: fund, day, active. Entity = fund, time = day index.
PanelFrame fund_frame(const MarketPanel& panel, const LiquidityTable& table);

// (fund, security, day) rows for every security held on t-1. Series:
//   ret            r_{n,t}
//   illiq, conc    I_{i,n,t-1}, C_{i,n,t-1}
//   flow_eta, flow_x_illiq, flow_x_conc
//   momentum, volatility (security, t-1)
// Labels: fund, security, day, active.
PanelFrame stock_frame(const MarketPanel& panel, const LiquidityTable& table);

enum class ImpactLevel { Stock, Fund };

struct ImpactRegressionOptions {
    ImpactLevel level = ImpactLevel::Fund;
    std::optional<EffectList> fixed_effects;  // default: fund,time (fund) / fund-time (stock)
    std::optional<EffectList> clusters;       // default: day,fund (fund) / day,stockday (stock)
    bool concentration_controls = true;       // C and f^eta C
    int flow_lags = 1;                        // fund level: f^eta_{t-1..t-k}
    std::string sample = "all";               // all | active | passive
};

// Coefficient on flow_x_illiq estimates theta.
RegressionFit estimate_impact(const MarketPanel& panel, const LiquidityTable& table, const ImpactRegressionOptions& options = {});

struct ReversalOptions {
    int max_lag = 40;
    EffectList fixed_effects{{"fund"}, {"day"}};
    EffectList clusters{{"day"}, {"fund"}};
    int flow_control_lags = 0;  // f^eta lags 0..k as controls; negative disables
    bool fit_kernel = true;
    NllsOptions nlls{};
    std::string sample = "all";
};

struct ReversalResult {
    DistributedLagFit lags;
    std::vector<CumulativePoint> cumulative;
    std::optional<KernelFit> kernel;  // theta0, theta1, lambda_theta
};

// Distributed lag of R_{i,t} on x_{i,t-s} = f^eta_{i,t-s} I_{i,t-1-s}, s = 0..S,
// and the exponential-decay kernel fitted on the same sample.
ReversalResult estimate_reversal(const MarketPanel& panel, const LiquidityTable& table, const ReversalOptions& options = {});

struct ChasingKernelOptions {
    int max_lag = 200;   // L
    int flow_lags = 5;   // f_{t}, ..., f_{t-k+1} as controls
    EffectList fixed_effects{{"day"}};
    EffectList clusters{{"day"}, {"fund"}};
    bool distributed_lag = true;
    bool fit_kernel = true;
    NllsOptions nlls{};
    std::string sample = "all";
};

struct ChasingKernelResult {
    std::optional<DistributedLagFit> lags;
    std::vector<CumulativePoint> cumulative;
    std::optional<KernelFit> kernel;  // beta, lambda_beta
};

// f_{i,t+1} on R_{i,t-s}, s = 0..L, plus lagged-flow controls.
ChasingKernelResult estimate_chasing_kernel(const MarketPanel& panel, const ChasingKernelOptions& options = {});

// Exponential-decay fit over a prepared frame. `lag_series` supplies the lagged
// regressor, `head_lag0` keeps lag 0 as its own linear coefficient (impact form).
KernelFit fit_kernel_on_frame(const PanelFrame& frame, const BuiltDesign& built, const std::string& lag_series, int first_lag,
                              int last_lag, std::vector<std::string> linear_names, const std::vector<Index>& linear_columns,
                              const std::string& amplitude_name, const std::string& decay_name, const NllsOptions& options);

}  // namespace flowlab
