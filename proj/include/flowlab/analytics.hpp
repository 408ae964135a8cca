#pragma once

#include "flowlab/econometrics.hpp"
#include "flowlab/estimation.hpp"
#include "flowlab/illiquidity.hpp"
#include "flowlab/impact.hpp"
#include "flowlab/panel.hpp"

#include <optional>
#include <string>
#include <vector>

namespace flowlab {

// w_s = exp(-lambda s) / sum_k exp(-lambda k), s = 0..L.
std::vector<double> exp_weights(double lambda, int max_lag);

// AUM-weighted (A_{t-1}) mean fund return per day; missing where no fund qualifies.
std::vector<double> market_returns(const MarketPanel& panel);

// R = R^I + R^perp per fund-day, with R^I the total impact (all funds, with
// reversal), and the exponentially weighted versions over lags 0..L.
// Weighted values are missing unless every lag in the window is present.
class DecomposedReturns {
public:
    DecomposedReturns() = default;
    DecomposedReturns(const MarketPanel& panel, const ImpactSeries& impact, double lambda_beta, int max_lag);

    double ret(Index f, Index t) const { return at(ret_, f, t); }
    double impact(Index f, Index t) const { return at(impact_, f, t); }
    double orth(Index f, Index t) const { return at(orth_, f, t); }
    double ret_tilde(Index f, Index t) const { return at(ret_tilde_, f, t); }
    double impact_tilde(Index f, Index t) const { return at(impact_tilde_, f, t); }
    double orth_tilde(Index f, Index t) const { return at(orth_tilde_, f, t); }
    Index n_funds() const { return n_funds_; }
    Index n_days() const { return n_days_; }
    double lambda_beta() const { return lambda_; }
    int max_lag() const { return max_lag_; }

private:
    double at(const std::vector<double>& v, Index f, Index t) const { return v[f * n_days_ + t]; }
    Index n_funds_ = 0;
    Index n_days_ = 0;
    double lambda_ = 0.0;
    int max_lag_ = 0;
    std::vector<double> ret_, impact_, orth_, ret_tilde_, impact_tilde_, orth_tilde_;
};

struct ChasingOptions {
    int flow_lags = 5;  // f_t .. f_{t-k+1}
    EffectList fixed_effects{{"day"}};
    EffectList clusters{{"day"}, {"fund"}};
    std::string sample = "all";
};

struct ChasingResult {
    RegressionFit decomposed;  // ret_tilde_impact (beta1), ret_tilde_orth (beta2)
    RegressionFit benchmark;   // ret_tilde
    std::optional<WaldTest> equality;
    double beta1 = kMissing;   // missing when R~^I vanishes on the sample
    double beta2 = kMissing;
    double beta = kMissing;
};

// f_{i,t+1} = a_t + b1 R~^I_{i,t} + b2 R~^perp_{i,t} + lagged flows, plus the
// undecomposed benchmark on R~_{i,t}.
ChasingResult chasing_regression(const MarketPanel& panel, const DecomposedReturns& dec, const ChasingOptions& options = {});

struct PonziOptions {
    double beta1 = 0.0;
    double theta = 0.78;
    double eta = 0.5;
    double top_share = 0.10;  // top-I subset for volume ratios
};

// f^P_{i,t} = b1 R~^I_{i,t-1}; R^P_{i,t} = theta I_{i,t-1} sign(f^P) |f^P|^eta.
class PonziSeries {
public:
    PonziSeries() = default;
    PonziSeries(const MarketPanel& panel, const LiquidityTable& table, const DecomposedReturns& dec, const PonziOptions& options);

    double flow(Index f, Index t) const { return flow_[f * n_days_ + t]; }
    double ret(Index f, Index t) const { return ret_[f * n_days_ + t]; }
    // sum |f^P_t| A_{t-1} / sum |f_t| A_{t-1}; missing on a zero denominator.
    double volume_ratio(Index t) const { return ratio_all_[t]; }
    double volume_ratio_top(Index t) const { return ratio_top_[t]; }
    double volume_ratio_rest(Index t) const { return ratio_rest_[t]; }
    // sum |R^P_t| A_{t-1} and its running total.
    double reallocation(Index t) const { return realloc_[t]; }
    double cumulative_reallocation(Index t) const { return cum_realloc_[t]; }
    Index n_days() const { return n_days_; }

private:
    Index n_days_ = 0;
    std::vector<double> flow_, ret_;
    std::vector<double> ratio_all_, ratio_top_, ratio_rest_, realloc_, cum_realloc_;
};

double ponzi_volume_ratio(const MarketPanel& panel, const PonziSeries& ponzi, Index t, std::span<const Index> funds);
double wealth_reallocation(const MarketPanel& panel, const PonziSeries& ponzi, Index t);

enum class SortKey {
    Flow,               // f_t, split on I_{t-1}
    FlowOverLiquidity,  // F_t / V_{t-1} = f_t S_{t-1}, split on C_{t-1}
};

struct SortOptions {
    SortKey key = SortKey::Flow;
    int buckets = 10;
    double split_top_share = 0.10;
    int min_funds = 10;
};

struct SortCell {
    double raw = kMissing;
    double excess = kMissing;    // minus the market return
    double adjusted = kMissing;  // minus beta_i times the market return
    Index count = 0;
};

struct SortTable {
    std::vector<SortCell> high;  // per bucket, top split share
    std::vector<SortCell> rest;
    Index dates_used = 0;
    Index dates_skipped = 0;
};

SortTable flow_decile_sort(const MarketPanel& panel, const LiquidityTable& table, const SortOptions& options = {});

// Spearman rank correlation of a sequence with its index.
double rank_trend(std::span<const double> values);

struct BubbleOptions {
    double runup_threshold = 0.5;
    int window = 504;
    double top_share = 0.10;
    int horizon = 252;
    bool full_history_ponzi = false;  // rank on cumulative f^P over all history up to the event
    bool balanced = false;
};

struct RunupEvent {
    Index fund = 0;
    Index day = 0;
    double excess_runup = 0.0;
    double cumulative_ponzi = 0.0;
    bool bubble = false;
    double post_return = kMissing;  // cumulative market-adjusted return over the horizon
};

struct BubbleResult {
    std::vector<RunupEvent> events;
    // Mean cumulative market-adjusted return per offset -window..horizon
    // relative to the event day.
    std::vector<int> offsets;
    std::vector<double> runup_path;
    std::vector<double> bubble_path;
    double runup_post = kMissing;
    double bubble_post = kMissing;
};

BubbleResult runup_and_bubble(const MarketPanel& panel, const PonziSeries& ponzi, const BubbleOptions& options = {});

struct VarianceOptions {
    int horizon = 1;          // days per aggregation block
    double theta = 0.78;
    bool total_impact = false;  // use R^I,Total instead of own impact
    int size_groups = 5;
    double concentrated_share = 0.10;
};

struct FundVarianceShare {
    Index fund = 0;
    double share = kMissing;
    double mean_size = kMissing;
    double mean_conc = kMissing;
    int size_group = -1;
    bool concentrated = false;
};

struct VarianceDecomposition {
    std::vector<FundVarianceShare> funds;
    std::vector<double> concentrated_cells;  // per size group, mean share
    std::vector<double> other_cells;
};

VarianceDecomposition variance_decomposition(const MarketPanel& panel, const LiquidityTable& table, const ImpactSeries& impact,
                                             const VarianceOptions& options = {});

}  // namespace flowlab
