#pragma once

#include "flowlab/impact.hpp"
#include "flowlab/panel.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace flowlab {

enum class ChaseMode {
    Observed,     // flows chase observed fund returns (impact included)
    Fundamental,  // flows chase the fundamental part only
    None,
};

struct SimConfig {
    // Dimensions
    int n_funds = 100;
    int n_securities = 100;
    int n_days = 500;
    std::uint64_t seed = 42;
    std::string start_date = "2020-01-01";

    // Impact truth. With decay on, theta is theta_0.
    double theta = 0.78;
    double eta = 0.5;
    bool decay = false;
    double theta1 = -0.087;
    double lambda_theta = 0.323;
    int impact_lags = 40;

    // Chasing truth: f_{t+1} = beta sum_s w_s R_{t-s} + noise, w_s normalised exp(-lambda_beta s), s = 0..L.
    ChaseMode chase = ChaseMode::None;
    double beta = 0.0;
    double lambda_beta = 0.05;
    int chase_lags = 100;
    double flow_noise = 0.01;  // daily sd of the noise flow
    double flow_mean = 0.0;
    double flow_reversion = 0.0;  // adds -k log(S_{t-1} / S_0) to the non-chasing flow

    // Fundamentals
    int factors = 1;
    double factor_vol = 0.008;
    double loading_mean = 1.0;
    double loading_sd = 0.3;
    double vol_median = 0.02;
    double vol_dispersion = 0.3;  // log sd
    double min_idio_share = 0.25; // idiosyncratic vol never below this share of total

    // Liquidity
    double volume_median = 2e7;
    double volume_dispersion = 1.2;
    double volume_noise = 0.0;    // daily log-volume noise; 0 keeps turnover constant
    double turnover = 0.005;      // V / market cap
    double max_ownership_days = 5.0;  // funds jointly hold at most this many days of volume; 0 disables

    // Funds and holdings
    double aum_median = 5e7;
    double aum_dispersion = 1.0;
    int holdings_min = 3;
    int holdings_max = 8;
    double conc_min = 0.0;        // weights proportional to V~^(1 - c) times noise
    double conc_max = 1.5;
    double weight_noise = 0.5;
    double active_share = 0.3;
    // Niche funds hold only the least liquid niche_universe share of securities; the rest never do.
    double niche_share = 0.0;
    double niche_universe = 0.3;
    int niche_holdings_min = 3;
    int niche_holdings_max = 8;
    double nav_start = 100.0;
    double price_start = 50.0;

    // Case-study fund (index 0): AUM multiplier, concentration and an inflow episode.
    bool case_fund = false;
    double case_aum_multiplier = 20.0;
    double case_conc = 1.5;
    int case_holdings = 10;
    double case_inflow = 0.02;
    int case_start = 100;
    int case_length = 60;

    ImpactParams impact_params() const;
    void validate() const;
};

SimConfig parse_sim_config(std::istream& in);
SimConfig read_sim_config(const std::string& path);
void write_sim_config(std::ostream& out, const SimConfig& config);
// Applies one `key = value` assignment; unknown keys throw ValidationError.
void set_sim_option(SimConfig& config, const std::string& key, const std::string& value);

struct TruthRow {
    double fundamental_return = kMissing;
    double impact_return = kMissing;
    double flow_chasing = kMissing;
    double flow_noise = kMissing;
};

struct SimTruth {
    Index n_days = 0;
    std::vector<TruthRow> rows;  // [fund][day]
    const TruthRow& at(Index f, Index t) const { return rows[f * n_days + t]; }
};

// Dense simulator output; rows are produced on demand for CSV and panels.
struct SimOutput {
    SimConfig config;
    std::vector<Date> calendar;
    std::vector<std::string> security_ids;
    std::vector<std::string> fund_ids;
    // [security][day]
    std::vector<double> sec_ret, sec_close, sec_volume, sec_market_cap, sec_shares;
    // [fund][day]
    std::vector<double> nav, fund_shares;
    std::vector<char> active;                    // per fund
    std::vector<std::vector<Index>> members;     // per fund, ascending security index
    std::vector<std::vector<double>> positions;  // per fund, [member][day]
    SimTruth truth;

    Index n_days() const { return static_cast<Index>(calendar.size()); }
    MarketPanel panel(const PanelWindows& windows = {}) const;
};

SimOutput generate(const SimConfig& config);

}  // namespace flowlab
