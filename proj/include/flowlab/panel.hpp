#pragma once

#include "flowlab/calendar.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace flowlab {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double x) { return std::isnan(x); }

struct SecurityDay {
    double ret = kMissing;                 // simple daily return
    double close = kMissing;
    double volume_usd = kMissing;          // same-day dollar volume as ingested
    double dollar_volume = kMissing;       // trailing mean of volume_usd
    double volatility = kMissing;          // trailing std of ret
    double momentum = kMissing;            // trailing compounded return
    double market_cap = kMissing;
    double shares_outstanding = kMissing;
    bool present = false;
};

struct FundDay {
    double aum = kMissing;                 // nav_price * shares_outstanding
    double nav_price = kMissing;
    double shares_outstanding = kMissing;
    double fund_return = kMissing;
    double flow_dollar = kMissing;         // F_t = (S_t - S_{t-1}) * P_{t-1}
    double flow_rel = kMissing;            // f_t = F_t / A_{t-1}, possibly winsorized
    double flow_rel_raw = kMissing;        // f_t before winsorization
    bool is_active = false;
    bool present = false;
    bool holdings_carried = false;         // weights forward-filled from an earlier day
};

struct Position {
    Index security = 0;
    double dollar_position = 0.0;
    double weight = 0.0;
};

// Raw rows as they arrive from CSV or the simulator.
struct SecurityRow {
    Date date;
    std::string security_id;
    double ret = kMissing;
    double close = kMissing;
    double volume_usd = kMissing;
    double market_cap = kMissing;
    double shares_outstanding = kMissing;
};

struct FundRow {
    Date date;
    std::string fund_id;
    double nav_price = kMissing;
    double shares_outstanding = kMissing;
    bool is_active = false;
};

struct HoldingRow {
    Date date;
    std::string fund_id;
    std::string security_id;
    double dollar_position = 0.0;
};

struct PanelWindows {
    int volatility_window = 60;
    int volatility_min_obs = 30;
    int volume_window = 20;
    int volume_min_obs = 10;
    int momentum_window = 20;
    int max_forward_fill = 5;
};

// Aligned daily panel. Immutable once built; every analytic reads from here.
// Securities and funds are indexed in sorted-id order; holdings are stored per
// fund-day, sorted by security index.
class MarketPanel {
public:
    Index n_days() const { return static_cast<Index>(dates_.size()); }
    Index n_securities() const { return static_cast<Index>(security_ids_.size()); }
    Index n_funds() const { return static_cast<Index>(fund_ids_.size()); }

    std::span<const Date> dates() const { return dates_; }
    const std::vector<std::string>& security_ids() const { return security_ids_; }
    const std::vector<std::string>& fund_ids() const { return fund_ids_; }

    std::optional<Index> find_security(const std::string& id) const;
    std::optional<Index> find_fund(const std::string& id) const;
    std::optional<Index> find_date(Date d) const;

    const SecurityDay& security(Index s, Index t) const { return securities_[s * n_days() + t]; }
    const FundDay& fund(Index f, Index t) const { return funds_[f * n_days() + t]; }
    std::span<const Position> holdings(Index f, Index t) const;
    // Offset of the first position of (f, t) in the flattened holdings array.
    std::size_t holdings_offset(Index f, Index t) const { return offsets_[f * n_days() + t]; }
    std::size_t n_positions() const { return positions_.size(); }

    std::optional<double> weight(Index f, Index s, Index t) const;

    const std::vector<std::string>& diagnostics() const { return diagnostics_; }
    const PanelWindows& windows() const { return windows_; }

private:
    friend class PanelBuilder;
    friend MarketPanel compute_flows(MarketPanel panel);
    friend MarketPanel winsorize_flows(MarketPanel panel, double lower_pct, double upper_pct);

    std::vector<Date> dates_;
    std::vector<std::string> security_ids_;
    std::vector<std::string> fund_ids_;
    std::unordered_map<std::string, Index> security_index_;
    std::unordered_map<std::string, Index> fund_index_;
    std::vector<SecurityDay> securities_;  // [security][day]
    std::vector<FundDay> funds_;           // [fund][day]
    std::vector<std::size_t> offsets_;     // n_funds * n_days + 1
    std::vector<Position> positions_;
    std::vector<std::string> diagnostics_;
    PanelWindows windows_;
};

// Collects raw rows and assembles a validated MarketPanel.
class PanelBuilder {
public:
    // An empty calendar means "union of all security and fund dates".
    explicit PanelBuilder(std::vector<Date> calendar = {});

    void add(SecurityRow row);
    void add(FundRow row);
    void add(const HoldingRow& row);
    void reserve_holdings(std::size_t n) { holdings_.reserve(n); }

    // Validates references, derives weights, fund returns, trailing
    // liquidity/volatility and flows. Throws ValidationError.
    MarketPanel build(const PanelWindows& windows = {}) &&;

private:
    // Holdings are interned on arrival; panels carry millions of them.
    struct CompactHolding {
        Date date;
        std::uint32_t fund;
        std::uint32_t security;
        double dollar_position;
    };
    std::uint32_t intern(std::unordered_map<std::string, std::uint32_t>& codes, std::vector<std::string>& names,
                         const std::string& id);

    std::vector<Date> calendar_;
    std::vector<SecurityRow> securities_;
    std::vector<FundRow> funds_;
    std::vector<CompactHolding> holdings_;
    std::vector<std::string> holding_funds_, holding_securities_;
    std::unordered_map<std::string, std::uint32_t> holding_fund_codes_, holding_security_codes_;
};

// Fills flow_dollar / flow_rel / flow_rel_raw from consecutive
// (shares_outstanding, nav_price). The first day of each fund, and any day
// whose prior day is absent, keeps a missing flow. Idempotent.
MarketPanel compute_flows(MarketPanel panel);

// Q_{i,n,t} = w_{i,n,t-1} F_{i,t}. Empty when the fund did not hold the
// security on t-1 or the flow is absent.
std::optional<double> flow_driven_trade(Index fund, Index security, Index t, const MarketPanel& panel);

// Clamps flow_rel to per-date cross-sectional quantiles (linear interpolation
// between order statistics). Dates with fewer than 20 flows are left alone
// and noted in diagnostics. flow_rel_raw keeps the original values.
MarketPanel winsorize_flows(MarketPanel panel, double lower_pct, double upper_pct);

// Sample standard deviation / mean of the non-missing values; missing when
// fewer than min_obs values are present.
double trailing_std(std::span<const double> window, int min_obs);
double trailing_mean(std::span<const double> window, int min_obs);

// Quantile with linear interpolation between order statistics (type 7).
double quantile(std::vector<double> values, double p);

}  // namespace flowlab
