#include "flowlab/panel.hpp"
#include "flowlab/error.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace flowlab {

std::optional<Index> MarketPanel::find_security(const std::string& id) const {
    auto it = security_index_.find(id);
    if (it == security_index_.end()) return std::nullopt;
    return it->second;
}

std::optional<Index> MarketPanel::find_fund(const std::string& id) const {
    auto it = fund_index_.find(id);
    if (it == fund_index_.end()) return std::nullopt;
    return it->second;
}

std::optional<Index> MarketPanel::find_date(Date d) const {
    auto it = std::lower_bound(dates_.begin(), dates_.end(), d);
    if (it == dates_.end() || *it != d) return std::nullopt;
    return static_cast<Index>(it - dates_.begin());
}

std::span<const Position> MarketPanel::holdings(Index f, Index t) const {
    const std::size_t k = static_cast<std::size_t>(f * n_days() + t);
    return {positions_.data() + offsets_[k], offsets_[k + 1] - offsets_[k]};
}

std::optional<double> MarketPanel::weight(Index f, Index s, Index t) const {
    auto h = holdings(f, t);
    auto it = std::lower_bound(h.begin(), h.end(), s, [](const Position& p, Index v) { return p.security < v; });
    if (it == h.end() || it->security != s) return std::nullopt;
    return it->weight;
}

double trailing_std(std::span<const double> window, int min_obs) {
    double sum = 0.0;
    int n = 0;
    for (double x : window)
        if (!is_missing(x)) {
            sum += x;
            ++n;
        }
    if (n < min_obs || n < 2) return kMissing;
    const double mean = sum / n;
    double sumsq = 0.0;
    for (double x : window)
        if (!is_missing(x)) sumsq += (x - mean) * (x - mean);
    return std::sqrt(sumsq / (n - 1));
}

double trailing_mean(std::span<const double> window, int min_obs) {
    double sum = 0.0;
    int n = 0;
    for (double x : window)
        if (!is_missing(x)) {
            sum += x;
            ++n;
        }
    if (n < min_obs || n == 0) return kMissing;
    return sum / n;
}

PanelBuilder::PanelBuilder(std::vector<Date> calendar) : calendar_(std::move(calendar)) {}

void PanelBuilder::add(SecurityRow row) { securities_.push_back(std::move(row)); }
void PanelBuilder::add(FundRow row) { funds_.push_back(std::move(row)); }
std::uint32_t PanelBuilder::intern(std::unordered_map<std::string, std::uint32_t>& codes, std::vector<std::string>& names,
                                   const std::string& id) {
    auto [it, inserted] = codes.try_emplace(id, static_cast<std::uint32_t>(names.size()));
    if (inserted) names.push_back(id);
    return it->second;
}

void PanelBuilder::add(const HoldingRow& row) {
    holdings_.push_back({row.date, intern(holding_fund_codes_, holding_funds_, row.fund_id),
                         intern(holding_security_codes_, holding_securities_, row.security_id), row.dollar_position});
}

namespace {

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

void derive_security_windows(MarketPanel& panel, std::vector<SecurityDay>& table, const PanelWindows& w) {
    const Index T = panel.n_days();
    for (Index s = 0; s < panel.n_securities(); ++s) {
        SecurityDay* row = table.data() + s * T;
        std::vector<double> rets(static_cast<std::size_t>(T)), volumes(static_cast<std::size_t>(T));
        for (Index t = 0; t < T; ++t) {
            rets[t] = row[t].present ? row[t].ret : kMissing;
            volumes[t] = row[t].present ? row[t].volume_usd : kMissing;
        }
        for (Index t = 0; t < T; ++t) {
            if (!row[t].present) continue;

            const Index vlo = std::max<Index>(0, t - w.volatility_window + 1);
            row[t].volatility = trailing_std(std::span<const double>(rets.data() + vlo, static_cast<std::size_t>(t - vlo + 1)),
                                             w.volatility_min_obs);
            const Index dlo = std::max<Index>(0, t - w.volume_window + 1);
            row[t].dollar_volume = trailing_mean(
                std::span<const double>(volumes.data() + dlo, static_cast<std::size_t>(t - dlo + 1)), w.volume_min_obs);
            if (t + 1 >= w.momentum_window) {
                double growth = 1.0;
                bool complete = true;
                for (Index u = t - w.momentum_window + 1; u <= t && complete; ++u) {
                    if (!row[u].present || is_missing(row[u].ret)) complete = false;
                    else growth *= 1.0 + row[u].ret;
                }
                if (complete) row[t].momentum = growth - 1.0;
            }
        }
    }
}

}  // namespace

MarketPanel PanelBuilder::build(const PanelWindows& windows) && {
    MarketPanel panel;
    panel.windows_ = windows;

    // Date axis.
    std::vector<Date> dates = calendar_;
    if (dates.empty()) {
        for (const auto& r : securities_) dates.push_back(r.date);
        for (const auto& r : funds_) dates.push_back(r.date);
    }
    std::sort(dates.begin(), dates.end());
    dates.erase(std::unique(dates.begin(), dates.end()), dates.end());
    if (dates.empty()) throw ValidationError("panel has no dates");
    panel.dates_ = std::move(dates);
    auto date_index = [&](Date d, const char* what) -> Index {
        auto idx = panel.find_date(d);
        if (!idx) throw ValidationError(std::string(what) + " row dated " + format_date(d) + " is not on the business-day calendar");
        return *idx;
    };

    {
        std::vector<std::string> ids;
        ids.reserve(securities_.size());
        for (const auto& r : securities_) ids.push_back(r.security_id);
        panel.security_ids_ = sorted_unique(std::move(ids));
        for (std::size_t i = 0; i < panel.security_ids_.size(); ++i) panel.security_index_[panel.security_ids_[i]] = static_cast<Index>(i);
    }
    {
        std::vector<std::string> ids;
        ids.reserve(funds_.size());
        for (const auto& r : funds_) ids.push_back(r.fund_id);
        panel.fund_ids_ = sorted_unique(std::move(ids));
        for (std::size_t i = 0; i < panel.fund_ids_.size(); ++i) panel.fund_index_[panel.fund_ids_[i]] = static_cast<Index>(i);
    }

    const Index T = panel.n_days();
    const Index S = panel.n_securities();
    const Index F = panel.n_funds();

    std::vector<SecurityDay> sec(static_cast<std::size_t>(S * T));
    for (const auto& r : securities_) {
        const Index s = panel.security_index_.at(r.security_id);
        const Index t = date_index(r.date, "securities");
        SecurityDay& d = sec[s * T + t];
        if (d.present) throw ValidationError("duplicate security row " + r.security_id + " on " + format_date(r.date));
        if (!is_missing(r.ret) && r.ret <= -1.0)
            throw ValidationError("security " + r.security_id + " on " + format_date(r.date) + ": return must exceed -1");
        if (!is_missing(r.volume_usd) && r.volume_usd < 0.0)
            throw ValidationError("security " + r.security_id + " on " + format_date(r.date) + ": negative volume");
        if (!is_missing(r.market_cap) && r.market_cap <= 0.0)
            throw ValidationError("security " + r.security_id + " on " + format_date(r.date) + ": market cap must be positive");
        d.present = true;
        d.ret = r.ret;
        d.close = r.close;
        d.volume_usd = r.volume_usd;
        d.market_cap = r.market_cap;
        d.shares_outstanding = r.shares_outstanding;
    }
    securities_.clear();

    std::vector<FundDay> fund(static_cast<std::size_t>(F * T));
    std::size_t rejected_nav = 0;
    for (const auto& r : funds_) {
        const Index f = panel.fund_index_.at(r.fund_id);
        const Index t = date_index(r.date, "funds");
        FundDay& d = fund[f * T + t];
        if (d.present) throw ValidationError("duplicate fund row " + r.fund_id + " on " + format_date(r.date));
        if (is_missing(r.nav_price) || r.nav_price <= 0.0) {
            if (rejected_nav++ < 5)
                panel.diagnostics_.push_back("fund " + r.fund_id + " on " + format_date(r.date) + ": non-positive nav_price, row rejected");
            continue;
        }
        if (is_missing(r.shares_outstanding) || r.shares_outstanding < 0.0)
            throw ValidationError("fund " + r.fund_id + " on " + format_date(r.date) + ": shares_outstanding missing or negative");
        d.present = true;
        d.nav_price = r.nav_price;
        d.shares_outstanding = r.shares_outstanding;
        d.aum = r.nav_price * r.shares_outstanding;
        d.is_active = r.is_active;
    }
    if (rejected_nav > 5)
        panel.diagnostics_.push_back(std::to_string(rejected_nav) + " fund rows rejected for non-positive nav_price");
    funds_.clear();

    // Fund returns from consecutive NAVs.
    for (Index f = 0; f < F; ++f)
        for (Index t = 1; t < T; ++t) {
            FundDay& cur = fund[f * T + t];
            const FundDay& prev = fund[f * T + t - 1];
            if (cur.present && prev.present) cur.fund_return = cur.nav_price / prev.nav_price - 1.0;
        }

    // Holdings grouped per fund-day.
    std::vector<std::vector<Position>> grouped(static_cast<std::size_t>(F * T));
    std::size_t dropped_holdings = 0;
    std::vector<Index> fund_of(holding_funds_.size()), security_of(holding_securities_.size());
    for (std::size_t c = 0; c < holding_funds_.size(); ++c) {
        auto fi = panel.find_fund(holding_funds_[c]);
        if (!fi) throw ValidationError("holdings row references unknown fund '" + holding_funds_[c] + "'");
        fund_of[c] = *fi;
    }
    for (std::size_t c = 0; c < holding_securities_.size(); ++c) {
        auto si = panel.find_security(holding_securities_[c]);
        if (!si) throw ValidationError("holdings row references unknown security '" + holding_securities_[c] + "'");
        security_of[c] = *si;
    }
    for (const auto& r : holdings_) {
        const Index fi = fund_of[r.fund];
        const Index si = security_of[r.security];
        const Index t = date_index(r.date, "holdings");
        if (!sec[si * T + t].present)
            throw ValidationError("holdings row " + holding_funds_[r.fund] + "/" + holding_securities_[r.security] + " on " +
                                  format_date(r.date) + " has no matching security row");
        if (r.dollar_position < 0.0 || is_missing(r.dollar_position))
            throw ValidationError("holdings row " + holding_funds_[r.fund] + "/" + holding_securities_[r.security] + " on " +
                                  format_date(r.date) + ": dollar_position must be non-negative (long-only)");
        if (!fund[fi * T + t].present) {
            ++dropped_holdings;
            continue;
        }
        grouped[fi * T + t].push_back({si, r.dollar_position, 0.0});
    }
    std::vector<CompactHolding>().swap(holdings_);
    if (dropped_holdings > 0)
        panel.diagnostics_.push_back(std::to_string(dropped_holdings) + " holdings rows dropped: fund-day absent");

    std::size_t aum_mismatch = 0;
    for (Index f = 0; f < F; ++f) {
        Index last_reported = -1;
        for (Index t = 0; t < T; ++t) {
            auto& g = grouped[f * T + t];
            FundDay& fd = fund[f * T + t];
            if (!g.empty()) {
                std::sort(g.begin(), g.end(), [](const Position& a, const Position& b) { return a.security < b.security; });
                for (std::size_t k = 1; k < g.size(); ++k)
                    if (g[k].security == g[k - 1].security)
                        throw ValidationError("duplicate holdings row " + panel.fund_ids_[f] + "/" +
                                              panel.security_ids_[g[k].security] + " on " + format_date(panel.dates_[t]));
                double total = 0.0;
                for (const auto& p : g) total += p.dollar_position;
                if (total <= 0.0) {
                    g.clear();
                    continue;
                }
                for (auto& p : g) p.weight = p.dollar_position / total;
                if (std::abs(total - fd.aum) > 1e-6 * fd.aum) ++aum_mismatch;
                last_reported = t;
            } else if (fd.present && last_reported >= 0 && t - last_reported <= windows.max_forward_fill) {
                // Carry weights forward; dollar positions follow today's AUM.
                bool all_present = true;
                for (const auto& p : grouped[f * T + last_reported])
                    if (!sec[p.security * T + t].present) all_present = false;
                if (!all_present) continue;
                g = grouped[f * T + last_reported];
                for (auto& p : g) p.dollar_position = p.weight * fd.aum;
                fd.holdings_carried = true;
                // last_reported stays put so the fill window is measured from the real report.
            }
        }
    }
    if (aum_mismatch > 0)
        panel.diagnostics_.push_back(std::to_string(aum_mismatch) +
                                     " fund-days where summed dollar positions differ from nav*shares by more than 1e-6");

    panel.offsets_.assign(static_cast<std::size_t>(F * T + 1), 0);
    std::size_t total_positions = 0;
    for (const auto& g : grouped) total_positions += g.size();
    panel.positions_.reserve(total_positions);
    for (std::size_t k = 0; k < grouped.size(); ++k) {
        panel.offsets_[k] = panel.positions_.size();
        panel.positions_.insert(panel.positions_.end(), grouped[k].begin(), grouped[k].end());
        std::vector<Position>().swap(grouped[k]);
    }
    panel.offsets_.back() = panel.positions_.size();

    derive_security_windows(panel, sec, windows);
    panel.securities_ = std::move(sec);
    panel.funds_ = std::move(fund);
    return compute_flows(std::move(panel));
}

MarketPanel compute_flows(MarketPanel panel) {
    const Index T = panel.n_days();
    for (Index f = 0; f < panel.n_funds(); ++f) {
        FundDay* row = panel.funds_.data() + f * T;
        for (Index t = 0; t < T; ++t) {
            FundDay& cur = row[t];
            cur.flow_dollar = kMissing;
            cur.flow_rel = kMissing;
            cur.flow_rel_raw = kMissing;
            if (t == 0 || !cur.present || !row[t - 1].present) continue;
            const FundDay& prev = row[t - 1];
            cur.flow_dollar = (cur.shares_outstanding - prev.shares_outstanding) * prev.nav_price;
            if (prev.aum > 0.0) {
                cur.flow_rel = cur.flow_dollar / prev.aum;
                cur.flow_rel_raw = cur.flow_rel;
            }
        }
    }
    return panel;
}

std::optional<double> flow_driven_trade(Index fund, Index security, Index t, const MarketPanel& panel) {
    if (t < 1) return std::nullopt;
    const FundDay& fd = panel.fund(fund, t);
    if (!fd.present || is_missing(fd.flow_dollar)) return std::nullopt;
    auto w = panel.weight(fund, security, t - 1);
    if (!w) return std::nullopt;
    return *w * fd.flow_dollar;
}

double quantile(std::vector<double> values, double p) {
    if (values.empty()) return kMissing;
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

MarketPanel winsorize_flows(MarketPanel panel, double lower_pct, double upper_pct) {
    if (!(lower_pct >= 0.0 && lower_pct < upper_pct && upper_pct <= 1.0))
        throw ValidationError("winsorization requires 0 <= lower < upper <= 1");
    const Index T = panel.n_days();
    std::size_t skipped = 0;
    for (Index t = 0; t < T; ++t) {
        std::vector<double> xs;
        for (Index f = 0; f < panel.n_funds(); ++f) {
            const double x = panel.funds_[f * T + t].flow_rel_raw;
            if (!is_missing(x)) xs.push_back(x);
        }
        if (xs.empty()) continue;
        if (xs.size() < 20) {
            ++skipped;
            continue;
        }
        const double lo = quantile(xs, lower_pct);
        const double hi = quantile(std::move(xs), upper_pct);
        for (Index f = 0; f < panel.n_funds(); ++f) {
            FundDay& d = panel.funds_[f * T + t];
            if (!is_missing(d.flow_rel_raw)) d.flow_rel = std::clamp(d.flow_rel_raw, lo, hi);
        }
    }
    if (skipped > 0)
        panel.diagnostics_.push_back("winsorization skipped on " + std::to_string(skipped) + " dates with fewer than 20 funds");
    return panel;
}

}  // namespace flowlab
