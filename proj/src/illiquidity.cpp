#include "flowlab/illiquidity.hpp"
#include "flowlab/error.hpp"

#include <algorithm>
#include <cmath>

namespace flowlab {

LiquiditySpec LiquiditySpec::legacy() {
    LiquiditySpec s;
    s.eta = 1.0;
    s.supply = Supply::MarketCap;
    s.volatility_prefactor = false;
    return s;
}

void LiquiditySpec::validate() const {
    if (!(eta > 0.0 && eta <= 1.0)) throw ValidationError("eta must lie in (0, 1]");
    if (!(volatility_floor > 0.0)) throw ValidationError("volatility floor must be positive");
    if (!(volume_floor_quantile >= 0.0 && volume_floor_quantile < 1.0))
        throw ValidationError("volume floor quantile must lie in [0, 1)");
}

double effective_liquidity(double volume, double sigma, double eta) {
    if (!(sigma > 0.0)) throw ValidationError("effective liquidity needs sigma > 0 (apply the volatility floor first)");
    return volume * std::pow(sigma, -1.0 / eta);
}

double position_illiquidity(double weight, double aum, double volume, double sigma, double eta) {
    if (!(volume > 0.0)) throw ValidationError("position illiquidity needs V > 0 (apply the liquidity floor first)");
    return sigma * std::pow(weight * aum / volume, eta);
}

double position_concentration(double weight, double liquidity_weight, double eta) {
    if (!(liquidity_weight > 0.0)) throw ValidationError("liquidity weight is zero for a held security");
    return std::pow(weight / liquidity_weight, eta);
}

double fund_size(double aum, double sum_effective_liquidity, double eta) {
    if (!(sum_effective_liquidity > 0.0)) throw ValidationError("fund universe has no effective liquidity");
    return std::pow(aum / sum_effective_liquidity, eta);
}

namespace {

struct DayInputs {
    std::vector<double> supply;  // per security, floored, NaN when unusable
    std::vector<double> sigma;
};

DayInputs day_inputs(const MarketPanel& panel, Index t, const LiquiditySpec& spec) {
    const Index S = panel.n_securities();
    DayInputs in{std::vector<double>(S, kMissing), std::vector<double>(S, kMissing)};
    double volume_floor = 0.0;
    if (spec.supply == Supply::DollarVolume && spec.volume_floor_quantile > 0.0) {
        std::vector<double> vs;
        for (Index s = 0; s < S; ++s) {
            const double v = panel.security(s, t).dollar_volume;
            if (panel.security(s, t).present && !is_missing(v)) vs.push_back(v);
        }
        if (!vs.empty()) volume_floor = quantile(std::move(vs), spec.volume_floor_quantile);
    }
    for (Index s = 0; s < S; ++s) {
        const SecurityDay& d = panel.security(s, t);
        if (!d.present) continue;
        if (!is_missing(d.volatility)) in.sigma[s] = std::max(d.volatility, spec.volatility_floor);
        const double raw = spec.supply == Supply::DollarVolume ? d.dollar_volume : d.market_cap;
        if (!is_missing(raw)) {
            const double v = spec.supply == Supply::DollarVolume ? std::max(raw, volume_floor) : raw;
            if (v > 0.0) in.supply[s] = v;
        }
    }
    return in;
}

// Computes the fund-day measures into `out` (fund) and `pos` (one per holding).
// Returns false when a held security lacks liquidity inputs.
bool measure_fund_day(std::span<const Position> holdings, double aum, const DayInputs& in, const LiquiditySpec& spec,
                      FundMeasures& out, std::span<PositionMeasures> pos) {
    out = FundMeasures{};
    if (holdings.empty() || !(aum > 0.0)) return false;
    const double eta = spec.eta;
    std::vector<double> eff(holdings.size());
    double sum_eff = 0.0;
    for (std::size_t k = 0; k < holdings.size(); ++k) {
        const Index s = holdings[k].security;
        const double supply = in.supply[s];
        const double sigma = in.sigma[s];
        if (is_missing(supply) || (spec.volatility_prefactor && is_missing(sigma))) return false;
        eff[k] = spec.volatility_prefactor ? effective_liquidity(supply, sigma, eta) : supply;
        sum_eff += eff[k];
    }
    const double size_ratio = aum / sum_eff;
    const double size = fund_size(aum, sum_eff, eta);
    double illiq = 0.0, conc = 0.0;
    for (std::size_t k = 0; k < holdings.size(); ++k) {
        const double w = holdings[k].weight;
        const double c = position_concentration(w, eff[k] / sum_eff, eta);
        const double i_n = c * size;
        const Index s = holdings[k].security;
        const double prefactor = spec.volatility_prefactor ? in.sigma[s] : 1.0;
        const double direct = prefactor * std::pow(w * aum / in.supply[s], eta);
        pos[k].conc = c;
        pos[k].illiq = i_n;
        pos[k].route_gap = direct > 0.0 ? std::abs(i_n - direct) / direct : std::abs(i_n - direct);
        illiq += w * i_n;
        conc += w * c;
    }
    if (spec.aggregation == FundAggregation::PowerMean) {
        out.fund_illiq = std::pow(illiq, 1.0 / eta);
        out.fund_conc = std::pow(conc, 1.0 / eta);
        out.fund_size = size_ratio;
    } else {
        out.fund_illiq = illiq;
        out.fund_conc = conc;
        out.fund_size = size;
    }
    out.size_ratio = size_ratio;
    out.valid = true;
    return true;
}

}  // namespace

LiquidityTable::LiquidityTable(const MarketPanel& panel, const LiquiditySpec& spec) : spec_(spec), n_days_(panel.n_days()) {
    spec.validate();
    const Index T = panel.n_days();
    const Index S = panel.n_securities();
    funds_.assign(static_cast<std::size_t>(panel.n_funds() * T), FundMeasures{});
    positions_.assign(panel.n_positions(), PositionMeasures{});
    supply_.assign(static_cast<std::size_t>(S * T), kMissing);
    sigma_.assign(static_cast<std::size_t>(S * T), kMissing);
    offsets_.resize(static_cast<std::size_t>(panel.n_funds() * T + 1));
    for (Index f = 0; f < panel.n_funds(); ++f)
        for (Index t = 0; t < T; ++t) offsets_[f * T + t] = panel.holdings_offset(f, t);
    offsets_.back() = panel.n_positions();

    std::size_t excluded = 0;
    for (Index t = 0; t < T; ++t) {
        const DayInputs in = day_inputs(panel, t, spec);
        for (Index s = 0; s < S; ++s) {
            supply_[s * T + t] = in.supply[s];
            sigma_[s * T + t] = in.sigma[s];
        }
        for (Index f = 0; f < panel.n_funds(); ++f) {
            const FundDay& fd = panel.fund(f, t);
            auto h = panel.holdings(f, t);
            if (!fd.present || h.empty()) continue;
            std::span<PositionMeasures> pos(positions_.data() + panel.holdings_offset(f, t), h.size());
            if (!measure_fund_day(h, fd.aum, in, spec, funds_[f * T + t], pos)) ++excluded;
        }
    }
    if (excluded > 0)
        diagnostics_.push_back(std::to_string(excluded) + " fund-days excluded: held security without volatility or liquidity");
}

std::span<const PositionMeasures> LiquidityTable::positions(Index f, Index t) const {
    const std::size_t k = static_cast<std::size_t>(f * n_days_ + t);
    return {positions_.data() + offsets_[k], offsets_[k + 1] - offsets_[k]};
}

FundMeasures fund_measures(Index fund, Index t, const MarketPanel& panel, const LiquiditySpec& spec) {
    spec.validate();
    const FundDay& fd = panel.fund(fund, t);
    auto h = panel.holdings(fund, t);
    FundMeasures out;
    if (!fd.present || h.empty()) return out;
    std::vector<PositionMeasures> pos(h.size());
    measure_fund_day(h, fd.aum, day_inputs(panel, t, spec), spec, out, pos);
    return out;
}

}  // namespace flowlab
