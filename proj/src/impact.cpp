#include "flowlab/impact.hpp"
#include "flowlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

namespace flowlab {

double ImpactParams::coefficient(int s) const {
    if (s < 0 || s > max_lag) return 0.0;
    if (!decay) return s == 0 ? theta : 0.0;
    if (s == 0) return decay->theta0;
    return decay->theta1 * std::exp(-decay->lambda * (s - 1));
}

void ImpactParams::validate() const {
    if (!(theta >= 0.0)) throw ValidationError("theta must be non-negative");
    if (!(eta > 0.0 && eta <= 1.0)) throw ValidationError("eta must lie in (0, 1]");
    if (max_lag < 0) throw ValidationError("max lag must be non-negative");
    if (decay && !(decay->lambda > 0.0)) throw ValidationError("decay lambda must be positive");
}

double long_run_impact(const ImpactParams& params, LongRunForm form) {
    if (!params.decay) return params.theta;
    const DecayKernel& k = *params.decay;
    if (form == LongRunForm::PrintedContinuum) return k.theta0 - k.theta1 / k.lambda;
    return k.theta0 + k.theta1 / (1.0 - std::exp(-k.lambda));
}

double cumulative_kernel(const ImpactParams& params, int lags) {
    double sum = 0.0;
    for (int s = 0; s <= lags; ++s) sum += params.coefficient(s);
    return sum;
}

double signed_power(double x, double eta) {
    if (x == 0.0) return 0.0;
    return std::copysign(std::pow(std::abs(x), eta), x);
}

double price_impact(double trade, double volume, double sigma, const ImpactParams& params) {
    if (!(volume > 0.0)) throw ValidationError("price impact needs V > 0");
    if (!(sigma > 0.0)) throw ValidationError("price impact needs sigma > 0");
    return params.theta * sigma * signed_power(trade / volume, params.eta);
}

double self_inflated_return(double flow_rel, double fund_illiq_prev, const ImpactParams& params) {
    return params.theta * signed_power(flow_rel, params.eta) * fund_illiq_prev;
}

double cross_fund_illiquidity(Index i, Index j, Index t, const MarketPanel& panel, const LiquidityTable& table) {
    auto hi = panel.holdings(i, t);
    auto pi = table.positions(i, t);
    auto hj = panel.holdings(j, t);
    // Both holdings lists are sorted by security: merge.
    double sum = 0.0;
    std::size_t a = 0, b = 0;
    while (a < hi.size() && b < hj.size()) {
        if (hi[a].security < hj[b].security) ++a;
        else if (hj[b].security < hi[a].security) ++b;
        else {
            sum += hj[b].weight * pi[a].illiq;
            ++a;
            ++b;
        }
    }
    return sum;
}

namespace {

void check_eta(const LiquidityTable& table, const ImpactParams& params) {
    if (std::abs(table.eta() - params.eta) > 1e-12)
        throw ValidationError("impact eta differs from the eta used for illiquidity measures");
}

}  // namespace

double total_impact(Index fund, Index t, const MarketPanel& panel, const LiquidityTable& table, const ImpactParams& params) {
    params.validate();
    check_eta(table, params);
    if (t < 1 || !table.fund(fund, t - 1).valid) return kMissing;
    double total = 0.0;
    for (int s = 0; s <= params.max_lag; ++s) {
        const Index tau = t - 1 - s;
        if (tau < 0) break;
        const double theta_s = params.coefficient(s);
        if (theta_s == 0.0) continue;
        if (!table.fund(fund, tau).valid) continue;
        double inner = 0.0;
        for (Index j = 0; j < panel.n_funds(); ++j) {
            if (!table.fund(j, tau).valid) continue;
            const double f = panel.fund(j, tau + 1).flow_rel;
            if (is_missing(f)) continue;
            inner += cross_fund_illiquidity(j, fund, tau, panel, table) * signed_power(f, params.eta);
        }
        total += theta_s * inner;
    }
    return total;
}

ImpactSeries::ImpactSeries(const MarketPanel& panel, const LiquidityTable& table, const ImpactParams& params)
    : n_days_(panel.n_days()) {
    params.validate();
    check_eta(table, params);
    const Index T = panel.n_days();
    const Index N = panel.n_securities();
    const Index F = panel.n_funds();
    self_.assign(static_cast<std::size_t>(F * T), kMissing);
    total_.assign(static_cast<std::size_t>(F * T), kMissing);

    // exposure[i][tau] = sum_n w_{i,n,tau} U_{n,tau},  U_{n,tau} = sum_j I_{j,n,tau} sp(f_{j,tau+1})
    std::vector<double> exposure(static_cast<std::size_t>(F * T), kMissing);
    std::vector<double> unit(static_cast<std::size_t>(N));
    for (Index tau = 0; tau + 1 < T; ++tau) {
        std::fill(unit.begin(), unit.end(), 0.0);
        for (Index j = 0; j < F; ++j) {
            if (!table.fund(j, tau).valid) continue;
            const double f = panel.fund(j, tau + 1).flow_rel;
            if (is_missing(f)) continue;
            const double sp = signed_power(f, params.eta);
            auto h = panel.holdings(j, tau);
            auto pm = table.positions(j, tau);
            for (std::size_t k = 0; k < h.size(); ++k) unit[h[k].security] += pm[k].illiq * sp;
        }
        for (Index i = 0; i < F; ++i) {
            if (!table.fund(i, tau).valid) continue;
            double g = 0.0;
            for (const auto& p : panel.holdings(i, tau)) g += p.weight * unit[p.security];
            exposure[i * T + tau] = g;
        }
    }

    const double theta0 = params.coefficient(0);
    for (Index i = 0; i < F; ++i)
        for (Index t = 1; t < T; ++t) {
            const FundMeasures& prev = table.fund(i, t - 1);
            if (!prev.valid) continue;
            const double f = panel.fund(i, t).flow_rel;
            if (!is_missing(f)) self_[i * T + t] = theta0 * signed_power(f, params.eta) * prev.fund_illiq;
            double total = 0.0;
            for (int s = 0; s <= params.max_lag; ++s) {
                const Index tau = t - 1 - s;
                if (tau < 0) break;
                const double g = exposure[i * T + tau];
                if (is_missing(g)) continue;
                total += params.coefficient(s) * g;
            }
            total_[i * T + t] = total;
        }
}

AitSeries::AitSeries(const MarketPanel& panel, const LiquidityTable& table, std::span<const CreationBasket> overrides)
    : n_days_(panel.n_days()) {
    const Index T = panel.n_days();
    const Index N = panel.n_securities();
    ait_.assign(static_cast<std::size_t>(N * T), kMissing);
    ait_hat_.assign(static_cast<std::size_t>(N * T), kMissing);

    std::map<std::tuple<Index, Index, Index>, double> basket;
    for (const auto& b : overrides) basket[{b.fund, b.security, b.day}] = b.dollars_per_share;
    auto basket_for = [&](Index f, Index s, Index day, double pro_rata) {
        if (basket.empty()) return pro_rata;
        auto it = basket.find({f, s, day});
        return it == basket.end() ? pro_rata : it->second;
    };

    std::vector<double> net(static_cast<std::size_t>(N)), gross(static_cast<std::size_t>(N));
    for (Index t = 1; t < T; ++t) {
        std::fill(net.begin(), net.end(), 0.0);
        std::fill(gross.begin(), gross.end(), 0.0);
        for (Index f = 0; f < panel.n_funds(); ++f) {
            const FundDay& cur = panel.fund(f, t);
            const FundDay& prev = panel.fund(f, t - 1);
            if (!cur.present || !prev.present || !(prev.shares_outstanding > 0.0)) continue;
            const double d_shares = cur.shares_outstanding - prev.shares_outstanding;
            for (const auto& p : panel.holdings(f, t - 1)) {
                const double q = basket_for(f, p.security, t - 1, p.weight * prev.aum / prev.shares_outstanding);
                net[p.security] += d_shares * q;
                gross[p.security] += std::abs(d_shares) * q;
            }
        }
        for (Index s = 0; s < N; ++s) {
            const SecurityDay& prev = panel.security(s, t - 1);
            if (!prev.present || !panel.security(s, t).present) continue;
            if (!is_missing(prev.market_cap) && prev.market_cap > 0.0) ait_[s * T + t] = net[s] / prev.market_cap;
            const double sigma = table.floored_volatility(s, t - 1);
            const double volume = prev.dollar_volume;
            if (!is_missing(sigma) && !is_missing(volume) && volume > 0.0) {
                const double mag = sigma * std::sqrt(gross[s] / volume);
                ait_hat_[s * T + t] = net[s] == 0.0 ? 0.0 : std::copysign(mag, net[s]);
            }
        }
    }
}

}  // namespace flowlab
