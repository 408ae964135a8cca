#include "flowlab/simulator.hpp"
#include "flowlab/analytics.hpp"
#include "flowlab/error.hpp"
#include "flowlab/illiquidity.hpp"
#include "flowlab/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

namespace flowlab {

ImpactParams SimConfig::impact_params() const {
    ImpactParams p;
    p.theta = theta;
    p.eta = eta;
    p.max_lag = impact_lags;
    if (decay) p.decay = DecayKernel{theta, theta1, lambda_theta};
    return p;
}

void SimConfig::validate() const {
    if (n_funds < 1 || n_securities < 1 || n_days < 2) throw ValidationError("sim: need at least one fund, one security and two days");
    if (holdings_min < 1 || holdings_max < holdings_min) throw ValidationError("sim: bad holdings range");
    if (holdings_min > n_securities) throw ValidationError("sim: holdings_min exceeds the number of securities");
    if (!(theta >= 0.0)) throw ValidationError("sim: theta must be non-negative");
    if (!(eta > 0.0 && eta <= 1.0)) throw ValidationError("sim: eta must lie in (0, 1]");
    if (decay && !(lambda_theta > 0.0)) throw ValidationError("sim: lambda_theta must be positive");
    if (impact_lags < 0 || chase_lags < 0) throw ValidationError("sim: lag counts must be non-negative");
    if (!(lambda_beta >= 0.0)) throw ValidationError("sim: lambda_beta must be non-negative");
    if (!(factor_vol > 0.0) || !(vol_median > 0.0) || !(flow_noise > 0.0))
        throw ValidationError("sim: all volatilities must be positive");
    if (!(flow_reversion >= 0.0 && flow_reversion < 1.0)) throw ValidationError("sim: flow_reversion must lie in [0, 1)");
    if (factors < 0) throw ValidationError("sim: factor count must be non-negative");
    if (!(volume_median > 0.0) || !(turnover > 0.0) || !(aum_median > 0.0)) throw ValidationError("sim: sizes must be positive");
    if (!(max_ownership_days >= 0.0)) throw ValidationError("sim: max_ownership_days must be non-negative");
    if (!(vol_dispersion >= 0.0 && volume_dispersion >= 0.0 && aum_dispersion >= 0.0 && weight_noise >= 0.0 && volume_noise >= 0.0))
        throw ValidationError("sim: dispersions must be non-negative");
    if (!(min_idio_share > 0.0 && min_idio_share <= 1.0)) throw ValidationError("sim: min_idio_share must lie in (0, 1]");
    if (!(active_share >= 0.0 && active_share <= 1.0)) throw ValidationError("sim: active_share must lie in [0, 1]");
    if (!(niche_share >= 0.0 && niche_share <= 1.0)) throw ValidationError("sim: niche_share must lie in [0, 1]");
    if (!(niche_universe > 0.0 && niche_universe < 1.0)) throw ValidationError("sim: niche_universe must lie in (0, 1)");
    if (niche_holdings_min < 1 || niche_holdings_max < niche_holdings_min) throw ValidationError("sim: bad niche holdings range");
    if (!(nav_start > 0.0 && price_start > 0.0)) throw ValidationError("sim: starting prices must be positive");
    // |f| >= 1 must stay below 1% probability: 2.576 noise sds plus the mean.
    if (std::abs(flow_mean) + 2.576 * flow_noise >= 1.0)
        throw ValidationError("sim: flow noise implies |f| >= 1 with probability above 1%");
    if (case_fund) {
        if (case_holdings < 1 || case_holdings > n_securities) throw ValidationError("sim: bad case_holdings");
        if (!(case_aum_multiplier > 0.0)) throw ValidationError("sim: case_aum_multiplier must be positive");
        if (std::abs(flow_mean + case_inflow) + 2.576 * flow_noise >= 1.0)
            throw ValidationError("sim: case inflow implies |f| >= 1 with probability above 1%");
    }
    parse_date(start_date);
}

// ---------------------------------------------------------------------------

namespace {

double to_double(const std::string& key, const std::string& v) {
    double x = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size()) throw ValidationError("sim config: " + key + " expects a number, got '" + v + "'");
    return x;
}

long long to_int(const std::string& key, const std::string& v) {
    long long x = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size()) throw ValidationError("sim config: " + key + " expects an integer, got '" + v + "'");
    return x;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ValidationError("sim config: " + key + " expects true/false, got '" + v + "'");
}

std::string chase_name(ChaseMode m) {
    switch (m) {
        case ChaseMode::Observed: return "observed";
        case ChaseMode::Fundamental: return "fundamental";
        case ChaseMode::None: return "none";
    }
    return "none";
}

struct Field {
    std::function<void(SimConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const SimConfig&)> get;
};

std::string fmt(double x) {
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

#define FL_DOUBLE(name) \
    {#name, {[](SimConfig& c, const std::string& k, const std::string& v) { c.name = to_double(k, v); }, \
             [](const SimConfig& c) { return fmt(c.name); }}}
#define FL_INT(name) \
    {#name, {[](SimConfig& c, const std::string& k, const std::string& v) { c.name = static_cast<int>(to_int(k, v)); }, \
             [](const SimConfig& c) { return std::to_string(c.name); }}}
#define FL_BOOL(name) \
    {#name, {[](SimConfig& c, const std::string& k, const std::string& v) { c.name = to_bool(k, v); }, \
             [](const SimConfig& c) { return std::string(c.name ? "true" : "false"); }}}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = {
        FL_INT(n_funds), FL_INT(n_securities), FL_INT(n_days),
        {"seed", {[](SimConfig& c, const std::string& k, const std::string& v) {
                      long long x = to_int(k, v);
                      c.seed = static_cast<std::uint64_t>(x);
                  },
                  [](const SimConfig& c) { return std::to_string(c.seed); }}},
        {"start_date", {[](SimConfig& c, const std::string&, const std::string& v) { c.start_date = v; },
                        [](const SimConfig& c) { return c.start_date; }}},
        FL_DOUBLE(theta), FL_DOUBLE(eta), FL_BOOL(decay), FL_DOUBLE(theta1), FL_DOUBLE(lambda_theta), FL_INT(impact_lags),
        {"chase", {[](SimConfig& c, const std::string& k, const std::string& v) {
                       if (v == "observed") c.chase = ChaseMode::Observed;
                       else if (v == "fundamental") c.chase = ChaseMode::Fundamental;
                       else if (v == "none") c.chase = ChaseMode::None;
                       else throw ValidationError("sim config: " + k + " expects observed|fundamental|none");
                   },
                   [](const SimConfig& c) { return chase_name(c.chase); }}},
        FL_DOUBLE(beta), FL_DOUBLE(lambda_beta), FL_INT(chase_lags), FL_DOUBLE(flow_noise), FL_DOUBLE(flow_mean), FL_DOUBLE(flow_reversion),
        FL_INT(factors), FL_DOUBLE(factor_vol), FL_DOUBLE(loading_mean), FL_DOUBLE(loading_sd), FL_DOUBLE(vol_median),
        FL_DOUBLE(vol_dispersion), FL_DOUBLE(min_idio_share), FL_DOUBLE(volume_median), FL_DOUBLE(volume_dispersion),
        FL_DOUBLE(volume_noise), FL_DOUBLE(turnover), FL_DOUBLE(max_ownership_days), FL_DOUBLE(aum_median), FL_DOUBLE(aum_dispersion), FL_INT(holdings_min),
        FL_INT(holdings_max), FL_DOUBLE(conc_min), FL_DOUBLE(conc_max), FL_DOUBLE(weight_noise), FL_DOUBLE(active_share), FL_DOUBLE(niche_share), FL_DOUBLE(niche_universe), FL_INT(niche_holdings_min), FL_INT(niche_holdings_max),
        FL_DOUBLE(nav_start), FL_DOUBLE(price_start), FL_BOOL(case_fund), FL_DOUBLE(case_aum_multiplier), FL_DOUBLE(case_conc),
        FL_INT(case_holdings), FL_DOUBLE(case_inflow), FL_INT(case_start), FL_INT(case_length),
    };
    return table;
}

#undef FL_DOUBLE
#undef FL_INT
#undef FL_BOOL

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

void set_sim_option(SimConfig& config, const std::string& key, const std::string& value) {
    auto it = fields().find(key);
    if (it == fields().end()) throw ValidationError("sim config: unknown key '" + key + "'");
    it->second.set(config, key, value);
}

SimConfig parse_sim_config(std::istream& in) {
    SimConfig c;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ValidationError("sim config line " + std::to_string(lineno) + ": expected key = value");
        set_sim_option(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    c.validate();
    return c;
}

SimConfig read_sim_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open sim config " + path);
    return parse_sim_config(in);
}

void write_sim_config(std::ostream& out, const SimConfig& config) {
    for (const auto& [key, field] : fields()) out << key << " = " << field.get(config) << "\n";
}

// ---------------------------------------------------------------------------

namespace {

std::string padded(char prefix, int i, int count) {
    int width = 1;
    for (int n = std::max(count - 1, 1); n >= 10; n /= 10) ++width;
    std::string digits = std::to_string(i);
    return std::string(1, prefix) + std::string(static_cast<std::size_t>(width) - digits.size(), '0') + digits;
}

}  // namespace

SimOutput generate(const SimConfig& cfg) {
    cfg.validate();
    const int N = cfg.n_securities;
    const int F = cfg.n_funds;
    const int T = cfg.n_days;
    const std::uint64_t seed = cfg.seed;
    const double eta = cfg.eta;
    const ImpactParams params = cfg.impact_params();
    const PanelWindows windows;
    const LiquiditySpec liq;

    SimOutput out;
    out.config = cfg;
    out.calendar = business_days(parse_date(cfg.start_date), static_cast<std::size_t>(T));
    for (int n = 0; n < N; ++n) out.security_ids.push_back(padded('S', n, N));
    for (int i = 0; i < F; ++i) out.fund_ids.push_back(padded('F', i, F));

    // Securities: volatility, volume, loadings.
    std::vector<double> sigma(N), volume(N), idio(N), shares(N);
    std::vector<std::vector<double>> loading(N, std::vector<double>(static_cast<std::size_t>(cfg.factors)));
    for (int n = 0; n < N; ++n) {
        Rng r(seed, "security", static_cast<std::uint64_t>(n));
        sigma[n] = r.lognormal(cfg.vol_median, cfg.vol_dispersion);
        volume[n] = r.lognormal(cfg.volume_median, cfg.volume_dispersion);
        double sys = 0.0;
        for (int k = 0; k < cfg.factors; ++k) {
            const double b = r.normal(k == 0 ? cfg.loading_mean : 0.0, cfg.loading_sd);
            loading[n][k] = b;
            sys += b * b * cfg.factor_vol * cfg.factor_vol;
        }
        const double floor_var = cfg.min_idio_share * cfg.min_idio_share * sigma[n] * sigma[n];
        idio[n] = std::sqrt(std::max(sigma[n] * sigma[n] - sys, floor_var));
        shares[n] = volume[n] / cfg.turnover / cfg.price_start;
    }
    std::vector<double> eff(N);
    for (int n = 0; n < N; ++n) eff[n] = volume[n] * std::pow(sigma[n], -1.0 / eta);

    // Funds: AUM, membership, weights.
    out.members.resize(F);
    out.positions.resize(F);
    out.active.resize(F);
    std::vector<double> aum0(F);
    std::vector<std::vector<double>> weight0(F);
    std::vector<Index> by_liq(N);
    std::iota(by_liq.begin(), by_liq.end(), Index{0});
    std::sort(by_liq.begin(), by_liq.end(), [&](Index a, Index b) { return eff[a] != eff[b] ? eff[a] < eff[b] : a < b; });
    const auto n_niche_universe =
        static_cast<std::ptrdiff_t>(std::clamp<long>(std::lround(cfg.niche_universe * N), 1L, static_cast<long>(std::max(N - 1, 1))));
    for (int i = 0; i < F; ++i) {
        Rng r(seed, "fund", static_cast<std::uint64_t>(i));
        aum0[i] = r.lognormal(cfg.aum_median, cfg.aum_dispersion);
        out.active[i] = r.uniform() < cfg.active_share ? 1 : 0;
        double c = r.uniform(cfg.conc_min, cfg.conc_max);
        const bool niche = cfg.niche_share > 0.0 && r.uniform() < cfg.niche_share;
        int h = niche ? cfg.niche_holdings_min +
                            static_cast<int>(r.below(static_cast<std::uint64_t>(cfg.niche_holdings_max - cfg.niche_holdings_min + 1)))
                      : cfg.holdings_min + static_cast<int>(r.below(static_cast<std::uint64_t>(cfg.holdings_max - cfg.holdings_min + 1)));
        std::vector<Index> pick;
        if (cfg.case_fund && i == 0) {
            aum0[i] *= cfg.case_aum_multiplier;
            c = cfg.case_conc;
            h = cfg.case_holdings;
            pick = by_liq;
        } else {
            // niche funds draw from the least liquid securities, the others from the rest
            if (cfg.niche_share <= 0.0) {
                pick.resize(static_cast<std::size_t>(N));
                std::iota(pick.begin(), pick.end(), Index{0});
            } else if (niche) {
                pick.assign(by_liq.begin(), by_liq.begin() + n_niche_universe);
            } else {
                pick.assign(by_liq.begin() + n_niche_universe, by_liq.end());
            }
            h = std::min<int>(h, static_cast<int>(pick.size()));
            const auto P = static_cast<std::uint64_t>(pick.size());
            for (int k = 0; k < h; ++k) {
                const auto j = static_cast<std::size_t>(k) + r.below(P - static_cast<std::uint64_t>(k));
                std::swap(pick[static_cast<std::size_t>(k)], pick[j]);
            }
        }
        pick.resize(static_cast<std::size_t>(h));
        std::sort(pick.begin(), pick.end());
        std::vector<double> w(pick.size());
        double total = 0.0;
        for (std::size_t k = 0; k < pick.size(); ++k) {
            w[k] = std::pow(eff[pick[k]], 1.0 - c) * std::exp(cfg.weight_noise * r.normal());
            total += w[k];
        }
        for (double& x : w) x /= total;
        out.members[i] = std::move(pick);
        weight0[i] = std::move(w);
    }

    // Total fund ownership is capped at a number of days of volume.
    if (cfg.max_ownership_days > 0.0) {
        std::vector<double> held(N, 0.0);
        for (int i = 0; i < F; ++i)
            for (std::size_t m = 0; m < out.members[i].size(); ++m) held[out.members[i][m]] += weight0[i][m] * aum0[i];
        for (int n = 0; n < N; ++n) {
            volume[n] = std::max(volume[n], held[n] / cfg.max_ownership_days);
            shares[n] = volume[n] / cfg.turnover / cfg.price_start;
        }
    }

    // State arrays.
    const auto ST = static_cast<std::size_t>(N) * static_cast<std::size_t>(T);
    const auto FT = static_cast<std::size_t>(F) * static_cast<std::size_t>(T);
    out.sec_ret.assign(ST, kMissing);
    out.sec_close.assign(ST, kMissing);
    out.sec_volume.assign(ST, kMissing);
    out.sec_market_cap.assign(ST, kMissing);
    out.sec_shares.assign(ST, kMissing);
    out.nav.assign(FT, kMissing);
    out.fund_shares.assign(FT, kMissing);
    out.truth.n_days = T;
    out.truth.rows.assign(FT, TruthRow{});
    for (int i = 0; i < F; ++i) out.positions[i].assign(out.members[i].size() * static_cast<std::size_t>(T), 0.0);

    std::vector<Rng> factor_rng, idio_rng, flow_rng, volume_rng;
    for (int k = 0; k < cfg.factors; ++k) factor_rng.emplace_back(seed, "factor", static_cast<std::uint64_t>(k));
    for (int n = 0; n < N; ++n) {
        idio_rng.emplace_back(seed, "idio", static_cast<std::uint64_t>(n));
        volume_rng.emplace_back(seed, "volume", static_cast<std::uint64_t>(n));
    }
    for (int i = 0; i < F; ++i) flow_rng.emplace_back(seed, "flow", static_cast<std::uint64_t>(i));

    const auto chase_w = exp_weights(cfg.lambda_beta, cfg.chase_lags);
    std::vector<double> theta_s(static_cast<std::size_t>(params.max_lag) + 1);
    for (int s = 0; s <= params.max_lag; ++s) theta_s[static_cast<std::size_t>(s)] = params.coefficient(s);

    // unit[n * T + tau]: sum_i sigma_{n,tau} sp(w_{i,n,tau} F_{i,tau+1} / V_{n,tau}), impact of trades made on tau+1.
    std::vector<double> unit(ST, 0.0);
    std::vector<double> fundamental(N), impact(N), factor(static_cast<std::size_t>(cfg.factors));
    std::vector<double> sig_meas(N), vol_meas(N);
    std::vector<double> fund_part_hist(FT, kMissing);  // chasing input in fundamental mode

    auto security_day_close = [&](int t) {
        for (int n = 0; n < N; ++n) {
            const std::size_t k = static_cast<std::size_t>(n) * T + t;
            out.sec_market_cap[k] = shares[n] * out.sec_close[k];
            out.sec_shares[k] = shares[n];
        }
    };

    // Day 0: fundamentals only, initial positions.
    for (int k = 0; k < cfg.factors; ++k) factor[k] = factor_rng[k].normal(0.0, cfg.factor_vol);
    for (int n = 0; n < N; ++n) {
        double x = idio_rng[n].normal(0.0, idio[n]);
        for (int k = 0; k < cfg.factors; ++k) x += loading[n][k] * factor[k];
        const std::size_t k0 = static_cast<std::size_t>(n) * T;
        out.sec_ret[k0] = x;
        out.sec_close[k0] = cfg.price_start;
        out.sec_volume[k0] = volume[n] * std::exp(cfg.volume_noise * volume_rng[n].normal());
    }
    security_day_close(0);
    for (int i = 0; i < F; ++i) {
        const std::size_t k0 = static_cast<std::size_t>(i) * T;
        out.nav[k0] = cfg.nav_start;
        out.fund_shares[k0] = aum0[i] / cfg.nav_start;
        for (std::size_t m = 0; m < out.members[i].size(); ++m) out.positions[i][m * T] = weight0[i][m] * aum0[i];
    }

    std::vector<double> flows(F);
    for (int t = 1; t < T; ++t) {
        const int tau = t - 1;
        // Measured sigma and V of day tau exactly as the measurement layer sees them.
        std::vector<double> vs;
        for (int n = 0; n < N; ++n) {
            const std::size_t base = static_cast<std::size_t>(n) * T;
            const int vlo = std::max(0, tau - windows.volatility_window + 1);
            const double sd = trailing_std(std::span<const double>(out.sec_ret.data() + base + vlo, static_cast<std::size_t>(tau - vlo + 1)),
                                           windows.volatility_min_obs);
            const int dlo = std::max(0, tau - windows.volume_window + 1);
            const double dv = trailing_mean(
                std::span<const double>(out.sec_volume.data() + base + dlo, static_cast<std::size_t>(tau - dlo + 1)), windows.volume_min_obs);
            sig_meas[n] = is_missing(sd) ? sigma[n] : std::max(sd, liq.volatility_floor);
            vol_meas[n] = is_missing(dv) ? kMissing : dv;
            if (!is_missing(dv)) vs.push_back(dv);
        }
        const double vfloor = vs.empty() ? 0.0 : quantile(std::move(vs), liq.volume_floor_quantile);
        for (int n = 0; n < N; ++n) vol_meas[n] = is_missing(vol_meas[n]) ? volume[n] : std::max(vol_meas[n], vfloor);

        // (1) Flows.
        for (int i = 0; i < F; ++i) {
            double chasing = 0.0;
            if (cfg.chase != ChaseMode::None && cfg.beta != 0.0) {
                for (int s = 0; s <= cfg.chase_lags; ++s) {
                    const int u = t - 1 - s;
                    if (u < 1) break;
                    const std::size_t k = static_cast<std::size_t>(i) * T + u;
                    const double x = cfg.chase == ChaseMode::Observed ? out.nav[k] / out.nav[k - 1] - 1.0 : fund_part_hist[k];
                    chasing += chase_w[static_cast<std::size_t>(s)] * x;
                }
                chasing *= cfg.beta;
            }
            double mean = cfg.flow_mean;
            // investors pull back toward the fund's initial size
            if (cfg.flow_reversion > 0.0) {
                const std::size_t k0 = static_cast<std::size_t>(i) * T;
                mean -= cfg.flow_reversion * std::log(out.fund_shares[k0 + t - 1] / out.fund_shares[k0]);
            }
            if (cfg.case_fund && i == 0 && t >= cfg.case_start && t < cfg.case_start + cfg.case_length) mean += cfg.case_inflow;
            const double noise = mean + flow_rng[i].normal(0.0, cfg.flow_noise);
            const double f = chasing + noise;
            if (!(f > -0.99)) throw ValidationError("sim: simulated flow at or below -99% for fund " + out.fund_ids[i]);
            flows[i] = f;
            TruthRow& tr = out.truth.rows[static_cast<std::size_t>(i) * T + t];
            tr.flow_chasing = chasing;
            tr.flow_noise = noise;
        }

        // (2) Flow-driven trades -> impact units for tau.
        for (int i = 0; i < F; ++i) {
            const std::size_t k = static_cast<std::size_t>(i) * T + tau;
            const double A = out.nav[k] * out.fund_shares[k];
            const double Fd = flows[i] * A;
            const auto& mem = out.members[i];
            double total = 0.0;
            for (std::size_t m = 0; m < mem.size(); ++m) total += out.positions[i][m * T + tau];
            for (std::size_t m = 0; m < mem.size(); ++m) {
                const Index n = mem[m];
                const double w = out.positions[i][m * T + tau] / total;
                unit[static_cast<std::size_t>(n) * T + tau] += sig_meas[n] * signed_power(w * Fd / vol_meas[n], eta);
            }
        }

        // (3) Security returns.
        for (int k = 0; k < cfg.factors; ++k) factor[k] = factor_rng[k].normal(0.0, cfg.factor_vol);
        for (int n = 0; n < N; ++n) {
            double x = idio_rng[n].normal(0.0, idio[n]);
            for (int k = 0; k < cfg.factors; ++k) x += loading[n][k] * factor[k];
            fundamental[n] = x;
            double imp = 0.0;
            const std::size_t base = static_cast<std::size_t>(n) * T;
            for (int s = 0; s <= params.max_lag; ++s) {
                const int u = tau - s;
                if (u < 0) break;
                imp += theta_s[static_cast<std::size_t>(s)] * unit[base + u];
            }
            impact[n] = imp;
            const double r = x + imp;
            if (!(r > -0.99)) throw ValidationError("sim: security return at or below -99% for " + out.security_ids[n]);
            out.sec_ret[base + t] = r;
            out.sec_close[base + t] = out.sec_close[base + t - 1] * (1.0 + r);
            // turnover is constant: dollar volume follows the price level
            out.sec_volume[base + t] = volume[n] * (out.sec_close[base + t] / cfg.price_start) * std::exp(cfg.volume_noise * volume_rng[n].normal());
        }
        security_day_close(t);

        // (4) Fund returns and (5) position updates.
        for (int i = 0; i < F; ++i) {
            const std::size_t k = static_cast<std::size_t>(i) * T + t;
            const auto& mem = out.members[i];
            auto& pos = out.positions[i];
            double total = 0.0;
            for (std::size_t m = 0; m < mem.size(); ++m) total += pos[m * T + tau];
            double R = 0.0, Ri = 0.0;
            for (std::size_t m = 0; m < mem.size(); ++m) {
                const double w = pos[m * T + tau] / total;
                const Index n = mem[m];
                R += w * out.sec_ret[static_cast<std::size_t>(n) * T + t];
                Ri += w * impact[n];
            }
            for (std::size_t m = 0; m < mem.size(); ++m) {
                const Index n = mem[m];
                pos[m * T + t] = pos[m * T + tau] * (1.0 + flows[i]) * (1.0 + out.sec_ret[static_cast<std::size_t>(n) * T + t]);
            }
            out.nav[k] = out.nav[k - 1] * (1.0 + R);
            out.fund_shares[k] = out.fund_shares[k - 1] * (1.0 + flows[i]);
            TruthRow& tr = out.truth.rows[k];
            tr.impact_return = Ri;
            tr.fundamental_return = R - Ri;
            fund_part_hist[k] = R - Ri;
        }
    }
    return out;
}

MarketPanel SimOutput::panel(const PanelWindows& windows) const {
    const Index T = n_days();
    PanelBuilder b(calendar);
    for (std::size_t n = 0; n < security_ids.size(); ++n)
        for (Index t = 0; t < T; ++t) {
            const std::size_t k = n * static_cast<std::size_t>(T) + static_cast<std::size_t>(t);
            b.add(SecurityRow{calendar[t], security_ids[n], sec_ret[k], sec_close[k], sec_volume[k], sec_market_cap[k], sec_shares[k]});
        }
    std::size_t n_pos = 0;
    for (const auto& m : members) n_pos += m.size() * static_cast<std::size_t>(T);
    b.reserve_holdings(n_pos);
    for (std::size_t i = 0; i < fund_ids.size(); ++i) {
        for (Index t = 0; t < T; ++t) {
            const std::size_t k = i * static_cast<std::size_t>(T) + static_cast<std::size_t>(t);
            b.add(FundRow{calendar[t], fund_ids[i], nav[k], fund_shares[k], active[i] != 0});
            for (std::size_t m = 0; m < members[i].size(); ++m)
                b.add(HoldingRow{calendar[t], fund_ids[i], security_ids[static_cast<std::size_t>(members[i][m])],
                                 positions[i][m * static_cast<std::size_t>(T) + static_cast<std::size_t>(t)]});
        }
    }
    return std::move(b).build(windows);
}

}  // namespace flowlab
