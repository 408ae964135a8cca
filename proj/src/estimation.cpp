#include "flowlab/estimation.hpp"
#include "flowlab/error.hpp"
#include "flowlab/impact.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace flowlab {

namespace {

std::vector<std::string> split_list(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void apply_sample(DesignSpec& spec, const std::string& sample) {
    if (sample == "all") return;
    if (sample == "active") spec.row_filter.push_back("active");
    else if (sample == "passive") spec.row_filter.push_back("passive");
    else throw ValidationError("unknown sample filter '" + sample + "' (all, active, passive)");
}

}  // namespace

EffectList parse_fixed_effects(const std::string& text) {
    if (text == "none" || text.empty()) return {};
    if (text == "fund-time") return {{"fund", "day"}};
    if (text == "fund,time") return {{"fund"}, {"day"}};
    if (text == "time") return {{"day"}};
    if (text == "fund") return {{"fund"}};
    if (text == "stock,time") return {{"security"}, {"day"}};
    throw ValidationError("unknown fixed-effect specification '" + text + "'");
}

EffectList parse_clusters(const std::string& text) {
    EffectList out;
    for (const auto& part : split_list(text, ',')) {
        if (part == "none") continue;
        if (part == "day") out.push_back({"day"});
        else if (part == "fund") out.push_back({"fund"});
        else if (part == "stock") out.push_back({"security"});
        else if (part == "stockday") out.push_back({"security", "day"});
        else if (part == "fundday") out.push_back({"fund", "day"});
        else throw ValidationError("unknown cluster dimension '" + part + "'");
    }
    if (out.size() > 2) throw ValidationError("at most two cluster dimensions");
    return out;
}

PanelFrame fund_frame(const MarketPanel& panel, const LiquidityTable& table) {
    const double eta = table.eta();
    std::vector<Index> ent, tim;
    std::vector<double> ret, flow, flow_eta, illiq, conc, fxi, fxc;
    std::vector<std::int64_t> fund, day, active, passive;
    for (Index f = 0; f < panel.n_funds(); ++f)
        for (Index t = 0; t < panel.n_days(); ++t) {
            const FundDay& d = panel.fund(f, t);
            if (!d.present) continue;
            ent.push_back(f);
            tim.push_back(t);
            fund.push_back(f);
            day.push_back(t);
            active.push_back(d.is_active ? 1 : 0);
            passive.push_back(d.is_active ? 0 : 1);
            ret.push_back(d.fund_return);
            flow.push_back(d.flow_rel);
            const double fe = is_missing(d.flow_rel) ? kMissing : signed_power(d.flow_rel, eta);
            flow_eta.push_back(fe);
            double il = kMissing, co = kMissing;
            if (t > 0 && table.fund(f, t - 1).valid) {
                il = table.fund(f, t - 1).fund_illiq;
                co = table.fund(f, t - 1).fund_conc;
            }
            illiq.push_back(il);
            conc.push_back(co);
            fxi.push_back(fe * il);
            fxc.push_back(fe * co);
        }
    PanelFrame frame(ent, tim);
    frame.add_series("ret", std::move(ret));
    frame.add_series("flow", std::move(flow));
    frame.add_series("flow_eta", std::move(flow_eta));
    frame.add_series("illiq", std::move(illiq));
    frame.add_series("conc", std::move(conc));
    frame.add_series("flow_x_illiq", std::move(fxi));
    frame.add_series("flow_x_conc", std::move(fxc));
    frame.add_labels("fund", std::move(fund));
    frame.add_labels("day", std::move(day));
    frame.add_labels("active", std::move(active));
    frame.add_labels("passive", std::move(passive));
    return frame;
}

PanelFrame stock_frame(const MarketPanel& panel, const LiquidityTable& table) {
    const double eta = table.eta();
    const Index N = panel.n_securities();
    std::vector<Index> ent, tim;
    std::vector<double> ret, illiq, conc, flow_eta, fxi, fxc, mom, vol;
    std::vector<std::int64_t> fund, sec, day, active, passive;
    for (Index f = 0; f < panel.n_funds(); ++f)
        for (Index t = 1; t < panel.n_days(); ++t) {
            const FundDay& d = panel.fund(f, t);
            if (!d.present || !table.fund(f, t - 1).valid) continue;
            const double fe = is_missing(d.flow_rel) ? kMissing : signed_power(d.flow_rel, eta);
            auto held = panel.holdings(f, t - 1);
            auto pm = table.positions(f, t - 1);
            for (std::size_t k = 0; k < held.size(); ++k) {
                const Index s = held[k].security;
                const SecurityDay& cur = panel.security(s, t);
                const SecurityDay& prev = panel.security(s, t - 1);
                if (!cur.present) continue;
                ent.push_back(f * N + s);
                tim.push_back(t);
                fund.push_back(f);
                sec.push_back(s);
                day.push_back(t);
                active.push_back(d.is_active ? 1 : 0);
                passive.push_back(d.is_active ? 0 : 1);
                ret.push_back(cur.ret);
                illiq.push_back(pm[k].illiq);
                conc.push_back(pm[k].conc);
                flow_eta.push_back(fe);
                fxi.push_back(fe * pm[k].illiq);
                fxc.push_back(fe * pm[k].conc);
                mom.push_back(prev.momentum);
                vol.push_back(prev.volatility);
            }
        }
    PanelFrame frame(ent, tim);
    frame.add_series("ret", std::move(ret));
    frame.add_series("illiq", std::move(illiq));
    frame.add_series("conc", std::move(conc));
    frame.add_series("flow_eta", std::move(flow_eta));
    frame.add_series("flow_x_illiq", std::move(fxi));
    frame.add_series("flow_x_conc", std::move(fxc));
    frame.add_series("momentum", std::move(mom));
    frame.add_series("volatility", std::move(vol));
    frame.add_labels("fund", std::move(fund));
    frame.add_labels("security", std::move(sec));
    frame.add_labels("day", std::move(day));
    frame.add_labels("active", std::move(active));
    frame.add_labels("passive", std::move(passive));
    return frame;
}

namespace {

bool has_fund_time(const EffectList& fe) {
    for (const auto& e : fe) {
        const bool fund = std::find(e.begin(), e.end(), "fund") != e.end();
        const bool day = std::find(e.begin(), e.end(), "day") != e.end();
        if (fund && day) return true;
    }
    return false;
}

}  // namespace

RegressionFit estimate_impact(const MarketPanel& panel, const LiquidityTable& table, const ImpactRegressionOptions& options) {
    DesignSpec spec;
    spec.response = "ret";
    apply_sample(spec, options.sample);
    if (options.level == ImpactLevel::Fund) {
        spec.fixed_effects = options.fixed_effects.value_or(EffectList{{"fund"}, {"day"}});
        spec.clusters = options.clusters.value_or(EffectList{{"day"}, {"fund"}});
        if (has_fund_time(spec.fixed_effects))
            throw ValidationError("fund-time fixed effects are collinear with a fund-level flow regression");
        spec.terms = {{"flow_x_illiq"}, {"illiq"}, {"flow_eta"}};
        if (options.concentration_controls) {
            spec.terms.push_back({"flow_x_conc"});
            spec.terms.push_back({"conc"});
        }
        if (options.flow_lags > 0) spec.terms.push_back({"flow_eta", 1, options.flow_lags});
        if (options.flow_lags < 0) throw ValidationError("flow lags must be non-negative");
        const PanelFrame frame = fund_frame(panel, table);
        return ols_clustered(build_design(frame, spec).design);
    }
    spec.fixed_effects = options.fixed_effects.value_or(EffectList{{"fund", "day"}});
    spec.clusters = options.clusters.value_or(EffectList{{"day"}, {"security", "day"}});
    spec.terms = {{"flow_x_illiq"}, {"illiq"}, {"momentum"}, {"volatility"}};
    if (!has_fund_time(spec.fixed_effects)) spec.terms.push_back({"flow_eta"});
    if (options.concentration_controls) {
        spec.terms.push_back({"flow_x_conc"});
        spec.terms.push_back({"conc"});
    }
    const PanelFrame frame = stock_frame(panel, table);
    return ols_clustered(build_design(frame, spec).design);
}

KernelFit fit_kernel_on_frame(const PanelFrame& frame, const BuiltDesign& built, const std::string& lag_series, int first_lag,
                              int last_lag, std::vector<std::string> linear_names, const std::vector<Index>& linear_columns,
                              const std::string& amplitude_name, const std::string& decay_name, const NllsOptions& options) {
    // Dense per-entity copy of the lagged series so that lag s of observation i
    // sits at base[i] - s.
    const auto& src = frame.series(lag_series);
    std::vector<double> dense;
    std::vector<std::size_t> dense_index(frame.rows());
    std::size_t r = 0;
    while (r < frame.rows()) {
        std::size_t e = r;
        while (e < frame.rows() && frame.entity(e) == frame.entity(r)) ++e;
        // Leading padding keeps base - s non-negative for every entity.
        const std::size_t offset = dense.size() + static_cast<std::size_t>(last_lag);
        dense.resize(offset, kMissing);
        const Index t0 = frame.time(r);
        const Index t1 = frame.time(e - 1);
        dense.resize(offset + static_cast<std::size_t>(t1 - t0 + 1), kMissing);
        for (std::size_t k = r; k < e; ++k) {
            dense_index[k] = offset + static_cast<std::size_t>(frame.time(k) - t0);
            dense[dense_index[k]] = src[k];
        }
        r = e;
    }

    ExpDecayDesign d;
    d.y = built.design.y;
    d.linear.resize(built.design.y.size(), static_cast<Index>(linear_columns.size()));
    for (std::size_t c = 0; c < linear_columns.size(); ++c) d.linear.col(static_cast<Index>(c)) = built.design.x.col(linear_columns[c]);
    d.linear_names = std::move(linear_names);
    d.series = std::move(dense);
    d.base.reserve(built.rows.size());
    for (std::size_t row : built.rows) d.base.push_back(dense_index[row]);
    d.first_lag = first_lag;
    d.last_lag = last_lag;
    d.amplitude_name = amplitude_name;
    d.decay_name = decay_name;
    d.fixed_effects = built.design.fixed_effects;
    d.clusters = built.design.clusters;
    return fit_exp_decay(d, options);
}

ReversalResult estimate_reversal(const MarketPanel& panel, const LiquidityTable& table, const ReversalOptions& options) {
    if (options.max_lag < 1) throw ValidationError("reversal needs at least one lag");
    const PanelFrame frame = fund_frame(panel, table);
    DesignSpec spec;
    spec.response = "ret";
    spec.fixed_effects = options.fixed_effects;
    spec.clusters = options.clusters;
    apply_sample(spec, options.sample);
    if (options.flow_control_lags >= 0) spec.terms.push_back({"flow_eta", 0, options.flow_control_lags});

    ReversalResult out;
    out.lags = distributed_lag(frame, spec, "flow_x_illiq", options.max_lag);
    out.cumulative = cumulative_coefficients(out.lags.fit, out.lags.lag_names);
    if (!options.fit_kernel) return out;

    // Same sample as the distributed lag; the lag block itself is built by the kernel fit.
    DesignSpec full = spec;
    full.required.push_back(LagTerm{"flow_x_illiq", 0, options.max_lag});
    full.terms.insert(full.terms.begin(), LagTerm{"flow_x_illiq"});
    full.min_entity_obs = std::max(full.min_entity_obs, options.max_lag + 30);
    const BuiltDesign built = build_design(frame, full);
    std::vector<std::string> names{"theta0"};
    std::vector<Index> cols{0};
    for (Index c = 1; c < built.design.x.cols(); ++c) {
        names.push_back(built.design.names[static_cast<std::size_t>(c)]);
        cols.push_back(c);
    }
    out.kernel = fit_kernel_on_frame(frame, built, "flow_x_illiq", 1, options.max_lag, names, cols, "theta1", "lambda_theta",
                                     options.nlls);
    return out;
}

ChasingKernelResult estimate_chasing_kernel(const MarketPanel& panel, const ChasingKernelOptions& options) {
    if (options.max_lag < 0) throw ValidationError("chasing kernel needs a non-negative lag count");
    // Liquidity measures are not needed: build the fund frame from a panel-only table.
    std::vector<Index> ent, tim;
    std::vector<double> ret, flow;
    std::vector<std::int64_t> fund, day, active, passive;
    for (Index f = 0; f < panel.n_funds(); ++f)
        for (Index t = 0; t < panel.n_days(); ++t) {
            const FundDay& d = panel.fund(f, t);
            if (!d.present) continue;
            ent.push_back(f);
            tim.push_back(t);
            fund.push_back(f);
            day.push_back(t);
            active.push_back(d.is_active ? 1 : 0);
            passive.push_back(d.is_active ? 0 : 1);
            ret.push_back(d.fund_return);
            flow.push_back(d.flow_rel);
        }
    PanelFrame frame(ent, tim);
    frame.add_series("ret", std::move(ret));
    frame.add_series("flow", std::move(flow));
    frame.add_labels("fund", std::move(fund));
    frame.add_labels("day", std::move(day));
    frame.add_labels("active", std::move(active));
    frame.add_labels("passive", std::move(passive));

    DesignSpec spec;
    spec.response = "flow";
    spec.response_lead = 1;
    spec.fixed_effects = options.fixed_effects;
    spec.clusters = options.clusters;
    apply_sample(spec, options.sample);
    if (options.flow_lags > 0) spec.terms.push_back({"flow", 0, options.flow_lags - 1});

    ChasingKernelResult out;
    if (options.distributed_lag) {
        out.lags = distributed_lag(frame, spec, "ret", options.max_lag);
        out.cumulative = cumulative_coefficients(out.lags->fit, out.lags->lag_names);
    }
    if (!options.fit_kernel) return out;

    DesignSpec full = spec;
    full.required.push_back(LagTerm{"ret", 0, options.max_lag});
    full.min_entity_obs = std::max(full.min_entity_obs, options.max_lag + 30);
    const BuiltDesign built = build_design(frame, full);
    std::vector<std::string> names;
    std::vector<Index> cols;
    for (Index c = 0; c < built.design.x.cols(); ++c) {
        names.push_back(built.design.names[static_cast<std::size_t>(c)]);
        cols.push_back(c);
    }
    out.kernel = fit_kernel_on_frame(frame, built, "ret", 0, options.max_lag, names, cols, "beta", "lambda_beta", options.nlls);
    return out;
}

}  // namespace flowlab
