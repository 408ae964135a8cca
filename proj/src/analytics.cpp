#include "flowlab/analytics.hpp"
#include "flowlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace flowlab {

std::vector<double> exp_weights(double lambda, int max_lag) {
    if (!(lambda >= 0.0)) throw ValidationError("exp_weights: lambda must be non-negative");
    if (max_lag < 0) throw ValidationError("exp_weights: L must be non-negative");
    std::vector<double> w(static_cast<std::size_t>(max_lag) + 1);
    for (int s = 0; s <= max_lag; ++s) w[static_cast<std::size_t>(s)] = std::exp(-lambda * s);
    // Summed smallest first, in extended precision.
    long double total = 0.0L;
    for (auto it = w.rbegin(); it != w.rend(); ++it) total += *it;
    for (double& x : w) x = static_cast<double>(x / total);
    return w;
}

std::vector<double> market_returns(const MarketPanel& panel) {
    std::vector<double> out(static_cast<std::size_t>(panel.n_days()), kMissing);
    for (Index t = 1; t < panel.n_days(); ++t) {
        double num = 0.0, den = 0.0;
        for (Index f = 0; f < panel.n_funds(); ++f) {
            const FundDay& cur = panel.fund(f, t);
            const FundDay& prev = panel.fund(f, t - 1);
            if (!cur.present || !prev.present || is_missing(cur.fund_return) || !(prev.aum > 0)) continue;
            num += prev.aum * cur.fund_return;
            den += prev.aum;
        }
        if (den > 0) out[static_cast<std::size_t>(t)] = num / den;
    }
    return out;
}

// ---------------------------------------------------------------------------

DecomposedReturns::DecomposedReturns(const MarketPanel& panel, const ImpactSeries& impact, double lambda_beta, int max_lag)
    : n_funds_(panel.n_funds()), n_days_(panel.n_days()), lambda_(lambda_beta), max_lag_(max_lag) {
    const auto w = exp_weights(lambda_beta, max_lag);
    const auto size = static_cast<std::size_t>(n_funds_ * n_days_);
    ret_.assign(size, kMissing);
    impact_.assign(size, kMissing);
    orth_.assign(size, kMissing);
    ret_tilde_.assign(size, kMissing);
    impact_tilde_.assign(size, kMissing);
    orth_tilde_.assign(size, kMissing);
    for (Index f = 0; f < n_funds_; ++f) {
        for (Index t = 0; t < n_days_; ++t) {
            const FundDay& d = panel.fund(f, t);
            if (!d.present) continue;
            const std::size_t k = static_cast<std::size_t>(f * n_days_ + t);
            ret_[k] = d.fund_return;
            impact_[k] = impact.total_return(f, t);
            if (!is_missing(ret_[k]) && !is_missing(impact_[k])) orth_[k] = ret_[k] - impact_[k];
        }
        for (Index t = max_lag; t < n_days_; ++t) {
            double a = 0.0, b = 0.0, c = 0.0;
            bool ok = true;
            for (int s = 0; s <= max_lag && ok; ++s) {
                const std::size_t k = static_cast<std::size_t>(f * n_days_ + t - s);
                if (is_missing(orth_[k])) ok = false;
                else {
                    a += w[static_cast<std::size_t>(s)] * ret_[k];
                    b += w[static_cast<std::size_t>(s)] * impact_[k];
                    c += w[static_cast<std::size_t>(s)] * orth_[k];
                }
            }
            if (!ok) continue;
            const std::size_t k = static_cast<std::size_t>(f * n_days_ + t);
            ret_tilde_[k] = a;
            impact_tilde_[k] = b;
            orth_tilde_[k] = c;
        }
    }
}

// ---------------------------------------------------------------------------

ChasingResult chasing_regression(const MarketPanel& panel, const DecomposedReturns& dec, const ChasingOptions& options) {
    if (options.flow_lags < 0) throw ValidationError("chasing regression: flow lags must be non-negative");
    std::vector<Index> ent, tim;
    std::vector<double> flow, rt, ri, ro;
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
            flow.push_back(d.flow_rel);
            rt.push_back(dec.ret_tilde(f, t));
            ri.push_back(dec.impact_tilde(f, t));
            ro.push_back(dec.orth_tilde(f, t));
        }
    PanelFrame frame(ent, tim);
    frame.add_series("flow", std::move(flow));
    frame.add_series("ret_tilde", std::move(rt));
    frame.add_series("ret_tilde_impact", std::move(ri));
    frame.add_series("ret_tilde_orth", std::move(ro));
    frame.add_labels("fund", std::move(fund));
    frame.add_labels("day", std::move(day));
    frame.add_labels("active", std::move(active));
    frame.add_labels("passive", std::move(passive));

    DesignSpec base;
    base.response = "flow";
    base.response_lead = 1;
    base.fixed_effects = options.fixed_effects;
    base.clusters = options.clusters;
    if (options.sample == "active") base.row_filter.push_back("active");
    else if (options.sample == "passive") base.row_filter.push_back("passive");
    else if (options.sample != "all") throw ValidationError("unknown sample filter '" + options.sample + "'");
    // Both regressions run on the identical sample.
    base.required = {{"ret_tilde"}, {"ret_tilde_impact"}, {"ret_tilde_orth"}};
    std::vector<LagTerm> controls;
    if (options.flow_lags > 0) controls.push_back({"flow", 0, options.flow_lags - 1});

    ChasingResult out;
    DesignSpec bench = base;
    bench.terms = {{"ret_tilde"}};
    bench.terms.insert(bench.terms.end(), controls.begin(), controls.end());
    BuiltDesign bb = build_design(frame, bench);
    out.benchmark = ols_clustered(bb.design);
    out.beta = out.benchmark.estimate("ret_tilde");

    DesignSpec split = base;
    split.terms = {{"ret_tilde_impact"}, {"ret_tilde_orth"}};
    split.terms.insert(split.terms.end(), controls.begin(), controls.end());
    BuiltDesign sb = build_design(frame, split);
    const bool degenerate = sb.design.x.col(0).cwiseAbs().maxCoeff() == 0.0;
    if (degenerate) {
        // R~^I vanishes: the split collapses onto the benchmark.
        split.terms.erase(split.terms.begin());
        sb = build_design(frame, split);
        out.decomposed = ols_clustered(sb.design);
        out.beta2 = out.decomposed.estimate("ret_tilde_orth");
        return out;
    }
    out.decomposed = ols_clustered(sb.design);
    out.beta1 = out.decomposed.estimate("ret_tilde_impact");
    out.beta2 = out.decomposed.estimate("ret_tilde_orth");
    out.equality = wald_equal(out.decomposed, "ret_tilde_impact", "ret_tilde_orth");
    return out;
}

// ---------------------------------------------------------------------------

namespace {

// Indices of the top `share` of funds by key (descending, ties by index).
std::vector<Index> top_by(std::vector<std::pair<double, Index>> keyed, double share) {
    std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    const auto n = static_cast<std::size_t>(std::ceil(share * static_cast<double>(keyed.size()) - 1e-9));
    std::vector<Index> out;
    for (std::size_t i = 0; i < std::min(n, keyed.size()); ++i) out.push_back(keyed[i].second);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

double ponzi_volume_ratio(const MarketPanel& panel, const PonziSeries& ponzi, Index t, std::span<const Index> funds) {
    if (t < 1) return kMissing;
    double num = 0.0, den = 0.0;
    for (Index f : funds) {
        const double fp = ponzi.flow(f, t);
        const double fl = panel.fund(f, t).flow_rel;
        const double a = panel.fund(f, t - 1).aum;
        if (is_missing(fp) || is_missing(fl) || is_missing(a)) continue;
        num += std::abs(fp) * a;
        den += std::abs(fl) * a;
    }
    return den > 0.0 ? num / den : kMissing;
}

double wealth_reallocation(const MarketPanel& panel, const PonziSeries& ponzi, Index t) {
    if (t < 1) return 0.0;
    double sum = 0.0;
    for (Index f = 0; f < panel.n_funds(); ++f) {
        const double rp = ponzi.ret(f, t);
        const double a = panel.fund(f, t - 1).aum;
        if (is_missing(rp) || is_missing(a)) continue;
        sum += std::abs(rp) * a;
    }
    return sum;
}

PonziSeries::PonziSeries(const MarketPanel& panel, const LiquidityTable& table, const DecomposedReturns& dec,
                         const PonziOptions& options)
    : n_days_(panel.n_days()) {
    if (!(options.theta >= 0.0)) throw ValidationError("ponzi: theta must be non-negative");
    if (!(options.eta > 0.0 && options.eta <= 1.0)) throw ValidationError("ponzi: eta must lie in (0, 1]");
    if (!(options.top_share > 0.0 && options.top_share <= 1.0)) throw ValidationError("ponzi: top share must lie in (0, 1]");
    const Index T = n_days_;
    const Index F = panel.n_funds();
    flow_.assign(static_cast<std::size_t>(F * T), kMissing);
    ret_.assign(static_cast<std::size_t>(F * T), kMissing);
    for (Index f = 0; f < F; ++f)
        for (Index t = 1; t < T; ++t) {
            const double rt = dec.impact_tilde(f, t - 1);
            if (is_missing(rt)) continue;
            const double fp = options.beta1 * rt;
            flow_[f * T + t] = fp;
            const FundMeasures& m = table.fund(f, t - 1);
            if (m.valid) ret_[f * T + t] = options.theta * m.fund_illiq * signed_power(fp, options.eta);
        }
    ratio_all_.assign(static_cast<std::size_t>(T), kMissing);
    ratio_top_.assign(static_cast<std::size_t>(T), kMissing);
    ratio_rest_.assign(static_cast<std::size_t>(T), kMissing);
    realloc_.assign(static_cast<std::size_t>(T), 0.0);
    cum_realloc_.assign(static_cast<std::size_t>(T), 0.0);
    std::vector<Index> all(static_cast<std::size_t>(F));
    std::iota(all.begin(), all.end(), Index{0});
    double running = 0.0;
    for (Index t = 1; t < T; ++t) {
        ratio_all_[t] = ponzi_volume_ratio(panel, *this, t, all);
        std::vector<std::pair<double, Index>> keyed;
        for (Index f = 0; f < F; ++f)
            if (table.fund(f, t - 1).valid) keyed.emplace_back(table.fund(f, t - 1).fund_illiq, f);
        if (!keyed.empty()) {
            const auto top = top_by(keyed, options.top_share);
            std::vector<Index> rest;
            for (const auto& kv : keyed)
                if (!std::binary_search(top.begin(), top.end(), kv.second)) rest.push_back(kv.second);
            std::sort(rest.begin(), rest.end());
            ratio_top_[t] = ponzi_volume_ratio(panel, *this, t, top);
            ratio_rest_[t] = ponzi_volume_ratio(panel, *this, t, rest);
        }
        realloc_[t] = wealth_reallocation(panel, *this, t);
        running += realloc_[t];
        cum_realloc_[t] = running;
    }
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> fund_market_betas(const MarketPanel& panel, const std::vector<double>& market) {
    std::vector<double> beta(static_cast<std::size_t>(panel.n_funds()), 1.0);
    for (Index f = 0; f < panel.n_funds(); ++f) {
        double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (Index t = 0; t < panel.n_days(); ++t) {
            const double r = panel.fund(f, t).fund_return;
            const double m = market[static_cast<std::size_t>(t)];
            if (!panel.fund(f, t).present || is_missing(r) || is_missing(m)) continue;
            n += 1;
            sx += m;
            sy += r;
            sxx += m * m;
            sxy += m * r;
        }
        const double var = sxx - sx * sx / std::max(n, 1.0);
        if (n >= 30 && var > 0) beta[static_cast<std::size_t>(f)] = (sxy - sx * sy / n) / var;
    }
    return beta;
}

}  // namespace

SortTable flow_decile_sort(const MarketPanel& panel, const LiquidityTable& table, const SortOptions& options) {
    if (options.buckets < 2) throw ValidationError("sort needs at least two buckets");
    if (!(options.split_top_share > 0.0 && options.split_top_share < 1.0))
        throw ValidationError("sort split share must lie in (0, 1)");
    const auto market = market_returns(panel);
    const auto beta = fund_market_betas(panel, market);
    const auto B = static_cast<std::size_t>(options.buckets);
    struct Acc {
        double raw = 0, excess = 0, adjusted = 0;
        Index n = 0, n_market = 0;
    };
    std::vector<Acc> high(B), rest(B);
    SortTable out;
    for (Index t = 1; t < panel.n_days(); ++t) {
        std::vector<std::pair<double, Index>> key, split;
        for (Index f = 0; f < panel.n_funds(); ++f) {
            const FundDay& d = panel.fund(f, t);
            const FundMeasures& m = table.fund(f, t - 1);
            if (!d.present || is_missing(d.flow_rel) || is_missing(d.fund_return) || !m.valid) continue;
            if (options.key == SortKey::Flow) {
                key.emplace_back(d.flow_rel, f);
                split.emplace_back(m.fund_illiq, f);
            } else {
                key.emplace_back(d.flow_rel * m.size_ratio, f);
                split.emplace_back(m.fund_conc, f);
            }
        }
        if (static_cast<int>(key.size()) < options.min_funds) {
            ++out.dates_skipped;
            continue;
        }
        ++out.dates_used;
        const auto top = top_by(split, options.split_top_share);
        std::stable_sort(key.begin(), key.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first < b.first : a.second < b.second;
        });
        const double mkt = market[static_cast<std::size_t>(t)];
        for (std::size_t r = 0; r < key.size(); ++r) {
            const std::size_t b = r * B / key.size();
            const Index f = key[r].second;
            const double ret = panel.fund(f, t).fund_return;
            Acc& a = std::binary_search(top.begin(), top.end(), f) ? high[b] : rest[b];
            a.raw += ret;
            ++a.n;
            if (!is_missing(mkt)) {
                a.excess += ret - mkt;
                a.adjusted += ret - beta[static_cast<std::size_t>(f)] * mkt;
                ++a.n_market;
            }
        }
    }
    auto finish = [](const Acc& a) {
        SortCell c;
        c.count = a.n;
        if (a.n > 0) c.raw = a.raw / static_cast<double>(a.n);
        if (a.n_market > 0) {
            c.excess = a.excess / static_cast<double>(a.n_market);
            c.adjusted = a.adjusted / static_cast<double>(a.n_market);
        }
        return c;
    };
    for (std::size_t b = 0; b < B; ++b) {
        out.high.push_back(finish(high[b]));
        out.rest.push_back(finish(rest[b]));
    }
    return out;
}

double rank_trend(std::span<const double> values) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < values.size(); ++i)
        if (std::isfinite(values[i])) pts.emplace_back(static_cast<double>(i), values[i]);
    const std::size_t n = pts.size();
    if (n < 3) return kMissing;
    // Average ranks for ties in the values; index ranks are already distinct.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pts[a].second < pts[b].second; });
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && pts[order[j + 1]].second == pts[order[i]].second) ++j;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = 0.5 * static_cast<double>(i + j);
        i = j + 1;
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += static_cast<double>(i);
        my += rank[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = static_cast<double>(i) - mx, dy = rank[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    return syy > 0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

// ---------------------------------------------------------------------------

BubbleResult runup_and_bubble(const MarketPanel& panel, const PonziSeries& ponzi, const BubbleOptions& options) {
    if (options.window < 1 || options.horizon < 1) throw ValidationError("bubbles: window and horizon must be positive");
    if (!(options.top_share > 0.0 && options.top_share <= 1.0)) throw ValidationError("bubbles: top share must lie in (0, 1]");
    const Index T = panel.n_days();
    const auto market = market_returns(panel);
    // Log wealth indices; a missing return breaks the index (NaN propagates).
    std::vector<double> mkt_log(static_cast<std::size_t>(T), kMissing);
    if (T > 0) mkt_log[0] = 0.0;
    for (Index t = 1; t < T; ++t) mkt_log[t] = mkt_log[t - 1] + std::log1p(market[t]);

    BubbleResult out;
    std::vector<std::vector<double>> fund_log(static_cast<std::size_t>(panel.n_funds()));
    for (Index f = 0; f < panel.n_funds(); ++f) {
        auto& lg = fund_log[static_cast<std::size_t>(f)];
        lg.assign(static_cast<std::size_t>(T), kMissing);
        Index start = -1;
        for (Index t = 0; t < T; ++t)
            if (panel.fund(f, t).present) {
                start = t;
                break;
            }
        if (start < 0) continue;
        lg[start] = 0.0;
        for (Index t = start + 1; t < T; ++t) {
            const double r = panel.fund(f, t).fund_return;
            lg[t] = (panel.fund(f, t).present && !is_missing(r)) ? lg[t - 1] + std::log1p(r) : kMissing;
        }
        auto excess = [&](Index from, Index to) {
            return std::exp(lg[to] - lg[from]) - std::exp(mkt_log[to] - mkt_log[from]);
        };
        Index cool_until = -1;
        double prev = kMissing;
        for (Index t = start + options.window; t < T; ++t) {
            const double x = excess(t - options.window, t);
            const bool crossing = std::isfinite(x) && x > options.runup_threshold && !(prev > options.runup_threshold);
            prev = x;
            if (!crossing || t < cool_until) continue;
            RunupEvent ev;
            ev.fund = f;
            ev.day = t;
            ev.excess_runup = x;
            double cum = 0.0;
            for (Index u = options.full_history_ponzi ? 0 : t - options.window + 1; u <= t; ++u) {
                const double fp = ponzi.flow(f, u);
                if (!is_missing(fp)) cum += fp;
            }
            ev.cumulative_ponzi = cum;
            const Index end = std::min(T - 1, t + options.horizon);
            if (end > t) ev.post_return = excess(t, end);
            if (options.balanced && t + options.horizon > T - 1) ev.post_return = kMissing;
            out.events.push_back(ev);
            cool_until = t + options.window;
        }
    }

    std::vector<std::pair<double, Index>> keyed;
    for (std::size_t i = 0; i < out.events.size(); ++i) keyed.emplace_back(out.events[i].cumulative_ponzi, static_cast<Index>(i));
    if (!keyed.empty())
        for (Index i : top_by(keyed, options.top_share)) out.events[static_cast<std::size_t>(i)].bubble = true;

    for (int k = -options.window; k <= options.horizon; ++k) out.offsets.push_back(k);
    std::vector<double> sum_all(out.offsets.size(), 0.0), sum_bub(out.offsets.size(), 0.0);
    std::vector<double> n_all(out.offsets.size(), 0.0), n_bub(out.offsets.size(), 0.0);
    for (const auto& ev : out.events) {
        const auto& lg = fund_log[static_cast<std::size_t>(ev.fund)];
        bool complete = true;
        if (options.balanced)
            for (int k = -options.window; k <= options.horizon && complete; ++k) {
                const Index u = ev.day + k;
                complete = u >= 0 && u < T && std::isfinite(lg[u]) && std::isfinite(mkt_log[u]);
            }
        if (!complete) continue;
        for (std::size_t i = 0; i < out.offsets.size(); ++i) {
            const Index u = ev.day + out.offsets[i];
            if (u < 0 || u >= T) continue;
            const double v = std::exp(lg[u] - lg[ev.day]) - std::exp(mkt_log[u] - mkt_log[ev.day]);
            if (!std::isfinite(v)) continue;
            sum_all[i] += v;
            n_all[i] += 1;
            if (ev.bubble) {
                sum_bub[i] += v;
                n_bub[i] += 1;
            }
        }
    }
    for (std::size_t i = 0; i < out.offsets.size(); ++i) {
        out.runup_path.push_back(n_all[i] > 0 ? sum_all[i] / n_all[i] : kMissing);
        out.bubble_path.push_back(n_bub[i] > 0 ? sum_bub[i] / n_bub[i] : kMissing);
    }
    double sa = 0, na = 0, sb = 0, nb = 0;
    for (const auto& ev : out.events) {
        if (is_missing(ev.post_return)) continue;
        sa += ev.post_return;
        na += 1;
        if (ev.bubble) {
            sb += ev.post_return;
            nb += 1;
        }
    }
    if (na > 0) out.runup_post = sa / na;
    if (nb > 0) out.bubble_post = sb / nb;
    return out;
}

// ---------------------------------------------------------------------------

VarianceDecomposition variance_decomposition(const MarketPanel& panel, const LiquidityTable& table, const ImpactSeries& impact,
                                             const VarianceOptions& options) {
    if (options.horizon < 1) throw ValidationError("variance decomposition: horizon must be positive");
    if (options.size_groups < 1) throw ValidationError("variance decomposition: need at least one size group");
    const double eta = table.eta();
    VarianceDecomposition out;
    for (Index f = 0; f < panel.n_funds(); ++f) {
        std::vector<double> ri, r;
        double block_i = 0, block_r = 0;
        int filled = 0;
        Index block = -1;
        double size_sum = 0, conc_sum = 0, n_meas = 0;
        auto flush = [&]() {
            if (filled > 0) {
                ri.push_back(block_i);
                r.push_back(block_r);
            }
            block_i = block_r = 0;
            filled = 0;
        };
        for (Index t = 1; t < panel.n_days(); ++t) {
            const FundDay& d = panel.fund(f, t);
            const FundMeasures& m = table.fund(f, t - 1);
            if (m.valid) {
                size_sum += m.fund_size;
                conc_sum += m.fund_conc;
                n_meas += 1;
            }
            if (!d.present || is_missing(d.fund_return) || !m.valid) continue;
            double x;
            if (options.total_impact) x = impact.total_return(f, t);
            else x = is_missing(d.flow_rel) ? kMissing : options.theta * signed_power(d.flow_rel, eta) * m.fund_illiq;
            if (is_missing(x)) continue;
            const Index b = t / options.horizon;
            if (b != block) {
                flush();
                block = b;
            }
            block_i += x;
            block_r += d.fund_return;
            ++filled;
        }
        flush();
        FundVarianceShare fv;
        fv.fund = f;
        if (auto s = variance_share(ri, r)) fv.share = *s;
        if (n_meas > 0) {
            fv.mean_size = size_sum / n_meas;
            fv.mean_conc = conc_sum / n_meas;
        }
        out.funds.push_back(fv);
    }
    // Size groups over funds with a defined share.
    std::vector<std::pair<double, Index>> by_size;
    for (std::size_t i = 0; i < out.funds.size(); ++i)
        if (!is_missing(out.funds[i].share) && !is_missing(out.funds[i].mean_size))
            by_size.emplace_back(out.funds[i].mean_size, static_cast<Index>(i));
    std::sort(by_size.begin(), by_size.end());
    const auto G = static_cast<std::size_t>(options.size_groups);
    out.concentrated_cells.assign(G, kMissing);
    out.other_cells.assign(G, kMissing);
    for (std::size_t g = 0; g < G; ++g) {
        const std::size_t lo = g * by_size.size() / G, hi = (g + 1) * by_size.size() / G;
        std::vector<std::pair<double, Index>> members;
        for (std::size_t k = lo; k < hi; ++k) {
            out.funds[static_cast<std::size_t>(by_size[k].second)].size_group = static_cast<int>(g);
            members.emplace_back(out.funds[static_cast<std::size_t>(by_size[k].second)].mean_conc, by_size[k].second);
        }
        if (members.empty()) continue;
        const auto top = top_by(members, options.concentrated_share);
        double sc = 0, nc = 0, so = 0, no = 0;
        for (const auto& m : members) {
            auto& fv = out.funds[static_cast<std::size_t>(m.second)];
            fv.concentrated = std::binary_search(top.begin(), top.end(), m.second);
            if (fv.concentrated) {
                sc += fv.share;
                nc += 1;
            } else {
                so += fv.share;
                no += 1;
            }
        }
        if (nc > 0) out.concentrated_cells[g] = sc / nc;
        if (no > 0) out.other_cells[g] = so / no;
    }
    return out;
}

}  // namespace flowlab
