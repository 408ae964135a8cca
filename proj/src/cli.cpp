#include "flowlab/cli.hpp"
#include "flowlab/analytics.hpp"
#include "flowlab/error.hpp"
#include "flowlab/estimation.hpp"
#include "flowlab/io.hpp"
#include "flowlab/recovery.hpp"
#include "flowlab/summary.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <memory>
#include <sstream>

namespace flowlab {

namespace fs = std::filesystem;

namespace {

std::vector<double> parse_list(const std::string& text, const char* what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ValidationError(std::string(what) + ": not a number: '" + item + "'");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Option groups shared by several subcommands

struct PanelArgs {
    std::string dir;
    std::string winsorize;
    bool active_only = false;
    double min_aum = 0.0;
    int top_liquidity = 0;

    void add(CLI::App* app) {
        app->add_option("--panel", dir, "Panel directory (securities.csv, funds.csv, holdings.csv)")->required();
        app->add_option("--winsorize", winsorize, "Per-date flow winsorization quantiles LOWER,UPPER, e.g. 0.01,0.99");
        app->add_flag("--active-only", active_only, "Keep active funds only");
        app->add_option("--min-aum", min_aum, "Drop funds whose median AUM is below this");
        app->add_option("--top-liquidity", top_liquidity, "Keep the N securities with the highest mean dollar volume");
    }

    MarketPanel load() const {
        PanelFilter filter;
        filter.active_only = active_only;
        filter.min_aum = min_aum;
        filter.top_liquidity = top_liquidity;
        MarketPanel panel = read_panel(dir, {}, filter);
        if (!winsorize.empty()) {
            const auto q = parse_list(winsorize, "--winsorize");
            if (q.size() != 2) throw ValidationError("--winsorize expects LOWER,UPPER");
            panel = winsorize_flows(std::move(panel), q[0], q[1]);
        }
        for (const auto& d : panel.diagnostics()) std::cerr << "panel: " << d << '\n';
        return panel;
    }
};

struct LiquidityArgs {
    double eta = 0.5;
    std::string supply = "volume";
    bool no_sigma = false;
    std::string aggregation = "linear";

    void add(CLI::App* app) {
        app->add_option("--eta", eta, "Impact curvature");
        app->add_option("--supply", supply, "Liquidity supply: volume | market-cap");
        app->add_flag("--no-sigma", no_sigma, "Drop the volatility prefactor");
        app->add_option("--aggregation", aggregation, "Fund aggregation: linear | power-mean");
    }

    LiquiditySpec spec() const {
        LiquiditySpec s;
        s.eta = eta;
        if (supply == "volume")
            s.supply = Supply::DollarVolume;
        else if (supply == "market-cap")
            s.supply = Supply::MarketCap;
        else
            throw ValidationError("--supply must be volume or market-cap");
        if (aggregation == "linear")
            s.aggregation = FundAggregation::Linear;
        else if (aggregation == "power-mean")
            s.aggregation = FundAggregation::PowerMean;
        else
            throw ValidationError("--aggregation must be linear or power-mean");
        s.volatility_prefactor = !no_sigma;
        s.validate();
        return s;
    }

    LiquidityTable table(const MarketPanel& panel) const {
        LiquidityTable t(panel, spec());
        for (const auto& d : t.diagnostics()) std::cerr << "illiquidity: " << d << '\n';
        return t;
    }
};

struct ImpactArgs {
    double theta = 0.78;
    std::string decay;
    int max_lag = 40;

    void add(CLI::App* app) {
        app->add_option("--theta", theta, "Impact coefficient");
        app->add_option("--decay", decay, "Transient kernel THETA0,THETA1,LAMBDA");
        app->add_option("--max-lag", max_lag, "Reversal lags");
    }

    ImpactParams params(double eta) const {
        ImpactParams p;
        p.theta = theta;
        p.eta = eta;
        p.max_lag = max_lag;
        if (!decay.empty()) {
            const auto k = parse_list(decay, "--decay");
            if (k.size() != 3) throw ValidationError("--decay expects THETA0,THETA1,LAMBDA");
            p.decay = DecayKernel{k[0], k[1], k[2]};
            p.theta = k[0];
        }
        p.validate();
        return p;
    }
};

struct DecomposeArgs {
    double lambda_beta = 0.01;
    int lags = 200;

    void add(CLI::App* app) {
        app->add_option("--lambda-beta", lambda_beta, "Chasing-kernel decay for the weighted returns");
        app->add_option("--lags", lags, "Lags of the weighted returns");
    }
    void validate() const {
        if (!(lambda_beta >= 0.0) || lags < 0) throw ValidationError("--lambda-beta and --lags must be non-negative");
    }
};

struct RegressionArgs {
    std::string fe;
    std::string cluster;
    std::string sample = "all";

    void add(CLI::App* app, const std::string& fe_default, const std::string& cluster_default) {
        app->add_option("--fe", fe, "Fixed effects: fund-time | fund,time | fund | time | none (default " + fe_default + ")");
        app->add_option("--cluster", cluster, "Clusters: comma list of day, fund, stock, stockday, fundday (default " + cluster_default + ")");
        app->add_option("--sample", sample, "Funds: all | active | passive");
    }
};

void write_cumulative(const fs::path& path, const DistributedLagFit& lags, const std::vector<CumulativePoint>& cum) {
    CsvWriter w(path, {"lag", "coef", "se", "cumulative", "cumulative_se"});
    for (std::size_t s = 0; s < lags.lag_names.size() && s < cum.size(); ++s) {
        const auto k = lags.fit.index(lags.lag_names[s]);
        w << s << lags.fit.coef[k] << lags.fit.se[k] << cum[s].sum << cum[s].se;
        w.end_row();
    }
    w.close();
}

SimConfig load_sim_config(const std::string& path, const std::vector<std::string>& sets) {
    SimConfig cfg = path.empty() ? SimConfig{} : read_sim_config(path);
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ValidationError("--set expects KEY=VALUE, got '" + kv + "'");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t"), b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
        };
        set_sim_option(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    return cfg;
}

// Decomposition shared by decompose / chase / ponzi / bubbles.
struct Pipeline {
    MarketPanel panel;
    LiquidityTable table;
    ImpactParams params;
    ImpactSeries impact;
    DecomposedReturns dec;
};

std::unique_ptr<Pipeline> build_pipeline(const PanelArgs& pa, const LiquidityArgs& la, const ImpactArgs& ia, const DecomposeArgs& da) {
    da.validate();
    auto p = std::make_unique<Pipeline>();
    p->params = ia.params(la.eta);
    p->panel = pa.load();
    p->table = la.table(p->panel);
    p->impact = ImpactSeries(p->panel, p->table, p->params);
    p->dec = DecomposedReturns(p->panel, p->impact, da.lambda_beta, da.lags);
    return p;
}

ChasingOptions chasing_options(const RegressionArgs& ra, int flow_lags) {
    ChasingOptions o;
    o.flow_lags = flow_lags;
    if (!ra.fe.empty()) o.fixed_effects = parse_fixed_effects(ra.fe);
    if (!ra.cluster.empty()) o.clusters = parse_clusters(ra.cluster);
    o.sample = ra.sample;
    return o;
}

struct PonziArgs {
    double beta1 = kMissing;
    double top = 0.10;
    int flow_lags = 5;

    void add(CLI::App* app) {
        app->add_option("--beta1", beta1, "Chasing coefficient on R~^I (default: pooled estimate)");
        app->add_option("--ponzi-top", top, "Top-I share for volume ratios");
        app->add_option("--flow-lags", flow_lags, "Lagged-flow controls when estimating beta1");
    }

    PonziSeries series(const Pipeline& p, const RegressionArgs& ra) const {
        PonziOptions o;
        o.theta = p.params.decay ? p.params.decay->theta0 : p.params.theta;
        o.eta = p.params.eta;
        o.top_share = top;
        o.beta1 = beta1;
        if (is_missing(o.beta1)) {
            const auto r = chasing_regression(p.panel, p.dec, chasing_options(ra, flow_lags));
            if (is_missing(r.beta1)) throw EstimationError("beta1 is not identified on this panel; pass --beta1");
            o.beta1 = r.beta1;
            std::cerr << "ponzi: beta1 = " << format_double(o.beta1) << '\n';
        }
        return PonziSeries(p.panel, p.table, p.dec, o);
    }
};

void write_ponzi(const fs::path& dir, const Pipeline& p, const PonziSeries& ponzi) {
    const auto dates = p.panel.dates();
    {
        CsvWriter w(dir / "ponzi.csv", {"date", "fund_id", "ponzi_flow", "ponzi_return"});
        for (Index t = 0; t < p.panel.n_days(); ++t)
            for (Index f = 0; f < p.panel.n_funds(); ++f) {
                if (!p.panel.fund(f, t).present) continue;
                w << dates[t] << p.panel.fund_ids()[f] << ponzi.flow(f, t) << ponzi.ret(f, t);
                w.end_row();
            }
        w.close();
    }
    CsvWriter w(dir / "ponzi_daily.csv",
                {"date", "volume_ratio", "volume_ratio_top", "volume_ratio_rest", "reallocation", "cumulative_reallocation"});
    for (Index t = 0; t < p.panel.n_days(); ++t) {
        w << dates[t] << ponzi.volume_ratio(t) << ponzi.volume_ratio_top(t) << ponzi.volume_ratio_rest(t) << ponzi.reallocation(t)
          << ponzi.cumulative_reallocation(t);
        w.end_row();
    }
    w.close();
}

// ---------------------------------------------------------------------------
// Subcommands. Each registers its options and returns the action to run.

using Action = std::function<void()>;

Action cmd_simulate(CLI::App* app) {
    struct A {
        std::string config, out;
        std::vector<std::string> sets;
        std::uint64_t seed = 0;
    };
    auto a = std::make_shared<A>();
    app->add_option("--config", a->config, "Simulator config (key = value lines)");
    auto* seed = app->add_option("--seed", a->seed, "Overrides the config seed");
    app->add_option("--set", a->sets, "Config override KEY=VALUE (repeatable)");
    app->add_option("--out", a->out, "Output directory")->required();
    return [a, seed] {
        SimConfig cfg = load_sim_config(a->config, a->sets);
        if (seed->count()) cfg.seed = a->seed;
        const SimOutput sim = generate(cfg);
        write_sim_output(a->out, sim);
    };
}

Action cmd_illiquidity(CLI::App* app) {
    struct A {
        PanelArgs panel;
        LiquidityArgs liq;
        std::string out, positions;
    };
    auto a = std::make_shared<A>();
    a->panel.add(app);
    a->liq.add(app);
    app->add_option("--out", a->out, "Fund-day measures CSV")->required();
    app->add_option("--positions", a->positions, "Also write per-position measures to this CSV");
    return [a] {
        const MarketPanel panel = a->panel.load();
        const LiquidityTable table = a->liq.table(panel);
        const auto dates = panel.dates();
        CsvWriter w(a->out, {"date", "fund_id", "fund_illiq", "fund_conc", "fund_size"});
        for (Index t = 0; t < panel.n_days(); ++t)
            for (Index f = 0; f < panel.n_funds(); ++f) {
                if (!panel.fund(f, t).present) continue;
                const auto& m = table.fund(f, t);
                w << dates[t] << panel.fund_ids()[f] << m.fund_illiq << m.fund_conc << m.fund_size;
                w.end_row();
            }
        w.close();
        if (a->positions.empty()) return;
        CsvWriter p(a->positions, {"date", "fund_id", "security_id", "weight", "illiq", "conc"});
        for (Index t = 0; t < panel.n_days(); ++t)
            for (Index f = 0; f < panel.n_funds(); ++f) {
                if (!panel.fund(f, t).present) continue;
                const auto hold = panel.holdings(f, t);
                const auto pos = table.positions(f, t);
                for (std::size_t k = 0; k < hold.size(); ++k) {
                    p << dates[t] << panel.fund_ids()[f] << panel.security_ids()[hold[k].security] << hold[k].weight
                      << (k < pos.size() ? pos[k].illiq : kMissing) << (k < pos.size() ? pos[k].conc : kMissing);
                    p.end_row();
                }
            }
        p.close();
    };
}

Action cmd_impact(CLI::App* app) {
    struct A {
        PanelArgs panel;
        LiquidityArgs liq;
        ImpactArgs imp;
        std::string out;
    };
    auto a = std::make_shared<A>();
    a->panel.add(app);
    a->liq.add(app);
    a->imp.add(app);
    app->add_option("--out", a->out, "Output directory (impact_series.csv, ait.csv)")->required();
    return [a] {
        const ImpactParams params = a->imp.params(a->liq.eta);
        const MarketPanel panel = a->panel.load();
        const LiquidityTable table = a->liq.table(panel);
        const ImpactSeries series(panel, table, params);
        const AitSeries ait(panel, table);
        ensure_directory(a->out);
        const auto dates = panel.dates();
        {
            CsvWriter w(fs::path(a->out) / "impact_series.csv", {"date", "fund_id", "R_self", "R_total"});
            for (Index t = 0; t < panel.n_days(); ++t)
                for (Index f = 0; f < panel.n_funds(); ++f) {
                    if (!panel.fund(f, t).present) continue;
                    w << dates[t] << panel.fund_ids()[f] << series.self_return(f, t) << series.total_return(f, t);
                    w.end_row();
                }
            w.close();
        }
        CsvWriter w(fs::path(a->out) / "ait.csv", {"date", "security_id", "ait", "ait_hat"});
        for (Index t = 0; t < panel.n_days(); ++t)
            for (Index s = 0; s < panel.n_securities(); ++s) {
                if (!panel.security(s, t).present) continue;
                w << dates[t] << panel.security_ids()[s] << ait.ait(s, t) << ait.ait_hat(s, t);
                w.end_row();
            }
        w.close();
    };
}

Action cmd_estimate_impact(CLI::App* app) {
    struct A {
        PanelArgs panel;
        LiquidityArgs liq;
        RegressionArgs reg;
        std::string level = "fund", out;
        bool no_conc = false;
        int flow_lags = 1;
    };
    auto a = std::make_shared<A>();
    a->panel.add(app);
    a->liq.add(app);
    a->reg.add(app, "fund,time (fund) / fund-time (stock)", "day,fund (fund) / day,stockday (stock)");
    app->add_option("--level", a->level, "stock | fund");
    app->add_flag("--no-conc-controls", a->no_conc, "Drop the concentration controls");
    app->add_option("--flow-lags", a->flow_lags, "Lagged flow controls (fund level)");
    app->add_option("--out", a->out, "Fit output file")->required();
    return [a] {
        ImpactRegressionOptions o;
        if (a->level == "fund")
            o.level = ImpactLevel::Fund;
        else if (a->level == "stock")
            o.level = ImpactLevel::Stock;
        else
            throw ValidationError("--level must be stock or fund");
        if (!a->reg.fe.empty()) o.fixed_effects = parse_fixed_effects(a->reg.fe);
        if (!a->reg.cluster.empty()) o.clusters = parse_clusters(a->reg.cluster);
        o.sample = a->reg.sample;
        o.concentration_controls = !a->no_conc;
        o.flow_lags = a->flow_lags;
        const MarketPanel panel = a->panel.load();
        const LiquidityTable table = a->liq.table(panel);
        const RegressionFit fit = estimate_impact(panel, table, o);
        auto doc = fit_json(fit);
        doc["level"] = a->level;
        doc["eta"] = a->liq.eta;
        write_json(a->out, doc);
    };
}

Action cmd_estimate_reversal(CLI::App* app) {
    struct A {
        PanelArgs panel;
        LiquidityArgs liq;
        RegressionArgs reg;
        int max_lag = 40, controls = 0;
        bool no_kernel = false;
        std::string out;
    };
    auto a = std::make_shared<A>();
    a->panel.add(app);
    a->liq.add(app);
    a->reg.add(app, "fund,time", "day,fund");
    app->add_option("--max-lag", a->max_lag, "Distributed-lag length S");
    app->add_option("--flow-control-lags", a->controls, "Contemporaneous flow controls, lags 0..k; negative disables");
    app->add_flag("--no-kernel", a->no_kernel, "Skip the exponential-decay fit");
    app->add_option("--out", a->out, "Output directory (reversal_fit.json, reversal_cumulative.csv)")->required();
    return [a] {
        ReversalOptions o;
        o.max_lag = a->max_lag;
        if (!a->reg.fe.empty()) o.fixed_effects = parse_fixed_effects(a->reg.fe);
        if (!a->reg.cluster.empty()) o.clusters = parse_clusters(a->reg.cluster);
        o.sample = a->reg.sample;
        o.flow_control_lags = a->controls;
        o.fit_kernel = !a->no_kernel;
        const MarketPanel panel = a->panel.load();
        const LiquidityTable table = a->liq.table(panel);
        const auto r = estimate_reversal(panel, table, o);
        ensure_directory(a->out);
        nlohmann::ordered_json doc;
        doc["schema_version"] = kSchemaVersion;
        doc["kind"] = "reversal";
        doc["max_lag"] = a->max_lag;
        doc["distributed_lag"] = fit_json(r.lags.fit);
        doc["kernel"] = r.kernel ? kernel_json(*r.kernel) : nlohmann::ordered_json(nullptr);
        write_json(fs::path(a->out) / "reversal_fit.json", doc);
        write_cumulative(fs::path(a->out) / "reversal_cumulative.csv", r.lags, r.cumulative);
    };
}

Action cmd_estimate_kernel(CLI::App* app) {
    struct A {
        PanelArgs panel;
        RegressionArgs reg;
        int lags = 200, flow_lags = 5;
        bool no_kernel = false, no_lags = false;
        std::string out;
    };
    auto a = std::make_shared<A>();
    a->panel.add(app);
    a->reg.add(app, "time", "day,fund");
    app->add_option("--lags", a->lags, "Return lags L");
    app->add_option("--flow-lags", a->flow_lags, "Lagged flow controls");
    app->add_flag("--no-kernel", a->no_kernel, "Skip the exponential-decay fit");
    app->add_flag("--no-distributed-lag", a->no_lags, "Skip the unrestricted distributed lag");
    app->add_option("--out", a->out, "Output directory (kernel_fit.json, kernel_cumulative.csv)")->required();
    return [a] {
        ChasingKernelOptions o;
        o.max_lag = a->lags;
        o.flow_lags = a->flow_lags;
        if (!a->reg.fe.empty()) o.fixed_effects = parse_fixed_effects(a->reg.fe);
        if (!a->reg.cluster.empty()) o.clusters = parse_clusters(a->reg.cluster);
        o.sample = a->reg.sample;
        o.fit_kernel = !a->no_kernel;
        o.distributed_lag = !a->no_lags;
        if (a->no_kernel && a->no_lags) throw ValidationError("--no-kernel and --no-distributed-lag leave nothing to estimate");
        const MarketPanel panel = a->panel.load();
        const auto r = estimate_chasing_kernel(panel, o);
        ensure_directory(a->out);
        nlohmann::ordered_json doc;
        doc["schema_version"] = kSchemaVersion;
        doc["kind"] = "chasing_kernel";
        doc["lags"] = a->lags;
        doc["distributed_lag"] = r.lags ? fit_json(r.lags->fit) : nlohmann::ordered_json(nullptr);
        doc["kernel"] = r.kernel ? kernel_json(*r.kernel) : nlohmann::ordered_json(nullptr);
        write_json(fs::path(a->out) / "kernel_fit.json", doc);
        if (r.lags) write_cumulative(fs::path(a->out) / "kernel_cumulative.csv", *r.lags, r.cumulative);
    };
}

Action cmd_decompose(CLI::App* app) {
    struct A {
        PanelArgs panel;
        LiquidityArgs liq;
        ImpactArgs imp;
        DecomposeArgs dec;
        int horizon = 1, size_groups = 5;
        double conc_share = 0.10;
        bool own = false;
        std::string out;
    };
    auto a = std::make_shared<A>();
    a->panel.add(app);
    a->liq.add(app);
    a->imp.add(app);
    a->dec.add(app);
    app->add_option("--horizon", a->horizon, "Days per block in the variance decomposition");
    app->add_option("--size-groups", a->size_groups, "Size groups in the variance decomposition");
    app->add_option("--conc-share", a->conc_share, "Concentrated share per size group");
    app->add_flag("--own-impact", a->own, "Variance share of own impact instead of total impact");
    app->add_option("--out", a->out, "Output directory (decomposition.csv, variance_funds.csv, variance_cells.csv)")->required();
    return [a] {
        const auto p = build_pipeline(a->panel, a->liq, a->imp, a->dec);
        const auto& panel = p->panel;
        ensure_directory(a->out);
        const auto dates = panel.dates();
        {
            CsvWriter w(fs::path(a->out) / "decomposition.csv",
                        {"date", "fund_id", "ret", "ret_impact", "ret_orth", "ret_tilde", "ret_tilde_impact", "ret_tilde_orth"});
            for (Index t = 0; t < panel.n_days(); ++t)
                for (Index f = 0; f < panel.n_funds(); ++f) {
                    if (!panel.fund(f, t).present) continue;
                    const auto& d = p->dec;
                    w << dates[t] << panel.fund_ids()[f] << d.ret(f, t) << d.impact(f, t) << d.orth(f, t) << d.ret_tilde(f, t)
                      << d.impact_tilde(f, t) << d.orth_tilde(f, t);
                    w.end_row();
                }
            w.close();
        }
        VarianceOptions vo;
        vo.horizon = a->horizon;
        vo.theta = p->params.theta;
        vo.total_impact = !a->own;
        vo.size_groups = a->size_groups;
        vo.concentrated_share = a->conc_share;
        const auto vd = variance_decomposition(panel, p->table, p->impact, vo);
        {
            CsvWriter w(fs::path(a->out) / "variance_funds.csv", {"fund_id", "share", "mean_size", "mean_conc", "size_group", "concentrated"});
            for (const auto& v : vd.funds) {
                w << panel.fund_ids()[v.fund] << v.share << v.mean_size << v.mean_conc << v.size_group << (v.concentrated ? 1 : 0);
                w.end_row();
            }
            w.close();
        }
        CsvWriter w(fs::path(a->out) / "variance_cells.csv", {"size_group", "concentrated", "other"});
        for (std::size_t g = 0; g < vd.concentrated_cells.size(); ++g) {
            w << g << vd.concentrated_cells[g] << (g < vd.other_cells.size() ? vd.other_cells[g] : kMissing);
            w.end_row();
        }
        w.close();
    };
}

Action cmd_chase(CLI::App* app) {
    struct A {
        PanelArgs panel;
        LiquidityArgs liq;
        ImpactArgs imp;
        DecomposeArgs dec;
        RegressionArgs reg;
        int flow_lags = 5;
        std::string out;
    };
    auto a = std::make_shared<A>();
    a->panel.add(app);
    a->liq.add(app);
    a->imp.add(app);
    a->dec.add(app);
    a->reg.add(app, "time", "day,fund");
    app->add_option("--flow-lags", a->flow_lags, "Lagged flow controls");
    app->add_option("--out", a->out, "Fit output file")->required();
    return [a] {
        const auto p = build_pipeline(a->panel, a->liq, a->imp, a->dec);
        const auto r = chasing_regression(p->panel, p->dec, chasing_options(a->reg, a->flow_lags));
        nlohmann::ordered_json doc;
        doc["schema_version"] = kSchemaVersion;
        doc["kind"] = "chasing";
        doc["lambda_beta"] = a->dec.lambda_beta;
        doc["lags"] = a->dec.lags;
        doc["decomposed"] = fit_json(r.decomposed);
        doc["benchmark"] = fit_json(r.benchmark);
        if (r.equality)
            doc["equality"] = {{"statistic", r.equality->statistic}, {"p_value", r.equality->p_value}};
        else
            doc["equality"] = nullptr;
        write_json(a->out, doc);
    };
}

Action cmd_ponzi(CLI::App* app) {
    struct A {
        PanelArgs panel;
        LiquidityArgs liq;
        ImpactArgs imp;
        DecomposeArgs dec;
        RegressionArgs reg;
        PonziArgs ponzi;
        std::string out;
    };
    auto a = std::make_shared<A>();
    a->panel.add(app);
    a->liq.add(app);
    a->imp.add(app);
    a->dec.add(app);
    a->reg.add(app, "time", "day,fund");
    a->ponzi.add(app);
    app->add_option("--out", a->out, "Output directory (ponzi.csv, ponzi_daily.csv)")->required();
    return [a] {
        const auto p = build_pipeline(a->panel, a->liq, a->imp, a->dec);
        const PonziSeries ponzi = a->ponzi.series(*p, a->reg);
        ensure_directory(a->out);
        write_ponzi(a->out, *p, ponzi);
    };
}

Action cmd_sort(CLI::App* app) {
    struct A {
        PanelArgs panel;
        LiquidityArgs liq;
        std::string key = "flow", out;
        int buckets = 10, min_funds = 10;
        double top = 0.10;
    };
    auto a = std::make_shared<A>();
    a->panel.add(app);
    a->liq.add(app);
    app->add_option("--key", a->key, "Sort key: flow | flow-over-liquidity");
    app->add_option("--buckets", a->buckets, "Number of flow buckets");
    app->add_option("--top", a->top, "Share of funds in the high-illiquidity group");
    app->add_option("--min-funds", a->min_funds, "Dates with fewer funds are skipped");
    app->add_option("--out", a->out, "Sort table CSV")->required();
    return [a] {
        SortOptions o;
        if (a->key == "flow")
            o.key = SortKey::Flow;
        else if (a->key == "flow-over-liquidity")
            o.key = SortKey::FlowOverLiquidity;
        else
            throw ValidationError("--key must be flow or flow-over-liquidity");
        o.buckets = a->buckets;
        o.split_top_share = a->top;
        o.min_funds = a->min_funds;
        const MarketPanel panel = a->panel.load();
        const LiquidityTable table = a->liq.table(panel);
        const SortTable s = flow_decile_sort(panel, table, o);
        CsvWriter w(a->out, {"group", "bucket", "raw", "excess", "adjusted", "count"});
        auto emit = [&](const char* group, const std::vector<SortCell>& cells) {
            for (std::size_t b = 0; b < cells.size(); ++b) {
                w << group << b + 1 << cells[b].raw << cells[b].excess << cells[b].adjusted << cells[b].count;
                w.end_row();
            }
        };
        emit("high", s.high);
        emit("rest", s.rest);
        w.close();
        auto trend = [](const std::vector<SortCell>& cells) {
            std::vector<double> v;
            for (const auto& c : cells) v.push_back(c.adjusted);
            return rank_trend(v);
        };
        std::cerr << "sort: dates used " << s.dates_used << ", skipped " << s.dates_skipped << "; rank trend high "
                  << format_double(trend(s.high)) << ", rest " << format_double(trend(s.rest)) << '\n';
    };
}

Action cmd_bubbles(CLI::App* app) {
    struct A {
        PanelArgs panel;
        LiquidityArgs liq;
        ImpactArgs imp;
        DecomposeArgs dec;
        RegressionArgs reg;
        PonziArgs ponzi;
        BubbleOptions bub;
        std::string out;
    };
    auto a = std::make_shared<A>();
    a->panel.add(app);
    a->liq.add(app);
    a->imp.add(app);
    a->dec.add(app);
    a->reg.add(app, "time", "day,fund");
    a->ponzi.add(app);
    app->add_option("--runup", a->bub.runup_threshold, "Excess cumulative return defining a run-up");
    app->add_option("--window", a->bub.window, "Run-up window in days");
    app->add_option("--top", a->bub.top_share, "Share of run-up events with the largest Ponzi flow labelled bubbles");
    app->add_option("--horizon", a->bub.horizon, "Post-event days");
    app->add_flag("--full-history", a->bub.full_history_ponzi, "Rank on Ponzi flow over the full history up to the event");
    app->add_flag("--balanced", a->bub.balanced, "Average only over events observed at every offset");
    app->add_option("--out", a->out, "Output directory (bubble_events.csv, bubble_paths.csv, ponzi.csv, ponzi_daily.csv)")->required();
    return [a] {
        const auto p = build_pipeline(a->panel, a->liq, a->imp, a->dec);
        const PonziSeries ponzi = a->ponzi.series(*p, a->reg);
        const BubbleResult r = runup_and_bubble(p->panel, ponzi, a->bub);
        ensure_directory(a->out);
        write_ponzi(a->out, *p, ponzi);
        const auto dates = p->panel.dates();
        {
            CsvWriter w(fs::path(a->out) / "bubble_events.csv",
                        {"date", "fund_id", "excess_runup", "cumulative_ponzi", "bubble", "post_return"});
            for (const auto& e : r.events) {
                w << dates[e.day] << p->panel.fund_ids()[e.fund] << e.excess_runup << e.cumulative_ponzi << (e.bubble ? 1 : 0) << e.post_return;
                w.end_row();
            }
            w.close();
        }
        CsvWriter w(fs::path(a->out) / "bubble_paths.csv", {"offset", "runup", "bubble"});
        for (std::size_t k = 0; k < r.offsets.size(); ++k) {
            w << r.offsets[k] << r.runup_path[k] << r.bubble_path[k];
            w.end_row();
        }
        w.close();
        std::cerr << "bubbles: " << r.events.size() << " run-up events; post-event return run-up " << format_double(r.runup_post)
                  << ", bubble " << format_double(r.bubble_post) << '\n';
    };
}

Action cmd_summarize(CLI::App* app) {
    struct A {
        PanelArgs panel;
        LiquidityArgs liq;
        std::string out;
    };
    auto a = std::make_shared<A>();
    a->panel.add(app);
    a->liq.add(app);
    app->add_option("--out", a->out, "Summary CSV")->required();
    return [a] {
        const MarketPanel panel = a->panel.load();
        const LiquidityTable table = a->liq.table(panel);
        const auto rows = summarize(panel, table);
        CsvWriter w(a->out, {"variable", "count", "median", "p5", "p95"});
        for (const auto& r : rows) {
            w << r.variable << r.count << r.median << r.p5 << r.p95;
            w.end_row();
        }
        w.close();
    };
}

Action cmd_recovery(CLI::App* app) {
    struct A {
        std::string config, out, estimators = "impact";
        std::vector<std::string> sets;
        std::uint64_t first_seed = 1;
        int seeds = 50, max_lag = 40, lags = 200;
        bool estimate_theta = false;
    };
    auto a = std::make_shared<A>();
    app->add_option("--config", a->config, "Simulator config (key = value lines)");
    app->add_option("--set", a->sets, "Config override KEY=VALUE (repeatable)");
    app->add_option("--first-seed", a->first_seed, "First seed");
    app->add_option("--seeds", a->seeds, "Number of seeds");
    app->add_option("--estimators", a->estimators, "Comma list of impact, reversal, kernel, chase");
    app->add_option("--max-lag", a->max_lag, "Reversal lags");
    app->add_option("--lags", a->lags, "Chasing-kernel lags");
    app->add_flag("--estimated-theta", a->estimate_theta, "Decompose chase returns with the estimated theta");
    app->add_option("--out", a->out, "Output directory (recovery.csv, recovery_draws.csv)")->required();
    return [a] {
        const SimConfig cfg = load_sim_config(a->config, a->sets);
        RecoveryOptions o;
        o.first_seed = a->first_seed;
        o.seeds = a->seeds;
        o.estimators.clear();
        std::stringstream ss(a->estimators);
        std::string item;
        while (std::getline(ss, item, ',')) o.estimators.push_back(parse_estimator(item));
        if (o.estimators.empty()) throw ValidationError("--estimators is empty");
        o.reversal.max_lag = a->max_lag;
        o.kernel.max_lag = a->lags;
        o.decompose_with_estimate = a->estimate_theta;
        const RecoveryReport rep = recovery_suite(cfg, o);
        ensure_directory(a->out);
        {
            CsvWriter w(fs::path(a->out) / "recovery.csv",
                        {"estimator", "parameter", "truth", "n", "mean", "median", "bias", "relative_bias", "coverage", "rejection"});
            for (const auto& s : rep.stats) {
                w << s.estimator << s.parameter << s.truth << s.n << s.mean << s.median << s.bias << s.relative_bias << s.coverage << s.rejection;
                w.end_row();
            }
            w.close();
        }
        CsvWriter w(fs::path(a->out) / "recovery_draws.csv", {"estimator", "parameter", "seed", "estimate", "se", "p_value"});
        for (const auto& s : rep.stats)
            for (std::size_t k = 0; k < rep.seeds.size(); ++k) {
                w << s.estimator << s.parameter << static_cast<long long>(rep.seeds[k]) << s.estimates[k] << s.std_errors[k] << s.p_values[k];
                w.end_row();
            }
        w.close();
    };
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"flowlab: fund-flow price impact toolkit", "flowlab"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    struct Entry {
        const char* name;
        const char* about;
        Action (*make)(CLI::App*);
    };
    const Entry entries[] = {
        {"simulate", "Generate a synthetic panel with known impact and chasing", cmd_simulate},
        {"illiquidity", "Fund and position illiquidity, concentration and size", cmd_illiquidity},
        {"impact", "Self-inflated returns and arbitrage-induced trading", cmd_impact},
        {"estimate-impact", "Panel regression of returns on flow times illiquidity", cmd_estimate_impact},
        {"estimate-reversal", "Distributed-lag impact reversal and its decay kernel", cmd_estimate_reversal},
        {"estimate-kernel", "Return-chasing kernel of flows", cmd_estimate_kernel},
        {"decompose", "Split returns into impact and remainder; variance shares", cmd_decompose},
        {"chase", "Flow-chasing regression on decomposed weighted returns", cmd_chase},
        {"ponzi", "Ponzi flows, returns and wealth reallocation", cmd_ponzi},
        {"sort", "Flow-bucket portfolio sorts by illiquidity group", cmd_sort},
        {"bubbles", "Run-up and bubble event study", cmd_bubbles},
        {"summarize", "Summary statistics of a panel", cmd_summarize},
        {"recovery", "Parameter recovery over simulated seeds", cmd_recovery},
    };
    std::vector<std::pair<CLI::App*, Action>> actions;
    for (const auto& e : entries) {
        CLI::App* sub = app.add_subcommand(e.name, e.about);
        actions.emplace_back(sub, e.make(sub));
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().back()->help());
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        std::cerr << (subs.empty() ? app.help() : subs.back()->help());
        return 2;
    }

    try {
        for (auto& [sub, action] : actions)
            if (sub->parsed()) action();
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::bad_alloc&) {
        std::cerr << "error: out of memory\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace flowlab
