#include "flowlab/recovery.hpp"
#include "flowlab/error.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

namespace flowlab {

int thread_count() {
    if (const char* env = std::getenv("FLOWLAB_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& job) {
    threads = std::max(1, std::min<int>(threads, static_cast<int>(n)));
    if (threads <= 1) {
        for (std::size_t k = 0; k < n; ++k) job(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex m;
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t k = next++;
                if (k >= n) return;
                try {
                    job(k);
                } catch (...) {
                    std::lock_guard lock(m);
                    if (!error) error = std::current_exception();
                    next = n;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

Estimator parse_estimator(const std::string& name) {
    if (name == "impact") return Estimator::Impact;
    if (name == "reversal") return Estimator::Reversal;
    if (name == "kernel") return Estimator::Kernel;
    if (name == "chase") return Estimator::Chase;
    throw ValidationError("unknown estimator '" + name + "' (impact, reversal, kernel, chase)");
}

std::string estimator_name(Estimator e) {
    switch (e) {
        case Estimator::Impact: return "impact";
        case Estimator::Reversal: return "reversal";
        case Estimator::Kernel: return "kernel";
        case Estimator::Chase: return "chase";
    }
    return "";
}

const RecoveryStat& RecoveryReport::stat(const std::string& estimator, const std::string& parameter) const {
    for (const auto& s : stats)
        if (s.estimator == estimator && s.parameter == parameter) return s;
    throw ValidationError("recovery report has no " + estimator + "/" + parameter);
}

namespace {

struct Draw {
    std::string estimator, parameter;
    double truth = kMissing, estimate = kMissing, se = kMissing, p = kMissing;
};

double p_of(double est, double se) { return se > 0 && std::isfinite(se) ? normal_two_sided_p(est / se) : kMissing; }

std::vector<Draw> one_seed(const SimConfig& cfg, const RecoveryOptions& opt) {
    std::vector<Draw> out;
    const SimOutput sim = generate(cfg);
    const MarketPanel panel = sim.panel();
    LiquiditySpec spec;
    spec.eta = cfg.eta;
    const LiquidityTable table(panel, spec);
    const ImpactParams truth = cfg.impact_params();

    std::optional<RegressionFit> impact_fit;
    auto impact = [&]() -> const RegressionFit& {
        if (!impact_fit) impact_fit = estimate_impact(panel, table, opt.impact);
        return *impact_fit;
    };

    for (Estimator e : opt.estimators) {
        const std::string name = estimator_name(e);
        switch (e) {
            case Estimator::Impact: {
                const auto& fit = impact();
                const double est = fit.estimate("flow_x_illiq"), se = fit.std_error("flow_x_illiq");
                out.push_back({name, "theta", cfg.theta, est, se, p_of(est, se)});
                break;
            }
            case Estimator::Reversal: {
                const auto r = estimate_reversal(panel, table, opt.reversal);
                const int S = opt.reversal.max_lag;
                const auto& cp = r.cumulative.back();
                out.push_back({name, "cumulative", cumulative_kernel(truth, S), cp.sum, cp.se, p_of(cp.sum, cp.se)});
                if (r.kernel) {
                    const auto& k = *r.kernel;
                    const DecayKernel dk = truth.decay.value_or(DecayKernel{cfg.theta, 0.0, cfg.lambda_theta});
                    for (auto [par, tv] : {std::pair<const char*, double>{"theta0", dk.theta0}, {"theta1", dk.theta1}, {"lambda_theta", dk.lambda}}) {
                        const double est = k.estimate(par), se = k.std_error(par);
                        out.push_back({name, par, tv, est, se, p_of(est, se)});
                    }
                }
                break;
            }
            case Estimator::Kernel: {
                const auto r = estimate_chasing_kernel(panel, opt.kernel);
                if (!r.kernel) break;
                const auto& k = *r.kernel;
                const bool chasing = cfg.chase != ChaseMode::None;
                const double amp = chasing ? cfg.beta * exp_weights(cfg.lambda_beta, cfg.chase_lags)[0] : 0.0;
                out.push_back({name, "beta", amp, k.amplitude(), k.std_error("beta"), p_of(k.amplitude(), k.std_error("beta"))});
                out.push_back({name, "lambda_beta", chasing ? cfg.lambda_beta : kMissing, k.decay(), k.std_error("lambda_beta"),
                               p_of(k.decay(), k.std_error("lambda_beta"))});
                break;
            }
            case Estimator::Chase: {
                ImpactParams p = truth;
                if (opt.decompose_with_estimate) {
                    const double th = impact().estimate("flow_x_illiq");
                    if (p.decay) {
                        p.decay->theta0 = th;
                        p.theta = th;
                    } else {
                        p.theta = th;
                    }
                }
                const ImpactSeries series(panel, table, p);
                const DecomposedReturns dec(panel, series, cfg.lambda_beta, cfg.chase_lags);
                const auto r = chasing_regression(panel, dec, opt.chase);
                const double b1_truth = cfg.chase == ChaseMode::Observed ? cfg.beta : 0.0;
                const double b2_truth = cfg.chase == ChaseMode::None ? 0.0 : cfg.beta;
                if (auto k = r.decomposed.find("ret_tilde_impact")) {
                    const double est = r.decomposed.coef[*k], se = r.decomposed.se[*k];
                    out.push_back({name, "beta1", b1_truth, est, se, p_of(est, se)});
                } else {
                    out.push_back({name, "beta1", b1_truth, kMissing, kMissing, kMissing});
                }
                {
                    const double est = r.decomposed.estimate("ret_tilde_orth"), se = r.decomposed.std_error("ret_tilde_orth");
                    out.push_back({name, "beta2", b2_truth, est, se, p_of(est, se)});
                }
                {
                    const double est = r.benchmark.estimate("ret_tilde"), se = r.benchmark.std_error("ret_tilde");
                    out.push_back({name, "beta", b2_truth, est, se, p_of(est, se)});
                }
                if (r.equality)
                    out.push_back({name, "equality", kMissing, r.equality->statistic, kMissing, r.equality->p_value});
                else
                    out.push_back({name, "equality", kMissing, kMissing, kMissing, kMissing});
                break;
            }
        }
    }
    return out;
}

double median_of(std::vector<double> v) {
    if (v.empty()) return kMissing;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

RecoveryReport recovery_suite(const SimConfig& config, const RecoveryOptions& options) {
    if (options.seeds < 1) throw ValidationError("recovery: need at least one seed");
    config.validate();
    RecoveryReport report;
    report.config = config;
    for (int k = 0; k < options.seeds; ++k) report.seeds.push_back(options.first_seed + static_cast<std::uint64_t>(k));

    std::vector<std::vector<Draw>> slots(report.seeds.size());
    parallel_for(slots.size(), options.threads > 0 ? options.threads : thread_count(), [&](std::size_t k) {
        SimConfig cfg = config;
        cfg.seed = report.seeds[k];
        try {
            slots[k] = one_seed(cfg, options);
        } catch (const Error& e) {
            const std::string msg = "seed " + std::to_string(cfg.seed) + ": " + e.what();
            if (e.exit_code() == 2) throw ValidationError(msg);
            if (e.exit_code() == 4) throw IoError(msg);
            throw EstimationError(msg);
        }
    });

    // Stats keyed in first-seen order.
    std::vector<std::pair<std::string, std::string>> keys;
    for (const auto& slot : slots)
        for (const auto& d : slot)
            if (std::find(keys.begin(), keys.end(), std::pair{d.estimator, d.parameter}) == keys.end())
                keys.emplace_back(d.estimator, d.parameter);
    for (const auto& [est, par] : keys) {
        RecoveryStat st;
        st.estimator = est;
        st.parameter = par;
        for (const auto& slot : slots) {
            const Draw* hit = nullptr;
            for (const auto& d : slot)
                if (d.estimator == est && d.parameter == par) hit = &d;
            st.estimates.push_back(hit ? hit->estimate : kMissing);
            st.std_errors.push_back(hit ? hit->se : kMissing);
            st.p_values.push_back(hit ? hit->p : kMissing);
            if (hit) st.truth = hit->truth;
        }
        std::vector<double> ok;
        int covered = 0, with_se = 0, rejected = 0, with_p = 0;
        for (std::size_t k = 0; k < st.estimates.size(); ++k) {
            const double x = st.estimates[k], se = st.std_errors[k], p = st.p_values[k];
            if (!std::isfinite(x)) continue;
            ok.push_back(x);
            if (std::isfinite(se) && std::isfinite(st.truth)) {
                ++with_se;
                covered += std::abs(x - st.truth) <= 1.959963984540054 * se;
            }
            if (std::isfinite(p)) {
                ++with_p;
                rejected += p < 0.05;
            }
        }
        st.n = static_cast<int>(ok.size());
        if (!ok.empty()) {
            double sum = 0.0;
            for (double x : ok) sum += x;
            st.mean = sum / static_cast<double>(ok.size());
            st.median = median_of(ok);
            if (std::isfinite(st.truth)) {
                st.bias = st.mean - st.truth;
                if (st.truth != 0.0) st.relative_bias = st.bias / std::abs(st.truth);
            }
        }
        if (with_se > 0) st.coverage = static_cast<double>(covered) / with_se;
        if (with_p > 0) st.rejection = static_cast<double>(rejected) / with_p;
        report.stats.push_back(std::move(st));
    }
    return report;
}

}  // namespace flowlab
