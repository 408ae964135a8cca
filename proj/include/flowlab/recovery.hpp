#pragma once

#include "flowlab/analytics.hpp"
#include "flowlab/estimation.hpp"
#include "flowlab/simulator.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace flowlab {

// Worker count from FLOWLAB_THREADS (default: hardware concurrency, at least 1).
int thread_count();

// Runs job(k) for k in [0, n) on up to `threads` workers. Each job writes only its own slot,
// so results never depend on the thread count. The first exception is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& job);

enum class Estimator { Impact, Reversal, Kernel, Chase };

struct RecoveryOptions {
    std::uint64_t first_seed = 1;
    int seeds = 50;
    std::vector<Estimator> estimators{Estimator::Impact};
    ImpactRegressionOptions impact{};
    ReversalOptions reversal{};
    ChasingKernelOptions kernel{};
    ChasingOptions chase{};
    bool decompose_with_estimate = false;  // theta for R^I: fund-level estimate instead of the truth
    int threads = 0;                       // 0: thread_count()
};

struct RecoveryStat {
    std::string estimator;
    std::string parameter;
    double truth = kMissing;
    std::vector<double> estimates;  // per seed, in seed order
    std::vector<double> std_errors;
    std::vector<double> p_values;   // two-sided, H0: parameter = 0 (Wald p for equality tests)
    int n = 0;
    double mean = kMissing;
    double median = kMissing;
    double bias = kMissing;
    double relative_bias = kMissing;
    double coverage = kMissing;    // share of 95% intervals containing the truth
    double rejection = kMissing;   // share of p-values below 5%
};

struct RecoveryReport {
    SimConfig config;
    std::vector<std::uint64_t> seeds;
    std::vector<RecoveryStat> stats;

    const RecoveryStat& stat(const std::string& estimator, const std::string& parameter) const;
};

// Per-seed estimates of every requested estimator. Errors are rethrown with the seed id.
RecoveryReport recovery_suite(const SimConfig& config, const RecoveryOptions& options = {});

Estimator parse_estimator(const std::string& name);
std::string estimator_name(Estimator e);

}  // namespace flowlab
