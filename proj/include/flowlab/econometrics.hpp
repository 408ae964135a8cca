#pragma once

#include "flowlab/calendar.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace flowlab {

// Categorical variable with dense codes 0..n_groups-1.
struct Factor {
    std::string name;
    std::vector<Index> codes;
    Index n_groups = 0;
};

// Dense codes assigned in ascending label order.
Factor make_factor(std::string name, std::span<const std::int64_t> labels);
Factor interact(const Factor& a, const Factor& b);

struct PanelDesign {
    Eigen::VectorXd y;
    Eigen::MatrixXd x;
    std::vector<std::string> names;
    std::vector<Factor> fixed_effects;  // at most two
    std::vector<Factor> clusters;       // at most two; none means heteroskedasticity-robust
    bool intercept = false;             // only honoured without fixed effects

    void validate() const;
};

struct AbsorbOptions {
    double tolerance = 1e-8;
    int max_iterations = 100;
};

struct AbsorbedDesign {
    Eigen::VectorXd y;
    Eigen::MatrixXd x;
    int iterations = 0;
    double gap = 0.0;
    std::vector<Eigen::VectorXd> y_group_means;  // per fixed effect, accumulated over sweeps
};

// Within transformation. One factor: exact group demeaning. Two factors:
// alternating demeaning until the largest absolute change of a sweep drops
// below the tolerance. Throws EstimationError (carrying the last gap) when
// the iteration cap is hit.
AbsorbedDesign absorb_fixed_effects(const PanelDesign& design, const AbsorbOptions& options = {});

// Applies the same within transformation to arbitrary columns.
class Absorber {
public:
    Absorber(std::vector<Factor> factors, AbsorbOptions options = {});
    // Returns iterations used; throws EstimationError on non-convergence.
    int apply(Eigen::Ref<Eigen::MatrixXd> columns, double* gap = nullptr) const;
    bool empty() const { return factors_.empty(); }

private:
    std::vector<Factor> factors_;
    std::vector<std::vector<double>> counts_;
    AbsorbOptions options_;
};

struct ClusteredCovariance {
    Eigen::MatrixXd cov;
    bool clipped = false;
    std::vector<Index> n_groups;
};

// Sandwich bread * meat * bread with meat summed per cluster.
// Two dimensions: c_A V_A + c_B V_B - c_AB V_AB, c = G/(G-1) (N-1)/(N-K), the
// joint term using G = min(G_A, G_B). No clusters: HC1. Negative eigenvalues
// below -1e-12 are clipped to zero and flagged.
ClusteredCovariance clustered_covariance(const Eigen::MatrixXd& x, const Eigen::VectorXd& residuals,
                                         const Eigen::MatrixXd& bread, std::span<const Factor> clusters);

struct RegressionFit {
    std::vector<std::string> names;
    Eigen::VectorXd coef;
    Eigen::MatrixXd cov;
    Eigen::VectorXd se;
    Eigen::VectorXd t;
    double r2 = 0.0;
    double within_r2 = 0.0;
    double ssr = 0.0;
    Index n_obs = 0;
    std::vector<Index> n_clusters;
    int fe_iterations = 0;
    double fe_gap = 0.0;
    bool covariance_clipped = false;

    std::optional<Index> find(const std::string& name) const;
    Index index(const std::string& name) const;  // throws EstimationError
    double estimate(const std::string& name) const { return coef[index(name)]; }
    double std_error(const std::string& name) const { return se[index(name)]; }
    double t_stat(const std::string& name) const { return t[index(name)]; }
};

// Least squares after fixed-effect absorption with clustered covariance.
// Errors: N <= K, a cluster dimension with a single group, rank deficiency
// (message names the collinear columns).
RegressionFit ols_clustered(const PanelDesign& design, const AbsorbOptions& absorb = {});

struct WaldTest {
    double statistic = 0.0;
    double p_value = 1.0;
};

// H0: coef[a] == coef[b], chi-squared with one degree of freedom.
WaldTest wald_equal(const RegressionFit& fit, const std::string& a, const std::string& b);

struct CumulativePoint {
    double sum = 0.0;
    double se = 0.0;
};

// Partial sums of the named coefficients with se_k = sqrt(1' Omega_k 1).
std::vector<CumulativePoint> cumulative_coefficients(const RegressionFit& fit, std::span<const std::string> lag_order);

// cov(R_impact, R) / var(R) over pairs where both are present. Empty with
// fewer than 30 pairs or zero variance.
std::optional<double> variance_share(std::span<const double> impact, std::span<const double> total);

// ---------------------------------------------------------------------------
// Long panels with lags
// ---------------------------------------------------------------------------

// Named series over (entity, time) rows, canonically sorted by (entity, time).
class PanelFrame {
public:
    PanelFrame(std::vector<Index> entity, std::vector<Index> time);

    std::size_t rows() const { return entity_.size(); }
    Index entity(std::size_t row) const { return entity_[row]; }
    Index time(std::size_t row) const { return time_[row]; }

    // Values are given in the constructor's original row order.
    void add_series(const std::string& name, std::vector<double> values);
    void add_labels(const std::string& name, std::vector<std::int64_t> labels);

    const std::vector<double>& series(const std::string& name) const;
    const std::vector<std::int64_t>& labels(const std::string& name) const;
    bool has_series(const std::string& name) const { return series_.count(name) > 0; }

    // Row holding (entity(row), time(row) - lag); negative lag means a lead.
    std::optional<std::size_t> shifted_row(std::size_t row, int lag) const;
    double lagged(const std::string& name, std::size_t row, int lag) const;

private:
    std::vector<Index> entity_;
    std::vector<Index> time_;
    std::vector<std::size_t> order_;        // sorted position -> original row
    std::vector<std::size_t> block_begin_;  // per row: first row of its entity
    std::vector<std::size_t> block_end_;
    std::map<std::string, std::vector<double>> series_;
    std::map<std::string, std::vector<std::int64_t>> labels_;
};

struct LagTerm {
    std::string series;
    int first_lag = 0;
    int last_lag = 0;

    std::string column_name(int lag) const;
};

struct DesignSpec {
    std::string response;
    int response_lead = 0;                           // y taken at t + lead
    std::vector<LagTerm> terms;
    std::vector<LagTerm> required;                   // must be present, not added as columns
    std::vector<std::vector<std::string>> fixed_effects;  // each an interaction of label names
    std::vector<std::vector<std::string>> clusters;
    bool intercept = false;
    int min_entity_obs = 0;                          // entities with fewer rows are excluded
    std::vector<std::string> row_filter;             // label names that must be non-zero
};

struct BuiltDesign {
    PanelDesign design;
    std::vector<std::size_t> rows;  // frame rows used, in design order
};

// Listwise deletion: a row is kept only if the response and every lagged
// regressor are present. Throws EstimationError when nothing survives.
BuiltDesign build_design(const PanelFrame& frame, const DesignSpec& spec);

struct DistributedLagFit {
    RegressionFit fit;
    std::vector<std::string> lag_names;  // ordered lag 0..S
};

// y on lags 0..S of `series` plus the spec's own terms. Entities with fewer
// than S + 30 rows are excluded.
DistributedLagFit distributed_lag(const PanelFrame& frame, DesignSpec spec, const std::string& series, int max_lag,
                                  const AbsorbOptions& absorb = {});

double normal_two_sided_p(double z);

}  // namespace flowlab
