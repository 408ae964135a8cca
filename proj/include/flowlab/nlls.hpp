#pragma once

#include "flowlab/econometrics.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace flowlab {

// y = L gamma + a * sum_{s=first}^{last} exp(-lambda (s - first)) x_{t-s} + FE + e
//
// The lagged regressor is read from a dense per-entity series: observation i
// takes x_{t-s} = series[base[i] - s]. Every referenced element must be finite.
struct ExpDecayDesign {
    Eigen::VectorXd y;
    Eigen::MatrixXd linear;
    std::vector<std::string> linear_names;
    std::vector<double> series;
    std::vector<std::size_t> base;
    int first_lag = 0;
    int last_lag = 0;
    std::string amplitude_name = "a";
    std::string decay_name = "lambda";
    std::vector<Factor> fixed_effects;
    std::vector<Factor> clusters;

    void validate() const;
};

struct NllsOptions {
    std::vector<double> lambda_grid{0.005, 0.01, 0.05, 0.1, 0.3, 0.5, 1.0};
    int max_iterations = 200;
    int max_halvings = 50;
    double rel_ssr_tolerance = 1e-10;
    double gradient_tolerance = 1e-8;  // on Jacobian-residual cosines
    AbsorbOptions absorb{};
};

struct StartDiagnostics {
    double lambda_start = 0.0;
    double ssr = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string note;
};

struct KernelFit {
    std::vector<std::string> names;  // linear names, amplitude, decay
    Eigen::VectorXd params;
    Eigen::MatrixXd cov;
    Eigen::VectorXd se;
    double ssr = 0.0;
    Index n_obs = 0;
    int iterations = 0;
    bool converged = false;
    double orthogonality = 0.0;  // max |J' r| / SSR at the solution
    bool covariance_clipped = false;
    std::vector<StartDiagnostics> starts;

    double amplitude() const { return params[params.size() - 2]; }
    double decay() const { return params[params.size() - 1]; }
    Index index(const std::string& name) const;
    double estimate(const std::string& name) const { return params[index(name)]; }
    double std_error(const std::string& name) const { return se[index(name)]; }
};

// Gauss-Newton with step halving from every grid start; the converged fit of
// least SSR wins. Throws EstimationError with per-start diagnostics when no
// start converges. Covariance is the clustered sandwich on the Jacobian.
KernelFit fit_exp_decay(const ExpDecayDesign& design, const NllsOptions& options = {});

// Composite regressor g(lambda) and its derivative for each observation.
void exp_decay_composite(const ExpDecayDesign& design, double lambda, Eigen::VectorXd& g, Eigen::VectorXd& dg);

}  // namespace flowlab
