#include "flowlab/nlls.hpp"
#include "flowlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace flowlab {

void ExpDecayDesign::validate() const {
    const auto n = static_cast<std::size_t>(y.size());
    if (static_cast<std::size_t>(linear.rows()) != n && linear.cols() > 0)
        throw ValidationError("kernel design: linear block has wrong row count");
    if (static_cast<std::size_t>(linear.cols()) != linear_names.size())
        throw ValidationError("kernel design: linear names do not match");
    if (base.size() != n) throw ValidationError("kernel design: base index has wrong length");
    if (first_lag < 0 || last_lag < first_lag) throw ValidationError("kernel design: bad lag range");
    for (std::size_t i = 0; i < n; ++i) {
        if (base[i] < static_cast<std::size_t>(last_lag) || base[i] >= series.size())
            throw ValidationError("kernel design: lag window leaves the series");
        for (int s = first_lag; s <= last_lag; ++s)
            if (!std::isfinite(series[base[i] - static_cast<std::size_t>(s)]))
                throw ValidationError("kernel design: missing lagged value");
    }
    for (const auto& f : fixed_effects)
        if (f.codes.size() != n) throw ValidationError("kernel design: fixed effect has wrong length");
    for (const auto& c : clusters)
        if (c.codes.size() != n) throw ValidationError("kernel design: cluster has wrong length");
}

void exp_decay_composite(const ExpDecayDesign& d, double lambda, Eigen::VectorXd& g, Eigen::VectorXd& dg) {
    const Index n = d.y.size();
    const int m = d.last_lag - d.first_lag + 1;
    std::vector<double> w(static_cast<std::size_t>(m)), k(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) {
        w[static_cast<std::size_t>(j)] = std::exp(-lambda * j);
        k[static_cast<std::size_t>(j)] = -j * w[static_cast<std::size_t>(j)];
    }
    g.resize(n);
    dg.resize(n);
    for (Index i = 0; i < n; ++i) {
        const double* x = d.series.data() + d.base[static_cast<std::size_t>(i)] - d.first_lag;
        double a = 0.0, b = 0.0;
        for (int j = 0; j < m; ++j) {
            const double v = *(x - j);
            a += w[static_cast<std::size_t>(j)] * v;
            b += k[static_cast<std::size_t>(j)] * v;
        }
        g[i] = a;
        dg[i] = b;
    }
}

Index KernelFit::index(const std::string& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw EstimationError("no kernel parameter named " + name);
    return it - names.begin();
}

namespace {

struct Problem {
    const ExpDecayDesign& d;
    const Absorber& absorber;
    Eigen::VectorXd y;       // absorbed
    Eigen::MatrixXd linear;  // absorbed
    Index p_lin;

    // Absorbed composite and derivative.
    void composite(double lambda, Eigen::VectorXd& g, Eigen::VectorXd& dg) const {
        exp_decay_composite(d, lambda, g, dg);
        if (!absorber.empty()) {
            Eigen::MatrixXd both(g.size(), 2);
            both.col(0) = g;
            both.col(1) = dg;
            absorber.apply(both);
            g = both.col(0);
            dg = both.col(1);
        }
    }

    Eigen::VectorXd residual(const Eigen::VectorXd& theta, const Eigen::VectorXd& g) const {
        Eigen::VectorXd r = y - theta[p_lin] * g;
        if (p_lin > 0) r -= linear * theta.head(p_lin);
        return r;
    }

    Eigen::MatrixXd jacobian(const Eigen::VectorXd& theta, const Eigen::VectorXd& g, const Eigen::VectorXd& dg) const {
        Eigen::MatrixXd j(y.size(), p_lin + 2);
        if (p_lin > 0) j.leftCols(p_lin) = linear;
        j.col(p_lin) = g;
        j.col(p_lin + 1) = theta[p_lin] * dg;
        return j;
    }
};

double max_cosine(const Eigen::MatrixXd& j, const Eigen::VectorXd& r) {
    const double rn = r.norm();
    if (rn == 0.0) return 0.0;
    double worst = 0.0;
    for (Index c = 0; c < j.cols(); ++c) {
        const double jn = j.col(c).norm();
        if (jn == 0.0) continue;
        worst = std::max(worst, std::abs(j.col(c).dot(r)) / (jn * rn));
    }
    return worst;
}

struct RunResult {
    Eigen::VectorXd theta;
    double ssr = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string note;
};

RunResult gauss_newton(const Problem& pb, double lambda0, const NllsOptions& opt) {
    RunResult out;
    const Index p = pb.p_lin + 2;
    Eigen::VectorXd g, dg;
    pb.composite(lambda0, g, dg);
    // Linear parameters by least squares at the starting decay.
    Eigen::MatrixXd lin(pb.y.size(), pb.p_lin + 1);
    if (pb.p_lin > 0) lin.leftCols(pb.p_lin) = pb.linear;
    lin.col(pb.p_lin) = g;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr0(lin);
    Eigen::VectorXd theta(p);
    theta.head(pb.p_lin + 1) = qr0.solve(pb.y);
    theta[p - 1] = lambda0;
    Eigen::VectorXd r = pb.residual(theta, g);
    double ssr = r.squaredNorm();

    for (int it = 1; it <= opt.max_iterations; ++it) {
        out.iterations = it;
        const Eigen::MatrixXd j = pb.jacobian(theta, g, dg);
        if (max_cosine(j, r) < opt.gradient_tolerance) {
            out.converged = true;
            break;
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(j);
        if (qr.rank() < p) {
            out.note = "singular Jacobian";
            break;
        }
        const Eigen::VectorXd step = qr.solve(r);
        double alpha = 1.0;
        bool improved = false;
        Eigen::VectorXd cand, cg, cdg, cr;
        double cssr = 0.0;
        for (int h = 0; h <= opt.max_halvings; ++h, alpha *= 0.5) {
            cand = theta + alpha * step;
            if (!(cand[p - 1] > 0.0) || !std::isfinite(cand[p - 1])) continue;
            pb.composite(cand[p - 1], cg, cdg);
            cr = pb.residual(cand, cg);
            cssr = cr.squaredNorm();
            if (cssr <= ssr) {
                improved = true;
                break;
            }
        }
        if (!improved) {
            // No descent along the Gauss-Newton direction: accept as stationary
            // only if the gradient is already negligible relative to the fit.
            out.converged = max_cosine(j, r) < 1e-6;
            if (!out.converged) out.note = "step halving exhausted";
            break;
        }
        const double rel = (ssr - cssr) / std::max(ssr, 1e-300);
        theta = cand;
        g = cg;
        dg = cdg;
        r = cr;
        ssr = cssr;
        if (rel < opt.rel_ssr_tolerance) {
            out.converged = true;
            break;
        }
    }
    if (!out.converged && out.note.empty()) out.note = "iteration cap reached";
    out.theta = theta;
    out.ssr = ssr;
    return out;
}

}  // namespace

KernelFit fit_exp_decay(const ExpDecayDesign& design, const NllsOptions& options) {
    design.validate();
    const Index n = design.y.size();
    const Index p_lin = design.linear.cols();
    const Index p = p_lin + 2;
    if (n <= p) throw EstimationError("kernel fit needs more observations than parameters");
    if (options.lambda_grid.empty()) throw ValidationError("kernel fit: empty starting grid");

    Absorber absorber(design.fixed_effects, options.absorb);
    Problem pb{design, absorber, design.y, design.linear, p_lin};
    if (!absorber.empty()) {
        Eigen::MatrixXd all(n, p_lin + 1);
        all.col(0) = design.y;
        if (p_lin > 0) all.rightCols(p_lin) = design.linear;
        absorber.apply(all);
        pb.y = all.col(0);
        pb.linear = all.rightCols(p_lin);
    }

    KernelFit fit;
    std::optional<RunResult> best;
    for (double l0 : options.lambda_grid) {
        StartDiagnostics diag;
        diag.lambda_start = l0;
        try {
            RunResult rr = gauss_newton(pb, l0, options);
            diag.ssr = rr.ssr;
            diag.iterations = rr.iterations;
            diag.converged = rr.converged;
            diag.note = rr.note;
            if (rr.converged && (!best || rr.ssr < best->ssr)) best = std::move(rr);
        } catch (const Error& e) {
            diag.note = e.what();
        }
        fit.starts.push_back(diag);
    }
    if (!best) {
        std::ostringstream msg;
        msg << "exponential-decay fit did not converge from any start:";
        for (const auto& s : fit.starts)
            msg << " [lambda0=" << s.lambda_start << " ssr=" << s.ssr << " iter=" << s.iterations << " " << s.note << "]";
        throw EstimationError(msg.str());
    }

    fit.names = design.linear_names;
    fit.names.push_back(design.amplitude_name);
    fit.names.push_back(design.decay_name);
    fit.params = best->theta;
    fit.ssr = best->ssr;
    fit.n_obs = n;
    fit.iterations = best->iterations;
    fit.converged = true;

    Eigen::VectorXd g, dg;
    pb.composite(fit.params[p - 1], g, dg);
    const Eigen::VectorXd r = pb.residual(fit.params, g);
    const Eigen::MatrixXd j = pb.jacobian(fit.params, g, dg);
    fit.orthogonality = fit.ssr > 0 ? (j.transpose() * r).cwiseAbs().maxCoeff() / fit.ssr : 0.0;

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(j);
    if (qr.rank() < p) throw EstimationError("kernel fit: Jacobian is rank deficient at the solution");
    const Eigen::MatrixXd rr = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd rinv = rr.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
    const Eigen::MatrixXd bread = qr.colsPermutation() * (rinv * rinv.transpose()) * qr.colsPermutation().transpose();
    ClusteredCovariance cc = clustered_covariance(j, r, bread, design.clusters);
    fit.cov = cc.cov;
    fit.covariance_clipped = cc.clipped;
    fit.se = fit.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    return fit;
}

}  // namespace flowlab
