#include "flowlab/econometrics.hpp"
#include "flowlab/error.hpp"
#include "flowlab/panel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace flowlab {

Factor make_factor(std::string name, std::span<const std::int64_t> labels) {
    std::vector<std::int64_t> uniq(labels.begin(), labels.end());
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    Factor f;
    f.name = std::move(name);
    f.n_groups = static_cast<Index>(uniq.size());
    f.codes.resize(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        f.codes[i] = std::lower_bound(uniq.begin(), uniq.end(), labels[i]) - uniq.begin();
    return f;
}

Factor interact(const Factor& a, const Factor& b) {
    if (a.codes.size() != b.codes.size()) throw ValidationError("interacted factors differ in length");
    std::vector<std::int64_t> joint(a.codes.size());
    for (std::size_t i = 0; i < joint.size(); ++i) joint[i] = a.codes[i] * b.n_groups + b.codes[i];
    return make_factor(a.name + "*" + b.name, joint);
}

void PanelDesign::validate() const {
    const auto n = static_cast<std::size_t>(y.size());
    if (static_cast<std::size_t>(x.rows()) != n) throw ValidationError("design: X and y row counts differ");
    if (static_cast<std::size_t>(x.cols()) != names.size()) throw ValidationError("design: column names do not match X");
    if (fixed_effects.size() > 2) throw ValidationError("design: at most two fixed effects");
    if (clusters.size() > 2) throw ValidationError("design: at most two cluster dimensions");
    for (const auto& f : fixed_effects)
        if (f.codes.size() != n) throw ValidationError("design: fixed effect " + f.name + " has wrong length");
    for (const auto& c : clusters)
        if (c.codes.size() != n) throw ValidationError("design: cluster " + c.name + " has wrong length");
    if (!y.allFinite() || !x.allFinite()) throw ValidationError("design: non-finite values");
}

// ---------------------------------------------------------------------------

Absorber::Absorber(std::vector<Factor> factors, AbsorbOptions options) : factors_(std::move(factors)), options_(options) {
    for (const auto& f : factors_) {
        std::vector<double> c(static_cast<std::size_t>(f.n_groups), 0.0);
        for (Index g : f.codes) c[g] += 1.0;
        counts_.push_back(std::move(c));
    }
}

namespace {

// Subtracts group means of every column; returns the largest absolute change.
double demean(Eigen::Ref<Eigen::MatrixXd> m, const Factor& f, const std::vector<double>& counts,
              Eigen::VectorXd* y_means = nullptr) {
    const Index n = m.rows();
    double change = 0.0;
    std::vector<double> sums(counts.size());
    for (Index c = 0; c < m.cols(); ++c) {
        std::fill(sums.begin(), sums.end(), 0.0);
        for (Index i = 0; i < n; ++i) sums[f.codes[i]] += m(i, c);
        for (std::size_t g = 0; g < sums.size(); ++g) {
            sums[g] = counts[g] > 0 ? sums[g] / counts[g] : 0.0;
            change = std::max(change, std::abs(sums[g]));
        }
        for (Index i = 0; i < n; ++i) m(i, c) -= sums[f.codes[i]];
        if (y_means && c == 0)
            for (std::size_t g = 0; g < sums.size(); ++g) (*y_means)[static_cast<Index>(g)] += sums[g];
    }
    return change;
}

}  // namespace

int Absorber::apply(Eigen::Ref<Eigen::MatrixXd> columns, double* gap) const {
    if (factors_.empty()) return 0;
    if (factors_.size() == 1) {
        demean(columns, factors_[0], counts_[0]);
        if (gap) *gap = 0.0;
        return 1;
    }
    double change = 0.0;
    for (int it = 1; it <= options_.max_iterations; ++it) {
        change = demean(columns, factors_[0], counts_[0]);
        change = std::max(change, demean(columns, factors_[1], counts_[1]));
        if (change < options_.tolerance) {
            if (gap) *gap = change;
            return it;
        }
    }
    throw EstimationError("fixed-effect absorption did not converge in " + std::to_string(options_.max_iterations) +
                          " iterations (last change " + std::to_string(change) + ")");
}

AbsorbedDesign absorb_fixed_effects(const PanelDesign& design, const AbsorbOptions& options) {
    design.validate();
    AbsorbedDesign out;
    const Index n = design.y.size();
    Eigen::MatrixXd all(n, design.x.cols() + 1);
    all.col(0) = design.y;
    all.rightCols(design.x.cols()) = design.x;
    for (const auto& f : design.fixed_effects) out.y_group_means.push_back(Eigen::VectorXd::Zero(f.n_groups));

    if (design.fixed_effects.size() == 1) {
        std::vector<double> counts(static_cast<std::size_t>(design.fixed_effects[0].n_groups), 0.0);
        for (Index g : design.fixed_effects[0].codes) counts[g] += 1.0;
        demean(all, design.fixed_effects[0], counts, &out.y_group_means[0]);
        out.iterations = 1;
    } else if (design.fixed_effects.size() == 2) {
        std::vector<std::vector<double>> counts;
        for (const auto& f : design.fixed_effects) {
            std::vector<double> c(static_cast<std::size_t>(f.n_groups), 0.0);
            for (Index g : f.codes) c[g] += 1.0;
            counts.push_back(std::move(c));
        }
        bool done = false;
        double change = 0.0;
        for (int it = 1; it <= options.max_iterations; ++it) {
            change = demean(all, design.fixed_effects[0], counts[0], &out.y_group_means[0]);
            change = std::max(change, demean(all, design.fixed_effects[1], counts[1], &out.y_group_means[1]));
            if (change < options.tolerance) {
                out.iterations = it;
                out.gap = change;
                done = true;
                break;
            }
        }
        if (!done)
            throw EstimationError("fixed-effect absorption did not converge in " + std::to_string(options.max_iterations) +
                                  " iterations (last change " + std::to_string(change) + ")");
    }
    out.y = all.col(0);
    out.x = all.rightCols(design.x.cols());
    return out;
}

// ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXd cluster_meat(const Eigen::MatrixXd& scores, const Factor& f) {
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(f.n_groups, scores.cols());
    for (Index i = 0; i < scores.rows(); ++i) sums.row(f.codes[i]) += scores.row(i);
    return sums.transpose() * sums;
}

double small_sample(double groups, double n, double k) { return groups / (groups - 1.0) * (n - 1.0) / (n - k); }

}  // namespace

ClusteredCovariance clustered_covariance(const Eigen::MatrixXd& x, const Eigen::VectorXd& residuals,
                                         const Eigen::MatrixXd& bread, std::span<const Factor> clusters) {
    const double n = static_cast<double>(x.rows());
    const double k = static_cast<double>(x.cols());
    if (!(n > k)) throw EstimationError("clustered covariance needs more observations than parameters");
    const Eigen::MatrixXd scores = x.array().colwise() * residuals.array();
    ClusteredCovariance out;
    Eigen::MatrixXd meat;
    if (clusters.empty()) {
        meat = (n / (n - k)) * (scores.transpose() * scores);
    } else {
        for (const auto& c : clusters) {
            if (c.n_groups < 2) throw EstimationError("cluster dimension " + c.name + " has a single group");
            out.n_groups.push_back(c.n_groups);
        }
        const auto& a = clusters[0];
        meat = small_sample(static_cast<double>(a.n_groups), n, k) * cluster_meat(scores, a);
        if (clusters.size() == 2) {
            const auto& b = clusters[1];
            const Factor ab = interact(a, b);
            const double g_min = static_cast<double>(std::min(a.n_groups, b.n_groups));
            meat += small_sample(static_cast<double>(b.n_groups), n, k) * cluster_meat(scores, b);
            meat -= small_sample(g_min, n, k) * cluster_meat(scores, ab);
        }
    }
    Eigen::MatrixXd cov = bread * meat * bread;
    cov = 0.5 * (cov + cov.transpose());
    if (clusters.size() == 2) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        Eigen::VectorXd ev = es.eigenvalues();
        if (ev.minCoeff() < -1e-12) {
            out.clipped = true;
            ev = ev.cwiseMax(0.0);
            cov = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
        }
    }
    out.cov = std::move(cov);
    return out;
}

std::optional<Index> RegressionFit::find(const std::string& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return it - names.begin();
}

Index RegressionFit::index(const std::string& name) const {
    auto i = find(name);
    if (!i) throw EstimationError("no coefficient named " + name);
    return *i;
}

RegressionFit ols_clustered(const PanelDesign& input, const AbsorbOptions& absorb) {
    input.validate();
    PanelDesign design = input;
    if (design.intercept && design.fixed_effects.empty()) {
        design.x.conservativeResize(Eigen::NoChange, design.x.cols() + 1);
        design.x.col(design.x.cols() - 1).setOnes();
        design.names.push_back("const");
    }
    const Index n = design.y.size();
    const Index k = design.x.cols();
    if (k == 0) throw EstimationError("regression has no regressors");
    if (n <= k) throw EstimationError("regression needs more observations (" + std::to_string(n) + ") than regressors (" +
                                      std::to_string(k) + ")");
    for (const auto& c : design.clusters)
        if (c.n_groups < 2) throw EstimationError("cluster dimension " + c.name + " has a single group");

    const AbsorbedDesign ad = absorb_fixed_effects(design, absorb);

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(ad.x);
    qr.setThreshold(1e-10);
    if (qr.rank() < k) {
        std::string names;
        const auto& perm = qr.colsPermutation().indices();
        for (Index r = qr.rank(); r < k; ++r) {
            if (!names.empty()) names += ", ";
            names += design.names[static_cast<std::size_t>(perm[r])];
        }
        throw EstimationError("design is rank deficient after absorbing fixed effects; collinear columns: " + names);
    }

    RegressionFit fit;
    fit.names = design.names;
    fit.coef = qr.solve(ad.y);
    const Eigen::VectorXd resid = ad.y - ad.x * fit.coef;

    const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd rinv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
    const Eigen::MatrixXd inner = rinv * rinv.transpose();
    const Eigen::MatrixXd bread = qr.colsPermutation() * inner * qr.colsPermutation().transpose();

    ClusteredCovariance cc = clustered_covariance(ad.x, resid, bread, design.clusters);
    fit.cov = std::move(cc.cov);
    fit.covariance_clipped = cc.clipped;
    fit.n_clusters = std::move(cc.n_groups);
    fit.se = fit.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    fit.t = fit.coef.cwiseQuotient(fit.se);
    fit.ssr = resid.squaredNorm();
    fit.n_obs = n;
    fit.fe_iterations = ad.iterations;
    fit.fe_gap = ad.gap;
    const double y_mean = design.y.mean();
    const double tss = (design.y.array() - y_mean).square().sum();
    const double within_tss = design.fixed_effects.empty() && !design.intercept ? tss : ad.y.squaredNorm();
    fit.r2 = tss > 0 ? 1.0 - fit.ssr / tss : 0.0;
    fit.within_r2 = within_tss > 0 ? 1.0 - fit.ssr / within_tss : 0.0;
    return fit;
}

double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

WaldTest wald_equal(const RegressionFit& fit, const std::string& a, const std::string& b) {
    const Index ia = fit.index(a), ib = fit.index(b);
    const double diff = fit.coef[ia] - fit.coef[ib];
    const double var = fit.cov(ia, ia) + fit.cov(ib, ib) - 2.0 * fit.cov(ia, ib);
    if (!(var > 0.0)) throw EstimationError("Wald test: non-positive variance of the difference");
    WaldTest w;
    w.statistic = diff * diff / var;
    w.p_value = std::erfc(std::sqrt(w.statistic / 2.0));
    return w;
}

std::vector<CumulativePoint> cumulative_coefficients(const RegressionFit& fit, std::span<const std::string> lag_order) {
    std::vector<Index> idx;
    for (const auto& n : lag_order) idx.push_back(fit.index(n));
    std::vector<CumulativePoint> out;
    double sum = 0.0, var = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        sum += fit.coef[idx[k]];
        // 1' Omega_k 1 grows by the new diagonal term plus twice its covariances with earlier lags.
        var += fit.cov(idx[k], idx[k]);
        for (std::size_t j = 0; j < k; ++j) var += 2.0 * fit.cov(idx[k], idx[j]);
        out.push_back({sum, std::sqrt(std::max(var, 0.0))});
    }
    return out;
}

std::optional<double> variance_share(std::span<const double> impact, std::span<const double> total) {
    if (impact.size() != total.size()) throw ValidationError("variance share: series lengths differ");
    double n = 0, mi = 0, mt = 0;
    for (std::size_t i = 0; i < impact.size(); ++i)
        if (std::isfinite(impact[i]) && std::isfinite(total[i])) {
            n += 1;
            mi += impact[i];
            mt += total[i];
        }
    if (n < 30) return std::nullopt;
    mi /= n;
    mt /= n;
    double cov = 0, var = 0;
    for (std::size_t i = 0; i < impact.size(); ++i)
        if (std::isfinite(impact[i]) && std::isfinite(total[i])) {
            cov += (impact[i] - mi) * (total[i] - mt);
            var += (total[i] - mt) * (total[i] - mt);
        }
    if (!(var > 0)) return std::nullopt;
    return cov / var;
}

// ---------------------------------------------------------------------------

PanelFrame::PanelFrame(std::vector<Index> entity, std::vector<Index> time) {
    if (entity.size() != time.size()) throw ValidationError("panel frame: entity and time lengths differ");
    order_.resize(entity.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
        return entity[a] != entity[b] ? entity[a] < entity[b] : time[a] < time[b];
    });
    entity_.resize(entity.size());
    time_.resize(time.size());
    for (std::size_t r = 0; r < order_.size(); ++r) {
        entity_[r] = entity[order_[r]];
        time_[r] = time[order_[r]];
        if (r > 0 && entity_[r] == entity_[r - 1] && time_[r] == time_[r - 1])
            throw ValidationError("panel frame: duplicate (entity, time) row");
    }
    block_begin_.resize(rows());
    block_end_.resize(rows());
    std::size_t b = 0;
    while (b < rows()) {
        std::size_t e = b;
        while (e < rows() && entity_[e] == entity_[b]) ++e;
        for (std::size_t r = b; r < e; ++r) {
            block_begin_[r] = b;
            block_end_[r] = e;
        }
        b = e;
    }
}

void PanelFrame::add_series(const std::string& name, std::vector<double> values) {
    if (values.size() != rows()) throw ValidationError("panel frame: series " + name + " has wrong length");
    std::vector<double> sorted(rows());
    for (std::size_t r = 0; r < rows(); ++r) sorted[r] = values[order_[r]];
    series_[name] = std::move(sorted);
}

void PanelFrame::add_labels(const std::string& name, std::vector<std::int64_t> labels) {
    if (labels.size() != rows()) throw ValidationError("panel frame: labels " + name + " have wrong length");
    std::vector<std::int64_t> sorted(rows());
    for (std::size_t r = 0; r < rows(); ++r) sorted[r] = labels[order_[r]];
    labels_[name] = std::move(sorted);
}

const std::vector<double>& PanelFrame::series(const std::string& name) const {
    auto it = series_.find(name);
    if (it == series_.end()) throw ValidationError("panel frame: no series " + name);
    return it->second;
}

const std::vector<std::int64_t>& PanelFrame::labels(const std::string& name) const {
    auto it = labels_.find(name);
    if (it == labels_.end()) throw ValidationError("panel frame: no labels " + name);
    return it->second;
}

std::optional<std::size_t> PanelFrame::shifted_row(std::size_t row, int lag) const {
    if (lag == 0) return row;
    const Index target = time_[row] - lag;
    const auto cand = static_cast<std::ptrdiff_t>(row) - lag;
    if (cand >= static_cast<std::ptrdiff_t>(block_begin_[row]) && cand < static_cast<std::ptrdiff_t>(block_end_[row]) &&
        time_[static_cast<std::size_t>(cand)] == target)
        return static_cast<std::size_t>(cand);
    auto first = time_.begin() + static_cast<std::ptrdiff_t>(block_begin_[row]);
    auto last = time_.begin() + static_cast<std::ptrdiff_t>(block_end_[row]);
    auto it = std::lower_bound(first, last, target);
    if (it == last || *it != target) return std::nullopt;
    return static_cast<std::size_t>(it - time_.begin());
}

double PanelFrame::lagged(const std::string& name, std::size_t row, int lag) const {
    const auto& s = series(name);
    auto r = shifted_row(row, lag);
    return r ? s[*r] : kMissing;
}

std::string LagTerm::column_name(int lag) const {
    if (first_lag == 0 && last_lag == 0) return series;
    return series + "_L" + std::to_string(lag);
}

namespace {

Factor factor_from(const PanelFrame& frame, const std::vector<std::string>& parts, const std::vector<std::size_t>& rows) {
    if (parts.empty()) throw ValidationError("empty factor specification");
    std::optional<Factor> out;
    for (const auto& p : parts) {
        std::vector<std::int64_t> lab(rows.size());
        if (p == "entity") {
            for (std::size_t i = 0; i < rows.size(); ++i) lab[i] = frame.entity(rows[i]);
        } else if (p == "time") {
            for (std::size_t i = 0; i < rows.size(); ++i) lab[i] = frame.time(rows[i]);
        } else {
            const auto& l = frame.labels(p);
            for (std::size_t i = 0; i < rows.size(); ++i) lab[i] = l[rows[i]];
        }
        Factor f = make_factor(p, lab);
        out = out ? interact(*out, f) : std::move(f);
    }
    return *out;
}

}  // namespace

BuiltDesign build_design(const PanelFrame& frame, const DesignSpec& spec) {
    const auto& y = frame.series(spec.response);
    std::vector<const std::vector<double>*> term_series;
    std::size_t k = 0;
    for (const auto& t : spec.terms) {
        if (t.last_lag < t.first_lag) throw ValidationError("lag term " + t.series + ": last lag below first lag");
        term_series.push_back(&frame.series(t.series));
        k += static_cast<std::size_t>(t.last_lag - t.first_lag + 1);
    }
    std::vector<const std::vector<std::int64_t>*> filters;
    for (const auto& f : spec.row_filter) filters.push_back(&frame.labels(f));

    std::unordered_map<Index, std::size_t> entity_rows;
    if (spec.min_entity_obs > 0)
        for (std::size_t r = 0; r < frame.rows(); ++r) ++entity_rows[frame.entity(r)];

    std::vector<std::size_t> kept;
    std::vector<double> yv, xv;
    std::vector<double> row_x(k);
    for (std::size_t r = 0; r < frame.rows(); ++r) {
        if (spec.min_entity_obs > 0 && entity_rows[frame.entity(r)] < static_cast<std::size_t>(spec.min_entity_obs)) continue;
        bool ok = true;
        for (const auto* f : filters)
            if ((*f)[r] == 0) ok = false;
        if (!ok) continue;
        auto yr = frame.shifted_row(r, -spec.response_lead);
        if (!yr || !std::isfinite(y[*yr])) continue;
        std::size_t c = 0;
        for (std::size_t ti = 0; ti < spec.terms.size() && ok; ++ti) {
            const auto& t = spec.terms[ti];
            for (int lag = t.first_lag; lag <= t.last_lag; ++lag) {
                auto lr = frame.shifted_row(r, lag);
                const double v = lr ? (*term_series[ti])[*lr] : kMissing;
                if (!std::isfinite(v)) {
                    ok = false;
                    break;
                }
                row_x[c++] = v;
            }
        }
        for (const auto& t : spec.required) {
            if (!ok) break;
            const auto& src = frame.series(t.series);
            for (int lag = t.first_lag; lag <= t.last_lag; ++lag) {
                auto lr = frame.shifted_row(r, lag);
                if (!lr || !std::isfinite(src[*lr])) {
                    ok = false;
                    break;
                }
            }
        }
        if (!ok) continue;
        kept.push_back(r);
        yv.push_back(y[*yr]);
        xv.insert(xv.end(), row_x.begin(), row_x.end());
    }
    if (kept.empty()) throw EstimationError("no complete observations for response " + spec.response);

    BuiltDesign out;
    out.rows = kept;
    const auto n = static_cast<Index>(kept.size());
    out.design.y = Eigen::Map<const Eigen::VectorXd>(yv.data(), n);
    out.design.x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        xv.data(), n, static_cast<Index>(k));
    for (const auto& t : spec.terms)
        for (int lag = t.first_lag; lag <= t.last_lag; ++lag) out.design.names.push_back(t.column_name(lag));
    for (const auto& fe : spec.fixed_effects) out.design.fixed_effects.push_back(factor_from(frame, fe, kept));
    for (const auto& c : spec.clusters) out.design.clusters.push_back(factor_from(frame, c, kept));
    out.design.intercept = spec.intercept;
    return out;
}

DistributedLagFit distributed_lag(const PanelFrame& frame, DesignSpec spec, const std::string& series, int max_lag,
                                  const AbsorbOptions& absorb) {
    if (max_lag < 0) throw ValidationError("distributed lag: negative maximum lag");
    LagTerm lags{series, 0, max_lag};
    spec.terms.insert(spec.terms.begin(), lags);
    spec.min_entity_obs = std::max(spec.min_entity_obs, max_lag + 30);
    BuiltDesign built = build_design(frame, spec);
    DistributedLagFit out;
    out.fit = ols_clustered(built.design, absorb);
    for (int s = 0; s <= max_lag; ++s) out.lag_names.push_back(lags.series + "_L" + std::to_string(s));
    if (max_lag == 0) out.lag_names[0] = series;
    return out;
}

}  // namespace flowlab
