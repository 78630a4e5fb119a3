// SPDX-License-Identifier: Apache-2.0
//
// Trajectory-fitting objectives: deterministic and propagator least squares,
// multiple shooting over a segment plan, the joint segment posterior, and
// grid scans of objective landscapes.

#ifndef SYSID_OBJECTIVES_HPP
#define SYSID_OBJECTIVES_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "sysid/filtering.hpp"
#include "sysid/priors.hpp"
#include "sysid/simulate.hpp"
#include "sysid/types.hpp"

namespace sysid {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Segmentation of a record with last index n into L shooting segments.
/// Knots l_1 = 0 < l_2 < ... < l_L < n bound segments [l_i, l_{i+1}] with
/// l_{L+1} = n; segment i is simulated from its own initial condition ics[i]
/// at time index l_i. Segment i contributes the residuals at k = l_i+1 ..
/// l_{i+1} (the first segment also contributes k = 0), so each output index
/// appears exactly once. A single segment reproduces one uninterrupted
/// simulation; unit spacing with data initial conditions reproduces the
/// one-step propagator objective.
struct SegmentPlan {
    std::vector<Eigen::Index> starts;
    std::vector<VectorXd> ics;

    static SegmentPlan single() {
        SegmentPlan p;
        p.starts = {0};
        return p;
    }

    /// Knots at 0, T, 2T, ... strictly below the last index n.
    static SegmentPlan uniform(Eigen::Index n, Eigen::Index horizon) {
        if (horizon < 1) throw PreconditionError("SegmentPlan: horizon must be >= 1");
        if (n < 1) throw PreconditionError("SegmentPlan: record must have n >= 1");
        SegmentPlan p;
        for (Eigen::Index s = 0; s < n; s += horizon) p.starts.push_back(s);
        return p;
    }

    Eigen::Index segments() const { return static_cast<Eigen::Index>(starts.size()); }

    void validate(Eigen::Index n) const {
        if (starts.empty() || starts.front() != 0)
            throw PreconditionError("SegmentPlan: first knot must be 0");
        for (size_t i = 1; i < starts.size(); ++i)
            if (starts[i] <= starts[i - 1])
                throw PreconditionError("SegmentPlan: knots must be strictly increasing");
        if (starts.back() > n)
            throw PreconditionError("SegmentPlan: knot beyond the record");
        if (starts.size() > 1 && starts.back() >= n)
            throw PreconditionError("SegmentPlan: last knot must precede the last index");
    }

    /// Initial conditions taken from the data (full-state observations).
    void ics_from_data(const Dataset& data, Eigen::Index dx) {
        if (data.dy() != dx)
            throw PreconditionError(
                "SegmentPlan: data initial conditions need full-state observations");
        ics.clear();
        for (Eigen::Index s : starts) ics.push_back(data.outputs[static_cast<size_t>(s)]);
    }

    /// Initial conditions consistent with the model: knots reached by
    /// noiseless propagation from the model x0 (satisfies the shooting
    /// constraints exactly).
    void ics_from_model(const NonlinearModel& model, const Dataset& data) {
        ics.clear();
        VectorXd x = model.x0().mean;
        Eigen::Index next = 0;
        for (Eigen::Index k = 0; k <= starts.back(); ++k) {
            if (starts[static_cast<size_t>(next)] == k) {
                ics.push_back(x);
                if (++next >= segments()) break;
            }
            x = model.step(x, data.inputs[static_cast<size_t>(k)]);
        }
    }
};

/// Divergence report for objectives that return +inf instead of throwing.
struct ObjectiveDiagnostics {
    bool diverged = false;
    Eigen::Index where = -1;  // step or segment index
};

/// Squared-error sum of one uninterrupted noiseless simulation from the
/// model's initial state: sum_k ||y_k - yhat_k||^2 over the whole record.
/// Divergence yields +inf (flagged) rather than an exception so optimizers
/// and scans can retreat.
inline double deterministic_ls(const NonlinearModel& model, const Dataset& data,
                               ObjectiveDiagnostics* diag = nullptr) {
    data.validate();
    double obj = 0.0;
    VectorXd x = model.x0().mean;
    for (Eigen::Index k = 0; k < data.size(); ++k) {
        if (!x.allFinite()) {
            if (diag) *diag = {true, k};
            return kInf;
        }
        VectorXd r = data.outputs[static_cast<size_t>(k)] -
                     model.output(x, data.inputs[static_cast<size_t>(k)]);
        if (!r.allFinite()) {
            if (diag) *diag = {true, k};
            return kInf;
        }
        obj += r.squaredNorm();
        if (k + 1 < data.size()) x = model.step(x, data.inputs[static_cast<size_t>(k)]);
    }
    return obj;
}

/// One-step-ahead squared error using the previous data point as the state:
/// sum_{k=1..n} ||y_k - f(lift(y_{k-1}), u_{k-1})||^2. Requires full-state
/// observations or an explicit lift from output to state.
inline double propagator_ls(const NonlinearModel& model, const Dataset& data,
                            const std::function<VectorXd(const VectorXd&)>& lift = {},
                            ObjectiveDiagnostics* diag = nullptr) {
    data.validate();
    if (!lift && data.dy() != model.dx)
        throw PreconditionError(
            "propagator_ls: needs full-state observations or an explicit lift");
    double obj = 0.0;
    for (Eigen::Index k = 1; k < data.size(); ++k) {
        VectorXd x = lift ? lift(data.outputs[static_cast<size_t>(k - 1)])
                          : data.outputs[static_cast<size_t>(k - 1)];
        x = model.step(x, data.inputs[static_cast<size_t>(k - 1)]);
        if (!x.allFinite()) {
            if (diag) *diag = {true, k};
            return kInf;
        }
        VectorXd r = data.outputs[static_cast<size_t>(k)] -
                     model.output(x, data.inputs[static_cast<size_t>(k)]);
        obj += r.squaredNorm();
    }
    return obj;
}

/// Multiple-shooting objective over a segment plan. Each segment accumulates
/// within-segment squared errors from a noiseless simulation started at its
/// own initial condition. With constrained=true a quadratic penalty
/// rho * ||x_{l_{i+1}} - Psi^{dl}(x_{l_i})||^2 relaxes the hard continuity
/// constraints between consecutive knots.
inline double multiple_shooting(const NonlinearModel& model, const Dataset& data,
                                const SegmentPlan& plan, bool constrained = false,
                                double rho = 1e6, ObjectiveDiagnostics* diag = nullptr) {
    data.validate();
    const Eigen::Index n = data.size() - 1;
    plan.validate(n);
    if (plan.ics.size() != plan.starts.size())
        throw PreconditionError("multiple_shooting: plan initial conditions not populated");

    double obj = 0.0;
    for (Eigen::Index i = 0; i < plan.segments(); ++i) {
        const Eigen::Index k0 = plan.starts[static_cast<size_t>(i)];
        const Eigen::Index k1 =
            i + 1 < plan.segments() ? plan.starts[static_cast<size_t>(i + 1)] : n;
        VectorXd x = plan.ics[static_cast<size_t>(i)];
        if (i == 0) {
            VectorXd r = data.outputs[0] - model.output(x, data.inputs[0]);
            obj += r.squaredNorm();
        }
        for (Eigen::Index k = k0 + 1; k <= k1; ++k) {
            x = model.step(x, data.inputs[static_cast<size_t>(k - 1)]);
            if (!x.allFinite()) {
                if (diag) *diag = {true, i};
                return kInf;
            }
            VectorXd r = data.outputs[static_cast<size_t>(k)] -
                         model.output(x, data.inputs[static_cast<size_t>(k)]);
            if (!r.allFinite()) {
                if (diag) *diag = {true, i};
                return kInf;
            }
            obj += r.squaredNorm();
        }
        if (constrained && i + 1 < plan.segments()) {
            VectorXd defect = plan.ics[static_cast<size_t>(i + 1)] - x;
            obj += rho * defect.squaredNorm();
        }
    }
    return obj;
}

/// Accumulator breakdown of the joint posterior, mirroring the filter-result
/// decomposition: quadratic/log-det/constant parts of the segment likelihoods
/// and of the knot linking densities, plus the prior.
struct JointPosteriorParts {
    double prior = 0.0;
    double segment_quad = 0.0;     // sum ||y - mu||^2_S over segment terms
    double segment_logdet = 0.0;   // sum log det S
    double segment_const = 0.0;    // observed terms * dy * log 2pi
    double linking_quad = 0.0;
    double linking_logdet = 0.0;
    double linking_const = 0.0;
};

/// Log posterior of the joint parameter/initial-condition shooting problem:
/// per-segment filter log likelihoods (point-mass start at each knot state),
/// Gaussian linking densities p(x_{l_i} | x_{l_{i-1}}, theta) evaluated by
/// pushing a point mass through the dynamics for dl steps with the unscented
/// transform (accumulating Sigma each step), plus the parameter log prior.
/// Filter divergence maps to -inf so optimizers can retreat.
inline double joint_log_posterior(const NonlinearModel& model, const Dataset& data,
                                  const SegmentPlan& plan, const PriorSpec& priors,
                                  const UkfConfig& cfg = {},
                                  JointPosteriorParts* parts = nullptr) {
    data.validate();
    const Eigen::Index n = data.size() - 1;
    plan.validate(n);
    if (plan.ics.size() != plan.starts.size())
        throw PreconditionError("joint_log_posterior: plan initial conditions not populated");

    double total = log_prior(priors, model.theta);
    if (total == kLogZero) return kLogZero;
    if (parts) *parts = JointPosteriorParts{};
    if (parts) parts->prior = total;
    const MatrixXd sigma = model.sigma();

    try {
        for (Eigen::Index i = 0; i < plan.segments(); ++i) {
            const Eigen::Index k0 = plan.starts[static_cast<size_t>(i)];
            const Eigen::Index k1 =
                i + 1 < plan.segments() ? plan.starts[static_cast<size_t>(i + 1)] : n;
            GaussianBelief belief =
                GaussianBelief::point_mass(plan.ics[static_cast<size_t>(i)]);

            // Segment likelihood: observations k0+1..k1 (plus k=0 for the
            // first segment), mirroring the shooting residual layout.
            const MatrixXd gamma = model.gamma();
            for (Eigen::Index k = k0; k <= k1; ++k) {
                if (k > k0)
                    belief = detail::ukf_predict(model, belief,
                                                 data.inputs[static_cast<size_t>(k - 1)],
                                                 sigma, cfg, k);
                if (k == k0 && i > 0) continue;
                detail::UkfInnovation innov = detail::ukf_innovation(
                    model, belief, data.inputs[static_cast<size_t>(k)], gamma, cfg, k);
                VectorXd resid = data.outputs[static_cast<size_t>(k)] - innov.mu;
                GaussianLogDensity g =
                    gaussian_log_density(resid, innov.s, "innovation covariance", k);
                total += g.log_pdf;
                if (parts) {
                    parts->segment_quad += g.quadratic;
                    parts->segment_logdet += g.log_det;
                    parts->segment_const += static_cast<double>(model.dy) * kLog2Pi;
                }
                belief = detail::ukf_update(belief, innov, resid, k);
            }

            // Linking density to the next knot state.
            if (i + 1 < plan.segments()) {
                GaussianBelief push =
                    GaussianBelief::point_mass(plan.ics[static_cast<size_t>(i)]);
                for (Eigen::Index k = k0; k < k1; ++k)
                    push = detail::ukf_predict(model, push,
                                               data.inputs[static_cast<size_t>(k)], sigma,
                                               cfg, k);
                VectorXd defect = plan.ics[static_cast<size_t>(i + 1)] - push.mean;
                GaussianLogDensity g =
                    gaussian_log_density(defect, push.cov, "linking covariance", k1);
                total += g.log_pdf;
                if (parts) {
                    parts->linking_quad += g.quadratic;
                    parts->linking_logdet += g.log_det;
                    parts->linking_const += static_cast<double>(model.dx) * kLog2Pi;
                }
            }
        }
    } catch (const DivergedError&) {
        return kLogZero;
    }
    if (std::isnan(total)) return kLogZero;
    return total;
}

/// Normalized landscape of an objective over a one-dimensional grid.
struct LandscapeCurve {
    std::vector<double> grid;
    std::vector<double> values;  // normalized so value(anchor) = 1
    double anchor = 0.0;
    double anchor_raw = 0.0;
    Eigen::Index minima_count = 0;

    nlohmann::json sidecar() const {
        return {{"anchor", anchor},
                {"anchor_raw_value", anchor_raw},
                {"local_minima", minima_count},
                {"points", grid.size()}};
    }
};

/// Inclusive uniform grid [lo, hi] with the given step.
inline std::vector<double> make_grid(double lo, double hi, double step) {
    if (!(step > 0.0) || !(hi >= lo)) throw PreconditionError("make_grid: invalid range");
    std::vector<double> grid;
    const long n = static_cast<long>(std::floor((hi - lo) / step + 0.5));
    for (long i = 0; i <= n; ++i) grid.push_back(lo + static_cast<double>(i) * step);
    return grid;
}

/// Count strict interior local minima; a plateau strictly below both of its
/// finite neighbors counts once.
inline Eigen::Index count_local_minima(const std::vector<double>& v) {
    Eigen::Index count = 0;
    const size_t n = v.size();
    size_t i = 1;
    while (i + 1 < n) {
        size_t j = i;
        while (j + 1 < n && v[j + 1] == v[i]) ++j;  // plateau [i, j]
        if (j + 1 < n && v[i] < v[i - 1] && v[i] < v[j + 1]) ++count;
        i = j + 1;
    }
    return count;
}

/// Evaluate an objective over a grid and normalize to 1.0 at the anchor.
inline LandscapeCurve landscape_scan(const std::function<double(double)>& objective,
                                     const std::vector<double>& grid, double anchor) {
    if (grid.empty()) throw PreconditionError("landscape_scan: empty grid");
    LandscapeCurve curve;
    curve.grid = grid;
    curve.anchor = anchor;
    curve.values.resize(grid.size());

    Eigen::Index anchor_idx = -1;
    Eigen::Index finite_count = 0;
    for (size_t i = 0; i < grid.size(); ++i) {
        curve.values[i] = objective(grid[i]);
        if (std::isfinite(curve.values[i])) ++finite_count;
        if (std::abs(grid[i] - anchor) < 1e-12) anchor_idx = static_cast<Eigen::Index>(i);
    }
    if (anchor_idx < 0) throw PreconditionError("landscape_scan: anchor not on the grid");
    if (finite_count == 0) throw NumericalError("landscape_scan: objective diverged everywhere");
    curve.anchor_raw = curve.values[static_cast<size_t>(anchor_idx)];
    if (curve.anchor_raw == 0.0 || !std::isfinite(curve.anchor_raw))
        throw NumericalError("landscape_scan: anchor value unusable for normalization");
    for (double& v : curve.values) v /= curve.anchor_raw;
    curve.minima_count = count_local_minima(curve.values);
    return curve;
}

}  // namespace sysid

#endif  // SYSID_OBJECTIVES_HPP
