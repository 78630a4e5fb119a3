// SPDX-License-Identifier: Apache-2.0

#ifndef SYSID_TYPES_HPP
#define SYSID_TYPES_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sysid/errors.hpp"
#include "sysid/linalg.hpp"

namespace sysid {

/// Gaussian state belief. A point mass is represented by a zero covariance.
struct GaussianBelief {
    VectorXd mean;
    MatrixXd cov;

    GaussianBelief() = default;
    GaussianBelief(VectorXd m, MatrixXd c) : mean(std::move(m)), cov(std::move(c)) {}

    static GaussianBelief point_mass(VectorXd m) {
        const Eigen::Index d = m.size();
        return {std::move(m), MatrixXd::Zero(d, d)};
    }

    Eigen::Index dim() const { return mean.size(); }
};

/// Discrete-time linear time-invariant state-space model
///   x_{k+1} = A x_k + B u_k + xi_k,   xi ~ N(0, Sigma)
///   y_k     = H x_k + D u_k + eta_k,  eta ~ N(0, Gamma)
/// with Gaussian (possibly degenerate) initial belief x0.
struct LtiModel {
    MatrixXd A, B, H, D;
    MatrixXd Sigma, Gamma;
    GaussianBelief x0;

    Eigen::Index dx() const { return A.rows(); }
    Eigen::Index du() const { return B.cols(); }
    Eigen::Index dy() const { return H.rows(); }

    void validate() const {
        if (A.rows() != A.cols()) throw DimensionError("LtiModel: A not square");
        if (B.rows() != A.rows()) throw DimensionError("LtiModel: B row count");
        if (H.cols() != A.rows()) throw DimensionError("LtiModel: H column count");
        if (D.rows() != H.rows() || D.cols() != B.cols())
            throw DimensionError("LtiModel: D shape");
        if (Sigma.rows() != A.rows() || Sigma.cols() != A.rows())
            throw DimensionError("LtiModel: Sigma shape");
        if (Gamma.rows() != H.rows() || Gamma.cols() != H.rows())
            throw DimensionError("LtiModel: Gamma shape");
        if (x0.dim() != A.rows() || x0.cov.rows() != A.rows() || x0.cov.cols() != A.rows())
            throw DimensionError("LtiModel: x0 dimension");
        auto check_sym_psd = [](const MatrixXd& m, const char* name) {
            if ((m - m.transpose()).cwiseAbs().maxCoeff() >
                1e-10 * std::max(1.0, m.cwiseAbs().maxCoeff()))
                throw PreconditionError(std::string("LtiModel: ") + name + " not symmetric");
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m),
                                                       Eigen::EigenvaluesOnly);
            if (es.eigenvalues().minCoeff() <
                -1e-10 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff()))
                throw PreconditionError(std::string("LtiModel: ") + name +
                                        " not positive semidefinite");
        };
        check_sym_psd(Sigma, "Sigma");
        check_sym_psd(Gamma, "Gamma");
        check_sym_psd(x0.cov, "x0.cov");
    }
};

/// Index ranges that partition a flat parameter vector into the blocks
/// (x0, dynamics, observation, process noise, measurement noise).
/// Every parameter belongs to exactly one block; blocks may be empty.
struct ParamLayout {
    struct Range {
        int offset = 0;
        int length = 0;
    };
    Range x0, dyn, obs, sigma, gamma;

    /// Contiguous layout in declaration order.
    static ParamLayout contiguous(int n_x0, int n_dyn, int n_obs, int n_sigma,
                                  int n_gamma) {
        ParamLayout layout;
        int off = 0;
        auto place = [&off](int n) {
            Range r{off, n};
            off += n;
            return r;
        };
        layout.x0 = place(n_x0);
        layout.dyn = place(n_dyn);
        layout.obs = place(n_obs);
        layout.sigma = place(n_sigma);
        layout.gamma = place(n_gamma);
        return layout;
    }

    int total() const {
        return x0.length + dyn.length + obs.length + sigma.length + gamma.length;
    }

    VectorXd slice(const VectorXd& theta, const Range& r) const {
        return theta.segment(r.offset, r.length);
    }
};

/// Nonlinear (or linear) parameterized hidden Markov model
///   x_{k+1} = psi(x_k, u_k; theta_dyn) + xi_k
///   y_k     = h(x_k, u_k; theta_obs) + eta_k
/// All structural maps are stored as callables of (x, u, theta-block); the
/// flat theta vector is the single optimization/sampling variable.
struct NonlinearModel {
    using DynamicsFn =
        std::function<VectorXd(const VectorXd&, const VectorXd&, const VectorXd&)>;
    using ObserveFn =
        std::function<VectorXd(const VectorXd&, const VectorXd&, const VectorXd&)>;
    using CovFn = std::function<MatrixXd(const VectorXd&)>;
    using InitFn = std::function<GaussianBelief(const VectorXd&)>;

    VectorXd theta;
    ParamLayout layout;
    int dx = 0, du = 0, dy = 0;
    DynamicsFn dynamics;
    ObserveFn observe;
    CovFn process_cov;   // theta_sigma -> Sigma (dx x dx)
    CovFn meas_cov;      // theta_gamma -> Gamma (dy x dy)
    InitFn initial;      // theta_x0 -> belief over x_0

    NonlinearModel with_theta(VectorXd t) const {
        NonlinearModel m = *this;
        if (t.size() != layout.total())
            throw DimensionError("NonlinearModel: theta length does not match layout");
        m.theta = std::move(t);
        return m;
    }

    VectorXd step(const VectorXd& x, const VectorXd& u) const {
        return dynamics(x, u, layout.slice(theta, layout.dyn));
    }
    VectorXd output(const VectorXd& x, const VectorXd& u) const {
        return observe(x, u, layout.slice(theta, layout.obs));
    }
    MatrixXd sigma() const { return process_cov(layout.slice(theta, layout.sigma)); }
    MatrixXd gamma() const { return meas_cov(layout.slice(theta, layout.gamma)); }
    GaussianBelief x0() const { return initial(layout.slice(theta, layout.x0)); }
};

/// Wrap an LtiModel as a NonlinearModel with empty parameter vector.
/// Useful for exercising nonlinear machinery against linear ground truth.
inline NonlinearModel wrap_lti(const LtiModel& lti) {
    NonlinearModel m;
    m.theta = VectorXd::Zero(0);
    m.layout = ParamLayout::contiguous(0, 0, 0, 0, 0);
    m.dx = static_cast<int>(lti.dx());
    m.du = static_cast<int>(lti.du());
    m.dy = static_cast<int>(lti.dy());
    m.dynamics = [lti](const VectorXd& x, const VectorXd& u, const VectorXd&) {
        return VectorXd(lti.A * x + lti.B * u);
    };
    m.observe = [lti](const VectorXd& x, const VectorXd& u, const VectorXd&) {
        return VectorXd(lti.H * x + lti.D * u);
    };
    m.process_cov = [lti](const VectorXd&) { return lti.Sigma; };
    m.meas_cov = [lti](const VectorXd&) { return lti.Gamma; };
    m.initial = [lti](const VectorXd&) { return lti.x0; };
    return m;
}

/// Time grid, input record, and output record of one experiment.
/// `observed` is an optional per-step mask; empty means fully observed.
struct Dataset {
    std::vector<double> times;
    std::vector<VectorXd> inputs;
    std::vector<VectorXd> outputs;
    std::vector<std::uint8_t> observed;

    Eigen::Index size() const { return static_cast<Eigen::Index>(times.size()); }
    Eigen::Index du() const { return inputs.empty() ? 0 : inputs.front().size(); }
    Eigen::Index dy() const { return outputs.empty() ? 0 : outputs.front().size(); }

    bool is_observed(Eigen::Index k) const {
        return observed.empty() || observed[static_cast<size_t>(k)] != 0;
    }
    bool fully_observed() const {
        for (Eigen::Index k = 0; k < size(); ++k)
            if (!is_observed(k)) return false;
        return true;
    }

    void validate() const {
        if (times.empty()) throw DimensionError("Dataset: empty record");
        if (inputs.size() != times.size() || outputs.size() != times.size())
            throw DimensionError("Dataset: times/inputs/outputs length mismatch");
        if (!observed.empty() && observed.size() != times.size())
            throw DimensionError("Dataset: mask length mismatch");
        for (size_t k = 1; k < times.size(); ++k)
            if (!(times[k] > times[k - 1]))
                throw PreconditionError("Dataset: times not strictly increasing");
        for (const auto& u : inputs)
            if (u.size() != inputs.front().size())
                throw DimensionError("Dataset: inconsistent input dimension");
        for (const auto& y : outputs)
            if (y.size() != outputs.front().size())
                throw DimensionError("Dataset: inconsistent output dimension");
    }

    /// First n_points entries (used by growing-record sweeps).
    Dataset head(Eigen::Index n_points) const {
        if (n_points > size()) throw DimensionError("Dataset::head: slice too long");
        Dataset d;
        d.times.assign(times.begin(), times.begin() + n_points);
        d.inputs.assign(inputs.begin(), inputs.begin() + n_points);
        d.outputs.assign(outputs.begin(), outputs.begin() + n_points);
        if (!observed.empty())
            d.observed.assign(observed.begin(), observed.begin() + n_points);
        return d;
    }
};

}  // namespace sysid

#endif  // SYSID_TYPES_HPP
