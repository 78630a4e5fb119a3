// SPDX-License-Identifier: Apache-2.0
//
// Concrete model families used by the experiments: the tanh-MLP dynamics/
// observation network with a parallel linear path, the 13-parameter damped
// pendulum parameterization, the logistic map, and the forced Duffing
// oscillator.

#ifndef SYSID_MODELS_HPP
#define SYSID_MODELS_HPP

#include <cmath>
#include <unsupported/Eigen/MatrixFunctions>

#include "sysid/integrate.hpp"
#include "sysid/priors.hpp"
#include "sysid/types.hpp"

namespace sysid {

// ---------------------------------------------------------------------------
// Single-hidden-layer network with a direct linear input-output path:
//   z_out = A1 tanh(A2 z_in + b2) + A3 z_in + b3

struct MlpShape {
    Eigen::Index d_out = 0;
    Eigen::Index n_hidden = 0;
    Eigen::Index d_in = 0;

    Eigen::Index param_count() const {
        return d_out * n_hidden + n_hidden * d_in + n_hidden + d_out * d_in + d_out;
    }
};

struct MlpParams {
    MatrixXd A1;  // d_out x n_hidden
    MatrixXd A2;  // n_hidden x d_in
    VectorXd b2;  // n_hidden
    MatrixXd A3;  // d_out x d_in
    VectorXd b3;  // d_out
};

/// Unpack a flat (row-major per matrix) parameter slice.
inline MlpParams unpack_mlp(const VectorXd& theta, const MlpShape& shape) {
    if (theta.size() != shape.param_count())
        throw DimensionError("unpack_mlp: parameter slice length mismatch");
    MlpParams p;
    Eigen::Index off = 0;
    auto take_matrix = [&](Eigen::Index rows, Eigen::Index cols) {
        MatrixXd m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = theta[off++];
        return m;
    };
    auto take_vector = [&](Eigen::Index n) {
        VectorXd v = theta.segment(off, n);
        off += n;
        return v;
    };
    p.A1 = take_matrix(shape.d_out, shape.n_hidden);
    p.A2 = take_matrix(shape.n_hidden, shape.d_in);
    p.b2 = take_vector(shape.n_hidden);
    p.A3 = take_matrix(shape.d_out, shape.d_in);
    p.b3 = take_vector(shape.d_out);
    return p;
}

inline VectorXd mlp_forward(const MlpParams& p, const VectorXd& z_in) {
    return p.A1 * (p.A2 * z_in + p.b2).array().tanh().matrix() + p.A3 * z_in + p.b3;
}

/// Options for assembling an MLP hidden-Markov model. The observation side is
/// either a learned network or a fixed linear map; the measurement variance
/// is either a learned scalar block or fixed.
struct MlpModelOptions {
    Eigen::Index n_hidden = 15;
    bool learn_observation = true;
    MatrixXd fixed_H;        // used when learn_observation == false
    bool learn_meas_var = true;
    double fixed_meas_var = 0.0;
};

/// HMM with MLP dynamics x_{k+1} = net([x; u]) and either an MLP or a fixed
/// linear observation map. Process (and optionally measurement) variances
/// are learned as nonnegative diagonal entries. Parameter order:
/// [x0, dynamics net, observation net, Sigma diag, Gamma diag].
inline NonlinearModel make_mlp_model(Eigen::Index dx, Eigen::Index du, Eigen::Index dy,
                                     const MlpModelOptions& opts = {}) {
    const MlpShape dyn_shape{dx, opts.n_hidden, dx + du};
    const MlpShape obs_shape{dy, opts.n_hidden, dx + du};
    const Eigen::Index n_obs = opts.learn_observation ? obs_shape.param_count() : 0;
    const Eigen::Index n_gamma = opts.learn_meas_var ? dy : 0;

    NonlinearModel m;
    m.dx = static_cast<int>(dx);
    m.du = static_cast<int>(du);
    m.dy = static_cast<int>(dy);
    m.layout = ParamLayout::contiguous(static_cast<int>(dx),
                                       static_cast<int>(dyn_shape.param_count()),
                                       static_cast<int>(n_obs), static_cast<int>(dx),
                                       static_cast<int>(n_gamma));
    m.theta = VectorXd::Zero(m.layout.total());

    m.dynamics = [dyn_shape](const VectorXd& x, const VectorXd& u, const VectorXd& th) {
        VectorXd z(x.size() + u.size());
        z << x, u;
        return mlp_forward(unpack_mlp(th, dyn_shape), z);
    };
    if (opts.learn_observation) {
        m.observe = [obs_shape](const VectorXd& x, const VectorXd& u, const VectorXd& th) {
            VectorXd z(x.size() + u.size());
            z << x, u;
            return mlp_forward(unpack_mlp(th, obs_shape), z);
        };
    } else {
        MatrixXd h = opts.fixed_H;
        if (h.rows() != dy || h.cols() != dx)
            throw DimensionError("make_mlp_model: fixed_H shape");
        m.observe = [h](const VectorXd& x, const VectorXd&, const VectorXd&) {
            return VectorXd(h * x);
        };
    }
    m.process_cov = [](const VectorXd& th) {
        return MatrixXd(th.cwiseMax(0.0).asDiagonal());
    };
    if (opts.learn_meas_var) {
        m.meas_cov = [](const VectorXd& th) {
            return MatrixXd(th.cwiseMax(0.0).asDiagonal());
        };
    } else {
        const double v = opts.fixed_meas_var;
        m.meas_cov = [dy, v](const VectorXd&) {
            return MatrixXd(v * MatrixXd::Identity(dy, dy));
        };
    }
    m.initial = [](const VectorXd& th) { return GaussianBelief::point_mass(th); };
    return m;
}

// ---------------------------------------------------------------------------
// Damped forced pendulum (linearized) and its 13-parameter model family.

/// Exact discrete truth: x_{k+1} = expm([[0,1],[-9.81,-1]] dt) x_k + [0;1] u_k,
/// y_k = [1 0] x_k, x0 = 0. Noise covariances are zero; the data generator
/// adds measurement noise separately.
inline LtiModel pendulum_truth(double dt) {
    MatrixXd m(2, 2);
    m << 0.0, 1.0, -9.81, -1.0;
    LtiModel lti;
    lti.A = (m * dt).exp();
    lti.B = (MatrixXd(2, 1) << 0.0, 1.0).finished();
    lti.H = (MatrixXd(1, 2) << 1.0, 0.0).finished();
    lti.D = MatrixXd::Zero(1, 1);
    lti.Sigma = MatrixXd::Zero(2, 2);
    lti.Gamma = MatrixXd::Zero(1, 1);
    lti.x0 = GaussianBelief::point_mass(VectorXd::Zero(2));
    return lti;
}

/// 13-parameter pendulum family:
///   x0 = (t1, t2);  A = [[t3, t5], [t4, t6]];  B = (t7, t8);  H = (t9, t10);
///   Sigma = diag(t11, t12);  Gamma = t13  (variances, nonnegative).
inline LtiModel pendulum_lti_from_theta(const VectorXd& theta) {
    if (theta.size() != 13) throw DimensionError("pendulum model: expected 13 parameters");
    if (theta[10] < 0.0 || theta[11] < 0.0 || theta[12] < 0.0)
        throw PreconditionError("pendulum model: variance parameters must be >= 0");
    LtiModel lti;
    lti.A = (MatrixXd(2, 2) << theta[2], theta[4], theta[3], theta[5]).finished();
    lti.B = (MatrixXd(2, 1) << theta[6], theta[7]).finished();
    lti.H = (MatrixXd(1, 2) << theta[8], theta[9]).finished();
    lti.D = MatrixXd::Zero(1, 1);
    lti.Sigma = (MatrixXd(2, 2) << theta[10], 0.0, 0.0, theta[11]).finished();
    lti.Gamma = (MatrixXd(1, 1) << theta[12]).finished();
    lti.x0 = GaussianBelief::point_mass(theta.head(2));
    return lti;
}

/// Inverse of pendulum_lti_from_theta (round-trip helper).
inline VectorXd pendulum_theta_from_lti(const LtiModel& lti) {
    VectorXd theta(13);
    theta << lti.x0.mean[0], lti.x0.mean[1], lti.A(0, 0), lti.A(1, 0), lti.A(0, 1),
        lti.A(1, 1), lti.B(0, 0), lti.B(1, 0), lti.H(0, 0), lti.H(0, 1), lti.Sigma(0, 0),
        lti.Sigma(1, 1), lti.Gamma(0, 0);
    return theta;
}

/// Parameter vector whose model matches pendulum_truth(dt) with the given
/// noise variances.
inline VectorXd pendulum_theta_from_truth(double dt, double var_meas = 0.0) {
    LtiModel truth = pendulum_truth(dt);
    VectorXd theta = pendulum_theta_from_lti(truth);
    theta[12] = var_meas;
    return theta;
}

inline NonlinearModel build_pendulum_model(const VectorXd& theta) {
    NonlinearModel m;
    m.dx = 2;
    m.du = 1;
    m.dy = 1;
    // x0 (2) | A,B (6) | H (2) | Sigma diag (2) | Gamma (1)
    m.layout = ParamLayout::contiguous(2, 6, 2, 2, 1);
    m.dynamics = [](const VectorXd& x, const VectorXd& u, const VectorXd& th) {
        MatrixXd a(2, 2);
        a << th[0], th[2], th[1], th[3];
        VectorXd b(2);
        b << th[4], th[5];
        return VectorXd(a * x + b * u[0]);
    };
    m.observe = [](const VectorXd& x, const VectorXd&, const VectorXd& th) {
        VectorXd y(1);
        y[0] = th[0] * x[0] + th[1] * x[1];
        return y;
    };
    m.process_cov = [](const VectorXd& th) {
        return MatrixXd(th.cwiseMax(0.0).asDiagonal());
    };
    m.meas_cov = [](const VectorXd& th) {
        MatrixXd g(1, 1);
        g(0, 0) = std::max(th[0], 0.0);
        return g;
    };
    m.initial = [](const VectorXd& th) { return GaussianBelief::point_mass(th); };
    return m.with_theta(theta);
}

/// Priors of the pendulum family: half-N(0,1e-6) on the process variances,
/// half-N(0,1) on the measurement variance, improper uniform elsewhere.
inline PriorSpec pendulum_priors() {
    PriorSpec spec = PriorSpec::all_uniform(13);
    spec.set(10, HalfNormalPrior{1e-6});
    spec.set(11, HalfNormalPrior{1e-6});
    spec.set(12, HalfNormalPrior{1.0});
    return spec;
}

// ---------------------------------------------------------------------------
// Flat parameterization of a full LTI model with isotropic noise scales
// (theta = [A row-major, B, H, D, sig_xi, sig_eta], x0 = 0 point mass).

struct LtiParameterization {
    Eigen::Index dx = 0, dy = 0, du = 0;

    Eigen::Index size() const { return dx * dx + dx * du + dy * dx + dy * du + 2; }

    LtiModel model(const VectorXd& theta) const {
        if (theta.size() != size())
            throw DimensionError("LtiParameterization: theta length mismatch");
        LtiModel m;
        Eigen::Index off = 0;
        auto take = [&](Eigen::Index rows, Eigen::Index cols) {
            MatrixXd out(rows, cols);
            for (Eigen::Index r = 0; r < rows; ++r)
                for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = theta[off++];
            return out;
        };
        m.A = take(dx, dx);
        m.B = take(dx, du);
        m.H = take(dy, dx);
        m.D = take(dy, du);
        const double sig_xi = theta[off++];
        const double sig_eta = theta[off++];
        m.Sigma = sig_xi * sig_xi * MatrixXd::Identity(dx, dx);
        m.Gamma = sig_eta * sig_eta * MatrixXd::Identity(dy, dy);
        m.x0 = GaussianBelief::point_mass(VectorXd::Zero(dx));
        return m;
    }

    VectorXd pack(const LtiModel& m, double sig_xi, double sig_eta) const {
        VectorXd theta(size());
        Eigen::Index off = 0;
        auto put = [&](const MatrixXd& mat) {
            for (Eigen::Index r = 0; r < mat.rows(); ++r)
                for (Eigen::Index c = 0; c < mat.cols(); ++c) theta[off++] = mat(r, c);
        };
        put(m.A);
        put(m.B);
        put(m.H);
        put(m.D);
        theta[off++] = sig_xi;
        theta[off++] = sig_eta;
        return theta;
    }

    /// Improper uniform on the matrices, half-N(0,1) on the noise scales.
    PriorSpec priors() const {
        PriorSpec spec = PriorSpec::all_uniform(static_cast<size_t>(size()));
        spec.set(static_cast<size_t>(size() - 2), HalfNormalPrior{1.0});
        spec.set(static_cast<size_t>(size() - 1), HalfNormalPrior{1.0});
        return spec;
    }

    std::vector<int> matrix_indices(char which) const {
        Eigen::Index lo = 0, hi = 0;
        const Eigen::Index na = dx * dx, nb = dx * du, nh = dy * dx, nd = dy * du;
        switch (which) {
            case 'A': lo = 0; hi = na; break;
            case 'B': lo = na; hi = na + nb; break;
            case 'H': lo = na + nb; hi = na + nb + nh; break;
            case 'D': lo = na + nb + nh; hi = na + nb + nh + nd; break;
            default: throw PreconditionError("matrix_indices: unknown block");
        }
        std::vector<int> ids;
        for (Eigen::Index i = lo; i < hi; ++i) ids.push_back(static_cast<int>(i));
        return ids;
    }
};

// ---------------------------------------------------------------------------
// Logistic map

inline double logistic_map_step(double theta, double y) { return theta * y * (1.0 - y); }

/// Scalar logistic-map HMM with known initial state and fixed noise scales;
/// the single free parameter is the map coefficient.
inline NonlinearModel make_logistic_model(double theta, double y0, double sigma_var,
                                          double gamma_var) {
    NonlinearModel m;
    m.dx = 1;
    m.du = 0;
    m.dy = 1;
    m.layout = ParamLayout::contiguous(0, 1, 0, 0, 0);
    m.dynamics = [](const VectorXd& x, const VectorXd&, const VectorXd& th) {
        VectorXd next(1);
        next[0] = logistic_map_step(th[0], x[0]);
        return next;
    };
    m.observe = [](const VectorXd& x, const VectorXd&, const VectorXd&) { return x; };
    m.process_cov = [sigma_var](const VectorXd&) {
        return MatrixXd(MatrixXd::Constant(1, 1, sigma_var));
    };
    m.meas_cov = [gamma_var](const VectorXd&) {
        return MatrixXd(MatrixXd::Constant(1, 1, gamma_var));
    };
    m.initial = [y0](const VectorXd&) {
        return GaussianBelief::point_mass(VectorXd::Constant(1, y0));
    };
    return m.with_theta(VectorXd::Constant(1, theta));
}

// ---------------------------------------------------------------------------
// Forced Duffing oscillator

struct DuffingParams {
    double alpha = 1.0;
    double delta = -0.3;
    double beta = -1.0;
    double omega = 1.2;
    double gamma = 0.65;
};

/// Parameter set producing the chaotic regime.
inline DuffingParams duffing_chaotic_params() { return {}; }

/// (x, xdot) -> (xdot, alpha x + delta xdot + beta x^3 + gamma cos(omega t))
inline VectorXd duffing_rhs(const VectorXd& state, double t, const DuffingParams& p) {
    VectorXd deriv(2);
    deriv[0] = state[1];
    deriv[1] = p.alpha * state[0] + p.delta * state[1] + p.beta * state[0] * state[0] * state[0] +
               p.gamma * std::cos(p.omega * t);
    return deriv;
}

}  // namespace sysid

#endif  // SYSID_MODELS_HPP
