// SPDX-License-Identifier: Apache-2.0
//
// Marginal likelihood evaluation for state-space models: exact Kalman
// recursion for the linear-Gaussian case, unscented approximation for
// nonlinear models, and the dense joint-Gaussian input-output form that
// serves as an independent check of the recursive path.

#ifndef SYSID_FILTERING_HPP
#define SYSID_FILTERING_HPP

#include <cmath>
#include <vector>

#include "sysid/markov.hpp"
#include "sysid/types.hpp"

namespace sysid {

/// Output of one filter pass. The log likelihood decomposes as
///   log L = quad_term + logdet_term + const_term
/// where quad_term   = -1/2 sum_k ||y_k - mu_k||^2_{S_k},
///       logdet_term = -1/2 sum_k log det S_k,
///       const_term  = -1/2 sum_k dy log 2pi,
/// summed over observed steps. The three accumulators are maintained
/// independently of the per-step density sum and their total is checked
/// against log_likelihood on construction.
struct FilterResult {
    double log_likelihood = 0.0;
    double quad_term = 0.0;
    double logdet_term = 0.0;
    double const_term = 0.0;
    std::vector<GaussianBelief> predicted;       // p(x_k | Y_{k-1})
    std::vector<GaussianBelief> updated;         // p(x_k | Y_k)
    std::vector<VectorXd> innovation_means;      // mu_k
    std::vector<MatrixXd> innovation_covs;       // S_k

    void finalize() {
        if (!std::isfinite(log_likelihood))
            throw DivergedError("filter: non-finite log likelihood");
        const double sum = quad_term + logdet_term + const_term;
        if (std::abs(sum - log_likelihood) >
            1e-12 * std::max(1.0, std::abs(log_likelihood)))
            throw NumericalError("filter: likelihood decomposition mismatch");
    }
};

/// Scaled sigma-point parameters of the unscented transform.
struct UkfConfig {
    double alpha = 1e-3;
    double beta = 2.0;
    double kappa = 0.0;

    void validate(Eigen::Index d) const {
        if (!(alpha > 0.0)) throw PreconditionError("UkfConfig: alpha must be > 0");
        if (!(alpha * alpha * (static_cast<double>(d) + kappa) > 0.0))
            throw PreconditionError("UkfConfig: alpha^2 (d + kappa) must be > 0");
    }
};

namespace detail {

inline void check_lti_data(const LtiModel& model, const Dataset& data) {
    model.validate();
    data.validate();
    if (data.du() != model.du() || data.dy() != model.dy())
        throw DimensionError("filter: model/dataset dimensions disagree");
}

struct SigmaPoints {
    MatrixXd points;   // dx x (2dx+1)
    VectorXd w_mean;
    VectorXd w_cov;
};

inline SigmaPoints sigma_points(const GaussianBelief& belief, const UkfConfig& cfg,
                                long step) {
    const Eigen::Index d = belief.dim();
    const double df = static_cast<double>(d);
    const double lambda = cfg.alpha * cfg.alpha * (df + cfg.kappa) - df;
    MatrixXd sqrt_cov = psd_sqrt((df + lambda) * belief.cov, "predicted covariance", step);

    SigmaPoints sp;
    sp.points.resize(d, 2 * d + 1);
    sp.points.col(0) = belief.mean;
    for (Eigen::Index i = 0; i < d; ++i) {
        sp.points.col(1 + i) = belief.mean + sqrt_cov.col(i);
        sp.points.col(1 + d + i) = belief.mean - sqrt_cov.col(i);
    }
    sp.w_mean = VectorXd::Constant(2 * d + 1, 1.0 / (2.0 * (df + lambda)));
    sp.w_cov = sp.w_mean;
    sp.w_mean[0] = lambda / (df + lambda);
    sp.w_cov[0] = sp.w_mean[0] + (1.0 - cfg.alpha * cfg.alpha + cfg.beta);
    return sp;
}

/// Unscented push of a belief through the dynamics, adding process noise.
inline GaussianBelief ukf_predict(const NonlinearModel& model, const GaussianBelief& belief,
                                  const VectorXd& u, const MatrixXd& sigma_noise,
                                  const UkfConfig& cfg, long step) {
    SigmaPoints sp = sigma_points(belief, cfg, step);
    const Eigen::Index n_pts = sp.points.cols();
    MatrixXd propagated(model.dx, n_pts);
    for (Eigen::Index i = 0; i < n_pts; ++i)
        propagated.col(i) = model.step(sp.points.col(i), u);
    if (!propagated.allFinite())
        throw DivergedError("ukf: non-finite propagated state", step);
    VectorXd mean = propagated * sp.w_mean;
    MatrixXd cov = sigma_noise;
    for (Eigen::Index i = 0; i < n_pts; ++i) {
        VectorXd d = propagated.col(i) - mean;
        cov += sp.w_cov[i] * d * d.transpose();
    }
    return {mean, symmetrize(cov)};
}

/// Unscented innovation moments of a predicted belief: mean, covariance
/// (including Gamma), and state-output cross covariance.
struct UkfInnovation {
    VectorXd mu;
    MatrixXd s;
    MatrixXd cross;
};

inline UkfInnovation ukf_innovation(const NonlinearModel& model,
                                    const GaussianBelief& belief, const VectorXd& u,
                                    const MatrixXd& gamma, const UkfConfig& cfg,
                                    long step) {
    SigmaPoints sp = sigma_points(belief, cfg, step);
    const Eigen::Index n_pts = sp.points.cols();
    MatrixXd obs(model.dy, n_pts);
    for (Eigen::Index i = 0; i < n_pts; ++i)
        obs.col(i) = model.output(sp.points.col(i), u);
    if (!obs.allFinite()) throw DivergedError("ukf: non-finite observation", step);

    UkfInnovation innov;
    innov.mu = obs * sp.w_mean;
    innov.s = gamma;
    innov.cross = MatrixXd::Zero(model.dx, model.dy);
    for (Eigen::Index i = 0; i < n_pts; ++i) {
        VectorXd dy_i = obs.col(i) - innov.mu;
        VectorXd dx_i = sp.points.col(i) - belief.mean;
        innov.s += sp.w_cov[i] * dy_i * dy_i.transpose();
        innov.cross += sp.w_cov[i] * dx_i * dy_i.transpose();
    }
    innov.s = symmetrize(innov.s);
    return innov;
}

/// Kalman-style measurement update given innovation moments.
inline GaussianBelief ukf_update(const GaussianBelief& belief, const UkfInnovation& innov,
                                 const VectorXd& resid, long step) {
    MatrixXd l = cholesky_with_jitter(innov.s, 1e-10, 3, "innovation covariance", step);
    MatrixXd kt = l.triangularView<Eigen::Lower>().solve(innov.cross.transpose());
    kt = l.transpose().triangularView<Eigen::Upper>().solve(kt);
    MatrixXd gain = kt.transpose();
    GaussianBelief upd;
    upd.mean = belief.mean + gain * resid;
    upd.cov = symmetrize(belief.cov - gain * innov.s * gain.transpose());
    if (!upd.mean.allFinite()) throw DivergedError("ukf: non-finite updated state", step);
    return upd;
}

}  // namespace detail

/// Exact log marginal likelihood of a linear-Gaussian model via the Kalman
/// filter: per step the innovation is mu_k = H m_k + D u_k with covariance
/// S_k = H P_k H^T + Gamma; the likelihood accumulates log N(y_k; mu_k, S_k)
/// and the state belief is updated (Joseph form) and propagated with the
/// control term B u_k. Masked steps skip both the likelihood term and the
/// update. S_k receives diagonal jitter 1e-10 tr(S)/dy (3 tries, 10x) before
/// a NumericalError naming the step is raised.
inline FilterResult kalman_log_marginal_likelihood(const LtiModel& model,
                                                   const Dataset& data) {
    detail::check_lti_data(model, data);
    const Eigen::Index n = data.size() - 1;
    const Eigen::Index dx = model.dx();
    const Eigen::Index dy = model.dy();
    const MatrixXd eye = MatrixXd::Identity(dx, dx);

    FilterResult res;
    res.predicted.reserve(static_cast<size_t>(n + 1));
    res.updated.reserve(static_cast<size_t>(n + 1));
    VectorXd m = model.x0.mean;
    MatrixXd p = symmetrize(model.x0.cov);

    for (Eigen::Index k = 0; k <= n; ++k) {
        res.predicted.push_back({m, p});
        const VectorXd& u = data.inputs[static_cast<size_t>(k)];
        VectorXd mu = model.H * m + model.D * u;
        MatrixXd s = symmetrize(model.H * p * model.H.transpose() + model.Gamma);
        res.innovation_means.push_back(mu);
        res.innovation_covs.push_back(s);

        VectorXd m_upd = m;
        MatrixXd p_upd = p;
        if (data.is_observed(k)) {
            VectorXd resid = data.outputs[static_cast<size_t>(k)] - mu;
            GaussianLogDensity g = gaussian_log_density(resid, s, "innovation covariance", k);
            res.log_likelihood += g.log_pdf;
            res.quad_term += -0.5 * g.quadratic;
            res.logdet_term += -0.5 * g.log_det;
            res.const_term += -0.5 * static_cast<double>(dy) * kLog2Pi;

            MatrixXd l = cholesky_with_jitter(s, 1e-10, 3, "innovation covariance", k);
            // K = P H^T S^{-1} via two triangular solves
            MatrixXd kt = l.triangularView<Eigen::Lower>().solve(model.H * p.transpose());
            kt = l.transpose().triangularView<Eigen::Upper>().solve(kt);
            MatrixXd gain = kt.transpose();
            m_upd = m + gain * resid;
            MatrixXd ikh = eye - gain * model.H;
            p_upd = symmetrize(ikh * p * ikh.transpose() +
                               gain * model.Gamma * gain.transpose());
        }
        res.updated.push_back({m_upd, p_upd});

        if (k < n) {
            m = model.A * m_upd + model.B * u;
            p = symmetrize(model.A * p_upd * model.A.transpose() + model.Sigma);
            if (!m.allFinite() || !p.allFinite())
                throw DivergedError("kalman: non-finite state belief", k + 1);
        }
    }
    res.finalize();
    return res;
}

/// Unscented-filter approximation of the log marginal likelihood for a
/// nonlinear model. The marginalize/update/predict integrals of the
/// recursion are approximated with 2dx+1 sigma points.
inline FilterResult ukf_log_marginal_likelihood(const NonlinearModel& model,
                                                const Dataset& data,
                                                const UkfConfig& cfg = {}) {
    data.validate();
    if (data.du() != model.du || data.dy() != model.dy)
        throw DimensionError("ukf: model/dataset dimensions disagree");
    cfg.validate(model.dx);

    const Eigen::Index n = data.size() - 1;
    const MatrixXd sigma = model.sigma();
    const MatrixXd gamma = model.gamma();

    FilterResult res;
    GaussianBelief belief = model.x0();
    belief.cov = symmetrize(belief.cov);

    for (Eigen::Index k = 0; k <= n; ++k) {
        res.predicted.push_back(belief);
        const VectorXd& u = data.inputs[static_cast<size_t>(k)];

        detail::UkfInnovation innov = detail::ukf_innovation(model, belief, u, gamma, cfg, k);
        res.innovation_means.push_back(innov.mu);
        res.innovation_covs.push_back(innov.s);

        GaussianBelief upd = belief;
        if (data.is_observed(k)) {
            VectorXd resid = data.outputs[static_cast<size_t>(k)] - innov.mu;
            GaussianLogDensity g =
                gaussian_log_density(resid, innov.s, "innovation covariance", k);
            res.log_likelihood += g.log_pdf;
            res.quad_term += -0.5 * g.quadratic;
            res.logdet_term += -0.5 * g.log_det;
            res.const_term += -0.5 * static_cast<double>(model.dy) * kLog2Pi;
            upd = detail::ukf_update(belief, innov, resid, k);
        }
        res.updated.push_back(upd);

        if (k < n) belief = detail::ukf_predict(model, upd, u, sigma, cfg, k);
    }
    res.finalize();
    return res;
}

/// Joint-Gaussian log likelihood of the whole output record in input-output
/// form: vec(Y) ~ N(mean, Lambda) with the mean given by the noiseless
/// simulation from the x0 mean and Lambda assembled from build_lambda. For a
/// Gaussian x0 the blocks (H A^j) P0 (H A^k)^T are added, so the value
/// matches the Kalman path for any initial belief. Intended for modest n:
/// the dense (n+1)dy covariance is formed explicitly.
inline double io_log_likelihood(const LtiModel& model, const Dataset& data) {
    detail::check_lti_data(model, data);
    if (!data.fully_observed())
        throw PreconditionError("io_log_likelihood: record must be fully observed");
    const Eigen::Index n = data.size() - 1;
    const Eigen::Index dy = model.dy();

    MatrixXd lam = build_lambda(model, n).assemble();
    VectorXd resid((n + 1) * dy);
    VectorXd x = model.x0.mean;
    std::vector<MatrixXd> obs_rows;  // H A^k, only kept when x0 has covariance
    const bool x0_cov = model.x0.cov.cwiseAbs().maxCoeff() > 0.0;
    MatrixXd ha = model.H;
    for (Eigen::Index k = 0; k <= n; ++k) {
        const VectorXd& u = data.inputs[static_cast<size_t>(k)];
        resid.segment(k * dy, dy) =
            data.outputs[static_cast<size_t>(k)] - (model.H * x + model.D * u);
        if (x0_cov) {
            obs_rows.push_back(ha);
            ha = ha * model.A;
        }
        if (k < n) x = model.A * x + model.B * u;
    }
    if (x0_cov) {
        for (Eigen::Index j = 0; j <= n; ++j)
            for (Eigen::Index k = 0; k <= n; ++k)
                lam.block(j * dy, k * dy, dy, dy) +=
                    obs_rows[static_cast<size_t>(j)] * model.x0.cov *
                    obs_rows[static_cast<size_t>(k)].transpose();
    }
    return gaussian_log_density(resid, lam, "joint output covariance").log_pdf;
}

}  // namespace sysid

#endif  // SYSID_FILTERING_HPP
