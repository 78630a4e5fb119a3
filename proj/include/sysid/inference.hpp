// SPDX-License-Identifier: Apache-2.0
//
// Posterior computation: quasi-Newton MAP optimization with finite-difference
// gradients, DRAM-within-Gibbs MCMC over blocked parameter groups, and
// posterior-predictive trajectory ensembles.

#ifndef SYSID_INFERENCE_HPP
#define SYSID_INFERENCE_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <vector>

#include "sysid/filtering.hpp"
#include "sysid/priors.hpp"
#include "sysid/simulate.hpp"
#include "sysid/types.hpp"

namespace sysid {

using LogPostFn = std::function<double(const VectorXd&)>;

// ---------------------------------------------------------------------------
// MAP estimation

struct MapOptions {
    long max_evals = 10000;
    double grad_step = 1e-6;      // central step h_i = grad_step * max(1, |x_i|)
    double grad_tol = 1e-8;
    int max_init_tries = 100;
    double init_jitter = 0.1;     // start resampling scale when f(theta0) = -inf
    std::uint64_t init_seed = 0;
};

struct MapResult {
    VectorXd theta;
    double log_post = -std::numeric_limits<double>::infinity();
    long evals = 0;
    bool converged = false;
};

namespace detail {

/// Central finite-difference gradient with one-sided fallback when a probe
/// lands outside the posterior support.
inline VectorXd fd_gradient(const LogPostFn& f, const VectorXd& x, double fx,
                            double rel_step, long& evals) {
    VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = rel_step * std::max(1.0, std::abs(x[i]));
        VectorXd xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        double fp = f(xp);
        double fm = f(xm);
        evals += 2;
        if (std::isfinite(fp) && std::isfinite(fm)) {
            g[i] = (fp - fm) / (2.0 * h);
        } else if (std::isfinite(fp)) {
            g[i] = (fp - fx) / h;
        } else if (std::isfinite(fm)) {
            g[i] = (fx - fm) / h;
        } else {
            g[i] = 0.0;
        }
    }
    return g;
}

}  // namespace detail

/// Local maximizer of a log posterior via BFGS with finite-difference
/// gradients and a backtracking line search. Starts are resampled (Gaussian
/// jitter) until the objective is finite, up to max_init_tries. The best
/// iterate seen is returned; converged=false signals an exhausted evaluation
/// budget.
inline MapResult map_estimate(const LogPostFn& log_post, const VectorXd& theta0,
                              const MapOptions& opts = {}) {
    MapResult res;
    long evals = 0;

    VectorXd x = theta0;
    double fx = log_post(x);
    ++evals;
    if (!std::isfinite(fx)) {
        std::mt19937_64 rng(opts.init_seed);
        int tries = 1;
        for (; tries < opts.max_init_tries && !std::isfinite(fx); ++tries) {
            x = theta0 + opts.init_jitter * randn_vector(theta0.size(), rng);
            fx = log_post(x);
            ++evals;
        }
        if (!std::isfinite(fx))
            throw NumericalError("map_estimate: no finite starting point found");
    }

    const Eigen::Index d = x.size();
    MatrixXd h_inv = MatrixXd::Identity(d, d);
    res.theta = x;
    res.log_post = fx;

    VectorXd g = detail::fd_gradient(log_post, x, fx, opts.grad_step, evals);
    while (evals < opts.max_evals) {
        if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
            res.converged = true;
            break;
        }

        // Backtracking Armijo line search along the quasi-Newton direction;
        // on failure, reset the curvature model and retry along the gradient
        // (scaled to the current point) before giving up.
        double f_new = -std::numeric_limits<double>::infinity();
        VectorXd x_new;
        bool accepted = false;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            VectorXd dir;
            if (attempt == 0) {
                dir = h_inv * g;
                if (dir.dot(g) <= 0.0) {
                    h_inv = MatrixXd::Identity(d, d);
                    dir = g;
                }
            } else {
                h_inv = MatrixXd::Identity(d, d);
                const double gnorm = g.norm();
                dir = g * (std::max(1e-8, x.norm()) / std::max(gnorm, 1e-300));
            }
            const double slope = g.dot(dir);
            if (!(slope > 0.0)) continue;
            double alpha = 1.0;
            for (int ls = 0; ls < 60 && evals < opts.max_evals; ++ls) {
                x_new = x + alpha * dir;
                f_new = log_post(x_new);
                ++evals;
                if (std::isfinite(f_new) && f_new >= fx + 1e-4 * alpha * slope) {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
        }
        if (!accepted) {
            // no ascent found; only counts as convergence when the search was
            // not cut short by the evaluation budget
            res.converged = evals < opts.max_evals;
            break;
        }

        VectorXd g_new = detail::fd_gradient(log_post, x_new, f_new, opts.grad_step, evals);
        VectorXd s = x_new - x;
        VectorXd yv = g_new - g;  // gradient change (note: ascent)
        const double sy = -s.dot(yv);
        if (sy > 1e-12 * s.norm() * yv.norm()) {
            // BFGS update of the inverse Hessian of -f
            const double rho_bfgs = 1.0 / sy;
            MatrixXd eye = MatrixXd::Identity(d, d);
            MatrixXd v = eye + rho_bfgs * s * yv.transpose();
            h_inv = v * h_inv * v.transpose() + rho_bfgs * s * s.transpose();
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        if (fx > res.log_post) {
            res.log_post = fx;
            res.theta = x;
        }
    }
    res.evals = evals;
    return res;
}

// ---------------------------------------------------------------------------
// DRAM within Gibbs

struct DramConfig {
    long n_samples = 20000;
    long burn_in = 5000;                        // desk default: 25%
    std::vector<std::vector<int>> groups;       // parameter-index blocks
    std::vector<MatrixXd> init_proposal_cov;    // per group; empty -> scaled identity
    double init_step = 0.1;
    long adapt_interval = 100;
    int dr_stages = 2;
    double dr_scale = 5.0;      // stage s covariance divided by dr_scale^{2(s-1)}
    double adapt_scale = 0.0;   // s_d; 0 -> 2.38^2 / d_group
    double adapt_epsilon = 1e-10;

    void validate() const {
        if (dr_stages < 1) throw ConfigError("DramConfig: dr_stages must be >= 1");
        if (burn_in >= n_samples) throw ConfigError("DramConfig: burn_in must be < n_samples");
        if (adapt_interval < 1) throw ConfigError("DramConfig: adapt_interval must be >= 1");
    }
};

/// Ordered MCMC output with per-group acceptance bookkeeping.
struct Chain {
    std::vector<VectorXd> samples;
    std::vector<double> log_posts;
    std::vector<std::vector<int>> group_spec;
    std::vector<long> accept_counts;
    std::vector<long> proposal_counts;
    long burn_in = 0;

    double acceptance_rate(size_t group) const {
        if (group >= proposal_counts.size() || proposal_counts[group] == 0)
            return 1.0;  // degenerate (all fixed)
        return static_cast<double>(accept_counts[group]) /
               static_cast<double>(proposal_counts[group]);
    }

    /// Pooled acceptance over all groups; 1 by convention when nothing moves.
    double overall_acceptance() const {
        long acc = 0, prop = 0;
        for (size_t g = 0; g < proposal_counts.size(); ++g) {
            acc += accept_counts[g];
            prop += proposal_counts[g];
        }
        return prop == 0 ? 1.0 : static_cast<double>(acc) / static_cast<double>(prop);
    }
};

/// The standard Gibbs blocking of a model layout:
/// {theta_x0}, {theta_dyn}, {theta_Sigma, theta_Gamma}. Observation
/// parameters are left out of the sweep by passing them in `fixed`.
inline std::vector<std::vector<int>> gibbs_groups(const ParamLayout& layout) {
    auto range_ids = [](const ParamLayout::Range& r) {
        std::vector<int> ids(static_cast<size_t>(r.length));
        for (int i = 0; i < r.length; ++i) ids[static_cast<size_t>(i)] = r.offset + i;
        return ids;
    };
    std::vector<std::vector<int>> groups;
    groups.push_back(range_ids(layout.x0));
    groups.push_back(range_ids(layout.dyn));
    std::vector<int> noise = range_ids(layout.sigma);
    std::vector<int> gamma = range_ids(layout.gamma);
    noise.insert(noise.end(), gamma.begin(), gamma.end());
    groups.push_back(noise);
    return groups;
}

namespace detail {

struct DramGroupState {
    std::vector<int> idx;
    MatrixXd proposal_cov;
    MatrixXd proposal_chol;
    // Running moments of the group's history for adaptation
    VectorXd mean;
    MatrixXd scatter;
    long count = 0;

    void push_history(const VectorXd& value) {
        ++count;
        if (count == 1) {
            mean = value;
            scatter = MatrixXd::Zero(value.size(), value.size());
            return;
        }
        VectorXd delta = value - mean;
        mean += delta / static_cast<double>(count);
        scatter += delta * (value - mean).transpose();
    }

    MatrixXd history_cov() const {
        if (count < 2) return MatrixXd::Zero(mean.size(), mean.size());
        return symmetrize(scatter / static_cast<double>(count - 1));
    }
};

inline double log_gaussian_step_density(const VectorXd& diff, const MatrixXd& chol) {
    VectorXd z = chol.triangularView<Eigen::Lower>().solve(diff);
    double logdet = 2.0 * chol.diagonal().array().log().sum();
    return -0.5 * (z.squaredNorm() + logdet + static_cast<double>(diff.size()) * kLog2Pi);
}

/// General delayed-rejection acceptance probability (log domain) for the
/// path x_0 -> x_1 -> ... -> x_k of tried points: stage-i proposals are
/// Gaussians centered at the path start with Cholesky factors chols[i-1];
/// lp holds log posteriors along the path.
inline double dr_log_alpha(const std::vector<VectorXd>& path, const std::vector<double>& lp,
                           const std::vector<MatrixXd>& chols, size_t k) {
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();
    if (!std::isfinite(lp[k])) return neg_inf;
    double log_num = lp[k];
    double log_den = lp[0];
    for (size_t i = 1; i <= k; ++i) {
        log_num += log_gaussian_step_density(path[k - i] - path[k], chols[i - 1]);
        log_den += log_gaussian_step_density(path[i] - path[0], chols[i - 1]);
    }
    for (size_t i = 1; i < k; ++i) {
        std::vector<VectorXd> rev_path;
        std::vector<double> rev_lp;
        rev_path.reserve(i + 1);
        for (size_t t = 0; t <= i; ++t) {
            rev_path.push_back(path[k - t]);
            rev_lp.push_back(lp[k - t]);
        }
        const double a_rev = dr_log_alpha(rev_path, rev_lp, chols, i);
        const double a_fwd = dr_log_alpha(path, lp, chols, i);
        log_num += std::log1p(-std::exp(std::min(a_rev, -1e-300)));
        log_den += std::log1p(-std::exp(std::min(a_fwd, -1e-300)));
    }
    if (!std::isfinite(log_den)) return log_num > neg_inf ? 0.0 : neg_inf;
    return std::min(0.0, log_num - log_den);
}

}  // namespace detail

/// Blocked MCMC: per sweep, each parameter group is updated with a DRAM
/// kernel (Gaussian random walk, delayed-rejection fallbacks with shrinking
/// covariance, adaptive proposal covariance s_d cov(history) + s_d eps I).
/// Indices in `fixed` never move. A chain whose proposals are all non-finite
/// for 1000 consecutive sweeps aborts with a stuck-chain error.
inline Chain dram_within_gibbs(const LogPostFn& log_post, const VectorXd& theta0,
                               const DramConfig& cfg, const std::set<int>& fixed,
                               std::mt19937_64& rng) {
    cfg.validate();
    Chain chain;
    chain.burn_in = cfg.burn_in;

    // Active groups: configured groups minus fixed indices.
    std::vector<detail::DramGroupState> groups;
    for (size_t gi = 0; gi < cfg.groups.size(); ++gi) {
        detail::DramGroupState st;
        for (int id : cfg.groups[gi]) {
            if (id < 0 || id >= theta0.size())
                throw ConfigError("dram_within_gibbs: group index out of range");
            if (fixed.count(id) == 0) st.idx.push_back(id);
        }
        if (st.idx.empty()) continue;
        const Eigen::Index d = static_cast<Eigen::Index>(st.idx.size());
        if (gi < cfg.init_proposal_cov.size() && cfg.init_proposal_cov[gi].size() > 0) {
            st.proposal_cov = cfg.init_proposal_cov[gi];
            if (st.proposal_cov.rows() != d)
                throw ConfigError("dram_within_gibbs: proposal covariance size mismatch");
        } else {
            VectorXd scale(d);
            for (Eigen::Index i = 0; i < d; ++i)
                scale[i] = cfg.init_step * std::max(1.0, std::abs(theta0[st.idx[i]]));
            st.proposal_cov = scale.cwiseProduct(scale).asDiagonal();
        }
        st.proposal_chol = cholesky_with_jitter(st.proposal_cov, 1e-12, 3, "proposal");
        st.mean = VectorXd::Zero(d);
        st.scatter = MatrixXd::Zero(d, d);
        groups.push_back(std::move(st));
    }

    chain.group_spec.clear();
    for (const auto& g : groups) chain.group_spec.push_back(g.idx);
    chain.accept_counts.assign(groups.size(), 0);
    chain.proposal_counts.assign(groups.size(), 0);

    VectorXd theta = theta0;
    double lp = log_post(theta);
    if (!std::isfinite(lp))
        throw PreconditionError("dram_within_gibbs: log posterior not finite at start");

    std::uniform_real_distribution<double> unif(0.0, 1.0);
    long stuck_sweeps = 0;

    chain.samples.reserve(static_cast<size_t>(cfg.n_samples));
    chain.log_posts.reserve(static_cast<size_t>(cfg.n_samples));
    for (long sweep = 0; sweep < cfg.n_samples; ++sweep) {
        bool any_finite_proposal = groups.empty();
        for (size_t gi = 0; gi < groups.size(); ++gi) {
            auto& st = groups[gi];
            const Eigen::Index d = static_cast<Eigen::Index>(st.idx.size());
            ++chain.proposal_counts[gi];

            // Stage Cholesky factors: C, C/s^2, C/s^4, ...
            std::vector<MatrixXd> chols(static_cast<size_t>(cfg.dr_stages));
            chols[0] = st.proposal_chol;
            for (int s = 1; s < cfg.dr_stages; ++s)
                chols[static_cast<size_t>(s)] =
                    chols[static_cast<size_t>(s - 1)] / cfg.dr_scale;

            VectorXd current(d);
            for (Eigen::Index i = 0; i < d; ++i) current[i] = theta[st.idx[i]];

            std::vector<VectorXd> path{current};
            std::vector<double> path_lp{lp};
            bool accepted = false;
            for (int stage = 1; stage <= cfg.dr_stages && !accepted; ++stage) {
                VectorXd cand = current + chols[static_cast<size_t>(stage - 1)] *
                                              randn_vector(d, rng);
                VectorXd full = theta;
                for (Eigen::Index i = 0; i < d; ++i) full[st.idx[i]] = cand[i];
                double cand_lp = log_post(full);
                if (std::isfinite(cand_lp)) any_finite_proposal = true;
                path.push_back(cand);
                path_lp.push_back(cand_lp);
                double log_alpha = detail::dr_log_alpha(path, path_lp, chols,
                                                        static_cast<size_t>(stage));
                if (std::log(unif(rng)) < log_alpha) {
                    theta = full;
                    lp = cand_lp;
                    ++chain.accept_counts[gi];
                    accepted = true;
                }
            }

            VectorXd now(d);
            for (Eigen::Index i = 0; i < d; ++i) now[i] = theta[st.idx[i]];
            st.push_history(now);
            if ((sweep + 1) % cfg.adapt_interval == 0 && st.count > 2) {
                const double sd =
                    cfg.adapt_scale > 0.0 ? cfg.adapt_scale
                                          : 2.38 * 2.38 / static_cast<double>(d);
                MatrixXd adapted =
                    sd * st.history_cov() +
                    sd * cfg.adapt_epsilon * MatrixXd::Identity(d, d);
                st.proposal_cov = adapted;
                st.proposal_chol = cholesky_with_jitter(adapted, 1e-12, 3, "proposal");
            }
        }

        stuck_sweeps = any_finite_proposal ? 0 : stuck_sweeps + 1;
        if (stuck_sweeps >= 1000)
            throw NumericalError(
                "dram_within_gibbs: all proposals non-finite for 1000 consecutive sweeps");
        chain.samples.push_back(theta);
        chain.log_posts.push_back(lp);
    }
    return chain;
}

// ---------------------------------------------------------------------------
// Posterior predictive

enum class PredictiveMode { stochastic, deterministic };

struct PredictiveEnsemble {
    std::vector<std::vector<VectorXd>> trajectories;  // per draw, per step
    std::vector<VectorXd> mean;
    long n_diverged = 0;
};

/// Simulate posterior draws forward. Deterministic mode runs a noiseless
/// simulation from x0 over the data window plus `horizon` extra steps.
/// Stochastic mode filters over the data window (trajectory = updated output
/// means) and then propagates the final state with sampled process noise.
/// Draws are taken at regular post-burn-in intervals; diverged draws are
/// dropped and counted, and more than 50% divergence is an error.
inline PredictiveEnsemble posterior_predictive(
    const Chain& chain, const std::function<NonlinearModel(const VectorXd&)>& model_builder,
    const Dataset& data, Eigen::Index horizon, PredictiveMode mode, long n_draws,
    std::mt19937_64& rng, const std::vector<VectorXd>& future_inputs = {},
    const UkfConfig& cfg = {}) {
    const long available = static_cast<long>(chain.samples.size()) - chain.burn_in;
    if (available <= 0)
        throw PreconditionError("posterior_predictive: chain shorter than burn-in");
    if (horizon > 0 && static_cast<Eigen::Index>(future_inputs.size()) < horizon)
        throw PreconditionError("posterior_predictive: future inputs shorter than horizon");
    n_draws = std::min<long>(n_draws, available);
    const long stride = std::max<long>(1, available / n_draws);

    std::vector<VectorXd> all_inputs = data.inputs;
    all_inputs.insert(all_inputs.end(), future_inputs.begin(),
                      future_inputs.begin() + horizon);

    PredictiveEnsemble ens;
    for (long j = 0; j < n_draws; ++j) {
        const size_t idx =
            static_cast<size_t>(std::min<long>(chain.burn_in + j * stride,
                                               static_cast<long>(chain.samples.size()) - 1));
        NonlinearModel model = model_builder(chain.samples[idx]);
        try {
            std::vector<VectorXd> traj;
            if (mode == PredictiveMode::deterministic) {
                traj = rollout_outputs(model, model.x0().mean, all_inputs);
            } else {
                FilterResult fr = ukf_log_marginal_likelihood(model, data, cfg);
                traj.reserve(all_inputs.size());
                for (Eigen::Index k = 0; k < data.size(); ++k)
                    traj.push_back(model.output(fr.updated[static_cast<size_t>(k)].mean,
                                                data.inputs[static_cast<size_t>(k)]));
                VectorXd x = fr.updated.back().mean;
                const MatrixXd sigma = model.sigma();
                for (Eigen::Index k = 0; k < horizon; ++k) {
                    const VectorXd& u_prev =
                        all_inputs[static_cast<size_t>(data.size() - 1 + k)];
                    x = sample_gaussian(model.step(x, u_prev), sigma, rng);
                    if (!x.allFinite()) throw DivergedError("predictive: state", k);
                    traj.push_back(
                        model.output(x, all_inputs[static_cast<size_t>(data.size() + k)]));
                }
            }
            ens.trajectories.push_back(std::move(traj));
        } catch (const DivergedError&) {
            ++ens.n_diverged;
        } catch (const NumericalError&) {
            ++ens.n_diverged;
        }
    }
    if (ens.trajectories.empty() || ens.n_diverged > static_cast<long>(ens.trajectories.size()))
        throw NumericalError("posterior_predictive: more than half of the draws diverged");

    const size_t steps = ens.trajectories.front().size();
    ens.mean.assign(steps, VectorXd::Zero(ens.trajectories.front().front().size()));
    for (const auto& traj : ens.trajectories)
        for (size_t k = 0; k < steps; ++k) ens.mean[k] += traj[k];
    for (auto& m : ens.mean) m /= static_cast<double>(ens.trajectories.size());
    return ens;
}

}  // namespace sysid

#endif  // SYSID_INFERENCE_HPP
