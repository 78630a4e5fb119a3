// SPDX-License-Identifier: Apache-2.0
//
// Experiment harness: JSON experiment configs (versioned schema, unknown
// keys rejected), the comparison pipelines (Markov-parameter estimators,
// pendulum noise/timestep sweep, objective landscapes, Duffing, Allen-Cahn,
// generic fitting), and deterministic result emission.

#ifndef SYSID_EXPERIMENTS_HPP
#define SYSID_EXPERIMENTS_HPP

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "sysid/bundle.hpp"
#include "sysid/csv.hpp"
#include "sysid/datagen.hpp"
#include "sysid/era.hpp"
#include "sysid/experiments_nonlinear.hpp"
#include "sysid/filtering.hpp"
#include "sysid/inference.hpp"
#include "sysid/markov.hpp"
#include "sysid/models.hpp"
#include "sysid/objectives.hpp"

namespace sysid {

// ---------------------------------------------------------------------------
// Markov-parameter estimator comparison (LS vs GLS vs MAP)

struct MarkovCompareConfig {
    std::uint64_t seed = 0;
    int trials = 20;
    std::vector<double> sigmas{0.25, 0.5, 1.0};
    Eigen::Index nbar = 18;
    std::vector<Eigen::Index> k_grid{54, 100, 200, 300, 400, 500};
    int map_trials = 5;
    Eigen::Index map_k = 500;
    Eigen::Index dx = 5, dy = 2, du = 3;
    long map_max_evals = 6000;  // per quasi-Newton round

    static MarkovCompareConfig from_json(const json& j) {
        detail::check_keys(j,
                           {"trials", "sigmas", "nbar", "k_grid", "map_trials", "map_k",
                            "dims", "map_max_evals"},
                           "markov_compare");
        MarkovCompareConfig c;
        c.trials = detail::get_or(j, "trials", c.trials);
        c.sigmas = detail::get_or(j, "sigmas", c.sigmas);
        c.nbar = detail::get_or(j, "nbar", c.nbar);
        c.k_grid = detail::get_or(j, "k_grid", c.k_grid);
        c.map_trials = detail::get_or(j, "map_trials", c.map_trials);
        c.map_k = detail::get_or(j, "map_k", c.map_k);
        c.map_max_evals = detail::get_or(j, "map_max_evals", c.map_max_evals);
        if (j.contains("dims")) {
            detail::check_keys(j.at("dims"), {"dx", "dy", "du"}, "markov_compare.dims");
            c.dx = detail::get_or(j.at("dims"), "dx", c.dx);
            c.dy = detail::get_or(j.at("dims"), "dy", c.dy);
            c.du = detail::get_or(j.at("dims"), "du", c.du);
        }
        if (c.sigmas.empty() || c.k_grid.empty())
            throw ConfigError("markov_compare: empty sweep grid");
        return c;
    }
};

struct MarkovCompareResult {
    MetricsTable metrics;
    // means[sigma][k] after the outlier-drop policy
    std::vector<std::vector<double>> ls_mean, gls_mean;
    std::vector<double> map_mean;  // per sigma, at map_k
    json summary;
};

namespace detail {

/// Mean after dropping the single worst value when the sample is large
/// enough for the outlier policy (>= 20 trials).
inline double mean_with_drop_policy(std::vector<double> values, bool* dropped = nullptr) {
    if (dropped) *dropped = false;
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    if (values.size() >= 20) {
        auto worst = std::max_element(values.begin(), values.end());
        values.erase(worst);
        if (dropped) *dropped = true;
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

/// Random system of the estimator-comparison experiment: A = I (marginally
/// stable), H and D ~ N(0, 1/dy), B ~ N(0, 1/dx), isotropic noise sigma^2 I.
inline LtiModel markov_compare_truth(Eigen::Index dx, Eigen::Index dy, Eigen::Index du,
                                     double sigma, std::mt19937_64& rng) {
    LtiModel m;
    m.A = MatrixXd::Identity(dx, dx);
    auto fill = [&rng](Eigen::Index r, Eigen::Index c, double std_dev) {
        MatrixXd out(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) out(i, j) = std_dev * randn(rng);
        return out;
    };
    m.B = fill(dx, du, std::sqrt(1.0 / static_cast<double>(dx)));
    m.H = fill(dy, dx, std::sqrt(1.0 / static_cast<double>(dy)));
    m.D = fill(dy, du, std::sqrt(1.0 / static_cast<double>(dy)));
    m.Sigma = sigma * sigma * MatrixXd::Identity(dx, dx);
    m.Gamma = sigma * sigma * MatrixXd::Identity(dy, dy);
    m.x0 = GaussianBelief::point_mass(VectorXd::Zero(dx));
    return m;
}

}  // namespace detail

/// Maximize a log posterior over a subset of coordinates, the rest frozen at
/// their current values. Used by the staged fits below.
inline MapResult map_estimate_subset(const LogPostFn& log_post, const VectorXd& theta0,
                                     const std::vector<int>& free_idx,
                                     const MapOptions& opts) {
    LogPostFn wrapped = [&log_post, &theta0, &free_idx](const VectorXd& z) {
        VectorXd full = theta0;
        for (size_t i = 0; i < free_idx.size(); ++i)
            full[free_idx[i]] = z[static_cast<Eigen::Index>(i)];
        return log_post(full);
    };
    VectorXd z0(static_cast<Eigen::Index>(free_idx.size()));
    for (size_t i = 0; i < free_idx.size(); ++i)
        z0[static_cast<Eigen::Index>(i)] = theta0[free_idx[i]];
    MapResult sub = map_estimate(wrapped, z0, opts);
    MapResult full;
    full.theta = theta0;
    for (size_t i = 0; i < free_idx.size(); ++i)
        full.theta[free_idx[i]] = sub.theta[static_cast<Eigen::Index>(i)];
    full.log_post = sub.log_post;
    full.evals = sub.evals;
    full.converged = sub.converged;
    return full;
}

/// MAP estimate of the Markov parameters through the state-space posterior:
/// fit a full LTI parameterization by Kalman-filter log posterior (first
/// nbar outputs masked, matching the LS estimators' discarded data) and read
/// off G_{0:nbar-1} of the fitted realization. Initialized from the LS+ERA
/// realization of the same record (spectral radius clipped to 1); the noise
/// scales are frozen at the LS residual scale for two stages so the dynamics
/// converge before the noise parameters are released.
inline MarkovSequence map_markov_estimate(const Dataset& data, Eigen::Index nbar,
                                          Eigen::Index dx, long max_evals,
                                          std::uint64_t seed) {
    Dataset masked = data;
    masked.observed.assign(static_cast<size_t>(masked.size()), 1);
    for (Eigen::Index k = 0; k < nbar; ++k) masked.observed[static_cast<size_t>(k)] = 0;

    LtiParameterization par{dx, data.dy(), data.du()};
    const PriorSpec priors = par.priors();
    LogPostFn log_post = [&par, &masked, &priors](const VectorXd& theta) {
        const double lp = log_prior(priors, theta);
        if (lp == kLogZero) return kLogZero;
        try {
            return lp + kalman_log_marginal_likelihood(par.model(theta), masked)
                            .log_likelihood;
        } catch (const Error&) {
            return kLogZero;
        }
    };

    VectorXd theta = VectorXd::Zero(par.size());
    double scale = 0.5;
    try {
        LtiModel init = ls_era(data, dx, nbar);
        MarkovSequence g_ls = ls_markov_subtraj(data, nbar);
        init.D = g_ls.blocks.front();
        const double rho = spectral_radius(init.A);
        if (rho > 1.0) init.A /= rho;
        // residual scale of the LS fit seeds both noise parameters
        double resid = 0.0;
        long count = 0;
        MarkovSequence g_fit = markov_from_statespace(init, nbar - 1);
        for (Eigen::Index k = nbar; k < data.size(); ++k) {
            VectorXd pred = VectorXd::Zero(data.dy());
            for (Eigen::Index i = 0; i < nbar; ++i)
                pred += g_fit.blocks[static_cast<size_t>(i)] *
                        data.inputs[static_cast<size_t>(k - i)];
            resid += (data.outputs[static_cast<size_t>(k)] - pred).squaredNorm();
            count += data.dy();
        }
        scale = std::sqrt(resid / static_cast<double>(std::max(1l, count)));
        theta = par.pack(init, 0.7 * scale, 0.7 * scale);
    } catch (const Error&) {
        std::mt19937_64 rng(derive_seed(seed, 77));
        theta = 0.1 * randn_vector(par.size(), rng);
        theta[par.size() - 2] = 0.5;
        theta[par.size() - 1] = 0.5;
    }

    // Quasi-Newton rounds are repeated from their own result until the
    // posterior stops improving: a single BFGS run routinely stalls far from
    // the mode in this 50+-dimensional posterior, and restarting with fresh
    // curvature recovers consistent progress.
    std::vector<int> matrix_idx;
    for (Eigen::Index i = 0; i < par.size() - 2; ++i)
        matrix_idx.push_back(static_cast<int>(i));
    for (double shrink : {1.0, 0.5}) {
        theta[par.size() - 2] = 0.7 * scale * shrink;
        theta[par.size() - 1] = 0.7 * scale * shrink;
        double prev = -std::numeric_limits<double>::infinity();
        for (int round = 0; round < 3; ++round) {
            MapOptions opts;
            opts.max_evals = max_evals;
            opts.init_seed = derive_seed(seed, 78, static_cast<std::uint64_t>(round));
            MapResult r = map_estimate_subset(log_post, theta, matrix_idx, opts);
            theta = r.theta;
            if (r.log_post < prev + 2.0) break;
            prev = r.log_post;
        }
    }
    MapResult map;
    map.theta = theta;
    double prev = -std::numeric_limits<double>::infinity();
    for (int round = 0; round < 5; ++round) {
        MapOptions opts;
        opts.max_evals = max_evals;
        opts.init_seed = derive_seed(seed, 79, static_cast<std::uint64_t>(round));
        MapResult r = map_estimate(log_post, theta, opts);
        theta = r.theta;
        if (r.log_post > map.log_post) map = r;
        if (r.log_post < prev + 1.0) break;
        prev = r.log_post;
    }
    LtiModel fitted = par.model(map.theta);
    MarkovSequence g = markov_from_statespace(fitted, nbar - 1);
    g.blocks[0] = fitted.D;
    return g;
}

inline MarkovCompareResult run_markov_compare(const MarkovCompareConfig& cfg) {
    MarkovCompareResult res;
    res.metrics.columns = {"sigma", "trial", "trial_seed", "K", "method",
                           "spectral_error", "error"};
    const Eigen::Index k_max = *std::max_element(cfg.k_grid.begin(), cfg.k_grid.end());
    const Eigen::Index map_k = cfg.map_k > 0 ? cfg.map_k : k_max;

    res.ls_mean.assign(cfg.sigmas.size(), {});
    res.gls_mean.assign(cfg.sigmas.size(), {});
    res.map_mean.assign(cfg.sigmas.size(), std::numeric_limits<double>::quiet_NaN());

    for (size_t si = 0; si < cfg.sigmas.size(); ++si) {
        const double sigma = cfg.sigmas[si];
        std::vector<std::vector<double>> ls_err(cfg.k_grid.size()),
            gls_err(cfg.k_grid.size());
        std::vector<double> map_err;

        for (int trial = 0; trial < cfg.trials; ++trial) {
            const std::uint64_t trial_seed = derive_seed(cfg.seed, si, trial);
            std::mt19937_64 rng(trial_seed);
            LtiModel truth = detail::markov_compare_truth(cfg.dx, cfg.dy, cfg.du, sigma, rng);
            MarkovSequence g_true = markov_from_statespace(truth, cfg.nbar - 1);

            const Eigen::Index n_points = cfg.nbar + k_max;
            std::vector<VectorXd> inputs(static_cast<size_t>(n_points));
            for (auto& u : inputs) u = randn_vector(cfg.du, rng);
            std::mt19937_64 sim_rng(derive_seed(trial_seed, 1));
            Dataset record = simulate(truth, inputs, sim_rng, /*stochastic=*/true);
            LambdaBlocks lambda =
                build_lambda(truth, n_points - 1, /*include_offdiag=*/false);

            for (size_t ki = 0; ki < cfg.k_grid.size(); ++ki) {
                Dataset sub = record.head(cfg.nbar + cfg.k_grid[ki]);
                LambdaBlocks lam_sub;
                lam_sub.diag.assign(lambda.diag.begin(),
                                    lambda.diag.begin() + sub.size());
                for (const char* method : {"ls", "gls"}) {
                    std::string err_text;
                    double err = std::numeric_limits<double>::quiet_NaN();
                    try {
                        MarkovSequence est = method == std::string("ls")
                                                 ? ls_markov_subtraj(sub, cfg.nbar)
                                                 : gls_markov_subtraj(sub, cfg.nbar, lam_sub);
                        err = markov_error(est, g_true);
                        (method == std::string("ls") ? ls_err : gls_err)[ki].push_back(err);
                    } catch (const Error& e) {
                        err_text = e.what();
                    }
                    res.metrics.add_row({format_double(sigma), std::to_string(trial),
                                         std::to_string(trial_seed),
                                         std::to_string(cfg.k_grid[ki]), method,
                                         format_double(err), err_text});
                }
            }

            if (trial < cfg.map_trials) {
                std::string err_text;
                double err = std::numeric_limits<double>::quiet_NaN();
                try {
                    Dataset sub = record.head(cfg.nbar + map_k);
                    MarkovSequence est = map_markov_estimate(sub, cfg.nbar, cfg.dx,
                                                             cfg.map_max_evals, trial_seed);
                    err = markov_error(est, g_true);
                    map_err.push_back(err);
                } catch (const Error& e) {
                    err_text = e.what();
                }
                res.metrics.add_row({format_double(sigma), std::to_string(trial),
                                     std::to_string(trial_seed), std::to_string(map_k),
                                     "map", format_double(err), err_text});
            }
        }

        res.ls_mean[si].resize(cfg.k_grid.size());
        res.gls_mean[si].resize(cfg.k_grid.size());
        for (size_t ki = 0; ki < cfg.k_grid.size(); ++ki) {
            res.ls_mean[si][ki] = detail::mean_with_drop_policy(ls_err[ki]);
            res.gls_mean[si][ki] = detail::mean_with_drop_policy(gls_err[ki]);
        }
        res.map_mean[si] = detail::mean_with_drop_policy(map_err);
    }

    res.summary["outlier_policy"] =
        "drop the single worst trial per method when trials >= 20";
    res.summary["sigmas"] = cfg.sigmas;
    res.summary["k_grid"] = cfg.k_grid;
    res.summary["ls_mean"] = res.ls_mean;
    res.summary["gls_mean"] = res.gls_mean;
    res.summary["map_mean"] = res.map_mean;
    return res;
}

// ---------------------------------------------------------------------------
// Pendulum noise/timestep sweep (LS+ERA vs MAP)

struct PendulumSweepConfig {
    std::uint64_t seed = 0;
    std::vector<double> noise_ratios{0.0, 0.1, 0.2};
    std::vector<double> timesteps{0.1, 0.25, 0.5};
    int realizations = 10;
    Eigen::Index nbar = 18;
    long map_max_evals = 4000;
    int multistarts = 3;

    static PendulumSweepConfig from_json(const json& j) {
        detail::check_keys(j,
                           {"noise_ratios", "timesteps", "realizations", "nbar",
                            "map_max_evals", "multistarts"},
                           "pendulum_sweep");
        PendulumSweepConfig c;
        c.noise_ratios = detail::get_or(j, "noise_ratios", c.noise_ratios);
        c.timesteps = detail::get_or(j, "timesteps", c.timesteps);
        c.realizations = detail::get_or(j, "realizations", c.realizations);
        c.nbar = detail::get_or(j, "nbar", c.nbar);
        c.map_max_evals = detail::get_or(j, "map_max_evals", c.map_max_evals);
        c.multistarts = detail::get_or(j, "multistarts", c.multistarts);
        if (c.noise_ratios.empty() || c.timesteps.empty())
            throw ConfigError("pendulum_sweep: empty sweep grid");
        return c;
    }
};

/// MAP fit of the 13-parameter pendulum family on the training window. The
/// first start is the LS+ERA realization of the same record (the posterior
/// climb then begins at the competing estimate); the remaining starts are
/// randomized data-informed draws. Returns the best-posterior parameters.
inline VectorXd pendulum_map_fit(const Dataset& train, double dt, long max_evals,
                                 int multistarts, std::uint64_t seed) {
    const PriorSpec priors = pendulum_priors();
    LogPostFn log_post = [&train, &priors](const VectorXd& theta) {
        const double lp = log_prior(priors, theta);
        if (lp == kLogZero) return kLogZero;
        try {
            return lp +
                   kalman_log_marginal_likelihood(pendulum_lti_from_theta(theta), train)
                       .log_likelihood;
        } catch (const Error&) {
            return kLogZero;
        }
    };

    double y_var = 0.0, y_mean = 0.0;
    for (const auto& y : train.outputs) y_mean += y[0];
    y_mean /= static_cast<double>(train.size());
    for (const auto& y : train.outputs) y_var += (y[0] - y_mean) * (y[0] - y_mean);
    y_var /= static_cast<double>(train.size());

    MapResult best;

    // Start 1: LS+ERA realization, refined with the noise variances frozen on
    // an annealed schedule tracking the current deterministic residual floor
    // (the dynamics parameters converge before the noise block is released;
    // otherwise the posterior can settle in a mode where noise absorbs
    // dynamics error, or - clamped below the floor - in a degenerate
    // amplification regime).
    try {
        LtiModel est = ls_era(train, 2, 18);
        est.x0 = GaussianBelief::point_mass(VectorXd::Zero(2));
        VectorXd theta = pendulum_theta_from_lti(est);
        std::vector<int> dyn_idx{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
        auto resid_var = [&train](const VectorXd& th) {
            std::mt19937_64 dummy(0);
            Dataset sim =
                simulate(pendulum_lti_from_theta(th), train.inputs, dummy, false);
            double acc = 0.0;
            for (Eigen::Index k = 0; k < train.size(); ++k) {
                const double e = train.outputs[static_cast<size_t>(k)][0] -
                                 sim.outputs[static_cast<size_t>(k)][0];
                acc += e * e;
            }
            return acc / static_cast<double>(train.size());
        };
        theta[10] = theta[11] = 1e-10;
        theta[12] = std::max(resid_var(theta), 1e-12);
        for (int stage = 0; stage < 3; ++stage) {
            const double clamp = std::max(0.3 * resid_var(theta), 1e-14);
            theta[10] = theta[11] = 1e-2 * clamp;
            theta[12] = clamp;
            MapOptions opts;
            opts.max_evals = max_evals;
            opts.init_seed = derive_seed(seed, 33, static_cast<std::uint64_t>(stage));
            theta = map_estimate_subset(log_post, theta, dyn_idx, opts).theta;
        }
        theta[12] = std::max(resid_var(theta), theta[12]);
        MapOptions opts;
        opts.max_evals = max_evals;
        opts.init_seed = derive_seed(seed, 34);
        best = map_estimate(log_post, theta, opts);
    } catch (const Error&) {
    }

    // Remaining starts: randomized data-informed draws, plain ascent.
    for (int s = 1; s < multistarts; ++s) {
        std::mt19937_64 rng(derive_seed(seed, 31, static_cast<std::uint64_t>(s)));
        VectorXd theta0(13);
        theta0 << train.outputs[0][0], 0.1 * randn(rng),           // x0
            0.9 + 0.05 * randn(rng), 0.05 * randn(rng),            // A col 1
            0.05 * randn(rng), 0.9 + 0.05 * randn(rng),            // A col 2
            0.3 * randn(rng), dt * (1.0 + 0.3 * randn(rng)),       // B
            1.0 + 0.1 * randn(rng), 0.1 * randn(rng),              // H
            1e-8, 1e-8, std::max(1e-8, 0.05 * y_var);              // variances
        MapOptions opts;
        opts.max_evals = max_evals;
        opts.init_seed = derive_seed(seed, 32, static_cast<std::uint64_t>(s));
        try {
            MapResult r = map_estimate(log_post, theta0, opts);
            if (r.log_post > best.log_post) best = r;
        } catch (const NumericalError&) {
            continue;
        }
    }
    if (!best.theta.size())
        throw NumericalError("pendulum_map_fit: no start produced a finite posterior");
    return best.theta;
}

struct PendulumSweepResult {
    MetricsTable metrics;
    // mean MSE per grid cell [noise][dt]
    std::vector<std::vector<double>> lsera_train, lsera_test, map_train, map_test;
    json summary;
};

inline PendulumSweepResult run_pendulum_sweep(const PendulumSweepConfig& cfg) {
    PendulumSweepResult res;
    res.metrics.columns = {"noise_ratio", "dt",       "realization", "trial_seed",
                           "method",      "train_mse", "test_mse",    "error"};
    auto grid_of = [&cfg]() {
        return std::vector<std::vector<double>>(
            cfg.noise_ratios.size(), std::vector<double>(cfg.timesteps.size(), 0.0));
    };
    res.lsera_train = grid_of();
    res.lsera_test = grid_of();
    res.map_train = grid_of();
    res.map_test = grid_of();

    for (size_t ni = 0; ni < cfg.noise_ratios.size(); ++ni) {
        for (size_t ti = 0; ti < cfg.timesteps.size(); ++ti) {
            const double sigma = cfg.noise_ratios[ni];
            const double dt = cfg.timesteps[ti];
            std::vector<double> mses[4];  // lsera train/test, map train/test

            for (int r = 0; r < cfg.realizations; ++r) {
                const std::uint64_t trial_seed = derive_seed(cfg.seed, ni * 100 + ti, r);
                PendulumRecord rec = gen_pendulum(dt, sigma, trial_seed);
                Dataset train = rec.data.head(rec.n_train + 1);

                auto eval_model = [&rec](const LtiModel& model) {
                    std::mt19937_64 dummy(0);
                    Dataset sim = simulate(model, rec.data.inputs, dummy,
                                           /*stochastic=*/false);
                    return pendulum_mse(rec, sim.outputs);
                };

                // LS+ERA
                {
                    std::string err_text;
                    double train_mse = std::numeric_limits<double>::infinity();
                    double test_mse = std::numeric_limits<double>::infinity();
                    try {
                        LtiModel est = ls_era(train, 2, cfg.nbar);
                        PendulumMse mse = eval_model(est);
                        train_mse = mse.train;
                        test_mse = mse.test;
                    } catch (const Error& e) {
                        err_text = e.what();
                    }
                    mses[0].push_back(train_mse);
                    mses[1].push_back(test_mse);
                    res.metrics.add_row({format_double(sigma), format_double(dt),
                                         std::to_string(r), std::to_string(trial_seed),
                                         "ls_era", format_double(train_mse),
                                         format_double(test_mse), err_text});
                }
                // MAP
                {
                    std::string err_text;
                    double train_mse = std::numeric_limits<double>::infinity();
                    double test_mse = std::numeric_limits<double>::infinity();
                    try {
                        VectorXd theta = pendulum_map_fit(train, dt, cfg.map_max_evals,
                                                          cfg.multistarts, trial_seed);
                        PendulumMse mse = eval_model(pendulum_lti_from_theta(theta));
                        train_mse = mse.train;
                        test_mse = mse.test;
                    } catch (const Error& e) {
                        err_text = e.what();
                    }
                    mses[2].push_back(train_mse);
                    mses[3].push_back(test_mse);
                    res.metrics.add_row({format_double(sigma), format_double(dt),
                                         std::to_string(r), std::to_string(trial_seed),
                                         "map", format_double(train_mse),
                                         format_double(test_mse), err_text});
                }
            }
            res.lsera_train[ni][ti] = detail::mean_with_drop_policy(mses[0]);
            res.lsera_test[ni][ti] = detail::mean_with_drop_policy(mses[1]);
            res.map_train[ni][ti] = detail::mean_with_drop_policy(mses[2]);
            res.map_test[ni][ti] = detail::mean_with_drop_policy(mses[3]);
        }
    }
    res.summary["noise_ratios"] = cfg.noise_ratios;
    res.summary["timesteps"] = cfg.timesteps;
    res.summary["lsera_test_mean"] = res.lsera_test;
    res.summary["map_test_mean"] = res.map_test;
    res.summary["lsera_train_mean"] = res.lsera_train;
    res.summary["map_train_mean"] = res.map_train;
    return res;
}

// ---------------------------------------------------------------------------
// Objective landscape scans (logistic map)

struct LandscapeCurveConfig {
    std::string type;      // det_ls | prop_ls | ms | nll
    Eigen::Index horizon = 10;  // ms
    double ratio = 1.0;         // nll: Sigma / Gamma
    std::string name;

    std::string display_name() const {
        if (!name.empty()) return name;
        if (type == "ms") return "ms_T" + std::to_string(horizon);
        if (type == "nll") {
            std::string r = format_double(ratio);
            for (auto& ch : r)
                if (ch == '.') ch = 'p';
            return "nll_ratio" + r;
        }
        return type;
    }
};

struct LandscapeConfig {
    std::uint64_t seed = 0;
    double theta_true = 3.78;
    double y0 = 0.5;
    Eigen::Index n_points = 200;
    double grid_lo = 2.0, grid_hi = 4.0, grid_step = 0.002;
    double anchor = 2.0;
    double gamma = 1e-16;
    double ukf_alpha = 1.0;
    std::vector<LandscapeCurveConfig> curves{{"det_ls", 10, 1.0, ""},
                                             {"ms", 10, 1.0, ""},
                                             {"ms", 2, 1.0, ""},
                                             {"nll", 10, 0.5, ""},
                                             {"nll", 10, 1.0, ""}};

    static LandscapeConfig from_json(const json& j) {
        detail::check_keys(j,
                           {"theta_true", "y0", "n_points", "grid", "anchor", "gamma",
                            "ukf_alpha", "curves"},
                           "landscape");
        LandscapeConfig c;
        c.theta_true = detail::get_or(j, "theta_true", c.theta_true);
        c.y0 = detail::get_or(j, "y0", c.y0);
        c.n_points = detail::get_or(j, "n_points", c.n_points);
        c.anchor = detail::get_or(j, "anchor", c.anchor);
        c.gamma = detail::get_or(j, "gamma", c.gamma);
        c.ukf_alpha = detail::get_or(j, "ukf_alpha", c.ukf_alpha);
        if (j.contains("grid")) {
            detail::check_keys(j.at("grid"), {"lo", "hi", "step"}, "landscape.grid");
            c.grid_lo = detail::get_or(j.at("grid"), "lo", c.grid_lo);
            c.grid_hi = detail::get_or(j.at("grid"), "hi", c.grid_hi);
            c.grid_step = detail::get_or(j.at("grid"), "step", c.grid_step);
        }
        if (j.contains("curves")) {
            c.curves.clear();
            for (const auto& cj : j.at("curves")) {
                detail::check_keys(cj, {"type", "horizon", "ratio", "name"},
                                   "landscape.curves[]");
                LandscapeCurveConfig cc;
                cc.type = cj.at("type").get<std::string>();
                cc.horizon = detail::get_or(cj, "horizon", cc.horizon);
                cc.ratio = detail::get_or(cj, "ratio", cc.ratio);
                cc.name = detail::get_or<std::string>(cj, "name", "");
                c.curves.push_back(cc);
            }
        }
        if (c.curves.empty()) throw ConfigError("landscape: empty curve list");
        if (!(c.grid_step > 0.0) || !(c.grid_hi > c.grid_lo))
            throw ConfigError("landscape: invalid grid");
        return c;
    }
};

/// One scanned objective over the logistic-map record.
inline LandscapeCurve scan_logistic_curve(const LandscapeCurveConfig& cc,
                                          const LandscapeConfig& cfg,
                                          const Dataset& data) {
    const std::vector<double> grid = make_grid(cfg.grid_lo, cfg.grid_hi, cfg.grid_step);
    const Eigen::Index n = data.size() - 1;

    std::function<double(double)> objective;
    if (cc.type == "det_ls") {
        objective = [&](double theta) {
            return deterministic_ls(make_logistic_model(theta, cfg.y0, 0.0, cfg.gamma),
                                    data);
        };
    } else if (cc.type == "prop_ls") {
        objective = [&](double theta) {
            return propagator_ls(make_logistic_model(theta, cfg.y0, 0.0, cfg.gamma), data);
        };
    } else if (cc.type == "ms") {
        SegmentPlan plan = SegmentPlan::uniform(n, cc.horizon);
        plan.ics_from_data(data, 1);
        objective = [&, plan](double theta) {
            return multiple_shooting(make_logistic_model(theta, cfg.y0, 0.0, cfg.gamma),
                                     data, plan);
        };
    } else if (cc.type == "nll") {
        UkfConfig ukf;
        ukf.alpha = cfg.ukf_alpha;
        objective = [&, ukf](double theta) {
            NonlinearModel model =
                make_logistic_model(theta, cfg.y0, cc.ratio * cfg.gamma, cfg.gamma);
            try {
                return -ukf_log_marginal_likelihood(model, data, ukf).log_likelihood;
            } catch (const Error&) {
                return kInf;
            }
        };
    } else {
        throw ConfigError("landscape: unknown curve type '" + cc.type + "'");
    }
    return landscape_scan(objective, grid, cfg.anchor);
}

struct LandscapeResult {
    MetricsTable metrics;
    std::vector<std::pair<std::string, LandscapeCurve>> curves;
    json summary;
};

inline LandscapeResult run_landscape(const LandscapeConfig& cfg) {
    LandscapeResult res;
    res.metrics.columns = {"curve", "trial_seed", "local_minima", "anchor_raw", "error"};
    Dataset data = gen_logistic(cfg.theta_true, cfg.y0, cfg.n_points);
    for (const auto& cc : cfg.curves) {
        const std::string name = cc.display_name();
        try {
            LandscapeCurve curve = scan_logistic_curve(cc, cfg, data);
            res.metrics.add_row({name, std::to_string(cfg.seed),
                                 std::to_string(curve.minima_count),
                                 format_double(curve.anchor_raw), ""});
            res.summary["minima"][name] = curve.minima_count;
            res.curves.emplace_back(name, std::move(curve));
        } catch (const Error& e) {
            res.metrics.add_row({name, std::to_string(cfg.seed), "", "", e.what()});
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Top-level dispatch

struct ExperimentConfig {
    std::string experiment;
    std::uint64_t seed = 0;
    std::string out_dir;
    json raw;

    static ExperimentConfig parse(const json& j) {
        detail::check_keys(j, {"schema", "experiment", "seed", "out", "settings"},
                           "experiment config");
        if (!j.contains("schema") || j.at("schema").get<std::string>() != kSchemaVersion)
            throw ConfigError(std::string("experiment config: expected schema '") +
                              kSchemaVersion + "'");
        if (!j.contains("experiment"))
            throw ConfigError("experiment config: missing 'experiment'");
        if (!j.contains("seed")) throw ConfigError("experiment config: missing 'seed'");
        ExperimentConfig c;
        c.experiment = j.at("experiment").get<std::string>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.out_dir = detail::get_or<std::string>(j, "out", "");
        c.raw = j;
        return c;
    }

    json settings() const {
        return raw.contains("settings") ? raw.at("settings") : json::object();
    }
};

/// Dispatch an experiment config to its pipeline and assemble the bundle.
/// Partial trial failures are recorded in the metrics table; the bundle is
/// still emitted.
inline ResultBundle run_experiment(const ExperimentConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    ResultBundle bundle;
    json summary;

    if (cfg.experiment == "markov_compare") {
        MarkovCompareConfig mc = MarkovCompareConfig::from_json(cfg.settings());
        mc.seed = cfg.seed;
        MarkovCompareResult r = run_markov_compare(mc);
        bundle.metrics = std::move(r.metrics);
        summary = r.summary;
    } else if (cfg.experiment == "pendulum_sweep") {
        PendulumSweepConfig pc = PendulumSweepConfig::from_json(cfg.settings());
        pc.seed = cfg.seed;
        PendulumSweepResult r = run_pendulum_sweep(pc);
        bundle.metrics = std::move(r.metrics);
        summary = r.summary;
    } else if (cfg.experiment == "landscape") {
        LandscapeConfig lc = LandscapeConfig::from_json(cfg.settings());
        lc.seed = cfg.seed;
        LandscapeResult r = run_landscape(lc);
        bundle.metrics = std::move(r.metrics);
        summary = r.summary;
        for (const auto& [name, curve] : r.curves) {
            std::ostringstream csv;
            write_curve_csv(curve, csv);
            bundle.artifacts.emplace_back("curve_" + name + ".csv", csv.str());
            bundle.artifacts.emplace_back("curve_" + name + ".json",
                                          curve.sidecar().dump(2) + "\n");
        }
    } else if (cfg.experiment == "duffing") {
        DuffingExperimentConfig dc = DuffingExperimentConfig::from_json(cfg.settings());
        dc.seed = cfg.seed;
        NonlinearExperimentResult r = run_duffing_experiment(dc);
        bundle.metrics = std::move(r.metrics);
        summary = r.summary;
        bundle.artifacts = std::move(r.artifacts);
    } else if (cfg.experiment == "allen_cahn") {
        AllenCahnExperimentConfig ac = AllenCahnExperimentConfig::from_json(cfg.settings());
        ac.seed = cfg.seed;
        NonlinearExperimentResult r = run_allen_cahn_experiment(ac);
        bundle.metrics = std::move(r.metrics);
        summary = r.summary;
        bundle.artifacts = std::move(r.artifacts);
    } else if (cfg.experiment == "fit_generic") {
        FitGenericConfig fc = FitGenericConfig::from_json(cfg.settings());
        fc.seed = cfg.seed;
        NonlinearExperimentResult r = run_fit_generic(fc);
        bundle.metrics = std::move(r.metrics);
        summary = r.summary;
        bundle.artifacts = std::move(r.artifacts);
    } else {
        throw ConfigError("unknown experiment '" + cfg.experiment + "'");
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    bundle.metadata = make_metadata(cfg.raw, wall);
    bundle.metadata["summary"] = summary;
    if (!cfg.out_dir.empty()) bundle.write(cfg.out_dir);
    return bundle;
}

}  // namespace sysid

#endif  // SYSID_EXPERIMENTS_HPP
