// SPDX-License-Identifier: Apache-2.0
//
// Nonlinear-model experiment pipelines: forced Duffing oscillator and
// Allen-Cahn QoI forecasting (MAP + MCMC vs deterministic-LS / multiple-
// shooting baselines), plus generic fitting of an ingested record.

#ifndef SYSID_EXPERIMENTS_NONLINEAR_HPP
#define SYSID_EXPERIMENTS_NONLINEAR_HPP

#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "sysid/bundle.hpp"
#include "sysid/csv.hpp"
#include "sysid/datagen.hpp"
#include "sysid/era.hpp"
#include "sysid/inference.hpp"
#include "sysid/objectives.hpp"

namespace sysid {

struct NonlinearExperimentResult {
    MetricsTable metrics;
    json summary;
    std::vector<std::pair<std::string, std::string>> artifacts;
};

namespace detail {

/// Draw a parameter vector from independent priors (uniform entries draw 0).
inline VectorXd draw_from_priors(const PriorSpec& priors, std::mt19937_64& rng) {
    VectorXd theta = VectorXd::Zero(static_cast<Eigen::Index>(priors.size()));
    for (size_t i = 0; i < priors.size(); ++i) {
        if (const auto* n = std::get_if<NormalPrior>(&priors.priors[i]))
            theta[static_cast<Eigen::Index>(i)] = n->mean + std::sqrt(n->var) * randn(rng);
        else if (const auto* h = std::get_if<HalfNormalPrior>(&priors.priors[i]))
            theta[static_cast<Eigen::Index>(i)] = std::abs(std::sqrt(h->var) * randn(rng));
    }
    return theta;
}

inline double rmse(const std::vector<double>& truth, const std::vector<VectorXd>& pred,
                   size_t offset = 0) {
    double acc = 0.0;
    for (size_t k = 0; k < truth.size(); ++k) {
        const double e = truth[k] - pred[k + offset][0];
        acc += e * e;
    }
    return std::sqrt(acc / static_cast<double>(truth.size()));
}

inline std::string trajectory_csv(const Dataset& data,
                                  const std::vector<std::pair<std::string,
                                                              std::vector<VectorXd>>>& series) {
    std::ostringstream out;
    out << "t,y_data";
    for (const auto& [name, _] : series) out << "," << name;
    out << "\n";
    for (Eigen::Index k = 0; k < data.size(); ++k) {
        out << format_double(data.times[static_cast<size_t>(k)]) << ","
            << format_double(data.outputs[static_cast<size_t>(k)][0]);
        for (const auto& [_, ys] : series) {
            out << ",";
            if (static_cast<size_t>(k) < ys.size())
                out << format_double(ys[static_cast<size_t>(k)][0]);
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Forced Duffing oscillator

struct DuffingExperimentConfig {
    std::uint64_t seed = 0;
    double dt = 0.25;
    double spin_up = 600.0;
    double duration = 300.0;
    double noise_std = 1e-3;
    Eigen::Index dx = 2;
    Eigen::Index hidden = 15;
    long map_max_evals = 2000;
    long mcmc_samples = 500;
    long mcmc_burn = 125;
    Eigen::Index ms_horizon = 200;

    static DuffingExperimentConfig from_json(const json& j) {
        detail::check_keys(j,
                           {"dt", "spin_up", "duration", "noise_std", "dx", "hidden",
                            "map_max_evals", "mcmc_samples", "mcmc_burn", "ms_horizon"},
                           "duffing");
        DuffingExperimentConfig c;
        c.dt = detail::get_or(j, "dt", c.dt);
        c.spin_up = detail::get_or(j, "spin_up", c.spin_up);
        c.duration = detail::get_or(j, "duration", c.duration);
        c.noise_std = detail::get_or(j, "noise_std", c.noise_std);
        c.dx = detail::get_or(j, "dx", c.dx);
        c.hidden = detail::get_or(j, "hidden", c.hidden);
        c.map_max_evals = detail::get_or(j, "map_max_evals", c.map_max_evals);
        c.mcmc_samples = detail::get_or(j, "mcmc_samples", c.mcmc_samples);
        c.mcmc_burn = detail::get_or(j, "mcmc_burn", c.mcmc_burn);
        c.ms_horizon = detail::get_or(j, "ms_horizon", c.ms_horizon);
        return c;
    }
};

inline NonlinearExperimentResult run_duffing_experiment(const DuffingExperimentConfig& cfg) {
    NonlinearExperimentResult res;
    res.metrics.columns = {"method", "trial_seed", "train_mse", "log_post", "error"};

    DuffingRecord rec = gen_duffing(cfg.seed, cfg.dt, cfg.spin_up, cfg.duration,
                                    cfg.noise_std);
    const Dataset& data = rec.data;
    res.summary["n_points"] = data.size();

    MlpModelOptions mopts;
    mopts.n_hidden = cfg.hidden;
    mopts.learn_observation = false;
    mopts.fixed_H = MatrixXd::Zero(1, cfg.dx);
    mopts.fixed_H(0, 0) = 1.0;
    mopts.learn_meas_var = false;
    mopts.fixed_meas_var = cfg.noise_std * cfg.noise_std;
    NonlinearModel model = make_mlp_model(cfg.dx, 1, 1, mopts);

    PriorSpec priors = PriorSpec::all_uniform(static_cast<size_t>(model.layout.total()));
    for (int i = 0; i < model.layout.x0.length + model.layout.dyn.length; ++i)
        priors.set(static_cast<size_t>(i), NormalPrior{0.0, 0.2});
    for (int i = 0; i < model.layout.sigma.length; ++i)
        priors.set(static_cast<size_t>(model.layout.sigma.offset + i),
                   HalfNormalPrior{1e-4});

    std::mt19937_64 init_rng(derive_seed(cfg.seed, 5));
    VectorXd theta0 = detail::draw_from_priors(priors, init_rng);
    theta0[0] = data.outputs[0][0];
    if (cfg.dx > 1)
        theta0[1] = (data.outputs[1][0] - data.outputs[0][0]) / cfg.dt;
    for (int i = 0; i < model.layout.sigma.length; ++i)
        theta0[model.layout.sigma.offset + i] = 1e-6;

    LogPostFn log_post = [&model, &data, &priors](const VectorXd& theta) {
        const double lp = log_prior(priors, theta);
        if (lp == kLogZero) return kLogZero;
        try {
            return lp +
                   ukf_log_marginal_likelihood(model.with_theta(theta), data).log_likelihood;
        } catch (const Error&) {
            return kLogZero;
        }
    };

    auto train_mse_of = [&](const NonlinearModel& m) {
        try {
            std::vector<VectorXd> ys = rollout_outputs(m, m.x0().mean, data.inputs);
            double acc = 0.0;
            for (size_t k = 0; k < rec.clean_position.size(); ++k) {
                const double e = rec.clean_position[k] - ys[k][0];
                acc += e * e;
            }
            return acc / static_cast<double>(rec.clean_position.size());
        } catch (const Error&) {
            return kInf;
        }
    };

    // Bayesian MAP (+ short chain)
    VectorXd theta_map = theta0;
    try {
        MapOptions opts;
        opts.max_evals = cfg.map_max_evals;
        opts.init_seed = derive_seed(cfg.seed, 6);
        MapResult map = map_estimate(log_post, theta0, opts);
        theta_map = map.theta;
        res.metrics.add_row({"map", std::to_string(cfg.seed),
                             format_double(train_mse_of(model.with_theta(map.theta))),
                             format_double(map.log_post), ""});
    } catch (const Error& e) {
        res.metrics.add_row({"map", std::to_string(cfg.seed), "", "", e.what()});
    }

    if (cfg.mcmc_samples > 0) {
        try {
            DramConfig dram;
            dram.n_samples = cfg.mcmc_samples;
            dram.burn_in = cfg.mcmc_burn;
            dram.groups = gibbs_groups(model.layout);
            dram.init_step = 0.02;
            std::mt19937_64 rng(derive_seed(cfg.seed, 7));
            Chain chain = dram_within_gibbs(log_post, theta_map, dram, {}, rng);
            std::ostringstream chain_csv;
            write_chain_csv(chain, chain_csv);
            res.artifacts.emplace_back("chain.csv", chain_csv.str());
            res.summary["chain_acceptance"] = chain.overall_acceptance();
        } catch (const Error& e) {
            res.summary["chain_error"] = e.what();
        }
    }

    // Deterministic-LS baseline over (x0, dynamics) only
    auto ls_objective = [&model, &data](const VectorXd& theta) {
        double v = deterministic_ls(model.with_theta(theta), data);
        return std::isfinite(v) ? -v : kLogZero;
    };
    VectorXd theta_ls = theta0;
    try {
        MapOptions opts;
        opts.max_evals = cfg.map_max_evals;
        opts.init_seed = derive_seed(cfg.seed, 8);
        MapResult ls = map_estimate(ls_objective, theta0, opts);
        theta_ls = ls.theta;
        res.metrics.add_row({"det_ls", std::to_string(cfg.seed),
                             format_double(train_mse_of(model.with_theta(ls.theta))),
                             format_double(ls.log_post), ""});
    } catch (const Error& e) {
        res.metrics.add_row({"det_ls", std::to_string(cfg.seed), "", "", e.what()});
    }

    // Multiple-shooting baseline: knot states appended to the decision vector
    try {
        SegmentPlan plan = SegmentPlan::uniform(data.size() - 1, cfg.ms_horizon);
        const Eigen::Index n_theta = model.layout.total();
        const Eigen::Index l = plan.segments();
        auto ms_objective = [&](const VectorXd& z) {
            SegmentPlan p = plan;
            p.ics.clear();
            for (Eigen::Index i = 0; i < l; ++i)
                p.ics.push_back(z.segment(n_theta + i * cfg.dx, cfg.dx));
            double v = multiple_shooting(model.with_theta(z.head(n_theta)), data, p,
                                         /*constrained=*/true);
            return std::isfinite(v) ? -v : kLogZero;
        };
        VectorXd z0(n_theta + l * cfg.dx);
        z0.head(n_theta) = theta0;
        for (Eigen::Index i = 0; i < l; ++i) {
            const Eigen::Index k = plan.starts[static_cast<size_t>(i)];
            VectorXd ic = VectorXd::Zero(cfg.dx);
            ic[0] = data.outputs[static_cast<size_t>(k)][0];
            if (cfg.dx > 1 && k + 1 < data.size())
                ic[1] = (data.outputs[static_cast<size_t>(k + 1)][0] -
                         data.outputs[static_cast<size_t>(k)][0]) /
                        cfg.dt;
            z0.segment(n_theta + i * cfg.dx, cfg.dx) = ic;
        }
        MapOptions opts;
        opts.max_evals = cfg.map_max_evals;
        opts.init_seed = derive_seed(cfg.seed, 9);
        MapResult ms = map_estimate(ms_objective, z0, opts);
        res.metrics.add_row({"ms", std::to_string(cfg.seed),
                             format_double(train_mse_of(model.with_theta(
                                 ms.theta.head(n_theta)))),
                             format_double(ms.log_post), ""});
    } catch (const Error& e) {
        res.metrics.add_row({"ms", std::to_string(cfg.seed), "", "", e.what()});
    }

    std::vector<std::pair<std::string, std::vector<VectorXd>>> series;
    try {
        NonlinearModel m = model.with_theta(theta_map);
        series.emplace_back("y_map", rollout_outputs(m, m.x0().mean, data.inputs));
    } catch (const Error&) {
    }
    res.artifacts.emplace_back("trajectories.csv", detail::trajectory_csv(data, series));
    return res;
}

// ---------------------------------------------------------------------------
// Allen-Cahn QoI forecasting

struct AllenCahnExperimentConfig {
    std::uint64_t seed = 0;
    Eigen::Index cells = 256;
    double dt = 0.1;
    double diffusion = 1e-2;
    double noise_std = 0.2;
    double input_var = 1e-2;
    double spin_up = 20.0;
    double train_duration = 10.0;
    double test_duration = 10.0;
    Eigen::Index dx = 8;
    Eigen::Index hidden = 15;
    long map_max_evals = 2500;
    long mcmc_samples = 500;
    long mcmc_burn = 125;
    bool normalize = true;

    static AllenCahnExperimentConfig from_json(const json& j) {
        detail::check_keys(
            j, {"cells", "dt", "diffusion", "noise_std", "input_var", "spin_up",
                "train_duration", "test_duration", "dx", "hidden", "map_max_evals",
                "mcmc_samples", "mcmc_burn", "normalize"},
            "allen_cahn");
        AllenCahnExperimentConfig c;
        c.cells = detail::get_or(j, "cells", c.cells);
        c.dt = detail::get_or(j, "dt", c.dt);
        c.diffusion = detail::get_or(j, "diffusion", c.diffusion);
        c.noise_std = detail::get_or(j, "noise_std", c.noise_std);
        c.input_var = detail::get_or(j, "input_var", c.input_var);
        c.spin_up = detail::get_or(j, "spin_up", c.spin_up);
        c.train_duration = detail::get_or(j, "train_duration", c.train_duration);
        c.test_duration = detail::get_or(j, "test_duration", c.test_duration);
        c.dx = detail::get_or(j, "dx", c.dx);
        c.hidden = detail::get_or(j, "hidden", c.hidden);
        c.map_max_evals = detail::get_or(j, "map_max_evals", c.map_max_evals);
        c.mcmc_samples = detail::get_or(j, "mcmc_samples", c.mcmc_samples);
        c.mcmc_burn = detail::get_or(j, "mcmc_burn", c.mcmc_burn);
        c.normalize = detail::get_or(j, "normalize", c.normalize);
        return c;
    }
};

inline NonlinearExperimentResult run_allen_cahn_experiment(
    const AllenCahnExperimentConfig& cfg) {
    NonlinearExperimentResult res;
    res.metrics.columns = {"method", "trial_seed", "train_data_rmse", "train_qoi_rmse",
                           "test_qoi_rmse", "error"};

    AllenCahnConfig gen_cfg;
    gen_cfg.diffusion = cfg.diffusion;
    gen_cfg.noise_std = cfg.noise_std;
    gen_cfg.input_var = cfg.input_var;
    gen_cfg.spin_up = cfg.spin_up;
    gen_cfg.train_duration = cfg.train_duration;
    gen_cfg.test_duration = cfg.test_duration;
    AllenCahnRecord rec = gen_allen_cahn(cfg.cells, cfg.dt, cfg.seed, gen_cfg);
    res.summary["train_points"] = rec.train.size();
    res.summary["diffusion_coefficient_assumed"] = cfg.diffusion;

    // Output normalization (training moments).
    double y_mean = 0.0, y_std = 1.0;
    if (cfg.normalize) {
        for (const auto& y : rec.train.outputs) y_mean += y[0];
        y_mean /= static_cast<double>(rec.train.size());
        double var = 0.0;
        for (const auto& y : rec.train.outputs)
            var += (y[0] - y_mean) * (y[0] - y_mean);
        y_std = std::sqrt(var / static_cast<double>(rec.train.size()));
        if (!(y_std > 0.0)) y_std = 1.0;
    }
    Dataset train = rec.train;
    for (auto& y : train.outputs) y[0] = (y[0] - y_mean) / y_std;

    MlpModelOptions mopts;
    mopts.n_hidden = cfg.hidden;
    mopts.learn_observation = false;
    mopts.fixed_H = MatrixXd::Zero(1, cfg.dx);
    mopts.fixed_H(0, 0) = 1.0;
    mopts.learn_meas_var = true;
    NonlinearModel model = make_mlp_model(cfg.dx, 1, 1, mopts);
    res.summary["dynamics_parameters"] =
        model.layout.dyn.length;  // 350 for dx=8, hidden=15

    PriorSpec priors = PriorSpec::all_uniform(static_cast<size_t>(model.layout.total()));
    for (int i = 0; i < model.layout.x0.length + model.layout.dyn.length; ++i)
        priors.set(static_cast<size_t>(i), NormalPrior{0.0, 4.0});
    for (int i = 0; i < model.layout.sigma.length; ++i)
        priors.set(static_cast<size_t>(model.layout.sigma.offset + i),
                   HalfNormalPrior{1e-6});
    for (int i = 0; i < model.layout.gamma.length; ++i)
        priors.set(static_cast<size_t>(model.layout.gamma.offset + i),
                   HalfNormalPrior{1.0});

    std::mt19937_64 init_rng(derive_seed(cfg.seed, 15));
    VectorXd theta0 = 0.2 * randn_vector(model.layout.total(), init_rng);
    theta0[0] = train.outputs[0][0];
    for (int i = 0; i < model.layout.sigma.length; ++i)
        theta0[model.layout.sigma.offset + i] = 1e-8;
    for (int i = 0; i < model.layout.gamma.length; ++i)
        theta0[model.layout.gamma.offset + i] = 0.25;

    LogPostFn log_post = [&model, &train, &priors](const VectorXd& theta) {
        const double lp = log_prior(priors, theta);
        if (lp == kLogZero) return kLogZero;
        try {
            return lp +
                   ukf_log_marginal_likelihood(model.with_theta(theta), train).log_likelihood;
        } catch (const Error&) {
            return kLogZero;
        }
    };

    std::vector<VectorXd> all_inputs = rec.train.inputs;
    all_inputs.insert(all_inputs.end(), rec.test.inputs.begin(), rec.test.inputs.end());

    auto evaluate = [&](const VectorXd& theta, const std::string& method,
                        std::vector<VectorXd>* keep = nullptr) {
        try {
            NonlinearModel m = model.with_theta(theta);
            std::vector<VectorXd> ys = rollout_outputs(m, m.x0().mean, all_inputs);
            for (auto& y : ys) y[0] = y[0] * y_std + y_mean;  // back to raw units
            if (keep) *keep = ys;
            std::vector<double> data_raw;
            for (const auto& y : rec.train.outputs) data_raw.push_back(y[0]);
            res.metrics.add_row(
                {method, std::to_string(cfg.seed), format_double(detail::rmse(data_raw, ys)),
                 format_double(detail::rmse(rec.clean_train, ys)),
                 format_double(detail::rmse(rec.clean_test, ys, rec.train.size())), ""});
        } catch (const Error& e) {
            res.metrics.add_row({method, std::to_string(cfg.seed), "", "", "", e.what()});
        }
    };

    VectorXd theta_map = theta0;
    try {
        MapOptions opts;
        opts.max_evals = cfg.map_max_evals;
        opts.init_seed = derive_seed(cfg.seed, 16);
        MapResult map = map_estimate(log_post, theta0, opts);
        theta_map = map.theta;
    } catch (const Error& e) {
        res.summary["map_error"] = e.what();
    }

    std::vector<VectorXd> map_traj;
    evaluate(theta_map, "map", &map_traj);

    if (cfg.mcmc_samples > 0) {
        try {
            DramConfig dram;
            dram.n_samples = cfg.mcmc_samples;
            dram.burn_in = cfg.mcmc_burn;
            dram.groups = gibbs_groups(model.layout);
            dram.init_step = 0.02;
            std::mt19937_64 rng(derive_seed(cfg.seed, 17));
            Chain chain = dram_within_gibbs(log_post, theta_map, dram, {}, rng);
            std::ostringstream chain_csv;
            write_chain_csv(chain, chain_csv);
            res.artifacts.emplace_back("chain.csv", chain_csv.str());
            res.summary["chain_acceptance"] = chain.overall_acceptance();

            std::mt19937_64 pp_rng(derive_seed(cfg.seed, 18));
            auto builder = [&model](const VectorXd& theta) {
                return model.with_theta(theta);
            };
            PredictiveEnsemble ens = posterior_predictive(
                chain, builder, train, static_cast<Eigen::Index>(rec.test.size()),
                PredictiveMode::deterministic, 25, pp_rng, rec.test.inputs);
            std::vector<VectorXd> mean = ens.mean;
            for (auto& y : mean) y[0] = y[0] * y_std + y_mean;
            std::vector<double> data_raw;
            for (const auto& y : rec.train.outputs) data_raw.push_back(y[0]);
            res.metrics.add_row(
                {"posterior_mean", std::to_string(cfg.seed),
                 format_double(detail::rmse(data_raw, mean)),
                 format_double(detail::rmse(rec.clean_train, mean)),
                 format_double(detail::rmse(rec.clean_test, mean, rec.train.size())), ""});
        } catch (const Error& e) {
            res.summary["chain_error"] = e.what();
        }
    }

    // Deterministic-LS baseline on the same structure
    try {
        auto ls_objective = [&model, &train](const VectorXd& theta) {
            double v = deterministic_ls(model.with_theta(theta), train);
            return std::isfinite(v) ? -v : kLogZero;
        };
        MapOptions opts;
        opts.max_evals = cfg.map_max_evals;
        opts.init_seed = derive_seed(cfg.seed, 19);
        MapResult ls = map_estimate(ls_objective, theta0, opts);
        evaluate(ls.theta, "det_ls");
    } catch (const Error& e) {
        res.metrics.add_row({"det_ls", std::to_string(cfg.seed), "", "", "", e.what()});
    }

    std::vector<std::pair<std::string, std::vector<VectorXd>>> series;
    series.emplace_back("y_map", map_traj);
    res.artifacts.emplace_back("trajectories.csv",
                               detail::trajectory_csv(rec.train, series));
    return res;
}

// ---------------------------------------------------------------------------
// Generic fitting of an ingested record

struct FitGenericConfig {
    std::uint64_t seed = 0;
    std::string dataset_path;
    Eigen::Index du = 1, dy = 1;
    bool normalize = false;
    double add_noise_std = 0.0;   // optional extra output noise before fitting
    Eigen::Index max_points = 0;  // 0 = use all
    std::string model_type = "mlp";  // mlp | lti
    Eigen::Index dx = 2;
    Eigen::Index hidden = 15;
    bool learn_observation = true;
    long map_max_evals = 2000;
    long mcmc_samples = 0;
    long mcmc_burn = 0;

    static FitGenericConfig from_json(const json& j) {
        detail::check_keys(j,
                           {"dataset", "du", "dy", "normalize", "add_noise_std",
                            "max_points", "model", "estimator"},
                           "fit_generic");
        FitGenericConfig c;
        c.dataset_path = j.at("dataset").get<std::string>();
        c.du = detail::get_or(j, "du", c.du);
        c.dy = detail::get_or(j, "dy", c.dy);
        c.normalize = detail::get_or(j, "normalize", c.normalize);
        c.add_noise_std = detail::get_or(j, "add_noise_std", c.add_noise_std);
        c.max_points = detail::get_or(j, "max_points", c.max_points);
        if (j.contains("model")) {
            detail::check_keys(j.at("model"), {"type", "dx", "hidden", "learn_observation"},
                               "fit_generic.model");
            c.model_type = detail::get_or<std::string>(j.at("model"), "type", c.model_type);
            c.dx = detail::get_or(j.at("model"), "dx", c.dx);
            c.hidden = detail::get_or(j.at("model"), "hidden", c.hidden);
            c.learn_observation =
                detail::get_or(j.at("model"), "learn_observation", c.learn_observation);
        }
        if (j.contains("estimator")) {
            detail::check_keys(j.at("estimator"),
                               {"map_max_evals", "mcmc_samples", "mcmc_burn"},
                               "fit_generic.estimator");
            c.map_max_evals =
                detail::get_or(j.at("estimator"), "map_max_evals", c.map_max_evals);
            c.mcmc_samples =
                detail::get_or(j.at("estimator"), "mcmc_samples", c.mcmc_samples);
            c.mcmc_burn = detail::get_or(j.at("estimator"), "mcmc_burn", c.mcmc_burn);
        }
        return c;
    }
};

namespace detail {

/// LTI flavor of the generic fit: Kalman-filter posterior over the flat
/// (A, B, H, D, noise scales) parameterization; B/H/D frozen at the MAP
/// for sampling to pin the coordinate frame.
inline NonlinearExperimentResult fit_generic_lti(const FitGenericConfig& cfg,
                                                 const Dataset& data,
                                                 NonlinearExperimentResult res) {
    LtiParameterization par{cfg.dx, cfg.dy, cfg.du};
    const PriorSpec priors = par.priors();
    LogPostFn log_post = [&par, &data, &priors](const VectorXd& theta) {
        const double lp = log_prior(priors, theta);
        if (lp == kLogZero) return kLogZero;
        try {
            return lp + kalman_log_marginal_likelihood(par.model(theta), data)
                            .log_likelihood;
        } catch (const Error&) {
            return kLogZero;
        }
    };

    std::mt19937_64 init_rng(derive_seed(cfg.seed, 25));
    VectorXd theta0 = 0.3 * randn_vector(par.size(), init_rng);
    theta0[par.size() - 2] = 0.3;
    theta0[par.size() - 1] = 0.3;

    MapOptions opts;
    opts.max_evals = cfg.map_max_evals;
    opts.init_seed = derive_seed(cfg.seed, 26);
    MapResult map = map_estimate(log_post, theta0, opts);
    res.metrics.add_row({"map", std::to_string(cfg.seed), "", format_double(map.log_post), ""});

    json theta_json;
    theta_json["theta"] = std::vector<double>(map.theta.data(),
                                              map.theta.data() + map.theta.size());
    theta_json["log_post"] = map.log_post;
    res.artifacts.emplace_back("theta_map.json", theta_json.dump(2) + "\n");
    res.artifacts.emplace_back("realization.json",
                               realization_to_json(par.model(map.theta)).dump(2) + "\n");

    if (cfg.mcmc_samples > 0) {
        DramConfig dram;
        dram.n_samples = cfg.mcmc_samples;
        dram.burn_in = cfg.mcmc_burn;
        std::vector<int> noise{static_cast<int>(par.size() - 2),
                               static_cast<int>(par.size() - 1)};
        dram.groups = {par.matrix_indices('A'), noise};
        dram.init_step = 0.02;
        std::set<int> fixed;
        for (char w : {'B', 'H', 'D'})
            for (int id : par.matrix_indices(w)) fixed.insert(id);
        std::mt19937_64 rng(derive_seed(cfg.seed, 27));
        Chain chain = dram_within_gibbs(log_post, map.theta, dram, fixed, rng);
        std::ostringstream chain_csv;
        write_chain_csv(chain, chain_csv);
        res.artifacts.emplace_back("chain.csv", chain_csv.str());
        res.artifacts.emplace_back(
            "chain_meta.json",
            chain_metadata(chain, derive_seed(cfg.seed, 27)).dump(2) + "\n");
    }
    return res;
}

}  // namespace detail

inline NonlinearExperimentResult run_fit_generic(const FitGenericConfig& cfg) {
    NonlinearExperimentResult res;
    res.metrics.columns = {"method", "trial_seed", "train_rmse", "log_post", "error"};

    IngestOptions iopts;
    iopts.normalize = cfg.normalize;
    IngestResult ingest = ingest_csv(cfg.dataset_path, cfg.du, cfg.dy, iopts);
    Dataset data = cfg.max_points > 0 && cfg.max_points < ingest.data.size()
                       ? ingest.data.head(cfg.max_points)
                       : ingest.data;
    if (cfg.add_noise_std > 0.0) {
        std::mt19937_64 rng(derive_seed(cfg.seed, 21));
        for (auto& y : data.outputs)
            for (Eigen::Index i = 0; i < y.size(); ++i)
                y[i] += cfg.add_noise_std * randn(rng);
    }
    res.summary["n_points"] = data.size();

    if (cfg.model_type == "lti") return detail::fit_generic_lti(cfg, data, std::move(res));
    if (cfg.model_type != "mlp")
        throw ConfigError("fit_generic: unknown model type '" + cfg.model_type + "'");

    NonlinearModel model;
    PriorSpec priors;
    {
        MlpModelOptions mopts;
        mopts.n_hidden = cfg.hidden;
        mopts.learn_observation = cfg.learn_observation;
        if (!cfg.learn_observation) {
            mopts.fixed_H = MatrixXd::Zero(cfg.dy, cfg.dx);
            for (Eigen::Index i = 0; i < std::min(cfg.dy, cfg.dx); ++i)
                mopts.fixed_H(i, i) = 1.0;
        }
        model = make_mlp_model(cfg.dx, cfg.du, cfg.dy, mopts);
        priors = PriorSpec::all_uniform(static_cast<size_t>(model.layout.total()));
        for (int i = 0; i < model.layout.x0.length + model.layout.dyn.length +
                                model.layout.obs.length;
             ++i)
            priors.set(static_cast<size_t>(i), NormalPrior{0.0, 0.2});
        for (int i = 0; i < model.layout.sigma.length; ++i)
            priors.set(static_cast<size_t>(model.layout.sigma.offset + i),
                       HalfNormalPrior{10.0});
        for (int i = 0; i < model.layout.gamma.length; ++i)
            priors.set(static_cast<size_t>(model.layout.gamma.offset + i),
                       HalfNormalPrior{0.01});
        res.summary["network_parameters"] =
            model.layout.dyn.length + model.layout.obs.length;
    }

    std::mt19937_64 init_rng(derive_seed(cfg.seed, 22));
    VectorXd theta0 = detail::draw_from_priors(priors, init_rng);
    for (int i = 0; i < model.layout.sigma.length; ++i)
        theta0[model.layout.sigma.offset + i] = 1e-6;
    for (int i = 0; i < model.layout.gamma.length; ++i)
        theta0[model.layout.gamma.offset + i] = 1e-3;

    LogPostFn log_post = [&model, &data, &priors](const VectorXd& theta) {
        const double lp = log_prior(priors, theta);
        if (lp == kLogZero) return kLogZero;
        try {
            return lp +
                   ukf_log_marginal_likelihood(model.with_theta(theta), data).log_likelihood;
        } catch (const Error&) {
            return kLogZero;
        }
    };

    MapOptions opts;
    opts.max_evals = cfg.map_max_evals;
    opts.init_seed = derive_seed(cfg.seed, 23);
    MapResult map = map_estimate(log_post, theta0, opts);

    double rmse_val = std::numeric_limits<double>::quiet_NaN();
    try {
        NonlinearModel m = model.with_theta(map.theta);
        std::vector<VectorXd> ys = rollout_outputs(m, m.x0().mean, data.inputs);
        double acc = 0.0;
        for (Eigen::Index k = 0; k < data.size(); ++k)
            acc += (data.outputs[static_cast<size_t>(k)] - ys[static_cast<size_t>(k)])
                       .squaredNorm();
        rmse_val = std::sqrt(acc / static_cast<double>(data.size() * cfg.dy));
    } catch (const Error&) {
    }
    res.metrics.add_row(
        {"map", std::to_string(cfg.seed), format_double(rmse_val),
         format_double(map.log_post), ""});

    json theta_json;
    theta_json["theta"] = std::vector<double>(map.theta.data(),
                                              map.theta.data() + map.theta.size());
    theta_json["log_post"] = map.log_post;
    theta_json["converged"] = map.converged;
    res.artifacts.emplace_back("theta_map.json", theta_json.dump(2) + "\n");

    if (cfg.mcmc_samples > 0) {
        DramConfig dram;
        dram.n_samples = cfg.mcmc_samples;
        dram.burn_in = cfg.mcmc_burn;
        dram.groups = gibbs_groups(model.layout);
        dram.init_step = 0.02;
        // Observation parameters frozen at the MAP to pin the coordinate frame.
        std::set<int> fixed;
        for (int i = 0; i < model.layout.obs.length; ++i)
            fixed.insert(model.layout.obs.offset + i);
        std::mt19937_64 rng(derive_seed(cfg.seed, 24));
        Chain chain = dram_within_gibbs(log_post, map.theta, dram, fixed, rng);
        std::ostringstream chain_csv;
        write_chain_csv(chain, chain_csv);
        res.artifacts.emplace_back("chain.csv", chain_csv.str());
        res.artifacts.emplace_back(
            "chain_meta.json", chain_metadata(chain, derive_seed(cfg.seed, 24)).dump(2) + "\n");
    }
    return res;
}

}  // namespace sysid

#endif  // SYSID_EXPERIMENTS_NONLINEAR_HPP
