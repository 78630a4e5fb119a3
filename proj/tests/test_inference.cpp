// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "sysid/datagen.hpp"
#include "sysid/experiments.hpp"
#include "sysid/inference.hpp"
#include "sysid/models.hpp"

using namespace sysid;

TEST(MapEstimate, QuadraticObjective) {
    LogPostFn f = [](const VectorXd& t) { return -(t[0] - 2.0) * (t[0] - 2.0); };
    MapResult r = map_estimate(f, VectorXd::Zero(1));
    EXPECT_NEAR(r.theta[0], 2.0, 1e-6);
    EXPECT_TRUE(r.converged);
}

TEST(MapEstimate, PriorOnlyPosteriorFindsPriorMode) {
    PriorSpec priors;
    priors.priors = {NormalPrior{1.0, 0.5}};
    LogPostFn f = [&priors](const VectorXd& t) { return log_prior(priors, t); };
    MapResult r = map_estimate(f, VectorXd::Constant(1, -3.0));
    EXPECT_NEAR(r.theta[0], 1.0, 1e-6);
}

TEST(MapEstimate, ResamplesUntilFiniteStart) {
    // -inf in a ball around the origin; jittered starts eventually escape
    LogPostFn f = [](const VectorXd& t) {
        if (t.norm() < 0.05) return kLogZero;
        return -t.squaredNorm();
    };
    MapOptions opts;
    opts.init_jitter = 0.2;
    opts.init_seed = 3;
    MapResult r = map_estimate(f, VectorXd::Zero(2), opts);
    EXPECT_TRUE(std::isfinite(r.log_post));
}

TEST(MapEstimate, EvaluationBudgetReturnsBestSoFar) {
    // Rosenbrock valley: far more than 60 evaluations to converge
    long calls = 0;
    LogPostFn f = [&calls](const VectorXd& t) {
        ++calls;
        return -(100.0 * std::pow(t[1] - t[0] * t[0], 2) + std::pow(1.0 - t[0], 2));
    };
    MapOptions opts;
    opts.max_evals = 60;
    VectorXd start(2);
    start << -1.2, 1.0;
    MapResult r = map_estimate(f, start, opts);
    EXPECT_FALSE(r.converged);
    EXPECT_LE(calls, 60 + 2 * 2 + 2);  // budget with one in-flight gradient
    EXPECT_GE(r.log_post, f(start));
}

TEST(MapEstimate, BestIterateIsMonotoneInObjective) {
    // the reported optimum must never be worse than the start
    LogPostFn f = [](const VectorXd& t) {
        return -std::pow(t[0] - 1.0, 4) - 0.5 * std::pow(t[1] + 2.0, 2);
    };
    VectorXd t0(2);
    t0 << 4.0, 4.0;
    MapResult r = map_estimate(f, t0);
    EXPECT_GE(r.log_post, f(t0));
    EXPECT_NEAR(r.theta[0], 1.0, 1e-2);
    EXPECT_NEAR(r.theta[1], -2.0, 1e-4);
}

TEST(MapEstimate, PendulumBeatsLsEraOnNoiselessRecord) {
    const double dt = 0.1;
    PendulumRecord rec = gen_pendulum(dt, 0.0, /*seed=*/0);
    Dataset train = rec.data.head(rec.n_train + 1);

    LtiModel lsera = ls_era(train, 2, 18);
    std::mt19937_64 dummy(0);
    PendulumMse lsera_mse =
        pendulum_mse(rec, simulate(lsera, rec.data.inputs, dummy, false).outputs);

    VectorXd theta = pendulum_map_fit(train, dt, 4000, 3, /*seed=*/0);
    PendulumMse map_mse = pendulum_mse(
        rec, simulate(pendulum_lti_from_theta(theta), rec.data.inputs, dummy, false).outputs);

    EXPECT_LT(map_mse.test, lsera_mse.test);
}

TEST(Dram, StandardGaussianTargetMoments) {
    LogPostFn target = [](const VectorXd& t) { return -0.5 * t.squaredNorm(); };
    DramConfig cfg;
    cfg.n_samples = 20000;
    cfg.burn_in = 5000;
    cfg.groups = {{0, 1}};
    cfg.init_step = 1.0;
    std::mt19937_64 rng(12345);
    Chain chain = dram_within_gibbs(target, VectorXd::Zero(2), cfg, {}, rng);

    const long kept = cfg.n_samples - cfg.burn_in;
    VectorXd mean = VectorXd::Zero(2);
    for (long s = cfg.burn_in; s < cfg.n_samples; ++s)
        mean += chain.samples[static_cast<size_t>(s)];
    mean /= static_cast<double>(kept);
    MatrixXd cov = MatrixXd::Zero(2, 2);
    for (long s = cfg.burn_in; s < cfg.n_samples; ++s) {
        VectorXd d = chain.samples[static_cast<size_t>(s)] - mean;
        cov += d * d.transpose();
    }
    cov /= static_cast<double>(kept - 1);

    const double three_se = 3.0 / std::sqrt(static_cast<double>(kept));
    EXPECT_LT(std::abs(mean[0]), three_se);
    EXPECT_LT(std::abs(mean[1]), three_se);
    EXPECT_LT((cov - MatrixXd::Identity(2, 2)).norm() / MatrixXd::Identity(2, 2).norm(),
              0.10);
}

TEST(Dram, AllFixedIndicesGiveDegenerateChain) {
    LogPostFn target = [](const VectorXd& t) { return -0.5 * t.squaredNorm(); };
    DramConfig cfg;
    cfg.n_samples = 50;
    cfg.burn_in = 10;
    cfg.groups = {{0}, {1}};
    std::mt19937_64 rng(1);
    Chain chain = dram_within_gibbs(target, VectorXd::Ones(2), cfg, {0, 1}, rng);
    for (const auto& s : chain.samples) EXPECT_EQ(s, VectorXd::Ones(2));
    EXPECT_DOUBLE_EQ(chain.overall_acceptance(), 1.0);
}

TEST(Dram, SweepNeverTouchesFixedIndices) {
    LogPostFn target = [](const VectorXd& t) { return -0.5 * t.squaredNorm(); };
    DramConfig cfg;
    cfg.n_samples = 500;
    cfg.burn_in = 0;
    cfg.groups = {{0, 1}, {2}};
    std::mt19937_64 rng(2);
    VectorXd t0(3);
    t0 << 0.3, -0.4, 7.0;
    Chain chain = dram_within_gibbs(target, t0, cfg, {2}, rng);
    bool moved01 = false;
    for (const auto& s : chain.samples) {
        EXPECT_EQ(s[2], 7.0);
        moved01 = moved01 || s[0] != t0[0] || s[1] != t0[1];
    }
    EXPECT_TRUE(moved01);
}

TEST(Dram, IdenticalSeedsProduceIdenticalChains) {
    LogPostFn target = [](const VectorXd& t) {
        return -0.5 * t.squaredNorm() - 0.1 * std::pow(t[0] - t[1], 2);
    };
    DramConfig cfg;
    cfg.n_samples = 800;
    cfg.burn_in = 100;
    cfg.groups = {{0}, {1}};
    std::mt19937_64 rng1(77), rng2(77);
    Chain a = dram_within_gibbs(target, VectorXd::Zero(2), cfg, {}, rng1);
    Chain b = dram_within_gibbs(target, VectorXd::Zero(2), cfg, {}, rng2);
    for (size_t s = 0; s < a.samples.size(); ++s) EXPECT_EQ(a.samples[s], b.samples[s]);
    EXPECT_EQ(a.accept_counts, b.accept_counts);
}

TEST(Dram, DelayedRejectionRescuesOverdispersedProposals) {
    // grossly oversized stage-1 proposals: the shrunk second stage keeps the
    // acceptance rate from collapsing compared to a pure Metropolis kernel
    LogPostFn target = [](const VectorXd& t) { return -0.5 * t.squaredNorm(); };
    auto run = [&](int stages) {
        DramConfig cfg;
        cfg.n_samples = 4000;
        cfg.burn_in = 0;
        cfg.groups = {{0, 1}};
        cfg.init_proposal_cov = {MatrixXd(400.0 * MatrixXd::Identity(2, 2))};
        cfg.adapt_interval = 1000000;  // no adaptation: isolate the DR effect
        cfg.dr_stages = stages;
        cfg.dr_scale = 10.0;
        std::mt19937_64 rng(5);
        Chain chain = dram_within_gibbs(target, VectorXd::Zero(2), cfg, {}, rng);
        return chain.overall_acceptance();
    };
    const double metropolis = run(1);
    const double dram2 = run(2);
    EXPECT_GT(dram2, 2.0 * metropolis);
}

TEST(Dram, LogPosteriorMatchesTargetOnSampledPoints) {
    // re-check the recorded log posterior on a subsample
    LogPostFn target = [](const VectorXd& t) {
        return -0.25 * t.squaredNorm() - 0.3 * t[0];
    };
    DramConfig cfg;
    cfg.n_samples = 1000;
    cfg.burn_in = 0;
    cfg.groups = {{0, 1}};
    std::mt19937_64 rng(6);
    Chain chain = dram_within_gibbs(target, VectorXd::Zero(2), cfg, {}, rng);
    for (size_t s = 0; s < chain.samples.size(); s += 97)
        EXPECT_NEAR(chain.log_posts[s], target(chain.samples[s]), 1e-10);
}

TEST(Dram, StuckChainDetection) {
    LogPostFn target = [](const VectorXd& t) {
        return t.norm() < 1e-9 ? 0.0 : kLogZero;  // posterior mass only at the start
    };
    DramConfig cfg;
    cfg.n_samples = 5000;
    cfg.burn_in = 100;
    cfg.groups = {{0}};
    std::mt19937_64 rng(7);
    EXPECT_THROW(dram_within_gibbs(target, VectorXd::Zero(1), cfg, {}, rng),
                 NumericalError);
}

namespace {

LogPostFn pendulum_log_post(const Dataset& train, const PriorSpec& priors) {
    return [&train, &priors](const VectorXd& theta) {
        const double lp = log_prior(priors, theta);
        if (lp == kLogZero) return kLogZero;
        try {
            return lp + kalman_log_marginal_likelihood(pendulum_lti_from_theta(theta), train)
                            .log_likelihood;
        } catch (const Error&) {
            return kLogZero;
        }
    };
}

}  // namespace

TEST(PendulumChain, PooledHalvesStationaryOnNoisyRecord) {
    // noisy record, B and H frozen at the MAP: the dynamics-coordinate chain
    // halves agree within half a pooled standard deviation
    const double dt = 0.25;
    PendulumRecord rec = gen_pendulum(dt, 0.1, /*seed=*/3);
    Dataset train = rec.data.head(rec.n_train + 1);
    VectorXd theta_map = pendulum_map_fit(train, dt, 4000, 3, /*seed=*/3);

    const PriorSpec priors = pendulum_priors();
    LogPostFn log_post = pendulum_log_post(train, priors);

    DramConfig cfg;
    cfg.n_samples = 4000;
    cfg.burn_in = 1000;
    // groups: x0, dynamics A, noise variances; B (6,7) and H (8,9) frozen
    cfg.groups = {{0, 1}, {2, 3, 4, 5}, {10, 11, 12}};
    cfg.init_step = 1e-3;
    std::mt19937_64 rng(11);
    Chain chain = dram_within_gibbs(log_post, theta_map, cfg, {6, 7, 8, 9}, rng);

    const long kept = cfg.n_samples - cfg.burn_in;
    for (int coord : {2, 3, 4, 5}) {
        double m1 = 0.0, m2 = 0.0, var = 0.0;
        for (long s = cfg.burn_in; s < cfg.burn_in + kept / 2; ++s)
            m1 += chain.samples[static_cast<size_t>(s)][coord];
        for (long s = cfg.burn_in + kept / 2; s < cfg.n_samples; ++s)
            m2 += chain.samples[static_cast<size_t>(s)][coord];
        m1 /= static_cast<double>(kept / 2);
        m2 /= static_cast<double>(kept - kept / 2);
        double mean = (m1 + m2) / 2.0;
        for (long s = cfg.burn_in; s < cfg.n_samples; ++s)
            var += std::pow(chain.samples[static_cast<size_t>(s)][coord] - mean, 2);
        var /= static_cast<double>(kept);
        const double sd = std::sqrt(var);
        ASSERT_GT(sd, 0.0) << "chain did not move in coordinate " << coord;
        EXPECT_LT(std::abs(m1 - m2), 0.5 * sd) << "coordinate " << coord;
    }
}

TEST(PendulumChain, LowNoiseSparsePosteriorPredictiveIsVisuallyOneLine) {
    // low-noise, high-sparsity case: the posterior is so narrow that the
    // deterministic predictive draws collapse onto a single line
    const double dt = 0.5;
    PendulumRecord rec = gen_pendulum(dt, 0.0, /*seed=*/3);
    Dataset train = rec.data.head(rec.n_train + 1);
    VectorXd theta_map = pendulum_map_fit(train, dt, 4000, 3, /*seed=*/3);

    const PriorSpec priors = pendulum_priors();
    LogPostFn log_post = pendulum_log_post(train, priors);
    DramConfig cfg;
    cfg.n_samples = 2000;
    cfg.burn_in = 500;
    cfg.groups = {{0, 1}, {2, 3, 4, 5}, {10, 11, 12}};
    cfg.init_step = 1e-6;
    std::mt19937_64 rng(11);
    Chain chain = dram_within_gibbs(log_post, theta_map, cfg, {6, 7, 8, 9}, rng);

    auto builder = [](const VectorXd& theta) { return build_pendulum_model(theta); };
    std::mt19937_64 pp_rng(13);
    PredictiveEnsemble ens = posterior_predictive(chain, builder, train, 0,
                                                  PredictiveMode::deterministic, 50, pp_rng);
    double out_lo = 1e300, out_hi = -1e300;
    for (const auto& y : train.outputs) {
        out_lo = std::min(out_lo, y[0]);
        out_hi = std::max(out_hi, y[0]);
    }
    double max_std = 0.0;
    for (size_t k = 0; k < ens.mean.size(); ++k) {
        double acc = 0.0;
        for (const auto& traj : ens.trajectories)
            acc += std::pow(traj[k][0] - ens.mean[k][0], 2);
        max_std = std::max(max_std, std::sqrt(acc / static_cast<double>(ens.trajectories.size())));
    }
    EXPECT_LT(max_std, 1e-2 * (out_hi - out_lo));
}

TEST(PosteriorPredictive, DegenerateChainOfIdenticalParameters) {
    const double dt = 0.25;
    PendulumRecord rec = gen_pendulum(dt, 0.05, /*seed=*/5);
    Dataset train = rec.data.head(rec.n_train + 1);
    VectorXd theta = pendulum_theta_from_truth(dt, 1e-4);

    Chain chain;
    chain.burn_in = 2;
    for (int s = 0; s < 12; ++s) {
        chain.samples.push_back(theta);
        chain.log_posts.push_back(0.0);
    }
    auto builder = [](const VectorXd& t) { return build_pendulum_model(t); };
    std::mt19937_64 rng(1);
    PredictiveEnsemble ens = posterior_predictive(chain, builder, train, 0,
                                                  PredictiveMode::deterministic, 5, rng);
    for (const auto& traj : ens.trajectories)
        for (size_t k = 0; k < traj.size(); ++k)
            EXPECT_EQ(traj[k][0], ens.trajectories.front()[k][0]);
    for (size_t k = 0; k < ens.mean.size(); ++k)
        EXPECT_DOUBLE_EQ(ens.mean[k][0], ens.trajectories.front()[k][0]);
}

TEST(PosteriorPredictive, DeterministicModeIgnoresProcessNoiseParameters) {
    const double dt = 0.25;
    PendulumRecord rec = gen_pendulum(dt, 0.05, /*seed=*/6);
    Dataset train = rec.data.head(rec.n_train + 1);
    VectorXd a = pendulum_theta_from_truth(dt, 1e-4);
    VectorXd b = a;
    b[10] = 0.3;  // different process-noise variances
    b[11] = 0.9;

    auto run = [&](const VectorXd& theta) {
        Chain chain;
        chain.burn_in = 0;
        for (int s = 0; s < 4; ++s) {
            chain.samples.push_back(theta);
            chain.log_posts.push_back(0.0);
        }
        std::mt19937_64 rng(2);
        return posterior_predictive(
            chain, [](const VectorXd& t) { return build_pendulum_model(t); }, train, 0,
            PredictiveMode::deterministic, 2, rng);
    };
    PredictiveEnsemble ea = run(a), eb = run(b);
    for (size_t k = 0; k < ea.mean.size(); ++k) EXPECT_EQ(ea.mean[k][0], eb.mean[k][0]);
}

TEST(PosteriorPredictive, StochasticModeRunsAndForecasts) {
    const double dt = 0.25;
    PendulumRecord rec = gen_pendulum(dt, 0.1, /*seed=*/7);
    Dataset train = rec.data.head(rec.n_train + 1);
    VectorXd theta = pendulum_theta_from_truth(dt, 1e-4);
    theta[10] = 1e-6;
    theta[11] = 1e-6;

    Chain chain;
    chain.burn_in = 0;
    for (int s = 0; s < 10; ++s) {
        chain.samples.push_back(theta);
        chain.log_posts.push_back(0.0);
    }
    const Eigen::Index horizon = 20;
    std::vector<VectorXd> future(rec.data.inputs.begin() + train.size(),
                                 rec.data.inputs.begin() + train.size() + horizon);
    std::mt19937_64 rng(3);
    PredictiveEnsemble ens = posterior_predictive(
        chain, [](const VectorXd& t) { return build_pendulum_model(t); }, train, horizon,
        PredictiveMode::stochastic, 5, rng, future);
    EXPECT_EQ(static_cast<Eigen::Index>(ens.mean.size()), train.size() + horizon);
    EXPECT_EQ(ens.n_diverged, 0);
}
