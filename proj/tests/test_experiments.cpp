// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sstream>

#include "sysid/experiments.hpp"

using namespace sysid;
using nlohmann::json;

TEST(GenPendulum, SampleCountsAndNoiseDefinition) {
    PendulumRecord rec = gen_pendulum(0.1, 0.0, 0);
    EXPECT_EQ(rec.data.size(), 401);  // 40 s inclusive at dt = 0.1
    EXPECT_EQ(rec.n_train, 200);
    EXPECT_EQ(rec.sigma_eta, 0.0);
    // noiseless record equals the clean trajectory exactly
    for (Eigen::Index k = 0; k < rec.data.size(); ++k)
        EXPECT_EQ(rec.data.outputs[static_cast<size_t>(k)][0],
                  rec.clean_position[static_cast<size_t>(k)]);

    PendulumRecord noisy = gen_pendulum(0.1, 0.05, 0);
    EXPECT_NEAR(noisy.sigma_eta, 0.05 * noisy.max_abs_position, 1e-15);
    EXPECT_GT(noisy.max_abs_position, 0.0);
}

TEST(GenPendulum, ReproducibleUnderSeed) {
    PendulumRecord a = gen_pendulum(0.25, 0.1, 42);
    PendulumRecord b = gen_pendulum(0.25, 0.1, 42);
    for (Eigen::Index k = 0; k < a.data.size(); ++k)
        EXPECT_EQ(a.data.outputs[static_cast<size_t>(k)][0],
                  b.data.outputs[static_cast<size_t>(k)][0]);
}

TEST(GenDuffing, EmitsTwelveHundredTrainingSamples) {
    DuffingRecord rec = gen_duffing(/*seed=*/0);
    EXPECT_EQ(rec.data.size(), 1200);
    EXPECT_DOUBLE_EQ(rec.data.times.front(), 600.0);  // spin-up discarded
    // exogenous channel carries the forcing waveform
    for (Eigen::Index k = 0; k < 10; ++k)
        EXPECT_NEAR(rec.data.inputs[static_cast<size_t>(k)][0],
                    std::cos(1.2 * rec.data.times[static_cast<size_t>(k)]), 1e-12);
}

TEST(GenAllenCahn, StationaryStates) {
    AllenCahnConfig cfg;
    cfg.n_cells = 32;
    // w = 1: QoI constant 1 (reaction and diffusion both vanish)
    detail::AllenCahnRhs rhs = detail::make_allen_cahn_rhs(cfg);
    VectorXd ones = VectorXd::Ones(rhs.nodes);
    EXPECT_EQ(rhs(ones, 0.0).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_DOUBLE_EQ(detail::allen_cahn_qoi(ones), 1.0);
    // w = 0: unstable equilibrium preserved exactly without forcing
    VectorXd zeros = VectorXd::Zero(rhs.nodes);
    EXPECT_EQ(rhs(zeros, 0.0).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_DOUBLE_EQ(detail::allen_cahn_qoi(zeros), 0.0);
}

TEST(GenAllenCahn, TrainingRecordLengthIs101) {
    AllenCahnConfig cfg;
    cfg.spin_up = 2.0;  // shortened transient, same record shape
    AllenCahnRecord rec = gen_allen_cahn(32, 0.1, 7, cfg);
    EXPECT_EQ(rec.train.size(), 101);
    EXPECT_EQ(rec.test.size(), 100);
    EXPECT_EQ(rec.clean_train.size(), 101u);
}

TEST(GenAllenCahn, RefinedIntegrationWindowsAgree) {
    // halving the integration window (same zero-order-hold inputs) moves the
    // noiseless QoI trajectory by less than 1e-4 in sup norm
    AllenCahnConfig cfg;
    cfg.n_cells = 64;
    detail::AllenCahnRhs rhs = detail::make_allen_cahn_rhs(cfg);
    std::mt19937_64 rng(9);
    VectorXd w_full = VectorXd::Zero(rhs.nodes);
    VectorXd w_half = w_full;
    double sup = 0.0;
    for (int k = 0; k < 50; ++k) {
        const double u = 0.1 * randn(rng);
        auto f = [&rhs, u](double, const VectorXd& x) { return rhs(x, u); };
        const double t = 0.1 * k;
        w_full = rk45_integrate(f, w_full, t, t + 0.1);
        w_half = rk45_integrate(f, w_half, t, t + 0.05);
        w_half = rk45_integrate(f, w_half, t + 0.05, t + 0.1);
        sup = std::max(sup, std::abs(detail::allen_cahn_qoi(w_full) -
                                     detail::allen_cahn_qoi(w_half)));
    }
    EXPECT_LT(sup, 1e-4);
}

TEST(ExperimentConfig, SchemaAndUnknownKeyRejection) {
    json good = {{"schema", kSchemaVersion},
                 {"experiment", "landscape"},
                 {"seed", 3},
                 {"settings", json::object()}};
    EXPECT_NO_THROW(ExperimentConfig::parse(good));

    json bad_schema = good;
    bad_schema["schema"] = "other/9";
    EXPECT_THROW(ExperimentConfig::parse(bad_schema), ConfigError);

    json no_seed = {{"schema", kSchemaVersion}, {"experiment", "landscape"}};
    EXPECT_THROW(ExperimentConfig::parse(no_seed), ConfigError);

    json unknown = good;
    unknown["typo_key"] = 1;
    EXPECT_THROW(ExperimentConfig::parse(unknown), ConfigError);

    json bad_inner = good;
    bad_inner["settings"]["not_a_key"] = 1;
    ExperimentConfig cfg = ExperimentConfig::parse(bad_inner);
    EXPECT_THROW(run_experiment(cfg), ConfigError);
}

TEST(ExperimentConfig, EmptySweepGridRejected) {
    json cfg = {{"schema", kSchemaVersion},
                {"experiment", "markov_compare"},
                {"seed", 0},
                {"settings", {{"sigmas", json::array()}}}};
    EXPECT_THROW(run_experiment(ExperimentConfig::parse(cfg)), ConfigError);
}

TEST(MarkovCompare, DeskScaleOrderingAtSmallSize) {
    // tiny configuration: the GLS weighting must not lose to LS on average
    MarkovCompareConfig cfg;
    cfg.seed = 5;
    cfg.trials = 6;
    cfg.sigmas = {0.5};
    cfg.k_grid = {150};
    cfg.map_trials = 0;
    MarkovCompareResult res = run_markov_compare(cfg);
    EXPECT_GT(res.ls_mean[0][0], res.gls_mean[0][0]);
    EXPECT_EQ(res.metrics.rows.size(), 12u);  // 6 trials x 2 methods
}

TEST(Landscape, MinimaCountsReproduceSmoothingOrdering) {
    LandscapeConfig cfg;
    cfg.grid_step = 0.01;  // coarse grid keeps this a unit test
    LandscapeResult res = run_landscape(cfg);
    ASSERT_EQ(res.curves.size(), 5u);
    auto count = [&](const std::string& name) {
        for (const auto& [n, c] : res.curves)
            if (n == name) return c.minima_count;
        throw std::runtime_error("curve not found: " + name);
    };
    EXPECT_GT(count("det_ls"), count("nll_ratio0p5"));
    EXPECT_GE(count("nll_ratio0p5"), count("nll_ratio1"));
    EXPECT_GT(count("ms_T10"), count("ms_T2"));
}

TEST(Landscape, CurveCsvAndSidecar) {
    LandscapeConfig cfg;
    cfg.grid_step = 0.05;
    cfg.n_points = 60;
    cfg.curves = {{"det_ls", 10, 1.0, ""}};
    LandscapeResult res = run_landscape(cfg);
    std::ostringstream csv;
    write_curve_csv(res.curves[0].second, csv);
    EXPECT_EQ(csv.str().substr(0, 12), "theta,value\n");
    json sidecar = res.curves[0].second.sidecar();
    EXPECT_EQ(sidecar.at("anchor").get<double>(), 2.0);
    EXPECT_TRUE(sidecar.contains("local_minima"));
    // normalization anchor: value 1.0 at theta = 2
    EXPECT_DOUBLE_EQ(res.curves[0].second.values.front(), 1.0);
}

TEST(ResultBundle, DeterministicMetricsBytes) {
    MarkovCompareConfig cfg;
    cfg.seed = 9;
    cfg.trials = 3;
    cfg.sigmas = {0.25};
    cfg.k_grid = {100};
    cfg.map_trials = 0;
    auto run_csv = [&]() {
        MarkovCompareResult r = run_markov_compare(cfg);
        std::ostringstream out;
        r.metrics.write_csv(out);
        return out.str();
    };
    EXPECT_EQ(run_csv(), run_csv());
}

TEST(ResultBundle, WritesAllFiles) {
    ResultBundle bundle;
    bundle.metrics.columns = {"a", "b"};
    bundle.metrics.add_row({"1", "2"});
    bundle.metadata = make_metadata(json{{"k", "v"}}, 0.5);
    bundle.artifacts.emplace_back("extra.txt", "payload\n");
    const std::string dir = "bundle_test_out";
    bundle.write(dir);
    EXPECT_TRUE(std::filesystem::exists(dir + "/metrics.csv"));
    EXPECT_TRUE(std::filesystem::exists(dir + "/metadata.json"));
    EXPECT_TRUE(std::filesystem::exists(dir + "/extra.txt"));
    std::filesystem::remove_all(dir);
}

TEST(Duffing, ExperimentPipelineRunsAtTinyScale) {
    DuffingExperimentConfig cfg;
    cfg.seed = 4;
    cfg.spin_up = 5.0;
    cfg.duration = 20.0;     // 80 points
    cfg.map_max_evals = 300;
    cfg.mcmc_samples = 60;
    cfg.mcmc_burn = 20;
    cfg.ms_horizon = 20;
    NonlinearExperimentResult res = run_duffing_experiment(cfg);
    ASSERT_EQ(res.metrics.rows.size(), 3u);  // map, det_ls, ms
    for (const auto& row : res.metrics.rows) EXPECT_TRUE(row.back().empty()) << row[0];
    bool has_traj = false, has_chain = false;
    for (const auto& [name, _] : res.artifacts) {
        has_traj = has_traj || name == "trajectories.csv";
        has_chain = has_chain || name == "chain.csv";
    }
    EXPECT_TRUE(has_traj);
    EXPECT_TRUE(has_chain);
}

TEST(AllenCahn, ExperimentPipelineRunsAtTinyScale) {
    AllenCahnExperimentConfig cfg;
    cfg.seed = 5;
    cfg.cells = 32;
    cfg.spin_up = 2.0;
    cfg.train_duration = 3.0;
    cfg.test_duration = 2.0;
    cfg.dx = 3;
    cfg.hidden = 5;
    cfg.map_max_evals = 300;
    cfg.mcmc_samples = 40;
    cfg.mcmc_burn = 10;
    NonlinearExperimentResult res = run_allen_cahn_experiment(cfg);
    // rows: map, posterior_mean, det_ls
    ASSERT_GE(res.metrics.rows.size(), 2u);
    EXPECT_EQ(res.summary.at("train_points").get<int>(), 31);
    EXPECT_TRUE(res.summary.contains("diffusion_coefficient_assumed"));
}

TEST(AllenCahn, PaperScaleNetworkHas350DynamicsParameters) {
    AllenCahnExperimentConfig cfg;
    MlpModelOptions mopts;
    mopts.n_hidden = cfg.hidden;
    mopts.learn_observation = false;
    mopts.fixed_H = MatrixXd::Zero(1, cfg.dx);
    mopts.fixed_H(0, 0) = 1.0;
    NonlinearModel model = make_mlp_model(cfg.dx, 1, 1, mopts);
    EXPECT_EQ(model.layout.dyn.length, 350);
}

TEST(FitGeneric, BenchmarkStyleSubsetWithAddedNoise) {
    // ingestion path of the external-benchmark setup: take the first 1000
    // points of a long record and add output noise of std 0.0178
    LtiModel sys;
    sys.A = MatrixXd::Constant(1, 1, 0.9);
    sys.B = MatrixXd::Constant(1, 1, 0.5);
    sys.H = MatrixXd::Constant(1, 1, 1.0);
    sys.D = MatrixXd::Zero(1, 1);
    sys.Sigma = MatrixXd::Zero(1, 1);
    sys.Gamma = MatrixXd::Zero(1, 1);
    sys.x0 = GaussianBelief::point_mass(VectorXd::Zero(1));
    std::mt19937_64 rng(8);
    std::vector<VectorXd> inputs(5000);
    for (auto& u : inputs) u = randn_vector(1, rng);
    Dataset data = simulate(sys, inputs, rng, false);
    const std::string path = "wh_style_test.csv";
    write_dataset_csv(data, path);

    FitGenericConfig cfg;
    cfg.seed = 2;
    cfg.dataset_path = path;
    cfg.normalize = true;
    cfg.max_points = 1000;
    cfg.add_noise_std = 0.0178;
    cfg.model_type = "lti";
    cfg.dx = 1;
    cfg.map_max_evals = 200;
    cfg.mcmc_samples = 0;
    NonlinearExperimentResult res = run_fit_generic(cfg);
    EXPECT_EQ(res.summary.at("n_points").get<int>(), 1000);
    std::filesystem::remove(path);
}

TEST(FitGeneric, IngestFitAndChainOnTinyRecord) {
    // write a small LTI record, then fit an LTI model through the harness
    LtiModel truth;
    truth.A = MatrixXd::Constant(1, 1, 0.8);
    truth.B = MatrixXd::Constant(1, 1, 1.0);
    truth.H = MatrixXd::Constant(1, 1, 1.0);
    truth.D = MatrixXd::Zero(1, 1);
    truth.Sigma = MatrixXd::Constant(1, 1, 0.01);
    truth.Gamma = MatrixXd::Constant(1, 1, 0.01);
    truth.x0 = GaussianBelief::point_mass(VectorXd::Zero(1));
    std::mt19937_64 rng(3);
    std::vector<VectorXd> inputs(60);
    for (auto& u : inputs) u = randn_vector(1, rng);
    Dataset data = simulate(truth, inputs, rng, true);
    const std::string path = "fit_generic_test.csv";
    write_dataset_csv(data, path);

    FitGenericConfig cfg;
    cfg.seed = 1;
    cfg.dataset_path = path;
    cfg.model_type = "lti";
    cfg.dx = 1;
    cfg.map_max_evals = 600;
    cfg.mcmc_samples = 200;
    cfg.mcmc_burn = 50;
    NonlinearExperimentResult res = run_fit_generic(cfg);
    EXPECT_FALSE(res.metrics.rows.empty());
    bool has_chain = false;
    for (const auto& [name, content] : res.artifacts)
        if (name == "chain.csv") has_chain = !content.empty();
    EXPECT_TRUE(has_chain);
    std::filesystem::remove(path);
}
