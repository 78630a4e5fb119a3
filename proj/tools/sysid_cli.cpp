// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: data simulation, Markov-parameter estimation, ERA,
// landscape scans, MAP fitting, posterior sampling, and the full experiment
// pipelines. Every subcommand takes a JSON config; outputs land in --out.
//
// Exit codes: 0 success, 2 config error, 3 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include "CLI11.hpp"

#include "sysid/sysid.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw sysid::ConfigError("cannot open config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw sysid::ConfigError(std::string("config parse error: ") + e.what());
    }
    return j;
}

void write_text(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path);
    out << content;
}

// --- simulate ---------------------------------------------------------------

int cmd_simulate(const std::string& config_path, std::uint64_t seed,
                 const std::string& out_dir) {
    json cfg = load_config(config_path);
    sysid::detail::check_keys(cfg,
                              {"schema", "system", "dt", "noise_ratio", "theta", "y0",
                               "n_points", "spin_up", "duration", "noise_std", "cells",
                               "stochastic", "n_steps", "model"},
                              "simulate");
    const std::string system = cfg.at("system").get<std::string>();
    fs::create_directories(out_dir);
    json meta;
    meta["system"] = system;
    meta["seed"] = seed;

    sysid::Dataset data;
    if (system == "pendulum") {
        const double dt = sysid::detail::get_or(cfg, "dt", 0.1);
        const double noise = sysid::detail::get_or(cfg, "noise_ratio", 0.0);
        sysid::PendulumRecord rec = sysid::gen_pendulum(dt, noise, seed);
        data = rec.data;
        meta["n_train"] = rec.n_train;
        meta["sigma_eta"] = rec.sigma_eta;
        meta["max_abs_position"] = rec.max_abs_position;
        meta["noise_ratio_definition"] = "sigma_eta / max |position| over training window";
    } else if (system == "logistic") {
        data = sysid::gen_logistic(sysid::detail::get_or(cfg, "theta", 3.78),
                                   sysid::detail::get_or(cfg, "y0", 0.5),
                                   sysid::detail::get_or<Eigen::Index>(cfg, "n_points", 200));
    } else if (system == "duffing") {
        sysid::DuffingRecord rec = sysid::gen_duffing(
            seed, sysid::detail::get_or(cfg, "dt", 0.25),
            sysid::detail::get_or(cfg, "spin_up", 600.0),
            sysid::detail::get_or(cfg, "duration", 300.0),
            sysid::detail::get_or(cfg, "noise_std", 1e-3));
        data = rec.data;
        meta["spin_up_discarded"] = true;
    } else if (system == "allen_cahn") {
        sysid::AllenCahnRecord rec = sysid::gen_allen_cahn(
            sysid::detail::get_or<Eigen::Index>(cfg, "cells", 256),
            sysid::detail::get_or(cfg, "dt", 0.1), seed);
        data = rec.train;
        sysid::write_dataset_csv(rec.test, (fs::path(out_dir) / "dataset_test.csv").string());
        meta["spin_up_discarded"] = true;
    } else if (system == "lti") {
        sysid::LtiModel model = sysid::realization_from_json(cfg.at("model"));
        const Eigen::Index n = sysid::detail::get_or<Eigen::Index>(cfg, "n_steps", 100);
        std::mt19937_64 rng(seed);
        std::vector<sysid::VectorXd> inputs(static_cast<size_t>(n));
        for (auto& u : inputs) u = sysid::randn_vector(model.du(), rng);
        data = sysid::simulate(model, inputs, rng,
                               sysid::detail::get_or(cfg, "stochastic", false));
    } else {
        throw sysid::ConfigError("simulate: unknown system '" + system + "'");
    }

    sysid::write_dataset_csv(data, (fs::path(out_dir) / "dataset.csv").string());
    meta["n_points"] = data.size();
    write_text(fs::path(out_dir) / "metadata.json", meta.dump(2) + "\n");
    return 0;
}

// --- markov ------------------------------------------------------------------

int cmd_markov(const std::string& config_path, const std::string& out_dir) {
    json cfg = load_config(config_path);
    sysid::detail::check_keys(
        cfg, {"schema", "dataset", "du", "dy", "method", "nbar", "oracle"}, "markov");
    const Eigen::Index du = cfg.at("du").get<Eigen::Index>();
    const Eigen::Index dy = cfg.at("dy").get<Eigen::Index>();
    sysid::Dataset data =
        sysid::ingest_csv(cfg.at("dataset").get<std::string>(), du, dy).data;
    const std::string method = sysid::detail::get_or<std::string>(cfg, "method", "ls");
    const Eigen::Index nbar = cfg.at("nbar").get<Eigen::Index>();

    sysid::MarkovSequence est;
    if (method == "ls") {
        est = sysid::ls_markov_subtraj(data, nbar);
    } else if (method == "gls" || method == "mle") {
        if (!cfg.contains("oracle"))
            throw sysid::ConfigError("markov: method '" + method + "' needs an oracle model");
        sysid::LtiModel oracle =
            cfg.at("oracle").is_object()
                ? sysid::realization_from_json(cfg.at("oracle"))
                : sysid::realization_from_json(load_config(cfg.at("oracle").get<std::string>()));
        sysid::LambdaBlocks lambda =
            sysid::build_lambda(oracle, data.size() - 1, method == "mle");
        est = method == "gls" ? sysid::gls_markov_subtraj(data, nbar, lambda)
                              : sysid::mle_markov(data, lambda);
    } else {
        throw sysid::ConfigError("markov: unknown method '" + method + "'");
    }
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "markov.json", est.to_json().dump(2) + "\n");
    return 0;
}

// --- era ----------------------------------------------------------------------

int cmd_era(const std::string& config_path, const std::string& out_dir) {
    json cfg = load_config(config_path);
    sysid::detail::check_keys(
        cfg, {"schema", "markov", "dataset", "du", "dy", "nbar", "dx", "shape",
              "hankel_from"},
        "era");
    const Eigen::Index dx = cfg.at("dx").get<Eigen::Index>();
    sysid::EraOptions opts;
    if (cfg.contains("hankel_from"))
        opts.hankel_from = cfg.at("hankel_from").get<std::string>() == "g0"
                               ? sysid::HankelStart::g0
                               : sysid::HankelStart::g1;

    sysid::MarkovSequence g;
    if (cfg.contains("markov")) {
        g = sysid::MarkovSequence::from_json(load_config(cfg.at("markov").get<std::string>()));
    } else {
        sysid::Dataset data = sysid::ingest_csv(cfg.at("dataset").get<std::string>(),
                                                cfg.at("du").get<Eigen::Index>(),
                                                cfg.at("dy").get<Eigen::Index>())
                                  .data;
        g = sysid::ls_markov_subtraj(data, cfg.at("nbar").get<Eigen::Index>());
    }

    sysid::HankelShape shape;
    if (cfg.contains("shape")) {
        sysid::detail::check_keys(cfg.at("shape"), {"d1", "d2"}, "era.shape");
        shape.d1 = cfg.at("shape").at("d1").get<Eigen::Index>();
        shape.d2 = cfg.at("shape").at("d2").get<Eigen::Index>();
    } else {
        shape = sysid::default_hankel_shape(g.size() - 1, dx, g.dy(), g.du());
    }

    sysid::LtiModel model = sysid::era(g, dx, shape, opts);
    fs::create_directories(out_dir);
    json out = sysid::realization_to_json(model);
    out["shape"] = {{"d1", shape.d1}, {"d2", shape.d2}};
    write_text(fs::path(out_dir) / "realization.json", out.dump(2) + "\n");
    return 0;
}

// --- landscape / fit-map / sample / experiment --------------------------------

int cmd_landscape(const std::string& config_path, std::uint64_t seed,
                  const std::string& out_dir) {
    json cfg = load_config(config_path);
    json wrapped = {{"schema", sysid::kSchemaVersion},
                    {"experiment", "landscape"},
                    {"seed", seed},
                    {"out", out_dir},
                    {"settings", cfg}};
    if (cfg.contains("schema")) {
        json settings = cfg;
        settings.erase("schema");
        wrapped["settings"] = settings;
    }
    sysid::run_experiment(sysid::ExperimentConfig::parse(wrapped));
    return 0;
}

int cmd_fit(const std::string& config_path, std::uint64_t seed, const std::string& out_dir,
            bool sample) {
    json cfg = load_config(config_path);
    if (cfg.contains("schema")) cfg.erase("schema");
    if (sample && (!cfg.contains("estimator") ||
                   !cfg.at("estimator").contains("mcmc_samples"))) {
        cfg["estimator"]["mcmc_samples"] = 2000;
        cfg["estimator"]["mcmc_burn"] = 500;
    }
    if (!sample && cfg.contains("estimator")) {
        cfg["estimator"]["mcmc_samples"] = 0;
        cfg["estimator"]["mcmc_burn"] = 0;
    }
    json wrapped = {{"schema", sysid::kSchemaVersion},
                    {"experiment", "fit_generic"},
                    {"seed", seed},
                    {"out", out_dir},
                    {"settings", cfg}};
    sysid::run_experiment(sysid::ExperimentConfig::parse(wrapped));
    return 0;
}

int cmd_experiment(const std::string& config_path, std::uint64_t seed,
                   const std::string& out_dir) {
    json cfg = load_config(config_path);
    if (!cfg.contains("seed")) cfg["seed"] = seed;
    if (!out_dir.empty()) cfg["out"] = out_dir;
    sysid::run_experiment(sysid::ExperimentConfig::parse(cfg));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian system identification toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;

    auto add_common = [&](CLI::App* sub, bool config_required = true) {
        sub->add_option("--config", config_path, "JSON config file")
            ->required(config_required);
        sub->add_option("--seed", seed, "random seed");
        sub->add_option("--out", out_dir, "output directory");
    };

    add_common(app.add_subcommand("simulate", "generate a dataset CSV"));
    add_common(app.add_subcommand("markov", "estimate Markov parameters"));
    add_common(app.add_subcommand("era", "state-space realization from Markov parameters"));
    add_common(app.add_subcommand("landscape", "objective landscape scans"));
    add_common(app.add_subcommand("fit-map", "MAP fit of a model to a dataset"));
    add_common(app.add_subcommand("sample", "posterior sampling for a dataset"));
    add_common(app.add_subcommand("experiment", "run a full experiment config"));

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("simulate")) return cmd_simulate(config_path, seed, out_dir);
        if (app.got_subcommand("markov")) return cmd_markov(config_path, out_dir);
        if (app.got_subcommand("era")) return cmd_era(config_path, out_dir);
        if (app.got_subcommand("landscape")) return cmd_landscape(config_path, seed, out_dir);
        if (app.got_subcommand("fit-map")) return cmd_fit(config_path, seed, out_dir, false);
        if (app.got_subcommand("sample")) return cmd_fit(config_path, seed, out_dir, true);
        if (app.got_subcommand("experiment"))
            return cmd_experiment(config_path, seed, out_dir);
    } catch (const sysid::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const sysid::IngestError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const sysid::Error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
