// SPDX-License-Identifier: Apache-2.0
//
// Data generators for the benchmark systems: forced damped pendulum,
// logistic map, forced Duffing oscillator, and the Allen-Cahn quantity of
// interest (1D finite-difference method of lines).

#ifndef SYSID_DATAGEN_HPP
#define SYSID_DATAGEN_HPP

#include <cmath>
#include <random>
#include <vector>

#include "sysid/integrate.hpp"
#include "sysid/models.hpp"
#include "sysid/simulate.hpp"
#include "sysid/types.hpp"

namespace sysid {

/// Stable stream splitting for trial seeds (splitmix64 over the components).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (a + 1) + 0xbf58476d1ce4e5b9ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Pendulum (20s training + 20s testing)

struct PendulumRecord {
    Dataset data;                       // 2n+1 points over [0, 40]
    Eigen::Index n_train = 0;           // training indices 0..n_train
    double sigma_eta = 0.0;             // realized measurement-noise std
    double max_abs_position = 0.0;      // normalizer of the noise ratio
    std::vector<double> clean_position; // noiseless x[0] trajectory
    LtiModel truth;
};

/// Simulate the damped pendulum with Gaussian inputs u_k ~ N(0, dt) over a
/// 20s training and a 20s testing period (inclusive endpoints). Additive
/// output noise has std noise_ratio * max |position| over the training
/// window.
inline PendulumRecord gen_pendulum(double dt, double noise_ratio, std::uint64_t seed) {
    if (!(dt > 0.0)) throw PreconditionError("gen_pendulum: dt must be > 0");
    PendulumRecord rec;
    rec.truth = pendulum_truth(dt);
    rec.n_train = static_cast<Eigen::Index>(std::llround(20.0 / dt));
    const Eigen::Index total = 2 * rec.n_train + 1;

    std::mt19937_64 rng(seed);
    std::vector<VectorXd> inputs(static_cast<size_t>(total));
    const double input_std = std::sqrt(dt);
    for (auto& u : inputs) u = VectorXd::Constant(1, input_std * randn(rng));

    std::vector<double> times(static_cast<size_t>(total));
    for (Eigen::Index k = 0; k < total; ++k)
        times[static_cast<size_t>(k)] = static_cast<double>(k) * dt;

    std::mt19937_64 sim_rng(derive_seed(seed, 1));
    rec.data = simulate(rec.truth, inputs, sim_rng, /*stochastic=*/false, times);
    rec.clean_position.resize(static_cast<size_t>(total));
    for (Eigen::Index k = 0; k < total; ++k)
        rec.clean_position[static_cast<size_t>(k)] = rec.data.outputs[static_cast<size_t>(k)][0];

    for (Eigen::Index k = 0; k <= rec.n_train; ++k)
        rec.max_abs_position = std::max(
            rec.max_abs_position, std::abs(rec.clean_position[static_cast<size_t>(k)]));
    rec.sigma_eta = noise_ratio * rec.max_abs_position;
    if (rec.sigma_eta > 0.0) {
        for (auto& y : rec.data.outputs) y[0] += rec.sigma_eta * randn(rng);
    }
    return rec;
}

/// Training/testing mean squared error of a predicted output trajectory
/// against the noiseless position, over k = 1..n and k = n+1..2n.
struct PendulumMse {
    double train = 0.0;
    double test = 0.0;
};

inline PendulumMse pendulum_mse(const PendulumRecord& rec,
                                const std::vector<VectorXd>& predicted) {
    const Eigen::Index n = rec.n_train;
    if (static_cast<Eigen::Index>(predicted.size()) < 2 * n + 1)
        throw DimensionError("pendulum_mse: prediction shorter than the record");
    PendulumMse mse;
    for (Eigen::Index k = 1; k <= n; ++k) {
        const double e =
            rec.clean_position[static_cast<size_t>(k)] - predicted[static_cast<size_t>(k)][0];
        mse.train += e * e;
    }
    for (Eigen::Index k = n + 1; k <= 2 * n; ++k) {
        const double e =
            rec.clean_position[static_cast<size_t>(k)] - predicted[static_cast<size_t>(k)][0];
        mse.test += e * e;
    }
    mse.train /= static_cast<double>(n);
    mse.test /= static_cast<double>(n);
    return mse;
}

// ---------------------------------------------------------------------------
// Logistic map

/// Noiseless logistic-map record y_{k+1} = theta y_k (1 - y_k), d_u = 0.
inline Dataset gen_logistic(double theta, double y0, Eigen::Index n_points) {
    if (n_points < 1) throw PreconditionError("gen_logistic: need at least one point");
    Dataset data;
    double y = y0;
    for (Eigen::Index k = 0; k < n_points; ++k) {
        data.times.push_back(static_cast<double>(k));
        data.inputs.push_back(VectorXd::Zero(0));
        data.outputs.push_back(VectorXd::Constant(1, y));
        y = logistic_map_step(theta, y);
    }
    return data;
}

// ---------------------------------------------------------------------------
// Forced Duffing oscillator

struct DuffingRecord {
    Dataset data;                        // 1200 points at dt = 0.25
    std::vector<double> clean_position;
    DuffingParams params;
    double t_start = 0.0;                // data-collection start (after spin-up)
};

/// Integrate the chaotic Duffing oscillator from rest, discard the spin-up
/// transient, then record the position every dt seconds with additive
/// Gaussian measurement noise. The exogenous input channel carries the
/// forcing waveform cos(omega t_k).
inline DuffingRecord gen_duffing(std::uint64_t seed, double dt = 0.25,
                                 double spin_up = 600.0, double duration = 300.0,
                                 double noise_std = 1e-3,
                                 const DuffingParams& params = duffing_chaotic_params(),
                                 const Rk45Options& opts = {}) {
    DuffingRecord rec;
    rec.params = params;
    rec.t_start = spin_up;
    auto rhs = [&params](double t, const VectorXd& x) { return duffing_rhs(x, t, params); };

    VectorXd x = VectorXd::Zero(2);
    if (spin_up > 0.0) x = rk45_integrate(rhs, x, 0.0, spin_up, opts);

    const Eigen::Index n_points = static_cast<Eigen::Index>(std::llround(duration / dt));
    std::mt19937_64 rng(seed);
    for (Eigen::Index k = 0; k < n_points; ++k) {
        const double t = spin_up + static_cast<double>(k) * dt;
        rec.data.times.push_back(t);
        rec.data.inputs.push_back(VectorXd::Constant(1, std::cos(params.omega * t)));
        rec.clean_position.push_back(x[0]);
        rec.data.outputs.push_back(VectorXd::Constant(1, x[0] + noise_std * randn(rng)));
        x = rk45_integrate(rhs, x, t, t + dt, opts);
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Allen-Cahn quantity of interest

struct AllenCahnConfig {
    Eigen::Index n_cells = 256;     // vertices = n_cells + 1
    double dt = 0.1;
    double diffusion = 1e-2;        // coefficient of w_xixi (paper gap, flagged)
    double spin_up = 20.0;
    double train_duration = 10.0;
    double test_duration = 10.0;
    double input_var = 1e-2;        // u(t_k) ~ N(0, input_var), zero-order hold
    double noise_std = 0.2;         // QoI sensor noise
    double forcing_lo = -0.5;
    double forcing_hi = 0.2;
    Rk45Options integrator{};
};

struct AllenCahnRecord {
    Dataset train;                        // 101 points by default
    Dataset test;
    std::vector<double> clean_train;      // noiseless QoI
    std::vector<double> clean_test;
    AllenCahnConfig config;
};

namespace detail {

/// Method-of-lines right-hand side on n_cells+1 vertices of [-1, 1] with
/// Neumann boundaries via ghost-cell reflection.
struct AllenCahnRhs {
    Eigen::Index nodes;
    double inv_dxi2;
    double diffusion;
    VectorXd forcing_mask;

    VectorXd operator()(const VectorXd& w, double u) const {
        VectorXd dw(nodes);
        for (Eigen::Index i = 0; i < nodes; ++i) {
            const double left = i > 0 ? w[i - 1] : w[1];
            const double right = i < nodes - 1 ? w[i + 1] : w[nodes - 2];
            dw[i] = diffusion * (left - 2.0 * w[i] + right) * inv_dxi2 +
                    w[i] * (1.0 - w[i] * w[i]) + forcing_mask[i] * u;
        }
        return dw;
    }
};

inline AllenCahnRhs make_allen_cahn_rhs(const AllenCahnConfig& cfg) {
    const Eigen::Index nodes = cfg.n_cells + 1;
    const double dxi = 2.0 / static_cast<double>(cfg.n_cells);
    AllenCahnRhs rhs;
    rhs.nodes = nodes;
    rhs.inv_dxi2 = 1.0 / (dxi * dxi);
    rhs.diffusion = cfg.diffusion;
    rhs.forcing_mask = VectorXd::Zero(nodes);
    for (Eigen::Index i = 0; i < nodes; ++i) {
        const double xi = -1.0 + static_cast<double>(i) * dxi;
        if (xi >= cfg.forcing_lo && xi <= cfg.forcing_hi) rhs.forcing_mask[i] = 1.0;
    }
    return rhs;
}

inline double allen_cahn_qoi(const VectorXd& w) {
    return w.squaredNorm() / static_cast<double>(w.size());
}

}  // namespace detail

/// Generate the Allen-Cahn QoI record: spin up from w = 0 under the random
/// zero-order-hold forcing, then collect train and test windows of the
/// spatial second moment with sensor noise.
inline AllenCahnRecord gen_allen_cahn(Eigen::Index n_cells, double dt, std::uint64_t seed,
                                      AllenCahnConfig cfg = {}) {
    if (n_cells < 16) throw PreconditionError("gen_allen_cahn: need at least 16 cells");
    cfg.n_cells = n_cells;
    cfg.dt = dt;
    AllenCahnRecord rec;
    rec.config = cfg;
    detail::AllenCahnRhs rhs = detail::make_allen_cahn_rhs(cfg);

    const Eigen::Index spin_steps = static_cast<Eigen::Index>(std::llround(cfg.spin_up / dt));
    const Eigen::Index train_points =
        static_cast<Eigen::Index>(std::llround(cfg.train_duration / dt)) + 1;
    const Eigen::Index test_points =
        static_cast<Eigen::Index>(std::llround(cfg.test_duration / dt));

    std::mt19937_64 rng(seed);
    const double input_std = std::sqrt(cfg.input_var);
    VectorXd w = VectorXd::Zero(rhs.nodes);

    auto step = [&](const VectorXd& state, double t, double u) {
        auto f = [&rhs, u](double, const VectorXd& x) { return rhs(x, u); };
        try {
            return rk45_integrate(f, state, t, t + dt, cfg.integrator);
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) +
                                 "; consider a coarser spatial mesh (fewer cells)");
        }
    };

    // Spin-up: forcing active, nothing recorded.
    for (Eigen::Index k = 0; k < spin_steps; ++k)
        w = step(w, static_cast<double>(k) * dt, input_std * randn(rng));

    auto collect = [&](Dataset& out, std::vector<double>& clean, Eigen::Index count,
                       Eigen::Index offset) {
        for (Eigen::Index k = 0; k < count; ++k) {
            const double t = static_cast<double>(spin_steps + offset + k) * dt;
            const double u = input_std * randn(rng);
            const double qoi = detail::allen_cahn_qoi(w);
            out.times.push_back(t);
            out.inputs.push_back(VectorXd::Constant(1, u));
            clean.push_back(qoi);
            out.outputs.push_back(VectorXd::Constant(1, qoi + cfg.noise_std * randn(rng)));
            w = step(w, t, u);
        }
    };
    collect(rec.train, rec.clean_train, train_points, 0);
    collect(rec.test, rec.clean_test, test_points, train_points);
    return rec;
}

}  // namespace sysid

#endif  // SYSID_DATAGEN_HPP
