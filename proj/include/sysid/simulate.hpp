// SPDX-License-Identifier: Apache-2.0

#ifndef SYSID_SIMULATE_HPP
#define SYSID_SIMULATE_HPP

#include <random>
#include <vector>

#include "sysid/types.hpp"

namespace sysid {

/// Forward-iterate the hidden Markov model over the given input sequence and
/// return the generated dataset. With stochastic=false, the process and
/// measurement noise are zero and the initial state is the x0 mean, so the
/// result is a deterministic function of (model, inputs, times).
inline Dataset simulate(const NonlinearModel& model,
                        const std::vector<VectorXd>& inputs, std::mt19937_64& rng,
                        bool stochastic, const std::vector<double>& times = {}) {
    if (inputs.empty()) throw PreconditionError("simulate: empty input sequence");
    const Eigen::Index n_points = static_cast<Eigen::Index>(inputs.size());
    if (!times.empty() && static_cast<Eigen::Index>(times.size()) != n_points)
        throw DimensionError("simulate: times length mismatch");

    const GaussianBelief init = model.x0();
    const MatrixXd sigma = model.sigma();
    const MatrixXd gamma = model.gamma();

    Dataset data;
    data.times.resize(static_cast<size_t>(n_points));
    data.inputs = inputs;
    data.outputs.resize(static_cast<size_t>(n_points));

    VectorXd x = stochastic ? sample_gaussian(init.mean, init.cov, rng) : init.mean;
    for (Eigen::Index k = 0; k < n_points; ++k) {
        data.times[static_cast<size_t>(k)] =
            times.empty() ? static_cast<double>(k) : times[static_cast<size_t>(k)];
        if (!x.allFinite())
            throw DivergedError("simulate: non-finite state", k);
        VectorXd y = model.output(x, inputs[static_cast<size_t>(k)]);
        if (stochastic) y = sample_gaussian(y, gamma, rng);
        if (!y.allFinite())
            throw DivergedError("simulate: non-finite output", k);
        data.outputs[static_cast<size_t>(k)] = y;
        if (k + 1 < n_points) {
            x = model.step(x, inputs[static_cast<size_t>(k)]);
            if (stochastic) x = sample_gaussian(x, sigma, rng);
        }
    }
    return data;
}

inline Dataset simulate(const LtiModel& model, const std::vector<VectorXd>& inputs,
                        std::mt19937_64& rng, bool stochastic,
                        const std::vector<double>& times = {}) {
    model.validate();
    return simulate(wrap_lti(model), inputs, rng, stochastic, times);
}

/// Deterministic output trajectory from a given initial state (no noise, no
/// belief): the building block of the least-squares objectives.
inline std::vector<VectorXd> rollout_outputs(const NonlinearModel& model,
                                             const VectorXd& x_init,
                                             const std::vector<VectorXd>& inputs) {
    std::vector<VectorXd> ys;
    ys.reserve(inputs.size());
    VectorXd x = x_init;
    for (size_t k = 0; k < inputs.size(); ++k) {
        if (!x.allFinite())
            throw DivergedError("rollout: non-finite state", static_cast<long>(k));
        ys.push_back(model.output(x, inputs[k]));
        if (k + 1 < inputs.size()) x = model.step(x, inputs[k]);
    }
    return ys;
}

}  // namespace sysid

#endif  // SYSID_SIMULATE_HPP
