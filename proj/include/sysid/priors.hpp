// SPDX-License-Identifier: Apache-2.0

#ifndef SYSID_PRIORS_HPP
#define SYSID_PRIORS_HPP

#include <cmath>
#include <limits>
#include <variant>
#include <vector>

#include "sysid/errors.hpp"
#include "sysid/linalg.hpp"

namespace sysid {

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

/// Flat prior on the whole real line: log-density contribution 0.
struct ImproperUniform {};

struct NormalPrior {
    double mean = 0.0;
    double var = 1.0;
};

/// half-N(0, var): support [0, inf).
struct HalfNormalPrior {
    double var = 1.0;
};

using Prior = std::variant<ImproperUniform, NormalPrior, HalfNormalPrior>;

/// Independent per-parameter priors.
struct PriorSpec {
    std::vector<Prior> priors;

    static PriorSpec all_uniform(size_t n) {
        PriorSpec spec;
        spec.priors.assign(n, ImproperUniform{});
        return spec;
    }

    PriorSpec& set(size_t i, Prior p) {
        priors.at(i) = p;
        return *this;
    }

    size_t size() const { return priors.size(); }
};

inline double log_prior_density(const Prior& prior, double value) {
    return std::visit(
        [value](const auto& p) -> double {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, ImproperUniform>) {
                return 0.0;
            } else if constexpr (std::is_same_v<T, NormalPrior>) {
                if (!(p.var > 0.0)) throw PreconditionError("NormalPrior: variance must be > 0");
                const double r = value - p.mean;
                return -0.5 * (r * r / p.var + std::log(p.var) + kLog2Pi);
            } else {
                if (!(p.var > 0.0))
                    throw PreconditionError("HalfNormalPrior: variance must be > 0");
                if (value < 0.0) return kLogZero;
                return 0.5 * std::log(2.0 / (M_PI * p.var)) - value * value / (2.0 * p.var);
            }
        },
        prior);
}

/// Sum of per-parameter log densities; -inf outside support.
inline double log_prior(const PriorSpec& spec, const VectorXd& theta) {
    if (static_cast<size_t>(theta.size()) != spec.priors.size())
        throw DimensionError("log_prior: theta length does not match prior spec");
    double total = 0.0;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        const double lp = log_prior_density(spec.priors[static_cast<size_t>(i)], theta[i]);
        if (lp == kLogZero) return kLogZero;
        total += lp;
    }
    return total;
}

}  // namespace sysid

#endif  // SYSID_PRIORS_HPP
