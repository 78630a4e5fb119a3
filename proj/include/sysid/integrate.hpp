// SPDX-License-Identifier: Apache-2.0

#ifndef SYSID_INTEGRATE_HPP
#define SYSID_INTEGRATE_HPP

#include <cmath>
#include <functional>

#include "sysid/errors.hpp"
#include "sysid/linalg.hpp"

namespace sysid {

struct Rk45Options {
    double rtol = 1e-8;
    double atol = 1e-10;
    double initial_step = 0.0;  // 0 -> span/100
    long max_steps = 1000000;
};

/// Adaptive Dormand-Prince 4(5) integration of x' = rhs(t, x) from t0 to t1.
/// Step-size control uses the mixed absolute/relative error norm; a step
/// shrinking below 1e-14 * span raises a stiffness error.
inline VectorXd rk45_integrate(const std::function<VectorXd(double, const VectorXd&)>& rhs,
                               VectorXd x0, double t0, double t1,
                               const Rk45Options& opts = {}) {
    if (t1 < t0) throw PreconditionError("rk45: t1 must be >= t0");
    if (t1 == t0) return x0;
    const double span = t1 - t0;

    // Dormand-Prince coefficients
    static const double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static const double a21 = 1.0 / 5;
    static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
    static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static const double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

    double t = t0;
    double h = opts.initial_step > 0.0 ? opts.initial_step : span / 100.0;
    VectorXd x = std::move(x0);
    VectorXd k1 = rhs(t, x);

    for (long step = 0; step < opts.max_steps; ++step) {
        if (t >= t1) return x;
        h = std::min(h, t1 - t);
        if (h < 1e-14 * span)
            throw NumericalError("rk45: step size underflow (problem too stiff)", step);

        VectorXd k2 = rhs(t + c2 * h, x + h * (a21 * k1));
        VectorXd k3 = rhs(t + c3 * h, x + h * (a31 * k1 + a32 * k2));
        VectorXd k4 = rhs(t + c4 * h, x + h * (a41 * k1 + a42 * k2 + a43 * k3));
        VectorXd k5 = rhs(t + c5 * h, x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        VectorXd k6 =
            rhs(t + h, x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        VectorXd x5 = x + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        VectorXd k7 = rhs(t + h, x5);
        VectorXd err_vec =
            h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

        if (!x5.allFinite()) throw DivergedError("rk45: non-finite state", step);

        double err = 0.0;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double scale =
                opts.atol + opts.rtol * std::max(std::abs(x[i]), std::abs(x5[i]));
            err = std::max(err, std::abs(err_vec[i]) / scale);
        }

        if (err <= 1.0) {
            t += h;
            x = std::move(x5);
            k1 = std::move(k7);  // FSAL
        }
        const double factor =
            err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
        h *= std::min(5.0, std::max(0.2, factor));
    }
    throw NumericalError("rk45: step budget exhausted");
}

}  // namespace sysid

#endif  // SYSID_INTEGRATE_HPP
