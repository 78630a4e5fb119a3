// SPDX-License-Identifier: Apache-2.0

#ifndef SYSID_LINALG_HPP
#define SYSID_LINALG_HPP

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "sysid/errors.hpp"

namespace sysid {

inline constexpr double kLog2Pi = 1.8378770664093454836;

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

/// Maximum eigenvalue magnitude, via a dense (complex) eigendecomposition.
inline double spectral_radius(const MatrixXd& m) {
    if (m.rows() != m.cols()) throw DimensionError("spectral_radius: matrix not square");
    if (m.rows() == 0) return 0.0;
    Eigen::EigenSolver<MatrixXd> es(m, /*computeEigenvectors=*/false);
    if (es.info() != Eigen::Success) throw NumericalError("spectral_radius: eigensolver failed");
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Cholesky factor of a symmetric PSD matrix with escalating diagonal jitter.
/// Jitter starts at rel * trace/d and is escalated 10x at most max_tries-1
/// times before a NumericalError is raised. Returns the lower factor.
inline MatrixXd cholesky_with_jitter(const MatrixXd& m, double rel = 1e-10,
                                     int max_tries = 3, const char* context = "matrix",
                                     long step = -1) {
    const Eigen::Index d = m.rows();
    if (d != m.cols()) throw DimensionError(std::string("cholesky: ") + context + " not square");
    double jitter = rel * m.trace() / static_cast<double>(d);
    if (!(jitter > 0.0)) jitter = 0.0;
    MatrixXd sym = symmetrize(m);
    for (int attempt = 0; attempt < max_tries; ++attempt) {
        Eigen::LLT<MatrixXd> llt(attempt == 0 ? sym
                                              : MatrixXd(sym + jitter * MatrixXd::Identity(d, d)));
        if (llt.info() == Eigen::Success) return llt.matrixL();
        if (jitter == 0.0) jitter = rel;  // zero-trace fallback, absolute floor
        else jitter *= 10.0;
    }
    throw NumericalError(std::string(context) + " not positive definite after jitter", step);
}

/// Square root S of a symmetric PSD matrix, S * S^T = m. Tries Cholesky first,
/// then falls back to an eigendecomposition with small negative eigenvalues
/// clamped to zero. Eigenvalues below -tol_rel*scale raise a NumericalError.
inline MatrixXd psd_sqrt(const MatrixXd& m, const char* context = "covariance",
                         long step = -1, double tol_rel = 1e-8) {
    const Eigen::Index d = m.rows();
    if (d == 0) return m;
    MatrixXd sym = symmetrize(m);
    Eigen::LLT<MatrixXd> llt(sym);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
    if (es.info() != Eigen::Success)
        throw NumericalError(std::string(context) + ": eigendecomposition failed", step);
    const VectorXd& ev = es.eigenvalues();
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    if (ev.minCoeff() < -tol_rel * scale)
        throw NumericalError(std::string(context) + " has a significantly negative eigenvalue",
                             step);
    return es.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

/// Components of a multivariate Gaussian log-density evaluation.
struct GaussianLogDensity {
    double log_pdf;    // full log N(r; 0, S)
    double quadratic;  // r^T S^{-1} r
    double log_det;    // log det S
};

/// log N(resid; 0, cov) via a jittered Cholesky solve.
inline GaussianLogDensity gaussian_log_density(const VectorXd& resid, const MatrixXd& cov,
                                               const char* context = "innovation covariance",
                                               long step = -1) {
    const Eigen::Index d = resid.size();
    MatrixXd l = cholesky_with_jitter(cov, 1e-10, 3, context, step);
    VectorXd z = l.triangularView<Eigen::Lower>().solve(resid);
    double quad = z.squaredNorm();
    double logdet = 2.0 * l.diagonal().array().log().sum();
    return {-0.5 * (quad + logdet + static_cast<double>(d) * kLog2Pi), quad, logdet};
}

/// One standard normal draw. Kept as a helper so every consumer shares the
/// same generation scheme for a given engine state.
inline double randn(std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(rng);
}

inline VectorXd randn_vector(Eigen::Index n, std::mt19937_64& rng) {
    VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = randn(rng);
    return v;
}

/// Draw from N(mean, cov). Singular covariances are admissible: a zero matrix
/// yields the mean; near-singular ones get a 1e-12 * trace/d jittered factor.
inline VectorXd sample_gaussian(const VectorXd& mean, const MatrixXd& cov,
                                std::mt19937_64& rng) {
    const Eigen::Index d = mean.size();
    if (cov.rows() != d || cov.cols() != d)
        throw DimensionError("sample_gaussian: covariance size mismatch");
    if (d == 0 || cov.cwiseAbs().maxCoeff() == 0.0) {
        randn_vector(d, rng);  // keep the stream position independent of cov
        return mean;
    }
    MatrixXd sym = symmetrize(cov);
    Eigen::LLT<MatrixXd> llt(sym);
    MatrixXd factor;
    if (llt.info() == Eigen::Success) {
        factor = llt.matrixL();
    } else {
        double jitter = 1e-12 * sym.trace() / static_cast<double>(d);
        Eigen::LLT<MatrixXd> retry(MatrixXd(sym + jitter * MatrixXd::Identity(d, d)));
        factor = (retry.info() == Eigen::Success) ? MatrixXd(retry.matrixL())
                                                  : psd_sqrt(sym, "noise covariance");
    }
    return mean + factor * randn_vector(d, rng);
}

/// Minimum-norm least-squares solution of A x = b with singular values below
/// rcond * sigma_max treated as zero.
inline MatrixXd solve_min_norm(const MatrixXd& a, const MatrixXd& b, double rcond = 1e-12) {
    Eigen::BDCSVD<MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(rcond);
    return svd.solve(b);
}

/// Moore-Penrose pseudo-inverse with cutoff rcond * sigma_max.
inline MatrixXd pseudo_inverse(const MatrixXd& a, double rcond = 1e-12) {
    Eigen::BDCSVD<MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double cutoff = rcond * svd.singularValues()[0];
    VectorXd inv = svd.singularValues();
    for (Eigen::Index i = 0; i < inv.size(); ++i)
        inv[i] = inv[i] > cutoff ? 1.0 / inv[i] : 0.0;
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

inline Eigen::Index numerical_rank(const MatrixXd& a, double rcond = 1e-12) {
    Eigen::BDCSVD<MatrixXd> svd(a);
    if (svd.singularValues().size() == 0) return 0;
    const double cutoff = rcond * svd.singularValues()[0];
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()[i] > cutoff) ++r;
    return r;
}

/// Largest singular value.
inline double spectral_norm(const MatrixXd& a) {
    if (a.size() == 0) return 0.0;
    return Eigen::BDCSVD<MatrixXd>(a).singularValues()[0];
}

}  // namespace sysid

#endif  // SYSID_LINALG_HPP
