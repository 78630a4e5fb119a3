// SPDX-License-Identifier: Apache-2.0
//
// Markov parameter estimation for LTI systems from a single rollout:
// exact noise covariance blocks Lambda, the generalized least-squares MLE,
// and the subtrajectory LS/GLS estimators.

#ifndef SYSID_MARKOV_HPP
#define SYSID_MARKOV_HPP

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "sysid/types.hpp"

namespace sysid {

/// Ordered impulse-response blocks G_0, G_1, ..., each dy x du.
/// G_0 corresponds to the feedthrough D; G_k = H A^{k-1} B for k >= 1.
struct MarkovSequence {
    std::vector<MatrixXd> blocks;
    std::vector<std::string> warnings;

    Eigen::Index dy() const { return blocks.empty() ? 0 : blocks.front().rows(); }
    Eigen::Index du() const { return blocks.empty() ? 0 : blocks.front().cols(); }
    Eigen::Index size() const { return static_cast<Eigen::Index>(blocks.size()); }

    /// Horizontal concatenation [G_0 G_1 ... G_m], dy x (m+1)du.
    MatrixXd concat() const {
        if (blocks.empty()) return MatrixXd(0, 0);
        MatrixXd g(dy(), size() * du());
        for (Eigen::Index i = 0; i < size(); ++i)
            g.middleCols(i * du(), du()) = blocks[static_cast<size_t>(i)];
        return g;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["dy"] = dy();
        j["du"] = du();
        j["blocks"] = nlohmann::json::array();
        for (const auto& b : blocks) {
            std::vector<double> flat(static_cast<size_t>(b.size()));
            for (Eigen::Index r = 0; r < b.rows(); ++r)
                for (Eigen::Index c = 0; c < b.cols(); ++c)
                    flat[static_cast<size_t>(r * b.cols() + c)] = b(r, c);  // row-major
            j["blocks"].push_back(flat);
        }
        if (!warnings.empty()) j["warnings"] = warnings;
        return j;
    }

    static MarkovSequence from_json(const nlohmann::json& j) {
        MarkovSequence seq;
        const Eigen::Index dy = j.at("dy").get<Eigen::Index>();
        const Eigen::Index du = j.at("du").get<Eigen::Index>();
        for (const auto& flat : j.at("blocks")) {
            if (static_cast<Eigen::Index>(flat.size()) != dy * du)
                throw IngestError("MarkovSequence: block size mismatch");
            MatrixXd b(dy, du);
            for (Eigen::Index r = 0; r < dy; ++r)
                for (Eigen::Index c = 0; c < du; ++c)
                    b(r, c) = flat.at(static_cast<size_t>(r * du + c)).get<double>();
            seq.blocks.push_back(b);
        }
        if (j.contains("warnings"))
            seq.warnings = j.at("warnings").get<std::vector<std::string>>();
        return seq;
    }
};

/// Block structure of the joint input-output noise covariance:
///   Lambda_0 = Gamma
///   Lambda_k = sum_{i=1..k} H A^{i-1} Sigma (H A^{i-1})^T + Gamma
///   Lambda_{j,k} = sum_{i=1..j} H A^{i-1} Sigma (H A^{k-j+i-1})^T,  0 < j < k
///   Lambda_{0,k} = 0 for k > 0; Lambda_{j,k} = Lambda_{k,j}^T for k < j.
struct LambdaBlocks {
    std::vector<MatrixXd> diag;                   // Lambda_0 .. Lambda_n
    std::vector<std::vector<MatrixXd>> off;       // off[j][k-j-1] = Lambda_{j,k}, j < k
    bool has_offdiag = false;

    Eigen::Index n() const { return static_cast<Eigen::Index>(diag.size()) - 1; }
    Eigen::Index dy() const { return diag.empty() ? 0 : diag.front().rows(); }

    /// Dense (n+1)dy square covariance.
    MatrixXd assemble() const {
        const Eigen::Index d = dy();
        const Eigen::Index np1 = n() + 1;
        MatrixXd m = MatrixXd::Zero(np1 * d, np1 * d);
        for (Eigen::Index k = 0; k < np1; ++k)
            m.block(k * d, k * d, d, d) = diag[static_cast<size_t>(k)];
        if (has_offdiag) {
            for (Eigen::Index j = 1; j < np1; ++j) {
                for (Eigen::Index k = j + 1; k < np1; ++k) {
                    const MatrixXd& b = off[static_cast<size_t>(j)][static_cast<size_t>(k - j - 1)];
                    m.block(j * d, k * d, d, d) = b;
                    m.block(k * d, j * d, d, d) = b.transpose();
                }
            }
        }
        return m;
    }
};

/// Exact Lambda blocks of an LTI model up to index n. Powers of A are formed
/// incrementally. The O(n^2) off-diagonal set can be skipped when only the
/// per-step weights are needed (the GLS estimator).
inline LambdaBlocks build_lambda(const LtiModel& model, Eigen::Index n,
                                 bool include_offdiag = true) {
    if (n < 0) throw PreconditionError("build_lambda: n must be >= 0");
    model.validate();
    const Eigen::Index dy = model.dy();

    // M_i = H A^{i-1}, i = 1..n
    std::vector<MatrixXd> m_pow;
    m_pow.reserve(static_cast<size_t>(n));
    if (n >= 1) {
        m_pow.push_back(model.H);
        for (Eigen::Index i = 2; i <= n; ++i) m_pow.push_back(m_pow.back() * model.A);
    }

    LambdaBlocks lb;
    lb.has_offdiag = include_offdiag;
    lb.diag.reserve(static_cast<size_t>(n + 1));
    lb.diag.push_back(model.Gamma);
    MatrixXd acc = model.Gamma;
    for (Eigen::Index k = 1; k <= n; ++k) {
        const MatrixXd& mk = m_pow[static_cast<size_t>(k - 1)];
        acc = symmetrize(acc + mk * model.Sigma * mk.transpose());
        lb.diag.push_back(acc);
    }

    if (include_offdiag) {
        std::vector<MatrixXd> t;  // T_i = H A^{i-1} Sigma
        t.reserve(m_pow.size());
        for (const auto& m : m_pow) t.push_back(m * model.Sigma);
        lb.off.resize(static_cast<size_t>(n + 1));
        for (Eigen::Index j = 1; j <= n; ++j) {
            auto& row = lb.off[static_cast<size_t>(j)];
            row.reserve(static_cast<size_t>(n - j));
            for (Eigen::Index k = j + 1; k <= n; ++k) {
                MatrixXd b = MatrixXd::Zero(dy, dy);
                for (Eigen::Index i = 1; i <= j; ++i)
                    b += t[static_cast<size_t>(i - 1)] *
                         m_pow[static_cast<size_t>(k - j + i - 1)].transpose();
                row.push_back(b);
            }
        }
    }
    return lb;
}

namespace detail {

/// Stacked input vector [u_k; u_{k-1}; ...; u_{k-m+1}] of m blocks.
inline VectorXd lagged_inputs(const Dataset& data, Eigen::Index k, Eigen::Index m) {
    const Eigen::Index du = data.du();
    VectorXd ubar(m * du);
    for (Eigen::Index i = 0; i < m; ++i)
        ubar.segment(i * du, du) = data.inputs[static_cast<size_t>(k - i)];
    return ubar;
}

/// Whitening transform W with W^T W = Lambda^{-1} (pseudo-inverted when the
/// Cholesky factorization fails on a near-singular block).
inline MatrixXd whitener(const MatrixXd& lambda) {
    Eigen::LLT<MatrixXd> llt(symmetrize(lambda));
    if (llt.info() == Eigen::Success) {
        MatrixXd l = llt.matrixL();
        return l.triangularView<Eigen::Lower>()
            .solve(MatrixXd::Identity(l.rows(), l.cols()));
    }
    const double d = static_cast<double>(lambda.rows());
    const double jitter = 1e-12 * lambda.trace() / d;
    Eigen::LLT<MatrixXd> retry(
        MatrixXd(symmetrize(lambda) + jitter * MatrixXd::Identity(lambda.rows(), lambda.cols())));
    if (retry.info() == Eigen::Success) {
        MatrixXd l = retry.matrixL();
        return l.triangularView<Eigen::Lower>()
            .solve(MatrixXd::Identity(l.rows(), l.cols()));
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(lambda));
    VectorXd inv_sqrt = es.eigenvalues();
    const double cutoff = 1e-14 * std::max(1.0, inv_sqrt.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < inv_sqrt.size(); ++i)
        inv_sqrt[i] = inv_sqrt[i] > cutoff ? 1.0 / std::sqrt(inv_sqrt[i]) : 0.0;
    return inv_sqrt.asDiagonal() * es.eigenvectors().transpose();
}

inline MarkovSequence unpack_markov(const VectorXd& vec_g, Eigen::Index dy,
                                    Eigen::Index du, Eigen::Index n_blocks) {
    MarkovSequence seq;
    seq.blocks.reserve(static_cast<size_t>(n_blocks));
    for (Eigen::Index i = 0; i < n_blocks; ++i) {
        MatrixXd b(dy, du);
        for (Eigen::Index c = 0; c < du; ++c)
            b.col(c) = vec_g.segment((i * du + c) * dy, dy);  // column-major within a block
        seq.blocks.push_back(b);
    }
    return seq;
}

}  // namespace detail

struct MleMarkovOptions {
    Eigen::Index first_output = 0;  // discard outputs before this index
    Eigen::Index n_blocks = -1;     // unknowns G_0..G_{n_blocks-1}; -1 means n+1
};

/// Generalized least-squares MLE of the Markov parameters under the full
/// joint covariance Lambda: vec(G) = (V^T L^-1 V)^+ V^T L^-1 vec(Y), solved
/// in whitened form with a 1e-12 singular-value cutoff (minimum-norm when
/// the system is underdetermined).
inline MarkovSequence mle_markov(const Dataset& data, const LambdaBlocks& lambda,
                                 const MleMarkovOptions& opts = {}) {
    data.validate();
    const Eigen::Index n = data.size() - 1;
    const Eigen::Index dy = data.dy();
    const Eigen::Index du = data.du();
    if (lambda.n() != n) throw DimensionError("mle_markov: Lambda size mismatch");
    const Eigen::Index nb = opts.n_blocks < 0 ? n + 1 : opts.n_blocks;
    const Eigen::Index k0 = opts.first_output;
    if (k0 < 0 || k0 > n) throw PreconditionError("mle_markov: first_output out of range");

    const Eigen::Index rows = (n + 1 - k0) * dy;
    const Eigen::Index cols = nb * du * dy;
    MatrixXd design = MatrixXd::Zero(rows, cols);
    VectorXd target(rows);
    for (Eigen::Index k = k0; k <= n; ++k) {
        const Eigen::Index r = (k - k0) * dy;
        target.segment(r, dy) = data.outputs[static_cast<size_t>(k)];
        const Eigen::Index imax = std::min(k, nb - 1);
        for (Eigen::Index i = 0; i <= imax; ++i) {
            const VectorXd& u = data.inputs[static_cast<size_t>(k - i)];
            for (Eigen::Index c = 0; c < du; ++c)
                design.block(r, (i * du + c) * dy, dy, dy) +=
                    u[c] * MatrixXd::Identity(dy, dy);
        }
    }

    // Whiten with the Cholesky factor of the retained submatrix of Lambda.
    MatrixXd lam = lambda.assemble().block(k0 * dy, k0 * dy, rows, rows);
    MatrixXd w = detail::whitener(lam);
    VectorXd vec_g = solve_min_norm(w * design, w * target);
    return detail::unpack_markov(vec_g, dy, du, nb);
}

namespace detail {

/// Dense lagged-input matrix of the subtrajectory estimator: block row i of
/// column (k - nbar) holds u_{k-i}, for k = nbar..n.
inline MatrixXd subtraj_input_matrix(const Dataset& data, Eigen::Index nbar) {
    const Eigen::Index n = data.size() - 1;
    const Eigen::Index du = data.du();
    const Eigen::Index cols = n - nbar + 1;
    MatrixXd ubar(nbar * du, cols);
    for (Eigen::Index k = nbar; k <= n; ++k)
        ubar.col(k - nbar) = lagged_inputs(data, k, nbar);
    return ubar;
}

inline void check_subtraj_preconditions(const Dataset& data, Eigen::Index nbar) {
    data.validate();
    if (!data.fully_observed())
        throw PreconditionError("subtrajectory estimator: record must be fully observed");
    const Eigen::Index n = data.size() - 1;
    const Eigen::Index du = data.du();
    if (du < 1) throw PreconditionError("subtrajectory estimator: needs inputs");
    if (nbar < 1) throw PreconditionError("subtrajectory estimator: nbar must be >= 1");
    if (!(static_cast<double>(nbar) < static_cast<double>(n + 1) / static_cast<double>(du)))
        throw PreconditionError("subtrajectory estimator: requires nbar < (n+1)/du");
}

inline void attach_rank_warning(MarkovSequence& seq, const MatrixXd& ubar) {
    const Eigen::Index r = numerical_rank(ubar);
    if (r < ubar.rows())
        seq.warnings.push_back("ill-posed: lagged input matrix has rank " +
                               std::to_string(r) + " < " + std::to_string(ubar.rows()));
}

}  // namespace detail

/// Unweighted subtrajectory least squares: G_{0:nbar-1} = Y_{nbar:n} Ubar^+.
/// The first nbar outputs are discarded. Rank deficiency of the lagged input
/// matrix (e.g. sinusoidal inputs) is resolved by the pseudo-inverse and
/// reported through a warning on the result.
inline MarkovSequence ls_markov_subtraj(const Dataset& data, Eigen::Index nbar) {
    detail::check_subtraj_preconditions(data, nbar);
    const Eigen::Index n = data.size() - 1;
    const Eigen::Index dy = data.dy();
    MatrixXd ubar = detail::subtraj_input_matrix(data, nbar);
    MatrixXd y(dy, n - nbar + 1);
    for (Eigen::Index k = nbar; k <= n; ++k)
        y.col(k - nbar) = data.outputs[static_cast<size_t>(k)];

    MatrixXd g = y * pseudo_inverse(ubar);
    MarkovSequence seq;
    seq.blocks.reserve(static_cast<size_t>(nbar));
    for (Eigen::Index i = 0; i < nbar; ++i)
        seq.blocks.push_back(g.middleCols(i * data.du(), data.du()));
    detail::attach_rank_warning(seq, ubar);
    return seq;
}

/// Subtrajectory generalized least squares: each residual block is whitened
/// by Lambda_k^{-1/2} (oracle covariance), then solved as ordinary LS.
inline MarkovSequence gls_markov_subtraj(const Dataset& data, Eigen::Index nbar,
                                         const LambdaBlocks& lambda) {
    detail::check_subtraj_preconditions(data, nbar);
    const Eigen::Index n = data.size() - 1;
    const Eigen::Index dy = data.dy();
    const Eigen::Index du = data.du();
    if (lambda.n() < n) throw DimensionError("gls_markov_subtraj: Lambda too short");

    const Eigen::Index rows = (n - nbar + 1) * dy;
    const Eigen::Index cols = nbar * du * dy;
    MatrixXd design(rows, cols);
    VectorXd target(rows);
    for (Eigen::Index k = nbar; k <= n; ++k) {
        const MatrixXd w = detail::whitener(lambda.diag[static_cast<size_t>(k)]);
        const Eigen::Index r = (k - nbar) * dy;
        target.segment(r, dy) = w * data.outputs[static_cast<size_t>(k)];
        const VectorXd ubar_k = detail::lagged_inputs(data, k, nbar);
        for (Eigen::Index j = 0; j < nbar * du; ++j)
            design.block(r, j * dy, dy, dy) = ubar_k[j] * w;
    }

    VectorXd vec_g = solve_min_norm(design, target);
    MarkovSequence seq = detail::unpack_markov(vec_g, dy, du, nbar);
    detail::attach_rank_warning(seq, detail::subtraj_input_matrix(data, nbar));
    return seq;
}

/// Spectral norm of the concatenated block difference ||Ghat - G||_2.
inline double markov_error(const MarkovSequence& est, const MarkovSequence& truth) {
    if (est.size() != truth.size() || est.dy() != truth.dy() || est.du() != truth.du())
        throw PreconditionError("markov_error: sequences have different shapes");
    return spectral_norm(est.concat() - truth.concat());
}

}  // namespace sysid

#endif  // SYSID_MARKOV_HPP
