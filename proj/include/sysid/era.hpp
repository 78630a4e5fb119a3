// SPDX-License-Identifier: Apache-2.0
//
// Eigensystem realization algorithm: Hankel assembly from Markov parameters,
// SVD truncation, and the combined subtrajectory-LS + ERA pipeline.

#ifndef SYSID_ERA_HPP
#define SYSID_ERA_HPP

#include <string>

#include "json.hpp"

#include "sysid/markov.hpp"
#include "sysid/types.hpp"

namespace sysid {

/// Hankel block dimensions (d1 block rows, d2+1 block columns before the
/// shifted slicing). Must satisfy d1 + d2 <= n for a sequence G_0..G_n and
/// min(dy d1, du d2) >= dx.
struct HankelShape {
    Eigen::Index d1 = 0;
    Eigen::Index d2 = 0;
};

/// Which sequence element sits in the top-left Hankel block.
/// g1 (default): G_1 = H B, the first impulse-response block after the
/// feedthrough; the realization is exact for exact Markov parameters.
/// g0: the literal G_0 = D indexing; kept for comparison with the
/// feedthrough-free convention.
enum class HankelStart { g1, g0 };

struct EraOptions {
    HankelStart hankel_from = HankelStart::g1;
    double rank_rtol = 1e-10;
};

/// G_0 = D, G_k = H A^{k-1} B for k = 1..m, via incremental powers.
inline MarkovSequence markov_from_statespace(const LtiModel& model, Eigen::Index m) {
    if (m < 0) throw PreconditionError("markov_from_statespace: m must be >= 0");
    model.validate();
    MarkovSequence seq;
    seq.blocks.reserve(static_cast<size_t>(m + 1));
    seq.blocks.push_back(model.D);
    MatrixXd hak = model.H;  // H A^{k-1}
    for (Eigen::Index k = 1; k <= m; ++k) {
        seq.blocks.push_back(hak * model.B);
        hak = hak * model.A;
    }
    return seq;
}

/// Largest balanced shape usable for a sequence G_0..G_m: d1 + d2 = m with
/// dy d1 as close as possible to du d2, both Hankel inequalities enforced.
/// Ties resolve toward larger d1.
inline HankelShape default_hankel_shape(Eigen::Index m, Eigen::Index dx,
                                        Eigen::Index dy, Eigen::Index du) {
    HankelShape best{0, 0};
    double best_imbalance = -1.0;
    for (Eigen::Index d1 = m - 1; d1 >= 1; --d1) {
        const Eigen::Index d2 = m - d1;
        if (std::min(dy * d1, du * d2) < dx) continue;
        const double imbalance = std::abs(static_cast<double>(dy * d1 - du * d2));
        if (best_imbalance < 0.0 || imbalance < best_imbalance) {
            best_imbalance = imbalance;
            best = {d1, d2};
        }
    }
    if (best_imbalance < 0.0)
        throw PreconditionError("default_hankel_shape: no feasible (d1, d2) for dx=" +
                                std::to_string(dx));
    return best;
}

/// Extract a state-space realization of order dx from Markov parameters.
/// The Hankel E stacks blocks E[i,j] = G_{base+i+j} (base per options); the
/// unshifted/shifted slices E^-, E^+ drop the last/first block column, and
///   O = U S^{1/2}, C = S^{1/2} V^T,  A = O^+ E^+ C^+,
///   B = first du columns of C, H = first dy rows of O, D = G_0.
/// Noise covariances of the returned model are zero placeholders.
inline LtiModel era(const MarkovSequence& g, Eigen::Index dx, const HankelShape& shape,
                    const EraOptions& opts = {}) {
    const Eigen::Index dy = g.dy();
    const Eigen::Index du = g.du();
    const Eigen::Index base = opts.hankel_from == HankelStart::g1 ? 1 : 0;
    if (dx < 1) throw PreconditionError("era: dx must be >= 1");
    if (shape.d1 < 1 || shape.d2 < 1) throw PreconditionError("era: d1, d2 must be >= 1");
    if (std::min(dy * shape.d1, du * shape.d2) < dx)
        throw PreconditionError("era: shape violates min(dy d1, du d2) >= dx");
    if (g.size() < base + shape.d1 + shape.d2)
        throw PreconditionError("era: sequence too short for requested shape");

    MatrixXd hankel(shape.d1 * dy, (shape.d2 + 1) * du);
    for (Eigen::Index i = 0; i < shape.d1; ++i)
        for (Eigen::Index j = 0; j <= shape.d2; ++j)
            hankel.block(i * dy, j * du, dy, du) =
                g.blocks[static_cast<size_t>(base + i + j)];
    MatrixXd e_minus = hankel.leftCols(shape.d2 * du);
    MatrixXd e_plus = hankel.rightCols(shape.d2 * du);

    Eigen::BDCSVD<MatrixXd> svd(e_minus, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const VectorXd& sv = svd.singularValues();
    if (!(sv[0] > 0.0) || sv[dx - 1] < opts.rank_rtol * sv[0])
        throw NumericalError(
            "era: requested order exceeds the numerical rank of the Hankel matrix");

    VectorXd s_half = sv.head(dx).cwiseSqrt();
    MatrixXd obs = svd.matrixU().leftCols(dx) * s_half.asDiagonal();
    MatrixXd ctrl = s_half.asDiagonal() * svd.matrixV().leftCols(dx).transpose();

    LtiModel model;
    // O^+ E^+ C^+ = S^{-1/2} U^T E^+ V S^{-1/2}
    model.A = s_half.cwiseInverse().asDiagonal() *
              (svd.matrixU().leftCols(dx).transpose() * e_plus * svd.matrixV().leftCols(dx)) *
              s_half.cwiseInverse().asDiagonal();
    model.B = ctrl.leftCols(du);
    model.H = obs.topRows(dy);
    model.D = g.blocks.front();
    model.Sigma = MatrixXd::Zero(dx, dx);
    model.Gamma = MatrixXd::Zero(dy, dy);
    model.x0 = GaussianBelief::point_mass(VectorXd::Zero(dx));
    return model;
}

/// Subtrajectory LS followed by ERA (single-rollout pipeline).
inline LtiModel ls_era(const Dataset& data, Eigen::Index dx, Eigen::Index nbar,
                       const HankelShape& shape, const EraOptions& opts = {}) {
    MarkovSequence g = ls_markov_subtraj(data, nbar);
    return era(g, dx, shape, opts);
}

inline LtiModel ls_era(const Dataset& data, Eigen::Index dx, Eigen::Index nbar,
                       const EraOptions& opts = {}) {
    MarkovSequence g = ls_markov_subtraj(data, nbar);
    HankelShape shape = default_hankel_shape(g.size() - 1, dx, data.dy(), data.du());
    return era(g, dx, shape, opts);
}

namespace detail {

inline nlohmann::json pack_matrix(const MatrixXd& m) {
    nlohmann::json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    std::vector<double> flat(static_cast<size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            flat[static_cast<size_t>(r * m.cols() + c)] = m(r, c);
    j["data"] = flat;  // row-major
    return j;
}

inline MatrixXd unpack_matrix(const nlohmann::json& mj) {
    const Eigen::Index rows = mj.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = mj.at("cols").get<Eigen::Index>();
    const auto& flat = mj.at("data");
    if (static_cast<Eigen::Index>(flat.size()) != rows * cols)
        throw IngestError("realization: matrix size mismatch");
    MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = flat.at(static_cast<size_t>(r * cols + c)).get<double>();
    return m;
}

}  // namespace detail

/// {A,B,H,D} row-major with dims; noise covariances included when nonzero.
inline nlohmann::json realization_to_json(const LtiModel& model) {
    nlohmann::json j = {{"A", detail::pack_matrix(model.A)},
                        {"B", detail::pack_matrix(model.B)},
                        {"H", detail::pack_matrix(model.H)},
                        {"D", detail::pack_matrix(model.D)}};
    if (model.Sigma.size() > 0 && model.Sigma.cwiseAbs().maxCoeff() > 0.0)
        j["Sigma"] = detail::pack_matrix(model.Sigma);
    if (model.Gamma.size() > 0 && model.Gamma.cwiseAbs().maxCoeff() > 0.0)
        j["Gamma"] = detail::pack_matrix(model.Gamma);
    return j;
}

inline LtiModel realization_from_json(const nlohmann::json& j) {
    LtiModel model;
    model.A = detail::unpack_matrix(j.at("A"));
    model.B = detail::unpack_matrix(j.at("B"));
    model.H = detail::unpack_matrix(j.at("H"));
    model.D = detail::unpack_matrix(j.at("D"));
    const Eigen::Index dx = model.A.rows();
    model.Sigma = j.contains("Sigma") ? detail::unpack_matrix(j.at("Sigma"))
                                      : MatrixXd::Zero(dx, dx);
    model.Gamma = j.contains("Gamma")
                      ? detail::unpack_matrix(j.at("Gamma"))
                      : MatrixXd::Zero(model.H.rows(), model.H.rows());
    model.x0 = GaussianBelief::point_mass(VectorXd::Zero(dx));
    return model;
}

}  // namespace sysid

#endif  // SYSID_ERA_HPP
