// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <random>

#include "sysid/era.hpp"
#include "sysid/markov.hpp"
#include "sysid/simulate.hpp"

using namespace sysid;

namespace {

// Eigen's Random() draws from the global rand() stream; pin it per test so
// results do not depend on execution order.
void reseed(unsigned s) { std::srand(s); }

LtiModel make_lti(const MatrixXd& a, const MatrixXd& b, const MatrixXd& h,
                  const MatrixXd& d, const MatrixXd& sigma, const MatrixXd& gamma) {
    LtiModel m;
    m.A = a;
    m.B = b;
    m.H = h;
    m.D = d;
    m.Sigma = sigma;
    m.Gamma = gamma;
    m.x0 = GaussianBelief::point_mass(VectorXd::Zero(a.rows()));
    return m;
}

Dataset gaussian_input_record(const LtiModel& m, Eigen::Index n_points,
                              std::uint64_t seed, bool stochastic) {
    std::mt19937_64 rng(seed);
    std::vector<VectorXd> inputs(static_cast<size_t>(n_points));
    for (auto& u : inputs) u = randn_vector(m.du(), rng);
    return simulate(m, inputs, rng, stochastic);
}

}  // namespace

TEST(Lambda, GammaAtIndexZero) {
    reseed(1001);
    std::mt19937_64 rng(1);
    MatrixXd gamma(2, 2);
    gamma << 0.5, 0.1, 0.1, 0.3;
    LtiModel m = make_lti(0.5 * MatrixXd::Identity(3, 3), MatrixXd::Ones(3, 1),
                          MatrixXd::Ones(2, 3), MatrixXd::Zero(2, 1),
                          0.2 * MatrixXd::Identity(3, 3), gamma);
    LambdaBlocks lb = build_lambda(m, 0);
    EXPECT_EQ(lb.diag.size(), 1u);
    EXPECT_LT((lb.diag[0] - gamma).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Lambda, ZeroProcessNoiseGivesBlockDiagonalGamma) {
    reseed(1002);
    MatrixXd gamma(2, 2);
    gamma << 0.5, 0.1, 0.1, 0.3;
    LtiModel m = make_lti(0.5 * MatrixXd::Identity(3, 3), MatrixXd::Ones(3, 1),
                          MatrixXd::Ones(2, 3), MatrixXd::Zero(2, 1),
                          MatrixXd::Zero(3, 3), gamma);
    LambdaBlocks lb = build_lambda(m, 6);
    for (const auto& d : lb.diag) EXPECT_LT((d - gamma).cwiseAbs().maxCoeff(), 1e-15);
    MatrixXd dense = lb.assemble();
    for (Eigen::Index j = 0; j < 7; ++j)
        for (Eigen::Index k = 0; k < 7; ++k)
            if (j != k)
                EXPECT_EQ(dense.block(2 * j, 2 * k, 2, 2).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Lambda, ScalarRandomWalkClosedForm) {
    reseed(1003);
    // A=1, H=1: Lambda_k = k sigma^2 + gamma^2, Lambda_{j,k} = j sigma^2 (0<j<k)
    const double s2 = 0.3, g2 = 0.07;
    LtiModel m = make_lti(MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1),
                          MatrixXd::Zero(1, 1), MatrixXd::Constant(1, 1, s2),
                          MatrixXd::Constant(1, 1, g2));
    const Eigen::Index n = 9;
    LambdaBlocks lb = build_lambda(m, n);
    for (Eigen::Index k = 0; k <= n; ++k)
        EXPECT_NEAR(lb.diag[static_cast<size_t>(k)](0, 0),
                    static_cast<double>(k) * s2 + g2, 1e-13);
    MatrixXd dense = lb.assemble();
    for (Eigen::Index j = 1; j < n; ++j)
        for (Eigen::Index k = j + 1; k <= n; ++k)
            EXPECT_NEAR(dense(j, k), static_cast<double>(j) * s2, 1e-13);
    for (Eigen::Index k = 1; k <= n; ++k) EXPECT_EQ(dense(0, k), 0.0);
}

TEST(Lambda, AssembledMatrixIsSymmetric) {
    reseed(1004);
    std::mt19937_64 rng(3);
    MatrixXd a = MatrixXd::Random(3, 3) * 0.4;
    MatrixXd ls = MatrixXd::Random(3, 3);
    MatrixXd lg = MatrixXd::Random(2, 2);
    LtiModel m = make_lti(a, MatrixXd::Random(3, 2), MatrixXd::Random(2, 3),
                          MatrixXd::Random(2, 2), MatrixXd(ls * ls.transpose()),
                          MatrixXd(lg * lg.transpose()));
    MatrixXd dense = build_lambda(m, 8).assemble();
    EXPECT_LT((dense - dense.transpose()).cwiseAbs().maxCoeff(),
              1e-12 * dense.cwiseAbs().maxCoeff());
}

TEST(MleMarkov, ExactRecoveryOnNoiselessFirSystem) {
    reseed(1005);
    // nilpotent A: finite impulse response, well-excited Gaussian inputs
    MatrixXd a = MatrixXd::Zero(3, 3);
    a(0, 1) = 1.0;
    a(1, 2) = 1.0;
    LtiModel m = make_lti(a, MatrixXd::Random(3, 2), MatrixXd::Random(2, 3),
                          MatrixXd::Random(2, 2), MatrixXd::Zero(3, 3),
                          MatrixXd::Identity(2, 2));
    const Eigen::Index n_points = 30;
    Dataset data = gaussian_input_record(m, n_points, 5, /*stochastic=*/false);
    LambdaBlocks lambda = build_lambda(m, n_points - 1);
    MleMarkovOptions opts;
    opts.n_blocks = 8;
    MarkovSequence est = mle_markov(data, lambda, opts);
    MarkovSequence truth = markov_from_statespace(m, 7);
    EXPECT_LT(markov_error(est, truth), 1e-10);
}

TEST(MleMarkov, IdentityWeightEqualsUnweightedSolution) {
    reseed(1006);
    std::mt19937_64 rng(6);
    MatrixXd a = 0.5 * MatrixXd::Identity(2, 2);
    LtiModel m = make_lti(a, MatrixXd::Random(2, 1), MatrixXd::Random(1, 2),
                          MatrixXd::Random(1, 1), MatrixXd::Zero(2, 2),
                          MatrixXd::Identity(1, 1));
    Dataset data = gaussian_input_record(m, 12, 7, /*stochastic=*/true);

    // Lambda proportional to the identity
    LambdaBlocks lambda;
    lambda.has_offdiag = false;
    lambda.diag.assign(12, MatrixXd(3.7 * MatrixXd::Identity(1, 1)));
    MarkovSequence weighted = mle_markov(data, lambda);

    // unweighted normal-equations solution computed independently
    const Eigen::Index n = data.size() - 1;
    MatrixXd design = MatrixXd::Zero(n + 1, n + 1);
    VectorXd target(n + 1);
    for (Eigen::Index k = 0; k <= n; ++k) {
        target[k] = data.outputs[static_cast<size_t>(k)][0];
        for (Eigen::Index i = 0; i <= k; ++i)
            design(k, i) = data.inputs[static_cast<size_t>(k - i)][0];
    }
    VectorXd g = solve_min_norm(design, target);
    for (Eigen::Index i = 0; i <= n; ++i)
        EXPECT_NEAR(weighted.blocks[static_cast<size_t>(i)](0, 0), g[i], 1e-10);
}

TEST(MleMarkov, SquareSingleInputSystemInterpolates) {
    reseed(1007);
    // d_u = 1, unknowns n+1 blocks, n+1 equations: zero residual
    std::mt19937_64 rng(8);
    LtiModel m = make_lti(0.8 * MatrixXd::Identity(2, 2), MatrixXd::Random(2, 1),
                          MatrixXd::Random(1, 2), MatrixXd::Random(1, 1),
                          0.1 * MatrixXd::Identity(2, 2), MatrixXd::Identity(1, 1));
    Dataset data = gaussian_input_record(m, 8, 9, /*stochastic=*/true);
    LambdaBlocks lambda = build_lambda(m, 7);
    MarkovSequence est = mle_markov(data, lambda);
    for (Eigen::Index k = 0; k < 8; ++k) {
        double pred = 0.0;
        for (Eigen::Index i = 0; i <= k; ++i)
            pred += est.blocks[static_cast<size_t>(i)](0, 0) *
                    data.inputs[static_cast<size_t>(k - i)][0];
        EXPECT_NEAR(pred, data.outputs[static_cast<size_t>(k)][0], 1e-8);
    }
}

TEST(Prop1, ConditionallyIndependentMleEqualsWhitenedLs) {
    reseed(1008);
    // Sigma = 0 makes the joint GLS factor into per-step weighted LS
    std::mt19937_64 rng(10);
    MatrixXd lg = MatrixXd::Random(2, 2);
    MatrixXd gamma = lg * lg.transpose() + 0.2 * MatrixXd::Identity(2, 2);
    LtiModel m = make_lti(0.6 * MatrixXd::Identity(3, 3), MatrixXd::Random(3, 2),
                          MatrixXd::Random(2, 3), MatrixXd::Random(2, 2),
                          MatrixXd::Zero(3, 3), gamma);
    Dataset data = gaussian_input_record(m, 10, 11, /*stochastic=*/true);
    MarkovSequence joint = mle_markov(data, build_lambda(m, 9));

    // independent oracle: whiten each step by Gamma^{-1/2}, stack, solve
    const Eigen::Index n = data.size() - 1, dy = 2, du = 2;
    Eigen::LLT<MatrixXd> llt(gamma);
    MatrixXd w = MatrixXd(llt.matrixL())
                     .triangularView<Eigen::Lower>()
                     .solve(MatrixXd::Identity(dy, dy));
    MatrixXd design = MatrixXd::Zero((n + 1) * dy, (n + 1) * du * dy);
    VectorXd target((n + 1) * dy);
    for (Eigen::Index k = 0; k <= n; ++k) {
        target.segment(k * dy, dy) = w * data.outputs[static_cast<size_t>(k)];
        for (Eigen::Index i = 0; i <= k; ++i)
            for (Eigen::Index c = 0; c < du; ++c)
                design.block(k * dy, (i * du + c) * dy, dy, dy) =
                    data.inputs[static_cast<size_t>(k - i)][c] * w;
    }
    VectorXd vec_g = solve_min_norm(design, target);
    MatrixXd joint_concat = joint.concat();
    for (Eigen::Index i = 0; i <= n; ++i)
        for (Eigen::Index c = 0; c < du; ++c)
            for (Eigen::Index r = 0; r < dy; ++r)
                EXPECT_NEAR(joint_concat(r, i * du + c), vec_g[(i * du + c) * dy + r],
                            1e-10);
}

TEST(SubtrajLs, ExactRecoveryUpToTruncationBias) {
    reseed(1009);
    std::mt19937_64 rng(12);
    MatrixXd a = MatrixXd::Random(3, 3);
    a *= 0.5 / spectral_radius(a);
    LtiModel m = make_lti(a, MatrixXd::Random(3, 1), MatrixXd::Random(2, 3),
                          MatrixXd::Random(2, 1), MatrixXd::Zero(3, 3),
                          MatrixXd::Zero(2, 2));
    const Eigen::Index nbar = 18;
    Dataset data = gaussian_input_record(m, 400, 13, /*stochastic=*/false);
    MarkovSequence est = ls_markov_subtraj(data, nbar);
    MarkovSequence truth = markov_from_statespace(m, nbar - 1);
    EXPECT_LT(markov_error(est, truth), 1e-3);
    EXPECT_GT(markov_error(est, truth), 0.0);  // truncation bias present
}

TEST(SubtrajLs, SinusoidalInputsRaiseRankWarning) {
    reseed(1010);
    LtiModel m = make_lti(0.5 * MatrixXd::Identity(2, 2), MatrixXd::Ones(2, 1),
                          MatrixXd::Ones(1, 2), MatrixXd::Zero(1, 1),
                          MatrixXd::Zero(2, 2), MatrixXd::Zero(1, 1));
    std::vector<VectorXd> inputs;
    for (int k = 0; k < 200; ++k)
        inputs.push_back(VectorXd::Constant(1, std::sin(0.37 * k)));
    std::mt19937_64 rng(0);
    Dataset data = simulate(m, inputs, rng, false);
    MarkovSequence est = ls_markov_subtraj(data, 10);
    EXPECT_FALSE(est.warnings.empty());
}

TEST(SubtrajLs, FeedthroughOnlySystemRecoversD) {
    reseed(1011);
    // nbar = 1, B = 0: G_0 = D exactly on noiseless data
    MatrixXd d(1, 1);
    d << -0.37;
    LtiModel m = make_lti(0.5 * MatrixXd::Identity(2, 2), MatrixXd::Zero(2, 1),
                          MatrixXd::Ones(1, 2), d, MatrixXd::Zero(2, 2),
                          MatrixXd::Zero(1, 1));
    Dataset data = gaussian_input_record(m, 20, 14, /*stochastic=*/false);
    MarkovSequence est = ls_markov_subtraj(data, 1);
    EXPECT_NEAR(est.blocks[0](0, 0), -0.37, 1e-12);
}

TEST(SubtrajLs, UnderdeterminationBoundEnforced) {
    reseed(1012);
    LtiModel m = make_lti(0.5 * MatrixXd::Identity(2, 2), MatrixXd::Ones(2, 3),
                          MatrixXd::Ones(1, 2), MatrixXd::Zero(1, 3),
                          MatrixXd::Zero(2, 2), MatrixXd::Zero(1, 1));
    Dataset data = gaussian_input_record(m, 30, 15, /*stochastic=*/false);
    // requires nbar < (n+1)/du = 30/3 = 10
    EXPECT_NO_THROW(ls_markov_subtraj(data, 9));
    EXPECT_THROW(ls_markov_subtraj(data, 10), PreconditionError);
}

TEST(SubtrajGls, IdentityLambdaMatchesLs) {
    reseed(1013);
    std::mt19937_64 rng(16);
    LtiModel m = make_lti(MatrixXd::Identity(3, 3), MatrixXd::Random(3, 2),
                          MatrixXd::Random(2, 3), MatrixXd::Random(2, 2),
                          0.04 * MatrixXd::Identity(3, 3),
                          0.04 * MatrixXd::Identity(2, 2));
    Dataset data = gaussian_input_record(m, 60, 17, /*stochastic=*/true);
    LambdaBlocks identity_lambda;
    identity_lambda.has_offdiag = false;
    identity_lambda.diag.assign(60, MatrixXd(MatrixXd::Identity(2, 2)));
    MarkovSequence ls = ls_markov_subtraj(data, 8);
    MarkovSequence gls = gls_markov_subtraj(data, 8, identity_lambda);
    EXPECT_LT(markov_error(ls, gls), 1e-12);
}

TEST(SubtrajGls, NoiselessDataExactRecovery) {
    reseed(1014);
    MatrixXd a = MatrixXd::Zero(2, 2);
    a(0, 1) = 1.0;  // nilpotent: no truncation bias for nbar >= 3
    LtiModel m = make_lti(a, MatrixXd::Random(2, 1), MatrixXd::Random(1, 2),
                          MatrixXd::Random(1, 1), MatrixXd::Zero(2, 2),
                          MatrixXd::Zero(1, 1));
    Dataset data = gaussian_input_record(m, 60, 18, /*stochastic=*/false);
    LambdaBlocks lambda;
    lambda.has_offdiag = false;
    lambda.diag.assign(60, MatrixXd(2.0 * MatrixXd::Identity(1, 1)));
    MarkovSequence gls = gls_markov_subtraj(data, 5, lambda);
    MarkovSequence ls = ls_markov_subtraj(data, 5);
    MarkovSequence truth = markov_from_statespace(m, 4);
    EXPECT_LT(markov_error(gls, truth), 1e-10);
    EXPECT_LT(markov_error(ls, truth), 1e-10);
}

TEST(Prop2, FirSystemMleRestrictedEqualsSubtrajLs) {
    reseed(1015);
    // A^3 = 0, Sigma = 0, Gamma = c I: Lambda_k = c I for all k. Restricting
    // the MLE to the retained outputs and nbar unknowns reproduces the
    // subtrajectory estimator.
    MatrixXd a = MatrixXd::Zero(3, 3);
    a(0, 1) = 0.7;
    a(1, 2) = -0.4;
    LtiModel m = make_lti(a, MatrixXd::Random(3, 2), MatrixXd::Random(2, 3),
                          MatrixXd::Random(2, 2), MatrixXd::Zero(3, 3),
                          MatrixXd(0.09 * MatrixXd::Identity(2, 2)));
    const Eigen::Index nbar = 4;
    Dataset data = gaussian_input_record(m, 24, 19, /*stochastic=*/true);
    LambdaBlocks lambda = build_lambda(m, 23);
    MleMarkovOptions opts;
    opts.first_output = nbar;
    opts.n_blocks = nbar;
    MarkovSequence restricted = mle_markov(data, lambda, opts);
    MarkovSequence subtraj = ls_markov_subtraj(data, nbar);
    EXPECT_LT(markov_error(restricted, subtraj), 1e-10);
}

TEST(Prop3, ObjectiveGapDecaysAtSpectralRadiusRate) {
    reseed(1016);
    // rho(A) = 0.8; the truncation-tail energy sum_k ||sum_{i>=nbar} G_i u_{k-i}||^2
    // decays with successive ratios bounded by rho + 0.05 for nbar in [10, 25].
    std::mt19937_64 rng(21);
    MatrixXd a = MatrixXd::Random(3, 3);
    a *= 0.8 / spectral_radius(a);
    LtiModel m = make_lti(a, MatrixXd::Random(3, 1), MatrixXd::Random(1, 3),
                          MatrixXd::Random(1, 1), MatrixXd::Zero(3, 3),
                          MatrixXd::Identity(1, 1));
    const Eigen::Index n = 400;
    Dataset data = gaussian_input_record(m, n + 1, 22, /*stochastic=*/false);
    MarkovSequence truth = markov_from_statespace(m, n);

    auto gap = [&](Eigen::Index nbar) {
        double acc = 0.0;
        for (Eigen::Index k = nbar; k <= n; ++k) {
            VectorXd tail = VectorXd::Zero(1);
            for (Eigen::Index i = nbar; i <= k; ++i)
                tail += truth.blocks[static_cast<size_t>(i)] *
                        data.inputs[static_cast<size_t>(k - i)];
            acc += tail.squaredNorm();
        }
        return acc;
    };
    double prev = gap(10);
    for (Eigen::Index nbar = 11; nbar <= 25; ++nbar) {
        const double cur = gap(nbar);
        EXPECT_LT(cur / prev, 0.8 + 0.05) << "nbar " << nbar;
        prev = cur;
    }
}

TEST(MarkovError, KnownValues) {
    reseed(1017);
    MarkovSequence a, b;
    a.blocks = {MatrixXd::Constant(1, 1, 1.0), MatrixXd::Constant(1, 1, 2.0)};
    b.blocks = {MatrixXd::Constant(1, 1, 1.0), MatrixXd::Constant(1, 1, 2.0)};
    EXPECT_EQ(markov_error(a, b), 0.0);

    b.blocks[1](0, 0) = 2.3;
    EXPECT_NEAR(markov_error(a, b), 0.3, 1e-14);

    // blocks differing by (3, 4): spectral norm of a 1x2 matrix is 5
    MarkovSequence c, d;
    c.blocks = {MatrixXd::Constant(1, 1, 3.0), MatrixXd::Constant(1, 1, 4.0)};
    d.blocks = {MatrixXd::Zero(1, 1), MatrixXd::Zero(1, 1)};
    EXPECT_NEAR(markov_error(c, d), 5.0, 1e-13);

    MarkovSequence e;
    e.blocks = {MatrixXd::Zero(1, 1)};
    EXPECT_THROW(markov_error(c, e), PreconditionError);
}

TEST(MarkovSequence, JsonRoundTrip) {
    reseed(1018);
    MarkovSequence seq;
    seq.blocks = {MatrixXd::Random(2, 3), MatrixXd::Random(2, 3)};
    seq.warnings = {"example"};
    MarkovSequence back = MarkovSequence::from_json(seq.to_json());
    EXPECT_LT(markov_error(seq, back), 1e-16);
    EXPECT_EQ(back.warnings, seq.warnings);
}
