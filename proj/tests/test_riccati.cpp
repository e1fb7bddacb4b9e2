#include <gtest/gtest.h>

#include "hsaffine/riccati.hpp"
#include "hsaffine/rng.hpp"

using namespace hsaffine;

namespace {

SymOpd e(Eigen::Index D, Eigen::Index i) { return SymOpd::basis(D, i, i); }

SymOpd embed(Eigen::Index D, const SymOpd& small) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(D, D);
    m.topLeftCorner(small.dim(), small.dim()) = small.matrix();
    return SymOpd::from_upper(m);
}

AdmissibleParameters scalar_linear(double beta, double b0) {
    return make_parameters(b0 * e(1, 0), LinearDriftd::structured(Eigen::MatrixXd::Constant(1, 1, beta / 2)), {}, {});
}

AdmissibleParameters cir_type() {
    GenericExampleInputs in;
    in.eta = {{{0.5, 0.4}, {1.5, 0.3}}};
    in.mu = {{{0.6, 0.5}, {1.4, 0.2}}};
    in.g = {e(1, 0)};
    in.b_tilde = 0.2 * e(1, 0);
    in.C = Eigen::MatrixXd::Constant(1, 1, -0.3);
    return build_generic_example(1, in);
}

// Supported on the leading d0 x d0 block: b, C, couplings and every atom.
AdmissibleParameters block_instance(Eigen::Index D, Eigen::Index d0, std::uint64_t seed) {
    const AdmissibleParameters small = random_admissible(d0, seed);
    AtomicMeasure m;
    for (const auto& a : small.m.atoms) m.atoms.push_back({embed(D, a.xi), a.w});
    OperatorValuedMeasure mu;
    for (const auto& a : small.mu.atoms) mu.atoms.push_back({embed(D, a.xi), embed(D, a.G)});
    const auto* s = small.B.as_structured();
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(D, D);
    C.topLeftCorner(d0, d0) = s->C;
    std::vector<Coupling<double>> cs;
    for (const auto& c : s->couplings) cs.push_back({embed(D, c.A), embed(D, c.H)});
    return make_parameters(embed(D, small.b), LinearDriftd::structured(C, cs), m, mu);
}

}  // namespace

TEST(EvalF, ZeroArgument) { EXPECT_EQ(eval_F(random_admissible(3, 1), SymOpd::zero(3)), 0.0); }

TEST(EvalF, PureInnerProduct) {
    const AdmissibleParameters p =
        make_parameters(SymOpd::from_upper(Eigen::Vector2d(1, 0).asDiagonal().toDenseMatrix()), LinearDriftd::zero(2), {}, {});
    EXPECT_DOUBLE_EQ(eval_F(p, SymOpd::from_upper(Eigen::Vector2d(2, 3).asDiagonal().toDenseMatrix())), 2.0);
}

TEST(EvalF, SingleBoundaryAtom) {
    AtomicMeasure m;
    m.atoms.push_back({e(1, 0), 1.0});
    const AdmissibleParameters p = make_parameters(e(1, 0), LinearDriftd::zero(1), m, {});
    EXPECT_NEAR(eval_F(p, e(1, 0)), 1.0 - std::exp(-1.0), 1e-15);
}

TEST(EvalR, ZeroArgument) { EXPECT_EQ(eval_R(random_admissible(3, 2), SymOpd::zero(3)), SymOpd::zero(3)); }

TEST(EvalR, CompensatedSmallAtom) {
    const Eigen::Index D = 2;
    const SymOpd g = e(D, 0) + 0.5 * e(D, 1);
    GenericExampleInputs in;
    in.mu = {{{1.0, 1.0}}};
    in.g = {g};
    const AdmissibleParameters p = build_generic_example(D, in);
    const SymOpd u = e(D, 0) + 0.3 * e(D, 1);
    EXPECT_LE((eval_R(p, u) - (1.0 - std::exp(-1.0)) * g).norm(), 1e-15);
}

TEST(EvalRd, EquivalenceOnRandomInstances) {
    for (int k = 0; k < 60; ++k) {
        const Eigen::Index D = 2 + k % 7;
        const auto seed = static_cast<std::uint64_t>(40 + k);
        const AdmissibleParameters p = random_admissible(D, seed);
        for (Eigen::Index d = 1; d <= D; ++d) {
            const ProjectedParameters pp = project_params(p, d);
            const SymOpd u = project(d, random_psd(D, 2, 1.5, seed, static_cast<std::uint64_t>(d)));
            EXPECT_NEAR(eval_F_d(pp, u), eval_F(p, u), 1e-11);
            EXPECT_LE((eval_R_d(pp, u) - project(d, eval_R(p, u))).norm(), 1e-11);
        }
    }
}

TEST(EvalRd, RejectsUnsupportedOperand) {
    const ProjectedParameters pp = project_params(random_admissible(3, 3), 1);
    EXPECT_THROW(eval_R_d(pp, SymOpd::identity(3)), SupportViolation);
    EXPECT_THROW(eval_F_d(pp, SymOpd::identity(3)), SupportViolation);
}

TEST(SolveRiccati, ZeroParametersKeepU) {
    const SymOpd u = random_psd(3, 2, 1.0, 5);
    const RiccatiSolution s = solve_riccati(zero_parameters(3), 3, u, 1.0, 1e-2);
    ASSERT_EQ(s.t.size(), 101u);
    EXPECT_EQ(s.t.back(), 1.0);
    for (std::size_t k = 0; k < s.t.size(); ++k) {
        EXPECT_EQ(s.phi[k], 0.0);
        EXPECT_EQ(s.psi[k], u);
    }
}

TEST(SolveRiccati, ScalarLinearClosedForm) {
    const double beta = 0.7, b0 = 1.3;
    const SymOpd u = 0.8 * e(1, 0);
    const RiccatiSolution s = solve_riccati(scalar_linear(beta, b0), 1, u, 1.0, 1e-3);
    double worst = 0.0;
    for (std::size_t k = 0; k < s.t.size(); ++k) {
        const double t = s.t[k];
        worst = std::max(worst, std::abs(s.psi[k](0, 0) - std::exp(beta * t) * 0.8));
        worst = std::max(worst, std::abs(s.phi[k] - b0 * 0.8 * std::expm1(beta * t) / beta));
    }
    EXPECT_LE(worst, 1e-12);
}

TEST(SolveRiccati, CirTypeAgainstRichardsonOracle) {
    const AdmissibleParameters p = cir_type();
    const SymOpd u = 1.7 * e(1, 0);
    const RiccatiSolution s = solve_riccati(p, 1, u, 1.0, 1e-3);
    // Richardson-extrapolated RK4 at finer steps; refine until successive values agree to 1e-12.
    std::vector<double> prev;
    std::vector<double> oracle_phi, oracle_psi;
    for (std::size_t factor = 8;; factor *= 2) {
        const RiccatiSolution a = solve_riccati(p, 1, u, 1.0, 1e-3 / static_cast<double>(factor));
        const RiccatiSolution b = solve_riccati(p, 1, u, 1.0, 0.5e-3 / static_cast<double>(factor));
        std::vector<double> cur;
        oracle_phi.clear();
        oracle_psi.clear();
        for (std::size_t k = 0; k < s.t.size(); ++k) {
            oracle_phi.push_back((16.0 * b.phi[2 * factor * k] - a.phi[factor * k]) / 15.0);
            oracle_psi.push_back((16.0 * b.psi[2 * factor * k](0, 0) - a.psi[factor * k](0, 0)) / 15.0);
            cur.push_back(oracle_phi.back() + oracle_psi.back());
        }
        double diff = prev.empty() ? 1.0 : 0.0;
        for (std::size_t k = 0; k < cur.size() && !prev.empty(); ++k) diff = std::max(diff, std::abs(cur[k] - prev[k]));
        prev = cur;
        if (diff <= 1e-12 || factor >= 64) break;
    }
    double worst = 0.0;
    for (std::size_t k = 0; k < s.t.size(); ++k)
        worst = std::max(worst, std::abs(s.phi[k] - oracle_phi[k]) + std::abs(s.psi[k](0, 0) - oracle_psi[k]));
    EXPECT_LE(worst, 1e-8);
}

TEST(SolveRiccati, StepCountAndDoubling) {
    const AdmissibleParameters p = random_admissible(3, 8);
    const RiccatiSolution s = solve_riccati(p, 3, random_psd(3, 3, 1.0, 8), 1.0, 0.3, {kDefaultClampTol, true});
    EXPECT_EQ(s.t.size(), 5u);
    EXPECT_NEAR(s.h, 0.25, 1e-15);
    EXPECT_GT(s.step_doubling_estimate, 0.0);
    EXPECT_TRUE(std::isnan(solve_riccati(p, 3, SymOpd::identity(3), 1.0, 0.1).step_doubling_estimate));
}

TEST(SolveRiccati, StepDoublingTracksTrueError) {
    const AdmissibleParameters p = random_admissible(4, 12);
    const SymOpd u = random_psd(4, 4, 2.0, 12);
    const RiccatiSolution coarse = solve_riccati(p, 4, u, 1.0, 0.05, {kDefaultClampTol, true});
    const RiccatiSolution fine = solve_riccati(p, 4, u, 1.0, 0.05 / 64);
    double err = 0.0;
    for (std::size_t k = 0; k < coarse.t.size(); ++k)
        err = std::max(err, std::abs(coarse.phi[k] - fine.phi[64 * k]) + (coarse.psi[k] - fine.psi[64 * k]).norm());
    EXPECT_GT(coarse.step_doubling_estimate, 0.5 * err);
    EXPECT_LT(coarse.step_doubling_estimate, 2.0 * err);
}

TEST(SolveRiccati, InputErrors) {
    const AdmissibleParameters p = zero_parameters(2);
    EXPECT_THROW(solve_riccati(p, 2, -1.0 * SymOpd::identity(2), 1.0, 0.1), InvalidInput);
    EXPECT_THROW(solve_riccati(p, 2, SymOpd::identity(2), 0.0, 0.1), InvalidInput);
    EXPECT_THROW(solve_riccati(p, 2, SymOpd::identity(2), 1.0, -0.1), InvalidInput);
    EXPECT_THROW(solve_riccati(p, 3, SymOpd::identity(2), 1.0, 0.1), LevelOutOfRange);
    EXPECT_THROW(solve_riccati(p, 2, SymOpd::identity(3), 1.0, 0.1), DimensionMismatch);
}

TEST(SolveRiccati, ConeAndSupportInvariance) {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        const Eigen::Index D = 2 + seed % 5;
        const AdmissibleParameters p = random_admissible(D, seed);
        const SymOpd u = random_psd(D, 1, 2.0, seed, 4);
        for (Eigen::Index d = 1; d <= D; ++d) {
            const RiccatiSolution s = solve_riccati(p, d, u, 1.0, 1e-2);
            for (const auto& psi : s.psi) {
                EXPECT_TRUE(is_supported_on(d, psi));
                EXPECT_GE(min_eigenvalue(psi), -1e-9);
            }
        }
    }
}

TEST(SolveRiccati, PhiNondecreasingAndPsiDecaysForStableDrift) {
    const AdmissibleParameters p = build_generic_example(3, default_generic_inputs(3));
    const RiccatiSolution s = solve_riccati(p, 3, SymOpd::identity(3), 1.0, 1e-3);
    for (std::size_t k = 1; k < s.t.size(); ++k) EXPECT_GE(s.phi[k], s.phi[k - 1] - 1e-15);
}

TEST(GalerkinError, ZeroAtReferenceLevel) {
    const AdmissibleParameters p = random_admissible(4, 2);
    EXPECT_EQ(galerkin_error(p, SymOpd::identity(4), 1.0, 4, 4, 1e-2), 0.0);
}

TEST(GalerkinError, ExactForBlockSupportedParameters) {
    const AdmissibleParameters p = block_instance(5, 2, 3);
    const SymOpd u = embed(5, random_psd(2, 2, 1.0, 3));
    for (Eigen::Index d = 2; d <= 5; ++d) {
        for (Eigen::Index dr = d; dr <= 5; ++dr) EXPECT_EQ(galerkin_error(p, u, 1.0, d, dr, 1e-2), 0.0);
        EXPECT_EQ(error_bound(p, u, 1.0, d, u.norm()).C_Td, 0.0);
        EXPECT_EQ(error_bound(p, u, 1.0, d, u.norm()).bound, 0.0);
    }
}

TEST(GalerkinError, NonincreasingOnGenericInstance) {
    const AdmissibleParameters p = build_generic_example(16, default_generic_inputs(16));
    const SymOpd u = 0.5 * SymOpd::identity(16);
    const RiccatiSolution ref = solve_riccati(p, 16, u, 1.0, 1e-2);
    double prev = std::numeric_limits<double>::infinity();
    for (Eigen::Index d : {1, 2, 4, 8}) {
        const double err = compare_solutions(solve_riccati(p, d, u, 1.0, 1e-2), ref).error;
        EXPECT_LE(err, prev);
        EXPECT_GT(err, 0.0);
        prev = err;
    }
}

TEST(ErrorBound, DriftFreeTailConstant) {
    const Eigen::Index D = 4;
    OperatorValuedMeasure mu;
    mu.atoms.push_back({1.5 * e(D, 3), random_psd(D, 2, 0.4, 1)});
    mu.atoms.push_back({2.0 * e(D, 2), random_psd(D, 1, 0.3, 2)});
    const AdmissibleParameters p = make_parameters(SymOpd::identity(D), LinearDriftd::zero(D), {}, mu);
    const SymOpd u = random_psd(D, 3, 1.0, 3);
    for (Eigen::Index d = 1; d < D; ++d) {
        const double want = project_perp(d, u).norm() + project_perp(d, p.mu.total_mass(D)).norm();
        EXPECT_NEAR(error_bound(p, u, 1.0, d, u.norm()).C_Td, want, 1e-14);
    }
}

TEST(ErrorBound, ConstantsFollowDefinitions) {
    const AdmissibleParameters p = random_admissible(3, 5);
    const SymOpd u = random_psd(3, 3, 1.0, 5);
    const double M = 1.5;
    const ErrorBound b = error_bound(p, u, 2.0, 1, M);
    EXPECT_NEAR(b.H_M, M * std::exp((b.norm_B + 2 * b.norm_mu) * 2.0), 1e-12 * b.H_M);
    EXPECT_NEAR(b.K, std::exp(b.L1 * 2.0) * (1 + b.L2 * 2.0) * (1 + 2.0 * b.H_M * b.H_M), 1e-12 * b.K);
    EXPECT_NEAR(b.bound, b.K * b.C_Td, 1e-12 * b.bound);
    EXPECT_THROW(error_bound(p, u, 1.0, 1, 0.5), InvalidInput);
}

TEST(ErrorBound, TailConstantMonotoneInLevel) {
    for (std::uint64_t s = 1; s <= 5; ++s) {
        const AdmissibleParameters p = random_admissible(6, s);
        const SymOpd u = random_psd(6, 6, 1.0, s);
        double prev = std::numeric_limits<double>::infinity();
        for (Eigen::Index d = 1; d <= 6; ++d) {
            const double c = tail_constant(p, u, 1.0, d);
            EXPECT_LE(c, prev + 1e-15);
            prev = c;
        }
        EXPECT_EQ(prev, 0.0);
    }
}

TEST(ErrorBound, DominatesGalerkinError) {
    for (std::uint64_t s = 1; s <= 8; ++s) {
        const Eigen::Index D = 3 + s % 4;
        const AdmissibleParameters p = random_admissible(D, 70 + s);
        const SymOpd u = random_psd(D, D, 1.0, s, 2);
        for (Eigen::Index d = 1; d < D; ++d) {
            const GalerkinErrorDetail g = galerkin_error_detail(p, u, 1.0, d, D, 1e-2, {kDefaultClampTol, true});
            EXPECT_LE(g.error, error_bound(p, u, 1.0, d, u.norm()).bound + 10 * g.step_doubling_estimate);
        }
    }
}

TEST(VnormRate, ZeroAtFullLevelAndScalesWithWeights) {
    const AdmissibleParameters p = random_admissible(12, 4);
    const WeightModeld w = WeightModeld::linear(12);
    EXPECT_EQ(vnorm_rate(p, 1.0, 12, w), 0.0);
    EXPECT_NEAR(vnorm_rate(p, 1.0, 9, w), 0.1 * vnorm_rate_constant(p, 1.0, w), 1e-12 * vnorm_rate_constant(p, 1.0, w));
}

TEST(VnormRate, DominatesErrorOnUnitVBall) {
    for (std::uint64_t s = 1; s <= 4; ++s) {
        const Eigen::Index D = 4;
        const AdmissibleParameters p = random_admissible(D, 90 + s);
        const WeightModeld w = WeightModeld::linear(D);
        for (std::uint64_t k = 0; k < 5; ++k) {
            SymOpd u = random_psd(D, 1 + k % 3, 1.0, s, 10 + k);
            u = u / vnorm(u, w);
            for (Eigen::Index d = 1; d < D; ++d)
                EXPECT_LE(galerkin_error(p, u, 1.0, d, D, 1e-2), vnorm_rate(p, 1.0, d, w));
        }
    }
}

TEST(FlowCheck, ZeroParameters) {
    EXPECT_EQ(flow_check(zero_parameters(3), 3, SymOpd::identity(3), 0.3, 0.7, 1e-3), 0.0);
}

TEST(FlowCheck, LinearOnly) {
    StreamRng rng(3);
    Eigen::MatrixXd C(4, 4);
    for (Eigen::Index j = 0; j < 4; ++j)
        for (Eigen::Index i = 0; i < 4; ++i) C(i, j) = 0.5 * rng.normal();
    const AdmissibleParameters p = make_parameters(0.3 * SymOpd::identity(4), LinearDriftd::structured(C), {}, {});
    EXPECT_LE(flow_check(p, 4, random_psd(4, 4, 1.0, 3), 0.25, 0.75, 1e-3), 1e-9);
    // Grids that do not line up still agree to the RK4 composition error.
    EXPECT_LE(flow_check(p, 4, random_psd(4, 4, 1.0, 3), 0.3337, 0.5, 1e-3), 1e-9);
}

TEST(FlowCheck, GenericInstance) {
    const AdmissibleParameters p = build_generic_example(4, default_generic_inputs(4));
    for (Eigen::Index d = 1; d <= 4; ++d) EXPECT_LE(flow_check(p, d, SymOpd::identity(4), 0.5, 0.5, 1e-3), 1e-7);
    EXPECT_LE(flow_check(p, 4, SymOpd::identity(4), 0.3337, 0.6, 1e-3), 1e-7);
}
