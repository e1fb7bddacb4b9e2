#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "hsaffine/converge.hpp"

using namespace hsaffine;

namespace {

SymOpd embed(Eigen::Index D, const SymOpd& small) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(D, D);
    m.topLeftCorner(small.dim(), small.dim()) = small.matrix();
    return SymOpd::from_upper(m);
}

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

std::vector<Eigen::Index> range(Eigen::Index lo, Eigen::Index hi) {
    std::vector<Eigen::Index> v;
    for (Eigen::Index d = lo; d <= hi; ++d) v.push_back(d);
    return v;
}

}  // namespace

TEST(Sweep, BlockSupportedParametersHaveNoError) {
    const Eigen::Index D = 5, d0 = 2;
    const AdmissibleParameters p = block_instance(D, d0, 4);
    const SymOpd u = embed(D, random_psd(d0, 2, 1.0, 4));
    SweepOptions o;
    o.h = 1e-2;
    const SweepResult r = sweep(p, u, embed(D, SymOpd::identity(d0)), 1.0, range(d0, D), D, o);
    ASSERT_EQ(r.levels.size(), 4u);
    for (const auto& L : r.levels) {
        EXPECT_EQ(L.galerkin_error, 0.0);
        EXPECT_EQ(L.laplace_gap, 0.0);
        EXPECT_EQ(L.bound, 0.0);
    }
    EXPECT_TRUE(std::isnan(r.decay_exponent));
}

TEST(Sweep, GenericInstanceBoundsAndGaps) {
    const Eigen::Index D = 8;
    const AdmissibleParameters p = build_generic_example(D, default_generic_inputs(D));
    const SymOpd u = 0.5 * SymOpd::identity(D), x0 = 0.5 * SymOpd::identity(D);
    SweepOptions o;
    o.h = 1e-2;
    o.weights = WeightModeld::linear(D);
    const SweepResult r = sweep(p, u, x0, 1.0, range(1, D), D, o);
    ASSERT_EQ(r.levels.size(), static_cast<std::size_t>(D));
    EXPECT_EQ(r.d_ref, D);
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& L : r.levels) {
        EXPECT_LE(L.galerkin_error, L.bound + 10.0 * L.step_doubling_estimate) << "d=" << L.d;
        EXPECT_LE(L.laplace_gap, L.laplace_gap_bound + 1e-15) << "d=" << L.d;
        EXPECT_LE(L.galerkin_error, L.phi_gap + L.psi_gap + 1e-15);
        EXPECT_LE(L.galerkin_error, prev);
        EXPECT_FALSE(std::isnan(L.vnorm_rate));
        EXPECT_TRUE(std::isnan(L.mc_max_abs_z));
        prev = L.galerkin_error;
    }
    EXPECT_EQ(r.levels.back().galerkin_error, 0.0);
    EXPECT_TRUE(std::isfinite(r.decay_exponent));
    EXPECT_GT(r.decay_exponent, 0.0);
}

TEST(Sweep, VnormRateDominatesOnUnitBall) {
    const Eigen::Index D = 6;
    const AdmissibleParameters p = build_generic_example(D, default_generic_inputs(D));
    const WeightModeld w = WeightModeld::linear(D);
    SymOpd u = SymOpd::identity(D);
    u = (1.0 / vnorm(u, w)) * u;
    SweepOptions o;
    o.h = 1e-2;
    o.weights = w;
    const SweepResult r = sweep(p, u, SymOpd::zero(D), 1.0, range(1, D - 1), D, o);
    for (const auto& L : r.levels) EXPECT_LE(L.galerkin_error, L.vnorm_rate) << "d=" << L.d;
}

TEST(Sweep, MonteCarloFields) {
    const Eigen::Index D = 4;
    const AdmissibleParameters p = build_generic_example(D, default_generic_inputs(D));
    SweepOptions o;
    o.h = 1e-2;
    o.mc = SweepMonteCarlo{};
    o.mc->n_paths = 1000;
    o.mc->seed = 8;
    const SweepResult r = sweep(p, 0.5 * SymOpd::identity(D), 0.5 * SymOpd::identity(D), 1.0, {1, D}, D, o);
    // The rank-1 process has a visibly different Laplace transform; the full rank agrees.
    EXPECT_GT(r.levels[0].mc_max_abs_z, 5.0);
    EXPECT_LE(r.levels[1].mc_max_abs_z, 4.0);
    EXPECT_GE(r.levels[1].mc_fraction_within_3, 2.0 / 3.0);
}

TEST(Sweep, InputErrors) {
    const AdmissibleParameters p = build_generic_example(3, default_generic_inputs(3));
    const SymOpd u = SymOpd::identity(3);
    EXPECT_THROW(sweep(p, u, SymOpd::zero(3), 1.0, {4}, 3), LevelOutOfRange);
    EXPECT_THROW(sweep(p, u, SymOpd::zero(3), 1.0, {1}, 4), LevelOutOfRange);
    EXPECT_THROW(sweep(p, u, SymOpd::zero(3), -1.0, {1}, 3), InvalidInput);
    EXPECT_THROW(sweep(p, SymOpd::identity(2), SymOpd::zero(3), 1.0, {1}, 3), DimensionMismatch);
}

TEST(Sweep, SerializationShapes) {
    const AdmissibleParameters p = build_generic_example(3, default_generic_inputs(3));
    SweepOptions o;
    o.h = 1e-2;
    const SweepResult r = sweep(p, SymOpd::identity(3), SymOpd::zero(3), 0.5, {1, 2, 3}, 3, o);
    const nlohmann::json j = r.to_json();
    EXPECT_EQ(j["d_ref"], 3);
    EXPECT_EQ(j["levels"].size(), 3u);
    std::ostringstream os;
    r.write_csv(os);
    const std::string s = os.str();
    EXPECT_EQ(s.substr(0, s.find('\n')),
              "d,galerkin_error,step_doubling_estimate,phi_gap,psi_gap,C_Td,K,bound,vnorm_rate,laplace_gap,"
              "laplace_gap_bound,mc_max_abs_z,mc_fraction_within_3");
    EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 4);
}

TEST(Variation, ZeroInnerProductGivesZeros) {
    const VariationReport r = infinite_variation_diagnostic({10, 100}, 0.0, [](long long n) { return 1.0 / n; });
    for (const auto& row : r.rows) {
        EXPECT_EQ(row.V, 0.0);
        EXPECT_EQ(row.S, 0.0);
        EXPECT_EQ(row.tail, 0.0);
    }
}

TEST(Variation, HarmonicGrowthAndSummableTail) {
    const VariationReport r =
        infinite_variation_diagnostic({10, 100, 1000, 10000, 100000}, 1.0, [](long long n) { return 1.0 / n; });
    ASSERT_EQ(r.rows.size(), 5u);
    const VariationRow& last = r.rows.back();
    EXPECT_NEAR(last.V_over_logD, 1.0, 0.1);
    double harmonic = 0.0;
    for (long long n = 1; n <= 100000; ++n) harmonic += 1.0 / static_cast<double>(n);
    EXPECT_NEAR(last.V, harmonic, 1e-9);
    EXPECT_NEAR(last.S, M_PI * M_PI / 6.0, 1e-4);
    EXPECT_LT(last.tail, 1e-4);
    for (std::size_t k = 1; k < r.rows.size(); ++k) {
        EXPECT_GT(r.rows[k].V, r.rows[k - 1].V);
        EXPECT_LT(r.rows[k].tail, r.rows[k - 1].tail);
    }
}

TEST(Variation, OperatorForm) {
    const Eigen::Index D = 5;
    Eigen::VectorXd diag(D);
    for (Eigen::Index i = 0; i < D; ++i) diag(i) = 1.0 / static_cast<double>(i + 1);
    const SymOpd u = SymOpd::from_upper(diag.asDiagonal().toDenseMatrix());
    const SymOpd x = 2.0 * SymOpd::basis(D, 0, 0), g = SymOpd::basis(D, 0, 0);
    const VariationReport a = infinite_variation_diagnostic({3, 5}, x, g, u);
    const VariationReport b = infinite_variation_diagnostic({3, 5}, 2.0, [&](long long n) { return n <= D ? 1.0 / n : 0.0; });
    EXPECT_EQ(a.xg, 2.0);
    for (std::size_t k = 0; k < 2; ++k) {
        EXPECT_EQ(a.rows[k].S, b.rows[k].S);
        EXPECT_EQ(a.rows[k].tail, b.rows[k].tail);
    }
    EXPECT_EQ(a.to_json()["rows"].size(), 2u);
    EXPECT_THROW(infinite_variation_diagnostic({0}, 1.0, [](long long) { return 1.0; }), InvalidInput);
}
