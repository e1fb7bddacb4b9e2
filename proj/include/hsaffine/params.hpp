#ifndef HSAFFINE_PARAMS_HPP
#define HSAFFINE_PARAMS_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hsaffine/errors.hpp"
#include "hsaffine/linear_drift.hpp"
#include "hsaffine/sym_op.hpp"

namespace hsaffine {

inline constexpr double kPsdTol = 1e-12;
inline constexpr double kDegenerateAtomNorm = 1e-14;

/// Atomic jump measure m = sum_k w_k delta_{xi_k}.
struct AtomicMeasure {
    struct Atom {
        SymOpd xi;
        double w = 0.0;
    };
    std::vector<Atom> atoms;

    /// sum_k w_k ||xi_k||^2
    double second_moment() const;
};

/// Operator-valued atomic measure mu = sum_k G_k delta_{xi_k}.
struct OperatorValuedMeasure {
    struct Atom {
        SymOpd xi;
        SymOpd G;
    };
    std::vector<Atom> atoms;

    /// mu(H+ \ {0}) = sum_k G_k, or the zero operator of dimension `dim` if empty.
    SymOpd total_mass(Eigen::Index dim) const;
};

struct AdmissibleParameters {
    Eigen::Index dim = 0;
    SymOpd b;
    LinearDriftd B;
    AtomicMeasure m;
    OperatorValuedMeasure mu;
};

/// Checks shapes and the per-atom invariants (PSD, nonzero xi, w >= 0, G PSD).
AdmissibleParameters make_parameters(SymOpd b, LinearDriftd B, AtomicMeasure m, OperatorValuedMeasure mu);

AdmissibleParameters zero_parameters(Eigen::Index dim);

/// Rank-d parameters: all operators live on the leading d x d block at ambient dimension D.
struct ProjectedParameters {
    struct KernelAtom {
        SymOpd zeta;
        SymOpd Gscaled;  // P_d(G) / ||xi||^2 with the original ||xi||
    };

    Eigen::Index d = 0;
    Eigen::Index dim = 0;
    SymOpd b_d;
    LinearDriftd B_d;
    AtomicMeasure m_d;
    OperatorValuedMeasure mu_d;
    std::vector<KernelAtom> M_d_atoms;
    std::size_t dropped_degenerate = 0;
};

SymOpd compute_I_m(const AtomicMeasure& m, Eigen::Index dim);

struct ValidationReport {
    bool valid = true;
    std::string clause;  // "", "i", "ii", "iii" or "iv"
    std::string message;
    double min_eig_b_minus_Im = 0.0;
    double worst_margin = 0.0;
    std::size_t samples = 0;
    std::optional<SymOpd> witness_x;
    std::optional<SymOpd> witness_u;
};

struct ValidationFailed : std::runtime_error {
    explicit ValidationFailed(ValidationReport r)
        : std::runtime_error("admissibility clause (" + r.clause + ") violated: " + r.message), report(std::move(r)) {}
    ValidationReport report;
};

/// <B*(u), x> - sum_k <chi(xi_k), u> <G_k, x> / ||xi_k||^2 for an orthogonal PSD pair.
double orthogonal_pair_margin(const AdmissibleParameters& p, const SymOpd& x, const SymOpd& u);

/// Runs the admissibility checks. Returns the report when every clause holds and
/// throws ValidationFailed with the first violated clause otherwise.
ValidationReport validate_admissible(const AdmissibleParameters& p, int n_samples = 1000, double tol = 1e-9,
                                     std::uint64_t seed = 0);

ProjectedParameters project_params(const AdmissibleParameters& p, Eigen::Index d);

/// <x, G_k> / ||xi_k||^2 per atom.
std::vector<double> kernel_weights(const OperatorValuedMeasure& mu, const SymOpd& x);

/// Jump measure with infinite aggregate variation: mu-atoms (e_nn / n, g / n^2), n = 1..D,
/// and B(x) = <g, x> sum_n e_nn / n, so that B*(u) = (sum_n u_nn / n) g.
AdmissibleParameters build_simple_example(Eigen::Index D, const SymOpd& g);

struct LambdaAtom {
    double lambda = 0.0;
    double weight = 0.0;
};

struct GenericExampleInputs {
    std::vector<std::vector<LambdaAtom>> eta;  // eta[n]: atoms of eta_n on (0, inf)
    SymOpd b_tilde;
    std::vector<SymOpd> g;                      // g[n], PSD
    std::vector<std::vector<LambdaAtom>> mu;    // mu[n]: atoms of mu_n on (0, inf)
    Eigen::MatrixXd C;
};

/// Diagonal-direction example: m-atoms lambda e_nn with weight eta_n{lambda} / lambda^2,
/// mu-atoms (lambda e_nn, g_n mu_n{lambda}), b = b_tilde + I_m and
/// B(u) = C u + u C^T + Gamma(u) with Gamma(x) = sum_n c_n <g_n, x> e_nn,
/// c_n = sum_{lambda <= 1} mu_n{lambda} / lambda.
AdmissibleParameters build_generic_example(Eigen::Index D, const GenericExampleInputs& in);

/// The instance used by the CLI and the acceptance suite.
GenericExampleInputs default_generic_inputs(Eigen::Index D);

struct RandomParamsOptions {
    int m_atoms = 3;
    int mu_atoms = 3;
    int extra_couplings = 1;
    double drift_scale = 0.3;
    double mass_scale = 0.2;
    double b_scale = 0.3;
    double rate_scale = 0.5;
    /// Atoms are drawn with norms in [norm_lo, norm_hi].
    double norm_lo = 0.2;
    double norm_hi = 2.0;
};

/// Random parameters in general position that satisfy every admissibility clause by construction.
AdmissibleParameters random_admissible(Eigen::Index D, std::uint64_t seed, const RandomParamsOptions& opts = {});

/// Random orthogonal matrix (Haar via QR with sign fix).
Eigen::MatrixXd random_orthogonal(Eigen::Index D, std::uint64_t seed, std::uint64_t stream = 0);

/// Random PSD operator with HS norm `norm` and rank <= `rank`.
SymOpd random_psd(Eigen::Index D, Eigen::Index rank, double norm, std::uint64_t seed, std::uint64_t stream = 0);

}  // namespace hsaffine

#endif  // HSAFFINE_PARAMS_HPP
