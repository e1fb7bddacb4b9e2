#ifndef HSAFFINE_CONVERGE_HPP
#define HSAFFINE_CONVERGE_HPP

#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <vector>

#include <json.hpp>

#include "hsaffine/riccati.hpp"
#include "hsaffine/simulate.hpp"
#include "hsaffine/weights.hpp"

namespace hsaffine {

struct SweepMonteCarlo {
    std::size_t n_paths = 2000;
    std::uint64_t seed = 0;
    std::vector<double> times;  // empty: {T/4, T/2, T}
    MonteCarloOptions options;
};

struct SweepOptions {
    double h = 1e-3;
    double clamp_tol = kDefaultClampTol;
    int workers = 1;
    /// M in the error bound; defaults to ||u||.
    std::optional<double> M;
    std::optional<WeightModeld> weights;
    std::optional<SweepMonteCarlo> mc;
};

struct SweepLevel {
    Eigen::Index d = 0;
    /// Surrogate limit error sup_t |phi_d - phi_ref| + ||psi_d - psi_ref||.
    double galerkin_error = 0.0;
    double step_doubling_estimate = 0.0;
    double phi_gap = 0.0;
    double psi_gap = 0.0;
    double C_Td = 0.0;
    double K = 0.0;
    double bound = 0.0;
    double vnorm_rate = std::numeric_limits<double>::quiet_NaN();
    /// sup over the grid of |exp(-phi_d - <x0, psi_d>) - exp(-phi_ref - <x0, psi_ref>)|.
    double laplace_gap = 0.0;
    double laplace_gap_bound = 0.0;  // phi_gap + ||x0|| psi_gap
    double mc_max_abs_z = std::numeric_limits<double>::quiet_NaN();
    double mc_fraction_within_3 = std::numeric_limits<double>::quiet_NaN();
};

struct SweepResult {
    Eigen::Index d_ref = 0;
    double T = 0.0;
    std::vector<SweepLevel> levels;
    /// Least-squares slope of log(error) against log(1 / a_{d+1}) (a_n = n without weights);
    /// NaN when fewer than two levels have error above 100 machine epsilon.
    double decay_exponent = std::numeric_limits<double>::quiet_NaN();

    nlohmann::json to_json() const;
    void write_csv(std::ostream& os) const;
};

SweepResult sweep(const AdmissibleParameters& p, const SymOpd& u, const SymOpd& x0, double T,
                  const std::vector<Eigen::Index>& levels, Eigen::Index d_ref, const SweepOptions& opts = {});

struct VariationRow {
    long long D = 0;
    double V = 0.0;          // <x,g> H_D
    double V_over_logD = 0.0;
    double S = 0.0;          // <x,g> sum_{n <= D} u_nn / n
    double S_2D = 0.0;
    double tail = 0.0;       // |S_2D - S_D|
};

struct VariationReport {
    double xg = 0.0;
    std::vector<VariationRow> rows;
    nlohmann::json to_json() const;
};

/// Partial sums for the infinite-aggregate-variation example, with u_nn given as a function of n >= 1.
VariationReport infinite_variation_diagnostic(const std::vector<long long>& D_list, double xg,
                                              const std::function<double(long long)>& u_diag);

/// Operator form: <x, g> from x and g, u_nn from u (zero beyond its dimension).
VariationReport infinite_variation_diagnostic(const std::vector<long long>& D_list, const SymOpd& x, const SymOpd& g,
                                              const SymOpd& u);

}  // namespace hsaffine

#endif  // HSAFFINE_CONVERGE_HPP
