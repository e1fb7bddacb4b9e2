#ifndef HSAFFINE_SIMULATE_HPP
#define HSAFFINE_SIMULATE_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "hsaffine/params.hpp"

namespace hsaffine {

struct JumpAtom {
    SymOpd zeta;
    double const_rate = 0.0;
    SymOpd state_matrix;  // r(x) = <x, state_matrix>
};

/// Rank-d process written pathwise: an affine drift ODE between jumps and
/// finitely many jump atoms with affine intensities.
///
/// Besides the SymOp interface the system keeps compact coordinates of the
/// leading block (n = d(d+1)/2 orthonormal coordinates) that the simulator
/// uses internally: drift c + L x, intensities w_k + s_k . x, jumps z_k.
class JumpSystem {
public:
    JumpSystem() = default;
    explicit JumpSystem(ProjectedParameters pp);

    Eigen::Index level() const { return pp_.d; }
    Eigen::Index dim() const { return pp_.dim; }
    const ProjectedParameters& projected() const { return pp_; }
    const std::vector<JumpAtom>& atoms() const { return atoms_; }

    /// b_d + B_d(x) - sum_{||zeta_k|| <= 1} zeta_k (w_k + r_k(x))
    SymOpd drift(const SymOpd& x) const;
    double intensity(const SymOpd& x) const;
    std::vector<double> atom_intensities(const SymOpd& x) const;

    Eigen::Index compact_size() const { return coord_count(pp_.d); }
    Eigen::VectorXd to_compact(const SymOpd& x) const;
    SymOpd from_compact(const Eigen::VectorXd& c) const;

    const Eigen::VectorXd& drift_constant() const { return c_; }
    const Eigen::MatrixXd& drift_matrix() const { return L_; }
    const Eigen::VectorXd& const_rates() const { return w_; }
    /// Row k holds s_k.
    const Eigen::MatrixXd& rate_matrix() const { return S_; }
    /// Column k holds z_k.
    const Eigen::MatrixXd& jump_matrix() const { return Z_; }

private:
    ProjectedParameters pp_;
    std::vector<JumpAtom> atoms_;
    Eigen::VectorXd c_;
    Eigen::MatrixXd L_;
    Eigen::VectorXd w_;
    Eigen::MatrixXd S_;
    Eigen::MatrixXd Z_;
};

JumpSystem build_jump_system(const ProjectedParameters& pp);

struct SimulationOptions {
    double ode_h = 0.0;      // <= 0: 1e-3 T
    double lookahead = 0.0;  // <= 0: min(0.1 T, 1 / (1 + Lambda(x0)))
    double clamp_tol = kDefaultClampTol;
    bool record_dense = true;
    /// Times at which the state is always evaluated and stored in output_states.
    std::vector<double> output_times;
};

struct PathRecord {
    std::uint64_t seed = 0;
    std::uint64_t path_index = 0;
    Eigen::Index d = 0;
    Eigen::Index dim = 0;
    std::vector<double> jump_times;
    std::vector<int> jump_atoms;
    std::vector<SymOpd> post_jump_states;

    /// Dense output. Event 0 marks a grid or pre-jump row, event 1 a post-jump row.
    /// States are compact coordinates, `stride` values per row.
    std::vector<double> t;
    std::vector<int> event;
    std::vector<int> atom;
    std::vector<double> states;
    Eigen::Index stride = 0;

    /// Compact states at SimulationOptions::output_times, `stride` values per time,
    /// and the matching dense rows when dense output is on.
    std::vector<double> output_states;
    std::vector<std::size_t> output_rows;

    SymOpd final_state;
    std::size_t window_restarts = 0;

    std::size_t rows() const { return t.size(); }
    Eigen::Map<const Eigen::VectorXd> compact_state(std::size_t row) const {
        return {states.data() + row * static_cast<std::size_t>(stride), stride};
    }
};

PathRecord simulate_path(const JumpSystem& js, const SymOpd& x0, double T, std::uint64_t seed,
                         std::uint64_t path_index = 0, const SimulationOptions& opts = {});

/// CSV: t, event, atom, then the D(D+1)/2 state coordinates x_i_j.
void write_path_csv(std::ostream& os, const JumpSystem& js, const PathRecord& rec);

struct MonteCarloOptions {
    int workers = 1;
    double ode_h = 0.0;
    double lookahead = 0.0;
    double riccati_h = 1e-3;
    double clamp_tol = kDefaultClampTol;
};

/// (estimate - reference) / stderr; with stderr = 0 the score is 0 when the
/// difference is within 1e-9 and +-infinity otherwise.
double z_score(double estimate, double reference, double stderr_);

struct MCPoint {
    double t = 0.0;
    int u_id = 0;
    double estimate = 0.0;
    double stderr_ = 0.0;
    double reference = 0.0;
    double z = 0.0;
};

struct MCReport {
    std::size_t n_paths = 0;
    std::vector<MCPoint> points;

    double fraction_within(double zmax) const;
    nlohmann::json to_json() const;
};

MCReport mc_laplace(const JumpSystem& js, const SymOpd& x0, const std::vector<SymOpd>& us,
                    const std::vector<double>& times, std::size_t n_paths, std::uint64_t seed,
                    const MonteCarloOptions& opts = {});
MCReport mc_laplace(const JumpSystem& js, const SymOpd& x0, const SymOpd& u, const std::vector<double>& times,
                    std::size_t n_paths, std::uint64_t seed, const MonteCarloOptions& opts = {});

enum class TestFunction { Exponential, Linear, Quadratic };

std::string to_string(TestFunction f);
TestFunction test_function_from_string(const std::string& s);

/// Extended generator of the rank-d process applied to the test function,
/// evaluated directly from the projected parameters.
double generator_value(const ProjectedParameters& pp, TestFunction f, const SymOpd& u, const SymOpd& x);

struct MartingaleDiagnostic {
    TestFunction tag = TestFunction::Exponential;
    std::vector<double> grid;
    std::vector<double> mean;
    std::vector<double> stderr_;
    std::vector<double> z;

    double max_abs_z() const;
    nlohmann::json to_json() const;
};

MartingaleDiagnostic martingale_residual(const JumpSystem& js, const ProjectedParameters& pp, const SymOpd& x0,
                                         TestFunction f, const SymOpd& u, std::size_t n_paths,
                                         const std::vector<double>& grid, std::uint64_t seed,
                                         const MonteCarloOptions& opts = {});

/// Several test functions evaluated on the same simulated paths.
std::vector<MartingaleDiagnostic> martingale_residuals(const JumpSystem& js, const ProjectedParameters& pp,
                                                       const SymOpd& x0, const std::vector<TestFunction>& fs,
                                                       const SymOpd& u, std::size_t n_paths,
                                                       const std::vector<double>& grid, std::uint64_t seed,
                                                       const MonteCarloOptions& opts = {});

struct CompensatorReport {
    std::size_t n_paths = 0;
    double jump_sum_mean = 0.0;      // E sum over jumps of g(atom)
    double compensator_mean = 0.0;   // E sum_k g_k int_0^T (w_k + r_k(X_s)) ds
    double diff_mean = 0.0;
    double diff_stderr = 0.0;
    double z = 0.0;

    nlohmann::json to_json() const;
};

/// Empirical jump sums of <zeta_k, u>^2 against their compensator.
CompensatorReport bracket_check(const JumpSystem& js, const SymOpd& x0, const SymOpd& u, double T,
                                std::size_t n_paths, std::uint64_t seed, const MonteCarloOptions& opts = {});

/// Same comparison for the total jump variation sum ||Delta X||.
CompensatorReport variation_check(const JumpSystem& js, const SymOpd& x0, double T, std::size_t n_paths,
                                  std::uint64_t seed, const MonteCarloOptions& opts = {});

struct MomentBoundReport {
    double norm_b_hat = 0.0;
    double norm_B_hat = 0.0;
    double K1 = 0.0;
    double K2 = 0.0;
    double K_T = 0.0;
    double bound = 0.0;  // K_T (1 + ||x0||^2)
    double empirical_mean = 0.0;
    double empirical_stderr = 0.0;
    bool holds = false;

    nlohmann::json to_json() const;
};

/// Constants of the second-moment estimate for the original parameter set.
MomentBoundReport moment_bound_constants(const AdmissibleParameters& p, const SymOpd& x0, double T);

/// Empirical E sup_{t <= T} ||X_t||^2 against K_T (1 + ||x0||^2).
MomentBoundReport moment_bound_check(const JumpSystem& js, const AdmissibleParameters& p, const SymOpd& x0, double T,
                                     std::size_t n_paths, std::uint64_t seed, const MonteCarloOptions& opts = {});

}  // namespace hsaffine

#endif  // HSAFFINE_SIMULATE_HPP
