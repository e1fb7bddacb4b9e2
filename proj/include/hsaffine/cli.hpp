#ifndef HSAFFINE_CLI_HPP
#define HSAFFINE_CLI_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "hsaffine/params.hpp"

namespace hsaffine::cli {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kInputError = 2, kNumericalFailure = 3 };

struct RunConfig {
    std::string params_path;
    std::string out_dir;               // empty: $HSAFFINE_OUT or "."
    std::uint64_t seed = 1;
    double step = 0.0;                 // <= 0: 1e-3 T
    double clamp_tol = kDefaultClampTol;
    std::size_t paths = 2000;
    std::vector<Eigen::Index> levels;  // empty: subcommand default
    Eigen::Index level = 0;            // 0: subcommand default
    double T = 1.0;
    Eigen::Index dim = 4;
    int workers = 1;
    std::vector<double> times;         // empty: {T/4, T/2, 3T/4, T}
    std::vector<double> u_scales;      // empty: {0.25, 0.5, 1, 2, 4}
    double x0_scale = 0.5;
    int validate_samples = 1000;
    bool mc = false;                   // sweep: also run Monte Carlo per level
    std::string example;               // example: simple | generic

    /// Throws InvalidInput when a field is out of range.
    void check() const;
    double h() const { return step > 0.0 ? step : 1e-3 * T; }
    std::vector<double> time_grid() const;
    std::vector<double> u_scale_list() const;
};

/// s (I + J) / 2 on the leading k x k block (J = all ones), embedded at dimension D.
SymOpd test_direction(Eigen::Index D, Eigen::Index k, double s);

int cmd_validate(const RunConfig& c);
int cmd_riccati(const RunConfig& c);
int cmd_bound(const RunConfig& c);
int cmd_simulate(const RunConfig& c);
int cmd_verify(const RunConfig& c);
int cmd_sweep(const RunConfig& c);
int cmd_example(const std::string& name, const RunConfig& c);

/// Parses argv, dispatches and maps exceptions to exit codes.
int run(int argc, char** argv);

}  // namespace hsaffine::cli

#endif  // HSAFFINE_CLI_HPP
