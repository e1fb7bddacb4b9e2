#ifndef HSAFFINE_RICCATI_HPP
#define HSAFFINE_RICCATI_HPP

#include <iosfwd>
#include <limits>
#include <vector>

#include "hsaffine/params.hpp"
#include "hsaffine/weights.hpp"

namespace hsaffine {

double eval_F(const AdmissibleParameters& p, const SymOpd& u);
SymOpd eval_R(const AdmissibleParameters& p, const SymOpd& u);

/// Galerkin versions; u must be supported on the leading d x d block.
double eval_F_d(const ProjectedParameters& pp, const SymOpd& u);
SymOpd eval_R_d(const ProjectedParameters& pp, const SymOpd& u);

struct RiccatiSolution {
    Eigen::Index d = 0;
    SymOpd u0;
    std::vector<double> t;
    std::vector<double> phi;
    std::vector<SymOpd> psi;
    double h = 0.0;
    /// sup over the grid of |phi_h - phi_{h/2}| + ||psi_h - psi_{h/2}||; NaN unless requested.
    double step_doubling_estimate = std::numeric_limits<double>::quiet_NaN();
};

struct RiccatiOptions {
    double clamp_tol = kDefaultClampTol;
    bool step_doubling = false;
};

/// Classical RK4 with ceil(T/h) equal steps and an eigenvalue clamp after every step.
RiccatiSolution solve_riccati(const ProjectedParameters& pp, const SymOpd& u, double T, double h,
                              const RiccatiOptions& opts = {});
RiccatiSolution solve_riccati(const AdmissibleParameters& p, Eigen::Index d, const SymOpd& u, double T, double h,
                              const RiccatiOptions& opts = {});

struct GalerkinErrorDetail {
    double error = 0.0;
    /// Sum of the step-doubling estimates of both solves.
    double step_doubling_estimate = 0.0;
    double phi_gap = 0.0;  // sup |phi_d - phi_ref|
    double psi_gap = 0.0;  // sup ||psi_d - psi_ref||
};

/// Sup-grid gaps between two solutions on the same grid.
GalerkinErrorDetail compare_solutions(const RiccatiSolution& a, const RiccatiSolution& b);

double galerkin_error(const AdmissibleParameters& p, const SymOpd& u, double T, Eigen::Index d, Eigen::Index d_ref,
                      double h);
GalerkinErrorDetail galerkin_error_detail(const AdmissibleParameters& p, const SymOpd& u, double T, Eigen::Index d,
                                          Eigen::Index d_ref, double h, const RiccatiOptions& opts = {});

struct ErrorBound {
    double T = 0.0;
    Eigen::Index d = 0;
    double M = 0.0;
    double norm_B = 0.0;
    double norm_mu = 0.0;
    double norm_b = 0.0;
    double second_moment = 0.0;
    double H_M = 0.0;
    double L1 = 0.0;
    double L2 = 0.0;
    double K = 0.0;
    double C_Td = 0.0;
    double bound = 0.0;  // K * C_Td
};

ErrorBound error_bound(const AdmissibleParameters& p, const SymOpd& u, double T, Eigen::Index d, double M);

/// sup_t ||P_d^perp e^{t B*} u|| + ||P_d^perp e^{t B*} sum_k G_k||, on a 64-point grid with one refinement.
double tail_constant(const AdmissibleParameters& p, const SymOpd& u, double T, Eigen::Index d);

/// The d-independent constant C_T of the weighted-space rate.
double vnorm_rate_constant(const AdmissibleParameters& p, double T, const WeightModeld& w);
double vnorm_rate(const AdmissibleParameters& p, double T, Eigen::Index d, const WeightModeld& w);

double flow_check(const AdmissibleParameters& p, Eigen::Index d, const SymOpd& u, double s, double t, double h,
                  const RiccatiOptions& opts = {});

/// CSV: t, phi, then psi coordinates named psi_i_j (1-based, row-major upper triangle).
void write_csv(std::ostream& os, const RiccatiSolution& sol);

}  // namespace hsaffine

#endif  // HSAFFINE_RICCATI_HPP
