#include "hsaffine/riccati.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "hsaffine/io.hpp"

namespace hsaffine {

namespace {

// e^{-a} - 1 + <chi(xi), u>, with a = <xi, u>.
inline double jump_term(double a, double xi_norm) {
    return std::expm1(-a) + (xi_norm <= 1.0 ? a : 0.0);
}

void require_supported(const ProjectedParameters& pp, const SymOpd& u) {
    if (u.dim() != pp.dim) throw DimensionMismatch("operand dimension differs from parameter set");
    if (!is_supported_on(pp.d, u)) throw SupportViolation("operand is not supported on the leading block");
}

struct FR {
    double F;
    SymOpd R;
};

FR eval_FR_d(const ProjectedParameters& pp, const SymOpd& u) {
    double F = hs_inner(pp.b_d, u);
    for (const auto& a : pp.m_d.atoms) F -= a.w * jump_term(hs_inner(a.xi, u), a.xi.norm());
    SymOpd R = pp.B_d.adjoint(u);
    for (const auto& a : pp.M_d_atoms) R.add_scaled(-jump_term(hs_inner(a.zeta, u), a.zeta.norm()), a.Gscaled);
    return {F, std::move(R)};
}

RiccatiSolution solve_fixed(const ProjectedParameters& pp, const SymOpd& u, double T, std::size_t steps,
                            double clamp_tol) {
    RiccatiSolution sol;
    sol.d = pp.d;
    sol.u0 = u;
    sol.h = T / static_cast<double>(steps);
    sol.t.reserve(steps + 1);
    sol.phi.reserve(steps + 1);
    sol.psi.reserve(steps + 1);
    SymOpd psi = project(pp.d, u);
    double phi = 0.0;
    sol.t.push_back(0.0);
    sol.phi.push_back(phi);
    sol.psi.push_back(psi);
    const double h = sol.h;
    for (std::size_t s = 0; s < steps; ++s) {
        const FR k1 = eval_FR_d(pp, psi);
        const FR k2 = eval_FR_d(pp, psi + (h / 2) * k1.R);
        const FR k3 = eval_FR_d(pp, psi + (h / 2) * k2.R);
        const FR k4 = eval_FR_d(pp, psi + h * k3.R);
        phi += (h / 6) * (k1.F + 2.0 * k2.F + 2.0 * k3.F + k4.F);
        psi += (h / 6) * (k1.R + 2.0 * k2.R + 2.0 * k3.R + k4.R);
        if (!psi.all_finite() || !std::isfinite(phi)) throw NonFiniteState("Riccati solution is not finite");
        psi = psd_clamp(psi, clamp_tol);
        sol.t.push_back(s + 1 == steps ? T : h * static_cast<double>(s + 1));
        sol.phi.push_back(phi);
        sol.psi.push_back(psi);
    }
    return sol;
}

}  // namespace

double eval_F(const AdmissibleParameters& p, const SymOpd& u) {
    double F = hs_inner(p.b, u);
    for (const auto& a : p.m.atoms) F -= a.w * jump_term(hs_inner(a.xi, u), a.xi.norm());
    return F;
}

SymOpd eval_R(const AdmissibleParameters& p, const SymOpd& u) {
    SymOpd R = p.B.adjoint(u);
    for (const auto& a : p.mu.atoms) {
        const double n2 = a.xi.squared_norm();
        R.add_scaled(-jump_term(hs_inner(a.xi, u), std::sqrt(n2)) / n2, a.G);
    }
    return R;
}

double eval_F_d(const ProjectedParameters& pp, const SymOpd& u) {
    require_supported(pp, u);
    return eval_FR_d(pp, u).F;
}

SymOpd eval_R_d(const ProjectedParameters& pp, const SymOpd& u) {
    require_supported(pp, u);
    return eval_FR_d(pp, u).R;
}

RiccatiSolution solve_riccati(const ProjectedParameters& pp, const SymOpd& u, double T, double h,
                              const RiccatiOptions& opts) {
    if (!(T > 0.0) || !std::isfinite(T)) throw InvalidInput("solve_riccati: T must be positive");
    if (!(h > 0.0) || !std::isfinite(h)) throw InvalidInput("solve_riccati: h must be positive");
    if (u.dim() != pp.dim) throw DimensionMismatch("solve_riccati: u has the wrong dimension");
    if (min_eigenvalue(u) < -opts.clamp_tol) throw InvalidInput("solve_riccati: u must be PSD");
    const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil(T / h - 1e-9)));
    RiccatiSolution sol = solve_fixed(pp, u, T, steps, opts.clamp_tol);
    if (opts.step_doubling) {
        const RiccatiSolution half = solve_fixed(pp, u, T, 2 * steps, opts.clamp_tol);
        double est = 0.0;
        for (std::size_t k = 0; k < sol.t.size(); ++k)
            est = std::max(est, std::abs(sol.phi[k] - half.phi[2 * k]) + (sol.psi[k] - half.psi[2 * k]).norm());
        sol.step_doubling_estimate = est;
    }
    return sol;
}

RiccatiSolution solve_riccati(const AdmissibleParameters& p, Eigen::Index d, const SymOpd& u, double T, double h,
                              const RiccatiOptions& opts) {
    return solve_riccati(project_params(p, d), u, T, h, opts);
}

GalerkinErrorDetail galerkin_error_detail(const AdmissibleParameters& p, const SymOpd& u, double T, Eigen::Index d,
                                          Eigen::Index d_ref, double h, const RiccatiOptions& opts) {
    if (d < 1 || d_ref > p.dim || d > d_ref) throw LevelOutOfRange("galerkin_error: need 1 <= d <= d_ref <= D");
    const RiccatiSolution a = solve_riccati(p, d, u, T, h, opts);
    if (d == d_ref) {
        GalerkinErrorDetail g;
        g.step_doubling_estimate = opts.step_doubling ? 2.0 * a.step_doubling_estimate : 0.0;
        return g;
    }
    const RiccatiSolution b = solve_riccati(p, d_ref, u, T, h, opts);
    return compare_solutions(a, b);
}

GalerkinErrorDetail compare_solutions(const RiccatiSolution& a, const RiccatiSolution& b) {
    if (a.t.size() != b.t.size()) throw DimensionMismatch("compare_solutions: grids differ");
    GalerkinErrorDetail g;
    for (std::size_t k = 0; k < a.t.size(); ++k) {
        const double dphi = std::abs(a.phi[k] - b.phi[k]);
        const double dpsi = (a.psi[k] - b.psi[k]).norm();
        g.error = std::max(g.error, dphi + dpsi);
        g.phi_gap = std::max(g.phi_gap, dphi);
        g.psi_gap = std::max(g.psi_gap, dpsi);
    }
    const double ea = std::isnan(a.step_doubling_estimate) ? 0.0 : a.step_doubling_estimate;
    const double eb = std::isnan(b.step_doubling_estimate) ? 0.0 : b.step_doubling_estimate;
    g.step_doubling_estimate = ea + eb;
    return g;
}

double galerkin_error(const AdmissibleParameters& p, const SymOpd& u, double T, Eigen::Index d, Eigen::Index d_ref,
                      double h) {
    return galerkin_error_detail(p, u, T, d, d_ref, h).error;
}

double tail_constant(const AdmissibleParameters& p, const SymOpd& u, double T, Eigen::Index d) {
    if (d < 1 || d > p.dim) throw LevelOutOfRange("tail_constant: level out of range");
    if (!(T > 0.0)) throw InvalidInput("tail_constant: T must be positive");
    if (d == p.dim) return 0.0;
    // 64 points on [0, T], refined once by inserting midpoints (127 points).
    constexpr int kPoints = 127;
    const double dt = T / static_cast<double>(kPoints - 1);
    const Eigen::MatrixXd E = (dt * p.B.to_dense().transpose()).eval().exp();
    Eigen::VectorXd a = u.coords();
    Eigen::VectorXd g = p.mu.total_mass(p.dim).coords();
    double sup = 0.0;
    for (int k = 0; k < kPoints; ++k) {
        if (k > 0) {
            a = E * a;
            g = E * g;
        }
        const double v = project_perp(d, SymOpd::from_coords(p.dim, a)).norm() +
                         project_perp(d, SymOpd::from_coords(p.dim, g)).norm();
        sup = std::max(sup, v);
    }
    return sup;
}

ErrorBound error_bound(const AdmissibleParameters& p, const SymOpd& u, double T, Eigen::Index d, double M) {
    if (!(M >= u.norm() * (1.0 - 1e-12))) throw InvalidInput("error_bound: M must be >= ||u||");
    ErrorBound e;
    e.T = T;
    e.d = d;
    e.M = M;
    e.norm_B = operator_norm(p.B);
    e.norm_mu = p.mu.total_mass(p.dim).norm();
    e.norm_b = p.b.norm();
    e.second_moment = p.m.second_moment();
    e.H_M = M * std::exp((e.norm_B + 2.0 * e.norm_mu) * T);
    e.L1 = e.norm_B + (e.H_M + 1.0) * e.norm_mu;
    e.L2 = e.norm_b + (e.H_M + 1.0) * e.second_moment;
    e.K = std::exp(e.L1 * T) * (1.0 + e.L2 * T) * (1.0 + T * e.H_M * e.H_M);
    e.C_Td = tail_constant(p, u, T, d);
    e.bound = e.C_Td == 0.0 ? 0.0 : e.K * e.C_Td;
    return e;
}

double vnorm_rate_constant(const AdmissibleParameters& p, double T, const WeightModeld& w) {
    const double nB = operator_norm(p.B);
    const SymOpd mass = p.mu.total_mass(p.dim);
    const double nmu = mass.norm();
    const double nmu_V = vnorm(mass, w);
    const double HC = w.embedding_constant() * std::exp((nB + 2.0 * nmu) * T);
    const double LC1 = nB + 2.0 * (HC + 1.0) * nmu;
    const double LC2 = p.b.norm() + 2.0 * (HC + 1.0) * p.m.second_moment();
    const double CT = std::exp(LC1) * (1.0 + LC2 * T) * (1.0 + T * HC * HC) * std::exp(T * nB) * (1.0 + nmu_V);
    if (!std::isfinite(CT)) throw NonFiniteState("vnorm_rate: constant is not finite");
    return CT;
}

double vnorm_rate(const AdmissibleParameters& p, double T, Eigen::Index d, const WeightModeld& w) {
    const double bound = perp_vnorm_bound(d, w);
    if (bound == 0.0) return 0.0;
    return vnorm_rate_constant(p, T, w) * bound;
}

double flow_check(const AdmissibleParameters& p, Eigen::Index d, const SymOpd& u, double s, double t, double h,
                  const RiccatiOptions& opts) {
    if (!(s > 0.0) || !(t > 0.0)) throw InvalidInput("flow_check: s and t must be positive");
    const ProjectedParameters pp = project_params(p, d);
    const RiccatiSolution full = solve_riccati(pp, u, s + t, h, opts);
    const RiccatiSolution first = solve_riccati(pp, u, s, h, opts);
    const RiccatiSolution second = solve_riccati(pp, first.psi.back(), t, h, opts);
    return (full.psi.back() - second.psi.back()).norm() +
           std::abs(full.phi.back() - first.phi.back() - second.phi.back());
}

void write_csv(std::ostream& os, const RiccatiSolution& sol) {
    const Eigen::Index D = sol.u0.dim();
    os << "t,phi";
    for (Eigen::Index i = 0; i < D; ++i)
        for (Eigen::Index j = i; j < D; ++j) os << ',' << coord_name("psi", i, j);
    os << '\n';
    for (std::size_t k = 0; k < sol.t.size(); ++k) {
        os << fmt17(sol.t[k]) << ',' << fmt17(sol.phi[k]);
        const Eigen::VectorXd c = sol.psi[k].coords();
        for (Eigen::Index n = 0; n < c.size(); ++n) os << ',' << fmt17(c(n));
        os << '\n';
    }
}

}  // namespace hsaffine
