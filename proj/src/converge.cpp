#include "hsaffine/converge.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "hsaffine/io.hpp"
#include "hsaffine/parallel.hpp"

namespace hsaffine {

using nlohmann::json;

namespace {

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double laplace_value(const RiccatiSolution& s, std::size_t k, const SymOpd& x0) {
    return std::exp(-s.phi[k] - hs_inner(x0, s.psi[k]));
}

}  // namespace

SweepResult sweep(const AdmissibleParameters& p, const SymOpd& u, const SymOpd& x0, double T,
                  const std::vector<Eigen::Index>& levels_in, Eigen::Index d_ref, const SweepOptions& o) {
    if (d_ref < 1 || d_ref > p.dim) throw LevelOutOfRange("sweep: d_ref must lie in [1, D]");
    if (levels_in.empty()) throw InvalidInput("sweep: no levels");
    std::vector<Eigen::Index> levels = levels_in;
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    if (levels.front() < 1 || levels.back() > d_ref) throw LevelOutOfRange("sweep: levels must lie in [1, d_ref]");
    if (x0.dim() != p.dim || u.dim() != p.dim) throw DimensionMismatch("sweep: u or x0 has the wrong dimension");
    if (o.weights && o.weights->dim() != p.dim) throw DimensionMismatch("sweep: weight model dimension differs");

    const RiccatiOptions ro{o.clamp_tol, true};
    const RiccatiSolution ref = solve_riccati(p, d_ref, u, T, o.h, ro);
    const double M = o.M ? *o.M : u.norm();
    const double x0n = x0.norm();

    std::vector<double> mc_times;
    std::vector<double> mc_refs;
    if (o.mc) {
        mc_times = o.mc->times.empty() ? std::vector<double>{0.25 * T, 0.5 * T, T} : o.mc->times;
        for (double t : mc_times) {
            const RiccatiSolution s = solve_riccati(p, d_ref, u, t, std::min(o.h, t), {o.clamp_tol, false});
            mc_refs.push_back(std::exp(-s.phi.back() - hs_inner(project(d_ref, x0), s.psi.back())));
        }
    }

    SweepResult res;
    res.d_ref = d_ref;
    res.T = T;
    res.levels.resize(levels.size());
    parallel_for(levels.size(), o.workers, [&](std::size_t i) {
        SweepLevel L;
        L.d = levels[i];
        const RiccatiSolution sd = L.d == d_ref ? ref : solve_riccati(p, L.d, u, T, o.h, ro);
        const GalerkinErrorDetail g = compare_solutions(sd, ref);
        L.galerkin_error = g.error;
        L.step_doubling_estimate = g.step_doubling_estimate;
        L.phi_gap = g.phi_gap;
        L.psi_gap = g.psi_gap;
        const ErrorBound eb = error_bound(p, u, T, L.d, M);
        L.C_Td = eb.C_Td;
        L.K = eb.K;
        L.bound = eb.bound;
        if (o.weights) L.vnorm_rate = vnorm_rate(p, T, L.d, *o.weights);
        for (std::size_t k = 0; k < ref.t.size(); ++k)
            L.laplace_gap = std::max(L.laplace_gap, std::abs(laplace_value(sd, k, x0) - laplace_value(ref, k, x0)));
        L.laplace_gap_bound = L.phi_gap + x0n * L.psi_gap;
        if (o.mc) {
            const ProjectedParameters pp = project_params(p, L.d);
            const JumpSystem js(pp);
            const MCReport r = mc_laplace(js, project(L.d, x0), project(L.d, u), mc_times, o.mc->n_paths,
                                          o.mc->seed, o.mc->options);
            double zmax = 0.0;
            std::size_t within = 0;
            for (std::size_t k = 0; k < r.points.size(); ++k) {
                const double z = std::abs(z_score(r.points[k].estimate, mc_refs[k], r.points[k].stderr_));
                zmax = std::max(zmax, z);
                within += z <= 3.0;
            }
            L.mc_max_abs_z = zmax;
            L.mc_fraction_within_3 = static_cast<double>(within) / static_cast<double>(r.points.size());
        }
        res.levels[i] = L;
    });

    std::vector<double> xs, ys;
    const double eps = std::numeric_limits<double>::epsilon();
    for (const auto& L : res.levels) {
        if (L.d >= p.dim || !(L.galerkin_error > 100.0 * eps)) continue;
        const double a = o.weights ? (*o.weights)[L.d] : static_cast<double>(L.d + 1);
        xs.push_back(-std::log(a));
        ys.push_back(std::log(L.galerkin_error));
    }
    if (xs.size() >= 2) {
        const double n = static_cast<double>(xs.size());
        double mx = 0.0, my = 0.0;
        for (std::size_t k = 0; k < xs.size(); ++k) {
            mx += xs[k] / n;
            my += ys[k] / n;
        }
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t k = 0; k < xs.size(); ++k) {
            sxx += (xs[k] - mx) * (xs[k] - mx);
            sxy += (xs[k] - mx) * (ys[k] - my);
        }
        if (sxx > 0.0) res.decay_exponent = sxy / sxx;
    }
    return res;
}

json SweepResult::to_json() const {
    json rows = json::array();
    for (const auto& L : levels)
        rows.push_back({{"d", L.d},
                        {"galerkin_error", L.galerkin_error},
                        {"step_doubling_estimate", L.step_doubling_estimate},
                        {"phi_gap", L.phi_gap},
                        {"psi_gap", L.psi_gap},
                        {"C_Td", L.C_Td},
                        {"K", num(L.K)},
                        {"bound", num(L.bound)},
                        {"vnorm_rate", num(L.vnorm_rate)},
                        {"laplace_gap", L.laplace_gap},
                        {"laplace_gap_bound", L.laplace_gap_bound},
                        {"mc_max_abs_z", num(L.mc_max_abs_z)},
                        {"mc_fraction_within_3", num(L.mc_fraction_within_3)}});
    return {{"d_ref", d_ref},
            {"T", T},
            {"error_kind", "surrogate limit error (reference level d_ref)"},
            {"levels", rows},
            {"decay_exponent", num(decay_exponent)}};
}

void SweepResult::write_csv(std::ostream& os) const {
    os << "d,galerkin_error,step_doubling_estimate,phi_gap,psi_gap,C_Td,K,bound,vnorm_rate,laplace_gap,"
          "laplace_gap_bound,mc_max_abs_z,mc_fraction_within_3\n";
    for (const auto& L : levels) {
        os << L.d;
        for (double v : {L.galerkin_error, L.step_doubling_estimate, L.phi_gap, L.psi_gap, L.C_Td, L.K, L.bound,
                         L.vnorm_rate, L.laplace_gap, L.laplace_gap_bound, L.mc_max_abs_z, L.mc_fraction_within_3})
            os << ',' << fmt17(v);
        os << '\n';
    }
}

VariationReport infinite_variation_diagnostic(const std::vector<long long>& D_list, double xg,
                                              const std::function<double(long long)>& u_diag) {
    VariationReport rep;
    rep.xg = xg;
    long long maxD = 0;
    for (long long D : D_list) {
        if (D < 1) throw InvalidInput("infinite_variation_diagnostic: D must be >= 1");
        maxD = std::max(maxD, D);
    }
    // Prefix sums up to 2 max(D).
    const long long N = 2 * maxD;
    std::vector<double> H(static_cast<std::size_t>(N + 1), 0.0), S(static_cast<std::size_t>(N + 1), 0.0);
    for (long long n = 1; n <= N; ++n) {
        const double inv = 1.0 / static_cast<double>(n);
        H[static_cast<std::size_t>(n)] = H[static_cast<std::size_t>(n - 1)] + inv;
        S[static_cast<std::size_t>(n)] = S[static_cast<std::size_t>(n - 1)] + u_diag(n) * inv;
    }
    for (long long D : D_list) {
        VariationRow r;
        r.D = D;
        r.V = xg * H[static_cast<std::size_t>(D)];
        r.V_over_logD = D > 1 ? r.V / std::log(static_cast<double>(D)) : std::numeric_limits<double>::quiet_NaN();
        r.S = xg * S[static_cast<std::size_t>(D)];
        r.S_2D = xg * S[static_cast<std::size_t>(2 * D)];
        r.tail = std::abs(r.S_2D - r.S);
        rep.rows.push_back(r);
    }
    return rep;
}

VariationReport infinite_variation_diagnostic(const std::vector<long long>& D_list, const SymOpd& x, const SymOpd& g,
                                              const SymOpd& u) {
    const double xg = hs_inner(x, g);
    return infinite_variation_diagnostic(D_list, xg, [&u](long long n) {
        return n <= u.dim() ? u(static_cast<Eigen::Index>(n - 1), static_cast<Eigen::Index>(n - 1)) : 0.0;
    });
}

json VariationReport::to_json() const {
    json out = json::array();
    for (const auto& r : rows)
        out.push_back({{"D", r.D}, {"V", r.V}, {"V_over_logD", num(r.V_over_logD)}, {"S", r.S}, {"S_2D", r.S_2D},
                       {"tail", r.tail}});
    return {{"xg", xg}, {"rows", out}};
}

}  // namespace hsaffine
