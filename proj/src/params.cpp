#include "hsaffine/params.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hsaffine/rng.hpp"

namespace hsaffine {

namespace {

double min_eig_full(const SymOpd& u) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(u.matrix(), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

bool is_psd(const SymOpd& u, double tol = kPsdTol) { return min_eig_full(u) >= -tol; }

void check_dim(const SymOpd& u, Eigen::Index dim, const char* what) {
    if (u.dim() != dim) throw DimensionMismatch(std::string(what) + ": dimension differs from parameter set");
}

}  // namespace

double AtomicMeasure::second_moment() const {
    double s = 0.0;
    for (const auto& a : atoms) s += a.w * a.xi.squared_norm();
    return s;
}

SymOpd OperatorValuedMeasure::total_mass(Eigen::Index dim) const {
    SymOpd s = SymOpd::zero(dim);
    for (const auto& a : atoms) s += a.G;
    return s;
}

AdmissibleParameters make_parameters(SymOpd b, LinearDriftd B, AtomicMeasure m, OperatorValuedMeasure mu) {
    const Eigen::Index D = b.dim();
    if (D <= 0) throw InvalidInput("parameter dimension must be positive");
    if (B.dim() != D) throw DimensionMismatch("drift dimension differs from b");
    for (const auto& a : m.atoms) {
        check_dim(a.xi, D, "m atom");
        if (!(a.w >= 0.0) || !std::isfinite(a.w)) throw InvalidInput("m atom weight must be finite and >= 0");
        if (!(a.xi.norm() > 0.0)) throw InvalidInput("m atom xi must be nonzero");
        if (!is_psd(a.xi)) throw InvalidInput("m atom xi must be PSD");
    }
    for (const auto& a : mu.atoms) {
        check_dim(a.xi, D, "mu atom xi");
        check_dim(a.G, D, "mu atom G");
        if (!(a.xi.norm() > 0.0)) throw InvalidInput("mu atom xi must be nonzero");
        if (!is_psd(a.xi)) throw InvalidInput("mu atom xi must be PSD");
        if (!is_psd(a.G)) throw InvalidInput("mu atom G must be PSD");
    }
    return AdmissibleParameters{D, std::move(b), std::move(B), std::move(m), std::move(mu)};
}

AdmissibleParameters zero_parameters(Eigen::Index dim) {
    return make_parameters(SymOpd::zero(dim), LinearDriftd::zero(dim), {}, {});
}

SymOpd compute_I_m(const AtomicMeasure& m, Eigen::Index dim) {
    SymOpd s = SymOpd::zero(dim);
    for (const auto& a : m.atoms)
        if (a.xi.norm() <= 1.0) s.add_scaled(a.w, a.xi);
    return s;
}

double orthogonal_pair_margin(const AdmissibleParameters& p, const SymOpd& x, const SymOpd& u) {
    double r = hs_inner(p.B.adjoint(u), x);
    for (const auto& a : p.mu.atoms) {
        const double n2 = a.xi.squared_norm();
        r -= hs_inner(truncation_chi(a.xi), u) * hs_inner(a.G, x) / n2;
    }
    return r;
}

Eigen::MatrixXd random_orthogonal(Eigen::Index D, std::uint64_t seed, std::uint64_t stream) {
    StreamRng rng(seed, stream, 0x51);
    Eigen::MatrixXd A(D, D);
    for (Eigen::Index j = 0; j < D; ++j)
        for (Eigen::Index i = 0; i < D; ++i) A(i, j) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
    Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(D, D);
    const Eigen::MatrixXd R = qr.matrixQR();
    for (Eigen::Index j = 0; j < D; ++j)
        if (R(j, j) < 0) Q.col(j) = -Q.col(j);
    return Q;
}

SymOpd random_psd(Eigen::Index D, Eigen::Index rank, double norm, std::uint64_t seed, std::uint64_t stream) {
    StreamRng rng(seed, stream, 0x52);
    Eigen::MatrixXd V(D, rank);
    for (Eigen::Index j = 0; j < rank; ++j)
        for (Eigen::Index i = 0; i < D; ++i) V(i, j) = rng.normal();
    SymOpd s = SymOpd::from_upper(Eigen::MatrixXd(V * V.transpose()));
    const double n = s.norm();
    if (n == 0.0) return s;
    return (norm / n) * s;
}

ValidationReport validate_admissible(const AdmissibleParameters& p, int n_samples, double tol, std::uint64_t seed) {
    if (n_samples < 1) throw InvalidInput("validate_admissible: n_samples must be >= 1");
    const Eigen::Index D = p.dim;
    ValidationReport rep;
    auto fail = [&](std::string clause, std::string msg) {
        rep.valid = false;
        rep.clause = std::move(clause);
        rep.message = std::move(msg);
        throw ValidationFailed(rep);
    };

    for (std::size_t k = 0; k < p.m.atoms.size(); ++k) {
        const auto& a = p.m.atoms[k];
        if (!(a.w >= 0.0) || !std::isfinite(a.w)) fail("i", "m atom " + std::to_string(k) + " has invalid weight");
        if (!(a.xi.norm() > 0.0) || !is_psd(a.xi))
            fail("i", "m atom " + std::to_string(k) + " is not a nonzero PSD operator");
    }
    if (!std::isfinite(p.m.second_moment())) fail("i", "second moment of m is not finite");

    const SymOpd gap = p.b - compute_I_m(p.m, D);
    rep.min_eig_b_minus_Im = min_eig_full(gap);
    if (rep.min_eig_b_minus_Im < -kPsdTol) {
        rep.witness_x = gap;
        fail("ii", "b - I_m is not PSD (min eigenvalue " + std::to_string(rep.min_eig_b_minus_Im) + ")");
    }

    for (std::size_t k = 0; k < p.mu.atoms.size(); ++k) {
        const auto& a = p.mu.atoms[k];
        if (!(a.xi.norm() > 0.0) || !is_psd(a.xi))
            fail("iii", "mu atom " + std::to_string(k) + " has an invalid location");
        if (!is_psd(a.G)) fail("iii", "mu atom " + std::to_string(k) + " has a non-PSD mass");
    }
    if (!is_psd(p.mu.total_mass(D))) fail("iii", "total mass of mu is not PSD");

    rep.worst_margin = std::numeric_limits<double>::infinity();
    if (D >= 2) {
        for (int s = 0; s < n_samples; ++s) {
            StreamRng rng(seed, static_cast<std::uint64_t>(s), 0x53);
            Eigen::MatrixXd Q;
            if (s % 2 == 0) {
                Q = random_orthogonal(D, seed, static_cast<std::uint64_t>(s));
            } else {
                std::vector<Eigen::Index> perm(D);
                std::iota(perm.begin(), perm.end(), Eigen::Index(0));
                std::shuffle(perm.begin(), perm.end(), rng);
                Q = Eigen::MatrixXd::Zero(D, D);
                for (Eigen::Index i = 0; i < D; ++i) Q(perm[i], i) = 1.0;
            }
            const Eigen::Index split = 1 + static_cast<Eigen::Index>(rng.next_u64() % static_cast<std::uint64_t>(D - 1));
            Eigen::VectorXd lam = Eigen::VectorXd::Zero(D), kap = Eigen::VectorXd::Zero(D);
            for (Eigen::Index i = 0; i < split; ++i) lam(i) = rng.uniform();
            for (Eigen::Index i = split; i < D; ++i) kap(i) = rng.uniform();
            const SymOpd x = SymOpd::from_upper(Eigen::MatrixXd(Q * lam.asDiagonal() * Q.transpose()));
            const SymOpd u = SymOpd::from_upper(Eigen::MatrixXd(Q * kap.asDiagonal() * Q.transpose()));
            const double margin = orthogonal_pair_margin(p, x, u);
            ++rep.samples;
            if (margin < rep.worst_margin) {
                rep.worst_margin = margin;
                rep.witness_x = x;
                rep.witness_u = u;
            }
            if (margin < -tol) fail("iv", "orthogonal-pair margin " + std::to_string(margin) + " below -tol");
        }
    }
    if (rep.samples == 0) rep.worst_margin = 0.0;
    return rep;
}

ProjectedParameters project_params(const AdmissibleParameters& p, Eigen::Index d) {
    if (d < 1 || d > p.dim) throw LevelOutOfRange("project_params: level out of range");
    ProjectedParameters pp;
    pp.d = d;
    pp.dim = p.dim;
    pp.b_d = project(d, p.b);

    for (const auto& a : p.m.atoms) {
        const SymOpd zeta = project(d, a.xi);
        const double zn = zeta.norm();
        if (zn == 0.0) continue;
        if (zn < kDegenerateAtomNorm) {
            ++pp.dropped_degenerate;
            continue;
        }
        pp.m_d.atoms.push_back({zeta, a.w});
        if (a.xi.norm() > 1.0 && zn <= 1.0) pp.b_d.add_scaled(a.w, zeta);
    }

    std::vector<Coupling<double>> extra;
    for (const auto& a : p.mu.atoms) {
        const SymOpd zeta = project(d, a.xi);
        const double zn = zeta.norm();
        if (zn == 0.0) continue;
        if (zn < kDegenerateAtomNorm) {
            ++pp.dropped_degenerate;
            continue;
        }
        const SymOpd Gd = project(d, a.G);
        const double n2 = a.xi.squared_norm();
        pp.mu_d.atoms.push_back({zeta, Gd});
        pp.M_d_atoms.push_back({zeta, Gd / n2});
        if (a.xi.norm() > 1.0 && zn <= 1.0) extra.push_back({Gd / n2, zeta});
    }
    pp.B_d = p.B.restricted(d).with_couplings(extra);
    return pp;
}

std::vector<double> kernel_weights(const OperatorValuedMeasure& mu, const SymOpd& x) {
    std::vector<double> w;
    w.reserve(mu.atoms.size());
    for (const auto& a : mu.atoms) w.push_back(hs_inner(x, a.G) / a.xi.squared_norm());
    return w;
}

AdmissibleParameters build_simple_example(Eigen::Index D, const SymOpd& g) {
    if (D < 1) throw InvalidInput("build_simple_example: D must be >= 1");
    if (g.dim() != D) throw DimensionMismatch("build_simple_example: g has the wrong dimension");
    if (!is_psd(g)) throw InvalidInput("build_simple_example: g must be PSD");
    OperatorValuedMeasure mu;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(D, D);
    for (Eigen::Index n = 1; n <= D; ++n) {
        const double inv = 1.0 / static_cast<double>(n);
        mu.atoms.push_back({inv * SymOpd::basis(D, n - 1, n - 1), (inv * inv) * g});
        h(n - 1, n - 1) = inv;
    }
    LinearDriftd B = LinearDriftd::structured(Eigen::MatrixXd::Zero(D, D), {{g, SymOpd::from_upper(h)}});
    return make_parameters(SymOpd::zero(D), std::move(B), {}, std::move(mu));
}

AdmissibleParameters build_generic_example(Eigen::Index D, const GenericExampleInputs& in) {
    if (D < 1) throw InvalidInput("build_generic_example: D must be >= 1");
    if (static_cast<Eigen::Index>(in.eta.size()) > D) throw InvalidInput("eta list longer than D");
    if (in.g.size() != in.mu.size()) throw InvalidInput("g list and mu list lengths differ");
    if (static_cast<Eigen::Index>(in.mu.size()) > D) throw InvalidInput("mu list longer than D");
    if (in.b_tilde.dim() != 0 && in.b_tilde.dim() != D) throw InvalidInput("b_tilde has the wrong dimension");
    if (in.C.size() != 0 && (in.C.rows() != D || in.C.cols() != D)) throw InvalidInput("C must be D x D");
    if (in.b_tilde.dim() == D && !is_psd(in.b_tilde)) throw InvalidInput("b_tilde must be PSD");

    auto check_atom = [](const LambdaAtom& a) {
        if (!(a.lambda > 0.0) || !std::isfinite(a.lambda)) throw InvalidInput("atom location must be in (0, inf)");
        if (!(a.weight >= 0.0) || !std::isfinite(a.weight)) throw InvalidInput("atom weight must be finite and >= 0");
    };

    AtomicMeasure m;
    for (std::size_t n = 0; n < in.eta.size(); ++n) {
        for (const auto& a : in.eta[n]) {
            check_atom(a);
            if (a.weight == 0.0) continue;
            const auto e = static_cast<Eigen::Index>(n);
            m.atoms.push_back({a.lambda * SymOpd::basis(D, e, e), a.weight / (a.lambda * a.lambda)});
        }
    }

    OperatorValuedMeasure mu;
    std::vector<Coupling<double>> gamma;
    for (std::size_t n = 0; n < in.mu.size(); ++n) {
        const SymOpd& g = in.g[n];
        if (g.dim() != D) throw InvalidInput("g_n has the wrong dimension");
        if (!is_psd(g)) throw InvalidInput("g_n must be PSD");
        const auto e = static_cast<Eigen::Index>(n);
        double c = 0.0;
        for (const auto& a : in.mu[n]) {
            check_atom(a);
            if (a.weight == 0.0) continue;
            mu.atoms.push_back({a.lambda * SymOpd::basis(D, e, e), a.weight * g});
            if (a.lambda <= 1.0) c += a.weight / a.lambda;
        }
        if (c > 0.0) gamma.push_back({g, c * SymOpd::basis(D, e, e)});
    }

    SymOpd b = in.b_tilde.dim() == D ? in.b_tilde : SymOpd::zero(D);
    b += compute_I_m(m, D);
    Eigen::MatrixXd C = in.C.size() != 0 ? in.C : Eigen::MatrixXd::Zero(D, D);
    return make_parameters(std::move(b), LinearDriftd::structured(std::move(C), std::move(gamma)), std::move(m),
                           std::move(mu));
}

GenericExampleInputs default_generic_inputs(Eigen::Index D) {
    GenericExampleInputs in;
    for (Eigen::Index n = 0; n < D; ++n) {
        const double s = 1.0 / static_cast<double>((n + 1) * (n + 1));
        in.eta.push_back({{0.5, 0.4 * s}, {1.5, 0.3 * s}});
        in.mu.push_back({{0.6, 0.3 * s}, {1.4, 0.15 * s}});
        Eigen::VectorXd v = Eigen::VectorXd::Zero(D);
        v(n) = 1.0;
        v((n + 1) % D) += 1.0;
        v /= v.norm();
        in.g.push_back(0.4 * SymOpd::basis(D, n, n) + 0.2 * SymOpd::outer(v));
    }
    in.b_tilde = 0.2 * SymOpd::identity(D);
    in.C = -0.2 * Eigen::MatrixXd::Identity(D, D);
    for (Eigen::Index n = 0; n + 1 < D; ++n) {
        in.C(n, n + 1) = 0.1;
        in.C(n + 1, n) = -0.05;
    }
    return in;
}

AdmissibleParameters random_admissible(Eigen::Index D, std::uint64_t seed, const RandomParamsOptions& o) {
    if (D < 1) throw InvalidInput("random_admissible: D must be >= 1");
    StreamRng rng(seed, 0, 0x54);
    std::uint64_t stream = 1;
    auto norm_draw = [&] { return o.norm_lo + (o.norm_hi - o.norm_lo) * rng.uniform(); };
    auto rank_draw = [&] { return 1 + static_cast<Eigen::Index>(rng.next_u64() % static_cast<std::uint64_t>(std::min<Eigen::Index>(D, 2))); };

    Eigen::MatrixXd C(D, D);
    for (Eigen::Index j = 0; j < D; ++j)
        for (Eigen::Index i = 0; i < D; ++i) C(i, j) = rng.normal() * o.drift_scale / std::sqrt(static_cast<double>(D));

    AtomicMeasure m;
    for (int k = 0; k < o.m_atoms; ++k) {
        SymOpd xi = random_psd(D, rank_draw(), norm_draw(), seed, stream++);
        m.atoms.push_back({std::move(xi), o.rate_scale * (0.2 + 0.8 * rng.uniform())});
    }

    OperatorValuedMeasure mu;
    std::vector<Coupling<double>> couplings;
    for (int k = 0; k < o.mu_atoms; ++k) {
        SymOpd xi = random_psd(D, rank_draw(), norm_draw(), seed, stream++);
        SymOpd G = random_psd(D, rank_draw(), o.mass_scale * (0.2 + 0.8 * rng.uniform()), seed, stream++);
        if (xi.norm() <= 1.0) couplings.push_back({G / xi.squared_norm(), xi});
        mu.atoms.push_back({std::move(xi), std::move(G)});
    }
    for (int k = 0; k < o.extra_couplings; ++k) {
        SymOpd A = random_psd(D, 1, o.drift_scale * rng.uniform(), seed, stream++);
        SymOpd H = random_psd(D, 1, rng.uniform(), seed, stream++);
        couplings.push_back({std::move(A), std::move(H)});
    }

    SymOpd b = random_psd(D, D, o.b_scale * (0.2 + 0.8 * rng.uniform()), seed, stream++);
    b += compute_I_m(m, D);
    return make_parameters(std::move(b), LinearDriftd::structured(std::move(C), std::move(couplings)), std::move(m),
                           std::move(mu));
}

}  // namespace hsaffine
