#include "hsaffine/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "hsaffine/io.hpp"
#include "hsaffine/parallel.hpp"
#include "hsaffine/riccati.hpp"
#include "hsaffine/rng.hpp"

namespace hsaffine {

using nlohmann::json;

namespace {

constexpr double kMinWindow = 1e-12;

Eigen::VectorXd compact_coords(Eigen::Index d, const SymOpd& x) {
    Eigen::VectorXd c(coord_count(d));
    const double sqrt2 = std::sqrt(2.0);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < d; ++i) {
        c(k++) = x(i, i);
        for (Eigen::Index j = i + 1; j < d; ++j) c(k++) = sqrt2 * x(i, j);
    }
    return c;
}

SymOpd from_compact_coords(Eigen::Index d, Eigen::Index dim, const double* c) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim, dim);
    const double inv = 1.0 / std::sqrt(2.0);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < d; ++i) {
        m(i, i) = c[k++];
        for (Eigen::Index j = i + 1; j < d; ++j) m(i, j) = inv * c[k++];
    }
    return SymOpd::from_upper(m);
}

SymOpd compact_basis(Eigen::Index d, Eigen::Index dim, Eigen::Index k) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(coord_count(d));
    e(k) = 1.0;
    return from_compact_coords(d, dim, e.data());
}

struct MeanErr {
    double mean = 0.0;
    double stderr_ = 0.0;
};

// Sequential in path order, so the result does not depend on the worker count.
MeanErr mean_stderr(const std::vector<double>& v, std::size_t offset, std::size_t stride, std::size_t n) {
    double s = 0.0;
    bool constant = true;
    for (std::size_t i = 0; i < n; ++i) {
        s += v[offset + i * stride];
        constant = constant && v[offset + i * stride] == v[offset];
    }
    if (constant) return {n > 0 ? v[offset] : 0.0, 0.0};
    const double mean = s / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = v[offset + i * stride] - mean;
        ss += e * e;
    }
    const double var = n > 1 ? ss / static_cast<double>(n - 1) : 0.0;
    return {mean, std::sqrt(var / static_cast<double>(n))};
}

void require_state(const JumpSystem& js, const SymOpd& x, double tol, const char* what) {
    if (x.dim() != js.dim()) throw DimensionMismatch(std::string(what) + " has the wrong dimension");
    if (!is_supported_on(js.level(), x)) throw SupportViolation(std::string(what) + " is not supported on the leading block");
    if (min_eigenvalue(x) < -tol) throw InvalidInput(std::string(what) + " must be PSD");
}

class PathSimulator {
public:
    PathSimulator(const JumpSystem& js, double T, const SimulationOptions& o)
        : js_(js), T_(T), o_(o), n_(js.compact_size()), d_(js.level()) {
        h_ = o.ode_h > 0.0 ? o.ode_h : 1e-3 * T;
        W_ = js.const_rates().sum();
        s_tot_ = js.rate_matrix().colwise().sum().transpose();
        if (s_tot_.size() != n_) s_tot_ = Eigen::VectorXd::Zero(n_);
        step_map(h_, P_, q_);
        out_ = o.output_times;
        std::sort(out_.begin(), out_.end());
        out_.erase(std::unique(out_.begin(), out_.end()), out_.end());
        for (double t : out_)
            if (t < 0.0 || t > T * (1.0 + 1e-12)) throw InvalidInput("output time outside [0, T]");
    }

    PathRecord run(const SymOpd& x0, std::uint64_t seed, std::uint64_t path) {
        PathRecord rec;
        rec.seed = seed;
        rec.path_index = path;
        rec.d = d_;
        rec.dim = js_.dim();
        rec.stride = n_;
        Eigen::VectorXd x = js_.to_compact(x0);
        const double base = o_.lookahead > 0.0 ? o_.lookahead : std::min(0.1 * T_, 1.0 / (1.0 + lambda(x)));
        std::size_t oi = 0;
        if (o_.record_dense) push_row(rec, 0.0, 0, -1, x);
        while (oi < out_.size() && out_[oi] <= 0.0) record_output(rec, x, oi);

        double t = 0.0;
        std::uint64_t window = 0;
        while (t < T_) {
            double len = base;
            for (;;) {
                double t_end = t + len;
                if (t_end >= T_ - 1e-12 * T_) t_end = T_;
                Eigen::VectorXd pred = x;
                flow(pred, t, t_end);
                const double bar = 2.0 * std::max(lambda(x), lambda(pred));
                StreamRng rng(seed, path, window++);

                const std::size_t rows0 = rec.t.size(), outs0 = rec.output_states.size(),
                                  orow0 = rec.output_rows.size(), oi0 = oi;
                Eigen::VectorXd xs = x;
                double s = t;
                bool violated = false, jumped = false;
                for (;;) {
                    const double tau = bar > 0.0 ? s + rng.exponential(bar) : std::numeric_limits<double>::infinity();
                    const double stop = std::min(tau, t_end);
                    if (!advance(rec, xs, s, stop, bar, oi)) {
                        violated = true;
                        break;
                    }
                    s = stop;
                    if (tau >= t_end) break;
                    const double lam = lambda(xs);
                    if (lam > bar) {
                        violated = true;
                        break;
                    }
                    if (rng.uniform() * bar < lam) {
                        const int k = pick_atom(xs, lam * rng.uniform());
                        if (o_.record_dense) push_row(rec, tau, 0, -1, xs);
                        xs += js_.jump_matrix().col(k);
                        if (o_.record_dense) push_row(rec, tau, 1, k, xs);
                        rec.jump_times.push_back(tau);
                        rec.jump_atoms.push_back(k);
                        rec.post_jump_states.push_back(js_.from_compact(xs));
                        jumped = true;
                        break;
                    }
                }
                if (violated) {
                    rec.t.resize(rows0);
                    rec.event.resize(rows0);
                    rec.atom.resize(rows0);
                    rec.states.resize(rows0 * static_cast<std::size_t>(n_));
                    rec.output_states.resize(outs0);
                    rec.output_rows.resize(orow0);
                    oi = oi0;
                    ++rec.window_restarts;
                    len *= 0.5;
                    if (len < kMinWindow) throw WindowUnderflow("thinning window fell below 1e-12");
                    continue;
                }
                x = xs;
                t = jumped ? s : t_end;
                break;
            }
        }
        rec.final_state = js_.from_compact(x);
        return rec;
    }

private:
    double lambda(const Eigen::VectorXd& x) const { return std::max(0.0, W_ + s_tot_.dot(x)); }

    // x -> P x + q is one classical RK4 step of size hh for x' = c + L x.
    void step_map(double hh, Eigen::MatrixXd& P, Eigen::VectorXd& q) const {
        const Eigen::MatrixXd A = hh * js_.drift_matrix();
        const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n_, n_);
        const Eigen::MatrixXd A2 = A * A;
        const Eigen::MatrixXd A3 = A2 * A;
        P = I + A + A2 / 2.0 + A3 / 6.0 + A3 * A / 24.0;
        q = hh * (I + A / 2.0 + A2 / 6.0 + A3 / 24.0) * js_.drift_constant();
    }

    void rk4(Eigen::VectorXd& x, double hh) {
        if (std::abs(hh - h_) <= 1e-14 * h_) {
            tmp_.noalias() = P_ * x;
            x = tmp_ + q_;
            return;
        }
        const Eigen::MatrixXd& L = js_.drift_matrix();
        const Eigen::VectorXd& c = js_.drift_constant();
        const Eigen::VectorXd k1 = c + L * x;
        const Eigen::VectorXd k2 = c + L * (x + (hh / 2) * k1);
        const Eigen::VectorXd k3 = c + L * (x + (hh / 2) * k2);
        const Eigen::VectorXd k4 = c + L * (x + hh * k3);
        x += (hh / 6) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }

    void clamp(Eigen::VectorXd& x) {
        if (!x.allFinite()) throw NonFiniteState("path state is not finite");
        if (d_ == 1) {
            if (x(0) < 0.0) {
                if (x(0) < -o_.clamp_tol) throw ClampBeyondTolerance(x(0), o_.clamp_tol);
                x(0) = 0.0;
            }
            return;
        }
        Eigen::MatrixXd m(d_, d_);
        const double inv = 1.0 / std::sqrt(2.0);
        Eigen::Index k = 0;
        for (Eigen::Index i = 0; i < d_; ++i) {
            m(i, i) = x(k++);
            for (Eigen::Index j = i + 1; j < d_; ++j) {
                m(i, j) = inv * x(k++);
                m(j, i) = m(i, j);
            }
        }
        if (Eigen::LLT<Eigen::MatrixXd>(m).info() == Eigen::Success) return;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
        if (d_ <= 3) es.computeDirect(m);
        else es.compute(m);
        const double lo = es.eigenvalues()(0);
        if (lo >= 0.0) return;
        if (lo < -o_.clamp_tol) throw ClampBeyondTolerance(lo, o_.clamp_tol);
        const Eigen::MatrixXd r =
            es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() * es.eigenvectors().transpose();
        const double sqrt2 = std::sqrt(2.0);
        k = 0;
        for (Eigen::Index i = 0; i < d_; ++i) {
            x(k++) = r(i, i);
            for (Eigen::Index j = i + 1; j < d_; ++j) x(k++) = sqrt2 * 0.5 * (r(i, j) + r(j, i));
        }
    }

    double next_grid(double s) const {
        const double k = std::floor((s + 1e-9 * h_) / h_) + 1.0;
        double g = k * h_;
        if (g > T_ - 1e-9 * h_) g = T_;
        return g;
    }

    // Next stop after s and whether it is an output time.
    std::pair<double, bool> next_stop(double s, std::size_t oi) const {
        const double g = next_grid(s);
        if (oi < out_.size()) {
            const double ot = out_[oi];
            if (ot <= g + 1e-9 * h_) return {ot, true};
        }
        return {g, false};
    }

    // Drift flow without recording, used to predict the window end.
    void flow(Eigen::VectorXd& x, double s, double target) {
        while (s < target) {
            const double g = std::min(next_grid(s), target);
            rk4(x, g - s);
            s = g;
        }
    }

    bool advance(PathRecord& rec, Eigen::VectorXd& x, double s, double target, double bar, std::size_t& oi) {
        while (s < target) {
            const auto [next, is_out] = next_stop(s, oi);
            const double to = std::min(next, target);
            rk4(x, to - s);
            clamp(x);
            s = to;
            if (lambda(x) > bar) return false;
            if (to == next) {
                if (o_.record_dense) push_row(rec, to, 0, -1, x);
                if (is_out) record_output(rec, x, oi);
            }
        }
        return true;
    }

    void push_row(PathRecord& rec, double t, int event, int atom, const Eigen::VectorXd& x) const {
        rec.t.push_back(t);
        rec.event.push_back(event);
        rec.atom.push_back(atom);
        rec.states.insert(rec.states.end(), x.data(), x.data() + n_);
    }

    void record_output(PathRecord& rec, const Eigen::VectorXd& x, std::size_t& oi) const {
        rec.output_states.insert(rec.output_states.end(), x.data(), x.data() + n_);
        if (o_.record_dense) rec.output_rows.push_back(rec.t.size() - 1);
        ++oi;
    }

    int pick_atom(const Eigen::VectorXd& x, double target) const {
        const auto& w = js_.const_rates();
        const auto& S = js_.rate_matrix();
        double cum = 0.0;
        int last = -1;
        for (Eigen::Index k = 0; k < w.size(); ++k) {
            const double r = std::max(0.0, w(k) + S.row(k).dot(x));
            if (r <= 0.0) continue;
            cum += r;
            last = static_cast<int>(k);
            if (target < cum) return last;
        }
        return last;
    }

    const JumpSystem& js_;
    double T_;
    const SimulationOptions& o_;
    Eigen::Index n_;
    Eigen::Index d_;
    double h_ = 0.0;
    double W_ = 0.0;
    Eigen::VectorXd s_tot_;
    Eigen::MatrixXd P_;
    Eigen::VectorXd q_;
    Eigen::VectorXd tmp_;
    std::vector<double> out_;
};

SimulationOptions sim_options(const MonteCarloOptions& o, std::vector<double> out, bool dense) {
    SimulationOptions s;
    s.ode_h = o.ode_h;
    s.lookahead = o.lookahead;
    s.clamp_tol = o.clamp_tol;
    s.record_dense = dense;
    s.output_times = std::move(out);
    return s;
}

// Compact form of the generator data, built from the projected parameters alone.
struct GeneratorData {
    Eigen::VectorXd b;
    Eigen::MatrixXd B;
    Eigen::MatrixXd Z;   // columns zeta_k
    Eigen::VectorXd chi; // 1 if ||zeta_k|| <= 1
    Eigen::VectorXd w;
    Eigen::MatrixXd S;   // rows s_k
};

GeneratorData generator_data(const ProjectedParameters& pp) {
    const Eigen::Index d = pp.d, n = coord_count(d);
    GeneratorData g;
    g.b = compact_coords(d, pp.b_d);
    g.B.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k) g.B.col(k) = compact_coords(d, pp.B_d.apply(compact_basis(d, pp.dim, k)));
    const auto K = static_cast<Eigen::Index>(pp.m_d.atoms.size() + pp.M_d_atoms.size());
    g.Z.resize(n, K);
    g.chi.resize(K);
    g.w = Eigen::VectorXd::Zero(K);
    g.S = Eigen::MatrixXd::Zero(K, n);
    Eigen::Index k = 0;
    for (const auto& a : pp.m_d.atoms) {
        g.Z.col(k) = compact_coords(d, a.xi);
        g.chi(k) = a.xi.norm() <= 1.0 ? 1.0 : 0.0;
        g.w(k) = a.w;
        ++k;
    }
    for (const auto& a : pp.M_d_atoms) {
        g.Z.col(k) = compact_coords(d, a.zeta);
        g.chi(k) = a.zeta.norm() <= 1.0 ? 1.0 : 0.0;
        g.S.row(k) = compact_coords(d, a.Gscaled).transpose();
        ++k;
    }
    return g;
}

struct TestEval {
    double f;
    double Gf;
    double dGf;  // time derivative of Gf along the drift velocity
};

// a = <x, u>, av = <v, u> for the path velocity v, dd = <b + B x, u>, ddv = <B v, u>,
// uz_k = <zeta_k, u>, rates_k = w_k + <x, S_k>, sv_k = <v, S_k>.
TestEval eval_test(TestFunction f, double a, double av, double dd, double ddv, const Eigen::VectorXd& uz,
                   const Eigen::VectorXd& chi, const Eigen::VectorXd& rates, const Eigen::VectorXd& sv) {
    double jump = 0.0, djump = 0.0;
    switch (f) {
        case TestFunction::Exponential: {
            for (Eigen::Index k = 0; k < uz.size(); ++k) {
                const double e = std::expm1(-uz(k)) + chi(k) * uz(k);
                jump += e * rates(k);
                djump += e * sv(k);
            }
            const double e = std::exp(-a);
            const double G = e * (-dd + jump);
            return {e, G, -av * G + e * (-ddv + djump)};
        }
        case TestFunction::Linear: {
            for (Eigen::Index k = 0; k < uz.size(); ++k) {
                const double c = uz(k) * (1.0 - chi(k));
                jump += c * rates(k);
                djump += c * sv(k);
            }
            return {a, dd + jump, ddv + djump};
        }
        case TestFunction::Quadratic: {
            for (Eigen::Index k = 0; k < uz.size(); ++k) {
                const double c = uz(k) * (1.0 - chi(k));
                jump += (2.0 * a * c + uz(k) * uz(k)) * rates(k);
                djump += 2.0 * av * c * rates(k) + (2.0 * a * c + uz(k) * uz(k)) * sv(k);
            }
            return {a * a, 2.0 * a * dd + jump, 2.0 * av * dd + 2.0 * a * ddv + djump};
        }
    }
    return {0.0, 0.0, 0.0};
}

// Trapezoid rule with the endpoint-derivative correction (error O(dt^5) per interval).
inline double corrected_trapezoid(double dt, double g0, double g1, double dg0, double dg1) {
    return 0.5 * dt * (g0 + g1) - dt * dt / 12.0 * (dg1 - dg0);
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

CompensatorReport compensator_check(const JumpSystem& js, const SymOpd& x0, double T, std::size_t n_paths,
                                    std::uint64_t seed, const Eigen::VectorXd& g, const MonteCarloOptions& o) {
    if (n_paths < 2) throw InvalidInput("compensator check needs n_paths >= 2");
    if (!(T > 0.0)) throw InvalidInput("T must be positive");
    require_state(js, x0, o.clamp_tol, "x0");
    const double gw = g.size() ? g.dot(js.const_rates()) : 0.0;
    const Eigen::VectorXd gs = g.size() ? Eigen::VectorXd(js.rate_matrix().transpose() * g)
                                        : Eigen::VectorXd::Zero(js.compact_size());
    std::vector<double> lhs(n_paths), rhs(n_paths), diff(n_paths);
    const SimulationOptions so = sim_options(o, {}, true);
    parallel_for(n_paths, o.workers, [&](std::size_t i) {
        PathSimulator sim(js, T, so);
        const PathRecord rec = sim.run(x0, seed, i);
        double l = 0.0;
        for (int k : rec.jump_atoms) l += g(k);
        double r = 0.0;
        auto rate = [&](std::size_t row) { return gw + gs.dot(rec.compact_state(row)); };
        auto drate = [&](std::size_t row) {
            return gs.dot(js.drift_constant() + js.drift_matrix() * rec.compact_state(row));
        };
        double prev = rate(0), dprev = drate(0);
        for (std::size_t row = 1; row < rec.rows(); ++row) {
            const double cur = rate(row), dcur = drate(row);
            r += corrected_trapezoid(rec.t[row] - rec.t[row - 1], prev, cur, dprev, dcur);
            prev = cur;
            dprev = dcur;
        }
        lhs[i] = l;
        rhs[i] = r;
        diff[i] = l - r;
    });
    CompensatorReport rep;
    rep.n_paths = n_paths;
    rep.jump_sum_mean = mean_stderr(lhs, 0, 1, n_paths).mean;
    rep.compensator_mean = mean_stderr(rhs, 0, 1, n_paths).mean;
    const MeanErr d = mean_stderr(diff, 0, 1, n_paths);
    rep.diff_mean = d.mean;
    rep.diff_stderr = d.stderr_;
    rep.z = z_score(d.mean, 0.0, d.stderr_);
    return rep;
}

}  // namespace

JumpSystem::JumpSystem(ProjectedParameters pp) : pp_(std::move(pp)) {
    const Eigen::Index d = pp_.d, n = coord_count(d);
    for (const auto& a : pp_.m_d.atoms) atoms_.push_back({a.xi, a.w, SymOpd::zero(pp_.dim)});
    for (const auto& a : pp_.M_d_atoms) atoms_.push_back({a.zeta, 0.0, a.Gscaled});
    const auto K = static_cast<Eigen::Index>(atoms_.size());
    w_.resize(K);
    S_.resize(K, n);
    Z_.resize(n, K);
    c_ = compact_coords(d, pp_.b_d);
    for (Eigen::Index k = 0; k < K; ++k) {
        const auto& a = atoms_[static_cast<std::size_t>(k)];
        w_(k) = a.const_rate;
        S_.row(k) = compact_coords(d, a.state_matrix).transpose();
        Z_.col(k) = compact_coords(d, a.zeta);
        if (a.zeta.norm() <= 1.0) c_ -= a.const_rate * Z_.col(k);
    }
    L_.resize(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::VectorXd col = compact_coords(d, pp_.B_d.apply(compact_basis(d, pp_.dim, j)));
        for (Eigen::Index k = 0; k < K; ++k)
            if (atoms_[static_cast<std::size_t>(k)].zeta.norm() <= 1.0) col -= S_(k, j) * Z_.col(k);
        L_.col(j) = col;
    }
}

SymOpd JumpSystem::drift(const SymOpd& x) const {
    SymOpd r = pp_.b_d + pp_.B_d.apply(x);
    for (const auto& a : atoms_)
        if (a.zeta.norm() <= 1.0) r.add_scaled(-(a.const_rate + hs_inner(x, a.state_matrix)), a.zeta);
    return r;
}

double JumpSystem::intensity(const SymOpd& x) const {
    double s = 0.0;
    for (double r : atom_intensities(x)) s += r;
    return s;
}

std::vector<double> JumpSystem::atom_intensities(const SymOpd& x) const {
    std::vector<double> r;
    r.reserve(atoms_.size());
    for (const auto& a : atoms_) r.push_back(a.const_rate + hs_inner(x, a.state_matrix));
    return r;
}

Eigen::VectorXd JumpSystem::to_compact(const SymOpd& x) const {
    if (x.dim() != pp_.dim) throw DimensionMismatch("to_compact: wrong dimension");
    return compact_coords(pp_.d, x);
}

SymOpd JumpSystem::from_compact(const Eigen::VectorXd& c) const {
    if (c.size() != compact_size()) throw DimensionMismatch("from_compact: wrong length");
    return from_compact_coords(pp_.d, pp_.dim, c.data());
}

JumpSystem build_jump_system(const ProjectedParameters& pp) { return JumpSystem(pp); }

PathRecord simulate_path(const JumpSystem& js, const SymOpd& x0, double T, std::uint64_t seed,
                         std::uint64_t path_index, const SimulationOptions& opts) {
    if (!(T > 0.0) || !std::isfinite(T)) throw InvalidInput("simulate_path: T must be positive");
    if (opts.ode_h < 0.0 || opts.lookahead < 0.0) throw InvalidInput("simulate_path: step sizes must be positive");
    require_state(js, x0, opts.clamp_tol, "x0");
    PathSimulator sim(js, T, opts);
    return sim.run(x0, seed, path_index);
}

void write_path_csv(std::ostream& os, const JumpSystem& js, const PathRecord& rec) {
    const Eigen::Index D = js.dim();
    os << "t,event,atom";
    for (Eigen::Index i = 0; i < D; ++i)
        for (Eigen::Index j = i; j < D; ++j) os << ',' << coord_name("x", i, j);
    os << '\n';
    for (std::size_t r = 0; r < rec.rows(); ++r) {
        os << fmt17(rec.t[r]) << ',' << rec.event[r] << ',' << rec.atom[r];
        const Eigen::VectorXd c = from_compact_coords(rec.d, D, rec.states.data() + r * rec.stride).coords();
        for (Eigen::Index k = 0; k < c.size(); ++k) os << ',' << fmt17(c(k));
        os << '\n';
    }
}

double z_score(double estimate, double reference, double se) {
    const double diff = estimate - reference;
    if (se > 0.0) return diff / se;
    if (std::abs(diff) <= 1e-9) return 0.0;
    return diff > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
}

double MCReport::fraction_within(double zmax) const {
    if (points.empty()) return 1.0;
    std::size_t ok = 0;
    for (const auto& p : points) ok += std::abs(p.z) <= zmax;
    return static_cast<double>(ok) / static_cast<double>(points.size());
}

json MCReport::to_json() const {
    json pts = json::array();
    for (const auto& p : points)
        pts.push_back({{"t", p.t}, {"u_id", p.u_id}, {"estimate", p.estimate}, {"stderr", p.stderr_},
                       {"reference", p.reference}, {"z", number_or_null(p.z)}});
    return {{"n_paths", n_paths}, {"points", pts}};
}

MCReport mc_laplace(const JumpSystem& js, const SymOpd& x0, const std::vector<SymOpd>& us,
                    const std::vector<double>& times, std::size_t n_paths, std::uint64_t seed,
                    const MonteCarloOptions& o) {
    if (n_paths < 2) throw InvalidInput("mc_laplace: n_paths must be >= 2");
    if (times.empty() || us.empty()) throw InvalidInput("mc_laplace: empty time or u list");
    require_state(js, x0, o.clamp_tol, "x0");
    for (const auto& u : us) require_state(js, u, o.clamp_tol, "u");
    for (double t : times)
        if (!(t >= 0.0) || !std::isfinite(t)) throw InvalidInput("mc_laplace: times must be >= 0");

    std::vector<double> sorted = times;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    const double T = sorted.back();
    const std::size_t nt = sorted.size(), nu = us.size(), stride = nt * nu;
    std::vector<Eigen::VectorXd> uc;
    for (const auto& u : us) uc.push_back(js.to_compact(u));

    std::vector<double> vals(n_paths * stride);
    if (T > 0.0) {
        const SimulationOptions so = sim_options(o, sorted, false);
        parallel_for(n_paths, o.workers, [&](std::size_t i) {
            PathSimulator sim(js, T, so);
            const PathRecord rec = sim.run(x0, seed, i);
            for (std::size_t ti = 0; ti < nt; ++ti) {
                const Eigen::Map<const Eigen::VectorXd> x(rec.output_states.data() + ti * rec.stride, rec.stride);
                for (std::size_t k = 0; k < nu; ++k) vals[i * stride + ti * nu + k] = std::exp(-uc[k].dot(x));
            }
        });
    } else {
        const Eigen::VectorXd x = js.to_compact(x0);
        for (std::size_t i = 0; i < n_paths; ++i)
            for (std::size_t k = 0; k < nu; ++k) vals[i * stride + k] = std::exp(-uc[k].dot(x));
    }

    MCReport rep;
    rep.n_paths = n_paths;
    const SymOpd x0d = project(js.level(), x0);
    for (double t : times) {
        const auto ti = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), t) - sorted.begin());
        for (std::size_t k = 0; k < nu; ++k) {
            MCPoint p;
            p.t = t;
            p.u_id = static_cast<int>(k);
            const MeanErr me = mean_stderr(vals, ti * nu + k, stride, n_paths);
            p.estimate = me.mean;
            p.stderr_ = me.stderr_;
            if (t > 0.0) {
                const RiccatiSolution sol =
                    solve_riccati(js.projected(), us[k], t, std::min(o.riccati_h, t), {o.clamp_tol, false});
                p.reference = std::exp(-sol.phi.back() - hs_inner(x0d, sol.psi.back()));
            } else {
                p.reference = std::exp(-hs_inner(x0d, us[k]));
            }
            p.z = z_score(p.estimate, p.reference, p.stderr_);
            rep.points.push_back(p);
        }
    }
    return rep;
}

MCReport mc_laplace(const JumpSystem& js, const SymOpd& x0, const SymOpd& u, const std::vector<double>& times,
                    std::size_t n_paths, std::uint64_t seed, const MonteCarloOptions& opts) {
    return mc_laplace(js, x0, std::vector<SymOpd>{u}, times, n_paths, seed, opts);
}

std::string to_string(TestFunction f) {
    switch (f) {
        case TestFunction::Exponential: return "exp";
        case TestFunction::Linear: return "linear";
        case TestFunction::Quadratic: return "quadratic";
    }
    return "?";
}

TestFunction test_function_from_string(const std::string& s) {
    if (s == "exp") return TestFunction::Exponential;
    if (s == "linear") return TestFunction::Linear;
    if (s == "quadratic") return TestFunction::Quadratic;
    throw InvalidInput("unknown test function \"" + s + "\"");
}

double generator_value(const ProjectedParameters& pp, TestFunction f, const SymOpd& u, const SymOpd& x) {
    const GeneratorData g = generator_data(pp);
    const Eigen::VectorXd uc = compact_coords(pp.d, u), xc = compact_coords(pp.d, x);
    const Eigen::VectorXd uz = g.Z.transpose() * uc;
    const Eigen::VectorXd rates = g.w + g.S * xc;
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(rates.size());
    return eval_test(f, uc.dot(xc), 0.0, (g.b + g.B * xc).dot(uc), 0.0, uz, g.chi, rates, zero).Gf;
}

double MartingaleDiagnostic::max_abs_z() const {
    double m = 0.0;
    for (double v : z) m = std::max(m, std::abs(v));
    return m;
}

json MartingaleDiagnostic::to_json() const {
    json rows = json::array();
    for (std::size_t i = 0; i < grid.size(); ++i)
        rows.push_back({{"t", grid[i]}, {"mean", mean[i]}, {"stderr", stderr_[i]}, {"z", number_or_null(z[i])}});
    return {{"test_function", to_string(tag)}, {"points", rows}};
}

std::vector<MartingaleDiagnostic> martingale_residuals(const JumpSystem& js, const ProjectedParameters& pp,
                                                       const SymOpd& x0, const std::vector<TestFunction>& fs,
                                                       const SymOpd& u, std::size_t n_paths,
                                                       const std::vector<double>& grid, std::uint64_t seed,
                                                       const MonteCarloOptions& o) {
    if (n_paths < 2) throw InvalidInput("martingale_residual: n_paths must be >= 2");
    if (grid.empty()) throw InvalidInput("martingale_residual: empty grid");
    if (pp.d != js.level() || pp.dim != js.dim()) throw DimensionMismatch("martingale_residual: level mismatch");
    require_state(js, x0, o.clamp_tol, "x0");
    require_state(js, u, o.clamp_tol, "u");
    std::vector<double> g = grid;
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
    if (!(g.front() > 0.0)) throw InvalidInput("martingale_residual: grid times must be positive");
    const double T = g.back();

    const GeneratorData gd = generator_data(pp);
    const Eigen::VectorXd uc = compact_coords(pp.d, u);
    const Eigen::VectorXd uz = gd.Z.transpose() * uc;
    const Eigen::VectorXd Btu = gd.B.transpose() * uc;
    const double bu = gd.b.dot(uc);
    const std::size_t nf = fs.size(), ng = g.size(), stride = nf * ng;
    std::vector<double> vals(n_paths * stride);
    const SimulationOptions so = sim_options(o, g, true);

    parallel_for(n_paths, o.workers, [&](std::size_t i) {
        PathSimulator sim(js, T, so);
        const PathRecord rec = sim.run(x0, seed, i);
        std::vector<double> integral(nf, 0.0), f0(nf);
        std::vector<TestEval> prev(nf);
        auto eval_row = [&](std::size_t row, std::size_t fi) {
            const auto x = rec.compact_state(row);
            const Eigen::VectorXd v = js.drift_constant() + js.drift_matrix() * x;
            const Eigen::VectorXd rates = gd.w + gd.S * x;
            const Eigen::VectorXd sv = gd.S * v;
            return eval_test(fs[fi], uc.dot(x), uc.dot(v), bu + Btu.dot(x), Btu.dot(v), uz, gd.chi, rates, sv);
        };
        for (std::size_t fi = 0; fi < nf; ++fi) {
            prev[fi] = eval_row(0, fi);
            f0[fi] = prev[fi].f;
        }
        std::size_t gi = 0;
        for (std::size_t row = 1; row < rec.rows() && gi < ng; ++row) {
            const double dt = rec.t[row] - rec.t[row - 1];
            for (std::size_t fi = 0; fi < nf; ++fi) {
                const TestEval e = eval_row(row, fi);
                integral[fi] += corrected_trapezoid(dt, prev[fi].Gf, e.Gf, prev[fi].dGf, e.dGf);
                prev[fi] = e;
                if (row == rec.output_rows[gi]) vals[i * stride + fi * ng + gi] = e.f - f0[fi] - integral[fi];
            }
            if (row == rec.output_rows[gi]) ++gi;
        }
    });

    std::vector<MartingaleDiagnostic> out;
    for (std::size_t fi = 0; fi < nf; ++fi) {
        MartingaleDiagnostic md;
        md.tag = fs[fi];
        md.grid = g;
        for (std::size_t gi = 0; gi < ng; ++gi) {
            const MeanErr me = mean_stderr(vals, fi * ng + gi, stride, n_paths);
            md.mean.push_back(me.mean);
            md.stderr_.push_back(me.stderr_);
            md.z.push_back(z_score(me.mean, 0.0, me.stderr_));
        }
        out.push_back(std::move(md));
    }
    return out;
}

MartingaleDiagnostic martingale_residual(const JumpSystem& js, const ProjectedParameters& pp, const SymOpd& x0,
                                         TestFunction f, const SymOpd& u, std::size_t n_paths,
                                         const std::vector<double>& grid, std::uint64_t seed,
                                         const MonteCarloOptions& opts) {
    return martingale_residuals(js, pp, x0, {f}, u, n_paths, grid, seed, opts).front();
}

json CompensatorReport::to_json() const {
    return {{"n_paths", n_paths},       {"jump_sum_mean", jump_sum_mean}, {"compensator_mean", compensator_mean},
            {"diff_mean", diff_mean},   {"diff_stderr", diff_stderr},     {"z", number_or_null(z)}};
}

CompensatorReport bracket_check(const JumpSystem& js, const SymOpd& x0, const SymOpd& u, double T,
                                std::size_t n_paths, std::uint64_t seed, const MonteCarloOptions& opts) {
    if (u.dim() != js.dim()) throw DimensionMismatch("bracket_check: u has the wrong dimension");
    const Eigen::VectorXd uz = js.jump_matrix().transpose() * js.to_compact(u);
    return compensator_check(js, x0, T, n_paths, seed, uz.array().square().matrix(), opts);
}

CompensatorReport variation_check(const JumpSystem& js, const SymOpd& x0, double T, std::size_t n_paths,
                                  std::uint64_t seed, const MonteCarloOptions& opts) {
    return compensator_check(js, x0, T, n_paths, seed, js.jump_matrix().colwise().norm().transpose(), opts);
}

json MomentBoundReport::to_json() const {
    return {{"norm_b_hat", norm_b_hat}, {"norm_B_hat", norm_B_hat},         {"K1", K1},
            {"K2", K2},                 {"K_T", K_T},                       {"bound", bound},
            {"empirical_mean", empirical_mean}, {"empirical_stderr", empirical_stderr}, {"holds", holds}};
}

MomentBoundReport moment_bound_constants(const AdmissibleParameters& p, const SymOpd& x0, double T) {
    SymOpd b_hat = p.b;
    for (const auto& a : p.m.atoms)
        if (a.xi.norm() > 1.0) b_hat.add_scaled(a.w, a.xi);
    std::vector<Coupling<double>> large;
    for (const auto& a : p.mu.atoms)
        if (a.xi.norm() >= 1.0) large.push_back({a.G / a.xi.squared_norm(), a.xi});
    const LinearDriftd B_hat = p.B.with_couplings(large);
    const double mass = p.mu.total_mass(p.dim).norm();
    MomentBoundReport r;
    r.norm_b_hat = b_hat.norm();
    r.norm_B_hat = operator_norm(B_hat);
    r.K2 = 6.0 * (r.norm_B_hat + 12.0 * mass);
    r.K1 = 6.0 * T * T * r.norm_b_hat * r.norm_b_hat + 12.0 * T * (p.m.second_moment() + T * mass);
    r.K_T = std::exp(r.K2 * T) * std::max(r.K1, 1.0);
    r.bound = r.K_T * (1.0 + x0.squared_norm());
    return r;
}

MomentBoundReport moment_bound_check(const JumpSystem& js, const AdmissibleParameters& p, const SymOpd& x0, double T,
                                     std::size_t n_paths, std::uint64_t seed, const MonteCarloOptions& o) {
    if (n_paths < 2) throw InvalidInput("moment_bound_check: n_paths must be >= 2");
    if (!(T > 0.0)) throw InvalidInput("moment_bound_check: T must be positive");
    MomentBoundReport r = moment_bound_constants(p, x0, T);
    const SymOpd x0d = project(js.level(), x0);
    std::vector<double> sup(n_paths);
    const SimulationOptions so = sim_options(o, {}, true);
    parallel_for(n_paths, o.workers, [&](std::size_t i) {
        PathSimulator sim(js, T, so);
        const PathRecord rec = sim.run(x0d, seed, i);
        double m = 0.0;
        for (std::size_t row = 0; row < rec.rows(); ++row) m = std::max(m, rec.compact_state(row).squaredNorm());
        sup[i] = m;
    });
    const MeanErr me = mean_stderr(sup, 0, 1, n_paths);
    r.empirical_mean = me.mean;
    r.empirical_stderr = me.stderr_;
    r.holds = r.empirical_mean <= r.bound;
    return r;
}

}  // namespace hsaffine
