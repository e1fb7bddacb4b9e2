#include "hsaffine/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "hsaffine/converge.hpp"
#include "hsaffine/io.hpp"
#include "hsaffine/riccati.hpp"
#include "hsaffine/simulate.hpp"

namespace hsaffine::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void RunConfig::check() const {
    if (!(T > 0.0) || !std::isfinite(T)) throw InvalidInput("--T must be positive");
    if (step < 0.0 || !std::isfinite(step)) throw InvalidInput("--step must be positive");
    if (step > T) throw InvalidInput("--step must not exceed --T");
    if (!(clamp_tol >= 0.0)) throw InvalidInput("--clamp-tol must be nonnegative");
    if (paths < 2) throw InvalidInput("--paths must be >= 2");
    if (workers < 1) throw InvalidInput("--workers must be >= 1");
    if (dim < 1) throw InvalidInput("--dim must be >= 1");
    if (level < 0) throw InvalidInput("--level must be >= 1");
    if (!(x0_scale >= 0.0)) throw InvalidInput("--x0-scale must be nonnegative");
    if (validate_samples < 1) throw InvalidInput("--samples must be >= 1");
    for (auto d : levels)
        if (d < 1) throw InvalidInput("--levels entries must be >= 1");
    if (!std::is_sorted(levels.begin(), levels.end())) throw InvalidInput("--levels must be sorted ascending");
    for (double t : times)
        if (!(t > 0.0) || t > T) throw InvalidInput("--times entries must lie in (0, T]");
    for (double s : u_scales)
        if (!(s >= 0.0)) throw InvalidInput("--u-scales entries must be nonnegative");
}

std::vector<double> RunConfig::time_grid() const {
    if (!times.empty()) return times;
    return {0.25 * T, 0.5 * T, 0.75 * T, T};
}

std::vector<double> RunConfig::u_scale_list() const {
    if (!u_scales.empty()) return u_scales;
    return {0.25, 0.5, 1.0, 2.0, 4.0};
}

SymOpd test_direction(Eigen::Index D, Eigen::Index k, double s) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(D, D);
    m.topLeftCorner(k, k).setConstant(0.5 * s);
    m.topLeftCorner(k, k).diagonal().array() += 0.5 * s;
    return SymOpd::from_upper(m);
}

namespace {

std::string output_dir(const RunConfig& c) {
    std::string dir = c.out_dir;
    if (dir.empty()) {
        const char* env = std::getenv("HSAFFINE_OUT");
        dir = env && *env ? env : ".";
    }
    fs::create_directories(dir);
    return dir;
}

std::string utc_stamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    return buf;
}

// Stem <dir>/<name>-<timestamp>[-k] such that neither .csv nor .json exists yet.
std::string artifact_stem(const RunConfig& c, const std::string& name) {
    const fs::path base = fs::path(output_dir(c)) / (name + "-" + utc_stamp());
    std::string stem = base.string();
    for (int k = 1; fs::exists(stem + ".csv") || fs::exists(stem + ".json"); ++k)
        stem = base.string() + "-" + std::to_string(k);
    return stem;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path);
}

void write_json(const std::string& path, const json& j) { write_text(path, dump_json(j) + "\n"); }

AdmissibleParameters load(const RunConfig& c) {
    if (c.params_path.empty()) throw InvalidInput("--params is required");
    return load_params(c.params_path);
}

Eigen::Index pick_level(const RunConfig& c, const AdmissibleParameters& p, Eigen::Index fallback) {
    const Eigen::Index d = c.level > 0 ? c.level : fallback;
    if (d < 1 || d > p.dim) throw LevelOutOfRange("--level must lie in [1, " + std::to_string(p.dim) + "]");
    return d;
}

std::vector<Eigen::Index> pick_levels(const RunConfig& c, const AdmissibleParameters& p, bool include_D) {
    std::vector<Eigen::Index> levels = c.levels;
    if (levels.empty())
        for (Eigen::Index d = 1; d <= (include_D ? p.dim : std::max<Eigen::Index>(1, p.dim - 1)); ++d) levels.push_back(d);
    for (auto d : levels)
        if (d > p.dim) throw LevelOutOfRange("--levels entries must not exceed D = " + std::to_string(p.dim));
    return levels;
}

double first_scale(const RunConfig& c) { return c.u_scales.empty() ? 1.0 : c.u_scales.front(); }

json sym_json(const SymOpd& s) { return sym_to_json(s); }

MonteCarloOptions mc_options(const RunConfig& c) {
    MonteCarloOptions o;
    o.workers = c.workers;
    o.ode_h = c.h();
    o.riccati_h = c.h();
    o.clamp_tol = c.clamp_tol;
    return o;
}

}  // namespace

int cmd_validate(const RunConfig& c) {
    c.check();
    const AdmissibleParameters p = load(c);
    ValidationReport rep;
    int code = kOk;
    try {
        rep = validate_admissible(p, c.validate_samples, 1e-9, c.seed);
    } catch (const ValidationFailed& e) {
        rep = e.report;
        code = kCheckFailed;
    }
    json j{{"valid", rep.valid},
           {"clause", rep.clause},
           {"message", rep.message},
           {"min_eig_b_minus_Im", rep.min_eig_b_minus_Im},
           {"worst_margin", std::isfinite(rep.worst_margin) ? json(rep.worst_margin) : json(nullptr)},
           {"samples", rep.samples},
           {"seed", c.seed}};
    if (rep.witness_x) j["witness_x"] = sym_json(*rep.witness_x);
    if (rep.witness_u) j["witness_u"] = sym_json(*rep.witness_u);
    const std::string path = artifact_stem(c, "validate") + ".json";
    write_json(path, j);
    if (rep.valid)
        std::cout << "validate: admissible (worst margin " << fmt17(rep.worst_margin) << ") -> " << path << "\n";
    else
        std::cout << "validate: clause (" << rep.clause << ") violated: " << rep.message << " -> " << path << "\n";
    return code;
}

int cmd_riccati(const RunConfig& c) {
    c.check();
    const AdmissibleParameters p = load(c);
    const Eigen::Index d = pick_level(c, p, p.dim);
    const SymOpd u = test_direction(p.dim, p.dim, first_scale(c));
    const RiccatiSolution sol = solve_riccati(p, d, u, c.T, c.h(), {c.clamp_tol, true});
    const std::string stem = artifact_stem(c, "riccati");
    std::ostringstream csv;
    write_csv(csv, sol);
    write_text(stem + ".csv", csv.str());
    write_json(stem + ".json", {{"d", d},
                                {"T", c.T},
                                {"h", sol.h},
                                {"steps", sol.t.size() - 1},
                                {"u", sym_json(u)},
                                {"phi_T", sol.phi.back()},
                                {"psi_T", sym_json(sol.psi.back())},
                                {"step_doubling_estimate", sol.step_doubling_estimate}});
    std::cout << "riccati: d=" << d << " phi(T)=" << fmt17(sol.phi.back()) << " -> " << stem << ".csv\n";
    std::cout << "riccati: summary -> " << stem << ".json\n";
    return kOk;
}

int cmd_bound(const RunConfig& c) {
    c.check();
    const AdmissibleParameters p = load(c);
    const std::vector<Eigen::Index> levels = pick_levels(c, p, false);
    const SymOpd u = test_direction(p.dim, p.dim, first_scale(c));
    const double M = u.norm();
    std::ostringstream csv;
    csv << "d,T,M,norm_B,norm_mu,norm_b,second_moment,H_M,L1,L2,K,C_Td,bound\n";
    json rows = json::array();
    for (auto d : levels) {
        const ErrorBound e = error_bound(p, u, c.T, d, M);
        csv << d;
        for (double v : {e.T, e.M, e.norm_B, e.norm_mu, e.norm_b, e.second_moment, e.H_M, e.L1, e.L2, e.K, e.C_Td,
                         e.bound})
            csv << ',' << fmt17(v);
        csv << '\n';
        rows.push_back({{"d", d},       {"T", e.T},         {"M", e.M},       {"norm_B", e.norm_B},
                        {"norm_mu", e.norm_mu}, {"norm_b", e.norm_b}, {"second_moment", e.second_moment},
                        {"H_M", e.H_M}, {"L1", e.L1},       {"L2", e.L2},     {"K", e.K},
                        {"C_Td", e.C_Td}, {"bound", e.bound}});
    }
    const std::string stem = artifact_stem(c, "bound");
    write_text(stem + ".csv", csv.str());
    write_json(stem + ".json", {{"levels", rows}});
    std::cout << "bound: " << levels.size() << " levels -> " << stem << ".csv\n";
    std::cout << "bound: constants -> " << stem << ".json\n";
    return kOk;
}

int cmd_simulate(const RunConfig& c) {
    c.check();
    const AdmissibleParameters p = load(c);
    const Eigen::Index d = pick_level(c, p, p.dim);
    const JumpSystem js(project_params(p, d));
    const SymOpd x0 = project(d, c.x0_scale * SymOpd::identity(p.dim));
    SimulationOptions so;
    so.ode_h = c.h();
    so.clamp_tol = c.clamp_tol;
    const PathRecord rec = simulate_path(js, x0, c.T, c.seed, 0, so);
    const std::string stem = artifact_stem(c, "simulate");
    std::ostringstream csv;
    write_path_csv(csv, js, rec);
    write_text(stem + ".csv", csv.str());
    write_json(stem + ".json", {{"seed", rec.seed},
                                {"d", d},
                                {"T", c.T},
                                {"jumps", rec.jump_times.size()},
                                {"jump_times", rec.jump_times},
                                {"jump_atoms", rec.jump_atoms},
                                {"window_restarts", rec.window_restarts},
                                {"final_state", sym_json(rec.final_state)}});
    std::cout << "simulate: d=" << d << " jumps=" << rec.jump_times.size() << " -> " << stem << ".csv\n";
    std::cout << "simulate: summary -> " << stem << ".json\n";
    return kOk;
}

int cmd_verify(const RunConfig& c) {
    c.check();
    const AdmissibleParameters p = load(c);
    const Eigen::Index d = pick_level(c, p, std::min<Eigen::Index>(2, p.dim));
    const ProjectedParameters pp = project_params(p, d);
    const JumpSystem js(pp);
    const SymOpd x0 = project(d, c.x0_scale * SymOpd::identity(p.dim));
    std::vector<SymOpd> us;
    for (double s : c.u_scale_list()) us.push_back(test_direction(p.dim, d, s));
    const std::vector<double> times = c.time_grid();
    const MonteCarloOptions mo = mc_options(c);

    const MCReport mc = mc_laplace(js, x0, us, times, c.paths, c.seed, mo);
    const SymOpd u1 = test_direction(p.dim, d, 1.0);
    const auto mart = martingale_residuals(
        js, pp, x0, {TestFunction::Exponential, TestFunction::Linear, TestFunction::Quadratic}, u1, c.paths, times,
        c.seed + 1, mo);
    const CompensatorReport br = bracket_check(js, x0, u1, *std::max_element(times.begin(), times.end()), c.paths,
                                               c.seed + 2, mo);

    const double frac = mc.fraction_within(3.0);
    const bool pass = frac >= 0.95;
    json mj = json::array();
    for (const auto& m : mart) mj.push_back(m.to_json());
    json us_json = json::array();
    for (const auto& u : us) us_json.push_back(sym_json(u));
    const std::string stem = artifact_stem(c, "verify");
    std::ostringstream csv;
    csv << "t,u_id,estimate,stderr,reference,z\n";
    for (const auto& pt : mc.points)
        csv << fmt17(pt.t) << ',' << pt.u_id << ',' << fmt17(pt.estimate) << ',' << fmt17(pt.stderr_) << ','
            << fmt17(pt.reference) << ',' << fmt17(pt.z) << '\n';
    write_text(stem + ".csv", csv.str());
    write_json(stem + ".json", {{"d", d},
                                {"seed", c.seed},
                                {"u", us_json},
                                {"laplace", mc.to_json()},
                                {"martingale", mj},
                                {"bracket", br.to_json()},
                                {"gate", {{"fraction_within_3", frac}, {"required", 0.95}, {"passed", pass}}}});
    std::cout << "verify: " << mc.points.size() << " Laplace points, fraction |z|<=3 = " << fmt17(frac) << " -> "
              << stem << ".csv\n";
    std::cout << "verify: diagnostics -> " << stem << ".json\n";
    return pass ? kOk : kCheckFailed;
}

int cmd_sweep(const RunConfig& c) {
    c.check();
    const AdmissibleParameters p = load(c);
    const std::vector<Eigen::Index> levels = pick_levels(c, p, true);
    // Direction inside the smallest swept block, so every level sees all of u.
    const SymOpd u = test_direction(p.dim, *std::min_element(levels.begin(), levels.end()), first_scale(c));
    const SymOpd x0 = c.x0_scale * SymOpd::identity(p.dim);
    SweepOptions so;
    so.h = c.h();
    so.clamp_tol = c.clamp_tol;
    so.workers = c.workers;
    so.weights = WeightModeld::linear(p.dim);
    if (c.mc) {
        SweepMonteCarlo m;
        m.n_paths = c.paths;
        m.seed = c.seed;
        m.times = c.time_grid();
        m.options = mc_options(c);
        so.mc = m;
    }
    const SweepResult r = sweep(p, u, x0, c.T, levels, p.dim, so);
    bool dominated = true;
    for (const auto& L : r.levels)
        dominated = dominated && L.galerkin_error <= L.bound + 10.0 * L.step_doubling_estimate;
    const std::string stem = artifact_stem(c, "sweep");
    std::ostringstream csv;
    r.write_csv(csv);
    write_text(stem + ".csv", csv.str());
    json j = r.to_json();
    j["bound_dominates_error"] = dominated;
    write_json(stem + ".json", j);
    std::cout << "sweep: " << r.levels.size() << " levels, d_ref=" << r.d_ref << " -> " << stem << ".csv\n";
    std::cout << "sweep: summary -> " << stem << ".json\n";
    return dominated ? kOk : kCheckFailed;
}

int cmd_example(const std::string& name, const RunConfig& c) {
    c.check();
    AdmissibleParameters p;
    if (name == "simple") p = build_simple_example(c.dim, SymOpd::identity(c.dim));
    else if (name == "generic") p = build_generic_example(c.dim, default_generic_inputs(c.dim));
    else throw InvalidInput("example name must be simple or generic");
    const std::string path = artifact_stem(c, "example") + ".json";
    write_json(path, params_to_json(p));
    std::cout << "example: " << name << " D=" << c.dim << " -> " << path << "\n";
    return kOk;
}

int run(int argc, char** argv) {
    CLI::App app{"Finite-rank approximation of affine pure-jump processes on positive Hilbert-Schmidt operators"};
    app.require_subcommand(1);
    RunConfig c;
    std::string example_name;

    auto common = [&](CLI::App* s) {
        s->add_option("--params", c.params_path, "parameter JSON file");
        s->add_option("--out", c.out_dir, "output directory (default $HSAFFINE_OUT or .)");
        s->add_option("--seed", c.seed, "master seed");
        s->add_option("--step", c.step, "solver step h (default 1e-3 T)");
        s->add_option("--clamp-tol", c.clamp_tol, "PSD clamp tolerance");
        s->add_option("--paths", c.paths, "Monte Carlo path count");
        s->add_option("--levels", c.levels, "comma-separated levels")->delimiter(',');
        s->add_option("--level", c.level, "rank level d");
        s->add_option("--T", c.T, "time horizon");
        s->add_option("--dim", c.dim, "ambient dimension D (example)");
        s->add_option("--workers", c.workers, "worker threads");
        s->add_option("--times", c.times, "comma-separated evaluation times")->delimiter(',');
        s->add_option("--u-scales", c.u_scales, "comma-separated scales of the test direction")->delimiter(',');
        s->add_option("--x0-scale", c.x0_scale, "initial state x0 = s I");
    };

    auto* v = app.add_subcommand("validate", "check admissibility of a parameter file");
    common(v);
    v->add_option("--samples", c.validate_samples, "orthogonal pairs to sample");
    auto* r = app.add_subcommand("riccati", "solve the rank-d Riccati system");
    common(r);
    auto* b = app.add_subcommand("bound", "explicit error-bound constants per level");
    common(b);
    auto* s = app.add_subcommand("simulate", "simulate one path of the rank-d process");
    common(s);
    auto* ve = app.add_subcommand("verify", "Monte Carlo checks against the Riccati solution");
    common(ve);
    auto* sw = app.add_subcommand("sweep", "rank sweep of Galerkin errors and bounds");
    common(sw);
    sw->add_flag("--mc", c.mc, "run Monte Carlo at every level");
    auto* ex = app.add_subcommand("example", "write an example parameter set");
    common(ex);
    ex->add_option("name", example_name, "simple or generic")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInputError;
    }
    std::sort(c.levels.begin(), c.levels.end());
    c.levels.erase(std::unique(c.levels.begin(), c.levels.end()), c.levels.end());

    try {
        if (*v) return cmd_validate(c);
        if (*r) return cmd_riccati(c);
        if (*b) return cmd_bound(c);
        if (*s) return cmd_simulate(c);
        if (*ve) return cmd_verify(c);
        if (*sw) return cmd_sweep(c);
        if (*ex) return cmd_example(example_name, c);
    } catch (const ValidationFailed& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kCheckFailed;
    } catch (const ClampBeyondTolerance& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumericalFailure;
    } catch (const NonFiniteState& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumericalFailure;
    } catch (const WindowUnderflow& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumericalFailure;
    } catch (const std::exception& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kInputError;
    }
    return kInputError;
}

}  // namespace hsaffine::cli
