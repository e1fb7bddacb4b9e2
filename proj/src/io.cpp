#include "hsaffine/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hsaffine {

using nlohmann::json;

std::string fmt17(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string coord_name(const std::string& prefix, Eigen::Index i, Eigen::Index j) {
    return prefix + "_" + std::to_string(i + 1) + "_" + std::to_string(j + 1);
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

json sym_to_json(const SymOpd& s) { return matrix_to_json(s.matrix()); }

json params_to_json(const AdmissibleParameters& p) {
    json j;
    j["dim"] = p.dim;
    j["b"] = sym_to_json(p.b);
    json B;
    if (const auto* s = p.B.as_structured()) {
        B["kind"] = "structured";
        B["C"] = matrix_to_json(s->C);
        json cs = json::array();
        for (const auto& c : s->couplings) cs.push_back({{"A", sym_to_json(c.A)}, {"H", sym_to_json(c.H)}});
        B["couplings"] = std::move(cs);
    } else {
        B["kind"] = "dense";
        const Eigen::MatrixXd L = p.B.to_dense();
        json flat = json::array();
        for (Eigen::Index r = 0; r < L.rows(); ++r)
            for (Eigen::Index c = 0; c < L.cols(); ++c) flat.push_back(L(r, c));
        B["matrix"] = std::move(flat);
    }
    j["B"] = std::move(B);
    json m = json::array();
    for (const auto& a : p.m.atoms) m.push_back({{"xi", sym_to_json(a.xi)}, {"w", a.w}});
    j["m"] = std::move(m);
    json mu = json::array();
    for (const auto& a : p.mu.atoms) mu.push_back({{"xi", sym_to_json(a.xi)}, {"G", sym_to_json(a.G)}});
    j["mu"] = std::move(mu);
    return j;
}

namespace {

const json& require(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw SchemaError(where + ": missing field \"" + key + "\"");
    return j.at(key);
}

double number(const json& j, const std::string& where) {
    if (!j.is_number()) throw SchemaError(where + ": expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw SchemaError(where + ": number is not finite");
    return v;
}

Eigen::MatrixXd parse_matrix(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& where) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
        throw SchemaError(where + ": expected " + std::to_string(rows) + " rows");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const json& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw SchemaError(where + ": row " + std::to_string(i) + " must have " + std::to_string(cols) + " entries");
        for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = number(row[static_cast<std::size_t>(k)], where);
    }
    return m;
}

SymOpd parse_sym(const json& j, Eigen::Index D, const std::string& where) {
    const Eigen::MatrixXd m = parse_matrix(j, D, D, where);
    try {
        return SymOpd::from_symmetric(m, 1e-12);
    } catch (const InvalidInput& e) {
        throw SchemaError(where + ": " + e.what());
    }
}

LinearDriftd parse_drift(const json& j, Eigen::Index D) {
    if (!j.is_object()) throw SchemaError("B: expected an object");
    std::string kind;
    if (j.contains("kind")) {
        if (!j.at("kind").is_string()) throw SchemaError("B.kind: expected a string");
        kind = j.at("kind").get<std::string>();
    } else if (j.contains("matrix")) {
        kind = "dense";
    } else {
        throw SchemaError("B: missing field \"kind\"");
    }
    if (kind == "structured") {
        Eigen::MatrixXd C = parse_matrix(require(j, "C", "B"), D, D, "B.C");
        std::vector<Coupling<double>> cs;
        if (j.contains("couplings")) {
            const json& arr = j.at("couplings");
            if (!arr.is_array()) throw SchemaError("B.couplings: expected an array");
            for (std::size_t k = 0; k < arr.size(); ++k) {
                const std::string w = "B.couplings[" + std::to_string(k) + "]";
                cs.push_back({parse_sym(require(arr[k], "A", w), D, w + ".A"),
                              parse_sym(require(arr[k], "H", w), D, w + ".H")});
            }
        }
        return LinearDriftd::structured(std::move(C), std::move(cs));
    }
    if (kind == "dense") {
        const Eigen::Index n = coord_count(D);
        const json& mj = require(j, "matrix", "B");
        if (!mj.is_array()) throw SchemaError("B.matrix: expected an array");
        Eigen::MatrixXd L(n, n);
        if (!mj.empty() && mj[0].is_array()) {
            L = parse_matrix(mj, n, n, "B.matrix");
        } else {
            if (static_cast<Eigen::Index>(mj.size()) != n * n)
                throw SchemaError("B.matrix: expected " + std::to_string(n * n) + " entries");
            for (Eigen::Index r = 0; r < n; ++r)
                for (Eigen::Index c = 0; c < n; ++c) L(r, c) = number(mj[static_cast<std::size_t>(r * n + c)], "B.matrix");
        }
        return LinearDriftd::dense(D, std::move(L));
    }
    throw SchemaError("B.kind: unknown kind \"" + kind + "\"");
}

void dump_rec(std::ostringstream& os, const json& j, int indent, int level) {
    const std::string pad = indent > 0 ? std::string(static_cast<std::size_t>(indent * (level + 1)), ' ') : "";
    const std::string pad_end = indent > 0 ? std::string(static_cast<std::size_t>(indent * level), ' ') : "";
    const char* nl = indent > 0 ? "\n" : "";
    switch (j.type()) {
        case json::value_t::object: {
            if (j.empty()) { os << "{}"; return; }
            os << '{' << nl;
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) os << ',' << nl;
                first = false;
                os << pad << json(it.key()).dump() << (indent > 0 ? ": " : ":");
                dump_rec(os, it.value(), indent, level + 1);
            }
            os << nl << pad_end << '}';
            return;
        }
        case json::value_t::array: {
            if (j.empty()) { os << "[]"; return; }
            const bool flat = std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_primitive(); });
            if (flat) {
                os << '[';
                for (std::size_t k = 0; k < j.size(); ++k) {
                    if (k) os << (indent > 0 ? ", " : ",");
                    dump_rec(os, j[k], indent, level + 1);
                }
                os << ']';
                return;
            }
            os << '[' << nl;
            for (std::size_t k = 0; k < j.size(); ++k) {
                if (k) os << ',' << nl;
                os << pad;
                dump_rec(os, j[k], indent, level + 1);
            }
            os << nl << pad_end << ']';
            return;
        }
        case json::value_t::number_float: {
            const double v = j.get<double>();
            if (std::isfinite(v)) os << fmt17(v);
            else os << "null";
            return;
        }
        default:
            os << j.dump();
    }
}

}  // namespace

AdmissibleParameters params_from_json(const json& j) {
    if (!j.is_object()) throw SchemaError("parameter file: top level must be an object");
    const json& dj = require(j, "dim", "parameter file");
    if (!dj.is_number_integer() || dj.get<long long>() < 1) throw SchemaError("dim: expected a positive integer");
    const auto D = static_cast<Eigen::Index>(dj.get<long long>());

    SymOpd b = parse_sym(require(j, "b", "parameter file"), D, "b");
    LinearDriftd B = parse_drift(require(j, "B", "parameter file"), D);

    AtomicMeasure m;
    if (j.contains("m")) {
        const json& arr = j.at("m");
        if (!arr.is_array()) throw SchemaError("m: expected an array");
        for (std::size_t k = 0; k < arr.size(); ++k) {
            const std::string w = "m[" + std::to_string(k) + "]";
            m.atoms.push_back({parse_sym(require(arr[k], "xi", w), D, w + ".xi"), number(require(arr[k], "w", w), w + ".w")});
        }
    }
    OperatorValuedMeasure mu;
    if (j.contains("mu")) {
        const json& arr = j.at("mu");
        if (!arr.is_array()) throw SchemaError("mu: expected an array");
        for (std::size_t k = 0; k < arr.size(); ++k) {
            const std::string w = "mu[" + std::to_string(k) + "]";
            mu.atoms.push_back({parse_sym(require(arr[k], "xi", w), D, w + ".xi"),
                                parse_sym(require(arr[k], "G", w), D, w + ".G")});
        }
    }
    try {
        return make_parameters(std::move(b), std::move(B), std::move(m), std::move(mu));
    } catch (const std::invalid_argument& e) {
        throw SchemaError(e.what());
    }
}

AdmissibleParameters load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open parameter file " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("malformed JSON: ") + e.what());
    }
    return params_from_json(j);
}

void save_params(const std::string& path, const AdmissibleParameters& p) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << dump_json(params_to_json(p)) << '\n';
}

std::string dump_json(const json& j, int indent) {
    std::ostringstream os;
    dump_rec(os, j, indent, 0);
    return os.str();
}

}  // namespace hsaffine
