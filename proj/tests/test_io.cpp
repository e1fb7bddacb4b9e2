#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hsaffine/io.hpp"
#include "hsaffine/riccati.hpp"

using namespace hsaffine;
using nlohmann::json;

namespace {

void expect_same(const AdmissibleParameters& a, const AdmissibleParameters& b) {
    ASSERT_EQ(a.dim, b.dim);
    EXPECT_EQ(a.b, b.b);
    EXPECT_EQ(a.B.to_dense(), b.B.to_dense());
    EXPECT_EQ(a.B.is_structured(), b.B.is_structured());
    ASSERT_EQ(a.m.atoms.size(), b.m.atoms.size());
    for (std::size_t k = 0; k < a.m.atoms.size(); ++k) {
        EXPECT_EQ(a.m.atoms[k].xi, b.m.atoms[k].xi);
        EXPECT_EQ(a.m.atoms[k].w, b.m.atoms[k].w);
    }
    ASSERT_EQ(a.mu.atoms.size(), b.mu.atoms.size());
    for (std::size_t k = 0; k < a.mu.atoms.size(); ++k) {
        EXPECT_EQ(a.mu.atoms[k].xi, b.mu.atoms[k].xi);
        EXPECT_EQ(a.mu.atoms[k].G, b.mu.atoms[k].G);
    }
}

AdmissibleParameters reparse(const AdmissibleParameters& p) {
    return params_from_json(json::parse(dump_json(params_to_json(p))));
}

json minimal(int D) {
    json z = json::array();
    for (int i = 0; i < D; ++i) z.push_back(std::vector<double>(static_cast<std::size_t>(D), 0.0));
    return {{"dim", D}, {"b", z}, {"B", {{"kind", "structured"}, {"C", z}}}};
}

}  // namespace

TEST(Fmt17, RoundTripsDoubles) {
    for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, std::nextafter(1.0, 2.0)})
        EXPECT_EQ(std::stod(fmt17(x)), x);
    EXPECT_EQ(fmt17(0.1), "0.10000000000000001");
}

TEST(DumpJson, NonFiniteBecomesNullAndNumbersKeepPrecision) {
    const json j{{"a", std::numeric_limits<double>::quiet_NaN()}, {"b", 1.0 / 3.0}, {"c", {1, 2}}, {"d", "x"}};
    const std::string s = dump_json(j);
    EXPECT_NE(s.find("\"a\": null"), std::string::npos);
    EXPECT_NE(s.find("0.33333333333333331"), std::string::npos);
    const json back = json::parse(s);
    EXPECT_EQ(back["b"].get<double>(), 1.0 / 3.0);
    EXPECT_EQ(back["d"], "x");
}

TEST(ParamsJson, RoundTripStructured) {
    for (std::uint64_t s = 1; s <= 10; ++s) {
        const AdmissibleParameters p = random_admissible(1 + s % 5, s);
        expect_same(p, reparse(p));
    }
    const AdmissibleParameters g = build_generic_example(4, default_generic_inputs(4));
    expect_same(g, reparse(g));
    expect_same(reparse(g), reparse(reparse(g)));
}

TEST(ParamsJson, RoundTripDense) {
    AdmissibleParameters p = random_admissible(3, 5);
    p.B = p.B.densified();
    const AdmissibleParameters q = reparse(p);
    EXPECT_FALSE(q.B.is_structured());
    expect_same(p, q);
}

TEST(ParamsJson, DenseAcceptsNestedRowsAndOmittedKind) {
    const int D = 2;
    json j = minimal(D);
    j["B"] = {{"matrix", {{1, 0, 0}, {0, 2, 0}, {0, 0, 3}}}};
    const AdmissibleParameters p = params_from_json(j);
    EXPECT_EQ(p.B.to_dense(), Eigen::Vector3d(1, 2, 3).asDiagonal().toDenseMatrix());
}

TEST(ParamsJson, FileRoundTrip) {
    const auto path = std::filesystem::temp_directory_path() / "hsaffine_io_roundtrip.json";
    const AdmissibleParameters p = random_admissible(4, 9);
    save_params(path.string(), p);
    expect_same(p, load_params(path.string()));
    std::filesystem::remove(path);
}

TEST(ParamsJson, SchemaErrors) {
    EXPECT_NO_THROW(params_from_json(minimal(2)));
    {
        json j = minimal(2);
        j.erase("dim");
        EXPECT_THROW(params_from_json(j), SchemaError);
    }
    {
        json j = minimal(2);
        j["b"][0][1] = 1.0;
        EXPECT_THROW(params_from_json(j), SchemaError);
    }
    {
        json j = minimal(2);
        j["b"] = {{0, 0}};
        EXPECT_THROW(params_from_json(j), SchemaError);
    }
    {
        json j = minimal(2);
        j["B"]["kind"] = "spectral";
        EXPECT_THROW(params_from_json(j), SchemaError);
    }
    {
        json j = minimal(2);
        j["m"] = {{{"xi", {{-1, 0}, {0, 0}}}, {"w", 1}}};
        EXPECT_THROW(params_from_json(j), SchemaError);
    }
    {
        json j = minimal(2);
        j["m"] = {{{"xi", {{1, 0}, {0, 0}}}}};
        EXPECT_THROW(params_from_json(j), SchemaError);
    }
    {
        json j = minimal(2);
        j["dim"] = 0;
        EXPECT_THROW(params_from_json(j), SchemaError);
    }
    {
        json j = minimal(2);
        j["B"] = {{"kind", "dense"}, {"matrix", {1, 2, 3}}};
        EXPECT_THROW(params_from_json(j), SchemaError);
    }
}

TEST(ParamsJson, MalformedFile) {
    const auto path = std::filesystem::temp_directory_path() / "hsaffine_io_bad.json";
    {
        std::ofstream out(path);
        out << "{\"dim\": 2, \"b\": [[0, 0], [0";
    }
    EXPECT_THROW(load_params(path.string()), SchemaError);
    std::filesystem::remove(path);
    EXPECT_THROW(load_params("/nonexistent/params.json"), SchemaError);
}

TEST(RiccatiCsv, HeaderNamesCoordinates) {
    const RiccatiSolution s = solve_riccati(zero_parameters(2), 2, SymOpd::identity(2), 0.01, 0.005);
    std::ostringstream os;
    write_csv(os, s);
    const std::string text = os.str();
    EXPECT_EQ(text.substr(0, text.find('\n')), "t,phi,psi_1_1,psi_1_2,psi_2_2");
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
}
