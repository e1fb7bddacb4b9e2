#ifndef HSAFFINE_IO_HPP
#define HSAFFINE_IO_HPP

#include <string>

#include <json.hpp>

#include "hsaffine/params.hpp"

namespace hsaffine {

/// 17 significant digits ("%.17g").
std::string fmt17(double x);

/// 1-based coordinate name of basis element (i, j), e.g. "psi_1_2".
std::string coord_name(const std::string& prefix, Eigen::Index i, Eigen::Index j);

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
nlohmann::json sym_to_json(const SymOpd& s);

nlohmann::json params_to_json(const AdmissibleParameters& p);

/// Parses and validates the parameter schema; throws SchemaError on any violation.
AdmissibleParameters params_from_json(const nlohmann::json& j);

AdmissibleParameters load_params(const std::string& path);
void save_params(const std::string& path, const AdmissibleParameters& p);

/// Serializes JSON with every number rendered by fmt17.
std::string dump_json(const nlohmann::json& j, int indent = 2);

}  // namespace hsaffine

#endif  // HSAFFINE_IO_HPP
