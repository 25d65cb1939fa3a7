#pragma once

#include <string>

#include "bigsl/structure.hpp"

namespace bigsl {

/// "src\tdst\tweight" per nonzero entry, 6-decimal weights, rows then columns ascending.
std::string edge_list_text(const Matrix& a);

/// Header line "bigsl-matrix <rows> <cols> <label>", then one whitespace-separated
/// row per line with shortest round-trip decimals.
std::string matrix_file_text(const Matrix& m, const std::string& label);
Matrix parse_matrix_file(const std::string& text);

/// One line per prototype: "prototype\tcount\tmembers" with comma-separated POI indices.
std::string cluster_summary(const PrototypeSet& p);

}  // namespace bigsl
