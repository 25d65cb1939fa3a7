#include "bigsl/export.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "bigsl/errors.hpp"

namespace bigsl {

std::string edge_list_text(const Matrix& a) {
  std::string out;
  char buf[96];
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      if (a(i, j) == 0.0) continue;
      std::snprintf(buf, sizeof(buf), "%lld\t%lld\t%.6f\n", static_cast<long long>(i), static_cast<long long>(j), a(i, j));
      out += buf;
    }
  }
  return out;
}

std::string matrix_file_text(const Matrix& m, const std::string& label) {
  std::string out = "bigsl-matrix " + std::to_string(m.rows()) + " " + std::to_string(m.cols()) + " " +
                    (label.empty() ? std::string("-") : label) + "\n";
  char buf[64];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), m(i, j));
      if (j) out += ' ';
      out.append(buf, p);
    }
    out += '\n';
  }
  return out;
}

Matrix parse_matrix_file(const std::string& text) {
  std::istringstream in(text);
  std::string magic, label;
  long long rows = -1, cols = -1;
  if (!(in >> magic >> rows >> cols >> label) || magic != "bigsl-matrix" || rows < 0 || cols < 0) {
    throw FormatError("bad matrix file header");
  }
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) {
    std::string tok;
    if (!(in >> tok)) throw FormatError("matrix file truncated");
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), m.data()[i]);
    if (ec != std::errc() || p != tok.data() + tok.size()) throw FormatError("bad matrix entry: " + tok);
  }
  return m;
}

std::string cluster_summary(const PrototypeSet& p) {
  std::vector<std::vector<int>> members(static_cast<std::size_t>(p.k));
  for (std::size_t i = 0; i < p.assignments.size(); ++i) members.at(static_cast<std::size_t>(p.assignments[i])).push_back(static_cast<int>(i));
  std::string out;
  for (int c = 0; c < p.k; ++c) {
    out += std::to_string(c) + "\t" + std::to_string(members[c].size()) + "\t";
    for (std::size_t k = 0; k < members[c].size(); ++k) out += (k ? "," : "") + std::to_string(members[c][k]);
    out += "\n";
  }
  return out;
}

}  // namespace bigsl
