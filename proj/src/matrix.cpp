#include "bigsl/matrix.hpp"

#include <cmath>

#include "bigsl/errors.hpp"

namespace bigsl {

double Rng::normal() {
  // Box-Muller; the second variate is discarded so the stream stays simple to replay.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t derive_seed(std::uint64_t base, const std::string& label) {
  // FNV-1a over the label, mixed with the base seed through splitmix64.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (h | 1ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string shape_str(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeMismatch(std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
  }
}

Matrix init_uniform(Index rows, Index cols, Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(fan_in, 1)));
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

namespace ops {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeMismatch("matmul: " + shape_str(a) + " vs " + shape_str(b));
  return a * b;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  return a + b;
}

Matrix concat_cols(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeMismatch("concat_cols: " + shape_str(a) + " vs " + shape_str(b));
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

Matrix sigmoid(const Matrix& a) {
  return a.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-std::clamp(x, -kExpClamp, kExpClamp))); });
}

Matrix tanh(const Matrix& a) {
  return a.unaryExpr([](double x) { return std::tanh(x); });
}

Matrix leaky_relu(const Matrix& a, double slope) {
  return a.unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
}

Matrix softmax_rows(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    const double mx = a.row(i).maxCoeff();
    double total = 0.0;
    for (Index j = 0; j < a.cols(); ++j) {
      out(i, j) = std::exp(a(i, j) - mx);
      total += out(i, j);
    }
    out.row(i) /= total;
  }
  return out;
}

Matrix log(const Matrix& a) {
  return a.unaryExpr([](double x) { return std::log(std::max(x, kLogFloor)); });
}

Matrix exp(const Matrix& a) {
  return a.unaryExpr([](double x) { return std::exp(std::clamp(x, -kExpClamp, kExpClamp)); });
}

Matrix l2_normalize_rows(const Matrix& a) {
  Matrix out = a;
  for (Index i = 0; i < a.rows(); ++i) {
    const double n = a.row(i).norm();
    if (n > 0.0) out.row(i) /= n;
  }
  return out;
}

double cosine(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "cosine");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw ZeroVectorRow(0);
  return a.cwiseProduct(b).sum() / (na * nb);
}

double mean(const Matrix& a) { return a.size() == 0 ? 0.0 : a.sum() / static_cast<double>(a.size()); }

double squared_norm(const Matrix& a) { return a.squaredNorm(); }

bool all_finite(const Matrix& a) { return a.allFinite(); }

}  // namespace ops
}  // namespace bigsl
