#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace bigsl {

/// Dense row-major matrix of doubles. Vectors are represented as 1×n or n×1 matrices.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

/// Seeded generator used for every stochastic decision in the library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 bits of mantissa; avoids library-specific distributions.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// Derives an independent stream seed from a base seed and a label.
std::uint64_t derive_seed(std::uint64_t base, const std::string& label);

std::string shape_str(const Matrix& m);
void require_same_shape(const Matrix& a, const Matrix& b, const char* op);

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Matrix init_uniform(Index rows, Index cols, Index fan_in, Rng& rng);

namespace ops {

constexpr double kLeakySlope = 0.01;
constexpr double kLogFloor = 1e-12;
constexpr double kExpClamp = 60.0;

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix concat_cols(const Matrix& a, const Matrix& b);
Matrix sigmoid(const Matrix& a);
Matrix tanh(const Matrix& a);
Matrix leaky_relu(const Matrix& a, double slope = kLeakySlope);
Matrix softmax_rows(const Matrix& a);
Matrix log(const Matrix& a);
Matrix exp(const Matrix& a);
Matrix l2_normalize_rows(const Matrix& a);
double cosine(const Matrix& a, const Matrix& b);
double mean(const Matrix& a);
double squared_norm(const Matrix& a);
bool all_finite(const Matrix& a);

}  // namespace ops
}  // namespace bigsl
