#pragma once

#include <map>
#include <string>
#include <vector>

#include "bigsl/matrix.hpp"

namespace bigsl {

/// Named learnable slots with a stable (registration) iteration order.
class ParameterStore {
 public:
  /// Registers a new slot. Names must be unique.
  std::size_t add(const std::string& name, Matrix value);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index_of(const std::string& name) const;
  std::size_t size() const { return values_.size(); }

  const std::string& name(std::size_t i) const { return names_.at(i); }
  const Matrix& value(std::size_t i) const { return values_.at(i); }
  const Matrix& value(const std::string& name) const { return values_[index_of(name)]; }

  /// Replaces a slot's contents; the shape must match the registered one.
  void set(std::size_t i, const Matrix& value);
  void set(const std::string& name, const Matrix& value) { set(index_of(name), value); }

  Matrix& mutable_value(std::size_t i) { return values_.at(i); }

  const std::vector<std::string>& names() const { return names_; }
  std::size_t total_size() const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::map<std::string, std::size_t> index_;
};

/// Gradients aligned with a ParameterStore's slot order.
using Gradients = std::vector<Matrix>;

/// Rescales all gradients so their joint L2 norm is at most max_norm. Returns the pre-clip norm.
double clip_global_norm(Gradients& grads, double max_norm);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments are sized lazily to match the store on first step.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(ParameterStore& params, const Gradients& grads);

  const AdamConfig& config() const { return config_; }
  long long steps() const { return steps_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }
  void restore(long long steps, std::vector<Matrix> m, std::vector<Matrix> v);

 private:
  AdamConfig config_;
  long long steps_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace bigsl
