#include "bigsl/params.hpp"

#include <cmath>

#include "bigsl/errors.hpp"

namespace bigsl {

std::size_t ParameterStore::add(const std::string& name, Matrix value) {
  if (index_.count(name)) throw Error("duplicate parameter name: " + name);
  index_[name] = values_.size();
  names_.push_back(name);
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::size_t ParameterStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter: " + name);
  return it->second;
}

void ParameterStore::set(std::size_t i, const Matrix& value) {
  Matrix& slot = values_.at(i);
  if (slot.rows() != value.rows() || slot.cols() != value.cols()) {
    throw ShapeMismatch("parameter " + names_[i] + ": " + shape_str(slot) + " vs " + shape_str(value));
  }
  slot = value;
}

std::size_t ParameterStore::total_size() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

double clip_global_norm(Gradients& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads) g *= s;
  }
  return norm;
}

void Adam::step(ParameterStore& params, const Gradients& grads) {
  if (grads.size() != params.size()) throw ShapeMismatch("adam: gradient count does not match parameter count");
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.push_back(Matrix::Zero(params.value(i).rows(), params.value(i).cols()));
      v_.push_back(Matrix::Zero(params.value(i).rows(), params.value(i).cols()));
    }
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads[i];
    require_same_shape(params.value(i), g, "adam");
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
    Matrix& w = params.mutable_value(i);
    for (Index k = 0; k < w.size(); ++k) {
      const double mh = m_[i].data()[k] / c1;
      const double vh = v_[i].data()[k] / c2;
      w.data()[k] -= config_.lr * mh / (std::sqrt(vh) + config_.eps);
    }
  }
}

void Adam::restore(long long steps, std::vector<Matrix> m, std::vector<Matrix> v) {
  steps_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace bigsl
