#pragma once

#include <functional>
#include <span>
#include <vector>

#include "bigsl/matrix.hpp"
#include "bigsl/params.hpp"

namespace bigsl::ad {

class Tape;

/// Handle to a matrix-valued node on a Tape. Cheap to copy.
class Var {
 public:
  Var() = default;
  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode recorder. Nodes are appended in evaluation order, so the
/// reverse sweep in backward() visits them in a valid topological order.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& grad_out)>;

  Var constant(Matrix value);
  Var variable(Matrix value);
  /// Leaf bound to a parameter slot; gradients() reports its gradient under that slot.
  Var parameter(const ParameterStore& store, std::size_t slot);
  Var parameter(const ParameterStore& store, const std::string& name) {
    return parameter(store, store.index_of(name));
  }

  /// Records a derived node. `backward` is dropped when no parent needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> parents, Backward backward);
  Var record(Matrix value, std::span<const Var> parents, Backward backward);

  const Matrix& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  /// Adds `g` into the gradient of node `id` (no-op for constants).
  void accumulate(int id, const Matrix& g);
  /// Direct access to a gradient buffer, zero-initialized on first use.
  Matrix& grad_buffer(int id);

  /// Seeds d(loss)/d(loss) = 1 and sweeps backwards. Throws NonScalarLoss unless loss is 1×1.
  void backward(Var loss);
  /// Gradient of a node after backward(); zero matrix if nothing reached it.
  Matrix grad(Var v) const;
  /// Per-slot gradients for `store`; slots never bound to the tape get zeros.
  Gradients gradients(const ParameterStore& store) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    bool has_grad = false;
    long slot = -1;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// Primitive set. Every op checks shapes and raises ShapeMismatch naming both operands.

Var matmul(Var a, Var b);
/// a · bᵀ
Var matmul_nt(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Element-wise product.
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// Adds a 1×c row vector to every row of a.
Var add_row(Var a, Var row);
/// Multiplies row i of a (r×c) by w(i, 0) where w is r×1.
Var row_scale(Var a, Var w);

Var sigmoid(Var a);
Var tanh(Var a);
Var leaky_relu(Var a, double slope = ops::kLeakySlope);
Var exp(Var a);
Var log(Var a);
Var square(Var a);

Var sum(Var a);
Var mean(Var a);
Var row_sum(Var a);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, Index start, Index count);
Var slice_rows(Var a, Index start, Index count);
Var gather_rows(Var a, std::span<const int> idx);
/// out(idx[k]) += a(k) for an out matrix with `out_rows` rows.
Var scatter_add_rows(Var a, std::span<const int> idx, Index out_rows);
/// Entries a(rows[k], cols[k]) as an E×1 column.
Var gather_entries(Var a, std::span<const int> rows, std::span<const int> cols);

/// Row-wise L2 normalization; rows with norm below 1e-12 are divided by 1e-12.
Var l2_normalize_rows(Var a);
Var softmax_rows(Var a);
/// Softmax of an E×1 score column within groups given by `segment` (values in [0, n_segments)).
Var segment_softmax(Var scores, std::span<const int> segment, int n_segments);
/// A(i,j) = mask(i,j)·S(i,j) / Σ_k mask(i,k)·S(i,k). Rows with zero mass stay zero.
Var masked_row_normalize(Var s, const std::vector<std::vector<int>>& kept_cols);
/// Σ_i −log softmax(logits_i)[target_i], optionally restricted to allowed columns per row.
/// `allowed` is either empty (all columns) or a row-major r×c 0/1 mask.
Var cross_entropy(Var logits, std::span<const int> targets, std::span<const unsigned char> allowed = {});

}  // namespace bigsl::ad
