#include "bigsl/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "bigsl/errors.hpp"

namespace bigsl::ad {

namespace {

void require_same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw Error("operands recorded on different tapes");
}

void require_same(Var a, Var b, const char* op) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), op);
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw NonScalarLoss("expected 1x1, got " + shape_str(v));
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, -1, {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, true, false, -1, {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::parameter(const ParameterStore& store, std::size_t slot) {
  nodes_.push_back(Node{store.value(slot), {}, true, false, static_cast<long>(slot), {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> parents, Backward backward) {
  bool needs = false;
  for (const Var& p : parents) {
    if (p.tape() != this) throw Error("operand recorded on a different tape");
    needs = needs || nodes_[p.id()].needs_grad;
  }
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix& Tape::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::accumulate(int id, const Matrix& g) {
  if (!nodes_[id].needs_grad) return;
  Matrix& buf = grad_buffer(id);
  buf += g;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw Error("loss recorded on a different tape");
  const Matrix& v = value(loss.id());
  if (v.rows() != 1 || v.cols() != 1) throw NonScalarLoss("loss must be 1x1, got " + shape_str(v));
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  grad_buffer(loss.id())(0, 0) = 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.backward) continue;
    // The callback may touch other nodes' buffers but never this node's.
    const Matrix g = n.grad;
    n.backward(*this, g);
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (!n.has_grad) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Gradients Tape::gradients(const ParameterStore& store) const {
  Gradients out;
  out.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    out.push_back(Matrix::Zero(store.value(i).rows(), store.value(i).cols()));
  }
  for (const Node& n : nodes_) {
    if (n.slot >= 0 && n.has_grad) out[static_cast<std::size_t>(n.slot)] += n.grad;
  }
  return out;
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) throw ShapeMismatch("matmul: " + shape_str(a.value()) + " vs " + shape_str(b.value()));
  Tape* t = a.tape();
  const int ia = a.id(), ib = b.id();
  return t->record(a.value() * b.value(), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.needs_grad(ia)) tp.grad_buffer(ia).noalias() += g * tp.value(ib).transpose();
    if (tp.needs_grad(ib)) tp.grad_buffer(ib).noalias() += tp.value(ia).transpose() * g;
  });
}

Var matmul_nt(Var a, Var b) {
  require_same_tape(a, b);
  if (a.cols() != b.cols()) throw ShapeMismatch("matmul_nt: " + shape_str(a.value()) + " vs " + shape_str(b.value()));
  Tape* t = a.tape();
  const int ia = a.id(), ib = b.id();
  return t->record(a.value() * b.value().transpose(), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.needs_grad(ia)) tp.grad_buffer(ia).noalias() += g * tp.value(ib);
    if (tp.needs_grad(ib)) tp.grad_buffer(ib).noalias() += g.transpose() * tp.value(ia);
  });
}

Var transpose(Var a) {
  const int ia = a.id();
  return a.tape()->record(a.value().transpose(), {a},
                          [ia](Tape& tp, const Matrix& g) { tp.grad_buffer(ia) += g.transpose(); });
}

Var add(Var a, Var b) {
  require_same(a, b, "add");
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() + b.value(), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  require_same(a, b, "sub");
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() - b.value(), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    if (tp.needs_grad(ib)) tp.grad_buffer(ib) -= g;
  });
}

Var mul(Var a, Var b) {
  require_same(a, b, "mul");
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.needs_grad(ia)) tp.grad_buffer(ia) += g.cwiseProduct(tp.value(ib));
    if (tp.needs_grad(ib)) tp.grad_buffer(ib) += g.cwiseProduct(tp.value(ia));
  });
}

Var scale(Var a, double s) {
  const int ia = a.id();
  return a.tape()->record(a.value() * s, {a}, [ia, s](Tape& tp, const Matrix& g) { tp.grad_buffer(ia) += g * s; });
}

Var add_row(Var a, Var row) {
  require_same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeMismatch("add_row: " + shape_str(a.value()) + " vs " + shape_str(row.value()));
  }
  const int ia = a.id(), ir = row.id();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape()->record(std::move(out), {a, row}, [ia, ir](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    if (tp.needs_grad(ir)) tp.grad_buffer(ir) += g.colwise().sum();
  });
}

Var row_scale(Var a, Var w) {
  require_same_tape(a, w);
  if (w.cols() != 1 || w.rows() != a.rows()) {
    throw ShapeMismatch("row_scale: " + shape_str(a.value()) + " vs " + shape_str(w.value()));
  }
  const int ia = a.id(), iw = w.id();
  Matrix out = a.value();
  for (Index i = 0; i < out.rows(); ++i) out.row(i) *= w.value()(i, 0);
  return a.tape()->record(std::move(out), {a, w}, [ia, iw](Tape& tp, const Matrix& g) {
    const Matrix& av = tp.value(ia);
    const Matrix& wv = tp.value(iw);
    if (tp.needs_grad(ia)) {
      Matrix& ga = tp.grad_buffer(ia);
      for (Index i = 0; i < g.rows(); ++i) ga.row(i) += g.row(i) * wv(i, 0);
    }
    if (tp.needs_grad(iw)) {
      Matrix& gw = tp.grad_buffer(iw);
      for (Index i = 0; i < g.rows(); ++i) gw(i, 0) += g.row(i).dot(av.row(i));
    }
  });
}

Var sigmoid(Var a) {
  const int ia = a.id();
  Matrix out = ops::sigmoid(a.value());
  Tape* t = a.tape();
  const int io = static_cast<int>(t->size());
  return t->record(std::move(out), {a}, [ia, io](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(io);
    tp.grad_buffer(ia) += g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()));
  });
}

Var tanh(Var a) {
  const int ia = a.id();
  Tape* t = a.tape();
  const int io = static_cast<int>(t->size());
  return t->record(ops::tanh(a.value()), {a}, [ia, io](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(io);
    tp.grad_buffer(ia) += g.cwiseProduct((1.0 - y.array().square()).matrix());
  });
}

Var leaky_relu(Var a, double slope) {
  const int ia = a.id();
  return a.tape()->record(ops::leaky_relu(a.value(), slope), {a}, [ia, slope](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(ia);
    Matrix& ga = tp.grad_buffer(ia);
    for (Index k = 0; k < g.size(); ++k) ga.data()[k] += g.data()[k] * (x.data()[k] > 0.0 ? 1.0 : slope);
  });
}

Var exp(Var a) {
  const int ia = a.id();
  Tape* t = a.tape();
  const int io = static_cast<int>(t->size());
  return t->record(ops::exp(a.value()), {a}, [ia, io](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(ia);
    const Matrix& y = tp.value(io);
    Matrix& ga = tp.grad_buffer(ia);
    for (Index k = 0; k < g.size(); ++k) {
      if (std::abs(x.data()[k]) <= ops::kExpClamp) ga.data()[k] += g.data()[k] * y.data()[k];
    }
  });
}

Var log(Var a) {
  const int ia = a.id();
  return a.tape()->record(ops::log(a.value()), {a}, [ia](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(ia);
    Matrix& ga = tp.grad_buffer(ia);
    for (Index k = 0; k < g.size(); ++k) {
      if (x.data()[k] >= ops::kLogFloor) ga.data()[k] += g.data()[k] / x.data()[k];
    }
  });
}

Var square(Var a) {
  const int ia = a.id();
  return a.tape()->record(a.value().cwiseProduct(a.value()), {a}, [ia](Tape& tp, const Matrix& g) {
    tp.grad_buffer(ia) += 2.0 * g.cwiseProduct(tp.value(ia));
  });
}

Var sum(Var a) {
  const int ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->record(std::move(out), {a}, [ia](Tape& tp, const Matrix& g) {
    tp.grad_buffer(ia).array() += g(0, 0);
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(std::max<Index>(a.value().size(), 1));
  return scale(sum(a), 1.0 / n);
}

Var row_sum(Var a) {
  const int ia = a.id();
  Matrix out = a.value().rowwise().sum();
  return a.tape()->record(std::move(out), {a}, [ia](Tape& tp, const Matrix& g) {
    Matrix& ga = tp.grad_buffer(ia);
    for (Index i = 0; i < ga.rows(); ++i) ga.row(i).array() += g(i, 0);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols: no operands");
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) {
      throw ShapeMismatch("concat_cols: " + shape_str(parts[0].value()) + " vs " + shape_str(p.value()));
    }
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Index> offsets;
  Index off = 0;
  for (const Var& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.cols();
  }
  return parts[0].tape()->record(std::move(out), parts, [ids, offsets](Tape& tp, const Matrix& g) {
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tp.needs_grad(ids[k])) continue;
      Matrix& b = tp.grad_buffer(ids[k]);
      b += g.middleCols(offsets[k], b.cols());
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows: no operands");
  const Index cols = parts[0].cols();
  Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) {
      throw ShapeMismatch("concat_rows: " + shape_str(parts[0].value()) + " vs " + shape_str(p.value()));
    }
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Index> offsets;
  Index off = 0;
  for (const Var& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.rows();
  }
  return parts[0].tape()->record(std::move(out), parts, [ids, offsets](Tape& tp, const Matrix& g) {
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tp.needs_grad(ids[k])) continue;
      Matrix& b = tp.grad_buffer(ids[k]);
      b += g.middleRows(offsets[k], b.rows());
    }
  });
}

Var slice_cols(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ShapeMismatch("slice_cols: " + shape_str(a.value()) + " vs [" + std::to_string(start) + ", +" +
                        std::to_string(count) + ")");
  }
  const int ia = a.id();
  return a.tape()->record(a.value().middleCols(start, count), {a}, [ia, start, count](Tape& tp, const Matrix& g) {
    tp.grad_buffer(ia).middleCols(start, count) += g;
  });
}

Var slice_rows(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw ShapeMismatch("slice_rows: " + shape_str(a.value()) + " vs [" + std::to_string(start) + ", +" +
                        std::to_string(count) + ")");
  }
  const int ia = a.id();
  return a.tape()->record(a.value().middleRows(start, count), {a}, [ia, start, count](Tape& tp, const Matrix& g) {
    tp.grad_buffer(ia).middleRows(start, count) += g;
  });
}

Var gather_rows(Var a, std::span<const int> idx) {
  const Matrix& av = a.value();
  Matrix out(static_cast<Index>(idx.size()), av.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= av.rows()) {
      throw ShapeMismatch("gather_rows: index " + std::to_string(idx[k]) + " outside " + shape_str(av));
    }
    out.row(static_cast<Index>(k)) = av.row(idx[k]);
  }
  const int ia = a.id();
  std::vector<int> ix(idx.begin(), idx.end());
  return a.tape()->record(std::move(out), {a}, [ia, ix = std::move(ix)](Tape& tp, const Matrix& g) {
    Matrix& ga = tp.grad_buffer(ia);
    for (std::size_t k = 0; k < ix.size(); ++k) ga.row(ix[k]) += g.row(static_cast<Index>(k));
  });
}

Var scatter_add_rows(Var a, std::span<const int> idx, Index out_rows) {
  const Matrix& av = a.value();
  if (static_cast<Index>(idx.size()) != av.rows()) {
    throw ShapeMismatch("scatter_add_rows: " + std::to_string(idx.size()) + " indices vs " + shape_str(av));
  }
  Matrix out = Matrix::Zero(out_rows, av.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= out_rows) throw ShapeMismatch("scatter_add_rows: index out of range");
    out.row(idx[k]) += av.row(static_cast<Index>(k));
  }
  const int ia = a.id();
  std::vector<int> ix(idx.begin(), idx.end());
  return a.tape()->record(std::move(out), {a}, [ia, ix = std::move(ix)](Tape& tp, const Matrix& g) {
    Matrix& ga = tp.grad_buffer(ia);
    for (std::size_t k = 0; k < ix.size(); ++k) ga.row(static_cast<Index>(k)) += g.row(ix[k]);
  });
}

Var gather_entries(Var a, std::span<const int> rows, std::span<const int> cols) {
  if (rows.size() != cols.size()) throw ShapeMismatch("gather_entries: row/col index count differ");
  const Matrix& av = a.value();
  Matrix out(static_cast<Index>(rows.size()), 1);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= av.rows() || cols[k] < 0 || cols[k] >= av.cols()) {
      throw ShapeMismatch("gather_entries: index outside " + shape_str(av));
    }
    out(static_cast<Index>(k), 0) = av(rows[k], cols[k]);
  }
  const int ia = a.id();
  std::vector<int> r(rows.begin(), rows.end()), c(cols.begin(), cols.end());
  return a.tape()->record(std::move(out), {a}, [ia, r = std::move(r), c = std::move(c)](Tape& tp, const Matrix& g) {
    Matrix& ga = tp.grad_buffer(ia);
    for (std::size_t k = 0; k < r.size(); ++k) ga(r[k], c[k]) += g(static_cast<Index>(k), 0);
  });
}

Var l2_normalize_rows(Var a) {
  constexpr double kFloor = 1e-12;
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  Matrix norms(av.rows(), 1);
  for (Index i = 0; i < av.rows(); ++i) {
    norms(i, 0) = std::max(av.row(i).norm(), kFloor);
    out.row(i) = av.row(i) / norms(i, 0);
  }
  const int ia = a.id();
  Tape* t = a.tape();
  const int io = static_cast<int>(t->size());
  return t->record(std::move(out), {a}, [ia, io, norms = std::move(norms)](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(io);
    Matrix& ga = tp.grad_buffer(ia);
    for (Index i = 0; i < g.rows(); ++i) {
      const double n = norms(i, 0);
      if (n <= kFloor) {
        ga.row(i) += g.row(i) / n;
      } else {
        ga.row(i) += (g.row(i) - y.row(i) * g.row(i).dot(y.row(i))) / n;
      }
    }
  });
}

Var softmax_rows(Var a) {
  Tape* t = a.tape();
  const int ia = a.id();
  const int io = static_cast<int>(t->size());
  return t->record(ops::softmax_rows(a.value()), {a}, [ia, io](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(io);
    Matrix& ga = tp.grad_buffer(ia);
    for (Index i = 0; i < g.rows(); ++i) {
      const double d = g.row(i).dot(y.row(i));
      ga.row(i) += y.row(i).cwiseProduct((g.row(i).array() - d).matrix());
    }
  });
}

Var segment_softmax(Var scores, std::span<const int> segment, int n_segments) {
  const Matrix& s = scores.value();
  if (s.cols() != 1 || static_cast<Index>(segment.size()) != s.rows()) {
    throw ShapeMismatch("segment_softmax: " + shape_str(s) + " vs " + std::to_string(segment.size()) + " segments");
  }
  std::vector<double> mx(static_cast<std::size_t>(n_segments), -std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < segment.size(); ++k) {
    mx[segment[k]] = std::max(mx[segment[k]], s(static_cast<Index>(k), 0));
  }
  Matrix out(s.rows(), 1);
  std::vector<double> total(static_cast<std::size_t>(n_segments), 0.0);
  for (std::size_t k = 0; k < segment.size(); ++k) {
    out(static_cast<Index>(k), 0) = std::exp(s(static_cast<Index>(k), 0) - mx[segment[k]]);
    total[segment[k]] += out(static_cast<Index>(k), 0);
  }
  for (std::size_t k = 0; k < segment.size(); ++k) out(static_cast<Index>(k), 0) /= total[segment[k]];
  Tape* t = scores.tape();
  const int ia = scores.id();
  const int io = static_cast<int>(t->size());
  std::vector<int> seg(segment.begin(), segment.end());
  return t->record(std::move(out), {scores}, [ia, io, n_segments, seg = std::move(seg)](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(io);
    std::vector<double> dot(static_cast<std::size_t>(n_segments), 0.0);
    for (std::size_t k = 0; k < seg.size(); ++k) dot[seg[k]] += g(static_cast<Index>(k), 0) * y(static_cast<Index>(k), 0);
    Matrix& ga = tp.grad_buffer(ia);
    for (std::size_t k = 0; k < seg.size(); ++k) {
      const Index r = static_cast<Index>(k);
      ga(r, 0) += y(r, 0) * (g(r, 0) - dot[seg[k]]);
    }
  });
}

Var masked_row_normalize(Var s, const std::vector<std::vector<int>>& kept_cols) {
  const Matrix& sv = s.value();
  if (static_cast<Index>(kept_cols.size()) != sv.rows()) {
    throw ShapeMismatch("masked_row_normalize: " + shape_str(sv) + " vs " + std::to_string(kept_cols.size()) + " rows");
  }
  Matrix out = Matrix::Zero(sv.rows(), sv.cols());
  Matrix totals(sv.rows(), 1);
  for (Index i = 0; i < sv.rows(); ++i) {
    double total = 0.0;
    for (int j : kept_cols[i]) total += sv(i, j);
    totals(i, 0) = total;
    if (total > 0.0) {
      for (int j : kept_cols[i]) out(i, j) = sv(i, j) / total;
    }
  }
  Tape* t = s.tape();
  const int ia = s.id();
  const int io = static_cast<int>(t->size());
  return t->record(std::move(out), {s},
                   [ia, io, kept = kept_cols, totals = std::move(totals)](Tape& tp, const Matrix& g) {
                     const Matrix& y = tp.value(io);
                     Matrix& ga = tp.grad_buffer(ia);
                     for (Index i = 0; i < g.rows(); ++i) {
                       const double total = totals(i, 0);
                       if (total <= 0.0) continue;
                       double d = 0.0;
                       for (int j : kept[i]) d += g(i, j) * y(i, j);
                       for (int j : kept[i]) ga(i, j) += (g(i, j) - d) / total;
                     }
                   });
}

Var cross_entropy(Var logits, std::span<const int> targets, std::span<const unsigned char> allowed) {
  const Matrix& z = logits.value();
  if (static_cast<Index>(targets.size()) != z.rows()) {
    throw ShapeMismatch("cross_entropy: " + shape_str(z) + " vs " + std::to_string(targets.size()) + " targets");
  }
  if (!allowed.empty() && static_cast<Index>(allowed.size()) != z.size()) {
    throw ShapeMismatch("cross_entropy: mask size does not match " + shape_str(z));
  }
  const Index cols = z.cols();
  auto ok = [&](Index i, Index j) { return allowed.empty() || allowed[static_cast<std::size_t>(i * cols + j)] != 0; };
  Matrix probs = Matrix::Zero(z.rows(), cols);
  double loss = 0.0;
  for (Index i = 0; i < z.rows(); ++i) {
    const int tgt = targets[static_cast<std::size_t>(i)];
    if (tgt < 0 || tgt >= cols || !ok(i, tgt)) {
      throw InvalidTarget("target " + std::to_string(tgt) + " invalid for row " + std::to_string(i));
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < cols; ++j)
      if (ok(i, j)) mx = std::max(mx, z(i, j));
    double total = 0.0;
    for (Index j = 0; j < cols; ++j) {
      if (!ok(i, j)) continue;
      probs(i, j) = std::exp(z(i, j) - mx);
      total += probs(i, j);
    }
    probs.row(i) /= total;
    loss -= (z(i, tgt) - mx) - std::log(total);
  }
  Matrix out(1, 1);
  out(0, 0) = loss;
  const int ia = logits.id();
  std::vector<int> tg(targets.begin(), targets.end());
  return logits.tape()->record(std::move(out), {logits},
                               [ia, probs = std::move(probs), tg = std::move(tg)](Tape& tp, const Matrix& g) {
                                 Matrix& ga = tp.grad_buffer(ia);
                                 const double s = g(0, 0);
                                 ga += s * probs;
                                 for (std::size_t i = 0; i < tg.size(); ++i) ga(static_cast<Index>(i), tg[i]) -= s;
                               });
}

}  // namespace bigsl::ad
