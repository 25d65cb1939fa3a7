#include "bigsl/fusion.hpp"

#include <numeric>

#include "bigsl/errors.hpp"

namespace bigsl {

NegativePolicy NegativePolicy::for_size(std::size_t n, std::size_t cap, std::uint64_t seed) {
  NegativePolicy p;
  p.full = n <= cap + 1;
  p.sample_size = cap;
  p.seed = seed;
  return p;
}

std::vector<unsigned char> infonce_mask(std::size_t n, const NegativePolicy& negatives) {
  std::vector<unsigned char> mask(n * 2 * n, 0);
  auto at = [&](std::size_t i, std::size_t j) -> unsigned char& { return mask[i * 2 * n + j]; };
  if (negatives.full || negatives.sample_size + 1 >= n) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        at(i, j) = 1;
        if (j != i) at(i, n + j) = 1;
      }
    }
    return mask;
  }
  Rng rng(negatives.seed);
  std::vector<int> pool(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    at(i, i) = 1;
    std::size_t w = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) pool[w++] = static_cast<int>(j);
    // Partial Fisher-Yates: the first sample_size entries form the sample.
    for (std::size_t k = 0; k < negatives.sample_size; ++k) {
      const std::size_t r = k + static_cast<std::size_t>(rng.below(pool.size() - k));
      std::swap(pool[k], pool[r]);
      at(i, static_cast<std::size_t>(pool[k])) = 1;
      at(i, n + static_cast<std::size_t>(pool[k])) = 1;
    }
  }
  return mask;
}

ad::Var shared_representation(std::span<const ad::Var> per_view) {
  if (per_view.size() < 2) throw ViewCountTooSmall("shared representation needs at least 2 views");
  ad::Var total = per_view[0];
  for (std::size_t v = 1; v < per_view.size(); ++v) total = ad::add(total, per_view[v]);
  return ad::scale(total, 1.0 / static_cast<double>(per_view.size()));
}

ad::Var shared_loss(std::span<const ad::Var> per_view, ad::Var shared, double tau2, const NegativePolicy& negatives) {
  const Index n = shared.rows();
  const auto mask = infonce_mask(static_cast<std::size_t>(n), negatives);
  std::vector<int> targets(static_cast<std::size_t>(n));
  std::iota(targets.begin(), targets.end(), 0);
  ad::Var shared_n = ad::l2_normalize_rows(shared);
  ad::Var total;
  for (const ad::Var& pv : per_view) {
    ad::Var pn = ad::l2_normalize_rows(pv);
    const std::array<ad::Var, 2> parts{ad::matmul_nt(pn, shared_n), ad::matmul_nt(pn, pn)};
    ad::Var logits = ad::scale(ad::concat_cols(parts), 1.0 / tau2);
    ad::Var term = ad::cross_entropy(logits, targets, mask);
    total = total.valid() ? ad::add(total, term) : term;
  }
  return ad::scale(total, 1.0 / (static_cast<double>(n) * static_cast<double>(per_view.size())));
}

std::vector<ad::Var> specific_representations(std::span<const ad::Var> per_view, ad::Var shared) {
  std::vector<ad::Var> out;
  for (const ad::Var& pv : per_view) out.push_back(ad::sub(pv, shared));
  return out;
}

ad::Var orthogonality_loss(std::span<const ad::Var> specific) {
  if (specific.size() < 2) throw ViewCountTooSmall("orthogonality loss needs at least 2 views");
  const Index n = specific[0].rows();
  ad::Var total;
  for (std::size_t v = 0; v < specific.size(); ++v) {
    for (std::size_t u = 0; u < specific.size(); ++u) {
      if (u == v) continue;
      ad::Var term = ad::sum(ad::square(ad::row_sum(ad::mul(specific[v], specific[u]))));
      total = total.valid() ? ad::add(total, term) : term;
    }
  }
  return ad::scale(total, 1.0 / static_cast<double>(n));
}

ad::Var attentive_fuse(ad::Var shared, std::span<const ad::Var> specific, ad::Var a2, ad::Var* weights_out) {
  if (a2.rows() != 1 || a2.cols() != shared.cols()) {
    throw ShapeMismatch("attentive_fuse: a2 " + shape_str(a2.value()) + " vs " + shape_str(shared.value()));
  }
  std::vector<ad::Var> parts{shared};
  parts.insert(parts.end(), specific.begin(), specific.end());
  std::vector<ad::Var> logits;
  for (const ad::Var& p : parts) logits.push_back(ad::matmul_nt(p, a2));
  ad::Var weights = ad::softmax_rows(ad::concat_cols(logits));
  if (weights_out) *weights_out = weights;
  ad::Var fused;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    ad::Var term = ad::row_scale(parts[k], ad::slice_cols(weights, static_cast<Index>(k), 1));
    fused = fused.valid() ? ad::add(fused, term) : term;
  }
  return fused;
}

ad::Var enrich_embedding(ad::Var id_embeddings, ad::Var fused, ad::Var w_inj) {
  if (w_inj.rows() != id_embeddings.cols() || w_inj.cols() != fused.cols() || fused.rows() != id_embeddings.rows()) {
    throw ShapeMismatch("enrich_embedding: " + shape_str(id_embeddings.value()) + ", " + shape_str(fused.value()) +
                        ", W_inj " + shape_str(w_inj.value()));
  }
  return ad::add(id_embeddings, ad::matmul_nt(fused, w_inj));
}

namespace {

std::vector<ad::Var> constants(ad::Tape& tape, const std::vector<Matrix>& ms) {
  std::vector<ad::Var> out;
  for (const Matrix& m : ms) out.push_back(tape.constant(m));
  return out;
}

void require_views(const std::vector<Matrix>& views) {
  if (views.size() < 2) throw ViewCountTooSmall("need at least 2 views, got " + std::to_string(views.size()));
  for (const Matrix& v : views) require_same_shape(views[0], v, "fusion");
}

}  // namespace

Matrix shared_representation(const std::vector<Matrix>& per_view) {
  require_views(per_view);
  ad::Tape tape;
  return shared_representation(constants(tape, per_view)).value();
}

double shared_loss(const std::vector<Matrix>& per_view, const Matrix& shared, double tau2,
                   const NegativePolicy& negatives) {
  ad::Tape tape;
  return shared_loss(constants(tape, per_view), tape.constant(shared), tau2, negatives).scalar();
}

std::vector<Matrix> specific_representations(const std::vector<Matrix>& per_view, const Matrix& shared) {
  std::vector<Matrix> out;
  for (const Matrix& pv : per_view) {
    require_same_shape(pv, shared, "specific_representations");
    out.push_back(pv - shared);
  }
  return out;
}

double orthogonality_loss(const std::vector<Matrix>& specific) {
  ad::Tape tape;
  return orthogonality_loss(constants(tape, specific)).scalar();
}

Matrix attentive_fuse(const Matrix& shared, const std::vector<Matrix>& specific, const Matrix& a2,
                      Matrix* weights_out) {
  ad::Tape tape;
  ad::Var w;
  Matrix out = attentive_fuse(tape.constant(shared), constants(tape, specific), tape.constant(a2), &w).value();
  if (weights_out) *weights_out = w.value();
  return out;
}

Matrix enrich_embedding(const Matrix& id_embeddings, const Matrix& fused, const Matrix& w_inj) {
  ad::Tape tape;
  return enrich_embedding(tape.constant(id_embeddings), tape.constant(fused), tape.constant(w_inj)).value();
}

ViewRepresentations fuse_views(const std::vector<Matrix>& per_view, const Matrix& a2) {
  ViewRepresentations r;
  r.per_view = per_view;
  if (per_view.size() == 1) {
    r.fused = per_view[0];
    return r;
  }
  r.shared = shared_representation(per_view);
  r.specific = specific_representations(per_view, r.shared);
  r.fused = attentive_fuse(r.shared, r.specific, a2, &r.weights);
  return r;
}

}  // namespace bigsl
