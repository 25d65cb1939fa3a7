#pragma once

#include <cstdint>
#include <vector>

#include "bigsl/autodiff.hpp"

namespace bigsl {

/// Which negatives enter the view-shared InfoNCE term.
struct NegativePolicy {
  /// Use every j ≠ i. Otherwise each anchor draws min(N−1, sample_size) negatives.
  bool full = true;
  std::size_t sample_size = 512;
  std::uint64_t seed = 0;

  /// Full set while N−1 ≤ cap, seeded subsample beyond it.
  static NegativePolicy for_size(std::size_t n, std::size_t cap, std::uint64_t seed);
};

struct ViewRepresentations {
  std::vector<Matrix> per_view;  // p^v, N × d3 each
  Matrix shared;                 // p_c
  std::vector<Matrix> specific;  // p_s^v
  Matrix weights;                // N × (1 + |V|) attention weights, shared first
  Matrix fused;                  // p̃
};

Matrix shared_representation(const std::vector<Matrix>& per_view);
double shared_loss(const std::vector<Matrix>& per_view, const Matrix& shared, double tau2,
                   const NegativePolicy& negatives = {});
std::vector<Matrix> specific_representations(const std::vector<Matrix>& per_view, const Matrix& shared);
double orthogonality_loss(const std::vector<Matrix>& specific);
/// Returns the fused rows; `weights_out` (optional) receives the N × (1+|V|) attention weights.
Matrix attentive_fuse(const Matrix& shared, const std::vector<Matrix>& specific, const Matrix& a2,
                      Matrix* weights_out = nullptr);
/// l_i + W_inj·p̃_i
Matrix enrich_embedding(const Matrix& id_embeddings, const Matrix& fused, const Matrix& w_inj);
/// Runs the whole fusion stage; a single view is passed through unchanged.
ViewRepresentations fuse_views(const std::vector<Matrix>& per_view, const Matrix& a2);

// Differentiable counterparts.
ad::Var shared_representation(std::span<const ad::Var> per_view);
ad::Var shared_loss(std::span<const ad::Var> per_view, ad::Var shared, double tau2, const NegativePolicy& negatives);
std::vector<ad::Var> specific_representations(std::span<const ad::Var> per_view, ad::Var shared);
ad::Var orthogonality_loss(std::span<const ad::Var> specific);
ad::Var attentive_fuse(ad::Var shared, std::span<const ad::Var> specific, ad::Var a2, ad::Var* weights_out = nullptr);
ad::Var enrich_embedding(ad::Var id_embeddings, ad::Var fused, ad::Var w_inj);

/// Column mask (row-major N × 2N, over [p_c | p^v] similarities) selecting the
/// positive, the p_c negatives and the same-view negatives of each anchor.
std::vector<unsigned char> infonce_mask(std::size_t n, const NegativePolicy& negatives);

}  // namespace bigsl
