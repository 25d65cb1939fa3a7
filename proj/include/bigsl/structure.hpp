#pragma once

#include <vector>

#include "bigsl/autodiff.hpp"
#include "bigsl/matrix.hpp"

namespace bigsl {

/// z = W2·sigmoid(W1·x + b1) + b2, applied row-wise. Biases are 1×d2 rows.
struct GslTransform {
  Matrix w1;  // d2 × d1
  Matrix b1;  // 1 × d2
  Matrix w2;  // d2 × d2
  Matrix b2;  // 1 × d2

  static GslTransform random(Index d1, Index d2, Rng& rng);
};

enum class EStepCadence { kEpoch, kBatch };

struct GslHyperParams {
  int k = 80;
  double tau1 = 0.1;
  double epsilon = 0.5;
  int top_k = 10;
  EStepCadence estep = EStepCadence::kEpoch;

  void validate() const;
};

/// Hard clustering state. `centroids` are member means of the structure embeddings.
struct PrototypeSet {
  int k = 0;
  Matrix centroids;              // K × d2
  std::vector<int> assignments;  // length N, values in [0, K)
  bool seeded = false;
};

struct BiLevelGraph {
  Matrix a_poi;    // N × N, row-stochastic with self-loops
  Matrix a_hier;   // N × K, one-hot rows
  Matrix a_proto;  // K × K, row-stochastic with self-loops
  PrototypeSet prototypes;

  Index num_pois() const { return a_poi.rows(); }
  int num_prototypes() const { return prototypes.k; }
  /// Edge counts E1 (POI–POI), E2 (POI–prototype), E3 (prototype–prototype), self-loops included.
  std::size_t e1() const;
  std::size_t e2() const;
  std::size_t e3() const;
};

/// Kept columns per row after ε-threshold and top-k capping; the diagonal is always kept.
using SparsityPattern = std::vector<std::vector<int>>;

SparsityPattern sparsify_pattern(const Matrix& s, double epsilon, int top_k);

// Plain-matrix operations -------------------------------------------------

/// Structure embeddings with L2-normalized rows.
Matrix structure_embed(const Matrix& x, const GslTransform& t);
/// Cosine similarity matrix. Throws ZeroVectorRow.
Matrix pairwise_adjacency(const Matrix& z);
Matrix sparsify_normalize(const Matrix& s, double epsilon, int top_k);
/// One k-means assign+update round (k-means++ seeding on the first call).
PrototypeSet kmeans_estep(const Matrix& z, const PrototypeSet& state, Rng& rng);
PrototypeSet kmeans_init(int k);
/// Sum of squared distances of each point to its assigned centroid.
double within_cluster_ss(const Matrix& z, const PrototypeSet& state);
double hsl_loss(const Matrix& z, const PrototypeSet& prototypes, double tau1);
Matrix prototype_adjacency(const Matrix& centroids, const GslTransform& t2, double epsilon, int top_k);
Matrix hier_adjacency(const PrototypeSet& prototypes, Index n);
/// Assembles the bi-level graph for one view from its features and transforms.
/// The prototypes must have been produced by at least one E-step.
BiLevelGraph build_bilevel_graph(const Matrix& features, const GslTransform& poi_transform,
                                 const GslTransform& proto_transform, const PrototypeSet& prototypes,
                                 const GslHyperParams& hyper);
/// Checks K < N, one-hot A_hier (E2 = N) and E3 ≤ E1; throws Error on violation.
void check_graph_bounds(const BiLevelGraph& g);

// Differentiable counterparts ---------------------------------------------

struct GslVars {
  ad::Var w1, b1, w2, b2;
};

ad::Var structure_embed(ad::Var x, const GslVars& t);
/// Cosine similarity of the rows of z.
ad::Var pairwise_adjacency(ad::Var z);
/// Sparsified, row-normalized adjacency; the pattern is chosen from the current values.
ad::Var sparsify_normalize(ad::Var s, double epsilon, int top_k);
/// L_HSL with centroids treated as constants; centroids are L2-normalized here.
ad::Var hsl_loss(ad::Var z, const PrototypeSet& prototypes, double tau1);

}  // namespace bigsl
