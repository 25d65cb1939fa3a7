#pragma once

#include <vector>

#include "bigsl/graph_network.hpp"
#include "bigsl/structure.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace testing {

/// Random bi-level graph: cosine-sparsified POI and prototype graphs and assignments
/// that use every prototype.
inline bigsl::BiLevelGraph random_graph(Rng& rng, int n, int k, double epsilon = 0.0, int top_k = 3) {
  bigsl::BiLevelGraph g;
  g.a_poi = oracle::sparsify(oracle::cosine_matrix(random_matrix(n, 4, rng)), epsilon, top_k);
  g.a_proto = oracle::sparsify(oracle::cosine_matrix(random_matrix(k, 4, rng)), epsilon, top_k);
  g.prototypes.k = k;
  g.prototypes.seeded = true;
  g.prototypes.assignments.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) g.prototypes.assignments[i] = i < k ? i : static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
  g.prototypes.centroids = random_matrix(k, 4, rng);
  g.a_hier = bigsl::hier_adjacency(g.prototypes, n);
  return g;
}

inline oracle::Relations relations_of(const bigsl::BiLevelGraph& g) {
  return oracle::Relations{g.a_poi, g.prototypes.assignments, g.a_proto};
}

inline bigsl::RelationWeights random_weights(Rng& rng, int d2, int d3) {
  bigsl::RelationWeights w;
  for (auto& m : w.w) m = random_matrix(d3, d2, rng);
  w.w_self = random_matrix(d3, d2, rng);
  w.a1 = random_matrix(1, 2 * d3, rng);
  return w;
}

inline std::vector<Matrix> random_views(Rng& rng, int views, int n, int d) {
  std::vector<Matrix> out;
  for (int v = 0; v < views; ++v) out.push_back(random_matrix(n, d, rng));
  return out;
}

}  // namespace testing
