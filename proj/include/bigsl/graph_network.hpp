#pragma once

#include <array>
#include <vector>

#include "bigsl/autodiff.hpp"
#include "bigsl/structure.hpp"

namespace bigsl {

enum class Relation { kPoi = 0, kProto1 = 1, kProto2 = 2 };
constexpr std::array<Relation, 3> kRelations{Relation::kPoi, Relation::kProto1, Relation::kProto2};

struct RelationWeights {
  std::array<Matrix, 3> w;  // per relation, d3 × d2, indexed by Relation
  Matrix w_self;            // d3 × d2
  Matrix a1;                // 1 × 2·d3, shared across relations

  static RelationWeights random(Index d2, Index d3, Rng& rng);
};


/// Neighbors of POI i under relation r, ascending. POI neighbors are POI indices;
/// prototype neighbors are prototype indices.
std::vector<int> relation_neighbors(const BiLevelGraph& g, int i, Relation r);
/// s_ij per relation. Throws NotANeighbor when j is not in relation_neighbors(g, i, r).
double topology_score(const BiLevelGraph& g, int i, int j, Relation r);

/// Edge list of one relation: target POI `dst[e]` receives from neighbor `src[e]`.
struct RelationEdges {
  std::vector<int> dst;
  std::vector<int> src;
  std::size_t size() const { return dst.size(); }
};

/// Edge lists for the three relations, sorted by (target, neighbor).
std::array<RelationEdges, 3> relation_edges(const Matrix& a_poi, const std::vector<int>& assignments,
                                            const Matrix& a_proto);

struct PropagationOutput {
  Matrix p;  // N × d3
  std::array<RelationEdges, 3> edges;
  std::array<Matrix, 3> alpha;  // per relation, one attention weight per edge (E × 1)
};

/// Single attention layer over the bi-level graph. `proto_features` holds one
/// d2-row per prototype (member mean of POI ID embeddings).
PropagationOutput propagate(const BiLevelGraph& g, const Matrix& id_embeddings, const Matrix& proto_features,
                            const RelationWeights& w);

/// Member-mean averaging operator (K × N) for the given assignments.
Matrix cluster_mean_operator(const std::vector<int>& assignments, int k);

struct RelationVars {
  std::array<ad::Var, 3> w;
  ad::Var w_self;
  ad::Var a1;
};

struct PropagateInputs {
  const std::array<RelationEdges, 3>* edges = nullptr;
  const std::vector<int>* assignments = nullptr;
  ad::Var a_poi;    // N × N topology scores
  ad::Var a_proto;  // K × K topology scores
  std::array<bool, 3> enabled{true, true, true};
};

/// Differentiable propagation. Gradients reach the ID embeddings, prototype
/// features, relation weights and the adjacency values used as topology scores.
ad::Var propagate(const PropagateInputs& in, ad::Var id_embeddings, ad::Var proto_features, const RelationVars& w,
                  std::array<ad::Var, 3>* alpha_out = nullptr);

}  // namespace bigsl
