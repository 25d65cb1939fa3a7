#include "bigsl/graph_network.hpp"

#include <algorithm>

#include "bigsl/errors.hpp"

namespace bigsl {

RelationWeights RelationWeights::random(Index d2, Index d3, Rng& rng) {
  RelationWeights w;
  for (auto& m : w.w) m = init_uniform(d3, d2, d2, rng);
  w.w_self = init_uniform(d3, d2, d2, rng);
  w.a1 = init_uniform(1, 2 * d3, 2 * d3, rng);
  return w;
}

std::vector<int> relation_neighbors(const BiLevelGraph& g, int i, Relation r) {
  if (i < 0 || i >= g.num_pois()) throw Error("POI index out of range: " + std::to_string(i));
  std::vector<int> out;
  const int p = g.prototypes.assignments.at(static_cast<std::size_t>(i));
  switch (r) {
    case Relation::kPoi:
      for (Index j = 0; j < g.a_poi.cols(); ++j) {
        if (j != i && g.a_poi(i, j) > 0.0) out.push_back(static_cast<int>(j));
      }
      break;
    case Relation::kProto1:
      out.push_back(p);
      break;
    case Relation::kProto2:
      for (Index j = 0; j < g.a_proto.cols(); ++j) {
        if (j != p && g.a_proto(p, j) > 0.0) out.push_back(static_cast<int>(j));
      }
      break;
  }
  return out;
}

double topology_score(const BiLevelGraph& g, int i, int j, Relation r) {
  const auto nb = relation_neighbors(g, i, r);
  if (std::find(nb.begin(), nb.end(), j) == nb.end()) {
    throw NotANeighbor(std::to_string(j) + " is not a neighbor of " + std::to_string(i));
  }
  switch (r) {
    case Relation::kPoi:
      return g.a_poi(i, j);
    case Relation::kProto1:
      return g.a_hier(i, j);
    case Relation::kProto2:
      return g.a_proto(g.prototypes.assignments[i], j);
  }
  return 0.0;
}

std::array<RelationEdges, 3> relation_edges(const Matrix& a_poi, const std::vector<int>& assignments,
                                            const Matrix& a_proto) {
  std::array<RelationEdges, 3> e;
  const Index n = a_poi.rows();
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (j != i && a_poi(i, j) > 0.0) {
        e[0].dst.push_back(static_cast<int>(i));
        e[0].src.push_back(static_cast<int>(j));
      }
    }
    const int p = assignments[i];
    e[1].dst.push_back(static_cast<int>(i));
    e[1].src.push_back(p);
    for (Index j = 0; j < a_proto.cols(); ++j) {
      if (j != p && a_proto(p, j) > 0.0) {
        e[2].dst.push_back(static_cast<int>(i));
        e[2].src.push_back(static_cast<int>(j));
      }
    }
  }
  return e;
}

Matrix cluster_mean_operator(const std::vector<int>& assignments, int k) {
  const Index n = static_cast<Index>(assignments.size());
  Matrix op = Matrix::Zero(k, n);
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (int a : assignments) ++counts[a];
  for (Index i = 0; i < n; ++i) op(assignments[i], i) = 1.0 / counts[assignments[i]];
  return op;
}

PropagationOutput propagate(const BiLevelGraph& g, const Matrix& id_embeddings, const Matrix& proto_features,
                            const RelationWeights& w) {
  ad::Tape tape;
  const auto edges = relation_edges(g.a_poi, g.prototypes.assignments, g.a_proto);
  PropagateInputs in;
  in.edges = &edges;
  in.assignments = &g.prototypes.assignments;
  in.a_poi = tape.constant(g.a_poi);
  in.a_proto = tape.constant(g.a_proto);
  RelationVars v;
  for (std::size_t r = 0; r < 3; ++r) v.w[r] = tape.constant(w.w[r]);
  v.w_self = tape.constant(w.w_self);
  v.a1 = tape.constant(w.a1);
  std::array<ad::Var, 3> alpha;
  PropagationOutput out;
  out.p = propagate(in, tape.constant(id_embeddings), tape.constant(proto_features), v, &alpha).value();
  out.edges = edges;
  for (std::size_t r = 0; r < 3; ++r) {
    out.alpha[r] = alpha[r].valid() ? alpha[r].value() : Matrix(0, 1);
  }
  return out;
}

ad::Var propagate(const PropagateInputs& in, ad::Var id_embeddings, ad::Var proto_features, const RelationVars& w,
                  std::array<ad::Var, 3>* alpha_out) {
  ad::Tape& tape = *id_embeddings.tape();
  const Index n = id_embeddings.rows();
  const Index d3 = w.w_self.rows();
  if (w.a1.rows() != 1 || w.a1.cols() != 2 * d3) {
    throw ShapeMismatch("propagate: a1 " + shape_str(w.a1.value()) + " vs d3=" + std::to_string(d3));
  }
  if (proto_features.cols() != id_embeddings.cols()) {
    throw ShapeMismatch("propagate: " + shape_str(id_embeddings.value()) + " vs " + shape_str(proto_features.value()));
  }
  ad::Var a_left = ad::slice_cols(w.a1, 0, d3);
  ad::Var a_right = ad::slice_cols(w.a1, d3, d3);
  ad::Var out = ad::matmul_nt(id_embeddings, w.w_self);

  for (std::size_t r = 0; r < 3; ++r) {
    const RelationEdges& e = (*in.edges)[r];
    if (!in.enabled[r] || e.size() == 0) continue;
    ad::Var h_target = ad::matmul_nt(id_embeddings, w.w[r]);
    ad::Var h_nb = r == 0 ? h_target : ad::matmul_nt(proto_features, w.w[r]);
    ad::Var score_target = ad::matmul_nt(h_target, a_left);
    ad::Var score_nb = ad::matmul_nt(h_nb, a_right);
    ad::Var logits = ad::leaky_relu(ad::add(ad::gather_rows(score_target, e.dst), ad::gather_rows(score_nb, e.src)));
    ad::Var alpha = ad::segment_softmax(logits, e.dst, static_cast<int>(n));
    if (alpha_out) (*alpha_out)[r] = alpha;
    ad::Var s;
    if (r == 0) {
      s = ad::gather_entries(in.a_poi, e.dst, e.src);
    } else if (r == 1) {
      // A_hier is one-hot, so every 1-hop prototype score is exactly 1.
      s = tape.constant(Matrix::Ones(static_cast<Index>(e.size()), 1));
    } else {
      std::vector<int> own(e.size());
      for (std::size_t k = 0; k < e.size(); ++k) own[k] = (*in.assignments)[e.dst[k]];
      s = ad::gather_entries(in.a_proto, own, e.src);
    }
    ad::Var msg = ad::row_scale(ad::gather_rows(h_nb, e.src), ad::mul(alpha, s));
    out = ad::add(out, ad::scatter_add_rows(msg, e.dst, n));
  }
  return out;
}

}  // namespace bigsl
