#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "bigsl/errors.hpp"
#include "bigsl/graph_network.hpp"
#include "instances.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace bigsl;
using testing::random_matrix;

namespace {

double max_abs(const Matrix& a) { return a.size() ? a.cwiseAbs().maxCoeff() : 0.0; }

RelationVars constant_vars(ad::Tape& tape, const RelationWeights& w) {
  RelationVars v;
  for (std::size_t r = 0; r < 3; ++r) v.w[r] = tape.constant(w.w[r]);
  v.w_self = tape.constant(w.w_self);
  v.a1 = tape.constant(w.a1);
  return v;
}

}  // namespace

TEST_CASE("relation neighbors") {
  Rng rng(1);
  BiLevelGraph g = testing::random_graph(rng, 6, 2);
  g.a_poi.row(3).setZero();
  g.a_poi(3, 3) = 1.0;
  CHECK(relation_neighbors(g, 3, Relation::kPoi).empty());
  for (int i = 0; i < 6; ++i) {
    auto p1 = relation_neighbors(g, i, Relation::kProto1);
    REQUIRE(p1.size() == 1);
    CHECK(p1[0] == g.prototypes.assignments[i]);
    for (int j : relation_neighbors(g, i, Relation::kPoi)) CHECK(j != i);
    for (int j : relation_neighbors(g, i, Relation::kProto2)) CHECK(j != g.prototypes.assignments[i]);
  }
  BiLevelGraph one = testing::random_graph(rng, 5, 1);
  for (int i = 0; i < 5; ++i) CHECK(relation_neighbors(one, i, Relation::kProto2).empty());
}

TEST_CASE("topology scores") {
  Rng rng(2);
  BiLevelGraph g = testing::random_graph(rng, 6, 3, 0.0, 5);
  g.a_poi.row(0).setZero();
  g.a_poi(0, 0) = 0.5882;
  g.a_poi(0, 1) = 0.4118;
  CHECK(topology_score(g, 0, 1, Relation::kPoi) == 0.4118);
  CHECK_THROWS_AS(topology_score(g, 0, 2, Relation::kPoi), NotANeighbor);
  CHECK_THROWS_AS(topology_score(g, 0, 0, Relation::kPoi), NotANeighbor);
  for (int i = 0; i < 6; ++i) {
    const int own = g.prototypes.assignments[i];
    CHECK(topology_score(g, i, own, Relation::kProto1) == 1.0);
    for (int j : relation_neighbors(g, i, Relation::kProto2)) {
      CHECK(topology_score(g, i, j, Relation::kProto2) == g.a_proto(own, j));
    }
    CHECK_THROWS_AS(topology_score(g, i, own, Relation::kProto2), NotANeighbor);
  }
}

TEST_CASE("relation edge lists are sorted") {
  Rng rng(3);
  BiLevelGraph g = testing::random_graph(rng, 9, 3);
  auto edges = relation_edges(g.a_poi, g.prototypes.assignments, g.a_proto);
  for (const auto& e : edges) {
    for (std::size_t k = 1; k < e.size(); ++k) {
      CHECK(std::make_pair(e.dst[k - 1], e.src[k - 1]) < std::make_pair(e.dst[k], e.src[k]));
    }
  }
  CHECK(edges[1].size() == 9);
}

TEST_CASE("propagation matches a per-node recomputation") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 8, k = 2, d2 = 4, d3 = 4;
    BiLevelGraph g = testing::random_graph(rng, n, k, rng.uniform(0.0, 0.6), testing::random_int(rng, 1, 4));
    Matrix e = random_matrix(n, d2, rng);
    Matrix proto = cluster_mean_operator(g.prototypes.assignments, k) * e;
    RelationWeights w = testing::random_weights(rng, d2, d3);
    PropagationOutput out = propagate(g, e, proto, w);
    Matrix want = oracle::propagate(testing::relations_of(g), e, proto, w.w, w.w_self, w.a1);
    CHECK(max_abs(out.p - want) < 1e-9);
    for (std::size_t r = 0; r < 3; ++r) {
      std::vector<double> sums(n, 0.0);
      std::vector<int> counts(n, 0);
      for (std::size_t m = 0; m < out.edges[r].size(); ++m) {
        sums[out.edges[r].dst[m]] += out.alpha[r](static_cast<Index>(m), 0);
        ++counts[out.edges[r].dst[m]];
      }
      for (int i = 0; i < n; ++i) {
        if (counts[i] > 0) CHECK(std::abs(sums[i] - 1.0) < 1e-9);
        if (counts[i] == 1) {
          for (std::size_t m = 0; m < out.edges[r].size(); ++m) {
            if (out.edges[r].dst[m] == i) CHECK(out.alpha[r](static_cast<Index>(m), 0) == 1.0);
          }
        }
      }
    }
  }
}

TEST_CASE("disabled relations and zero topology scores") {
  Rng rng(5);
  const int n = 7, k = 3, d2 = 3, d3 = 5;
  BiLevelGraph g = testing::random_graph(rng, n, k, 0.0, 3);
  Matrix e = random_matrix(n, d2, rng);
  Matrix proto = random_matrix(k, d2, rng);
  RelationWeights w = testing::random_weights(rng, d2, d3);
  const auto edges = relation_edges(g.a_poi, g.prototypes.assignments, g.a_proto);

  ad::Tape tape;
  PropagateInputs in;
  in.edges = &edges;
  in.assignments = &g.prototypes.assignments;
  in.a_poi = tape.constant(Matrix::Zero(n, n));
  in.a_proto = tape.constant(Matrix::Zero(k, k));
  in.enabled = {true, false, true};
  ad::Var p = propagate(in, tape.constant(e), tape.constant(proto), constant_vars(tape, w));
  CHECK(max_abs(p.value() - e * w.w_self.transpose()) < 1e-12);

  ad::Tape t2;
  in.a_poi = t2.constant(g.a_poi);
  in.a_proto = t2.constant(g.a_proto);
  in.enabled = {true, false, false};
  ad::Var q = propagate(in, t2.constant(e), t2.constant(proto), constant_vars(t2, w));
  CHECK(max_abs(q.value() - oracle::propagate(testing::relations_of(g), e, proto, w.w, w.w_self, w.a1, {true, false, false})) < 1e-9);
}

TEST_CASE("propagation is local") {
  Rng rng(6);
  const int n = 10, k = 2, d = 4;
  BiLevelGraph g = testing::random_graph(rng, n, k, 0.3, 2);
  Matrix e = random_matrix(n, d, rng);
  Matrix proto = random_matrix(k, d, rng);
  RelationWeights w = testing::random_weights(rng, d, d);
  Matrix base = propagate(g, e, proto, w).p;
  int tested = 0;
  for (int i = 0; i < n; ++i) {
    auto nb = relation_neighbors(g, i, Relation::kPoi);
    for (int j = 0; j < n; ++j) {
      if (j == i || std::find(nb.begin(), nb.end(), j) != nb.end()) continue;
      Matrix e2 = e;
      e2.row(j) = random_matrix(1, d, rng);
      Matrix moved = propagate(g, e2, proto, w).p;
      CHECK((moved.row(i).array() == base.row(i).array()).all());
      ++tested;
    }
  }
  CHECK(tested > 0);
}

TEST_CASE("propagation gradients") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    const int n = 6, k = 2, d2 = 3, d3 = 4;
    BiLevelGraph g = testing::random_graph(rng, n, k, 0.0, 3);
    const auto edges = relation_edges(g.a_poi, g.prototypes.assignments, g.a_proto);
    RelationWeights w = testing::random_weights(rng, d2, d3);
    Matrix probe = random_matrix(n, d3, rng);
    auto rep = testing::check_gradients(
        [&](ad::Tape& tape, const std::vector<ad::Var>& v) {
          PropagateInputs in;
          in.edges = &edges;
          in.assignments = &g.prototypes.assignments;
          in.a_poi = v[7];
          in.a_proto = v[8];
          RelationVars rv{{v[2], v[3], v[4]}, v[5], v[6]};
          ad::Var p = propagate(in, v[0], v[1], rv);
          return ad::sum(ad::mul(p, tape.constant(probe)));
        },
        {random_matrix(n, d2, rng), random_matrix(k, d2, rng), w.w[0], w.w[1], w.w[2], w.w_self, w.a1, g.a_poi,
         g.a_proto});
    INFO(rep.where);
    CHECK(rep.ok);
  }
}

TEST_CASE("cluster mean operator") {
  std::vector<int> assign{0, 1, 0, 2, 0};
  Matrix op = cluster_mean_operator(assign, 3);
  Matrix e(5, 1);
  e << 1, 10, 2, 7, 3;
  Matrix m = op * e;
  CHECK(m(0, 0) == doctest::Approx(2.0));
  CHECK(m(1, 0) == 10.0);
  CHECK(m(2, 0) == 7.0);
  for (Index r = 0; r < 3; ++r) CHECK(std::abs(op.row(r).sum() - 1.0) < 1e-12);
}

TEST_CASE("weight shapes are checked") {
  Rng rng(7);
  BiLevelGraph g = testing::random_graph(rng, 5, 2);
  RelationWeights w = testing::random_weights(rng, 3, 4);
  w.a1 = random_matrix(1, 5, rng);
  CHECK_THROWS_AS(propagate(g, random_matrix(5, 3, rng), random_matrix(2, 3, rng), w), ShapeMismatch);
  RelationWeights ok = RelationWeights::random(3, 4, rng);
  CHECK(ok.a1.cols() == 8);
  CHECK_THROWS_AS(propagate(g, random_matrix(5, 3, rng), random_matrix(2, 2, rng), ok), ShapeMismatch);
}
