#include "bigsl/structure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bigsl/errors.hpp"

namespace bigsl {

GslTransform GslTransform::random(Index d1, Index d2, Rng& rng) {
  GslTransform t;
  t.w1 = init_uniform(d2, d1, d1, rng);
  t.b1 = init_uniform(1, d2, d1, rng);
  t.w2 = init_uniform(d2, d2, d2, rng);
  t.b2 = init_uniform(1, d2, d2, rng);
  return t;
}

void GslHyperParams::validate() const {
  if (k < 1) throw ConfigError("K must be at least 1");
  if (!(tau1 > 0.0)) throw ConfigError("tau1 must be positive");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ConfigError("epsilon must lie in [0, 1)");
  if (top_k < 1) throw ConfigError("top_k must be at least 1");
}

namespace {

std::size_t count_nonzero(const Matrix& m) {
  std::size_t n = 0;
  for (Index k = 0; k < m.size(); ++k) n += m.data()[k] != 0.0;
  return n;
}

double sq_dist(const Matrix& a, Index i, const Matrix& b, Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

int nearest(const Matrix& z, Index i, const Matrix& c) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < c.rows(); ++j) {
    const double d = sq_dist(z, i, c, j);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(j);
    }
  }
  return best;
}

Matrix kmeanspp(const Matrix& z, int k, Rng& rng) {
  const Index n = z.rows();
  Matrix c(k, z.cols());
  c.row(0) = z.row(static_cast<Index>(rng.below(static_cast<std::uint64_t>(n))));
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  for (int j = 1; j < k; ++j) {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(z, i, c, j - 1));
      total += d2[i];
    }
    Index pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    c.row(j) = z.row(pick);
  }
  return c;
}

Matrix member_means(const Matrix& z, const std::vector<int>& assign, int k, const Matrix& fallback) {
  Matrix c = Matrix::Zero(k, z.cols());
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (Index i = 0; i < z.rows(); ++i) {
    c.row(assign[i]) += z.row(i);
    ++counts[assign[i]];
  }
  for (int j = 0; j < k; ++j) {
    if (counts[j] > 0) {
      c.row(j) /= counts[j];
    } else {
      c.row(j) = fallback.row(j);
    }
  }
  return c;
}

}  // namespace

std::size_t BiLevelGraph::e1() const { return count_nonzero(a_poi); }
std::size_t BiLevelGraph::e2() const { return count_nonzero(a_hier); }
std::size_t BiLevelGraph::e3() const { return count_nonzero(a_proto); }

SparsityPattern sparsify_pattern(const Matrix& s, double epsilon, int top_k) {
  if (s.rows() != s.cols()) throw ShapeMismatch("sparsify: matrix must be square, got " + shape_str(s));
  SparsityPattern kept(static_cast<std::size_t>(s.rows()));
  std::vector<int> cand;
  for (Index i = 0; i < s.rows(); ++i) {
    cand.clear();
    for (Index j = 0; j < s.cols(); ++j) {
      if (j != i && s(i, j) >= epsilon && s(i, j) > 0.0) cand.push_back(static_cast<int>(j));
    }
    std::stable_sort(cand.begin(), cand.end(), [&](int a, int b) { return s(i, a) > s(i, b); });
    if (static_cast<int>(cand.size()) > top_k) cand.resize(static_cast<std::size_t>(top_k));
    cand.push_back(static_cast<int>(i));
    std::sort(cand.begin(), cand.end());
    kept[i] = cand;
  }
  return kept;
}

Matrix structure_embed(const Matrix& x, const GslTransform& t) {
  ad::Tape tape;
  GslVars v{tape.constant(t.w1), tape.constant(t.b1), tape.constant(t.w2), tape.constant(t.b2)};
  return structure_embed(tape.constant(x), v).value();
}

Matrix pairwise_adjacency(const Matrix& z) {
  for (Index i = 0; i < z.rows(); ++i) {
    if (z.row(i).norm() == 0.0) throw ZeroVectorRow(static_cast<std::size_t>(i));
  }
  ad::Tape tape;
  return pairwise_adjacency(tape.constant(z)).value();
}

Matrix sparsify_normalize(const Matrix& s, double epsilon, int top_k) {
  ad::Tape tape;
  return sparsify_normalize(tape.constant(s), epsilon, top_k).value();
}

PrototypeSet kmeans_init(int k) {
  PrototypeSet p;
  p.k = k;
  return p;
}

PrototypeSet kmeans_estep(const Matrix& z, const PrototypeSet& state, Rng& rng) {
  const Index n = z.rows();
  const int k = state.k;
  if (k < 1) throw Error("K must be at least 1");
  if (k > n) throw TooFewPoints(static_cast<std::size_t>(k), static_cast<std::size_t>(n));
  PrototypeSet next = state;
  if (!state.seeded || state.centroids.rows() != k || state.centroids.cols() != z.cols()) {
    next.centroids = kmeanspp(z, k, rng);
    next.seeded = true;
  }
  next.assignments.assign(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n; ++i) next.assignments[i] = nearest(z, i, next.centroids);

  // Empty clusters take the point farthest from its own centroid among clusters with spare members.
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (int a : next.assignments) ++counts[a];
  for (int j = 0; j < k; ++j) {
    if (counts[j] > 0) continue;
    Index far = -1;
    double far_d = -1.0;
    for (Index i = 0; i < n; ++i) {
      const int a = next.assignments[i];
      if (counts[a] <= 1) continue;
      const double d = sq_dist(z, i, next.centroids, a);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    if (far < 0) break;
    --counts[next.assignments[far]];
    next.assignments[far] = j;
    ++counts[j];
    next.centroids.row(j) = z.row(far);
  }
  next.centroids = member_means(z, next.assignments, k, next.centroids);
  return next;
}

double within_cluster_ss(const Matrix& z, const PrototypeSet& state) {
  double total = 0.0;
  for (Index i = 0; i < z.rows(); ++i) total += sq_dist(z, i, state.centroids, state.assignments[i]);
  return total;
}

double hsl_loss(const Matrix& z, const PrototypeSet& prototypes, double tau1) {
  ad::Tape tape;
  return hsl_loss(tape.constant(z), prototypes, tau1).scalar();
}

Matrix prototype_adjacency(const Matrix& centroids, const GslTransform& t2, double epsilon, int top_k) {
  return sparsify_normalize(pairwise_adjacency(structure_embed(centroids, t2)), epsilon, top_k);
}

Matrix hier_adjacency(const PrototypeSet& prototypes, Index n) {
  if (static_cast<Index>(prototypes.assignments.size()) != n) {
    throw ShapeMismatch("hier_adjacency: " + std::to_string(prototypes.assignments.size()) + " assignments vs " +
                        std::to_string(n) + " POIs");
  }
  Matrix a = Matrix::Zero(n, prototypes.k);
  for (Index i = 0; i < n; ++i) a(i, prototypes.assignments[i]) = 1.0;
  return a;
}

BiLevelGraph build_bilevel_graph(const Matrix& features, const GslTransform& poi_transform,
                                 const GslTransform& proto_transform, const PrototypeSet& prototypes,
                                 const GslHyperParams& hyper) {
  if (!prototypes.seeded || prototypes.assignments.empty()) throw Error("build_bilevel_graph: E-step has not run");
  BiLevelGraph g;
  const Matrix z = structure_embed(features, poi_transform);
  g.a_poi = sparsify_normalize(pairwise_adjacency(z), hyper.epsilon, hyper.top_k);
  g.a_hier = hier_adjacency(prototypes, features.rows());
  g.a_proto = prototype_adjacency(prototypes.centroids, proto_transform, hyper.epsilon, hyper.top_k);
  g.prototypes = prototypes;
  check_graph_bounds(g);
  return g;
}

void check_graph_bounds(const BiLevelGraph& g) {
  const Index n = g.num_pois();
  if (!(g.num_prototypes() < n)) {
    throw Error("graph bound violated: K=" + std::to_string(g.num_prototypes()) + " is not below N=" + std::to_string(n));
  }
  if (g.e2() != static_cast<std::size_t>(n)) throw Error("graph bound violated: E2 != N");
  if (g.e3() > g.e1()) {
    throw Error("graph bound violated: E3=" + std::to_string(g.e3()) + " exceeds E1=" + std::to_string(g.e1()));
  }
}

ad::Var structure_embed(ad::Var x, const GslVars& t) {
  ad::Var h = ad::sigmoid(ad::add_row(ad::matmul_nt(x, t.w1), t.b1));
  ad::Var z = ad::add_row(ad::matmul_nt(h, t.w2), t.b2);
  return ad::l2_normalize_rows(z);
}

ad::Var pairwise_adjacency(ad::Var z) {
  ad::Var zn = ad::l2_normalize_rows(z);
  return ad::matmul_nt(zn, zn);
}

ad::Var sparsify_normalize(ad::Var s, double epsilon, int top_k) {
  return ad::masked_row_normalize(s, sparsify_pattern(s.value(), epsilon, top_k));
}

ad::Var hsl_loss(ad::Var z, const PrototypeSet& prototypes, double tau1) {
  if (static_cast<Index>(prototypes.assignments.size()) != z.rows()) {
    throw ShapeMismatch("hsl_loss: " + std::to_string(prototypes.assignments.size()) + " assignments vs " +
                        shape_str(z.value()));
  }
  ad::Tape& tape = *z.tape();
  ad::Var c = tape.constant(ops::l2_normalize_rows(prototypes.centroids));
  ad::Var logits = ad::scale(ad::matmul_nt(z, c), 1.0 / tau1);
  return ad::cross_entropy(logits, prototypes.assignments);
}

}  // namespace bigsl
