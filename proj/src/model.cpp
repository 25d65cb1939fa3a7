#include "bigsl/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "bigsl/errors.hpp"

namespace bigsl {

LstmWeights LstmWeights::random(Index d2, Index d3, Rng& rng) {
  LstmWeights w;
  w.w_x = init_uniform(4 * d3, d2, d2, rng);
  w.w_h = init_uniform(4 * d3, d3, d3, rng);
  w.b = init_uniform(1, 4 * d3, d3, rng);
  return w;
}

ad::Var lstm_readouts(const LstmVars& w, ad::Var table, const std::vector<std::vector<int>>& sequences,
                      const std::vector<Readout>& readouts) {
  const Index d3 = w.w_h.cols();
  if (w.w_x.rows() != 4 * d3 || w.w_h.rows() != 4 * d3 || w.b.cols() != 4 * d3 || w.w_x.cols() != table.cols()) {
    throw ShapeMismatch("lstm: w_x " + shape_str(w.w_x.value()) + ", w_h " + shape_str(w.w_h.value()) + ", b " +
                        shape_str(w.b.value()) + ", inputs " + shape_str(table.value()));
  }
  if (sequences.empty() || readouts.empty()) throw EmptySequence("lstm: nothing to encode");
  for (const auto& s : sequences)
    if (s.empty()) throw EmptySequence("lstm: empty input sequence");

  // Longest first, so the active set at each step is a prefix of the rows.
  std::vector<int> order(sequences.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return sequences[a].size() > sequences[b].size(); });
  std::vector<int> row_of(sequences.size());
  for (std::size_t r = 0; r < order.size(); ++r) row_of[order[r]] = static_cast<int>(r);
  const std::size_t max_len = sequences[order[0]].size();

  std::vector<std::vector<std::size_t>> at_step(max_len);
  for (std::size_t k = 0; k < readouts.size(); ++k) {
    const Readout& r = readouts[k];
    if (r.sequence < 0 || r.sequence >= static_cast<int>(sequences.size()) || r.step < 0 ||
        r.step >= static_cast<int>(sequences[r.sequence].size())) {
      throw ShapeMismatch("lstm: readout outside its sequence");
    }
    at_step[r.step].push_back(k);
  }

  std::vector<ad::Var> pieces;
  std::vector<int> position(readouts.size());
  int offset = 0;
  ad::Var h, c;
  for (std::size_t s = 0; s < max_len; ++s) {
    std::size_t active = 0;
    while (active < order.size() && sequences[order[active]].size() > s) ++active;
    std::vector<int> idx(active);
    for (std::size_t r = 0; r < active; ++r) idx[r] = sequences[order[r]][s];
    ad::Var gates = ad::matmul_nt(ad::gather_rows(table, idx), w.w_x);
    ad::Var h_prev, c_prev;
    if (s > 0) {
      h_prev = static_cast<Index>(active) < h.rows() ? ad::slice_rows(h, 0, static_cast<Index>(active)) : h;
      c_prev = static_cast<Index>(active) < c.rows() ? ad::slice_rows(c, 0, static_cast<Index>(active)) : c;
      gates = ad::add(gates, ad::matmul_nt(h_prev, w.w_h));
    }
    gates = ad::add_row(gates, w.b);
    ad::Var gi = ad::sigmoid(ad::slice_cols(gates, 0, d3));
    ad::Var gf = ad::sigmoid(ad::slice_cols(gates, d3, d3));
    ad::Var gg = ad::tanh(ad::slice_cols(gates, 2 * d3, d3));
    ad::Var go = ad::sigmoid(ad::slice_cols(gates, 3 * d3, d3));
    c = s > 0 ? ad::add(ad::mul(gf, c_prev), ad::mul(gi, gg)) : ad::mul(gi, gg);
    h = ad::mul(go, ad::tanh(c));
    if (!at_step[s].empty()) {
      std::vector<int> rows;
      for (std::size_t k : at_step[s]) {
        rows.push_back(row_of[readouts[k].sequence]);
        position[k] = offset++;
      }
      pieces.push_back(ad::gather_rows(h, rows));
    }
  }
  ad::Var all = pieces.size() == 1 ? pieces[0] : ad::concat_rows(pieces);
  return ad::gather_rows(all, position);
}

Matrix encode_sequence(const Matrix& inputs, const LstmWeights& w) {
  if (inputs.rows() == 0) throw EmptySequence("encode_sequence: empty input sequence");
  ad::Tape tape;
  LstmVars v{tape.constant(w.w_x), tape.constant(w.w_h), tape.constant(w.b)};
  std::vector<int> seq(static_cast<std::size_t>(inputs.rows()));
  std::iota(seq.begin(), seq.end(), 0);
  return lstm_readouts(v, tape.constant(inputs), {seq}, {Readout{0, static_cast<int>(seq.size()) - 1}}).value();
}

Matrix predict_next(const Matrix& h, const Matrix& user, const Matrix& w_out) {
  if (h.rows() != 1 || user.rows() != 1 || w_out.cols() != h.cols() + user.cols()) {
    throw ShapeMismatch("predict_next: h " + shape_str(h) + ", u " + shape_str(user) + ", W_out " + shape_str(w_out));
  }
  return ops::softmax_rows(ops::concat_cols(h, user) * w_out.transpose());
}

double ce_loss(const Matrix& predictions, std::span<const int> targets) {
  if (static_cast<Index>(targets.size()) != predictions.rows()) {
    throw ShapeMismatch("ce_loss: " + std::to_string(targets.size()) + " targets vs " + shape_str(predictions));
  }
  double total = 0.0;
  for (std::size_t b = 0; b < targets.size(); ++b) {
    if (targets[b] < 0 || targets[b] >= predictions.cols()) {
      throw InvalidTarget("ce_loss: target " + std::to_string(targets[b]) + " outside [0, " +
                          std::to_string(predictions.cols()) + ")");
    }
    total -= std::log(std::max(predictions(static_cast<Index>(b), targets[b]), ops::kLogFloor));
  }
  return total;
}

double total_loss(double ce, double hsl_sum, double l_sh, double l_sp, const LossWeights& betas) {
  return ce + betas.hsl * hsl_sum + betas.sh * l_sh + betas.sp * l_sp;
}

std::vector<Sample> training_samples(const Dataset& dataset) {
  std::vector<Sample> out;
  for (const UserSequence& s : dataset.sequences)
    for (std::size_t t = 1; t < s.train_len; ++t) out.push_back({s.user, static_cast<int>(t)});
  return out;
}

std::vector<Sample> test_samples(const Dataset& dataset) {
  std::vector<Sample> out;
  for (const UserSequence& s : dataset.sequences)
    for (std::size_t t = std::max<std::size_t>(s.train_len, 1); t < s.visits.size(); ++t)
      out.push_back({s.user, static_cast<int>(t)});
  return out;
}

Matrix rule_adjacency_radius(const Matrix& x, double radius, int top_k) {
  const Index n = x.rows();
  Matrix a = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    std::vector<std::pair<double, Index>> near;
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = (x.row(i) - x.row(j)).norm();
      if (d <= radius) near.emplace_back(d, j);
    }
    std::stable_sort(near.begin(), near.end(), [](const auto& l, const auto& r) { return l.first < r.first; });
    if (static_cast<int>(near.size()) > top_k) near.resize(static_cast<std::size_t>(std::max(top_k, 0)));
    a(i, i) = 1.0;
    for (const auto& [d, j] : near) a(i, j) = 1.0;
    a.row(i) /= a.row(i).sum();
  }
  return a;
}

Matrix rule_adjacency_cosine(const Matrix& x, int top_k) {
  const Index n = x.rows();
  const Matrix z = ops::l2_normalize_rows(x);
  const Matrix s = z * z.transpose();
  Matrix a = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    std::vector<std::pair<double, Index>> near;
    for (Index j = 0; j < n; ++j)
      if (j != i && s(i, j) > 0.0) near.emplace_back(s(i, j), j);
    std::stable_sort(near.begin(), near.end(), [](const auto& l, const auto& r) { return l.first > r.first; });
    if (static_cast<int>(near.size()) > top_k) near.resize(static_cast<std::size_t>(std::max(top_k, 0)));
    a(i, i) = 1.0;
    for (const auto& [w, j] : near) a(i, j) = w;
    a.row(i) /= a.row(i).sum();
  }
  return a;
}

namespace {

std::string gsl_name(ViewId v, const char* part) { return "gsl." + to_string(v) + "." + part; }
std::string gnn_name(ViewId v, const char* part) { return "gnn." + to_string(v) + "." + part; }

constexpr const char* kRelationNames[3] = {"w_poi", "w_proto1", "w_proto2"};

}  // namespace

Model::Model(TrainingConfig config, std::size_t num_users, std::vector<FeatureView> views)
    : config_(std::move(config)), num_users_(num_users), views_(std::move(views)) {
  config_.validate();
  if (views_.empty()) throw ConfigError("model needs at least one feature view");
  num_pois_ = static_cast<std::size_t>(views_[0].features.rows());
  for (const FeatureView& v : views_) {
    if (static_cast<std::size_t>(v.features.rows()) != num_pois_) {
      throw ShapeMismatch("feature views disagree on POI count: " + shape_str(views_[0].features) + " vs " +
                          shape_str(v.features));
    }
  }
  const Index n = static_cast<Index>(num_pois_);
  const Index d2 = config_.d2;
  const Index d3 = config_.d3;
  add_param("poi_embeddings", n, d2, d2);
  add_param("user_embeddings", static_cast<Index>(num_users_), d2, d2);
  add_param("lstm.w_x", 4 * d3, d2, d2);
  add_param("lstm.w_h", 4 * d3, d3, d3);
  add_param("lstm.b", 1, 4 * d3, d3);
  add_param("w_out", n, d3 + d2, d3 + d2);
  if (!uses_graph()) return;

  if (uses_prototypes() && config_.k >= static_cast<int>(num_pois_)) {
    throw ConfigError("k=" + std::to_string(config_.k) + " must be below the POI count " + std::to_string(num_pois_));
  }
  for (const FeatureView& v : views_) {
    const Index d1 = v.features.cols();
    if (config_.graph == GraphMode::kLearned) {
      add_param(gsl_name(v.view, "w1"), d2, d1, d1);
      add_param(gsl_name(v.view, "b1"), 1, d2, d1);
      add_param(gsl_name(v.view, "w2"), d2, d2, d2);
      add_param(gsl_name(v.view, "b2"), 1, d2, d2);
      if (config_.use_prototypes) {
        add_param(gsl_name(v.view, "w3"), d2, d2, d2);
        add_param(gsl_name(v.view, "b3"), 1, d2, d2);
        add_param(gsl_name(v.view, "w4"), d2, d2, d2);
        add_param(gsl_name(v.view, "b4"), 1, d2, d2);
      }
    }
    for (const char* r : kRelationNames) add_param(gnn_name(v.view, r), d3, d2, d2);
    add_param(gnn_name(v.view, "w_self"), d3, d2, d2);
    add_param(gnn_name(v.view, "a1"), 1, 2 * d3, 2 * d3);
  }
  if (views_.size() >= 2) add_param("fusion.a2", 1, d3, d3);
  add_param("fusion.w_inj", d2, d3, d3);

  if (config_.use_prototypes) prototypes_.assign(views_.size(), kmeans_init(config_.k));
  if (config_.graph == GraphMode::kRule) {
    for (std::size_t v = 0; v < views_.size(); ++v) rule_poi_.push_back(rule_poi_adjacency(v));
  }
}

void Model::add_param(const std::string& name, Index rows, Index cols, Index fan_in) {
  Rng rng(derive_seed(config_.seed, "init." + name));
  params_.add(name, init_uniform(rows, cols, fan_in, rng));
}

Matrix Model::rule_poi_adjacency(std::size_t v) const {
  const FeatureView& f = views_[v];
  return f.view == ViewId::kSpatial ? rule_adjacency_radius(f.features, config_.rule_radius, config_.rule_top_k)
                                    : rule_adjacency_cosine(f.features, config_.rule_top_k);
}

Matrix Model::rule_proto_adjacency(std::size_t v) const {
  const Matrix& c = prototypes_[v].centroids;
  return views_[v].view == ViewId::kSpatial ? rule_adjacency_radius(c, config_.rule_radius, config_.rule_top_k)
                                            : rule_adjacency_cosine(c, config_.rule_top_k);
}

Matrix Model::clustering_input(std::size_t v) const {
  const FeatureView& f = views_.at(v);
  if (config_.graph != GraphMode::kLearned) return f.features;
  GslTransform t{params_.value(gsl_name(f.view, "w1")), params_.value(gsl_name(f.view, "b1")),
                 params_.value(gsl_name(f.view, "w2")), params_.value(gsl_name(f.view, "b2"))};
  return structure_embed(f.features, t);
}

void Model::estep(std::uint64_t seed) {
  if (!uses_prototypes()) return;
  for (std::size_t v = 0; v < views_.size(); ++v) {
    Rng rng(derive_seed(seed, "kmeans." + to_string(views_[v].view)));
    prototypes_[v] = kmeans_estep(clustering_input(v), prototypes_[v], rng);
  }
}

std::vector<ad::Var> Model::bind(ad::Tape& tape, bool trainable) const {
  std::vector<ad::Var> out;
  out.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i)
    out.push_back(trainable ? tape.parameter(params_, i) : tape.constant(params_.value(i)));
  return out;
}

Model::GraphStage Model::graph_stage(ad::Tape& tape, const std::vector<ad::Var>& p, std::uint64_t negatives_seed,
                                     bool with_losses) const {
  GraphStage st;
  ad::Var e = var(p, "poi_embeddings");
  if (!uses_graph()) {
    st.enriched = e;
    return st;
  }
  const bool learned = config_.graph == GraphMode::kLearned;
  for (std::size_t v = 0; v < views_.size(); ++v) {
    const ViewId id = views_[v].view;
    ad::Var x = tape.constant(views_[v].features);
    ad::Var a_poi, a_proto, z;
    if (learned) {
      GslVars g{var(p, gsl_name(id, "w1")), var(p, gsl_name(id, "b1")), var(p, gsl_name(id, "w2")),
                var(p, gsl_name(id, "b2"))};
      z = structure_embed(x, g);
      a_poi = sparsify_normalize(pairwise_adjacency(z), config_.epsilon, config_.top_k);
    } else {
      a_poi = tape.constant(rule_poi_[v]);
    }

    std::vector<int> assignments;
    ad::Var proto_features;
    if (uses_prototypes()) {
      const PrototypeSet& ps = prototypes_[v];
      if (!ps.seeded) throw Error("no E-step has run for view " + to_string(id));
      assignments = ps.assignments;
      if (learned) {
        if (with_losses && config_.beta_hsl > 0.0) {
          ad::Var term = hsl_loss(z, ps, config_.tau1);
          st.hsl = st.hsl.valid() ? ad::add(st.hsl, term) : term;
        }
        GslVars g{var(p, gsl_name(id, "w3")), var(p, gsl_name(id, "b3")), var(p, gsl_name(id, "w4")),
                  var(p, gsl_name(id, "b4"))};
        ad::Var zt = structure_embed(tape.constant(ps.centroids), g);
        a_proto = sparsify_normalize(pairwise_adjacency(zt), config_.epsilon, config_.top_k);
      } else {
        a_proto = tape.constant(rule_proto_adjacency(v));
      }
      proto_features = ad::matmul(tape.constant(cluster_mean_operator(assignments, ps.k)), e);
    } else {
      assignments.assign(num_pois_, 0);
      a_proto = tape.constant(Matrix::Ones(1, 1));
      proto_features = tape.constant(Matrix::Zero(1, config_.d2));
    }

    const auto edges = relation_edges(a_poi.value(), assignments, a_proto.value());
    PropagateInputs in;
    in.edges = &edges;
    in.assignments = &assignments;
    in.a_poi = a_poi;
    in.a_proto = a_proto;
    in.enabled = {true, uses_prototypes(), uses_prototypes()};
    RelationVars rv;
    for (std::size_t r = 0; r < 3; ++r) rv.w[r] = var(p, gnn_name(id, kRelationNames[r]));
    rv.w_self = var(p, gnn_name(id, "w_self"));
    rv.a1 = var(p, gnn_name(id, "a1"));
    st.per_view.push_back(propagate(in, e, proto_features, rv));
    st.a_poi.push_back(a_poi);
    st.a_proto.push_back(a_proto);
    st.z.push_back(z);
  }

  if (st.per_view.size() == 1) {
    st.fused = st.per_view[0];
  } else {
    st.shared = shared_representation(st.per_view);
    if (with_losses && config_.beta_sh > 0.0) {
      st.sh = shared_loss(st.per_view, st.shared, config_.tau2,
                          NegativePolicy::for_size(num_pois_, config_.negatives_cap, negatives_seed));
    }
    st.specific = specific_representations(st.per_view, st.shared);
    if (with_losses && config_.beta_sp > 0.0) st.sp = orthogonality_loss(st.specific);
    st.fused = attentive_fuse(st.shared, st.specific, var(p, "fusion.a2"), &st.fusion_weights);
  }
  st.enriched = enrich_embedding(e, st.fused, var(p, "fusion.w_inj"));
  return st;
}

ad::Var Model::sequence_logits(const std::vector<ad::Var>& p, ad::Var enriched, const Dataset& dataset,
                               std::span<const Sample> samples) const {
  if (samples.empty()) throw EmptySequence("no samples in batch");
  // Samples sharing (user, window start) reuse one LSTM pass.
  std::map<std::pair<int, int>, int> group_of;
  std::vector<std::pair<int, int>> keys;
  std::vector<int> lengths;
  std::vector<Readout> readouts;
  std::vector<int> users;
  for (const Sample& s : samples) {
    if (s.user < 0 || static_cast<std::size_t>(s.user) >= dataset.sequences.size()) {
      throw InvalidTarget("sample user " + std::to_string(s.user) + " outside the dataset");
    }
    const UserSequence& seq = dataset.sequences[s.user];
    if (s.position <= 0) throw EmptySequence("sample at position 0 has no history");
    if (static_cast<std::size_t>(s.position) >= seq.visits.size()) {
      throw InvalidTarget("sample position " + std::to_string(s.position) + " beyond the sequence");
    }
    const int start = std::max(0, s.position - config_.max_seq_len);
    const auto key = std::make_pair(s.user, start);
    auto [it, inserted] = group_of.emplace(key, static_cast<int>(keys.size()));
    if (inserted) {
      keys.push_back(key);
      lengths.push_back(0);
    }
    const int len = s.position - start;
    lengths[it->second] = std::max(lengths[it->second], len);
    readouts.push_back({it->second, len - 1});
    users.push_back(s.user);
  }
  std::vector<std::vector<int>> sequences(keys.size());
  for (std::size_t g = 0; g < keys.size(); ++g) {
    const auto& visits = dataset.sequences[keys[g].first].visits;
    for (int t = 0; t < lengths[g]; ++t) sequences[g].push_back(visits[keys[g].second + t].poi);
  }
  LstmVars lv{var(p, "lstm.w_x"), var(p, "lstm.w_h"), var(p, "lstm.b")};
  ad::Var h = lstm_readouts(lv, enriched, sequences, readouts);
  ad::Var u = ad::gather_rows(var(p, "user_embeddings"), users);
  const std::array<ad::Var, 2> parts{h, u};
  return ad::matmul_nt(ad::concat_cols(parts), var(p, "w_out"));
}

ad::Var Model::batch_loss(ad::Tape& tape, const Dataset& dataset, std::span<const Sample> batch,
                          std::uint64_t negatives_seed, LossBreakdown* breakdown) const {
  const auto p = bind(tape, true);
  GraphStage st = graph_stage(tape, p, negatives_seed, true);
  ad::Var logits = sequence_logits(p, st.enriched, dataset, batch);
  std::vector<int> targets;
  targets.reserve(batch.size());
  for (const Sample& s : batch) targets.push_back(dataset.sequences[s.user].visits[s.position].poi);
  ad::Var ce = ad::cross_entropy(logits, targets);
  ad::Var total = ce;
  if (st.hsl.valid()) total = ad::add(total, ad::scale(st.hsl, config_.beta_hsl));
  if (st.sh.valid()) total = ad::add(total, ad::scale(st.sh, config_.beta_sh));
  if (st.sp.valid()) total = ad::add(total, ad::scale(st.sp, config_.beta_sp));
  if (breakdown) {
    breakdown->ce = ce.scalar();
    breakdown->hsl = st.hsl.valid() ? st.hsl.scalar() : 0.0;
    breakdown->sh = st.sh.valid() ? st.sh.scalar() : 0.0;
    breakdown->sp = st.sp.valid() ? st.sp.scalar() : 0.0;
    breakdown->total = total.scalar();
  }
  return total;
}

Matrix Model::enriched_embeddings() const {
  ad::Tape tape;
  const auto p = bind(tape, false);
  return graph_stage(tape, p, 0, false).enriched.value();
}

Matrix Model::predict(const Dataset& dataset, std::span<const Sample> samples) const {
  const Matrix enriched = enriched_embeddings();
  Matrix out(static_cast<Index>(samples.size()), static_cast<Index>(num_pois_));
  constexpr std::size_t kChunk = 256;
  for (std::size_t begin = 0; begin < samples.size(); begin += kChunk) {
    const std::size_t count = std::min(kChunk, samples.size() - begin);
    ad::Tape tape;
    const auto p = bind(tape, false);
    ad::Var logits = sequence_logits(p, tape.constant(enriched), dataset, samples.subspan(begin, count));
    out.middleRows(static_cast<Index>(begin), static_cast<Index>(count)) = ops::softmax_rows(logits.value());
  }
  return out;
}

std::vector<ViewGraph> Model::view_graphs() const {
  if (!uses_graph()) throw ConfigError("graph stage is disabled in this configuration");
  ad::Tape tape;
  const auto p = bind(tape, false);
  GraphStage st = graph_stage(tape, p, 0, false);
  std::vector<ViewGraph> out;
  for (std::size_t v = 0; v < views_.size(); ++v) {
    ViewGraph vg;
    vg.graph.a_poi = st.a_poi[v].value();
    if (uses_prototypes()) {
      vg.graph.prototypes = prototypes_[v];
      vg.graph.a_hier = hier_adjacency(prototypes_[v], static_cast<Index>(num_pois_));
      vg.graph.a_proto = st.a_proto[v].value();
    } else {
      vg.graph.a_hier = Matrix::Zero(static_cast<Index>(num_pois_), 0);
      vg.graph.a_proto = Matrix::Zero(0, 0);
    }
    if (st.z[v].valid()) vg.structure_embeddings = st.z[v].value();
    vg.representations = st.per_view[v].value();
    out.push_back(std::move(vg));
  }
  return out;
}

ViewRepresentations Model::representations() const {
  ViewRepresentations r;
  ad::Tape tape;
  const auto p = bind(tape, false);
  GraphStage st = graph_stage(tape, p, 0, false);
  if (!uses_graph()) {
    r.fused = Matrix::Zero(static_cast<Index>(num_pois_), config_.d3);
    return r;
  }
  for (const ad::Var& v : st.per_view) r.per_view.push_back(v.value());
  if (st.shared.valid()) {
    r.shared = st.shared.value();
    for (const ad::Var& v : st.specific) r.specific.push_back(v.value());
    r.weights = st.fusion_weights.value();
  }
  r.fused = st.fused.value();
  return r;
}

}  // namespace bigsl
