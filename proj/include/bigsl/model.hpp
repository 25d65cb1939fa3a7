#pragma once

#include <span>
#include <vector>

#include "bigsl/autodiff.hpp"
#include "bigsl/config.hpp"
#include "bigsl/fusion.hpp"
#include "bigsl/graph_network.hpp"
#include "bigsl/ingest.hpp"
#include "bigsl/params.hpp"
#include "bigsl/structure.hpp"

namespace bigsl {

/// Standard single-layer LSTM, gate blocks ordered (input, forget, candidate, output).
struct LstmWeights {
  Matrix w_x;  // 4·d3 × d2
  Matrix w_h;  // 4·d3 × d3
  Matrix b;    // 1 × 4·d3

  static LstmWeights random(Index d2, Index d3, Rng& rng);
};

struct LstmVars {
  ad::Var w_x, w_h, b;
};

/// Final hidden state (1 × d3) of the LSTM over `inputs` (L × d2) from a zero state.
Matrix encode_sequence(const Matrix& inputs, const LstmWeights& w);
/// softmax(W_out · [h ‖ u]) as a 1 × N row.
Matrix predict_next(const Matrix& h, const Matrix& user, const Matrix& w_out);
/// −Σ log ŷ[target] over the batch (rows of `predictions`).
double ce_loss(const Matrix& predictions, std::span<const int> targets);

struct LossWeights {
  double hsl = 1e-4;
  double sh = 1e-1;
  double sp = 1e-4;
};
double total_loss(double ce, double hsl_sum, double l_sh, double l_sp, const LossWeights& betas);

/// One readout of a batched LSTM pass: hidden state of `sequence` after `step`+1 inputs.
struct Readout {
  int sequence = 0;
  int step = 0;
};

/// Runs the LSTM over several index sequences into `table` at once and returns the
/// requested hidden states, one row per readout in the given order.
ad::Var lstm_readouts(const LstmVars& w, ad::Var table, const std::vector<std::vector<int>>& sequences,
                      const std::vector<Readout>& readouts);

/// Predicts `visits[position]` of `user` from the preceding (at most max_seq_len) visits.
struct Sample {
  int user = 0;
  int position = 0;
};

/// Every prefix of each training split: positions 1 .. train_len−1.
std::vector<Sample> training_samples(const Dataset& dataset);
/// Every test position: train_len .. len−1, with the full preceding history as input.
std::vector<Sample> test_samples(const Dataset& dataset);

struct LossBreakdown {
  double total = 0.0;
  double ce = 0.0;
  double hsl = 0.0;
  double sh = 0.0;
  double sp = 0.0;
};

/// Per-view artifacts of one graph-stage evaluation.
struct ViewGraph {
  BiLevelGraph graph;
  Matrix structure_embeddings;  // empty unless pairwise learning is active
  Matrix representations;       // p^v
};

/// Full model: backbone, per-view structure learning and propagation, fusion and injection.
class Model {
 public:
  Model(TrainingConfig config, std::size_t num_users, std::vector<FeatureView> views);

  const TrainingConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  std::vector<PrototypeSet>& prototypes() { return prototypes_; }
  const std::vector<PrototypeSet>& prototypes() const { return prototypes_; }
  const std::vector<FeatureView>& views() const { return views_; }
  std::size_t num_pois() const { return num_pois_; }
  std::size_t num_users() const { return num_users_; }
  bool uses_graph() const { return config_.graph != GraphMode::kOff; }
  bool uses_prototypes() const { return uses_graph() && config_.use_prototypes; }

  /// One k-means assign+update round for every view.
  void estep(std::uint64_t seed);
  /// Current structure embeddings of a view (primitive features in rule mode).
  Matrix clustering_input(std::size_t view) const;

  /// Records the batch objective on `tape` and returns it with its components.
  ad::Var batch_loss(ad::Tape& tape, const Dataset& dataset, std::span<const Sample> batch,
                     std::uint64_t negatives_seed, LossBreakdown* breakdown = nullptr) const;

  /// B × N next-POI distributions.
  Matrix predict(const Dataset& dataset, std::span<const Sample> samples) const;
  Matrix enriched_embeddings() const;
  std::vector<ViewGraph> view_graphs() const;
  ViewRepresentations representations() const;

 private:
  struct GraphStage {
    ad::Var enriched;
    ad::Var hsl, sh, sp;
    std::vector<ad::Var> per_view;
    std::vector<ad::Var> a_poi, a_proto, z;
    ad::Var shared, fused, fusion_weights;
    std::vector<ad::Var> specific;
  };

  std::vector<ad::Var> bind(ad::Tape& tape, bool trainable) const;
  GraphStage graph_stage(ad::Tape& tape, const std::vector<ad::Var>& p, std::uint64_t negatives_seed,
                         bool with_losses) const;
  ad::Var sequence_logits(const std::vector<ad::Var>& p, ad::Var enriched, const Dataset& dataset,
                          std::span<const Sample> samples) const;
  ad::Var var(const std::vector<ad::Var>& p, const std::string& name) const {
    return p[params_.index_of(name)];
  }
  void add_param(const std::string& name, Index rows, Index cols, Index fan_in);
  Matrix rule_poi_adjacency(std::size_t view) const;
  Matrix rule_proto_adjacency(std::size_t view) const;

  TrainingConfig config_;
  std::size_t num_pois_ = 0;
  std::size_t num_users_ = 0;
  std::vector<FeatureView> views_;
  ParameterStore params_;
  std::vector<PrototypeSet> prototypes_;
  std::vector<Matrix> rule_poi_;  // rule-mode POI graphs, fixed at construction
};

/// Radius graph on the rows of x (at most top_k nearest within radius), unit weights plus
/// self-loop, row-normalized.
Matrix rule_adjacency_radius(const Matrix& x, double radius, int top_k);
/// Top-k cosine neighbors (positive similarity), cosine weights plus self-loop, row-normalized.
Matrix rule_adjacency_cosine(const Matrix& x, int top_k);

}  // namespace bigsl
