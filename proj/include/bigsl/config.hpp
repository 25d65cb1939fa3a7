#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bigsl/ingest.hpp"
#include "bigsl/structure.hpp"

namespace bigsl {

enum class GraphMode { kLearned, kRule, kOff };
std::string to_string(GraphMode m);

enum class Ablation { kFull, kNoHsl, kNoPsl, kNoShar, kNoSpec, kNoSharSpec, kBackbone };
std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);
/// The base model followed by the five removal variants.
const std::vector<Ablation>& ablation_table_variants();

/// Every knob of model construction and training.
struct TrainingConfig {
  double lr = 1e-4;
  int epochs = 60;
  int batch_size = 96;
  int d2 = 1024;
  int d3 = 1024;
  double beta_hsl = 1e-4;
  double beta_sh = 1e-1;
  double beta_sp = 1e-4;
  int k = 80;
  double tau1 = 0.1;
  double tau2 = 0.5;
  double epsilon = 0.5;
  int top_k = 10;
  EStepCadence estep = EStepCadence::kEpoch;
  std::uint64_t seed = 42;

  int max_seq_len = 50;
  double clip_norm = 5.0;
  std::size_t negatives_cap = 512;
  std::vector<ViewId> views{ViewId::kSpatial, ViewId::kTemporal};
  GraphMode graph = GraphMode::kLearned;
  bool use_prototypes = true;
  /// Rule-based graph substitute: spatial radius in normalized coordinates, temporal neighbor count.
  double rule_radius = 0.05;
  int rule_top_k = 10;
  Ablation ablation = Ablation::kFull;

  GslHyperParams gsl() const;
  void validate() const;
};

/// Applies an ablation's config changes (zeroed betas, rule graphs, disabled relations).
TrainingConfig with_ablation(TrainingConfig config, Ablation a);

/// Full operator configuration: training knobs plus I/O and preprocessing settings.
struct RunConfig {
  TrainingConfig train;
  std::string profile = "paper";
  std::string dataset;
  std::string workdir = "bigsl-run";
  std::string run_id;
  FilterThresholds filter;
  double split_ratio = 0.8;
  std::size_t slots = kDefaultSlots;
  int eval_every = 0;
  bool export_graphs = false;
  bool export_embeddings = false;

  /// Flat key → value view of every field (values formatted as they are parsed).
  std::map<std::string, std::string> to_map() const;
  std::string to_text() const;
};

RunConfig profile_defaults(const std::string& profile);
/// Sets one key; throws ConfigError for unknown keys or unparseable values.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);
/// Parses `key = value` lines (# comments, blank lines allowed).
std::map<std::string, std::string> parse_config_text(const std::string& text);
/// Defaults of the profile named in the file (or `profile`), then file values, then
/// BIGSL_<KEY> environment variables.
RunConfig load_run_config(const std::string& path, const std::string& profile = "");
RunConfig resolve_run_config(const std::map<std::string, std::string>& file_values, const std::string& profile);
/// Rebuilds a config from to_text() output; ignores the environment.
RunConfig run_config_from_text(const std::string& text);
std::vector<std::string> config_keys();

}  // namespace bigsl
