#include "bigsl/config.hpp"

#include <charconv>
#include <cstdlib>
#include <functional>
#include <sstream>

#include "bigsl/errors.hpp"

namespace bigsl {

std::string to_string(GraphMode m) {
  switch (m) {
    case GraphMode::kLearned:
      return "learned";
    case GraphMode::kRule:
      return "rule";
    case GraphMode::kOff:
      return "off";
  }
  return "learned";
}

namespace {

GraphMode graph_mode_from_string(const std::string& s) {
  if (s == "learned") return GraphMode::kLearned;
  if (s == "rule") return GraphMode::kRule;
  if (s == "off") return GraphMode::kOff;
  throw ConfigError("unknown graph mode: " + s);
}

const std::vector<std::pair<Ablation, std::string>>& ablation_names() {
  static const std::vector<std::pair<Ablation, std::string>> names{
      {Ablation::kFull, "full"},       {Ablation::kNoHsl, "no-hsl"},   {Ablation::kNoPsl, "no-psl"},
      {Ablation::kNoShar, "no-shar"},  {Ablation::kNoSpec, "no-spec"}, {Ablation::kNoSharSpec, "no-shar-spec"},
      {Ablation::kBackbone, "backbone"}};
  return names;
}

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("bad number for " + key + ": '" + s + "'");
  return v;
}

template <class Int>
Int parse_int(const std::string& key, const std::string& s) {
  Int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("bad integer for " + key + ": '" + s + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("bad boolean for " + key + ": '" + s + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::map<std::string, Field>& fields() {
  using C = RunConfig;
  using S = const std::string&;
  static const std::map<std::string, Field> f{
      {"profile", {[](C& c, S, S v) { c.profile = v; }, [](const C& c) { return c.profile; }}},
      {"lr", {[](C& c, S k, S v) { c.train.lr = parse_double(k, v); }, [](const C& c) { return fmt(c.train.lr); }}},
      {"epochs",
       {[](C& c, S k, S v) { c.train.epochs = parse_int<int>(k, v); },
        [](const C& c) { return std::to_string(c.train.epochs); }}},
      {"batch_size",
       {[](C& c, S k, S v) { c.train.batch_size = parse_int<int>(k, v); },
        [](const C& c) { return std::to_string(c.train.batch_size); }}},
      {"d2", {[](C& c, S k, S v) { c.train.d2 = parse_int<int>(k, v); }, [](const C& c) { return std::to_string(c.train.d2); }}},
      {"d3", {[](C& c, S k, S v) { c.train.d3 = parse_int<int>(k, v); }, [](const C& c) { return std::to_string(c.train.d3); }}},
      {"beta_hsl",
       {[](C& c, S k, S v) { c.train.beta_hsl = parse_double(k, v); }, [](const C& c) { return fmt(c.train.beta_hsl); }}},
      {"beta_sh",
       {[](C& c, S k, S v) { c.train.beta_sh = parse_double(k, v); }, [](const C& c) { return fmt(c.train.beta_sh); }}},
      {"beta_sp",
       {[](C& c, S k, S v) { c.train.beta_sp = parse_double(k, v); }, [](const C& c) { return fmt(c.train.beta_sp); }}},
      {"k", {[](C& c, S k, S v) { c.train.k = parse_int<int>(k, v); }, [](const C& c) { return std::to_string(c.train.k); }}},
      {"tau1", {[](C& c, S k, S v) { c.train.tau1 = parse_double(k, v); }, [](const C& c) { return fmt(c.train.tau1); }}},
      {"tau2", {[](C& c, S k, S v) { c.train.tau2 = parse_double(k, v); }, [](const C& c) { return fmt(c.train.tau2); }}},
      {"epsilon",
       {[](C& c, S k, S v) { c.train.epsilon = parse_double(k, v); }, [](const C& c) { return fmt(c.train.epsilon); }}},
      {"top_k",
       {[](C& c, S k, S v) { c.train.top_k = parse_int<int>(k, v); }, [](const C& c) { return std::to_string(c.train.top_k); }}},
      {"estep",
       {[](C& c, S k, S v) {
          if (v == "epoch") {
            c.train.estep = EStepCadence::kEpoch;
          } else if (v == "batch") {
            c.train.estep = EStepCadence::kBatch;
          } else {
            throw ConfigError("bad value for " + k + ": '" + v + "'");
          }
        },
        [](const C& c) { return std::string(c.train.estep == EStepCadence::kEpoch ? "epoch" : "batch"); }}},
      {"seed",
       {[](C& c, S k, S v) { c.train.seed = parse_int<std::uint64_t>(k, v); },
        [](const C& c) { return std::to_string(c.train.seed); }}},
      {"max_seq_len",
       {[](C& c, S k, S v) { c.train.max_seq_len = parse_int<int>(k, v); },
        [](const C& c) { return std::to_string(c.train.max_seq_len); }}},
      {"clip_norm",
       {[](C& c, S k, S v) { c.train.clip_norm = parse_double(k, v); }, [](const C& c) { return fmt(c.train.clip_norm); }}},
      {"negatives_cap",
       {[](C& c, S k, S v) { c.train.negatives_cap = parse_int<std::size_t>(k, v); },
        [](const C& c) { return std::to_string(c.train.negatives_cap); }}},
      {"views",
       {[](C& c, S, S v) {
          c.train.views.clear();
          std::stringstream ss(v);
          std::string item;
          while (std::getline(ss, item, ',')) c.train.views.push_back(view_from_string(trim(item)));
        },
        [](const C& c) {
          std::string out;
          for (std::size_t i = 0; i < c.train.views.size(); ++i) out += (i ? "," : "") + to_string(c.train.views[i]);
          return out;
        }}},
      {"graph",
       {[](C& c, S, S v) { c.train.graph = graph_mode_from_string(v); }, [](const C& c) { return to_string(c.train.graph); }}},
      {"prototypes",
       {[](C& c, S k, S v) { c.train.use_prototypes = parse_bool(k, v); },
        [](const C& c) { return std::string(c.train.use_prototypes ? "true" : "false"); }}},
      {"rule_radius",
       {[](C& c, S k, S v) { c.train.rule_radius = parse_double(k, v); }, [](const C& c) { return fmt(c.train.rule_radius); }}},
      {"rule_top_k",
       {[](C& c, S k, S v) { c.train.rule_top_k = parse_int<int>(k, v); },
        [](const C& c) { return std::to_string(c.train.rule_top_k); }}},
      {"ablation",
       {[](C& c, S, S v) { c.train.ablation = ablation_from_string(v); },
        [](const C& c) { return to_string(c.train.ablation); }}},
      {"dataset", {[](C& c, S, S v) { c.dataset = v; }, [](const C& c) { return c.dataset; }}},
      {"workdir", {[](C& c, S, S v) { c.workdir = v; }, [](const C& c) { return c.workdir; }}},
      {"run_id", {[](C& c, S, S v) { c.run_id = v; }, [](const C& c) { return c.run_id; }}},
      {"min_user",
       {[](C& c, S k, S v) { c.filter.min_user = parse_int<std::size_t>(k, v); },
        [](const C& c) { return std::to_string(c.filter.min_user); }}},
      {"max_user",
       {[](C& c, S k, S v) { c.filter.max_user = parse_int<std::size_t>(k, v); },
        [](const C& c) { return std::to_string(c.filter.max_user); }}},
      {"min_poi_users",
       {[](C& c, S k, S v) { c.filter.min_poi_users = parse_int<std::size_t>(k, v); },
        [](const C& c) { return std::to_string(c.filter.min_poi_users); }}},
      {"filter_fixpoint",
       {[](C& c, S k, S v) { c.filter.to_fixpoint = parse_bool(k, v); },
        [](const C& c) { return std::string(c.filter.to_fixpoint ? "true" : "false"); }}},
      {"split_ratio",
       {[](C& c, S k, S v) { c.split_ratio = parse_double(k, v); }, [](const C& c) { return fmt(c.split_ratio); }}},
      {"slots",
       {[](C& c, S k, S v) { c.slots = parse_int<std::size_t>(k, v); }, [](const C& c) { return std::to_string(c.slots); }}},
      {"eval_every",
       {[](C& c, S k, S v) { c.eval_every = parse_int<int>(k, v); }, [](const C& c) { return std::to_string(c.eval_every); }}},
      {"export_graphs",
       {[](C& c, S k, S v) { c.export_graphs = parse_bool(k, v); },
        [](const C& c) { return std::string(c.export_graphs ? "true" : "false"); }}},
      {"export_embeddings",
       {[](C& c, S k, S v) { c.export_embeddings = parse_bool(k, v); },
        [](const C& c) { return std::string(c.export_embeddings ? "true" : "false"); }}},
  };
  return f;
}

std::string env_name(const std::string& key) {
  std::string out = "BIGSL_";
  for (char ch : key) out += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return out;
}

}  // namespace

std::string to_string(Ablation a) {
  for (const auto& [v, n] : ablation_names())
    if (v == a) return n;
  return "full";
}

Ablation ablation_from_string(const std::string& s) {
  for (const auto& [v, n] : ablation_names())
    if (n == s) return v;
  throw ConfigError("unknown ablation: " + s);
}

const std::vector<Ablation>& ablation_table_variants() {
  static const std::vector<Ablation> v{Ablation::kFull,   Ablation::kNoHsl,  Ablation::kNoPsl,
                                       Ablation::kNoShar, Ablation::kNoSpec, Ablation::kNoSharSpec};
  return v;
}

GslHyperParams TrainingConfig::gsl() const {
  GslHyperParams h;
  h.k = k;
  h.tau1 = tau1;
  h.epsilon = epsilon;
  h.top_k = top_k;
  h.estep = estep;
  return h;
}

void TrainingConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (d2 < 1 || d3 < 1) throw ConfigError("d2 and d3 must be positive");
  if (beta_hsl < 0.0 || beta_sh < 0.0 || beta_sp < 0.0) throw ConfigError("loss weights must be non-negative");
  if (!(tau2 > 0.0)) throw ConfigError("tau2 must be positive");
  if (max_seq_len < 1) throw ConfigError("max_seq_len must be positive");
  if (views.empty()) throw ConfigError("at least one view is required");
  if (rule_top_k < 1 || !(rule_radius >= 0.0)) throw ConfigError("bad rule-graph settings");
  gsl().validate();
}

TrainingConfig with_ablation(TrainingConfig c, Ablation a) {
  c.ablation = a;
  switch (a) {
    case Ablation::kFull:
      break;
    case Ablation::kNoHsl:
      c.beta_hsl = 0.0;
      c.use_prototypes = false;
      break;
    case Ablation::kNoPsl:
      c.graph = GraphMode::kRule;
      break;
    case Ablation::kNoShar:
      c.beta_sh = 0.0;
      break;
    case Ablation::kNoSpec:
      c.beta_sp = 0.0;
      break;
    case Ablation::kNoSharSpec:
      c.beta_sh = 0.0;
      c.beta_sp = 0.0;
      break;
    case Ablation::kBackbone:
      c.beta_hsl = c.beta_sh = c.beta_sp = 0.0;
      c.graph = GraphMode::kOff;
      break;
  }
  return c;
}

std::map<std::string, std::string> RunConfig::to_map() const {
  std::map<std::string, std::string> out;
  for (const auto& [k, f] : fields()) out[k] = f.get(*this);
  return out;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : to_map()) out += k + " = " + v + "\n";
  return out;
}

RunConfig profile_defaults(const std::string& profile) {
  RunConfig c;
  c.profile = profile;
  if (profile == "paper") return c;
  if (profile == "desk") {
    c.train.d2 = 32;
    c.train.d3 = 32;
    c.train.k = 4;
    c.train.epochs = 20;
    c.train.lr = 1e-3;
    return c;
  }
  throw ConfigError("unknown profile: " + profile);
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown config key: " + key);
  it->second.set(config, key, value);
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (!fields().count(key)) throw ConfigError("unknown config key: " + key);
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

RunConfig resolve_run_config(const std::map<std::string, std::string>& file_values, const std::string& profile) {
  std::string chosen = profile;
  if (chosen.empty()) {
    auto it = file_values.find("profile");
    chosen = it != file_values.end() ? it->second : "paper";
  }
  if (const char* env = std::getenv("BIGSL_PROFILE"); env && profile.empty()) chosen = env;
  RunConfig c = profile_defaults(chosen);
  for (const auto& [k, v] : file_values) {
    if (k != "profile") apply_setting(c, k, v);
  }
  for (const auto& [k, f] : fields()) {
    if (k == "profile") continue;
    if (const char* env = std::getenv(env_name(k).c_str())) apply_setting(c, k, env);
  }
  c.train.validate();
  return c;
}

RunConfig load_run_config(const std::string& path, const std::string& profile) {
  return resolve_run_config(parse_config_text(read_file(path)), profile);
}

RunConfig run_config_from_text(const std::string& text) {
  const auto values = parse_config_text(text);
  auto it = values.find("profile");
  RunConfig c = profile_defaults(it != values.end() ? it->second : "paper");
  for (const auto& [k, v] : values) apply_setting(c, k, v);
  c.train.validate();
  return c;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, f] : fields()) out.push_back(k);
  return out;
}

}  // namespace bigsl
