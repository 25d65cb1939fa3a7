#include "bigsl/evaluation.hpp"

#include <charconv>
#include <filesystem>
#include <set>

#include "json.hpp"

#include "bigsl/errors.hpp"
#include "bigsl/trainer.hpp"

namespace bigsl {

int rank_of(std::span<const double> scores, int target) {
  if (target < 0 || static_cast<std::size_t>(target) >= scores.size()) {
    throw InvalidTarget("target " + std::to_string(target) + " outside [0, " + std::to_string(scores.size()) + ")");
  }
  const double t = scores[static_cast<std::size_t>(target)];
  int rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > t || (scores[j] == t && static_cast<int>(j) < target)) ++rank;
  }
  return rank;
}

std::vector<int> ranks_of(const Matrix& scores, std::span<const int> targets) {
  if (static_cast<Index>(targets.size()) != scores.rows()) {
    throw ShapeMismatch("ranks_of: " + std::to_string(targets.size()) + " targets vs " + shape_str(scores));
  }
  std::vector<int> out(targets.size());
  for (std::size_t b = 0; b < targets.size(); ++b) {
    const double* row = scores.data() + static_cast<Index>(b) * scores.cols();
    out[b] = rank_of(std::span<const double>(row, static_cast<std::size_t>(scores.cols())), targets[b]);
  }
  return out;
}

double acc_at_k(std::span<const int> ranks, int k) {
  if (ranks.empty()) return 0.0;
  std::size_t hits = 0;
  for (int r : ranks) hits += r <= k ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double acc_at_k(const Matrix& scores, std::span<const int> targets, int k) {
  return acc_at_k(ranks_of(scores, targets), k);
}

double mrr(std::span<const int> ranks) {
  if (ranks.empty()) return 0.0;
  double total = 0.0;
  for (int r : ranks) total += 1.0 / static_cast<double>(r);
  return total / static_cast<double>(ranks.size());
}

double mrr(const Matrix& scores, std::span<const int> targets) { return mrr(ranks_of(scores, targets)); }

double MetricSet::acc(int k) const {
  for (std::size_t i = 0; i < kCutoffs.size(); ++i)
    if (kCutoffs[i] == k) return acc_at[i];
  throw ConfigError("no Acc@" + std::to_string(k) + " in reports");
}

MetricSet metric_set(std::span<const int> ranks) {
  MetricSet m;
  m.sample_count = ranks.size();
  m.defined = !ranks.empty();
  if (!m.defined) return m;
  for (std::size_t i = 0; i < kCutoffs.size(); ++i) m.acc_at[i] = acc_at_k(ranks, kCutoffs[i]);
  m.mrr = mrr(ranks);
  return m;
}

std::vector<std::size_t> next_new_filter(const Dataset& dataset, std::span<const Sample> samples) {
  std::vector<std::set<int>> seen(dataset.sequences.size());
  for (const UserSequence& s : dataset.sequences)
    for (std::size_t t = 0; t < s.train_len; ++t) seen[static_cast<std::size_t>(s.user)].insert(s.visits[t].poi);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    const int target = dataset.sequences[s.user].visits[s.position].poi;
    if (!seen[static_cast<std::size_t>(s.user)].count(target)) out.push_back(i);
  }
  return out;
}

EvalReport make_report(std::span<const int> ranks, std::span<const std::size_t> next_new, const std::string& run_id,
                       const std::string& variant) {
  EvalReport r;
  r.run_id = run_id;
  r.variant = variant;
  r.all = metric_set(ranks);
  std::vector<int> sub;
  sub.reserve(next_new.size());
  for (std::size_t i : next_new) sub.push_back(ranks[i]);
  r.next_new = metric_set(sub);
  return r;
}

EvalReport evaluate(const Model& model, const Dataset& dataset, const std::string& run_id) {
  const auto samples = test_samples(dataset);
  if (samples.empty()) throw Error("dataset has no test samples");
  const Matrix scores = model.predict(dataset, samples);
  std::vector<int> targets;
  for (const Sample& s : samples) targets.push_back(dataset.sequences[s.user].visits[s.position].poi);
  return make_report(ranks_of(scores, targets), next_new_filter(dataset, samples), run_id,
                     to_string(model.config().ablation));
}

namespace {

std::string num(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

void metric_lines(std::string& out, const std::string& prefix, const MetricSet& m) {
  out += prefix + "sample_count " + std::to_string(m.sample_count) + "\n";
  if (!m.defined) {
    out += prefix + "status undefined\n";
    return;
  }
  for (std::size_t i = 0; i < kCutoffs.size(); ++i)
    out += prefix + "acc@" + std::to_string(kCutoffs[i]) + " " + num(m.acc_at[i]) + "\n";
  out += prefix + "mrr " + num(m.mrr) + "\n";
}

nlohmann::ordered_json metric_json(const MetricSet& m) {
  nlohmann::ordered_json j;
  j["sample_count"] = m.sample_count;
  j["defined"] = m.defined;
  if (m.defined) {
    for (std::size_t i = 0; i < kCutoffs.size(); ++i) j["acc@" + std::to_string(kCutoffs[i])] = m.acc_at[i];
    j["mrr"] = m.mrr;
  }
  return j;
}

nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["run_id"] = r.run_id;
  j["variant"] = r.variant;
  j["all"] = metric_json(r.all);
  j["next_new"] = metric_json(r.next_new);
  return j;
}

}  // namespace

std::string report_text(const EvalReport& r) {
  std::string out;
  out += "run_id " + (r.run_id.empty() ? std::string("-") : r.run_id) + "\n";
  out += "variant " + (r.variant.empty() ? std::string("-") : r.variant) + "\n";
  metric_lines(out, "", r.all);
  metric_lines(out, "n2.", r.next_new);
  return out;
}

std::string report_json(const EvalReport& r) { return to_json(r).dump(2) + "\n"; }

void merge_report_file(const std::string& path, const EvalReport& r) {
  nlohmann::ordered_json all = nlohmann::ordered_json::object();
  if (std::filesystem::exists(path)) {
    all = nlohmann::ordered_json::parse(read_file(path), nullptr, false);
    if (all.is_discarded() || !all.is_object()) throw FormatError("report file is not a JSON object: " + path);
  }
  all[r.run_id.empty() ? std::string("default") : r.run_id] = to_json(r);
  write_file_atomic(path, all.dump(2) + "\n");
}

std::string ablation_table(const std::vector<EvalReport>& rows) {
  std::string out = "variant\tacc@1\tacc@5\tacc@10\tacc@20\tmrr\tn2_acc@5\tn2_mrr\n";
  char buf[64];
  auto cell = [&](bool defined, double v) {
    if (!defined) return std::string("undefined");
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return std::string(buf);
  };
  for (const EvalReport& r : rows) {
    out += r.variant;
    for (double v : r.all.acc_at) out += "\t" + cell(r.all.defined, v);
    out += "\t" + cell(r.all.defined, r.all.mrr);
    out += "\t" + cell(r.next_new.defined, r.next_new.acc_at[1]);
    out += "\t" + cell(r.next_new.defined, r.next_new.mrr) + "\n";
  }
  return out;
}

std::vector<EvalReport> run_ablations(const RunConfig& base, const Dataset& dataset, std::span<const Ablation> variants,
                                      const std::function<void(const EvalReport&)>& on_report) {
  std::vector<EvalReport> out;
  for (Ablation a : variants) {
    RunConfig c = base;
    c.train = with_ablation(base.train, a);
    c.run_id = (base.run_id.empty() ? std::string("ablation") : base.run_id) + "/" + to_string(a);
    Trainer t(c, dataset, build_views(dataset, c.train, c.slots));
    t.train();
    out.push_back(evaluate(t.model(), dataset, c.run_id));
    if (on_report) on_report(out.back());
  }
  return out;
}

}  // namespace bigsl
