#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bigsl/config.hpp"
#include "bigsl/model.hpp"

namespace bigsl {

inline constexpr std::array<int, 4> kCutoffs{1, 5, 10, 20};

/// 1-based rank of `target` under descending score; equal scores rank the lower POI index first.
int rank_of(std::span<const double> scores, int target);
/// Rank of each row's target in a B × N score matrix.
std::vector<int> ranks_of(const Matrix& scores, std::span<const int> targets);

double acc_at_k(std::span<const int> ranks, int k);
double acc_at_k(const Matrix& scores, std::span<const int> targets, int k);
double mrr(std::span<const int> ranks);
double mrr(const Matrix& scores, std::span<const int> targets);

/// Metrics over one sample set. `defined` is false when the set is empty.
struct MetricSet {
  std::array<double, 4> acc_at{};  // aligned with kCutoffs
  double mrr = 0.0;
  std::size_t sample_count = 0;
  bool defined = false;

  double acc(int k) const;
};

MetricSet metric_set(std::span<const int> ranks);

struct EvalReport {
  std::string run_id;
  std::string variant;
  MetricSet all;
  MetricSet next_new;  // N² subset
};

/// Indices of the samples whose target never occurs in that user's training visits.
std::vector<std::size_t> next_new_filter(const Dataset& dataset, std::span<const Sample> samples);

EvalReport make_report(std::span<const int> ranks, std::span<const std::size_t> next_new,
                       const std::string& run_id = "", const std::string& variant = "");
EvalReport evaluate(const Model& model, const Dataset& dataset, const std::string& run_id = "");

/// One `name value` record per line.
std::string report_text(const EvalReport& r);
/// JSON object for one report.
std::string report_json(const EvalReport& r);
/// Inserts (or replaces) the report under its run id in a JSON file holding an object of reports.
void merge_report_file(const std::string& path, const EvalReport& r);
/// Variant-per-row comparison table.
std::string ablation_table(const std::vector<EvalReport>& rows);

/// Trains and evaluates each variant from `base` on the same data and seed.
std::vector<EvalReport> run_ablations(const RunConfig& base, const Dataset& dataset,
                                      std::span<const Ablation> variants,
                                      const std::function<void(const EvalReport&)>& on_report = {});

}  // namespace bigsl
