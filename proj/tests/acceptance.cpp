// Acceptance suite: one PASS/FAIL line per criterion. Every tolerance lives in this file.
//
//   bigsl_acceptance            run criteria 1-8 (8 is skipped unless BIGSL_GOWALLA names a raw check-in file)
//   bigsl_acceptance 2 6        run only the listed criteria
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>

#include "bigsl/evaluation.hpp"
#include "bigsl/export.hpp"
#include "bigsl/fusion.hpp"
#include "bigsl/trainer.hpp"
#include "instances.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace bigsl;
using testing::random_matrix;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kOracleTol = 1e-9;       // equation oracles
constexpr double kNmiMin = 0.9;           // clustering recovery
constexpr double kWcssSlack = 1e-12;      // monotone within-cluster sum of squares
constexpr double kRowSumTol = 1e-9;       // stochastic rows and attention sums
constexpr double kAcc1Min = 0.8;          // end-to-end synthetic learning
constexpr int kSeeds = 3;
constexpr double kGradBudgetSeconds = 60;  // criterion 1 runtime

struct Outcome {
  bool pass = true;
  std::string detail;
  bool skipped = false;

  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

double max_abs(const Matrix& a) { return a.size() ? a.cwiseAbs().maxCoeff() : 0.0; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Dataset synthetic_dataset(std::uint64_t seed, const RunConfig& rc, int users = 300) {
  SyntheticSpec spec;
  spec.seed = seed;
  spec.users = users;
  Dataset ds = filter_dataset(generate_synthetic(spec).checkins, rc.filter);
  split_train_test(ds, rc.split_ratio);
  return ds;
}

// Toy model inputs: N ≤ 16, K ≤ 4, d ≤ 8.
struct Toy {
  Dataset ds;
  RunConfig rc;
  std::vector<FeatureView> views;
};

Toy toy(std::uint64_t seed) {
  Toy t{testing::small_dataset(seed), testing::tiny_config(seed), {}};
  t.rc.train.d2 = 6;
  t.rc.train.d3 = 6;
  t.rc.train.k = 3;
  t.views = build_views(t.ds, t.rc.train, t.rc.slots);
  return t;
}

// 1 -------------------------------------------------------------------------
Outcome gradient_integrity() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t checked = 0;
  auto record = [&](const char* what, std::uint64_t seed, const testing::GradReport& r) {
    checked += r.checked;
    if (!r.ok) o.fail(std::string(what) + " seed " + std::to_string(seed) + ": " + r.where);
  };
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    Toy t = toy(seed);
    if (t.ds.num_pois() > 16) o.fail("toy instance has more than 16 POIs");
    auto samples = training_samples(t.ds);
    std::span<const Sample> batch(samples.data(), 8);

    // CE alone: every auxiliary weight off, graph stage still active.
    TrainingConfig ce = t.rc.train;
    ce.beta_hsl = ce.beta_sh = ce.beta_sp = 0;
    Model m_ce(ce, t.ds.num_users(), t.views);
    m_ce.estep(seed);
    record("ce", seed, testing::check_model_gradients(m_ce, t.ds, batch));

    TrainingConfig total = t.rc.train;
    total.beta_hsl = total.beta_sh = total.beta_sp = 1.0;
    Model m_total(total, t.ds.num_users(), t.views);
    m_total.estep(seed);
    record("total", seed, testing::check_model_gradients(m_total, t.ds, batch));

    Rng rng(seed);
    const int n = 12, k = 4, d1 = 5, d = 8;
    Matrix x = random_matrix(n, d1, rng);
    PrototypeSet protos = kmeans_estep(random_matrix(n, d, rng), kmeans_init(k), rng);
    record("hsl", seed,
           testing::check_gradients(
               [&](ad::Tape& tape, const std::vector<ad::Var>& v) {
                 return hsl_loss(structure_embed(tape.constant(x), GslVars{v[0], v[1], v[2], v[3]}), protos, 0.1);
               },
               {random_matrix(d, d1, rng), random_matrix(1, d, rng), random_matrix(d, d, rng), random_matrix(1, d, rng)}));

    auto views = testing::random_views(rng, 2, n, d);
    record("sh", seed,
           testing::check_gradients(
               [&](ad::Tape&, const std::vector<ad::Var>& v) {
                 std::vector<ad::Var> vs{v[0], v[1]};
                 return shared_loss(vs, shared_representation(vs), 0.5, NegativePolicy{});
               },
               views));
    record("sp", seed,
           testing::check_gradients(
               [&](ad::Tape&, const std::vector<ad::Var>& v) {
                 std::vector<ad::Var> vs{v[0], v[1]};
                 return orthogonality_loss(specific_representations(vs, shared_representation(vs)));
               },
               views));
  }
  const double secs = seconds_since(t0);
  if (secs > kGradBudgetSeconds) o.fail("took " + std::to_string(secs) + " s");
  if (o.pass) o.detail = std::to_string(checked) + " entries, " + std::to_string(secs).substr(0, 5) + " s";
  return o;
}

// 2 -------------------------------------------------------------------------
Outcome clustering_recovery() {
  Outcome o;
  Rng rng(2024);
  const int k = 4, per = 50, d = 8;
  Matrix z(k * per, d);
  std::vector<int> truth;
  for (int c = 0; c < k; ++c) {
    for (int p = 0; p < per; ++p) {
      const Index i = c * per + p;
      for (int j = 0; j < d; ++j) z(i, j) = (j == 2 * c ? 1.0 : 0.0) + 0.08 * rng.normal();
      z.row(i).normalize();
      truth.push_back(c);
    }
  }
  PrototypeSet p = kmeans_estep(z, kmeans_init(k), rng);
  double prev = within_cluster_ss(z, p);
  for (int round = 0; round < 10; ++round) {
    PrototypeSet q = kmeans_estep(z, p, rng);
    for (Index i = 0; i < z.rows(); ++i) {
      if (q.assignments[i] != oracle::nearest(z, i, p.centroids)) o.fail("assignment is not the nearest centroid");
    }
    const double cur = within_cluster_ss(z, q);
    if (cur > prev + kWcssSlack) o.fail("WCSS rose in round " + std::to_string(round));
    prev = cur;
    p = q;
  }
  const double score = testing::nmi(p.assignments, truth);
  if (score < kNmiMin) o.fail("NMI " + std::to_string(score));
  if (o.pass) o.detail = "NMI " + std::to_string(score);
  return o;
}

// 3 -------------------------------------------------------------------------
Outcome equation_oracles() {
  Outcome o;
  Rng rng(3);
  double worst = 0;
  auto track = [&](const char* what, double err) {
    worst = std::max(worst, err);
    if (!(err <= kOracleTol)) o.fail(std::string(what) + " off by " + std::to_string(err));
  };
  for (int trial = 0; trial < 20; ++trial) {
    const int n = testing::random_int(rng, 4, 10), k = testing::random_int(rng, 1, 3);
    const int d2 = testing::random_int(rng, 2, 5), d3 = testing::random_int(rng, 2, 5);
    BiLevelGraph g = testing::random_graph(rng, n, k, rng.uniform(0.0, 0.6), testing::random_int(rng, 1, 4));
    Matrix e = random_matrix(n, d2, rng);
    Matrix proto = cluster_mean_operator(g.prototypes.assignments, k) * e;
    RelationWeights w = testing::random_weights(rng, d2, d3);
    track("propagate", max_abs(propagate(g, e, proto, w).p -
                               oracle::propagate(testing::relations_of(g), e, proto, w.w, w.w_self, w.a1)));
  }
  for (int trial = 0; trial < 20; ++trial) {
    const int n = testing::random_int(rng, 4, 12), k = testing::random_int(rng, 1, 4), d = testing::random_int(rng, 2, 6);
    Matrix z = random_matrix(n, d, rng);
    for (Index i = 0; i < n; ++i) z.row(i).normalize();
    PrototypeSet p = kmeans_estep(z, kmeans_init(k), rng);
    const double tau = rng.uniform(0.1, 1.0);
    track("hsl", std::abs(hsl_loss(z, p, tau) - oracle::hsl(z, p.centroids, p.assignments, tau)));
  }
  for (int trial = 0; trial < 20; ++trial) {
    auto views = testing::random_views(rng, testing::random_int(rng, 2, 3), testing::random_int(rng, 2, 8), 4);
    Matrix shared = shared_representation(views);
    const double tau = rng.uniform(0.2, 1.0);
    track("shared", std::abs(shared_loss(views, shared, tau) - oracle::shared_loss(views, shared, tau)));
  }
  for (int trial = 0; trial < 20; ++trial) {
    auto spec = testing::random_views(rng, testing::random_int(rng, 2, 3), testing::random_int(rng, 2, 8), 4);
    track("orthogonality", std::abs(orthogonality_loss(spec) - oracle::orthogonality(spec)));
  }
  for (int trial = 0; trial < 20; ++trial) {
    const int n = testing::random_int(rng, 2, 8);
    Matrix s = random_matrix(n, 4, rng);
    auto sp = testing::random_views(rng, testing::random_int(rng, 2, 3), n, 4);
    Matrix a2 = random_matrix(1, 4, rng, -2, 2);
    track("fuse", max_abs(attentive_fuse(s, sp, a2) - oracle::fuse(s, sp, a2)));
  }
  if (o.pass) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "worst error %.3g", worst);
    o.detail = buf;
  }
  return o;
}

// 4 -------------------------------------------------------------------------
void check_graph(Outcome& o, const BiLevelGraph& g, const std::string& where, Rng& rng) {
  const Index n = g.num_pois();
  for (Index i = 0; i < n; ++i) {
    if (std::abs(g.a_poi.row(i).sum() - 1.0) > kRowSumTol) o.fail(where + ": A_poi row not stochastic");
    if ((g.a_hier.row(i).array() == 1.0).count() != 1 || g.a_hier.row(i).sum() != 1.0)
      o.fail(where + ": A_hier row not one-hot");
  }
  for (Index c = 0; c < g.a_proto.rows(); ++c)
    if (std::abs(g.a_proto.row(c).sum() - 1.0) > kRowSumTol) o.fail(where + ": A_proto row not stochastic");
  if (g.e2() != static_cast<std::size_t>(n)) o.fail(where + ": E2 != N");
  if (g.e3() > g.e1()) o.fail(where + ": E3 > E1");
  try {
    check_graph_bounds(g);
  } catch (const std::exception& e) {
    o.fail(where + ": " + e.what());
  }
  const int d = 4;
  Matrix e = random_matrix(n, d, rng);
  Matrix proto = cluster_mean_operator(g.prototypes.assignments, g.prototypes.k) * e;
  PropagationOutput out = propagate(g, e, proto, testing::random_weights(rng, d, d));
  for (std::size_t r = 0; r < 3; ++r) {
    std::vector<double> sums(static_cast<std::size_t>(n), 0.0);
    std::vector<bool> has(static_cast<std::size_t>(n), false);
    for (std::size_t m = 0; m < out.edges[r].size(); ++m) {
      sums[out.edges[r].dst[m]] += out.alpha[r](static_cast<Index>(m), 0);
      has[out.edges[r].dst[m]] = true;
    }
    for (Index i = 0; i < n; ++i)
      if (has[i] && std::abs(sums[i] - 1.0) > kRowSumTol) o.fail(where + ": attention does not sum to 1");
  }
}

Outcome structural_invariants() {
  Outcome o;
  Rng rng(4);
  std::size_t graphs = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const int n = testing::random_int(rng, 4, 20), k = testing::random_int(rng, 1, std::min(n - 1, 5));
    const Index d1 = testing::random_int(rng, 2, 6), d2 = testing::random_int(rng, 2, 6);
    Matrix x = random_matrix(n, d1, rng);
    GslTransform t1 = GslTransform::random(d1, d2, rng), t2 = GslTransform::random(d2, d2, rng);
    PrototypeSet p = kmeans_estep(structure_embed(x, t1), kmeans_init(k), rng);
    GslHyperParams hyper;
    hyper.k = k;
    hyper.epsilon = rng.uniform(0.0, 0.9);
    hyper.top_k = testing::random_int(rng, 1, 6);
    check_graph(o, build_bilevel_graph(x, t1, t2, p, hyper), "random graph " + std::to_string(trial), rng);
    check_graph(o, testing::random_graph(rng, n, k, hyper.epsilon, hyper.top_k), "random pattern", rng);
    graphs += 2;
  }
  // Graphs a trained model builds, for learned and rule structure.
  for (Ablation a : {Ablation::kFull, Ablation::kNoPsl}) {
    Dataset ds = testing::small_dataset(4, 60);
    RunConfig rc = testing::tiny_config(4);
    rc.train = with_ablation(rc.train, a);
    Trainer tr(rc, ds, build_views(ds, rc.train, rc.slots));
    tr.train();
    for (const ViewGraph& vg : tr.model().view_graphs()) {
      check_graph(o, vg.graph, "model graph (" + to_string(a) + ")", rng);
      ++graphs;
    }
    Matrix y = tr.model().predict(ds, test_samples(ds));
    for (Index i = 0; i < y.rows(); ++i)
      if (std::abs(y.row(i).sum() - 1.0) > kRowSumTol) o.fail("prediction row does not sum to 1");
  }
  if (o.pass) o.detail = std::to_string(graphs) + " graphs";
  return o;
}

// 5 -------------------------------------------------------------------------
double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

Outcome synthetic_learning() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig desk = profile_defaults("desk");
  const std::vector<Ablation> variants{Ablation::kFull, Ablation::kBackbone, Ablation::kNoPsl};
  std::map<Ablation, std::vector<double>> acc1, acc5;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    RunConfig rc = desk;
    rc.train.seed = seed;
    const Dataset ds = synthetic_dataset(seed, rc);
    for (Ablation a : variants) {
      RunConfig c = rc;
      c.train = with_ablation(rc.train, a);
      Trainer tr(c, ds, build_views(ds, c.train, c.slots));
      tr.train();
      const EvalReport r = evaluate(tr.model(), ds);
      acc1[a].push_back(r.all.acc(1));
      acc5[a].push_back(r.all.acc(5));
      std::printf("  seed %llu %-9s acc@1 %.4f acc@5 %.4f mrr %.4f\n", static_cast<unsigned long long>(seed),
                  to_string(a).c_str(), r.all.acc(1), r.all.acc(5), r.all.mrr);
      std::fflush(stdout);
    }
  }
  const double full1 = median3(acc1[Ablation::kFull]), full5 = median3(acc5[Ablation::kFull]);
  const double bb5 = median3(acc5[Ablation::kBackbone]), psl5 = median3(acc5[Ablation::kNoPsl]);
  char buf[256];
  std::snprintf(buf, sizeof(buf), "median acc@1 %.4f; acc@5 full %.4f backbone %.4f no-psl %.4f; %.0f s", full1, full5,
                bb5, psl5, seconds_since(t0));
  o.detail = buf;
  if (full1 < kAcc1Min) o.pass = false;
  if (!(full5 > bb5)) o.pass = false;
  if (!(full5 > psl5)) o.pass = false;
  return o;
}

// 6 -------------------------------------------------------------------------
Outcome metric_oracle() {
  Outcome o;
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const Index rows = testing::random_int(rng, 1, 20), cols = testing::random_int(rng, 2, 40);
    Matrix s(rows, cols);
    for (Index i = 0; i < s.size(); ++i)
      s.data()[i] = trial % 2 ? std::floor(rng.uniform(0, 5)) : rng.uniform(-1, 1);
    std::vector<int> targets;
    std::vector<std::size_t> subset;
    for (Index i = 0; i < rows; ++i) {
      targets.push_back(testing::random_int(rng, 0, static_cast<int>(cols) - 1));
      if (rng.uniform(0, 1) < 0.4) subset.push_back(static_cast<std::size_t>(i));
    }
    // Sort-and-scan reference.
    std::vector<int> ranks;
    for (Index i = 0; i < rows; ++i) {
      std::vector<double> row(s.row(i).begin(), s.row(i).end());
      ranks.push_back(oracle::rank_by_sort(row, targets[i]));
    }
    auto reference = [&](const std::vector<std::size_t>& idx, MetricSet& want) {
      want.sample_count = idx.size();
      want.defined = !idx.empty();
      if (!want.defined) return;
      for (std::size_t c = 0; c < kCutoffs.size(); ++c) {
        std::size_t hits = 0;
        for (std::size_t i : idx) hits += ranks[i] <= kCutoffs[c];
        want.acc_at[c] = static_cast<double>(hits) / static_cast<double>(idx.size());
      }
      double rr = 0;
      for (std::size_t i : idx) rr += 1.0 / ranks[i];
      want.mrr = rr / static_cast<double>(idx.size());
    };
    std::vector<std::size_t> all(static_cast<std::size_t>(rows));
    std::iota(all.begin(), all.end(), 0);
    MetricSet want_all, want_sub;
    reference(all, want_all);
    reference(subset, want_sub);
    const EvalReport got = make_report(ranks_of(s, targets), subset);
    auto same = [](const MetricSet& a, const MetricSet& b) {
      return a.defined == b.defined && a.sample_count == b.sample_count && a.acc_at == b.acc_at && a.mrr == b.mrr;
    };
    if (!same(got.all, want_all)) o.fail("full set differs in trial " + std::to_string(trial));
    if (!same(got.next_new, want_sub)) o.fail("subset differs in trial " + std::to_string(trial));
  }
  if (o.pass) o.detail = "100 matrices, exact";
  return o;
}

// 7 -------------------------------------------------------------------------
Outcome determinism() {
  Outcome o;
  const fs::path dir = testing::temp_dir("acceptance-det");
  RunConfig rc = profile_defaults("desk");
  rc.train.seed = 7;
  rc.train.epochs = 5;
  SyntheticSpec spec;
  spec.seed = 7;
  spec.users = 120;
  const std::string raw = serialize_checkins(generate_synthetic(spec).checkins);
  std::vector<std::string> datasets, checkpoints, reports;
  for (int run = 0; run < 2; ++run) {
    const std::string path = (dir / ("data" + std::to_string(run) + ".bigsl")).string();
    Dataset ds = filter_dataset(parse_checkins(raw), rc.filter);
    split_train_test(ds, rc.split_ratio);
    save_dataset(path, ds, rc.slots);
    datasets.push_back(read_file(path));
    const Dataset loaded = load_dataset(path);
    Trainer tr(rc, loaded, build_views(loaded, rc.train, rc.slots));
    tr.train();
    checkpoints.push_back(serialize_checkpoint(tr.checkpoint()));
    const Model m = model_from_checkpoint(parse_checkpoint(checkpoints.back()));
    const EvalReport r = evaluate(m, loaded, "det");
    reports.push_back(report_text(r) + report_json(r));
  }
  if (datasets[0] != datasets[1]) o.fail("preprocessed datasets differ");
  if (checkpoints[0] != checkpoints[1]) o.fail("checkpoints differ");
  if (reports[0] != reports[1]) o.fail("reports differ");
  if (o.pass) o.detail = "dataset, 5-epoch checkpoint (" + std::to_string(checkpoints[0].size()) + " bytes) and report identical";
  fs::remove_all(dir);
  return o;
}

// 8 -------------------------------------------------------------------------
Outcome gowalla() {
  Outcome o;
  const char* path = std::getenv("BIGSL_GOWALLA");
  if (!path || !*path || !fs::exists(path)) {
    o.skipped = true;
    o.detail = "BIGSL_GOWALLA not set or missing";
    return o;
  }
  // Profile defaults plus any BIGSL_<KEY> overrides from the environment.
  RunConfig rc = resolve_run_config({}, "paper");
  Dataset ds = filter_dataset(read_checkin_file(path), rc.filter);
  split_train_test(ds, rc.split_ratio);
  std::printf("  gowalla users %zu pois %zu checkins %zu\n", ds.num_users(), ds.num_pois(), ds.num_checkins());
  Trainer tr(rc, ds, build_views(ds, rc.train, rc.slots));
  tr.train([](const EpochRecord& r) {
    std::printf("  %s\n", epoch_log_line(r).c_str());
    std::fflush(stdout);
  });
  const EvalReport r = evaluate(tr.model(), ds, "gowalla");
  char buf[256];
  std::snprintf(buf, sizeof(buf), "acc@5 %.4f (0.2923) acc@10 %.4f (0.3685) acc@20 %.4f (0.4471) mrr %.4f (0.2162)",
                r.all.acc(5), r.all.acc(10), r.all.acc(20), r.all.mrr);
  o.detail = buf;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, gradient_integrity}, {2, clustering_recovery}, {3, equation_oracles}, {4, structural_invariants},
      {5, synthetic_learning}, {6, metric_oracle},       {7, determinism},      {8, gowalla}};
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  bool all_pass = true;
  for (const auto& [id, run] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const char* verdict = o.skipped ? "SKIP" : o.pass ? "PASS" : "FAIL";
    std::printf("criterion %d: %s  %s\n", id, verdict, o.detail.c_str());
    std::fflush(stdout);
    all_pass = all_pass && (o.pass || o.skipped);
  }
  return all_pass ? 0 : 1;
}
