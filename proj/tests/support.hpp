#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include "bigsl/autodiff.hpp"
#include "bigsl/config.hpp"
#include "bigsl/ingest.hpp"
#include "bigsl/matrix.hpp"
#include "bigsl/model.hpp"
#include "bigsl/synthetic.hpp"

namespace testing {

using bigsl::Index;
using bigsl::Matrix;
using bigsl::Rng;

// Finite-difference contract.
inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdRtol = 1e-4;
// Floor for entries whose true gradient is (near) zero; central differences leave ~1e-11 noise there.
inline constexpr double kFdAtol = 1e-8;

inline Matrix random_matrix(Index r, Index c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

inline int random_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

using LossFn = std::function<bigsl::ad::Var(bigsl::ad::Tape&, const std::vector<bigsl::ad::Var>&)>;

struct GradReport {
  bool ok = true;
  double worst_excess = 0.0;  // largest |a−n| − tolerance seen (≤ 0 when ok)
  std::string where;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients of `f` with central differences on every input entry.
inline GradReport check_gradients(const LossFn& f, const std::vector<Matrix>& inputs, double h = kFdStep,
                                  double rtol = kFdRtol, double atol = kFdAtol) {
  bigsl::ad::Tape tape;
  std::vector<bigsl::ad::Var> vars;
  for (const Matrix& m : inputs) vars.push_back(tape.variable(m));
  bigsl::ad::Var loss = f(tape, vars);
  tape.backward(loss);
  std::vector<Matrix> analytic;
  for (const auto& v : vars) analytic.push_back(tape.grad(v));

  auto eval = [&](const std::vector<Matrix>& xs) {
    bigsl::ad::Tape t;
    std::vector<bigsl::ad::Var> vs;
    for (const Matrix& m : xs) vs.push_back(t.variable(m));
    return f(t, vs).scalar();
  };
  GradReport rep;
  rep.worst_excess = -1.0;
  std::vector<Matrix> xs = inputs;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    for (Index e = 0; e < xs[k].size(); ++e) {
      const double x0 = xs[k].data()[e];
      xs[k].data()[e] = x0 + h;
      const double fp = eval(xs);
      xs[k].data()[e] = x0 - h;
      const double fm = eval(xs);
      xs[k].data()[e] = x0;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[k].data()[e];
      const double tol = rtol * std::max(std::abs(a), std::abs(numeric)) + atol;
      const double excess = std::abs(a - numeric) - tol;
      ++rep.checked;
      if (excess > rep.worst_excess) {
        rep.worst_excess = excess;
        rep.where = "input " + std::to_string(k) + " entry " + std::to_string(e) + " analytic " +
                    std::to_string(a) + " numeric " + std::to_string(numeric);
      }
      if (excess > 0) rep.ok = false;
    }
  }
  return rep;
}

/// Central differences over every parameter entry of a model's batch objective.
inline GradReport check_model_gradients(bigsl::Model& m, const bigsl::Dataset& ds, std::span<const bigsl::Sample> batch,
                                        std::uint64_t batch_seed = 7) {
  bigsl::ad::Tape tape;
  tape.backward(m.batch_loss(tape, ds, batch, batch_seed));
  bigsl::Gradients g = tape.gradients(m.params());
  auto eval = [&] {
    bigsl::ad::Tape t;
    return m.batch_loss(t, ds, batch, batch_seed).scalar();
  };
  GradReport rep;
  rep.worst_excess = -1;
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    Matrix& w = m.params().mutable_value(i);
    for (Index e = 0; e < w.size(); ++e) {
      const double x0 = w.data()[e];
      w.data()[e] = x0 + kFdStep;
      const double fp = eval();
      w.data()[e] = x0 - kFdStep;
      const double fm = eval();
      w.data()[e] = x0;
      const double num = (fp - fm) / (2 * kFdStep);
      const double a = g[i].data()[e];
      const double excess = std::abs(a - num) - (kFdRtol * std::max(std::abs(a), std::abs(num)) + kFdAtol);
      ++rep.checked;
      if (excess > rep.worst_excess) {
        rep.worst_excess = excess;
        rep.where = m.params().name(i) + "[" + std::to_string(e) + "] analytic " + std::to_string(a) + " numeric " +
                    std::to_string(num);
      }
      if (excess > 0) rep.ok = false;
    }
  }
  return rep;
}

/// Normalized mutual information, arithmetic-mean normalization.
inline double nmi(const std::vector<int>& a, const std::vector<int>& b) {
  const double n = static_cast<double>(a.size());
  std::map<int, double> pa, pb;
  std::map<std::pair<int, int>, double> pab;
  for (std::size_t i = 0; i < a.size(); ++i) {
    pa[a[i]] += 1.0 / n;
    pb[b[i]] += 1.0 / n;
    pab[{a[i], b[i]}] += 1.0 / n;
  }
  double ha = 0, hb = 0, mi = 0;
  for (auto& [k, p] : pa) ha -= p * std::log(p);
  for (auto& [k, p] : pb) hb -= p * std::log(p);
  for (auto& [k, p] : pab) mi += p * std::log(p / (pa[k.first] * pb[k.second]));
  if (ha + hb == 0) return 1.0;
  return 2.0 * mi / (ha + hb);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static int counter = 0;
  auto p = std::filesystem::temp_directory_path() /
           ("bigsl-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Small planted dataset, filtered and split, for model-level tests.
inline bigsl::Dataset small_dataset(std::uint64_t seed = 11, int users = 40, int clusters = 2, int pois_per_cluster = 8) {
  bigsl::SyntheticSpec spec;
  spec.clusters = clusters;
  spec.pois_per_cluster = pois_per_cluster;
  spec.zones_per_cluster = pois_per_cluster / 2;
  spec.users = users;
  spec.min_len = 20;
  spec.max_len = 26;
  spec.seed = seed;
  auto data = bigsl::generate_synthetic(spec);
  bigsl::FilterThresholds th;
  th.min_poi_users = 2;
  bigsl::Dataset ds = bigsl::filter_dataset(data.checkins, th);
  bigsl::split_train_test(ds, 0.8);
  return ds;
}

/// Desk-scale config shrunk for fast unit tests.
inline bigsl::RunConfig tiny_config(std::uint64_t seed = 5) {
  bigsl::RunConfig rc = bigsl::profile_defaults("desk");
  rc.train.d2 = 8;
  rc.train.d3 = 8;
  rc.train.k = 2;
  rc.train.epochs = 2;
  rc.train.batch_size = 64;
  rc.train.seed = seed;
  rc.train.top_k = 4;
  return rc;
}

}  // namespace testing
