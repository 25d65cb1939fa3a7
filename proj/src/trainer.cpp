#include "bigsl/trainer.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>

#include "json.hpp"

#include "bigsl/errors.hpp"

namespace bigsl {

namespace {

constexpr char kMagic[8] = {'B', 'I', 'G', 'S', 'L', 'C', 'K', 'P'};
constexpr std::uint64_t kVersion = 1;

// Little-endian regardless of host order.
class Writer {
 public:
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    out_ += s;
  }
  void matrix(const Matrix& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Index i = 0; i < m.size(); ++i) f64(m.data()[i]);
  }
  std::string take() { return std::move(out_); }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Matrix matrix() {
    const std::uint64_t r = u64();
    const std::uint64_t c = u64();
    if (c != 0 && r > (in_.size() - pos_) / 8 / c) throw FormatError("checkpoint: matrix larger than file");
    Matrix m(static_cast<Index>(r), static_cast<Index>(c));
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = f64();
    return m;
  }
  void expect_raw(const char* p, std::size_t n) {
    need(n);
    if (std::memcmp(in_.data() + pos_, p, n) != 0) throw FormatError("not a checkpoint file (bad magic)");
    pos_ += n;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > in_.size() - pos_) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.u64(kVersion);
  w.str(c.config.to_text());
  w.i64(c.epoch);
  w.u64(c.num_users);
  w.u64(c.views.size());
  for (const FeatureView& v : c.views) {
    w.str(to_string(v.view));
    w.matrix(v.features);
  }
  w.u64(c.params.size());
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    w.str(c.params.name(i));
    w.matrix(c.params.value(i));
  }
  w.u64(c.prototypes.size());
  for (const PrototypeSet& p : c.prototypes) {
    w.i64(p.k);
    w.u64(p.seeded ? 1 : 0);
    w.matrix(p.centroids);
    w.u64(p.assignments.size());
    for (int a : p.assignments) w.i64(a);
  }
  w.i64(c.adam_steps);
  w.u64(c.adam_m.size());
  for (std::size_t i = 0; i < c.adam_m.size(); ++i) {
    w.matrix(c.adam_m[i]);
    w.matrix(c.adam_v[i]);
  }
  return w.take();
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  r.expect_raw(kMagic, sizeof(kMagic));
  const std::uint64_t version = r.u64();
  if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.config = run_config_from_text(r.str());
  c.epoch = static_cast<int>(r.i64());
  c.num_users = r.u64();
  const std::uint64_t nv = r.u64();
  for (std::uint64_t v = 0; v < nv; ++v) {
    FeatureView f;
    f.view = view_from_string(r.str());
    f.features = r.matrix();
    c.views.push_back(std::move(f));
  }
  const std::uint64_t np = r.u64();
  for (std::uint64_t i = 0; i < np; ++i) {
    std::string name = r.str();
    c.params.add(name, r.matrix());
  }
  const std::uint64_t nk = r.u64();
  for (std::uint64_t v = 0; v < nk; ++v) {
    PrototypeSet p;
    p.k = static_cast<int>(r.i64());
    p.seeded = r.u64() != 0;
    p.centroids = r.matrix();
    const std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) p.assignments.push_back(static_cast<int>(r.i64()));
    c.prototypes.push_back(std::move(p));
  }
  c.adam_steps = r.i64();
  const std::uint64_t nm = r.u64();
  for (std::uint64_t i = 0; i < nm; ++i) {
    c.adam_m.push_back(r.matrix());
    c.adam_v.push_back(r.matrix());
  }
  if (!r.done()) throw FormatError("checkpoint has trailing bytes");
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) { write_file_atomic(path, serialize_checkpoint(c)); }

Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

Model model_from_checkpoint(const Checkpoint& c) {
  Model m(c.config.train, c.num_users, c.views);
  if (m.params().size() != c.params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(c.params.size()) + " parameters, model expects " +
                      std::to_string(m.params().size()));
  }
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    if (m.params().name(i) != c.params.name(i)) throw FormatError("checkpoint parameter order differs at " + c.params.name(i));
    m.params().set(i, c.params.value(i));
  }
  if (c.prototypes.size() != m.prototypes().size()) throw FormatError("checkpoint prototype count mismatch");
  m.prototypes() = c.prototypes;
  return m;
}

std::string epoch_log_line(const EpochRecord& r, const std::string& extra_json) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["batches"] = r.batches;
  j["samples"] = r.samples;
  j["loss"] = r.mean.total;
  j["ce"] = r.mean.ce;
  j["hsl"] = r.mean.hsl;
  j["sh"] = r.mean.sh;
  j["sp"] = r.mean.sp;
  j["grad_norm"] = r.grad_norm;
  j["seconds"] = r.seconds;
  if (!extra_json.empty()) {
    const auto extra = nlohmann::ordered_json::parse(extra_json);
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  }
  return j.dump();
}

std::vector<FeatureView> build_views(const Dataset& dataset, const TrainingConfig& config, std::size_t slots) {
  std::vector<FeatureView> out;
  for (ViewId v : config.views)
    out.push_back(v == ViewId::kSpatial ? build_spatial_features(dataset) : build_temporal_features(dataset, slots));
  return out;
}

Trainer::Trainer(const RunConfig& config, const Dataset& dataset, std::vector<FeatureView> views)
    : config_(config),
      dataset_(&dataset),
      model_(config.train, dataset.num_users(), std::move(views)),
      adam_(AdamConfig{config.train.lr}),
      samples_(training_samples(dataset)) {
  if (!dataset.is_split()) throw ConfigError("dataset has no train/test split");
}

Trainer::Trainer(const Checkpoint& c, const Dataset& dataset)
    : config_(c.config),
      dataset_(&dataset),
      model_(model_from_checkpoint(c)),
      adam_(AdamConfig{c.config.train.lr}),
      epoch_(c.epoch),
      samples_(training_samples(dataset)) {
  if (dataset.num_users() != c.num_users || dataset.num_pois() != model_.num_pois()) {
    throw ShapeMismatch("checkpoint was trained on " + std::to_string(c.num_users) + " users × " +
                        std::to_string(model_.num_pois()) + " POIs, dataset has " + std::to_string(dataset.num_users()) +
                        " × " + std::to_string(dataset.num_pois()));
  }
  if (c.adam_steps > 0) adam_.restore(c.adam_steps, c.adam_m, c.adam_v);
}

EpochRecord Trainer::run_epoch() {
  const auto t0 = std::chrono::steady_clock::now();
  const TrainingConfig& tc = config_.train;
  const std::string tag = std::to_string(epoch_);
  if (tc.estep == EStepCadence::kEpoch) model_.estep(derive_seed(tc.seed, "kmeans.epoch." + tag));

  std::vector<Sample> order = samples_;
  Rng rng(derive_seed(tc.seed, "shuffle." + tag));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  EpochRecord rec;
  rec.epoch = epoch_ + 1;
  const std::size_t bs = static_cast<std::size_t>(tc.batch_size);
  for (std::size_t begin = 0, b = 0; begin < order.size(); begin += bs, ++b) {
    const std::string btag = tag + "." + std::to_string(b);
    if (tc.estep == EStepCadence::kBatch) model_.estep(derive_seed(tc.seed, "kmeans.batch." + btag));
    const std::span<const Sample> batch(order.data() + begin, std::min(bs, order.size() - begin));
    ad::Tape tape;
    LossBreakdown bd;
    ad::Var loss = model_.batch_loss(tape, *dataset_, batch, derive_seed(tc.seed, "negatives." + btag), &bd);
    if (!std::isfinite(bd.total)) throw NonFiniteLoss(b);
    tape.backward(loss);
    Gradients grads = tape.gradients(model_.params());
    rec.grad_norm += clip_global_norm(grads, tc.clip_norm);
    adam_.step(model_.params(), grads);
    rec.mean.total += bd.total;
    rec.mean.ce += bd.ce;
    rec.mean.hsl += bd.hsl;
    rec.mean.sh += bd.sh;
    rec.mean.sp += bd.sp;
    ++rec.batches;
    rec.samples += batch.size();
  }
  if (rec.batches > 0) {
    const double n = static_cast<double>(rec.batches);
    rec.mean.total /= n;
    rec.mean.ce /= n;
    rec.mean.hsl /= n;
    rec.mean.sh /= n;
    rec.mean.sp /= n;
    rec.grad_norm /= n;
  }
  ++epoch_;
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

void Trainer::train(const std::function<void(const EpochRecord&)>& on_epoch) {
  while (epoch_ < config_.train.epochs) {
    EpochRecord r = run_epoch();
    if (on_epoch) on_epoch(r);
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config = config_;
  c.epoch = epoch_;
  c.num_users = model_.num_users();
  c.views = model_.views();
  c.params = model_.params();
  c.prototypes = model_.prototypes();
  c.adam_steps = adam_.steps();
  c.adam_m = adam_.first_moments();
  c.adam_v = adam_.second_moments();
  return c;
}

}  // namespace bigsl
