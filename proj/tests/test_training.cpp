#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "solo/errors.hpp"
#include "solo/training.hpp"
#include "test_util.hpp"

using namespace solo;
using namespace testutil;

namespace {

const std::string kDir = scratch_dir("test_training");

MixtureRecord make_record(std::size_t i, const std::string& file,
                          const std::string& label) {
  MixtureRecord rec;
  char id[16];
  std::snprintf(id, sizeof(id), "%06zu", i);
  rec.id = id;
  rec.label = label;
  rec.target_source = {file, {0, 16000, 1.0}, "cls"};
  rec.output_path = "unused.wav";
  return rec;
}

// One unique source per record, alternating labels.
std::vector<MixtureRecord> unique_source_manifest(std::size_t n) {
  std::vector<MixtureRecord> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(make_record(i, "src" + std::to_string(i) + ".wav",
                              i % 2 ? "multi" : "single"));
  return out;
}

// Gaussian blobs: "single" records embed near +1, "multi" near -1.
// Deterministic per record id, so reloading a record yields the same frames.
SequenceProvider blob_provider() {
  return [](const MixtureRecord& rec, RngStream*) {
    EmbeddingSequence seq;
    seq.frames = 5;
    seq.dim = 4;
    seq.data.resize(seq.frames * seq.dim);
    RngStream rng(fnv1a(rec.id));
    const double mu = rec.label == "single" ? 1.0 : -1.0;
    for (auto& v : seq.data) v = mu + 0.1 * rng.normal();
    return seq;
  };
}

DatasetSplits blob_splits(std::size_t n_train, std::size_t n_val) {
  DatasetSplits splits;
  std::size_t i = 0;
  for (; i < n_train; ++i)
    splits.train.push_back(make_record(i, "f" + std::to_string(i),
                                       i % 2 ? "multi" : "single"));
  for (; i < n_train + n_val; ++i)
    splits.val.push_back(make_record(i, "f" + std::to_string(i),
                                     i % 2 ? "multi" : "single"));
  return splits;
}

ClassifierArch tiny_arch() {
  ClassifierArch arch;
  arch.input_dim = 4;
  arch.hidden = 8;
  arch.mlp_hidden = 8;
  arch.dropout_rate = 0.5;
  return arch;
}

}  // namespace

TEST_CASE("split_dataset: 1000 unique sources at 8:1:1 give 800/100/100") {
  auto manifest = unique_source_manifest(1000);
  DatasetSplits splits = split_dataset(manifest, {8, 1, 1}, 7);
  CHECK(splits.train.size() == 800);
  CHECK(splits.val.size() == 100);
  CHECK(splits.test.size() == 100);

  // Label balance carries into each split (+-2 pts of the global 50%).
  for (const auto* part : {&splits.train, &splits.val, &splits.test}) {
    std::size_t singles = 0;
    for (const auto& r : *part) singles += r.label == "single";
    double frac = double(singles) / double(part->size());
    CHECK(std::fabs(frac - 0.5) <= 0.02);
  }
}

TEST_CASE("split_dataset keeps source files disjoint across splits") {
  // 90 source files, 3 or 4 records each, labels fixed per file.
  std::vector<MixtureRecord> manifest;
  std::size_t idx = 0;
  for (int f = 0; f < 90; ++f) {
    const std::string file = "grp" + std::to_string(f) + ".wav";
    const std::string label = f % 2 ? "multi" : "single";
    const int copies = 3 + (f % 2);
    for (int c = 0; c < copies; ++c)
      manifest.push_back(make_record(idx++, file, label));
  }

  DatasetSplits splits = split_dataset(manifest, {8, 1, 1}, 99);
  CHECK(splits.train.size() + splits.val.size() + splits.test.size() ==
        manifest.size());

  std::map<std::string, int> owner;
  int part = 0;
  for (const auto* p : {&splits.train, &splits.val, &splits.test}) {
    for (const auto& r : *p) {
      auto it = owner.find(r.target_source.file);
      if (it == owner.end())
        owner[r.target_source.file] = part;
      else
        CHECK(it->second == part);  // a file may live in one split only
    }
    ++part;
  }
  CHECK(owner.size() == 90);
}

TEST_CASE("split_dataset is deterministic in the seed") {
  auto manifest = unique_source_manifest(200);
  DatasetSplits a = split_dataset(manifest, {8, 1, 1}, 5);
  DatasetSplits b = split_dataset(manifest, {8, 1, 1}, 5);
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i)
    CHECK(a.train[i].id == b.train[i].id);
  for (std::size_t i = 0; i < a.val.size(); ++i)
    CHECK(a.val[i].id == b.val[i].id);

  DatasetSplits c = split_dataset(manifest, {8, 1, 1}, 6);
  bool same = a.val.size() == c.val.size();
  if (same)
    for (std::size_t i = 0; i < a.val.size(); ++i)
      same = same && a.val[i].id == c.val[i].id;
  CHECK(!same);  // a different seed reshuffles group placement
}

TEST_CASE("split_dataset preserves manifest order within each split") {
  auto manifest = unique_source_manifest(100);
  DatasetSplits splits = split_dataset(manifest, {8, 1, 1}, 3);
  for (const auto* part : {&splits.train, &splits.val, &splits.test})
    for (std::size_t i = 1; i < part->size(); ++i)
      CHECK((*part)[i - 1].id < (*part)[i].id);
}

TEST_CASE("split_dataset rejects degenerate inputs") {
  CHECK_THROWS_AS(split_dataset({}, {8, 1, 1}, 0), SoloError);

  std::vector<MixtureRecord> two_files;
  for (std::size_t i = 0; i < 10; ++i)
    two_files.push_back(make_record(i, i % 2 ? "a.wav" : "b.wav",
                                    i % 2 ? "multi" : "single"));
  try {
    split_dataset(two_files, {8, 1, 1}, 0);
    FAIL("expected Split");
  } catch (const SoloError& e) {
    CHECK(e.kind() == ErrorKind::Split);
  }
}

TEST_CASE("learning rate schedule: warmup boundary, midpoint, tail") {
  TrainConfig cfg;
  cfg.lr_base = 1e-3;
  cfg.warmup_fraction = 0.10;
  const std::size_t total = 100, warmup = 10;

  // Linear ramp: step 0 is lr/warmup, step warmup-1 reaches lr exactly.
  CHECK(lr_at(0, total, cfg) == doctest::Approx(cfg.lr_base / warmup).epsilon(1e-12));
  CHECK(lr_at(warmup - 1, total, cfg) == doctest::Approx(cfg.lr_base).epsilon(1e-12));
  // Cosine starts at the same value: the schedule is continuous.
  CHECK(lr_at(warmup, total, cfg) == doctest::Approx(cfg.lr_base).epsilon(1e-12));

  // Midpoint of the cosine span: exactly half the base rate.
  const std::size_t mid = warmup + (total - warmup) / 2;  // x = 0.5
  CHECK(lr_at(mid, total, cfg) == doctest::Approx(0.5 * cfg.lr_base).epsilon(1e-12));

  // Monotone non-increasing after warmup, ending near zero.
  double prev = lr_at(warmup, total, cfg);
  for (std::size_t s = warmup + 1; s < total; ++s) {
    double cur = lr_at(s, total, cfg);
    CHECK(cur <= prev + 1e-15);
    prev = cur;
  }
  CHECK(lr_at(total - 1, total, cfg) < 0.01 * cfg.lr_base);

  CHECK_THROWS_AS(lr_at(total, total, cfg), SoloError);
  CHECK_THROWS_AS(lr_at(0, 0, cfg), SoloError);
}

TEST_CASE("adamw first step matches the closed form") {
  ClassifierArch arch;
  arch.input_dim = 1;
  arch.hidden = 1;
  arch.mlp_hidden = 1;
  ClassifierParams params = ClassifierParams::zeros(arch);
  ClassifierParams grads = ClassifierParams::zeros(arch);
  OptimizerState state = OptimizerState::like(params);

  TrainConfig cfg;
  cfg.weight_decay = 0.01;
  const double lr = 0.1;
  grads.mlp_w2[0] = 1.0;

  adamw_step(params, grads, state, lr, cfg);
  // Bias correction makes m_hat = v_hat = 1 on the first step, and decay
  // contributes nothing at theta_0 = 0.
  const double want = -lr / (1.0 + cfg.eps);
  CHECK(params.mlp_w2[0] == doctest::Approx(want).epsilon(1e-10));
  CHECK(state.step == 1);

  // Untouched coordinates stay exactly zero.
  CHECK(params.mlp_b2[0] == 0.0);
  CHECK(params.fwd.w[0][0] == 0.0);
}

TEST_CASE("adamw decay isolation: zero gradients shrink weights geometrically") {
  ClassifierArch arch;
  arch.input_dim = 1;
  arch.hidden = 1;
  arch.mlp_hidden = 1;
  ClassifierParams params = ClassifierParams::zeros(arch);
  ClassifierParams grads = ClassifierParams::zeros(arch);
  OptimizerState state = OptimizerState::like(params);

  TrainConfig cfg;
  cfg.weight_decay = 0.01;
  const double lr = 0.1;
  params.mlp_w2[0] = 1.0;  // decayed: weight matrix
  params.mlp_b2[0] = 1.0;  // never decayed: bias

  for (int k = 0; k < 10; ++k) adamw_step(params, grads, state, lr, cfg);

  const double want = std::pow(1.0 - lr * cfg.weight_decay, 10);
  CHECK(params.mlp_w2[0] == doctest::Approx(want).epsilon(1e-10));
  CHECK(params.mlp_b2[0] == 1.0);
}

TEST_CASE("adamw with beta1 = beta2 = 0 degenerates to sign-SGD") {
  ClassifierArch arch;
  arch.input_dim = 2;
  arch.hidden = 2;
  arch.mlp_hidden = 2;
  RngStream rng(77);
  ClassifierParams params = ClassifierParams::init(arch, rng);
  ClassifierParams before = params;
  ClassifierParams grads = ClassifierParams::zeros(arch);
  for (auto& t : grads.tensors())
    for (auto& v : *t.data) v = rng.uniform(-2.0, 2.0);

  TrainConfig cfg;
  cfg.beta1 = 0.0;
  cfg.beta2 = 0.0;
  cfg.weight_decay = 0.0;
  const double lr = 0.01;
  OptimizerState state = OptimizerState::like(params);
  adamw_step(params, grads, state, lr, cfg);

  auto pv = static_cast<const ClassifierParams&>(params).tensors();
  auto bv = static_cast<const ClassifierParams&>(before).tensors();
  auto gv = static_cast<const ClassifierParams&>(grads).tensors();
  for (std::size_t t = 0; t < pv.size(); ++t)
    for (std::size_t j = 0; j < pv[t].data->size(); ++j) {
      const double g = (*gv[t].data)[j];
      const double want = (*bv[t].data)[j] - lr * g / (std::sqrt(g * g) + cfg.eps);
      CHECK((*pv[t].data)[j] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("adamw drives a quadratic toward zero") {
  ClassifierArch arch;
  arch.input_dim = 1;
  arch.hidden = 1;
  arch.mlp_hidden = 1;
  ClassifierParams params = ClassifierParams::zeros(arch);
  params.mlp_w2[0] = 1.0;
  ClassifierParams grads = ClassifierParams::zeros(arch);
  OptimizerState state = OptimizerState::like(params);

  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  for (int k = 0; k < 100; ++k) {
    grads.mlp_w2[0] = 2.0 * params.mlp_w2[0];  // d/dx of x^2
    adamw_step(params, grads, state, 0.01, cfg);
  }
  CHECK(std::fabs(params.mlp_w2[0]) < 0.5);
}

TEST_CASE("adamw rejects non-finite gradients with context") {
  ClassifierArch arch;
  arch.input_dim = 1;
  arch.hidden = 1;
  arch.mlp_hidden = 1;
  ClassifierParams params = ClassifierParams::zeros(arch);
  ClassifierParams grads = ClassifierParams::zeros(arch);
  OptimizerState state = OptimizerState::like(params);
  grads.mlp_w2[0] = std::numeric_limits<double>::quiet_NaN();

  TrainConfig cfg;
  try {
    adamw_step(params, grads, state, 0.1, cfg);
    FAIL("expected Training");
  } catch (const SoloError& e) {
    CHECK(e.kind() == ErrorKind::Training);
    CHECK(std::string(e.what()).find("mlp_w2") != std::string::npos);
    CHECK(std::string(e.what()).find("step 1") != std::string::npos);
  }
}

TEST_CASE("training separates gaussian blobs within five epochs") {
  DatasetSplits splits = blob_splits(200, 60);
  TrainConfig cfg;
  cfg.lr_base = 1e-2;
  cfg.epochs = 5;
  cfg.batch_size = 16;
  cfg.seed = 13;

  TrainResult result = train(splits, blob_provider(), tiny_arch(), cfg);
  REQUIRE(result.log.size() == 5);

  double best_acc = 0.0;
  for (const auto& m : result.log) best_acc = std::max(best_acc, m.val_accuracy);
  CHECK(best_acc >= 0.99);
  CHECK(result.best.meta.val_accuracy == best_acc);

  // Loss trends down; tolerate one non-monotone epoch after the warmup.
  int violations = 0;
  for (std::size_t e = 2; e < result.log.size(); ++e)
    if (result.log[e].train_loss > result.log[e - 1].train_loss) ++violations;
  CHECK(violations <= 1);

  // The returned log carries the schedule's last rate per epoch.
  for (const auto& m : result.log) {
    CHECK(m.lr_last > 0.0);
    CHECK(m.lr_last <= cfg.lr_base * (1.0 + 1e-12));
  }

  // Best-checkpoint metadata is self-consistent.
  CHECK(result.best.meta.epoch >= 1);
  CHECK(result.best.meta.epoch <= 5);
  CHECK(result.best.meta.seed == cfg.seed);
}

TEST_CASE("training is deterministic given the seed") {
  DatasetSplits splits = blob_splits(64, 20);
  TrainConfig cfg;
  cfg.lr_base = 5e-3;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.seed = 21;

  TrainResult a = train(splits, blob_provider(), tiny_arch(), cfg);
  TrainResult b = train(splits, blob_provider(), tiny_arch(), cfg);

  CHECK(metrics_csv(a.log) == metrics_csv(b.log));

  auto pa = kDir + "/det_a.ckpt";
  auto pb = kDir + "/det_b.ckpt";
  save_checkpoint(a.best.params, a.best.meta, pa);
  save_checkpoint(b.best.params, b.best.meta, pb);
  CHECK(read_file_bytes(pa) == read_file_bytes(pb));

  TrainConfig other = cfg;
  other.seed = 22;
  TrainResult c = train(splits, blob_provider(), tiny_arch(), other);
  CHECK(metrics_csv(a.log) != metrics_csv(c.log));
}

TEST_CASE("epochs = 0 evaluates the initialized model") {
  DatasetSplits splits = blob_splits(16, 12);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 4;

  TrainResult result = train(splits, blob_provider(), tiny_arch(), cfg);
  CHECK(result.log.empty());
  CHECK(result.best.meta.epoch == 0);
  CHECK(result.best.meta.val_accuracy >= 0.0);
  CHECK(result.best.meta.val_accuracy <= 1.0);
  CHECK(result.best.meta.val_loss > 0.0);
}

TEST_CASE("train validates its inputs") {
  TrainConfig cfg;
  DatasetSplits no_val = blob_splits(16, 0);
  CHECK_THROWS_AS(train(no_val, blob_provider(), tiny_arch(), cfg), SoloError);

  DatasetSplits no_train;
  no_train.val = blob_splits(0, 8).val;
  try {
    train(no_train, blob_provider(), tiny_arch(), cfg);
    FAIL("expected Training");
  } catch (const SoloError& e) {
    CHECK(e.kind() == ErrorKind::Training);
  }

  // Provider failures surface with epoch and record context.
  DatasetSplits splits = blob_splits(8, 4);
  SequenceProvider broken = [](const MixtureRecord& rec, RngStream*) {
    if (rec.id == "000003") raise(ErrorKind::Io, "disk on fire");
    return blob_provider()(rec, nullptr);
  };
  TrainConfig one;
  one.epochs = 1;
  one.batch_size = 4;
  try {
    train(splits, broken, tiny_arch(), one);
    FAIL("expected Io with context");
  } catch (const SoloError& e) {
    CHECK(e.kind() == ErrorKind::Io);
    CHECK(std::string(e.what()).find("000003") != std::string::npos);
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
}

TEST_CASE("metrics_csv emits the pinned header and formats") {
  std::vector<EpochMetrics> log;
  log.push_back({1, 0.5, 0.25, 0.875, 1e-4});
  std::string csv = metrics_csv(log);
  CHECK(csv.find("epoch,train_loss,val_loss,val_accuracy,lr_last\n") == 0);
  CHECK(csv.find("1,0.500000,0.250000,0.875000,1.00000000e-04") != std::string::npos);
}

TEST_CASE("embedding_file_provider loads, augments, and caps") {
  EmbeddingSequence seq;
  seq.frames = 4;
  seq.dim = 2;
  seq.data = {1, 2, 3, 4, 5, 6, 7, 8};
  write_embeddings(seq, kDir + "/000042.emb");

  MixtureRecord rec;
  rec.id = "000042";
  rec.label = "single";

  AugmentConfig aug;
  aug.repeat_prob = 1.0;  // always augment
  aug.repeat_min = aug.repeat_max = 3;

  // Eval loads (null rng) never augment.
  auto provider = embedding_file_provider(kDir, aug, 0.010);
  EmbeddingSequence eval_seq = provider(rec, nullptr);
  CHECK(eval_seq.frames == 4);
  CHECK(eval_seq.data == seq.data);

  // Train loads repeat the frames; cap = max_len_s / hop hint = 1000 frames.
  RngStream rng(5);
  EmbeddingSequence train_seq = provider(rec, &rng);
  CHECK(train_seq.frames == 12);
  for (std::size_t t = 0; t < train_seq.frames; ++t)
    for (std::size_t d = 0; d < 2; ++d)
      CHECK(train_seq.row(t)[d] == seq.row(t % 4)[d]);

  // A tight cap truncates the repeated sequence.
  AugmentConfig tight = aug;
  tight.max_len_s = 0.05;  // 5 frames at 10 ms
  auto capped = embedding_file_provider(kDir, tight, 0.010);
  RngStream rng2(5);
  CHECK(capped(rec, &rng2).frames == 5);

  MixtureRecord missing;
  missing.id = "does_not_exist";
  CHECK_THROWS_AS(provider(missing, nullptr), SoloError);
}
