#include "solo/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "solo/errors.hpp"

namespace solo {

namespace {

constexpr std::uint64_t kSplitStream = 0x53504c49;  // distinct stream tags
constexpr std::uint64_t kInitStream = 0x494e4954;
constexpr std::uint64_t kEpochStream = 0x45504f43;
constexpr std::uint64_t kExampleStream = 0x4558414d;

}  // namespace

void TrainConfig::validate() const {
  if (!(lr_base > 0.0)) raise(ErrorKind::Config, "train.lr_base must be > 0");
  if (weight_decay < 0.0)
    raise(ErrorKind::Config, "train.weight_decay must be >= 0");
  if (epochs < 0) raise(ErrorKind::Config, "train.epochs must be >= 0");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0))
    raise(ErrorKind::Config, "train.warmup_fraction must be in (0, 1)");
  if (batch_size < 1) raise(ErrorKind::Config, "train.batch_size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    raise(ErrorKind::Config, "train.beta1/beta2 must be in [0, 1)");
  if (!(eps > 0.0)) raise(ErrorKind::Config, "train.eps must be > 0");
  for (int r : split_ratio)
    if (r <= 0) raise(ErrorKind::Config, "train.split_ratio parts must be > 0");
  if (!(decision_threshold > 0.0 && decision_threshold < 1.0))
    raise(ErrorKind::Config, "train.decision_threshold must be in (0, 1)");
}

DatasetSplits split_dataset(const std::vector<MixtureRecord>& manifest,
                            const std::array<int, 3>& ratio,
                            std::uint64_t seed) {
  if (manifest.empty())
    raise(ErrorKind::Split, "cannot split an empty manifest");
  for (int r : ratio)
    if (r <= 0) raise(ErrorKind::Split, "split ratio parts must be positive");

  // Group record indices by target source file (first-appearance order).
  std::vector<std::string> group_file;
  std::vector<std::array<std::size_t, 2>> group_counts;  // [multi, single]
  std::vector<std::vector<std::size_t>> group_members;
  std::map<std::string, std::size_t> index_of;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const MixtureRecord& rec = manifest[i];
    auto [it, fresh] = index_of.emplace(rec.target_source.file, group_file.size());
    if (fresh) {
      group_file.push_back(rec.target_source.file);
      group_counts.push_back({0, 0});
      group_members.emplace_back();
    }
    const std::size_t g = it->second;
    group_counts[g][rec.label == "single" ? 1 : 0] += 1;
    group_members[g].push_back(i);
  }
  if (group_file.size() < 3)
    raise(ErrorKind::Split,
          "manifest has only " + std::to_string(group_file.size()) +
              " distinct target sources; need at least 3 for disjoint splits");

  // Per-(split,label) targets by largest remainder.
  const double ratio_sum = ratio[0] + ratio[1] + ratio[2];
  std::array<std::size_t, 2> label_total = {0, 0};
  for (const auto& c : group_counts) {
    label_total[0] += c[0];
    label_total[1] += c[1];
  }
  double target[3][2];
  for (int s = 0; s < 3; ++s)
    for (int l = 0; l < 2; ++l)
      target[s][l] = static_cast<double>(label_total[l]) * ratio[s] / ratio_sum;

  // Seeded shuffle, then largest groups first so the greedy pass can balance.
  std::vector<std::size_t> order(group_file.size());
  std::iota(order.begin(), order.end(), 0);
  RngStream rng = RngStream::derive(seed, kSplitStream);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(
                                rng.uniform_int(0, static_cast<long long>(i) - 1))]);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return group_members[a].size() > group_members[b].size();
                   });

  double assigned[3][2] = {};
  std::array<std::vector<std::size_t>, 3> split_records;
  for (std::size_t g : order) {
    int best = 0;
    double best_score = -1e300;
    for (int s = 0; s < 3; ++s) {
      double score = 0.0;
      for (int l = 0; l < 2; ++l)
        score += (target[s][l] - assigned[s][l]) *
                 static_cast<double>(group_counts[g][l]);
      if (score > best_score) {
        best_score = score;
        best = s;
      }
    }
    for (int l = 0; l < 2; ++l)
      assigned[best][l] += static_cast<double>(group_counts[g][l]);
    split_records[static_cast<std::size_t>(best)].insert(
        split_records[static_cast<std::size_t>(best)].end(),
        group_members[g].begin(), group_members[g].end());
  }

  DatasetSplits out;
  std::vector<MixtureRecord>* dests[3] = {&out.train, &out.val, &out.test};
  for (int s = 0; s < 3; ++s) {
    auto& idx = split_records[static_cast<std::size_t>(s)];
    std::sort(idx.begin(), idx.end());  // manifest order within each split
    if (idx.empty())
      raise(ErrorKind::Split, "split produced an empty partition; "
                              "not enough distinct target sources");
    dests[s]->reserve(idx.size());
    for (std::size_t i : idx) dests[s]->push_back(manifest[i]);
  }
  return out;
}

double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& cfg) {
  if (total_steps == 0 || step >= total_steps)
    raise(ErrorKind::Training, "lr_at: step outside schedule");
  const std::size_t warmup = static_cast<std::size_t>(
      std::llround(cfg.warmup_fraction * static_cast<double>(total_steps)));
  if (step < warmup)
    return cfg.lr_base * static_cast<double>(step + 1) /
           static_cast<double>(warmup);
  const std::size_t span = std::max<std::size_t>(total_steps - warmup, 1);
  const double x = static_cast<double>(step - warmup) / static_cast<double>(span);
  return cfg.lr_base * 0.5 * (1.0 + std::cos(3.14159265358979323846 * x));
}

OptimizerState OptimizerState::like(const ClassifierParams& params) {
  OptimizerState st;
  for (const ConstTensorView& t : params.tensors()) {
    st.m.emplace_back(t.data->size(), 0.0);
    st.v.emplace_back(t.data->size(), 0.0);
  }
  return st;
}

void adamw_step(ClassifierParams& params, const ClassifierParams& grads,
                OptimizerState& state, double lr, const TrainConfig& cfg) {
  auto ps = params.tensors();
  auto gs = grads.tensors();
  if (ps.size() != gs.size() || ps.size() != state.m.size())
    raise(ErrorKind::Training, "optimizer state does not match parameters");
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double mc = 1.0 - std::pow(cfg.beta1, t);
  const double vc = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    std::vector<double>& theta = *ps[i].data;
    const std::vector<double>& g = *gs[i].data;
    std::vector<double>& m = state.m[i];
    std::vector<double>& v = state.v[i];
    if (theta.size() != g.size())
      raise(ErrorKind::Training, std::string("gradient shape mismatch in ") +
                                     ps[i].name);
    const bool decay = ps[i].decay && cfg.weight_decay > 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      if (!std::isfinite(g[j]))
        raise(ErrorKind::Training,
              "non-finite gradient in " + std::string(ps[i].name) +
                  " at optimizer step " + std::to_string(state.step));
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      // Decoupled decay reads the pre-update value, as in the original
      // formulation: theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta).
      if (decay) theta[j] -= lr * cfg.weight_decay * theta[j];
      theta[j] -= lr * (m[j] / mc) / (std::sqrt(v[j] / vc) + cfg.eps);
    }
  }
}

SequenceProvider embedding_file_provider(std::string emb_dir, AugmentConfig aug,
                                         double frame_hop_s_hint) {
  std::size_t cap_frames = 0;
  if (frame_hop_s_hint > 0.0)
    cap_frames = std::max<std::size_t>(
        1, static_cast<std::size_t>(aug.max_len_s / frame_hop_s_hint + 1e-9));
  return [emb_dir = std::move(emb_dir), aug, cap_frames](
             const MixtureRecord& rec, RngStream* augment_rng) {
    EmbeddingSequence seq = read_embeddings(emb_dir + "/" + rec.id + ".emb");
    if (augment_rng) {
      const int count = draw_repeat_count(aug, *augment_rng);
      if (count > 1) seq = repeat_frames(seq, count, cap_frames);
    }
    return seq;
  };
}

namespace {

struct EvalResult {
  double mean_loss = 0.0;
  double accuracy = 0.0;
};

EvalResult evaluate(const ClassifierParams& params,
                    const std::vector<MixtureRecord>& records,
                    const SequenceProvider& provider, double threshold) {
  double loss = 0.0;
  std::size_t correct = 0;
  ForwardTrace trace;
  for (const MixtureRecord& rec : records) {
    const EmbeddingSequence seq = provider(rec, nullptr);
    const double p = forward(params, seq, trace, false, nullptr);
    const int y = rec.label == "single" ? 1 : 0;
    loss += bce_loss(p, y);
    if ((p >= threshold ? 1 : 0) == y) ++correct;
  }
  EvalResult r;
  r.mean_loss = loss / static_cast<double>(records.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(records.size());
  return r;
}

}  // namespace

TrainResult train(const DatasetSplits& splits, const SequenceProvider& provider,
                  const ClassifierArch& arch, const TrainConfig& cfg) {
  cfg.validate();
  arch.validate();
  if (splits.val.empty())
    raise(ErrorKind::Training, "validation split is empty");
  if (splits.train.empty() && cfg.epochs > 0)
    raise(ErrorKind::Training, "train split is empty");

  RngStream init_rng = RngStream::derive(cfg.seed, kInitStream);
  ClassifierParams params = ClassifierParams::init(arch, init_rng);
  OptimizerState opt = OptimizerState::like(params);

  TrainResult result;
  result.best.meta.epoch = -1;

  if (cfg.epochs == 0) {
    const EvalResult ev =
        evaluate(params, splits.val, provider, cfg.decision_threshold);
    result.best.params = params;
    result.best.meta = {0, cfg.seed, 0.0, ev.mean_loss, ev.accuracy};
    return result;
  }

  const std::size_t n_train = splits.train.size();
  const std::size_t steps_per_epoch =
      (n_train + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps =
      static_cast<std::size_t>(cfg.epochs) * steps_per_epoch;

  ClassifierParams grads = ClassifierParams::zeros(arch);
  ForwardTrace trace;
  std::vector<std::size_t> order(n_train);
  std::size_t step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    RngStream shuffle_rng = RngStream::derive(
        RngStream::derive_seed(cfg.seed, kEpochStream),
        static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<std::size_t>(shuffle_rng.uniform_int(
                    0, static_cast<long long>(i) - 1))]);

    double epoch_loss = 0.0;
    double lr_last = 0.0;
    for (std::size_t base = 0; base < n_train; base += cfg.batch_size) {
      const std::size_t batch_n = std::min(cfg.batch_size, n_train - base);
      for (TensorView t : grads.tensors())
        std::fill(t.data->begin(), t.data->end(), 0.0);

      for (std::size_t k = 0; k < batch_n; ++k) {
        const std::size_t idx = order[base + k];
        const MixtureRecord& rec = splits.train[idx];
        RngStream ex_rng = RngStream::derive(
            RngStream::derive_seed(cfg.seed, kExampleStream),
            (static_cast<std::uint64_t>(epoch) << 32) ^
                static_cast<std::uint64_t>(idx));
        EmbeddingSequence seq;
        try {
          seq = provider(rec, &ex_rng);
        } catch (const SoloError& e) {
          raise(e.kind(), "epoch " + std::to_string(epoch) + ", record " +
                              rec.id + ": " + e.what());
        }
        const double p = forward(params, seq, trace, true, &ex_rng);
        const int y = rec.label == "single" ? 1 : 0;
        epoch_loss += bce_loss(p, y);
        backward(params, seq, trace, y, grads);
      }
      const double inv = 1.0 / static_cast<double>(batch_n);
      for (TensorView t : grads.tensors())
        for (double& g : *t.data) g *= inv;

      lr_last = lr_at(step, total_steps, cfg);
      adamw_step(params, grads, opt, lr_last, cfg);
      ++step;
    }

    const EvalResult ev =
        evaluate(params, splits.val, provider, cfg.decision_threshold);
    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = epoch_loss / static_cast<double>(n_train);
    em.val_loss = ev.mean_loss;
    em.val_accuracy = ev.accuracy;
    em.lr_last = lr_last;
    result.log.push_back(em);

    if (result.best.meta.epoch < 0 ||
        ev.accuracy > result.best.meta.val_accuracy) {
      result.best.params = params;
      result.best.meta = {epoch, cfg.seed, em.train_loss, em.val_loss,
                          em.val_accuracy};
    }
  }
  return result;
}

std::string metrics_csv(const std::vector<EpochMetrics>& log) {
  std::string out = "epoch,train_loss,val_loss,val_accuracy,lr_last\n";
  char buf[160];
  for (const EpochMetrics& em : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.8e\n", em.epoch,
                  em.train_loss, em.val_loss, em.val_accuracy, em.lr_last);
    out += buf;
  }
  return out;
}

}  // namespace solo
