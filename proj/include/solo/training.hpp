#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "solo/classifier.hpp"
#include "solo/mixture.hpp"

namespace solo {

struct TrainConfig {
  double lr_base = 1e-4;
  double weight_decay = 0.01;
  int epochs = 20;
  double warmup_fraction = 0.10;
  std::size_t batch_size = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  std::array<int, 3> split_ratio = {8, 1, 1};
  double decision_threshold = 0.5;

  void validate() const;
};

struct DatasetSplits {
  std::vector<MixtureRecord> train, val, test;
};

// Groups records by target source file so no source appears in two splits;
// within that constraint keeps per-split label proportions close to global.
// Deterministic in (manifest order, ratio, seed).
DatasetSplits split_dataset(const std::vector<MixtureRecord>& manifest,
                            const std::array<int, 3>& ratio,
                            std::uint64_t seed);

// Linear warmup over round(warmup_fraction * total_steps) steps, then cosine
// decay to ~0 over the remainder.
double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& cfg);

struct OptimizerState {
  std::vector<std::vector<double>> m, v;  // parallel to params.tensors()
  std::size_t step = 0;

  static OptimizerState like(const ClassifierParams& params);
};

// AdamW with bias correction; decoupled weight decay applies to weight
// matrices only, never biases.
void adamw_step(ClassifierParams& params, const ClassifierParams& grads,
                OptimizerState& state, double lr, const TrainConfig& cfg);

// Yields the embedding sequence for one manifest record. `augment_rng` is
// non-null only for train-split loads, where repetition augmentation applies.
using SequenceProvider =
    std::function<EmbeddingSequence(const MixtureRecord&, RngStream*)>;

// Reads `<emb_dir>/<record id>.emb`. Training loads repeat the frame sequence
// per the augmentation draw, capped at aug.max_len_s worth of frames
// (frame_hop_s_hint converts seconds to frames; <= 0 disables the cap).
SequenceProvider embedding_file_provider(std::string emb_dir, AugmentConfig aug,
                                         double frame_hop_s_hint);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double lr_last = 0.0;
};

struct TrainResult {
  Checkpoint best;  // highest val accuracy; ties resolve to the earlier epoch
  std::vector<EpochMetrics> log;
};

TrainResult train(const DatasetSplits& splits, const SequenceProvider& provider,
                  const ClassifierArch& arch, const TrainConfig& cfg);

// CSV with header `epoch,train_loss,val_loss,val_accuracy,lr_last`.
std::string metrics_csv(const std::vector<EpochMetrics>& log);

}  // namespace solo
