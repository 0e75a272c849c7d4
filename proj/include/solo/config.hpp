#pragma once

#include <cstdint>
#include <string>

#include "solo/audio_core.hpp"
#include "solo/classifier.hpp"
#include "solo/embeddings.hpp"
#include "solo/evaluation.hpp"
#include "solo/mixture.hpp"
#include "solo/segmenter.hpp"
#include "solo/training.hpp"

namespace solo {

// One document wiring every stage; defaults reproduce the pipeline constants.
struct PipelineConfig {
  std::uint64_t seed = 0;
  int sample_rate = 16000;
  NormalizeConfig normalize;
  SegmenterConfig segmenter;
  MixConfig mix;
  AugmentConfig augment;
  FeaturizerConfig featurizer;
  ClassifierArch classifier;
  TrainConfig train;
  FilterConfig filter;

  // Strict JSON: unknown keys are rejected with their full field path, and
  // every section's invariants are checked before the config is returned.
  static PipelineConfig load(const std::string& path);

  void validate() const;
};

}  // namespace solo
