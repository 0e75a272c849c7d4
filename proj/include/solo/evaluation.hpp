#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "solo/audio_core.hpp"
#include "solo/classifier.hpp"
#include "solo/manifest.hpp"

namespace solo {

struct ClassifyMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  bool degenerate = false;  // set when a zero denominator forced a 0 metric
};

// Positive class = single-source. Decision rule: probability >= threshold.
ClassifyMetrics classify_metrics(
    const std::vector<std::pair<double, int>>& preds, double threshold);
ClassifyMetrics classify_metrics_from_counts(std::size_t tp, std::size_t fp,
                                             std::size_t fn, std::size_t tn);

// (mean, 2 * sample standard deviation); requires n >= 2.
std::pair<double, double> aggregate_scores(const std::vector<double>& values);

enum class Rating { PP, PNP, NP, U };

struct VoteRecord {
  std::string clip_id;
  std::string class_label;
  std::vector<Rating> ratings;
};

// True iff at least two annotators rated the class PP.
bool pp_accept(const VoteRecord& vote);

// JSON Lines: {"clip_id": ..., "class_label": ..., "ratings": ["PP", ...]}.
// Unknown rating strings are rejected with the offending line number.
std::vector<VoteRecord> read_votes(const std::string& path);

struct ScoreRecord {
  std::string clip_id;
  double pc = 0.0;  // production complexity, 1-10
  double pq = 0.0;  // production quality, 1-10
};

// CSV with header `clip_id,pc,pq`.
std::vector<ScoreRecord> read_scores(const std::string& path);

enum class DurationFlag { Kept, TooShort, TooLong };

const char* to_string(DurationFlag flag);

struct FilterConfig {
  double min_dur_s = 0.5;
  double max_dur_s = 30.0;
  double threshold = 0.5;
  double chunk_len_s = 1.0;
  double chunk_hop_s = 0.5;

  void validate() const;
};

// Strict inequalities exclude; boundary durations are kept.
DurationFlag duration_filter(double duration_s, const FilterConfig& cfg);

struct ChunkPrediction {
  double start_s = 0.0;
  double end_s = 0.0;
  double probability = 0.0;
};

struct PredictionRecord {
  std::string clip_id;
  double duration_s = 0.0;
  double probability = 0.0;
  std::string decision;  // "single" or "multi"; empty when errored
  DurationFlag duration_flag = DurationFlag::Kept;
  std::optional<std::vector<ChunkPrediction>> chunk_predictions;
  bool errored = false;
  std::string error;
};

std::string prediction_record_to_json(const PredictionRecord& rec);
PredictionRecord prediction_record_from_json(const std::string& line);
void write_predictions(const std::vector<PredictionRecord>& records,
                       const std::string& path);
std::vector<PredictionRecord> read_predictions(const std::string& path);

struct PredictOptions {
  bool chunk_level = false;
  int sample_rate = 16000;
};

// Maps a corpus row to its waveform (already at the pipeline sample rate).
using CorpusClipProvider = std::function<AudioClip(const CorpusEntry&)>;

// Clip-level: trim leading/trailing silence, RMS-normalize, featurize, score.
// Chunk-level (optional): fixed windows over the untrimmed timeline, each
// normalized and scored independently. Unreadable clips yield errored records
// and the run continues.
std::vector<PredictionRecord> predict_corpus(
    const std::vector<CorpusEntry>& corpus, const CorpusClipProvider& provider,
    const ClassifierParams& params, const FeaturizerConfig& feat_cfg,
    const NormalizeConfig& norm_cfg, const FilterConfig& cfg,
    const PredictOptions& opts);

struct FlowCounts {
  std::size_t ss_pp = 0;      // model single  & human PP
  std::size_t ss_not_pp = 0;  // model single  & not PP
  std::size_t ms_pp = 0;      // model multi   & human PP
  std::size_t ms_not_pp = 0;
  std::size_t joined = 0;
  double model_preserved = 0.0;  // fraction the model keeps as single
  double pp_preserved = 0.0;     // fraction the PP rule keeps
};

// Joins duration-kept, non-errored predictions with votes on clip_id.
FlowCounts compare_filters(const std::vector<PredictionRecord>& preds,
                           const std::vector<VoteRecord>& votes);

}  // namespace solo
