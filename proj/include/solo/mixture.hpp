#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "solo/audio_core.hpp"
#include "solo/manifest.hpp"
#include "solo/rng.hpp"
#include "solo/segmenter.hpp"

namespace solo {

enum class MixCondition {
  SingleInterference,
  DualInterference,
  BackgroundNoise,
  InterferencePlusNoise,
};

constexpr std::array<MixCondition, 4> kAllConditions = {
    MixCondition::SingleInterference, MixCondition::DualInterference,
    MixCondition::BackgroundNoise, MixCondition::InterferencePlusNoise};

std::string to_string(MixCondition c);
std::optional<MixCondition> condition_from_string(const std::string& s);

struct MixConfig {
  double snr_min_db = -10.0;
  double snr_max_db = 15.0;
  // single, dual, noise, interference+noise; must sum to 1
  std::array<double, 4> condition_probabilities = {0.25, 0.25, 0.25, 0.25};
};

struct AugmentConfig {
  double repeat_prob = 0.5;
  int repeat_min = 1;
  int repeat_max = 4;
  double max_len_s = 10.0;
};

// Unordered pairs of class labels that must not be mixed together.
class Blocklist {
 public:
  void add(const std::string& a, const std::string& b);
  bool blocked(const std::string& a, const std::string& b) const;
  std::size_t size() const { return pairs_.size(); }

  // Text file, one `classA|classB` pair per line, `#` comments.
  static Blocklist load(const std::string& path);

 private:
  std::set<std::pair<std::string, std::string>> pairs_;
};

struct TargetRef {
  std::string file;
  Segment segment;
  std::string class_label;
};

struct ComponentRef {
  std::string file;
  Segment segment;          // selected segment within the source file
  std::string class_label;
  // Placement draw: if the component is shorter than the target this is its
  // start position in the mixture; if longer, the crop start within it.
  std::size_t offset = 0;
  double applied_gain = 1.0;
};

struct NoiseRef {
  std::string file;
  std::size_t offset = 0;  // same placement/crop rule as ComponentRef
  double applied_gain = 1.0;
};

// Full provenance of one synthesized training example.
struct MixtureRecord {
  std::string id;
  std::string label;  // "single" or "multi"
  TargetRef target_source;
  std::vector<ComponentRef> interferer_sources;
  std::optional<NoiseRef> noise_source;
  std::optional<MixCondition> condition;
  std::vector<double> snr_db;  // one per interferer, noise draw last if present
  std::optional<int> augmentation;
  std::string output_path;
  double peak_rescale = 1.0;  // gain applied when the sum exceeded full scale
};

std::string mixture_record_to_json(const MixtureRecord& rec);
MixtureRecord mixture_record_from_json(const std::string& line);

void write_dataset_manifest(const std::vector<MixtureRecord>& records,
                            const std::string& path);
std::vector<MixtureRecord> read_dataset_manifest(const std::string& path);

// gain so that 20*log10(target_rms / (gain * component_rms)) == snr_db
double snr_gain(double target_rms, double component_rms, double snr_db);

// Scales the interferer so the target-to-interferer power ratio is snr_db.
AudioClip scale_for_snr(double target_rms, const AudioClip& interferer,
                        double snr_db);

// With probability repeat_prob concatenates n ~ U{repeat_min..repeat_max}
// copies (otherwise leaves the clip alone, count 1); the result is truncated
// to max_len_s. Returns the applied count.
std::pair<AudioClip, int> apply_repetition_aug(const AudioClip& clip,
                                               const AugmentConfig& cfg,
                                               RngStream& rng);

// Shared draw for the repetition augmentation (also used by the training
// loader when it repeats embedding frames instead of audio).
int draw_repeat_count(const AugmentConfig& cfg, RngStream& rng);

// Yields the audio behind a pool entry, already preprocessed to the working
// sample rate (preprocess_source_clip / preprocess_noise_clip below).
using ClipProvider = std::function<AudioClip(const PoolEntry&)>;

// resample -> trim leading silence -> RMS-normalize. Raises DegenerateInput
// for silent material.
AudioClip preprocess_source_clip(const AudioClip& raw, int sample_rate,
                                 const NormalizeConfig& norm_cfg);

// Noise beds are only resampled; their level is set by the SNR scaling.
AudioClip preprocess_noise_clip(const AudioClip& raw, int sample_rate);

// Mixes the (already normalized) target segment with interferers/noise drawn
// for `condition`. Interferer classes are restricted by the blocklist and may
// never equal the target class. Each component is independently SNR-scaled
// against the target RMS; the summed waveform is rescaled by 1/peak if it
// clips. The record captures every draw.
std::pair<AudioClip, MixtureRecord> synthesize_mixture(
    const TargetRef& target_ref, const AudioClip& target, const MixConfig& cfg,
    MixCondition condition, const std::vector<PoolEntry>& interferer_pool,
    const std::vector<PoolEntry>& noise_pool, const Blocklist& blocklist,
    const SegmenterConfig& seg_cfg, const ClipProvider& interferer_provider,
    const ClipProvider& noise_provider, RngStream& rng);

struct DatasetOptions {
  std::size_t n_examples = 0;  // must be even
  int sample_rate = 16000;
  std::string out_dir;
  uint64_t seed = 0;
  bool write_audio = true;  // false: manifest-only dry run, draws unchanged
};

struct DatasetResult {
  std::vector<MixtureRecord> records;
  std::array<std::size_t, 4> condition_counts = {0, 0, 0, 0};
  std::string manifest_path;
};

// Emits n_examples/2 single-source and n_examples/2 multi-source records
// (alternating), writes the audio (unless dry run) and the JSONL manifest.
// Every draw derives from (seed, record index), so reruns are byte-identical
// and records are independent of each other.
DatasetResult build_dataset(const std::vector<PoolEntry>& single_pool,
                            const std::vector<PoolEntry>& noise_pool,
                            const Blocklist& blocklist, const MixConfig& mix_cfg,
                            const AugmentConfig& aug_cfg,
                            const SegmenterConfig& seg_cfg,
                            const NormalizeConfig& norm_cfg,
                            const DatasetOptions& opts,
                            const ClipProvider& raw_provider);

// Default raw provider: load_wav from PoolEntry::path.
ClipProvider wav_file_provider();

// Wraps a raw provider with preprocessing and an in-memory cache keyed by
// path; pool files are small and reused across many records.
ClipProvider caching_source_provider(const ClipProvider& raw, int sample_rate,
                                     const NormalizeConfig& norm_cfg);
ClipProvider caching_noise_provider(const ClipProvider& raw, int sample_rate);

}  // namespace solo
