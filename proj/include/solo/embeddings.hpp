#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "solo/audio_core.hpp"

namespace solo {

// T x D sequence of frame embeddings, row-major. This is what the classifier
// consumes, whether the frames came from an external encoder via .emb files
// or from the built-in log-mel stand-in.
struct EmbeddingSequence {
  std::size_t frames = 0;
  std::size_t dim = 0;
  double frame_hop_s = 0.0;  // 0 when unknown (e.g. imported files)
  std::vector<double> data;

  const double* row(std::size_t t) const { return data.data() + t * dim; }
  double* row(std::size_t t) { return data.data() + t * dim; }
};

struct FeaturizerConfig {
  double window_s = 0.025;
  double hop_s = 0.010;
  int n_mels = 64;
  int fft_size = 512;  // power of two, >= window samples
  double log_floor = 1e-10;
};

// Hann-windowed power spectrogram -> HTK-mel triangular filterbank
// (0 Hz..Nyquist) -> natural log of (power + log_floor).
// T = 1 + floor((len - window) / hop); shorter clips are rejected.
EmbeddingSequence logmel_features(const AudioClip& clip,
                                  const FeaturizerConfig& cfg);

// Binary embedding file: magic "EMB1", u32 T, u32 D, u32 reserved, then
// T*D float32 little-endian row-major.
EmbeddingSequence read_embeddings(const std::string& path);
void write_embeddings(const EmbeddingSequence& seq, const std::string& path);

// Repeats the frame sequence `count` times, truncated to cap_frames (0 = no
// cap); the frame-domain counterpart of the audio repetition augmentation.
EmbeddingSequence repeat_frames(const EmbeddingSequence& seq, int count,
                                std::size_t cap_frames);

}  // namespace solo
