#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace solo {

// Mono sample buffer. Amplitudes are dimensionless linear values in [-1, 1]
// (0 dBFS == 1.0); every operation in this module keep samples finite.
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = 0;

  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
  bool empty() const { return samples.empty(); }
};

struct NormalizeConfig {
  double target_level_dbfs = -26.0;
  double silence_threshold_dbfs = -50.0;
  double silence_window_s = 0.010;
};

// Reads a RIFF/WAVE file (PCM16 or float32, any channel count) and returns a
// mono clip: channels are averaged with equal weights, PCM16 is scaled by
// 1/32768. Throws Format/UnsupportedFormat errors.
AudioClip load_wav(const std::string& path);

// Writes a mono 32-bit float WAV at clip.sample_rate.
void save_wav(const AudioClip& clip, const std::string& path);

// Linear-interpolation resampler. Output length = round(len * target/source);
// same-rate input is returned unchanged.
AudioClip resample(const AudioClip& clip, int target_rate);

// sqrt(mean of squares); 0 for an empty slice.
double rms(std::span<const float> samples);

inline double dbfs(double linear_rms) {
  return 20.0 * std::log10(linear_rms);
}

inline double dbfs_to_linear(double level_dbfs) {
  return std::pow(10.0, level_dbfs / 20.0);
}

// Pure gain so that rms(output) == 10^(target_level_dbfs/20).
// Throws DegenerateInput for an all-zero clip.
AudioClip normalize_rms(const AudioClip& clip, const NormalizeConfig& cfg);

// Drops samples before the first window (length silence_window_s, hop ==
// window, final partial window included) whose RMS reaches
// silence_threshold_dbfs. An all-silent clip becomes empty.
AudioClip trim_leading_silence(const AudioClip& clip, const NormalizeConfig& cfg);

}  // namespace solo
