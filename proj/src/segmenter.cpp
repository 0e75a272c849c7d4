#include "solo/segmenter.hpp"

#include <algorithm>
#include <cmath>

#include "solo/errors.hpp"
#include "solo/kernels.hpp"

namespace solo {

std::vector<Segment> chunk_energies(const AudioClip& clip, double window_len_s,
                                    double hop_s) {
  if (clip.samples.empty())
    raise(ErrorKind::DegenerateInput, "cannot segment an empty clip");
  if (window_len_s <= 0.0 || hop_s <= 0.0)
    raise(ErrorKind::DegenerateInput, "window and hop must be positive");

  const std::size_t n = clip.samples.size();
  std::size_t window = static_cast<std::size_t>(
      std::llround(window_len_s * clip.sample_rate));
  window = std::max<std::size_t>(window, 1);
  std::size_t hop =
      static_cast<std::size_t>(std::llround(hop_s * clip.sample_rate));
  hop = std::max<std::size_t>(hop, 1);

  std::vector<Segment> segments;
  if (n <= window) {
    segments.push_back({0, n, kernels::sum_squares(clip.samples.data(), n)});
    return segments;
  }

  std::size_t start = 0;
  for (; start + window <= n; start += hop) {
    segments.push_back(
        {start, window,
         kernels::sum_squares(clip.samples.data() + start, window)});
  }
  // Clamp one final window to the clip boundary if a tail is left uncovered.
  std::size_t last_end = segments.back().start_sample + window;
  if (last_end < n) {
    std::size_t s = n - window;
    segments.push_back(
        {s, window, kernels::sum_squares(clip.samples.data() + s, window)});
  }
  return segments;
}

Segment select_target_segment(const AudioClip& clip, const SegmenterConfig& cfg,
                              RngStream& rng) {
  if (clip.samples.empty())
    raise(ErrorKind::DegenerateInput, "cannot select a segment from an empty clip");

  const double window_s = rng.uniform(cfg.window_min_s, cfg.window_max_s);
  const double hop_s = cfg.hop_fraction * window_s;
  std::vector<Segment> segments = chunk_energies(clip, window_s, hop_s);

  std::stable_sort(segments.begin(), segments.end(),
                   [](const Segment& a, const Segment& b) {
                     if (a.energy != b.energy) return a.energy > b.energy;
                     return a.start_sample < b.start_sample;
                   });

  if (segments.front().energy <= 0.0)
    raise(ErrorKind::DegenerateInput, "all-zero clip has no meaningful target");

  const std::size_t k = std::min<std::size_t>(
      static_cast<std::size_t>(cfg.top_k), segments.size());
  const std::size_t pick =
      static_cast<std::size_t>(rng.uniform_int(0, static_cast<int64_t>(k) - 1));
  return segments[pick];
}

AudioClip extract_segment(const AudioClip& clip, const Segment& seg) {
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples.assign(
      clip.samples.begin() + static_cast<std::ptrdiff_t>(seg.start_sample),
      clip.samples.begin() +
          static_cast<std::ptrdiff_t>(seg.start_sample + seg.length_samples));
  return out;
}

}  // namespace solo
