#pragma once

#include <cstddef>
#include <vector>

#include "solo/audio_core.hpp"
#include "solo/rng.hpp"

namespace solo {

struct SegmenterConfig {
  double window_min_s = 1.0;
  double window_max_s = 10.0;
  int top_k = 5;
  double hop_fraction = 0.5;  // hop = hop_fraction * window length
};

struct Segment {
  std::size_t start_sample = 0;
  std::size_t length_samples = 0;
  double energy = 0.0;  // sum of squared amplitudes
};

// Window energies at offsets 0, hop, 2*hop, ...; if a tail would be left
// uncovered, one final window is clamped to end at the clip boundary. A clip
// shorter than the window yields a single whole-clip segment.
std::vector<Segment> chunk_energies(const AudioClip& clip, double window_len_s,
                                    double hop_s);

// Energy-based target selection: draw a window length L ~ U(window_min_s,
// window_max_s), rank windows (hop = hop_fraction*L) by energy (ties broken
// by earlier start) and pick uniformly among the top_k best. All-zero clips
// are rejected. Deterministic given the rng stream.
Segment select_target_segment(const AudioClip& clip, const SegmenterConfig& cfg,
                              RngStream& rng);

// Copies the segment's samples out of the clip.
AudioClip extract_segment(const AudioClip& clip, const Segment& seg);

}  // namespace solo
