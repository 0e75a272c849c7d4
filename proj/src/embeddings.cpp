#include "solo/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "solo/errors.hpp"
#include "solo/kernels.hpp"

namespace solo {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT.
void fft(std::vector<double>& re, std::vector<double>& im) {
  const std::size_t n = re.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (std::size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::size_t a = i + k, b = i + k + len / 2;
        double tr = re[b] * cr - im[b] * ci;
        double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

struct MelFilter {
  std::size_t first_bin = 0;
  std::vector<double> weights;  // over bins [first_bin, first_bin + size)
};

// Triangular filters with n_mels+2 breakpoints equally spaced on the HTK mel
// scale between 0 Hz and Nyquist, evaluated at the FFT bin frequencies.
std::vector<MelFilter> build_filterbank(int n_mels, int fft_size, int sample_rate) {
  const int n_bins = fft_size / 2 + 1;
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (std::size_t j = 0; j < edges.size(); ++j)
    edges[j] = mel_to_hz(mel_max * static_cast<double>(j) / (n_mels + 1));

  std::vector<MelFilter> bank(static_cast<std::size_t>(n_mels));
  const double bin_hz = static_cast<double>(sample_rate) / fft_size;
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    MelFilter& filter = bank[static_cast<std::size_t>(m)];
    std::vector<double> w;
    bool started = false;
    for (int k = 0; k < n_bins; ++k) {
      const double f = k * bin_hz;
      double v = 0.0;
      if (f >= lo && f <= center && center > lo)
        v = (f - lo) / (center - lo);
      else if (f > center && f <= hi && hi > center)
        v = (hi - f) / (hi - center);
      if (v > 0.0) {
        if (!started) {
          filter.first_bin = static_cast<std::size_t>(k);
          started = true;
        }
        w.push_back(v);
      } else if (started) {
        break;
      }
    }
    filter.weights = std::move(w);
  }
  return bank;
}

}  // namespace

EmbeddingSequence logmel_features(const AudioClip& clip,
                                  const FeaturizerConfig& cfg) {
  if (!is_pow2(cfg.fft_size))
    raise(ErrorKind::Config, "featurizer.fft_size must be a power of two");
  const std::size_t window = static_cast<std::size_t>(
      std::llround(cfg.window_s * clip.sample_rate));
  const std::size_t hop =
      static_cast<std::size_t>(std::llround(cfg.hop_s * clip.sample_rate));
  if (window == 0 || hop == 0 || hop > window)
    raise(ErrorKind::Config, "featurizer window/hop invalid for this sample rate");
  if (static_cast<std::size_t>(cfg.fft_size) < window)
    raise(ErrorKind::Config, "featurizer.fft_size is smaller than the analysis window");
  if (clip.samples.size() < window)
    raise(ErrorKind::DegenerateInput, "clip shorter than one analysis window");

  const std::size_t n_frames = 1 + (clip.samples.size() - window) / hop;
  const std::size_t n_mels = static_cast<std::size_t>(cfg.n_mels);
  const auto bank = build_filterbank(cfg.n_mels, cfg.fft_size, clip.sample_rate);

  std::vector<double> hann(window);
  for (std::size_t i = 0; i < window; ++i)
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / window);

  EmbeddingSequence seq;
  seq.frames = n_frames;
  seq.dim = n_mels;
  seq.frame_hop_s = cfg.hop_s;
  seq.data.resize(n_frames * n_mels);

  const std::size_t nfft = static_cast<std::size_t>(cfg.fft_size);
  std::vector<double> re(nfft), im(nfft), power(nfft / 2 + 1);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const float* frame = clip.samples.data() + t * hop;
    for (std::size_t i = 0; i < window; ++i) re[i] = frame[i] * hann[i];
    std::fill(re.begin() + static_cast<std::ptrdiff_t>(window), re.end(), 0.0);
    std::fill(im.begin(), im.end(), 0.0);
    fft(re, im);
    for (std::size_t k = 0; k <= nfft / 2; ++k)
      power[k] = re[k] * re[k] + im[k] * im[k];

    double* out = seq.row(t);
    for (std::size_t m = 0; m < n_mels; ++m) {
      const MelFilter& f = bank[m];
      double e = f.weights.empty()
                     ? 0.0
                     : kernels::dot(f.weights.data(), power.data() + f.first_bin,
                                    f.weights.size());
      out[m] = std::log(e + cfg.log_floor);
    }
  }
  return seq;
}

namespace {

uint32_t read_u32le(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

}  // namespace

EmbeddingSequence read_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::Io, "cannot open embedding file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < 16)
    raise(ErrorKind::Format, "embedding file too small: " + path);
  const uint8_t* p = reinterpret_cast<const uint8_t*>(bytes.data());
  if (std::memcmp(p, "EMB1", 4) != 0)
    raise(ErrorKind::Format, "bad magic in embedding file: " + path);
  const uint32_t t = read_u32le(p + 4);
  const uint32_t d = read_u32le(p + 8);
  if (t == 0 || d == 0)
    raise(ErrorKind::Format, "embedding file declares an empty matrix: " + path);
  const std::size_t expected = 16 + 4ull * t * d;
  if (bytes.size() != expected)
    raise(ErrorKind::Format,
          "embedding payload size mismatch (header says " + std::to_string(t) +
              "x" + std::to_string(d) + "): " + path);

  EmbeddingSequence seq;
  seq.frames = t;
  seq.dim = d;
  seq.data.resize(static_cast<std::size_t>(t) * d);
  const uint8_t* payload = p + 16;
  for (std::size_t i = 0; i < seq.data.size(); ++i) {
    float v;
    std::memcpy(&v, payload + 4 * i, 4);
    if (!std::isfinite(v))
      raise(ErrorKind::Format, "non-finite value in embedding file: " + path);
    seq.data[i] = static_cast<double>(v);
  }
  return seq;
}

void write_embeddings(const EmbeddingSequence& seq, const std::string& path) {
  if (seq.frames == 0 || seq.dim == 0)
    raise(ErrorKind::DegenerateInput, "refusing to write an empty embedding matrix");
  std::string out;
  out.reserve(16 + 4 * seq.data.size());
  out += "EMB1";
  auto put_u32 = [&out](uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put_u32(static_cast<uint32_t>(seq.frames));
  put_u32(static_cast<uint32_t>(seq.dim));
  put_u32(0);
  for (double v : seq.data) {
    float f = static_cast<float>(v);
    char buf[4];
    std::memcpy(buf, &f, 4);
    out.append(buf, 4);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) raise(ErrorKind::Io, "cannot create embedding file: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) raise(ErrorKind::Io, "write failed for embedding file: " + path);
}

EmbeddingSequence repeat_frames(const EmbeddingSequence& seq, int count,
                                std::size_t cap_frames) {
  std::size_t total = seq.frames * static_cast<std::size_t>(std::max(count, 1));
  if (cap_frames > 0) total = std::min(total, cap_frames);
  total = std::max<std::size_t>(total, 1);

  EmbeddingSequence out;
  out.dim = seq.dim;
  out.frame_hop_s = seq.frame_hop_s;
  out.frames = total;
  out.data.resize(total * seq.dim);
  for (std::size_t t = 0; t < total; ++t) {
    const std::size_t src = t % seq.frames;
    std::copy_n(seq.row(src), seq.dim, out.row(t));
  }
  return out;
}

}  // namespace solo
