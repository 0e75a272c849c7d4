#include "solo/audio_core.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "solo/errors.hpp"
#include "solo/kernels.hpp"

namespace solo {

namespace {

constexpr uint16_t kFormatPcm = 0x0001;
constexpr uint16_t kFormatFloat = 0x0003;
constexpr uint16_t kFormatExtensible = 0xfffe;

struct ByteReader {
  const uint8_t* data;
  std::size_t size;
  std::size_t pos = 0;

  bool can_read(std::size_t n) const { return pos + n <= size; }

  uint16_t u16() {
    uint16_t v = static_cast<uint16_t>(data[pos]) |
                 static_cast<uint16_t>(data[pos + 1]) << 8;
    pos += 2;
    return v;
  }
  uint32_t u32() {
    uint32_t v = static_cast<uint32_t>(data[pos]) |
                 static_cast<uint32_t>(data[pos + 1]) << 8 |
                 static_cast<uint32_t>(data[pos + 2]) << 16 |
                 static_cast<uint32_t>(data[pos + 3]) << 24;
    pos += 4;
    return v;
  }
  bool tag(const char* fourcc) {
    bool match = std::memcmp(data + pos, fourcc, 4) == 0;
    pos += 4;
    return match;
  }
};

std::string codec_name(uint16_t format) {
  switch (format) {
    case 0x0002:
      return "ADPCM (format 2)";
    case 0x0006:
      return "A-law (format 6)";
    case 0x0007:
      return "mu-law (format 7)";
    case 0x0011:
      return "IMA ADPCM (format 17)";
    case 0x0055:
      return "MP3 (format 85)";
    default:
      return "format " + std::to_string(format);
  }
}

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

AudioClip load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::Io, "cannot open WAV file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  ByteReader r{reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size()};

  if (!r.can_read(12)) raise(ErrorKind::Format, "truncated RIFF header: " + path);
  if (!r.tag("RIFF")) raise(ErrorKind::Format, "not a RIFF file: " + path);
  r.u32();  // declared riff size; trust the actual file length instead
  if (!r.tag("WAVE")) raise(ErrorKind::Format, "not a WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  bool have_fmt = false;
  const uint8_t* payload = nullptr;
  std::size_t payload_size = 0;

  while (r.can_read(8)) {
    char id[4];
    std::memcpy(id, r.data + r.pos, 4);
    r.pos += 4;
    uint32_t chunk_size = r.u32();
    if (!r.can_read(chunk_size))
      raise(ErrorKind::Format, "truncated chunk in WAV file: " + path);

    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (chunk_size < 16) raise(ErrorKind::Format, "fmt chunk too small: " + path);
      ByteReader f{r.data + r.pos, chunk_size};
      format = f.u16();
      channels = f.u16();
      sample_rate = f.u32();
      f.u32();  // byte rate
      f.u16();  // block align
      bits = f.u16();
      if (format == kFormatExtensible) {
        // cbSize(2) + validBits(2) + channelMask(4) + GUID; the GUID's first
        // two bytes carry the actual format code.
        if (chunk_size < 40) raise(ErrorKind::Format, "extensible fmt chunk too small: " + path);
        f.pos = 24;
        format = f.u16();
      }
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      payload = r.data + r.pos;
      payload_size = chunk_size;
    }
    r.pos += chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }

  if (!have_fmt) raise(ErrorKind::Format, "missing fmt chunk: " + path);
  if (payload == nullptr) raise(ErrorKind::Format, "missing data chunk: " + path);
  if (channels == 0 || sample_rate == 0)
    raise(ErrorKind::Format, "invalid channel count or sample rate: " + path);

  bool pcm16 = format == kFormatPcm && bits == 16;
  bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32) {
    if (format == kFormatPcm || format == kFormatFloat)
      raise(ErrorKind::UnsupportedFormat,
            "unsupported bit depth " + std::to_string(bits) + " for " +
                (format == kFormatPcm ? "PCM" : "IEEE float") + ": " + path);
    raise(ErrorKind::UnsupportedFormat,
          "unsupported WAV codec " + codec_name(format) + ": " + path);
  }

  std::size_t bytes_per_sample = pcm16 ? 2 : 4;
  std::size_t frame_bytes = bytes_per_sample * channels;
  std::size_t frames = payload_size / frame_bytes;

  AudioClip clip;
  clip.sample_rate = static_cast<int>(sample_rate);
  clip.samples.resize(frames);
  const double inv_channels = 1.0 / channels;

  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    const uint8_t* frame = payload + i * frame_bytes;
    for (unsigned c = 0; c < channels; ++c) {
      if (pcm16) {
        int16_t s;
        std::memcpy(&s, frame + 2 * c, 2);
        acc += s / 32768.0;
      } else {
        float s;
        std::memcpy(&s, frame + 4 * c, 4);
        acc += s;
      }
    }
    float v = static_cast<float>(acc * inv_channels);
    if (!std::isfinite(v))
      raise(ErrorKind::Format, "non-finite sample in WAV file: " + path);
    clip.samples[i] = v;
  }
  return clip;
}

void save_wav(const AudioClip& clip, const std::string& path) {
  const uint32_t n = static_cast<uint32_t>(clip.samples.size());
  const uint32_t data_bytes = n * 4;

  std::string out;
  out.reserve(58 + data_bytes);
  out += "RIFF";
  put_u32(out, 4 + 8 + 18 + 8 + 4 + 8 + data_bytes);
  out += "WAVE";

  out += "fmt ";
  put_u32(out, 18);
  put_u16(out, kFormatFloat);
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<uint32_t>(clip.sample_rate) * 4);
  put_u16(out, 4);
  put_u16(out, 32);
  put_u16(out, 0);  // cbSize

  // fact chunk is required for non-PCM formats
  out += "fact";
  put_u32(out, 4);
  put_u32(out, n);

  out += "data";
  put_u32(out, data_bytes);
  std::size_t base = out.size();
  out.resize(base + data_bytes);
  if (n > 0) std::memcpy(out.data() + base, clip.samples.data(), data_bytes);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) raise(ErrorKind::Io, "cannot create WAV file: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) raise(ErrorKind::Io, "write failed for WAV file: " + path);
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) raise(ErrorKind::DegenerateInput, "target rate must be positive");
  if (target_rate == clip.sample_rate || clip.samples.empty()) {
    AudioClip out = clip;
    out.sample_rate = target_rate;
    return out;
  }

  const std::size_t n = clip.samples.size();
  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
  const std::size_t out_len =
      static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratio));

  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(out_len);
  const double step = 1.0 / ratio;
  for (std::size_t i = 0; i < out_len; ++i) {
    double x = static_cast<double>(i) * step;
    if (x >= static_cast<double>(n - 1)) {
      out.samples[i] = clip.samples[n - 1];
      continue;
    }
    std::size_t j = static_cast<std::size_t>(x);
    double frac = x - static_cast<double>(j);
    out.samples[i] = static_cast<float>((1.0 - frac) * clip.samples[j] +
                                        frac * clip.samples[j + 1]);
  }
  return out;
}

double rms(std::span<const float> samples) {
  if (samples.empty()) return 0.0;
  double ss = kernels::sum_squares(samples.data(), samples.size());
  return std::sqrt(ss / static_cast<double>(samples.size()));
}

AudioClip normalize_rms(const AudioClip& clip, const NormalizeConfig& cfg) {
  double level = rms(clip.samples);
  if (level <= 0.0)
    raise(ErrorKind::DegenerateInput, "cannot normalize an all-zero clip");
  float gain = static_cast<float>(dbfs_to_linear(cfg.target_level_dbfs) / level);
  AudioClip out = clip;
  kernels::scale(out.samples.data(), out.samples.size(), gain);
  return out;
}

AudioClip trim_leading_silence(const AudioClip& clip, const NormalizeConfig& cfg) {
  if (clip.samples.empty()) return clip;
  std::size_t window = static_cast<std::size_t>(
      std::llround(cfg.silence_window_s * clip.sample_rate));
  window = std::max<std::size_t>(window, 1);
  const double threshold = dbfs_to_linear(cfg.silence_threshold_dbfs);
  const std::size_t n = clip.samples.size();

  for (std::size_t start = 0; start < n; start += window) {
    std::size_t len = std::min(window, n - start);
    if (rms({clip.samples.data() + start, len}) >= threshold) {
      AudioClip out;
      out.sample_rate = clip.sample_rate;
      out.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(start),
                         clip.samples.end());
      return out;
    }
  }
  return AudioClip{{}, clip.sample_rate};
}

}  // namespace solo
