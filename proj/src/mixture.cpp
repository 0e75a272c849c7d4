#include "solo/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "solo/errors.hpp"
#include "solo/kernels.hpp"

namespace solo {

namespace {
using json = nlohmann::ordered_json;
}

std::string to_string(MixCondition c) {
  switch (c) {
    case MixCondition::SingleInterference:
      return "single_interference";
    case MixCondition::DualInterference:
      return "dual_interference";
    case MixCondition::BackgroundNoise:
      return "background_noise";
    case MixCondition::InterferencePlusNoise:
      return "interference_plus_noise";
  }
  return "?";
}

std::optional<MixCondition> condition_from_string(const std::string& s) {
  for (MixCondition c : kAllConditions)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

void Blocklist::add(const std::string& a, const std::string& b) {
  pairs_.insert({std::min(a, b), std::max(a, b)});
}

bool Blocklist::blocked(const std::string& a, const std::string& b) const {
  return pairs_.count({std::min(a, b), std::max(a, b)}) > 0;
}

Blocklist Blocklist::load(const std::string& path) {
  Blocklist out;
  std::istringstream in(read_text_file(path));
  std::string line;
  int line_no = 0;
  auto trim = [](std::string s) {
    auto first = s.find_first_not_of(" \t");
    if (first == std::string::npos) return std::string{};
    auto last = s.find_last_not_of(" \t");
    return s.substr(first, last - first + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto bar = line.find('|');
    std::string a = bar == std::string::npos ? "" : trim(line.substr(0, bar));
    std::string b = bar == std::string::npos ? "" : trim(line.substr(bar + 1));
    if (a.empty() || b.empty())
      raise(ErrorKind::Format, path + ":" + std::to_string(line_no) +
                                   ": expected 'classA|classB', got '" + line + "'");
    out.add(a, b);
  }
  return out;
}

double snr_gain(double target_rms, double component_rms, double snr_db) {
  if (target_rms <= 0.0)
    raise(ErrorKind::DegenerateInput, "SNR reference RMS must be positive");
  if (component_rms <= 0.0)
    raise(ErrorKind::DegenerateInput, "cannot SNR-scale silent material");
  return target_rms / (component_rms * std::pow(10.0, snr_db / 20.0));
}

AudioClip scale_for_snr(double target_rms, const AudioClip& interferer,
                        double snr_db) {
  double gain = snr_gain(target_rms, rms(interferer.samples), snr_db);
  AudioClip out = interferer;
  kernels::scale(out.samples.data(), out.samples.size(),
                 static_cast<float>(gain));
  return out;
}

int draw_repeat_count(const AugmentConfig& cfg, RngStream& rng) {
  if (!rng.bernoulli(cfg.repeat_prob)) return 1;
  return static_cast<int>(rng.uniform_int(cfg.repeat_min, cfg.repeat_max));
}

std::pair<AudioClip, int> apply_repetition_aug(const AudioClip& clip,
                                               const AugmentConfig& cfg,
                                               RngStream& rng) {
  if (clip.samples.empty())
    raise(ErrorKind::DegenerateInput, "cannot augment an empty clip");
  int count = draw_repeat_count(cfg, rng);
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  const std::size_t cap = static_cast<std::size_t>(
      std::llround(cfg.max_len_s * clip.sample_rate));
  out.samples.reserve(std::min(cap, clip.samples.size() * count));
  for (int i = 0; i < count && out.samples.size() < cap; ++i) {
    std::size_t take = std::min(clip.samples.size(), cap - out.samples.size());
    out.samples.insert(out.samples.end(), clip.samples.begin(),
                       clip.samples.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return {std::move(out), count};
}

AudioClip preprocess_source_clip(const AudioClip& raw, int sample_rate,
                                 const NormalizeConfig& norm_cfg) {
  AudioClip clip = resample(raw, sample_rate);
  clip = trim_leading_silence(clip, norm_cfg);
  if (clip.samples.empty())
    raise(ErrorKind::DegenerateInput, "clip is silent after trimming");
  return normalize_rms(clip, norm_cfg);
}

AudioClip preprocess_noise_clip(const AudioClip& raw, int sample_rate) {
  return resample(raw, sample_rate);
}

namespace {

struct PlacedComponent {
  std::vector<float> material;  // the samples actually added, at unit gain
  std::size_t mix_offset = 0;   // where they land in the mixture
  std::size_t draw_offset = 0;  // the recorded offset (placement or crop)
};

// Components shorter than the target are placed at a uniform offset; longer
// ones are cropped to target length starting at a uniform offset.
PlacedComponent place_component(const AudioClip& comp, std::size_t target_len,
                                RngStream& rng) {
  PlacedComponent out;
  const std::size_t n = comp.samples.size();
  if (n <= target_len) {
    std::size_t max_off = target_len - n;
    out.draw_offset =
        max_off > 0
            ? static_cast<std::size_t>(rng.uniform_int(0, static_cast<int64_t>(max_off)))
            : 0;
    out.mix_offset = out.draw_offset;
    out.material = comp.samples;
  } else {
    std::size_t max_off = n - target_len;
    out.draw_offset =
        static_cast<std::size_t>(rng.uniform_int(0, static_cast<int64_t>(max_off)));
    out.mix_offset = 0;
    out.material.assign(
        comp.samples.begin() + static_cast<std::ptrdiff_t>(out.draw_offset),
        comp.samples.begin() + static_cast<std::ptrdiff_t>(out.draw_offset + target_len));
  }
  return out;
}

int interferer_count(MixCondition c) {
  switch (c) {
    case MixCondition::SingleInterference:
      return 1;
    case MixCondition::DualInterference:
      return 2;
    case MixCondition::BackgroundNoise:
      return 0;
    case MixCondition::InterferencePlusNoise:
      return 1;
  }
  return 0;
}

bool has_noise(MixCondition c) {
  return c == MixCondition::BackgroundNoise ||
         c == MixCondition::InterferencePlusNoise;
}

}  // namespace

std::pair<AudioClip, MixtureRecord> synthesize_mixture(
    const TargetRef& target_ref, const AudioClip& target, const MixConfig& cfg,
    MixCondition condition, const std::vector<PoolEntry>& interferer_pool,
    const std::vector<PoolEntry>& noise_pool, const Blocklist& blocklist,
    const SegmenterConfig& seg_cfg, const ClipProvider& interferer_provider,
    const ClipProvider& noise_provider, RngStream& rng) {
  if (target.samples.empty())
    raise(ErrorKind::DegenerateInput, "target segment is empty");

  const double target_rms = rms(target.samples);
  const std::size_t target_len = target.samples.size();

  MixtureRecord rec;
  rec.label = "multi";
  rec.target_source = target_ref;
  rec.condition = condition;

  AudioClip mix = target;

  std::vector<std::size_t> eligible;
  const int n_interferers = interferer_count(condition);
  if (n_interferers > 0) {
    for (std::size_t i = 0; i < interferer_pool.size(); ++i) {
      const auto& e = interferer_pool[i];
      if (e.class_label == target_ref.class_label) continue;
      if (blocklist.blocked(e.class_label, target_ref.class_label)) continue;
      eligible.push_back(i);
    }
    if (eligible.empty())
      raise(ErrorKind::Synthesis,
            "no interferer class is compatible with target class '" +
                target_ref.class_label + "' after blocklist filtering");
  }

  for (int k = 0; k < n_interferers; ++k) {
    const PoolEntry& entry = interferer_pool[eligible[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int64_t>(eligible.size()) - 1))]];
    AudioClip clip = interferer_provider(entry);
    Segment seg = select_target_segment(clip, seg_cfg, rng);
    AudioClip segment_clip = extract_segment(clip, seg);

    double snr = rng.uniform(cfg.snr_min_db, cfg.snr_max_db);
    PlacedComponent placed = place_component(segment_clip, target_len, rng);
    double gain =
        snr_gain(target_rms, rms(placed.material), snr);
    kernels::axpy(static_cast<float>(gain), placed.material.data(),
                  mix.samples.data() + placed.mix_offset, placed.material.size());

    rec.interferer_sources.push_back(
        {entry.path, seg, entry.class_label, placed.draw_offset, gain});
    rec.snr_db.push_back(snr);
  }

  if (has_noise(condition)) {
    if (noise_pool.empty())
      raise(ErrorKind::Synthesis, "noise pool is empty but condition '" +
                                      to_string(condition) + "' needs noise");
    const PoolEntry& entry = noise_pool[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int64_t>(noise_pool.size()) - 1))];
    AudioClip clip = noise_provider(entry);
    if (clip.samples.empty())
      raise(ErrorKind::Synthesis, "noise clip is empty: " + entry.path);

    PlacedComponent placed = place_component(clip, target_len, rng);
    double snr = rng.uniform(cfg.snr_min_db, cfg.snr_max_db);
    double gain = snr_gain(target_rms, rms(placed.material), snr);
    kernels::axpy(static_cast<float>(gain), placed.material.data(),
                  mix.samples.data() + placed.mix_offset, placed.material.size());

    rec.noise_source = NoiseRef{entry.path, placed.draw_offset, gain};
    rec.snr_db.push_back(snr);
  }

  float peak = kernels::peak_abs(mix.samples.data(), mix.samples.size());
  if (peak > 1.0f) {
    float rescale = 1.0f / peak;
    kernels::scale(mix.samples.data(), mix.samples.size(), rescale);
    rec.peak_rescale = static_cast<double>(rescale);
  }
  return {std::move(mix), std::move(rec)};
}

namespace {

json segment_to_json(const Segment& s) {
  return json{{"start_sample", s.start_sample},
              {"length_samples", s.length_samples},
              {"energy", s.energy}};
}

Segment segment_from_json(const json& j) {
  return Segment{j.at("start_sample").get<std::size_t>(),
                 j.at("length_samples").get<std::size_t>(),
                 j.at("energy").get<double>()};
}

}  // namespace

std::string mixture_record_to_json(const MixtureRecord& rec) {
  json j;
  j["id"] = rec.id;
  j["label"] = rec.label;
  j["target_source"] = json{{"file", rec.target_source.file},
                            {"segment", segment_to_json(rec.target_source.segment)},
                            {"class", rec.target_source.class_label}};
  json interferers = json::array();
  for (const auto& s : rec.interferer_sources) {
    interferers.push_back(json{{"file", s.file},
                               {"segment", segment_to_json(s.segment)},
                               {"class", s.class_label},
                               {"offset", s.offset},
                               {"applied_gain", s.applied_gain}});
  }
  j["interferer_sources"] = std::move(interferers);
  if (rec.noise_source) {
    j["noise_source"] = json{{"file", rec.noise_source->file},
                             {"offset", rec.noise_source->offset},
                             {"applied_gain", rec.noise_source->applied_gain}};
  } else {
    j["noise_source"] = nullptr;
  }
  j["condition"] = rec.condition ? json(to_string(*rec.condition)) : json(nullptr);
  j["snr_db"] = rec.snr_db;
  j["augmentation"] = rec.augmentation ? json(*rec.augmentation) : json(nullptr);
  j["output_path"] = rec.output_path;
  j["peak_rescale"] = rec.peak_rescale;
  return j.dump();
}

MixtureRecord mixture_record_from_json(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    raise(ErrorKind::Format, std::string("bad manifest line: ") + e.what());
  }
  try {
    MixtureRecord rec;
    rec.id = j.at("id").get<std::string>();
    rec.label = j.at("label").get<std::string>();
    if (rec.label != "single" && rec.label != "multi")
      raise(ErrorKind::Format, "label must be 'single' or 'multi', got '" + rec.label + "'");
    const json& t = j.at("target_source");
    rec.target_source = {t.at("file").get<std::string>(),
                         segment_from_json(t.at("segment")),
                         t.at("class").get<std::string>()};
    for (const json& s : j.at("interferer_sources")) {
      rec.interferer_sources.push_back({s.at("file").get<std::string>(),
                                        segment_from_json(s.at("segment")),
                                        s.at("class").get<std::string>(),
                                        s.at("offset").get<std::size_t>(),
                                        s.at("applied_gain").get<double>()});
    }
    if (!j.at("noise_source").is_null()) {
      const json& n = j.at("noise_source");
      rec.noise_source = NoiseRef{n.at("file").get<std::string>(),
                                  n.at("offset").get<std::size_t>(),
                                  n.at("applied_gain").get<double>()};
    }
    if (!j.at("condition").is_null()) {
      auto c = condition_from_string(j.at("condition").get<std::string>());
      if (!c) raise(ErrorKind::Format, "unknown condition '" +
                                           j.at("condition").get<std::string>() + "'");
      rec.condition = c;
    }
    rec.snr_db = j.at("snr_db").get<std::vector<double>>();
    if (!j.at("augmentation").is_null())
      rec.augmentation = j.at("augmentation").get<int>();
    rec.output_path = j.at("output_path").get<std::string>();
    rec.peak_rescale = j.value("peak_rescale", 1.0);
    return rec;
  } catch (const json::exception& e) {
    raise(ErrorKind::Format, std::string("bad manifest record: ") + e.what());
  }
}

void write_dataset_manifest(const std::vector<MixtureRecord>& records,
                            const std::string& path) {
  std::string out;
  for (const auto& rec : records) {
    out += mixture_record_to_json(rec);
    out += '\n';
  }
  write_text_file(path, out);
}

std::vector<MixtureRecord> read_dataset_manifest(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<MixtureRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    records.push_back(mixture_record_from_json(line));
  }
  if (records.empty()) raise(ErrorKind::Format, path + ": manifest has no records");
  return records;
}

ClipProvider wav_file_provider() {
  return [](const PoolEntry& e) { return load_wav(e.path); };
}

ClipProvider caching_source_provider(const ClipProvider& raw, int sample_rate,
                                     const NormalizeConfig& norm_cfg) {
  auto cache = std::make_shared<std::map<std::string, AudioClip>>();
  return [raw, sample_rate, norm_cfg, cache](const PoolEntry& e) {
    auto it = cache->find(e.path);
    if (it != cache->end()) return it->second;
    AudioClip clip = preprocess_source_clip(raw(e), sample_rate, norm_cfg);
    (*cache)[e.path] = clip;
    return clip;
  };
}

ClipProvider caching_noise_provider(const ClipProvider& raw, int sample_rate) {
  auto cache = std::make_shared<std::map<std::string, AudioClip>>();
  return [raw, sample_rate, cache](const PoolEntry& e) {
    auto it = cache->find(e.path);
    if (it != cache->end()) return it->second;
    AudioClip clip = preprocess_noise_clip(raw(e), sample_rate);
    (*cache)[e.path] = clip;
    return clip;
  };
}

DatasetResult build_dataset(const std::vector<PoolEntry>& single_pool,
                            const std::vector<PoolEntry>& noise_pool,
                            const Blocklist& blocklist, const MixConfig& mix_cfg,
                            const AugmentConfig& aug_cfg,
                            const SegmenterConfig& seg_cfg,
                            const NormalizeConfig& norm_cfg,
                            const DatasetOptions& opts,
                            const ClipProvider& raw_provider) {
  if (opts.n_examples == 0 || opts.n_examples % 2 != 0)
    raise(ErrorKind::Synthesis, "n_examples must be a positive even count");
  if (single_pool.empty())
    raise(ErrorKind::Synthesis, "single-source pool is empty");
  double psum = 0.0;
  for (double p : mix_cfg.condition_probabilities) psum += p;
  if (std::fabs(psum - 1.0) > 1e-9)
    raise(ErrorKind::Synthesis, "condition probabilities must sum to 1");

  ClipProvider sources =
      caching_source_provider(raw_provider, opts.sample_rate, norm_cfg);
  ClipProvider noises = caching_noise_provider(raw_provider, opts.sample_rate);

  namespace fs = std::filesystem;
  fs::create_directories(opts.out_dir);
  if (opts.write_audio) fs::create_directories(fs::path(opts.out_dir) / "wav");

  const std::size_t cap =
      static_cast<std::size_t>(std::llround(aug_cfg.max_len_s * opts.sample_rate));

  DatasetResult result;
  result.records.reserve(opts.n_examples);

  for (std::size_t i = 0; i < opts.n_examples; ++i) {
    RngStream stream = RngStream::derive(opts.seed, i);
    const bool single = (i % 2 == 0);
    try {
      const PoolEntry& target_entry = single_pool[static_cast<std::size_t>(
          stream.uniform_int(0, static_cast<int64_t>(single_pool.size()) - 1))];
      AudioClip source = sources(target_entry);
      Segment seg = select_target_segment(source, seg_cfg, stream);
      AudioClip target =
          normalize_rms(extract_segment(source, seg), norm_cfg);
      TargetRef target_ref{target_entry.path, seg, target_entry.class_label};

      AudioClip waveform;
      MixtureRecord rec;
      if (single) {
        waveform = std::move(target);
        rec.label = "single";
        rec.target_source = target_ref;
        float peak = kernels::peak_abs(waveform.samples.data(), waveform.samples.size());
        if (peak > 1.0f) {
          float rescale = 1.0f / peak;
          kernels::scale(waveform.samples.data(), waveform.samples.size(), rescale);
          rec.peak_rescale = static_cast<double>(rescale);
        }
      } else {
        double u = stream.uniform();
        std::size_t cond_idx = 0;
        double acc = 0.0;
        for (std::size_t c = 0; c < 4; ++c) {
          acc += mix_cfg.condition_probabilities[c];
          if (u < acc) {
            cond_idx = c;
            break;
          }
          cond_idx = c;  // rounding leftovers land in the last bucket
        }
        MixCondition condition = kAllConditions[cond_idx];
        result.condition_counts[cond_idx] += 1;
        std::tie(waveform, rec) = synthesize_mixture(
            target_ref, target, mix_cfg, condition, single_pool, noise_pool,
            blocklist, seg_cfg, sources, noises, stream);
      }

      if (waveform.samples.size() > cap) waveform.samples.resize(cap);

      char id[16];
      std::snprintf(id, sizeof(id), "%06zu", i);
      rec.id = id;
      rec.output_path =
          (fs::path(opts.out_dir) / "wav" / (rec.id + std::string(".wav"))).string();
      if (opts.write_audio) save_wav(waveform, rec.output_path);
      result.records.push_back(std::move(rec));
    } catch (const SoloError& e) {
      if (e.kind() == ErrorKind::Synthesis || e.kind() == ErrorKind::DegenerateInput)
        raise(ErrorKind::Synthesis,
              "record " + std::to_string(i) + ": " + e.what());
      throw;
    }
  }

  result.manifest_path = (fs::path(opts.out_dir) / "manifest.jsonl").string();
  write_dataset_manifest(result.records, result.manifest_path);
  return result;
}

}  // namespace solo
