#include "solo/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "solo/embeddings.hpp"
#include "solo/errors.hpp"

namespace solo {

ClassifyMetrics classify_metrics_from_counts(std::size_t tp, std::size_t fp,
                                             std::size_t fn, std::size_t tn) {
  const std::size_t total = tp + fp + fn + tn;
  if (total == 0)
    raise(ErrorKind::Evaluation, "classify_metrics: no predictions");
  ClassifyMetrics m;
  if (tp + fp > 0) {
    m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  } else {
    m.degenerate = true;
  }
  if (tp + fn > 0) {
    m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  } else {
    m.degenerate = true;
  }
  if (m.precision + m.recall > 0.0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  } else {
    m.degenerate = true;
  }
  m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(total);
  return m;
}

ClassifyMetrics classify_metrics(
    const std::vector<std::pair<double, int>>& preds, double threshold) {
  if (preds.empty())
    raise(ErrorKind::Evaluation, "classify_metrics: no predictions");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (const auto& [p, y] : preds) {
    const bool positive = p >= threshold;
    if (positive && y == 1)
      ++tp;
    else if (positive && y == 0)
      ++fp;
    else if (!positive && y == 1)
      ++fn;
    else
      ++tn;
  }
  return classify_metrics_from_counts(tp, fp, fn, tn);
}

std::pair<double, double> aggregate_scores(const std::vector<double>& values) {
  if (values.size() < 2)
    raise(ErrorKind::Evaluation,
          "aggregate_scores needs at least 2 values, got " +
              std::to_string(values.size()));
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sigma = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return {mean, 2.0 * sigma};
}

bool pp_accept(const VoteRecord& vote) {
  std::size_t pp = 0;
  for (Rating r : vote.ratings)
    if (r == Rating::PP) ++pp;
  return pp >= 2;
}

namespace {

Rating rating_from_string(const std::string& s, const std::string& path,
                          std::size_t line_no) {
  if (s == "PP") return Rating::PP;
  if (s == "PNP") return Rating::PNP;
  if (s == "NP") return Rating::NP;
  if (s == "U") return Rating::U;
  raise(ErrorKind::Format, "unknown rating \"" + s + "\" at " + path + ":" +
                               std::to_string(line_no));
}

}  // namespace

std::vector<VoteRecord> read_votes(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::Io, "cannot open votes file: " + path);
  std::vector<VoteRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      VoteRecord v;
      v.clip_id = j.at("clip_id").get<std::string>();
      v.class_label = j.value("class_label", std::string());
      for (const auto& r : j.at("ratings"))
        v.ratings.push_back(
            rating_from_string(r.get<std::string>(), path, line_no));
      if (v.ratings.empty())
        raise(ErrorKind::Format, "empty ratings at " + path + ":" +
                                     std::to_string(line_no));
      out.push_back(std::move(v));
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorKind::Format, "bad vote record at " + path + ":" +
                                   std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<ScoreRecord> read_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::Io, "cannot open scores file: " + path);
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) !=
                                     std::vector<std::string>{"clip_id", "pc", "pq"})
    raise(ErrorKind::Format, "scores file must start with header clip_id,pc,pq: " + path);
  std::vector<ScoreRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 3)
      raise(ErrorKind::Format, "expected 3 fields at " + path + ":" +
                                   std::to_string(line_no));
    ScoreRecord r;
    r.clip_id = fields[0];
    try {
      r.pc = std::stod(fields[1]);
      r.pq = std::stod(fields[2]);
    } catch (const std::exception&) {
      raise(ErrorKind::Format, "non-numeric score at " + path + ":" +
                                   std::to_string(line_no));
    }
    if (r.pc < 1.0 || r.pc > 10.0 || r.pq < 1.0 || r.pq > 10.0)
      raise(ErrorKind::Format, "score outside [1,10] at " + path + ":" +
                                   std::to_string(line_no));
    out.push_back(std::move(r));
  }
  return out;
}

const char* to_string(DurationFlag flag) {
  switch (flag) {
    case DurationFlag::TooShort:
      return "too_short";
    case DurationFlag::TooLong:
      return "too_long";
    default:
      return "kept";
  }
}

void FilterConfig::validate() const {
  if (!(min_dur_s > 0.0 && min_dur_s < max_dur_s))
    raise(ErrorKind::Config, "filter: need 0 < min_dur_s < max_dur_s");
  if (!(threshold > 0.0 && threshold < 1.0))
    raise(ErrorKind::Config, "filter.threshold must be in (0, 1)");
  if (!(chunk_len_s > 0.0) || !(chunk_hop_s > 0.0))
    raise(ErrorKind::Config, "filter chunk length and hop must be > 0");
}

DurationFlag duration_filter(double duration_s, const FilterConfig& cfg) {
  if (duration_s < cfg.min_dur_s) return DurationFlag::TooShort;
  if (duration_s > cfg.max_dur_s) return DurationFlag::TooLong;
  return DurationFlag::Kept;
}

std::string prediction_record_to_json(const PredictionRecord& rec) {
  nlohmann::ordered_json j;
  j["clip_id"] = rec.clip_id;
  j["duration_s"] = rec.duration_s;
  j["probability"] = rec.probability;
  j["decision"] = rec.decision;
  j["duration_flag"] = to_string(rec.duration_flag);
  if (rec.chunk_predictions) {
    nlohmann::ordered_json chunks = nlohmann::ordered_json::array();
    for (const ChunkPrediction& c : *rec.chunk_predictions)
      chunks.push_back({{"start_s", c.start_s},
                        {"end_s", c.end_s},
                        {"probability", c.probability}});
    j["chunk_predictions"] = std::move(chunks);
  } else {
    j["chunk_predictions"] = nullptr;
  }
  j["errored"] = rec.errored;
  if (rec.errored) j["error"] = rec.error;
  return j.dump();
}

PredictionRecord prediction_record_from_json(const std::string& line) {
  try {
    const nlohmann::json j = nlohmann::json::parse(line);
    PredictionRecord rec;
    rec.clip_id = j.at("clip_id").get<std::string>();
    rec.duration_s = j.at("duration_s").get<double>();
    rec.probability = j.at("probability").get<double>();
    rec.decision = j.at("decision").get<std::string>();
    const std::string flag = j.at("duration_flag").get<std::string>();
    if (flag == "kept")
      rec.duration_flag = DurationFlag::Kept;
    else if (flag == "too_short")
      rec.duration_flag = DurationFlag::TooShort;
    else if (flag == "too_long")
      rec.duration_flag = DurationFlag::TooLong;
    else
      raise(ErrorKind::Format, "unknown duration_flag: " + flag);
    if (j.contains("chunk_predictions") && !j["chunk_predictions"].is_null()) {
      std::vector<ChunkPrediction> chunks;
      for (const auto& c : j["chunk_predictions"])
        chunks.push_back({c.at("start_s").get<double>(),
                          c.at("end_s").get<double>(),
                          c.at("probability").get<double>()});
      rec.chunk_predictions = std::move(chunks);
    }
    rec.errored = j.value("errored", false);
    rec.error = j.value("error", std::string());
    return rec;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::Format, std::string("bad prediction record: ") + e.what());
  }
}

void write_predictions(const std::vector<PredictionRecord>& records,
                       const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(ErrorKind::Io, "cannot create predictions file: " + path);
  for (const PredictionRecord& rec : records)
    out << prediction_record_to_json(rec) << '\n';
  if (!out) raise(ErrorKind::Io, "write failed for predictions file: " + path);
}

std::vector<PredictionRecord> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::Io, "cannot open predictions file: " + path);
  std::vector<PredictionRecord> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(prediction_record_from_json(line));
  return out;
}

std::vector<PredictionRecord> predict_corpus(
    const std::vector<CorpusEntry>& corpus, const CorpusClipProvider& provider,
    const ClassifierParams& params, const FeaturizerConfig& feat_cfg,
    const NormalizeConfig& norm_cfg, const FilterConfig& cfg,
    const PredictOptions& opts) {
  cfg.validate();
  if (params.arch.input_dim != static_cast<std::size_t>(feat_cfg.n_mels))
    raise(ErrorKind::Config,
          "checkpoint input_dim " + std::to_string(params.arch.input_dim) +
              " does not match featurizer n_mels " +
              std::to_string(feat_cfg.n_mels));

  std::vector<PredictionRecord> out;
  out.reserve(corpus.size());
  for (const CorpusEntry& entry : corpus) {
    PredictionRecord rec;
    rec.clip_id = entry.clip_id;
    rec.duration_s = entry.duration_s;
    rec.duration_flag = duration_filter(entry.duration_s, cfg);
    try {
      const AudioClip clip = provider(entry);
      rec.duration_s = clip.duration_s();
      rec.duration_flag = duration_filter(rec.duration_s, cfg);

      AudioClip lead = trim_leading_silence(clip, norm_cfg);
      if (lead.empty())
        raise(ErrorKind::DegenerateInput,
              "clip is entirely below the silence threshold");
      const AudioClip normed = normalize_rms(lead, norm_cfg);
      rec.probability = forward_eval(params, logmel_features(normed, feat_cfg));
      rec.decision = rec.probability >= cfg.threshold ? "single" : "multi";

      if (opts.chunk_level) {
        const std::size_t len = static_cast<std::size_t>(
            std::llround(cfg.chunk_len_s * clip.sample_rate));
        const std::size_t hop = static_cast<std::size_t>(
            std::llround(cfg.chunk_hop_s * clip.sample_rate));
        // Full windows at hop multiples, then one clamped window covering the
        // tail (the whole clip when it is shorter than one chunk).
        std::vector<std::size_t> starts;
        const std::size_t n = clip.samples.size();
        for (std::size_t s = 0; s + len <= n; s += hop) starts.push_back(s);
        if (starts.empty() || starts.back() + len < n)
          starts.push_back(n > len ? n - len : 0);

        std::vector<ChunkPrediction> chunks;
        for (std::size_t start : starts) {
          const std::size_t end = std::min(start + len, n);
          AudioClip piece;
          piece.sample_rate = clip.sample_rate;
          piece.samples.assign(
              clip.samples.begin() + static_cast<std::ptrdiff_t>(start),
              clip.samples.begin() + static_cast<std::ptrdiff_t>(end));
          ChunkPrediction cp;
          cp.start_s = static_cast<double>(start) / clip.sample_rate;
          cp.end_s = static_cast<double>(end) / clip.sample_rate;
          if (rms(piece.samples) > 0.0) piece = normalize_rms(piece, norm_cfg);
          cp.probability = forward_eval(params, logmel_features(piece, feat_cfg));
          chunks.push_back(cp);
        }
        rec.chunk_predictions = std::move(chunks);
      }
    } catch (const SoloError& e) {
      rec.errored = true;
      rec.error = e.what();
      rec.decision.clear();
      rec.probability = 0.0;
      rec.chunk_predictions.reset();
    }
    out.push_back(std::move(rec));
  }
  return out;
}

FlowCounts compare_filters(const std::vector<PredictionRecord>& preds,
                           const std::vector<VoteRecord>& votes) {
  std::map<std::string, const VoteRecord*> by_id;
  for (const VoteRecord& v : votes) by_id.emplace(v.clip_id, &v);

  FlowCounts fc;
  for (const PredictionRecord& rec : preds) {
    if (rec.errored || rec.duration_flag != DurationFlag::Kept) continue;
    const auto it = by_id.find(rec.clip_id);
    if (it == by_id.end()) continue;
    const bool ss = rec.decision == "single";
    const bool pp = pp_accept(*it->second);
    if (ss && pp)
      ++fc.ss_pp;
    else if (ss)
      ++fc.ss_not_pp;
    else if (pp)
      ++fc.ms_pp;
    else
      ++fc.ms_not_pp;
  }
  fc.joined = fc.ss_pp + fc.ss_not_pp + fc.ms_pp + fc.ms_not_pp;
  if (fc.joined == 0)
    raise(ErrorKind::Evaluation,
          "no clips joined between predictions and votes");
  fc.model_preserved =
      static_cast<double>(fc.ss_pp + fc.ss_not_pp) / static_cast<double>(fc.joined);
  fc.pp_preserved =
      static_cast<double>(fc.ss_pp + fc.ms_pp) / static_cast<double>(fc.joined);
  return fc;
}

}  // namespace solo
