#include "solo/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "solo/errors.hpp"

namespace solo {

namespace {

using nlohmann::json;

// Wraps one JSON object; every key must be consumed by a get() call or
// finish() reports it with its full path.
class StrictObject {
 public:
  StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object())
      raise(ErrorKind::Config, "config field " + path_ + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    const auto it = j_.find(key);
    if (it == j_.end()) return;  // absent keys keep compiled defaults
    seen_.insert(key);
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      raise(ErrorKind::Config, "config field " + path_ + "." + key +
                                   " has the wrong type");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key))
        raise(ErrorKind::Config, "unknown config key " + path_ + "." + key);
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

PipelineConfig PipelineConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::Io, "cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    raise(ErrorKind::Config, "config file " + path + " is not valid JSON: " +
                                 e.what());
  }

  PipelineConfig cfg;
  StrictObject root(j, "config");
  root.get("seed", cfg.seed);
  root.get("sample_rate", cfg.sample_rate);

  if (root.has("normalize")) {
    StrictObject s(root.raw("normalize"), "config.normalize");
    s.get("target_level_dbfs", cfg.normalize.target_level_dbfs);
    s.get("silence_threshold_dbfs", cfg.normalize.silence_threshold_dbfs);
    s.get("silence_window_s", cfg.normalize.silence_window_s);
    s.finish();
  }
  if (root.has("segmenter")) {
    StrictObject s(root.raw("segmenter"), "config.segmenter");
    s.get("window_min_s", cfg.segmenter.window_min_s);
    s.get("window_max_s", cfg.segmenter.window_max_s);
    s.get("top_k", cfg.segmenter.top_k);
    s.get("hop_fraction", cfg.segmenter.hop_fraction);
    s.finish();
  }
  if (root.has("mix")) {
    StrictObject s(root.raw("mix"), "config.mix");
    s.get("snr_min_db", cfg.mix.snr_min_db);
    s.get("snr_max_db", cfg.mix.snr_max_db);
    s.get("condition_probabilities", cfg.mix.condition_probabilities);
    s.finish();
  }
  if (root.has("augment")) {
    StrictObject s(root.raw("augment"), "config.augment");
    s.get("repeat_prob", cfg.augment.repeat_prob);
    s.get("repeat_min", cfg.augment.repeat_min);
    s.get("repeat_max", cfg.augment.repeat_max);
    s.get("max_len_s", cfg.augment.max_len_s);
    s.finish();
  }
  if (root.has("featurizer")) {
    StrictObject s(root.raw("featurizer"), "config.featurizer");
    s.get("window_s", cfg.featurizer.window_s);
    s.get("hop_s", cfg.featurizer.hop_s);
    s.get("n_mels", cfg.featurizer.n_mels);
    s.get("fft_size", cfg.featurizer.fft_size);
    s.get("log_floor", cfg.featurizer.log_floor);
    s.finish();
  }
  if (root.has("classifier")) {
    StrictObject s(root.raw("classifier"), "config.classifier");
    s.get("input_dim", cfg.classifier.input_dim);
    s.get("hidden", cfg.classifier.hidden);
    s.get("mlp_hidden", cfg.classifier.mlp_hidden);
    s.get("dropout_rate", cfg.classifier.dropout_rate);
    s.finish();
  }
  if (root.has("train")) {
    StrictObject s(root.raw("train"), "config.train");
    s.get("lr_base", cfg.train.lr_base);
    s.get("weight_decay", cfg.train.weight_decay);
    s.get("epochs", cfg.train.epochs);
    s.get("warmup_fraction", cfg.train.warmup_fraction);
    s.get("batch_size", cfg.train.batch_size);
    s.get("beta1", cfg.train.beta1);
    s.get("beta2", cfg.train.beta2);
    s.get("eps", cfg.train.eps);
    s.get("split_ratio", cfg.train.split_ratio);
    s.get("decision_threshold", cfg.train.decision_threshold);
    s.finish();
  }
  if (root.has("filter")) {
    StrictObject s(root.raw("filter"), "config.filter");
    s.get("min_dur_s", cfg.filter.min_dur_s);
    s.get("max_dur_s", cfg.filter.max_dur_s);
    s.get("threshold", cfg.filter.threshold);
    s.get("chunk_len_s", cfg.filter.chunk_len_s);
    s.get("chunk_hop_s", cfg.filter.chunk_hop_s);
    s.finish();
  }
  root.finish();
  cfg.validate();
  return cfg;
}

void PipelineConfig::validate() const {
  if (sample_rate < 1000)
    raise(ErrorKind::Config, "config.sample_rate must be >= 1000");

  if (!(normalize.target_level_dbfs < 0.0))
    raise(ErrorKind::Config, "config.normalize.target_level_dbfs must be < 0");
  if (!(normalize.silence_window_s > 0.0))
    raise(ErrorKind::Config, "config.normalize.silence_window_s must be > 0");

  if (!(segmenter.window_min_s > 0.0 &&
        segmenter.window_min_s <= segmenter.window_max_s))
    raise(ErrorKind::Config,
          "config.segmenter: need 0 < window_min_s <= window_max_s");
  if (segmenter.top_k < 1)
    raise(ErrorKind::Config, "config.segmenter.top_k must be >= 1");
  if (!(segmenter.hop_fraction > 0.0 && segmenter.hop_fraction <= 1.0))
    raise(ErrorKind::Config, "config.segmenter.hop_fraction must be in (0, 1]");

  if (!(mix.snr_min_db < mix.snr_max_db))
    raise(ErrorKind::Config, "config.mix: need snr_min_db < snr_max_db");
  double prob_sum = 0.0;
  for (double p : mix.condition_probabilities) {
    if (p < 0.0)
      raise(ErrorKind::Config,
            "config.mix.condition_probabilities must be non-negative");
    prob_sum += p;
  }
  if (std::abs(prob_sum - 1.0) > 1e-9)
    raise(ErrorKind::Config,
          "config.mix.condition_probabilities must sum to 1");

  if (!(augment.repeat_prob >= 0.0 && augment.repeat_prob <= 1.0))
    raise(ErrorKind::Config, "config.augment.repeat_prob must be in [0, 1]");
  if (!(augment.repeat_min >= 1 && augment.repeat_min <= augment.repeat_max))
    raise(ErrorKind::Config,
          "config.augment: need 1 <= repeat_min <= repeat_max");
  if (!(augment.max_len_s > 0.0))
    raise(ErrorKind::Config, "config.augment.max_len_s must be > 0");

  if (!(featurizer.hop_s > 0.0 && featurizer.window_s >= featurizer.hop_s))
    raise(ErrorKind::Config, "config.featurizer: need window_s >= hop_s > 0");
  if (featurizer.n_mels < 1)
    raise(ErrorKind::Config, "config.featurizer.n_mels must be >= 1");
  if (featurizer.fft_size < 1 ||
      (featurizer.fft_size & (featurizer.fft_size - 1)) != 0)
    raise(ErrorKind::Config, "config.featurizer.fft_size must be a power of two");
  if (!(featurizer.log_floor > 0.0))
    raise(ErrorKind::Config, "config.featurizer.log_floor must be > 0");

  classifier.validate();
  train.validate();
  filter.validate();
}

}  // namespace solo
