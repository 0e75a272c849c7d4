#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "solo/audio_core.hpp"
#include "solo/config.hpp"
#include "solo/embeddings.hpp"
#include "solo/errors.hpp"
#include "solo/evaluation.hpp"
#include "solo/manifest.hpp"
#include "solo/mixture.hpp"
#include "solo/report.hpp"
#include "solo/training.hpp"

namespace fs = std::filesystem;
using namespace solo;

namespace {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
      return 2;
    case ErrorKind::Format:
    case ErrorKind::UnsupportedFormat:
      return 3;
    case ErrorKind::Training:
    case ErrorKind::Split:
      return 4;
    case ErrorKind::Evaluation:
      return 5;
    default:
      return 1;
  }
}

PipelineConfig load_config(const std::string& path) {
  if (path.empty()) {
    PipelineConfig cfg;
    cfg.validate();
    return cfg;
  }
  return PipelineConfig::load(path);
}

// Precedence: --seed flag, then SOLO_SEED, then the config file.
std::uint64_t resolve_seed(bool flag_given, std::uint64_t flag_seed,
                           const PipelineConfig& cfg) {
  if (flag_given) return flag_seed;
  if (const char* env = std::getenv("SOLO_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0')
      raise(ErrorKind::Config,
            "SOLO_SEED must be an unsigned integer, got \"" + std::string(env) +
                "\"");
    return static_cast<std::uint64_t>(v);
  }
  return cfg.seed;
}

std::string format_fraction(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

struct SynthArgs {
  std::string config, pool, noise, blocklist, out;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool manifest_only = false;
};

void run_synth(const SynthArgs& a) {
  PipelineConfig cfg = load_config(a.config);
  const std::uint64_t seed = resolve_seed(a.seed_given, a.seed, cfg);

  const auto pool = read_pool_manifest(a.pool);
  std::vector<PoolEntry> noise;
  if (!a.noise.empty()) noise = read_pool_manifest(a.noise);
  Blocklist blocklist;
  if (!a.blocklist.empty()) blocklist = Blocklist::load(a.blocklist);

  DatasetOptions opts;
  opts.n_examples = a.n;
  opts.sample_rate = cfg.sample_rate;
  opts.out_dir = a.out;
  opts.seed = seed;
  opts.write_audio = !a.manifest_only;

  const DatasetResult res =
      build_dataset(pool, noise, blocklist, cfg.mix, cfg.augment, cfg.segmenter,
                    cfg.normalize, opts, wav_file_provider());

  std::size_t singles = 0;
  for (const MixtureRecord& rec : res.records)
    if (rec.label == "single") ++singles;
  std::cout << "records: " << res.records.size() << " (single " << singles
            << ", multi " << res.records.size() - singles << ")\n";
  std::cout << "conditions:";
  for (std::size_t i = 0; i < kAllConditions.size(); ++i)
    std::cout << " " << to_string(kAllConditions[i]) << "="
              << res.condition_counts[i];
  std::cout << "\nmanifest: " << res.manifest_path << "\n";
  if (a.manifest_only) std::cout << "dry run: no audio written\n";
}

struct FeaturizeArgs {
  std::string config, manifest, emb_dir, mode = "logmel";
};

void run_featurize(const FeaturizeArgs& a) {
  PipelineConfig cfg = load_config(a.config);
  const auto records = read_dataset_manifest(a.manifest);
  fs::create_directories(a.emb_dir);

  std::size_t written = 0, skipped = 0, checked = 0;
  std::size_t dim = 0;
  std::string dim_file;
  for (const MixtureRecord& rec : records) {
    const std::string emb_path = a.emb_dir + "/" + rec.id + ".emb";
    if (a.mode == "import") {
      const EmbeddingSequence seq = read_embeddings(emb_path);
      if (dim == 0) {
        dim = seq.dim;
        dim_file = emb_path;
      } else if (seq.dim != dim) {
        raise(ErrorKind::Format,
              "embedding dim mismatch: " + emb_path + " has dim " +
                  std::to_string(seq.dim) + " but " + dim_file + " has dim " +
                  std::to_string(dim));
      }
      ++checked;
      continue;
    }
    if (fs::exists(emb_path) &&
        fs::last_write_time(emb_path) > fs::last_write_time(rec.output_path)) {
      ++skipped;
      continue;
    }
    // Same preprocessing the scorer applies at inference time, so training
    // features and prediction features share one distribution.
    AudioClip clip = resample(load_wav(rec.output_path), cfg.sample_rate);
    clip = trim_leading_silence(clip, cfg.normalize);
    if (clip.empty())
      raise(ErrorKind::DegenerateInput,
            rec.id + ": clip is entirely below the silence threshold");
    clip = normalize_rms(clip, cfg.normalize);
    write_embeddings(logmel_features(clip, cfg.featurizer), emb_path);
    ++written;
  }
  if (a.mode == "import")
    std::cout << "validated " << checked << " embedding files (dim " << dim
              << ")\n";
  else
    std::cout << "featurized " << written << " clips, " << skipped
              << " up to date\n";
}

struct TrainArgs {
  std::string config, manifest, emb_dir, out;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

void run_train(const TrainArgs& a) {
  PipelineConfig cfg = load_config(a.config);
  cfg.train.seed = resolve_seed(a.seed_given, a.seed, cfg);

  const auto records = read_dataset_manifest(a.manifest);
  const DatasetSplits splits =
      split_dataset(records, cfg.train.split_ratio, cfg.train.seed);
  fs::create_directories(a.out);
  write_dataset_manifest(splits.train, a.out + "/split_train.jsonl");
  write_dataset_manifest(splits.val, a.out + "/split_val.jsonl");
  write_dataset_manifest(splits.test, a.out + "/split_test.jsonl");

  const SequenceProvider provider =
      embedding_file_provider(a.emb_dir, cfg.augment, cfg.featurizer.hop_s);
  const std::vector<MixtureRecord>& probe_split =
      splits.train.empty() ? splits.val : splits.train;
  const EmbeddingSequence probe = provider(probe_split.front(), nullptr);
  if (probe.dim != cfg.classifier.input_dim)
    raise(ErrorKind::Config,
          "embeddings have dim " + std::to_string(probe.dim) +
              " but config.classifier.input_dim is " +
              std::to_string(cfg.classifier.input_dim));

  if (cfg.train.epochs == 0)
    std::cout << "warning: epochs=0, evaluating the initialization only\n";

  const TrainResult result = train(splits, provider, cfg.classifier, cfg.train);
  save_checkpoint(result.best.params, result.best.meta, a.out + "/checkpoint.bin");
  write_text_file(a.out + "/metrics.csv", metrics_csv(result.log));

  std::cout << "split sizes: train " << splits.train.size() << ", val "
            << splits.val.size() << ", test " << splits.test.size() << "\n";
  std::cout << "best epoch: " << result.best.meta.epoch << "\n";
  std::cout << "val accuracy: " << format_fraction(result.best.meta.val_accuracy)
            << "\n";
  std::cout << "checkpoint: " << a.out << "/checkpoint.bin\n";
}

struct FilterArgs {
  std::string config, corpus, checkpoint, votes, scores, out;
  bool chunks = false;
};

void run_filter(const FilterArgs& a) {
  PipelineConfig cfg = load_config(a.config);
  const auto corpus = read_corpus_manifest(a.corpus);
  const Checkpoint ck = load_checkpoint(a.checkpoint);

  const int sample_rate = cfg.sample_rate;
  const CorpusClipProvider provider = [sample_rate](const CorpusEntry& entry) {
    return resample(load_wav(entry.path), sample_rate);
  };
  PredictOptions opts;
  opts.chunk_level = a.chunks;
  opts.sample_rate = sample_rate;

  const auto preds = predict_corpus(corpus, provider, ck.params, cfg.featurizer,
                                    cfg.normalize, cfg.filter, opts);
  fs::create_directories(a.out);
  write_predictions(preds, a.out + "/predictions.jsonl");

  std::size_t errored = 0, kept = 0, too_short = 0, too_long = 0, single = 0;
  for (const PredictionRecord& rec : preds) {
    if (rec.errored) {
      ++errored;
      continue;
    }
    switch (rec.duration_flag) {
      case DurationFlag::Kept:
        ++kept;
        break;
      case DurationFlag::TooShort:
        ++too_short;
        break;
      case DurationFlag::TooLong:
        ++too_long;
        break;
    }
    if (rec.duration_flag == DurationFlag::Kept && rec.decision == "single")
      ++single;
  }
  std::vector<std::pair<std::string, std::string>> summary = {
      {"clips", std::to_string(preds.size())},
      {"errored", std::to_string(errored)},
      {"kept", std::to_string(kept)},
      {"too_short", std::to_string(too_short)},
      {"too_long", std::to_string(too_long)},
      {"single", std::to_string(single)},
      {"multi", std::to_string(kept - single)},
  };
  if (kept > 0)
    summary.emplace_back("single_fraction",
                         format_fraction(static_cast<double>(single) /
                                         static_cast<double>(kept)));

  if (!a.votes.empty()) {
    const auto votes = read_votes(a.votes);
    const FlowCounts fc = compare_filters(preds, votes);
    summary.emplace_back("joined", std::to_string(fc.joined));
    summary.emplace_back("ss_pp", std::to_string(fc.ss_pp));
    summary.emplace_back("ss_not_pp", std::to_string(fc.ss_not_pp));
    summary.emplace_back("ms_pp", std::to_string(fc.ms_pp));
    summary.emplace_back("ms_not_pp", std::to_string(fc.ms_not_pp));
    summary.emplace_back("model_preserved", format_fraction(fc.model_preserved));
    summary.emplace_back("pp_preserved", format_fraction(fc.pp_preserved));
  }

  if (!a.scores.empty()) {
    const auto scores = read_scores(a.scores);
    std::map<std::string, const ScoreRecord*> by_id;
    for (const ScoreRecord& s : scores) by_id.emplace(s.clip_id, &s);
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>
        groups;  // decision -> (pc list, pq list)
    for (const PredictionRecord& rec : preds) {
      if (rec.errored || rec.duration_flag != DurationFlag::Kept) continue;
      const auto it = by_id.find(rec.clip_id);
      if (it == by_id.end()) continue;
      groups[rec.decision].first.push_back(it->second->pc);
      groups[rec.decision].second.push_back(it->second->pq);
    }
    std::size_t joined = 0;
    for (const auto& [decision, lists] : groups) joined += lists.first.size();
    if (joined == 0)
      raise(ErrorKind::Evaluation,
            "no clips joined between predictions (" +
                std::to_string(preds.size()) + ") and scores (" +
                std::to_string(scores.size()) + ")");
    std::cout << "decision  n  pc(mean±2σ)  pq(mean±2σ)\n";
    for (const auto& [decision, lists] : groups) {
      const std::size_t n = lists.first.size();
      std::cout << decision << "  " << n << "  ";
      if (n >= 2) {
        const auto [pc_mean, pc_2s] = aggregate_scores(lists.first);
        const auto [pq_mean, pq_2s] = aggregate_scores(lists.second);
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%.2f±%.2f  %.2f±%.2f", pc_mean, pc_2s,
                      pq_mean, pq_2s);
        std::cout << buf << "\n";
        summary.emplace_back("pc_" + decision,
                             format_fraction(pc_mean) + "±" +
                                 format_fraction(pc_2s));
        summary.emplace_back("pq_" + decision,
                             format_fraction(pq_mean) + "±" +
                                 format_fraction(pq_2s));
      } else {
        std::cout << "n/a  n/a\n";
      }
    }
  }

  std::string csv = "metric,value\n";
  for (const auto& [k, v] : summary) csv += k + "," + v + "\n";
  write_text_file(a.out + "/summary.csv", csv);

  for (const auto& [k, v] : summary) std::cout << k << ": " << v << "\n";
  std::cout << "predictions: " << a.out << "/predictions.jsonl\n";
}

struct ReportArgs {
  std::string metrics, summary, out;
};

void run_report(const ReportArgs& a) {
  if (a.metrics.empty() && a.summary.empty())
    raise(ErrorKind::Config, "report needs --metrics and/or --summary");
  std::vector<EpochMetrics> log;
  if (!a.metrics.empty()) log = read_metrics_csv(a.metrics);
  std::vector<std::pair<std::string, std::string>> summary;
  if (!a.summary.empty()) summary = read_summary_csv(a.summary);

  fs::create_directories(a.out);
  write_text_file(a.out + "/report.txt", render_text_report(log, summary));
  write_text_file(a.out + "/report.svg", render_svg_report(log));
  std::cout << "wrote " << a.out << "/report.txt and " << a.out
            << "/report.svg\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "solocurate: single-source audio curation pipeline "
      "(mixture synthesis, classifier training, rule-based filtering)"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand(
      "synth", "Synthesize a balanced single/multi-source mixture dataset");
  synth_cmd->add_option("--config", synth.config, "Pipeline config JSON");
  synth_cmd->add_option("--pool", synth.pool,
                        "Clean single-source pool manifest CSV")
      ->required();
  synth_cmd->add_option("--noise", synth.noise, "Ambient noise pool manifest CSV");
  synth_cmd->add_option("--blocklist", synth.blocklist,
                        "Blocklist of class pairs that must not be mixed");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--n", synth.n, "Total example count (even)")
      ->required();
  auto* synth_seed =
      synth_cmd->add_option("--seed", synth.seed, "Dataset seed");
  synth_cmd->add_flag("--manifest-only", synth.manifest_only,
                      "Dry run: write the manifest, skip the audio");
  synth_cmd->callback([&] {
    synth.seed_given = synth_seed->count() > 0;
    run_synth(synth);
  });

  FeaturizeArgs feat;
  auto* feat_cmd = app.add_subcommand(
      "featurize", "Compute or validate per-clip embedding files");
  feat_cmd->add_option("--config", feat.config, "Pipeline config JSON");
  feat_cmd->add_option("--manifest", feat.manifest, "Dataset manifest JSONL")
      ->required();
  feat_cmd->add_option("--emb-dir", feat.emb_dir, "Embedding directory")
      ->required();
  feat_cmd
      ->add_option("--mode", feat.mode,
                   "logmel: compute features; import: validate existing files")
      ->check(CLI::IsMember({"logmel", "import"}));
  feat_cmd->callback([&] { run_featurize(feat); });

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand(
      "train", "Split the dataset and train the single-vs-multi classifier");
  train_cmd->add_option("--config", train_args.config, "Pipeline config JSON");
  train_cmd
      ->add_option("--manifest", train_args.manifest, "Dataset manifest JSONL")
      ->required();
  train_cmd->add_option("--emb-dir", train_args.emb_dir, "Embedding directory")
      ->required();
  train_cmd->add_option("--out", train_args.out, "Output directory")
      ->required();
  auto* train_seed =
      train_cmd->add_option("--seed", train_args.seed, "Training seed");
  train_cmd->callback([&] {
    train_args.seed_given = train_seed->count() > 0;
    run_train(train_args);
  });

  FilterArgs filter;
  auto* filter_cmd = app.add_subcommand(
      "filter", "Score a corpus with a checkpoint and apply the curation rules");
  filter_cmd->add_option("--config", filter.config, "Pipeline config JSON");
  filter_cmd->add_option("--corpus", filter.corpus, "Corpus manifest CSV")
      ->required();
  filter_cmd
      ->add_option("--checkpoint", filter.checkpoint, "Trained checkpoint")
      ->required();
  filter_cmd->add_option("--votes", filter.votes,
                         "Human ratings JSONL for the flow comparison");
  filter_cmd->add_option("--scores", filter.scores,
                         "External PC/PQ scores CSV for aggregation");
  filter_cmd->add_option("--out", filter.out, "Output directory")->required();
  filter_cmd->add_flag("--chunks", filter.chunks,
                       "Also emit sliding-window chunk predictions");
  filter_cmd->callback([&] { run_filter(filter); });

  ReportArgs report;
  auto* report_cmd = app.add_subcommand(
      "report", "Render metrics/summary CSVs to text and SVG");
  report_cmd->add_option("--metrics", report.metrics, "Training metrics CSV");
  report_cmd->add_option("--summary", report.summary, "Filter summary CSV");
  report_cmd->add_option("--out", report.out, "Output directory")->required();
  report_cmd->callback([&] { run_report(report); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const SoloError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
