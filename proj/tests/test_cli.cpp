// End-to-end tests that drive the installed CLI binary through std::system.
// SOLO_CLI_PATH and SOLO_REPO_DIR are injected by the build.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "solo/audio_core.hpp"
#include "solo/classifier.hpp"
#include "solo/embeddings.hpp"
#include "solo/evaluation.hpp"
#include "solo/mixture.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace solo;

namespace {

struct CmdResult {
  int code = -1;
  std::string out;  // stdout and stderr interleaved
};

CmdResult run_cli(const std::string& args, const std::string& env_prefix = "") {
  static int counter = 0;
  const fs::path log =
      fs::temp_directory_path() / ("solo_cli_log_" + std::to_string(counter++));
  const std::string cmd = env_prefix + std::string(SOLO_CLI_PATH) + " " + args +
                          " >" + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  CmdResult res;
  res.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(log);
  res.out.assign(std::istreambuf_iterator<char>(in),
                 std::istreambuf_iterator<char>());
  fs::remove(log);
  return res;
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

// Shared on-disk fixture: a small clean pool, a noise pool, and a config that
// shrinks the featurizer/classifier so training stays fast.
struct Fixture {
  fs::path root;
  std::string config;
  std::string pool_csv;
  std::string noise_csv;
  std::vector<std::string> clip_paths;  // pool clips, class-major order
};

const Fixture& fixture() {
  static Fixture fx = [] {
    Fixture f;
    f.root = testutil::scratch_dir("cli_fixture");
    const fs::path clips = f.root / "clips";
    fs::create_directories(clips);

    std::string pool = "path,class_label,duration_s\n";
    const double freqs[3] = {180.0, 320.0, 510.0};
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < 6; ++i) {
        AudioClip clip = testutil::make_voiced(
            freqs[c] * (1.0 + 0.03 * i), 2.0, 16000, 0.4,
            static_cast<std::uint64_t>(100 * c + i));
        const std::string path =
            (clips / ("c" + std::to_string(c) + "_" + std::to_string(i) + ".wav"))
                .string();
        save_wav(clip, path);
        f.clip_paths.push_back(path);
        pool += path + ",class" + std::to_string(c) + ",2.0\n";
      }
    }
    f.pool_csv = (f.root / "pool.csv").string();
    std::ofstream(f.pool_csv) << pool;

    std::string noise = "path,class_label,duration_s\n";
    for (int i = 0; i < 2; ++i) {
      AudioClip clip = testutil::make_noise(2.5, 16000, 0.2,
                                            static_cast<std::uint64_t>(900 + i));
      const std::string path = (clips / ("n" + std::to_string(i) + ".wav")).string();
      save_wav(clip, path);
      noise += path + ",ambience,2.5\n";
    }
    f.noise_csv = (f.root / "noise.csv").string();
    std::ofstream(f.noise_csv) << noise;

    f.config = (f.root / "config.json").string();
    std::ofstream(f.config) << R"({
      "sample_rate": 16000,
      "segmenter": {"window_min_s": 0.5, "window_max_s": 1.0,
                    "top_k": 3, "hop_fraction": 0.5},
      "featurizer": {"n_mels": 16},
      "classifier": {"input_dim": 16, "hidden": 8, "mlp_hidden": 8,
                     "dropout_rate": 0.2},
      "train": {"lr_base": 0.001, "epochs": 2, "batch_size": 8}
    })";
    return f;
  }();
  return fx;
}

std::string base_args(const Fixture& f) {
  return "--config " + f.config + " --pool " + f.pool_csv;
}

}  // namespace

TEST_CASE("cli: synth/featurize/train/filter/report round trip") {
  const Fixture& f = fixture();
  const fs::path work = testutil::scratch_dir("cli_pipeline");
  const std::string synth_dir = (work / "dataset").string();
  const std::string emb_dir = (work / "emb").string();

  // --- synth ---
  CmdResult r = run_cli("synth " + base_args(f) + " --noise " + f.noise_csv +
                        " --out " + synth_dir + " --n 60 --seed 11");
  CAPTURE(r.out);
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "records: 60 (single 30, multi 30)"));
  CHECK(contains(r.out, "manifest: " + synth_dir + "/manifest.jsonl"));
  CHECK_FALSE(contains(r.out, "dry run"));

  const auto records = read_dataset_manifest(synth_dir + "/manifest.jsonl");
  REQUIRE(records.size() == 60);
  for (const MixtureRecord& rec : records) REQUIRE(fs::exists(rec.output_path));
  const AudioClip probe = load_wav(records.front().output_path);
  CHECK(probe.sample_rate == 16000);
  CHECK(probe.samples.size() >= 8000);  // at least the minimum window

  // Make sure embedding mtimes land strictly after the wav mtimes even on
  // filesystems with coarse timestamps, so the up-to-date skip is observable.
  std::this_thread::sleep_for(std::chrono::milliseconds(1100));

  // --- featurize ---
  r = run_cli("featurize --config " + f.config + " --manifest " + synth_dir +
              "/manifest.jsonl --emb-dir " + emb_dir);
  CAPTURE(r.out);
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "featurized 60 clips, 0 up to date"));
  const EmbeddingSequence seq = read_embeddings(emb_dir + "/000000.emb");
  CHECK(seq.dim == 16);
  CHECK(seq.frames >= 1);

  r = run_cli("featurize --config " + f.config + " --manifest " + synth_dir +
              "/manifest.jsonl --emb-dir " + emb_dir);
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "featurized 0 clips, 60 up to date"));

  // import mode validates what logmel mode just wrote
  r = run_cli("featurize --config " + f.config + " --manifest " + synth_dir +
              "/manifest.jsonl --emb-dir " + emb_dir + " --mode import");
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "validated 60 embedding files (dim 16)"));

  // --- train ---
  const std::string train_a = (work / "train_a").string();
  r = run_cli("train --config " + f.config + " --manifest " + synth_dir +
              "/manifest.jsonl --emb-dir " + emb_dir + " --out " + train_a +
              " --seed 5");
  CAPTURE(r.out);
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "best epoch: "));
  CHECK(contains(r.out, "val accuracy: "));
  CHECK(contains(r.out, "checkpoint: " + train_a + "/checkpoint.bin"));

  std::size_t split_total = 0;
  for (const char* split : {"split_train.jsonl", "split_val.jsonl",
                            "split_test.jsonl"}) {
    const auto part = read_dataset_manifest(train_a + "/" + split);
    CHECK(!part.empty());
    split_total += part.size();
  }
  CHECK(split_total == 60);

  const Checkpoint ck = load_checkpoint(train_a + "/checkpoint.bin");
  CHECK(ck.meta.seed == 5);
  CHECK(ck.meta.epoch >= 1);
  CHECK(ck.meta.epoch <= 2);
  CHECK(ck.params.arch.input_dim == 16);
  CHECK(ck.params.arch.hidden == 8);

  {
    std::ifstream metrics(train_a + "/metrics.csv");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(metrics, line))
      if (!line.empty()) ++lines;
    CHECK(lines == 3);  // header + one row per epoch
  }

  // identical command, fresh output directory: training must be reproducible
  const std::string train_b = (work / "train_b").string();
  r = run_cli("train --config " + f.config + " --manifest " + synth_dir +
              "/manifest.jsonl --emb-dir " + emb_dir + " --out " + train_b +
              " --seed 5");
  REQUIRE(r.code == 0);
  CHECK(testutil::read_file_bytes(train_a + "/checkpoint.bin") ==
        testutil::read_file_bytes(train_b + "/checkpoint.bin"));
  CHECK(testutil::read_file_bytes(train_a + "/metrics.csv") ==
        testutil::read_file_bytes(train_b + "/metrics.csv"));
  CHECK(testutil::read_file_bytes(train_a + "/split_train.jsonl") ==
        testutil::read_file_bytes(train_b + "/split_train.jsonl"));

  // --- filter ---
  const std::string short_clip = (work / "short.wav").string();
  save_wav(testutil::make_voiced(250.0, 0.3, 16000, 0.4, 77), short_clip);

  const std::string corpus = (work / "corpus.csv").string();
  std::ofstream(corpus) << "clip_id,path,duration_s\n"
                        << "c0," << f.clip_paths[0] << ",2.0\n"
                        << "c1," << f.clip_paths[0] << ",2.0\n"
                        << "c2," << short_clip << ",0.3\n"
                        << "c3," << (work / "missing.wav").string() << ",2.0\n"
                        << "c4," << f.clip_paths[7] << ",2.0\n";

  const std::string votes = (work / "votes.jsonl").string();
  std::ofstream(votes)
      << R"({"clip_id": "c0", "class_label": "class0", "ratings": ["PP", "PP", "NP"]})"
      << "\n"
      << R"({"clip_id": "c4", "class_label": "class1", "ratings": ["NP", "NP", "PP"]})"
      << "\n"
      << R"({"clip_id": "zzz", "class_label": "class2", "ratings": ["PP", "PP"]})"
      << "\n";

  const std::string scores = (work / "scores.csv").string();
  std::ofstream(scores) << "clip_id,pc,pq\n"
                        << "c0,6.5,7.0\nc1,5.0,8.0\nc4,4.5,6.0\n";

  const std::string filt = (work / "filter_out").string();
  r = run_cli("filter --config " + f.config + " --corpus " + corpus +
              " --checkpoint " + train_a + "/checkpoint.bin --votes " + votes +
              " --scores " + scores + " --out " + filt + " --chunks");
  CAPTURE(r.out);
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "predictions: " + filt + "/predictions.jsonl"));

  const auto preds = read_predictions(filt + "/predictions.jsonl");
  REQUIRE(preds.size() == 5);
  CHECK(preds[0].clip_id == "c0");
  CHECK(preds[3].clip_id == "c3");
  CHECK(preds[3].errored);
  CHECK(preds[2].duration_flag == DurationFlag::TooShort);
  for (const PredictionRecord& p : preds) {
    if (p.errored) continue;
    CHECK(p.probability >= 0.0);
    CHECK(p.probability <= 1.0);
    CHECK((p.decision == "single" || p.decision == "multi"));
  }
  // same underlying audio, two ids: scoring must be a pure function of the clip
  CHECK(preds[0].probability == preds[1].probability);
  CHECK(preds[0].decision == preds[1].decision);
  // 2 s clip, 1 s chunks at 0.5 s hop
  REQUIRE(preds[0].chunk_predictions.has_value());
  CHECK(preds[0].chunk_predictions->size() == 3);

  const std::string summary =
      testutil::read_file_bytes(filt + "/summary.csv");
  CHECK(summary.rfind("metric,value\n", 0) == 0);
  CHECK(contains(summary, "clips,5\n"));
  CHECK(contains(summary, "errored,1\n"));
  CHECK(contains(summary, "kept,3\n"));
  CHECK(contains(summary, "too_short,1\n"));
  CHECK(contains(summary, "too_long,0\n"));
  CHECK(contains(summary, "joined,2\n"));
  // three scored clips over at most two decisions: one group always has n >= 2
  CHECK(contains(summary, "\npc_"));
  CHECK(contains(summary, "\npq_"));

  // --- report ---
  const std::string rep = (work / "report").string();
  r = run_cli("report --metrics " + train_a + "/metrics.csv --summary " + filt +
              "/summary.csv --out " + rep);
  CAPTURE(r.out);
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "wrote " + rep + "/report.txt and " + rep +
                            "/report.svg"));
  CHECK(!testutil::read_file_bytes(rep + "/report.txt").empty());
  CHECK(contains(testutil::read_file_bytes(rep + "/report.svg"), "<svg"));
}

TEST_CASE("cli: seed precedence and manifest determinism") {
  const Fixture& f = fixture();
  const fs::path work = testutil::scratch_dir("cli_seed");
  const std::string out = (work / "ds").string();
  const std::string cmd = "synth " + base_args(f) + " --noise " + f.noise_csv +
                          " --out " + out + " --n 20 --manifest-only";

  auto manifest_bytes = [&] {
    return testutil::read_file_bytes(out + "/manifest.jsonl");
  };

  CmdResult r = run_cli(cmd + " --seed 7");
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "dry run: no audio written"));
  const std::string seed7 = manifest_bytes();

  r = run_cli(cmd + " --seed 7");
  REQUIRE(r.code == 0);
  CHECK(manifest_bytes() == seed7);

  // SOLO_SEED substitutes for the flag...
  r = run_cli(cmd, "SOLO_SEED=7 ");
  REQUIRE(r.code == 0);
  CHECK(manifest_bytes() == seed7);

  // ...but an explicit flag wins over the environment
  r = run_cli(cmd + " --seed 7", "SOLO_SEED=99 ");
  REQUIRE(r.code == 0);
  CHECK(manifest_bytes() == seed7);

  r = run_cli(cmd + " --seed 8");
  REQUIRE(r.code == 0);
  CHECK(manifest_bytes() != seed7);

  r = run_cli(cmd, "SOLO_SEED=abc ");
  CHECK(r.code == 2);
  CHECK(contains(r.out, "SOLO_SEED"));
}

TEST_CASE("cli: argument and input errors map to documented exit codes") {
  const Fixture& f = fixture();
  const fs::path work = testutil::scratch_dir("cli_errors");
  const std::string out = (work / "ds").string();

  CmdResult r = run_cli("--help");
  CHECK(r.code == 0);
  CHECK(contains(r.out, "solocurate"));

  r = run_cli("");  // a subcommand is required
  CHECK(r.code == 2);

  r = run_cli("frobnicate");
  CHECK(r.code == 2);

  r = run_cli("synth --out " + out + " --n 10");  // missing --pool
  CHECK(r.code == 2);
  CHECK(contains(r.out, "--pool"));

  // odd example counts cannot be balanced
  r = run_cli("synth " + base_args(f) + " --out " + out +
              " --n 9 --manifest-only");
  CHECK(r.code == 1);
  CHECK(contains(r.out, "even"));

  const std::string bad_cfg = (work / "bad.json").string();
  std::ofstream(bad_cfg) << R"({"bogus": 1})";
  r = run_cli("synth --config " + bad_cfg + " --pool " + f.pool_csv +
              " --out " + out + " --n 2 --manifest-only");
  CHECK(r.code == 2);
  CHECK(contains(r.out, "unknown config key config.bogus"));

  r = run_cli("synth --pool " + (work / "nope.csv").string() + " --out " + out +
              " --n 2 --manifest-only");
  CHECK(r.code == 1);  // Io: manifest file missing

  const std::string bad_pool = (work / "bad_pool.csv").string();
  std::ofstream(bad_pool) << "file,label\nx,y\n";
  r = run_cli("synth --pool " + bad_pool + " --out " + out +
              " --n 2 --manifest-only");
  CHECK(r.code == 3);  // Format: wrong header
  CHECK(contains(r.out, "expected header"));

  r = run_cli("report --out " + (work / "rep").string());
  CHECK(r.code == 2);
  CHECK(contains(r.out, "--metrics and/or --summary"));
}

TEST_CASE("cli: featurize import rejects corrupt and mismatched files") {
  const Fixture& f = fixture();
  const fs::path work = testutil::scratch_dir("cli_import");
  const std::string out = (work / "ds").string();
  const std::string emb_dir = (work / "emb").string();

  CmdResult r = run_cli("synth " + base_args(f) + " --noise " + f.noise_csv +
                        " --out " + out + " --n 4 --seed 3 --manifest-only");
  REQUIRE(r.code == 0);

  fs::create_directories(emb_dir);
  auto write_valid = [&](const std::string& id, std::size_t dim) {
    EmbeddingSequence seq;
    seq.frames = 5;
    seq.dim = dim;
    seq.data.assign(seq.frames * seq.dim, 0.25);
    write_embeddings(seq, emb_dir + "/" + id + ".emb");
  };
  for (const char* id : {"000000", "000001", "000002", "000003"})
    write_valid(id, 16);

  const std::string import_cmd = "featurize --config " + f.config +
                                 " --manifest " + out +
                                 "/manifest.jsonl --emb-dir " + emb_dir +
                                 " --mode import";
  r = run_cli(import_cmd);
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "validated 4 embedding files (dim 16)"));

  // truncated payload
  const std::string victim = emb_dir + "/000002.emb";
  const std::string whole = testutil::read_file_bytes(victim);
  testutil::write_file_bytes(victim, whole.substr(0, whole.size() - 6));
  r = run_cli(import_cmd);
  CHECK(r.code == 3);

  testutil::write_file_bytes(victim, whole);  // restore
  write_valid("000003", 8);                   // now the dims disagree
  r = run_cli(import_cmd);
  CHECK(r.code == 3);
  CHECK(contains(r.out, "dim mismatch"));

  fs::remove(emb_dir + "/000001.emb");
  write_valid("000003", 16);
  r = run_cli(import_cmd);
  CHECK(r.code == 1);  // Io: missing file
  CHECK(contains(r.out, "000001.emb"));
}
