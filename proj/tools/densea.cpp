// Command-line workbench: synthesize corpora, train the anticipation models,
// score checkpoints, and export attention/segment traces for inspection.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "densea/config.hpp"

namespace fs = std::filesystem;
using namespace densea;

namespace {

struct DataDir {
  std::string root;
  std::vector<VideoSample> videos;
  std::map<std::string, size_t> by_id;
  SplitsFile splits;
  std::set<std::string> full_set, weak_set;
};

DataDir load_data_dir(const std::string& dir) {
  DataDir d;
  d.root = dir;
  std::vector<ManifestEntry> entries = read_manifest(dir + "/manifest.txt");
  d.videos.reserve(entries.size());
  for (const auto& e : entries) {
    IngestResult ir = ingest_features(dir + "/" + e.path);
    if (ir.sample.id != e.id)
      throw densea::ParseError("manifest entry " + e.id + " points at video " + ir.sample.id);
    d.by_id[ir.sample.id] = d.videos.size();
    d.videos.push_back(std::move(ir.sample));
  }
  d.splits = read_splits(dir + "/splits.json");
  d.full_set.insert(d.splits.full_ids.begin(), d.splits.full_ids.end());
  d.weak_set.insert(d.splits.weak_ids.begin(), d.splits.weak_ids.end());
  for (const auto& id : d.full_set)
    if (!d.by_id.count(id)) throw densea::ParseError("splits name unknown video " + id);
  for (const auto& id : d.weak_set)
    if (!d.by_id.count(id)) throw densea::ParseError("splits name unknown video " + id);
  return d;
}

enum class Partition { Full, Weak, Test, Train, All };

Partition partition_of(const std::string& name) {
  if (name == "full") return Partition::Full;
  if (name == "weak") return Partition::Weak;
  if (name == "test") return Partition::Test;
  if (name == "train") return Partition::Train;
  if (name == "all") return Partition::All;
  throw ConfigError("unknown split \"" + name + "\" (want full/weak/test/train/all)");
}

bool in_partition(const DataDir& d, const std::string& id, Partition p) {
  bool is_full = d.full_set.count(id) != 0;
  bool is_weak = d.weak_set.count(id) != 0;
  switch (p) {
    case Partition::Full: return is_full;
    case Partition::Weak: return is_weak;
    case Partition::Test: return !is_full && !is_weak;
    case Partition::Train: return is_full || is_weak;
    case Partition::All: return true;
  }
  return false;
}

std::vector<WindowedSample> windows_for(const DataDir& d, const ExperimentConfig& cfg,
                                        Partition p) {
  std::vector<WindowedSample> out;
  for (const auto& v : d.videos) {
    if (!in_partition(d, v.id, p)) continue;
    try {
      out.push_back(window(v, cfg.observed_fraction, cfg.predicted_fraction));
    } catch (const DegenerateSampleError& e) {
      log_warn(std::string("skipping ") + v.id + ": " + e.what());
    }
  }
  return out;
}

const VideoSample& video_by_id(const DataDir& d, const std::string& id) {
  auto it = d.by_id.find(id);
  if (it == d.by_id.end()) throw ConfigError("no video with id \"" + id + "\" in the manifest");
  return d.videos[it->second];
}

TrainResult dispatch_train(const ExperimentConfig& cfg, const std::vector<WindowedSample>& full,
                           const std::vector<WindowedSample>& weak_pool, const TrainOptions& opt) {
  if (cfg.mode == "adaptive" || cfg.mode == "linear" || cfg.mode == "none") {
    std::vector<WeakSample> weak;
    weak.reserve(weak_pool.size());
    for (const auto& w : weak_pool) weak.push_back(weaken(w));
    if (cfg.mode == "adaptive") return train_adaptive(full, weak, opt);
    if (cfg.mode == "linear") return train_linear(full, weak, opt);
    return train_none(full, weak, opt);
  }
  int kind = cfg.mode == "baseline1" ? 1 : cfg.mode == "baseline2" ? 2 : 3;
  return train_baseline(kind, full, weak_pool, opt);
}

// ---- generate ---------------------------------------------------------------

int cmd_generate(const std::string& config_path, const std::string& out_dir) {
  ExperimentConfig cfg = load_config(config_path);
  fs::create_directories(fs::path(out_dir) / "features");

  GrammarConfig g = grammar_of(cfg);
  std::vector<VideoSample> corpus = generate_corpus(g, cfg.n_videos, cfg.data_seed);

  std::vector<ManifestEntry> manifest;
  manifest.reserve(corpus.size());
  for (const auto& v : corpus) {
    std::string rel = "features/" + v.id + ".features.txt";
    export_features(v, cfg.n_classes, out_dir + "/" + rel);
    manifest.push_back(ManifestEntry{v.id, rel});
  }
  write_manifest(manifest, out_dir + "/manifest.txt");

  std::vector<std::string> all_ids;
  all_ids.reserve(corpus.size());
  for (const auto& v : corpus) all_ids.push_back(v.id);
  std::vector<std::string> train_ids = cfg.train_fraction >= 1.0
                                           ? all_ids
                                           : pick_ids(all_ids, cfg.train_fraction, cfg.data_seed,
                                                      "train");
  std::set<std::string> train_set(train_ids.begin(), train_ids.end());
  std::vector<VideoSample> train_corpus;
  for (const auto& v : corpus)
    if (train_set.count(v.id)) train_corpus.push_back(v);

  SplitSpec spec;
  spec.full_fraction = cfg.full_fraction;
  spec.seed = cfg.data_seed;
  spec.observed_fraction = cfg.observed_fraction;
  spec.predicted_fraction = cfg.predicted_fraction;
  SplitResult sr = split_full_weak(train_corpus, spec);
  write_splits(SplitsFile{cfg.data_seed, sr.full_ids, sr.weak_ids}, out_dir + "/splits.json");
  save_config(cfg, out_dir + "/config.json");

  size_t n_test = corpus.size() - sr.full_ids.size() - sr.weak_ids.size();
  std::printf("generated %zu videos under %s (full %zu, weak %zu, test %zu)\n", corpus.size(),
              out_dir.c_str(), sr.full_ids.size(), sr.weak_ids.size(), n_test);
  return 0;
}

// ---- train ------------------------------------------------------------------

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, long long seed_override,
              const std::string& mode_override) {
  ExperimentConfig cfg = load_config(config_path);
  if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
  if (!mode_override.empty()) {
    cfg.mode = mode_override;
    validate_config(cfg);
  }

  DataDir dd = load_data_dir(data_dir);
  std::vector<WindowedSample> full = windows_for(dd, cfg, Partition::Full);
  std::vector<WindowedSample> weak_pool = windows_for(dd, cfg, Partition::Weak);
  std::vector<WindowedSample> test = windows_for(dd, cfg, Partition::Test);

  TrainOptions opt = train_options_of(cfg);
  opt.out_dir = out_dir;
  TrainResult res = dispatch_train(cfg, full, weak_pool, opt);

  std::printf("trained %s: %zu full / %zu weak videos, best val MoC %s\n", res.mode_name.c_str(),
              full.size(), weak_pool.size(), format_double(res.best_val_moc).c_str());
  std::printf("weak-label substitutions %d, full-label exceptions on weak ids %d\n",
              res.substituted, res.substitution_exceptions);
  if (!test.empty()) {
    MetricReport rep = evaluate_model(res.primary, test);
    write_metric_report(rep, out_dir + "/metrics.json");
    std::printf("test MoC %s over %d videos -> %s/metrics.json\n", format_double(rep.moc).c_str(),
                rep.n_videos, out_dir.c_str());
  } else {
    log_warn("no test partition: metrics.json not written");
  }
  return 0;
}

// ---- eval ---------------------------------------------------------------------

int cmd_eval(const std::string& config_path, const std::string& data_dir,
             const std::string& checkpoint, const std::string& out_path,
             const std::string& split) {
  ExperimentConfig cfg = load_config(config_path);
  DataDir dd = load_data_dir(data_dir);
  std::vector<WindowedSample> windows = windows_for(dd, cfg, partition_of(split));
  if (windows.empty()) throw ConfigError("split \"" + split + "\" has no scoreable videos");
  LoadedModel lm = load_model_checkpoint(checkpoint);
  MetricReport rep = evaluate_model(lm.model, windows);
  write_metric_report(rep, out_path);
  std::printf("%s checkpoint on %s: MoC %s over %d videos\n", lm.kind.c_str(), split.c_str(),
              format_double(rep.moc).c_str(), rep.n_videos);
  return 0;
}

// ---- export-attention -----------------------------------------------------------

int cmd_export_attention(const std::string& config_path, const std::string& data_dir,
                         const std::string& checkpoint, const std::string& video_id,
                         const std::string& out_prefix) {
  ExperimentConfig cfg = load_config(config_path);
  DataDir dd = load_data_dir(data_dir);
  const VideoSample& v = video_by_id(dd, video_id);
  WindowedSample w = window(v, cfg.observed_fraction, cfg.predicted_fraction);

  LoadedModel lm = load_model_checkpoint(checkpoint);
  if (!lm.model.cfg.attention)
    throw CapabilityError("checkpoint " + checkpoint + " was trained with attention disabled");
  int weak = lm.kind == "conditional" ? w.weak_label : -1;
  AnticipatedSequence seq =
      anticipate(lm.model, w.observed.data(), w.observed_frames, w.horizon_fraction, weak);

  // raw: one row per decoded step, one column per observed frame
  {
    std::ofstream f(out_prefix + ".raw.csv");
    if (!f) throw IoError("can't write " + out_prefix + ".raw.csv");
    f << "step";
    for (int t = 0; t < w.observed_frames; ++t) f << ",frame_" << t;
    f << "\n";
    for (size_t m = 0; m < seq.steps.size(); ++m) {
      f << m;
      for (double a : seq.steps[m].attn) f << ',' << format_double(a);
      f << "\n";
    }
  }

  // pooled: attention mass summed over each observed ground-truth segment
  {
    std::vector<int> observed_labels(v.frame_labels.begin(),
                                     v.frame_labels.begin() + w.observed_frames);
    std::vector<ActionSegment> segs = segments_from_frames(observed_labels);
    std::ofstream f(out_prefix + ".pooled.csv");
    if (!f) throw IoError("can't write " + out_prefix + ".pooled.csv");
    f << "step";
    for (size_t s = 0; s < segs.size(); ++s) f << ",seg" << s << "_class" << segs[s].class_id;
    f << "\n";
    for (size_t m = 0; m < seq.steps.size(); ++m) {
      f << m;
      size_t t0 = 0;
      for (const auto& seg : segs) {
        size_t t1 = t0 + static_cast<size_t>(seg.duration);
        double mass = 0.0;
        for (size_t t = t0; t < t1 && t < seq.steps[m].attn.size(); ++t)
          mass += seq.steps[m].attn[t];
        f << ',' << format_double(mass);
        t0 = t1;
      }
      f << "\n";
    }
  }
  std::printf("wrote %s.raw.csv and %s.pooled.csv (%zu steps x %d frames)\n", out_prefix.c_str(),
              out_prefix.c_str(), seq.steps.size(), w.observed_frames);
  return 0;
}

// ---- export-segments -------------------------------------------------------------

int cmd_export_segments(const std::string& config_path, const std::string& data_dir,
                        const std::string& checkpoint, const std::string& video_id,
                        const std::string& out_path) {
  ExperimentConfig cfg = load_config(config_path);
  DataDir dd = load_data_dir(data_dir);
  const VideoSample& v = video_by_id(dd, video_id);
  WindowedSample w = window(v, cfg.observed_fraction, cfg.predicted_fraction);

  LoadedModel lm = load_model_checkpoint(checkpoint);
  int weak = lm.kind == "conditional" ? w.weak_label : -1;
  AnticipatedSequence seq =
      anticipate(lm.model, w.observed.data(), w.observed_frames, w.horizon_fraction, weak);
  std::vector<ActionSegment> pred = to_segments(seq);

  std::ofstream f(out_path);
  if (!f) throw IoError("can't write " + out_path);
  f << "track,index,class_id,duration\n";
  for (size_t i = 0; i < w.target_segments.size(); ++i)
    f << "gt," << i << ',' << w.target_segments[i].class_id << ','
      << format_double(w.target_segments[i].duration) << "\n";
  for (size_t i = 0; i < pred.size(); ++i)
    f << "pred," << i << ',' << pred[i].class_id << ',' << format_double(pred[i].duration) << "\n";
  std::printf("wrote %s (%zu gt, %zu predicted segments)\n", out_path.c_str(),
              w.target_segments.size(), pred.size());
  return 0;
}

// ---- sweeps -------------------------------------------------------------------

struct InMemoryData {
  std::vector<VideoSample> train_corpus;
  std::vector<WindowedSample> train_windows;  // every windowable train video
  std::vector<WindowedSample> test_windows;
};

InMemoryData make_in_memory(const ExperimentConfig& cfg) {
  GrammarConfig g = grammar_of(cfg);
  std::vector<VideoSample> corpus = generate_corpus(g, cfg.n_videos, cfg.data_seed);
  std::vector<std::string> all_ids;
  for (const auto& v : corpus) all_ids.push_back(v.id);
  std::vector<std::string> train_ids =
      cfg.train_fraction >= 1.0 ? all_ids
                                : pick_ids(all_ids, cfg.train_fraction, cfg.data_seed, "train");
  std::set<std::string> train_set(train_ids.begin(), train_ids.end());

  InMemoryData d;
  for (auto& v : corpus) {
    bool is_train = train_set.count(v.id) != 0;
    try {
      WindowedSample w = window(v, cfg.observed_fraction, cfg.predicted_fraction);
      (is_train ? d.train_windows : d.test_windows).push_back(std::move(w));
    } catch (const DegenerateSampleError& e) {
      log_warn(std::string("skipping ") + v.id + ": " + e.what());
      continue;
    }
    if (is_train) d.train_corpus.push_back(std::move(v));
  }
  return d;
}

double train_and_score(const ExperimentConfig& cfg, const InMemoryData& d) {
  SplitResult sr = split_full_weak(d.train_windows, cfg.full_fraction, cfg.data_seed);
  TrainOptions opt = train_options_of(cfg);
  std::vector<WindowedSample> weak_pool;
  std::set<std::string> weak_set(sr.weak_ids.begin(), sr.weak_ids.end());
  for (const auto& w : d.train_windows)
    if (weak_set.count(w.id)) weak_pool.push_back(w);
  TrainResult res = dispatch_train(cfg, sr.full, weak_pool, opt);
  return evaluate_model(res.primary, d.test_windows).moc;
}

int cmd_sweep_split(const std::string& config_path, const std::string& out_path,
                    std::vector<double> fractions) {
  ExperimentConfig cfg = load_config(config_path);
  if (fractions.empty()) fractions = {0.05, 0.10, 0.15, 0.25, 0.40};
  for (double f : fractions)
    if (!(f > 0.0) || f >= 1.0)
      throw ConfigError("sweep-split: fractions must lie in (0, 1)");
  InMemoryData d = make_in_memory(cfg);
  if (d.test_windows.empty())
    throw ConfigError("sweep-split: no test partition (lower data.train_fraction)");

  std::ofstream f(out_path);
  if (!f) throw IoError("can't write " + out_path);
  f << "full_fraction,mode,n_full,n_weak,moc\n";
  for (double frac : fractions) {
    ExperimentConfig c2 = cfg;
    c2.full_fraction = frac;
    SplitResult sr = split_full_weak(d.train_windows, frac, cfg.data_seed);
    double moc = train_and_score(c2, d);
    f << format_double(frac) << ',' << cfg.mode << ',' << sr.full_ids.size() << ','
      << sr.weak_ids.size() << ',' << format_double(moc) << "\n";
    std::printf("full_fraction %s: MoC %s\n", format_double(frac).c_str(),
                format_double(moc).c_str());
  }
  // reference row: every training video fully supervised
  {
    TrainOptions opt = train_options_of(cfg);
    TrainResult res = train_baseline(2, d.train_windows, {}, opt);
    double moc = evaluate_model(res.primary, d.test_windows).moc;
    f << format_double(1.0) << ",supervised," << d.train_windows.size() << ",0,"
      << format_double(moc) << "\n";
    std::printf("full_fraction 1 (supervised reference): MoC %s\n", format_double(moc).c_str());
  }
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

int cmd_sweep_seeds(const std::string& config_path, const std::string& out_path, int n_seeds) {
  ExperimentConfig cfg = load_config(config_path);
  if (n_seeds < 2) throw ConfigError("sweep-seeds: need at least 2 seeds");
  InMemoryData d = make_in_memory(cfg);
  if (d.test_windows.empty())
    throw ConfigError("sweep-seeds: no test partition (lower data.train_fraction)");

  std::ofstream f(out_path);
  if (!f) throw IoError("can't write " + out_path);
  f << "label,seed,moc,stddev\n";
  std::vector<double> mocs;
  for (int i = 0; i < n_seeds; ++i) {
    ExperimentConfig c2 = cfg;
    c2.seed = cfg.seed + static_cast<uint64_t>(i);
    double moc = train_and_score(c2, d);
    mocs.push_back(moc);
    f << "seed," << c2.seed << ',' << format_double(moc) << ",0\n";
    std::printf("seed %llu: MoC %s\n", static_cast<unsigned long long>(c2.seed),
                format_double(moc).c_str());
  }
  SweepStats st = seed_sweep(mocs);
  f << "summary,-1," << format_double(st.mean) << ',' << format_double(st.stddev) << "\n";
  std::printf("mean MoC %s, stddev %s over %d seeds -> %s\n", format_double(st.mean).c_str(),
              format_double(st.stddev).c_str(), st.n, out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dense action anticipation workbench"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_path, checkpoint, video_id, split = "test";
  std::string mode_override;
  long long seed_override = -1;
  std::vector<double> fractions;
  int n_seeds = 5;

  CLI::App* gen = app.add_subcommand("generate", "synthesize a corpus directory");
  gen->add_option("--config", config_path, "experiment config JSON")->required();
  gen->add_option("--out", out_path, "output directory")->required();

  CLI::App* train = app.add_subcommand("train", "train a model on a generated corpus");
  train->add_option("--config", config_path, "experiment config JSON")->required();
  train->add_option("--data", data_dir, "corpus directory from `generate`")->required();
  train->add_option("--out", out_path, "run directory for checkpoints and logs")->required();
  train->add_option("--seed", seed_override, "override training.seed");
  train->add_option("--mode", mode_override, "override training.mode");

  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on a data partition");
  eval->add_option("--config", config_path, "experiment config JSON")->required();
  eval->add_option("--data", data_dir, "corpus directory")->required();
  eval->add_option("--checkpoint", checkpoint, "model checkpoint JSON")->required();
  eval->add_option("--out", out_path, "metrics JSON to write")->required();
  eval->add_option("--split", split, "full/weak/test/train/all (default test)");

  CLI::App* xattn = app.add_subcommand("export-attention", "dump attention rows for one video");
  xattn->add_option("--config", config_path, "experiment config JSON")->required();
  xattn->add_option("--data", data_dir, "corpus directory")->required();
  xattn->add_option("--checkpoint", checkpoint, "model checkpoint JSON")->required();
  xattn->add_option("--id", video_id, "video id from the manifest")->required();
  xattn->add_option("--out", out_path, "output prefix (.raw.csv / .pooled.csv)")->required();

  CLI::App* xseg = app.add_subcommand("export-segments", "dump gt and predicted segments");
  xseg->add_option("--config", config_path, "experiment config JSON")->required();
  xseg->add_option("--data", data_dir, "corpus directory")->required();
  xseg->add_option("--checkpoint", checkpoint, "model checkpoint JSON")->required();
  xseg->add_option("--id", video_id, "video id from the manifest")->required();
  xseg->add_option("--out", out_path, "output CSV path")->required();

  CLI::App* ssplit = app.add_subcommand("sweep-split", "MoC across labelled-set sizes");
  ssplit->add_option("--config", config_path, "experiment config JSON")->required();
  ssplit->add_option("--out", out_path, "output CSV path")->required();
  ssplit->add_option("--fractions", fractions, "labelled fractions to sweep");

  CLI::App* sseeds = app.add_subcommand("sweep-seeds", "MoC spread across training seeds");
  sseeds->add_option("--config", config_path, "experiment config JSON")->required();
  sseeds->add_option("--out", out_path, "output CSV path")->required();
  sseeds->add_option("--seeds", n_seeds, "number of consecutive seeds (default 5)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_generate(config_path, out_path);
    if (train->parsed()) return cmd_train(config_path, data_dir, out_path, seed_override, mode_override);
    if (eval->parsed()) return cmd_eval(config_path, data_dir, checkpoint, out_path, split);
    if (xattn->parsed())
      return cmd_export_attention(config_path, data_dir, checkpoint, video_id, out_path);
    if (xseg->parsed())
      return cmd_export_segments(config_path, data_dir, checkpoint, video_id, out_path);
    if (ssplit->parsed()) return cmd_sweep_split(config_path, out_path, fractions);
    if (sseeds->parsed()) return cmd_sweep_seeds(config_path, out_path, n_seeds);
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const Error& e) {  // config, parse, dimension, index, capability, internal
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
