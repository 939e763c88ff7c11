#include "densea/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace densea {

using nlohmann::json;

int ActionVocabulary::index_of(const std::string& name) const {
  for (size_t i = 0; i < classes.size(); ++i)
    if (classes[i] == name) return static_cast<int>(i);
  throw IndexError("vocabulary: unknown class '" + name + "'");
}

ActionVocabulary make_vocabulary(int n_classes) {
  if (n_classes < 2) throw ConfigError("vocabulary: need at least 2 classes");
  ActionVocabulary v;
  for (int i = 0; i < n_classes; ++i) v.classes.push_back("class_" + std::to_string(i));
  return v;
}

std::vector<ActionSegment> segments_from_frames(const std::vector<int>& labels) {
  std::vector<ActionSegment> out;
  for (int lab : labels) {
    if (!out.empty() && out.back().class_id == lab)
      out.back().duration += 1.0;
    else
      out.push_back({lab, 1.0});
  }
  return out;
}

WeakSample weaken(const WindowedSample& s) {
  WeakSample w;
  w.id = s.id;
  w.feature_dim = s.feature_dim;
  w.observed = s.observed;
  w.observed_frames = s.observed_frames;
  w.weak_label = s.weak_label;
  w.horizon_fraction = s.horizon_fraction;
  w.horizon_frames = s.horizon_frames;
  w.total_frames = s.total_frames;
  return w;
}

WindowedSample window(const VideoSample& v, double observed_fraction, double predicted_fraction) {
  if (!(observed_fraction > 0.0) || !(predicted_fraction > 0.0) ||
      observed_fraction + predicted_fraction > 1.0 + 1e-12)
    throw ConfigError("window: fractions must be positive with X+Y <= 1");
  const int total = v.frames();
  if (total <= 0) throw DegenerateSampleError("window: video '" + v.id + "' has no frames");
  const int t_obs = static_cast<int>(std::floor(observed_fraction * total));
  int t_end = static_cast<int>(std::floor((observed_fraction + predicted_fraction) * total));
  if (t_end > total) t_end = total;
  if (t_obs < 1)
    throw DegenerateSampleError("window: video '" + v.id + "' too short for observed fraction");
  if (t_end <= t_obs)
    throw DegenerateSampleError("window: video '" + v.id + "' yields an empty horizon");

  WindowedSample w;
  w.id = v.id;
  w.feature_dim = v.feature_dim;
  w.observed.assign(v.features.begin(), v.features.begin() + static_cast<long>(t_obs) * v.feature_dim);
  w.observed_frames = t_obs;
  w.total_frames = total;
  w.horizon_frames = t_end - t_obs;
  w.horizon_fraction = static_cast<double>(t_end - t_obs) / total;
  w.horizon_labels.assign(v.frame_labels.begin() + t_obs, v.frame_labels.begin() + t_end);
  w.weak_label = w.horizon_labels.front();
  w.target_segments = segments_from_frames(w.horizon_labels);
  for (ActionSegment& s : w.target_segments) s.duration /= total;  // frames -> fraction of video
  return w;
}

// ---- grammar ---------------------------------------------------------------

void validate_grammar(const GrammarConfig& g) {
  const int k = g.n_classes;
  if (k < 2) throw ConfigError("grammar: need at least 2 classes");
  if (g.feature_dim < 1) throw ConfigError("grammar: feature_dim must be positive");
  if (g.fps <= 0) throw ConfigError("grammar: fps must be positive");
  if (g.min_segments < 1 || g.max_segments < g.min_segments)
    throw ConfigError("grammar: bad segment count range");
  if (static_cast<int>(g.transition.size()) != k * k)
    throw ConfigError("grammar: transition must be K x K");
  for (int r = 0; r < k; ++r) {
    double row = 0.0;
    for (int c = 0; c < k; ++c) {
      double p = g.transition[r * k + c];
      if (p < 0.0) throw ConfigError("grammar: negative transition probability");
      row += p;
    }
    if (std::fabs(row - 1.0) > 1e-9) throw ConfigError("grammar: transition row off the simplex");
    if (g.transition[r * k + r] != 0.0)
      throw ConfigError("grammar: self transitions break segment structure");
  }
  if (static_cast<int>(g.initial.size()) != k) throw ConfigError("grammar: initial must have K entries");
  if (static_cast<int>(g.duration_mean.size()) != k || static_cast<int>(g.duration_std.size()) != k)
    throw ConfigError("grammar: duration stats must have K entries");
  for (double m : g.duration_mean)
    if (m <= 0) throw ConfigError("grammar: duration means must be positive");
  if (!g.prev_scale.empty() && static_cast<int>(g.prev_scale.size()) != k * k)
    throw ConfigError("grammar: prev_scale must be empty or K x K");
  if (g.duration_min_s <= 0 || g.duration_max_s < g.duration_min_s)
    throw ConfigError("grammar: bad duration clamp range");
  if (g.noise_sigma < 0) throw ConfigError("grammar: noise_sigma must be non-negative");
  if (!g.oracle_features && static_cast<int>(g.centroids.size()) != k * g.feature_dim)
    throw ConfigError("grammar: centroids must be K x feature_dim");
  if (g.oracle_features && g.feature_dim < k)
    throw ConfigError("grammar: oracle features need feature_dim >= n_classes");
}

GrammarConfig make_grammar(int n_classes, int feature_dim, double fps, double noise_sigma,
                           bool oracle_features, bool duration_dependence, uint64_t seed) {
  GrammarConfig g;
  g.n_classes = n_classes;
  g.feature_dim = feature_dim;
  g.fps = fps;
  g.noise_sigma = noise_sigma;
  g.oracle_features = oracle_features;

  const int k = n_classes;
  g.transition.assign(static_cast<size_t>(k) * k, 0.0);
  const double dominant = 0.7;
  for (int c = 0; c < k; ++c) {
    int succ = (c + 1) % k;
    double rest = (1.0 - dominant) / (k - 2 > 0 ? k - 2 : 1);
    for (int n = 0; n < k; ++n) {
      if (n == c) continue;
      g.transition[c * k + n] = (n == succ) ? (k == 2 ? 1.0 : dominant) : rest;
    }
  }
  g.initial.assign(k, 1.0 / k);
  g.duration_mean.resize(k);
  g.duration_std.resize(k);
  for (int c = 0; c < k; ++c) {
    // distinct per-class lengths so duration is a learnable signal
    g.duration_mean[c] = 4.0 + 10.0 * c / std::max(1, k - 1);
    g.duration_std[c] = 1.0;
  }
  if (duration_dependence) {
    // current duration stretched or squeezed by what preceded it
    g.prev_scale.assign(static_cast<size_t>(k) * k, 1.0);
    for (int p = 0; p < k; ++p)
      for (int c = 0; c < k; ++c) g.prev_scale[p * k + c] = 0.5 + 0.5 * (p % 3);
  }
  if (!oracle_features) {
    Rng rng = Rng::derive(seed, "centroids");
    g.centroids.resize(static_cast<size_t>(k) * feature_dim);
    for (int c = 0; c < k; ++c) {
      double norm = 0.0;
      for (int d = 0; d < feature_dim; ++d) {
        double x = rng.normal();
        g.centroids[c * feature_dim + d] = x;
        norm += x * x;
      }
      norm = std::sqrt(norm);
      if (norm < 1e-9) norm = 1.0;
      for (int d = 0; d < feature_dim; ++d) g.centroids[c * feature_dim + d] /= norm;
    }
  }
  validate_grammar(g);
  return g;
}

std::vector<VideoSample> generate_corpus(const GrammarConfig& g, int n_videos, uint64_t seed) {
  validate_grammar(g);
  if (n_videos < 0) throw ConfigError("generate_corpus: negative video count");
  if (n_videos == 0) return {};
  const int k = g.n_classes;
  std::vector<VideoSample> out;
  out.reserve(n_videos);
  for (int v = 0; v < n_videos; ++v) {
    Rng rng = Rng::derive(seed, "video", static_cast<uint64_t>(v));
    const int n_seg = rng.uniform_int(g.min_segments, g.max_segments);

    std::vector<int> classes(n_seg);
    std::vector<int> seg_frames(n_seg);
    int prev = -1;
    for (int s = 0; s < n_seg; ++s) {
      std::vector<double> w(k);
      for (int c = 0; c < k; ++c)
        w[c] = (s == 0) ? g.initial[c] : g.transition[prev * k + c];
      int cur = rng.categorical(w);
      double mean = g.duration_mean[cur];
      if (!g.prev_scale.empty() && prev >= 0) mean *= g.prev_scale[prev * k + cur];
      double secs = rng.normal(mean, g.duration_std[cur]);
      secs = std::min(std::max(secs, g.duration_min_s), g.duration_max_s);
      seg_frames[s] = std::max(1, static_cast<int>(std::lround(secs * g.fps)));
      classes[s] = cur;
      prev = cur;
    }

    VideoSample sample;
    sample.id = "vid_" + std::to_string(v);
    sample.feature_dim = g.feature_dim;
    sample.fps = g.fps;
    int total = 0;
    for (int f : seg_frames) total += f;
    sample.frame_labels.reserve(total);
    sample.features.reserve(static_cast<size_t>(total) * g.feature_dim);
    for (int s = 0; s < n_seg; ++s) {
      for (int f = 0; f < seg_frames[s]; ++f) {
        sample.frame_labels.push_back(classes[s]);
        for (int d = 0; d < g.feature_dim; ++d) {
          double base = g.oracle_features ? (d == classes[s] ? 1.0 : 0.0)
                                          : g.centroids[classes[s] * g.feature_dim + d];
          double noise = g.noise_sigma > 0 ? rng.normal(0.0, g.noise_sigma) : 0.0;
          sample.features.push_back(base + noise);
        }
      }
    }
    out.push_back(std::move(sample));
  }
  return out;
}

// ---- splits ----------------------------------------------------------------

std::vector<std::string> pick_ids(const std::vector<std::string>& ids, double fraction,
                                  uint64_t seed, const std::string& tag) {
  if (!(fraction > 0.0) || !(fraction < 1.0))
    throw ConfigError("pick_ids: fraction must lie strictly inside (0,1)");
  std::vector<std::string> sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ConfigError("pick_ids: duplicate sample id");
  const int n = static_cast<int>(sorted.size());
  int n_pick = static_cast<int>(std::lround(fraction * n));
  n_pick = std::max(1, std::min(n - 1, n_pick));
  if (n < 2) throw ConfigError("pick_ids: need at least two samples to split");
  Rng rng = Rng::derive(seed, tag);
  rng.shuffle(sorted);
  sorted.resize(n_pick);
  std::sort(sorted.begin(), sorted.end());
  return sorted;
}

SplitResult split_full_weak(const std::vector<WindowedSample>& windows, double full_fraction,
                            uint64_t seed) {
  if (windows.size() < 2) throw ConfigError("split: need at least two samples");
  const int n = static_cast<int>(windows.size());
  const int n_full = static_cast<int>(std::lround(full_fraction * n));
  if (n_full <= 0 || n_full >= n)
    throw ConfigError("split: full_fraction leaves one side empty (|full| would be " +
                      std::to_string(n_full) + " of " + std::to_string(n) + ")");
  std::vector<std::string> ids;
  for (const WindowedSample& w : windows) ids.push_back(w.id);
  std::vector<std::string> full_ids =
      pick_ids(ids, static_cast<double>(n_full) / n, seed, "split_full");
  if (static_cast<int>(full_ids.size()) != n_full)
    throw InternalError("split: selection size drifted from the rounded target");
  std::set<std::string> full_set(full_ids.begin(), full_ids.end());

  SplitResult r;
  r.full_ids = full_ids;
  for (const WindowedSample& w : windows) {
    if (full_set.count(w.id)) {
      r.full.push_back(w);
    } else {
      r.weak.push_back(weaken(w));
      r.weak_ids.push_back(w.id);
    }
  }
  std::sort(r.weak_ids.begin(), r.weak_ids.end());
  return r;
}

SplitResult split_full_weak(const std::vector<VideoSample>& corpus, const SplitSpec& spec) {
  std::vector<WindowedSample> windows;
  for (const VideoSample& v : corpus) {
    try {
      windows.push_back(window(v, spec.observed_fraction, spec.predicted_fraction));
    } catch (const DegenerateSampleError& e) {
      log_warn(std::string("split: skipping '") + v.id + "': " + e.what());
    }
  }
  return split_full_weak(windows, spec.full_fraction, spec.seed);
}

// ---- feature files -----------------------------------------------------------

void export_features(const VideoSample& v, int n_classes, const std::string& path) {
  if (v.frames() <= 0) throw DegenerateSampleError("export: video '" + v.id + "' has no frames");
  if (static_cast<int>(v.features.size()) != v.frames() * v.feature_dim)
    throw DimensionError("export: feature buffer does not match frames x dim");
  for (int lab : v.frame_labels)
    if (lab < 0 || lab >= n_classes) throw IndexError("export: frame label out of class range");
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << "frames=" << v.frames() << " dim=" << v.feature_dim << " fps=" << format_double(v.fps)
    << " classes=" << n_classes << "\n";
  for (int t = 0; t < v.frames(); ++t) {
    for (int d = 0; d < v.feature_dim; ++d) {
      if (d) f << ' ';
      f << format_double(v.features[static_cast<size_t>(t) * v.feature_dim + d]);
    }
    f << '\n';
  }
  for (int t = 0; t < v.frames(); ++t) {
    if (t) f << ' ';
    f << v.frame_labels[t];
  }
  f << '\n';
  if (!f) throw IoError("short write to '" + path + "'");
}

namespace {

[[noreturn]] void parse_fail(const std::string& path, int line, const std::string& what) {
  throw ParseError(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

IngestResult ingest_features(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  std::string header;
  if (!std::getline(f, header)) parse_fail(path, 1, "missing header");
  long frames = -1, dim = -1, classes = -1;
  double fps = -1.0;
  {
    std::istringstream hs(header);
    std::string tok;
    while (hs >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) parse_fail(path, 1, "malformed header token '" + tok + "'");
      std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      try {
        if (key == "frames") frames = std::stol(val);
        else if (key == "dim") dim = std::stol(val);
        else if (key == "classes") classes = std::stol(val);
        else if (key == "fps") fps = std::stod(val);
        else parse_fail(path, 1, "unknown header key '" + key + "'");
      } catch (const std::invalid_argument&) {
        parse_fail(path, 1, "bad value for header key '" + key + "'");
      } catch (const std::out_of_range&) {
        parse_fail(path, 1, "value out of range for header key '" + key + "'");
      }
    }
  }
  if (frames < 1 || dim < 1 || classes < 2 || !(fps > 0))
    parse_fail(path, 1, "header must set frames>=1 dim>=1 fps>0 classes>=2");

  IngestResult r;
  r.n_classes = static_cast<int>(classes);
  VideoSample& v = r.sample;
  v.feature_dim = static_cast<int>(dim);
  v.fps = fps;
  v.features.reserve(static_cast<size_t>(frames) * dim);
  std::string line;
  for (long t = 0; t < frames; ++t) {
    if (!std::getline(f, line)) parse_fail(path, static_cast<int>(2 + t), "missing feature row");
    std::istringstream ls(line);
    double x;
    long got = 0;
    while (ls >> x) {
      if (!std::isfinite(x)) parse_fail(path, static_cast<int>(2 + t), "non-finite feature value");
      v.features.push_back(x);
      ++got;
    }
    if (!ls.eof()) parse_fail(path, static_cast<int>(2 + t), "non-numeric feature value");
    if (got != dim)
      parse_fail(path, static_cast<int>(2 + t),
                 "expected " + std::to_string(dim) + " values, got " + std::to_string(got));
  }
  if (!std::getline(f, line)) parse_fail(path, static_cast<int>(2 + frames), "missing label row");
  {
    std::istringstream ls(line);
    long lab;
    while (ls >> lab) {
      if (lab < 0 || lab >= classes)
        parse_fail(path, static_cast<int>(2 + frames), "frame label out of class range");
      v.frame_labels.push_back(static_cast<int>(lab));
    }
    if (!ls.eof()) parse_fail(path, static_cast<int>(2 + frames), "non-integer frame label");
  }
  if (static_cast<long>(v.frame_labels.size()) != frames)
    parse_fail(path, static_cast<int>(2 + frames), "label count does not match frames");
  std::string tail;
  if (std::getline(f, tail) && !tail.empty())
    parse_fail(path, static_cast<int>(3 + frames), "trailing content after label row");

  // derive id from the file name, ".features" stripped
  std::string base = path;
  auto slash = base.find_last_of('/');
  if (slash != std::string::npos) base = base.substr(slash + 1);
  auto dot = base.rfind(".features");
  if (dot != std::string::npos) base = base.substr(0, dot);
  v.id = base;
  return r;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
  json arr = json::array();
  std::set<std::string> seen;
  for (const ManifestEntry& e : entries) {
    if (!seen.insert(e.id).second) throw ConfigError("manifest: duplicate id '" + e.id + "'");
    arr.push_back({{"id", e.id}, {"path", e.path}});
  }
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << arr.dump(2) << "\n";
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  json arr;
  try {
    f >> arr;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!arr.is_array()) throw ParseError(path + ": manifest must be a JSON array");
  std::vector<ManifestEntry> out;
  std::set<std::string> seen;
  for (const json& e : arr) {
    if (!e.is_object() || !e.contains("id") || !e.contains("path") || !e["id"].is_string() ||
        !e["path"].is_string())
      throw ParseError(path + ": manifest entries need string id and path");
    ManifestEntry m{e["id"].get<std::string>(), e["path"].get<std::string>()};
    if (!seen.insert(m.id).second) throw ParseError(path + ": duplicate id '" + m.id + "'");
    out.push_back(std::move(m));
  }
  return out;
}

void write_splits(const SplitsFile& s, const std::string& path) {
  json j{{"seed", s.seed}, {"full_ids", s.full_ids}, {"weak_ids", s.weak_ids}};
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << j.dump(2) << "\n";
}

SplitsFile read_splits(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("seed") || !j.contains("full_ids") || !j.contains("weak_ids"))
    throw ParseError(path + ": splits file needs seed, full_ids, weak_ids");
  SplitsFile s;
  try {
    s.seed = j["seed"].get<uint64_t>();
    s.full_ids = j["full_ids"].get<std::vector<std::string>>();
    s.weak_ids = j["weak_ids"].get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  std::set<std::string> full(s.full_ids.begin(), s.full_ids.end());
  if (full.size() != s.full_ids.size()) throw ParseError(path + ": duplicate id in full_ids");
  for (const std::string& id : s.weak_ids)
    if (full.count(id)) throw ParseError(path + ": id '" + id + "' in both splits");
  return s;
}

}  // namespace densea
