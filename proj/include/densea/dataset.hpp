#pragma once

#include <string>
#include <vector>

#include "densea/common.hpp"

namespace densea {

struct ActionVocabulary {
  std::vector<std::string> classes;
  int size() const { return static_cast<int>(classes.size()); }
  int index_of(const std::string& name) const;
};

ActionVocabulary make_vocabulary(int n_classes);

// One labelled action stretch.  The duration unit is contextual: frame counts
// when derived straight from frame labels, fractions of the whole video
// inside windowed samples and model predictions.
struct ActionSegment {
  int class_id = -1;
  double duration = 0.0;
};

struct VideoSample {
  std::string id;
  int feature_dim = 0;
  double fps = 0.0;
  std::vector<double> features;  // frames x feature_dim, row-major
  std::vector<int> frame_labels;
  int frames() const { return static_cast<int>(frame_labels.size()); }
};

// run-length encoding of frame labels; durations are frame counts
std::vector<ActionSegment> segments_from_frames(const std::vector<int>& labels);

// A training/eval window: features up to the observation boundary plus the
// dense future annotation over the horizon.  Durations in target_segments are
// fractions of the whole video and sum exactly to horizon_fraction.
struct WindowedSample {
  std::string id;
  int feature_dim = 0;
  std::vector<double> observed;  // observed_frames x feature_dim
  int observed_frames = 0;
  std::vector<ActionSegment> target_segments;
  std::vector<int> horizon_labels;  // per-frame ground truth over the horizon
  int weak_label = -1;              // class of the first horizon frame
  double horizon_fraction = 0.0;
  int horizon_frames = 0;
  int total_frames = 0;
};

// The weakly-labelled counterpart: future annotation is structurally absent,
// only the first upcoming class survives.
struct WeakSample {
  std::string id;
  int feature_dim = 0;
  std::vector<double> observed;
  int observed_frames = 0;
  int weak_label = -1;
  double horizon_fraction = 0.0;
  int horizon_frames = 0;
  int total_frames = 0;
};

WeakSample weaken(const WindowedSample& s);

// Cuts the window for observed fraction X and anticipation fraction Y.
// Boundaries snap to the frame grid: T = floor(X*frames), horizon end
// floor((X+Y)*frames); horizon_fraction is the realized (end-T)/frames.
WindowedSample window(const VideoSample& v, double observed_fraction, double predicted_fraction);

// ---- synthetic grammar ----------------------------------------------------

struct GrammarConfig {
  int n_classes = 10;
  int feature_dim = 64;
  double fps = 2.0;
  int min_segments = 8;
  int max_segments = 12;
  std::vector<double> transition;     // K x K, rows on the simplex, zero diagonal
  std::vector<double> initial;        // K, simplex
  std::vector<double> duration_mean;  // seconds, per class
  std::vector<double> duration_std;   // seconds, per class
  // optional K x K multiplier on the mean: current segment's duration scaled
  // by prev_scale[prev][cur]; empty disables the dependence
  std::vector<double> prev_scale;
  double duration_min_s = 1.5;
  double duration_max_s = 40.0;
  double noise_sigma = 0.5;
  bool oracle_features = false;        // one-hot class indicator instead of noisy centroids
  std::vector<double> centroids;       // K x feature_dim unit rows; filled by make_grammar
};

// Deterministic default grammar: ring-dominant successor transitions, class-
// dependent mean durations, unit-norm gaussian centroids drawn from the seed.
GrammarConfig make_grammar(int n_classes, int feature_dim, double fps, double noise_sigma,
                           bool oracle_features, bool duration_dependence, uint64_t seed);

void validate_grammar(const GrammarConfig& g);

std::vector<VideoSample> generate_corpus(const GrammarConfig& g, int n_videos, uint64_t seed);

// ---- splits ---------------------------------------------------------------

struct SplitSpec {
  double full_fraction = 0.15;
  uint64_t seed = 0;
  double observed_fraction = 0.3;
  double predicted_fraction = 0.2;
};

struct SplitResult {
  std::vector<WindowedSample> full;
  std::vector<WeakSample> weak;
  std::vector<std::string> full_ids;
  std::vector<std::string> weak_ids;
};

// Deterministic in the sample *set* (ids are sorted before shuffling), so the
// same seed gives the same split regardless of input order.  |full| =
// round(full_fraction * N); rounding to 0 or N is a configuration error.
SplitResult split_full_weak(const std::vector<WindowedSample>& windows, double full_fraction,
                            uint64_t seed);

// Windows the corpus (skipping degenerate samples with a log line) and splits.
SplitResult split_full_weak(const std::vector<VideoSample>& corpus, const SplitSpec& spec);

// Generic deterministic id partition (used for train/test).  Returns the
// selected ids (floor(fraction*n), at least 1, at most n-1).
std::vector<std::string> pick_ids(const std::vector<std::string>& ids, double fraction,
                                  uint64_t seed, const std::string& tag);

// ---- file formats -----------------------------------------------------------

// Text feature file: `frames=T dim=D fps=F classes=K`, then T feature rows,
// then one line of T frame labels.
void export_features(const VideoSample& v, int n_classes, const std::string& path);

struct IngestResult {
  VideoSample sample;
  int n_classes = 0;
};
IngestResult ingest_features(const std::string& path);

struct ManifestEntry {
  std::string id;
  std::string path;
};
void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);
std::vector<ManifestEntry> read_manifest(const std::string& path);

struct SplitsFile {
  uint64_t seed = 0;
  std::vector<std::string> full_ids;
  std::vector<std::string> weak_ids;
};
void write_splits(const SplitsFile& s, const std::string& path);
SplitsFile read_splits(const std::string& path);

}  // namespace densea
