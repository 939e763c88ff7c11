#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "densea/backbone.hpp"
#include "densea/dataset.hpp"

namespace densea {

// Renders a segment list onto a fixed frame grid.  Each segment's frame
// quota is its duration share of the total; fractional quotas are settled by
// largest remainder so the frame count is hit exactly.
std::vector<int> expand_to_frames(const std::vector<ActionSegment>& segments, int n_frames);

// Predicted segments of a decoded rollout: argmax class per step.
std::vector<ActionSegment> to_segments(const AnticipatedSequence& seq);

// Frame accuracy per class, averaged over the classes present in the ground
// truth, for one label sequence pair.
double mean_over_classes(const std::vector<int>& gt, const std::vector<int>& pred);

// The dataset-level version pools each class's frame counts across all pairs
// before averaging, so rare classes are not drowned out video by video.
class MocAccumulator {
 public:
  void add(const std::vector<int>& gt, const std::vector<int>& pred);
  double moc() const;
  long frames() const { return frames_; }
  int pairs() const { return pairs_; }

 private:
  std::map<int, std::pair<long, long>> per_class_;  // class -> (correct, total)
  long frames_ = 0;
  int pairs_ = 0;
};

// Step-m class accuracy over the videos that have at least m future steps; a
// prediction that ran out of steps counts as wrong.
struct PerStepAccuracy {
  std::vector<double> accuracy;
  std::vector<int> support;  // videos with >= m ground-truth steps
};

PerStepAccuracy per_step_accuracy(
    const std::vector<std::pair<std::vector<int>, std::vector<int>>>& gt_pred_classes,
    int max_steps);

// Mean and sample standard deviation over per-seed scores.
struct SweepStats {
  double mean = 0.0;
  double stddev = 0.0;
  int n = 0;
};

SweepStats seed_sweep(const std::vector<double>& values);

// ---- whole-split evaluation -------------------------------------------------

struct MetricReport {
  int n_videos = 0;
  long frames_scored = 0;
  double moc = 0.0;
  PerStepAccuracy per_step;
};

// Anticipates every window with the model and scores it against the labels.
// Conditional models are given the window's weak label (their rollout is not
// defined without one); primary models run unconditioned.
MetricReport evaluate_model(const Model& m, const std::vector<WindowedSample>& windows);

void write_metric_report(const MetricReport& r, const std::string& path);
MetricReport read_metric_report(const std::string& path);

}  // namespace densea
