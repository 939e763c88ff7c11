#include "densea/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "json.hpp"

namespace densea {

using nlohmann::json;

std::vector<int> expand_to_frames(const std::vector<ActionSegment>& segments, int n_frames) {
  if (n_frames < 0) throw ConfigError("expand_to_frames: negative frame count");
  if (n_frames == 0) return {};
  if (segments.empty()) throw DimensionError("expand_to_frames: no segments to render");
  double total = 0.0;
  for (const ActionSegment& s : segments) {
    if (s.duration < 0.0) throw NumericError("expand_to_frames: negative duration");
    total += s.duration;
  }
  if (!(total > 0.0)) throw NumericError("expand_to_frames: durations sum to zero");

  const size_t n = segments.size();
  std::vector<int> base(n);
  std::vector<std::pair<double, size_t>> rema(n);  // (-remainder, index): sort once
  int assigned = 0;
  for (size_t i = 0; i < n; ++i) {
    double quota = segments[i].duration / total * n_frames;
    base[i] = static_cast<int>(std::floor(quota));
    rema[i] = {-(quota - base[i]), i};
    assigned += base[i];
  }
  int leftover = n_frames - assigned;
  // ties break toward the earlier segment: stable order on equal remainders
  std::stable_sort(rema.begin(), rema.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (int k = 0; k < leftover; ++k) base[rema[static_cast<size_t>(k) % n].second] += 1;

  std::vector<int> frames;
  frames.reserve(static_cast<size_t>(n_frames));
  for (size_t i = 0; i < n; ++i)
    frames.insert(frames.end(), static_cast<size_t>(base[i]), segments[i].class_id);
  if (static_cast<int>(frames.size()) != n_frames)
    throw InternalError("expand_to_frames: frame budget drifted");
  return frames;
}

std::vector<ActionSegment> to_segments(const AnticipatedSequence& seq) {
  std::vector<ActionSegment> out;
  out.reserve(seq.steps.size());
  for (const StepValue& sv : seq.steps) {
    if (sv.class_dist.empty()) throw DimensionError("to_segments: empty class distribution");
    int best = 0;
    for (size_t k = 1; k < sv.class_dist.size(); ++k)
      if (sv.class_dist[k] > sv.class_dist[static_cast<size_t>(best)]) best = static_cast<int>(k);
    out.push_back(ActionSegment{best, sv.duration});
  }
  return out;
}

double mean_over_classes(const std::vector<int>& gt, const std::vector<int>& pred) {
  if (gt.size() != pred.size()) throw DimensionError("mean_over_classes: length mismatch");
  if (gt.empty()) throw ConfigError("mean_over_classes: no frames");
  std::map<int, std::pair<long, long>> per_class;
  for (size_t i = 0; i < gt.size(); ++i) {
    auto& e = per_class[gt[i]];
    e.second += 1;
    if (gt[i] == pred[i]) e.first += 1;
  }
  double acc = 0.0;
  for (const auto& [cls, counts] : per_class)
    acc += static_cast<double>(counts.first) / static_cast<double>(counts.second);
  return acc / static_cast<double>(per_class.size());
}

void MocAccumulator::add(const std::vector<int>& gt, const std::vector<int>& pred) {
  if (gt.size() != pred.size()) throw DimensionError("moc: length mismatch");
  for (size_t i = 0; i < gt.size(); ++i) {
    auto& e = per_class_[gt[i]];
    e.second += 1;
    if (gt[i] == pred[i]) e.first += 1;
  }
  frames_ += static_cast<long>(gt.size());
  pairs_ += 1;
}

double MocAccumulator::moc() const {
  if (per_class_.empty()) throw ConfigError("moc: nothing accumulated");
  double acc = 0.0;
  int classes = 0;
  for (const auto& [cls, counts] : per_class_) {
    if (counts.second == 0) continue;
    acc += static_cast<double>(counts.first) / static_cast<double>(counts.second);
    ++classes;
  }
  return acc / static_cast<double>(classes);
}

PerStepAccuracy per_step_accuracy(
    const std::vector<std::pair<std::vector<int>, std::vector<int>>>& gt_pred_classes,
    int max_steps) {
  if (max_steps < 1) throw ConfigError("per_step_accuracy: max_steps must be >= 1");
  PerStepAccuracy out;
  for (int m = 0; m < max_steps; ++m) {
    int denom = 0, num = 0;
    for (const auto& [gt, pred] : gt_pred_classes) {
      if (static_cast<int>(gt.size()) <= m) continue;
      ++denom;
      if (static_cast<int>(pred.size()) > m && pred[static_cast<size_t>(m)] == gt[static_cast<size_t>(m)]) ++num;
    }
    if (denom == 0) break;  // nothing reaches this step; the table ends here
    out.accuracy.push_back(static_cast<double>(num) / static_cast<double>(denom));
    out.support.push_back(denom);
  }
  return out;
}

SweepStats seed_sweep(const std::vector<double>& values) {
  if (values.size() < 2) throw ConfigError("seed_sweep: need at least two scores");
  SweepStats st;
  st.n = static_cast<int>(values.size());
  st.mean = std::accumulate(values.begin(), values.end(), 0.0) / st.n;
  double ss = 0.0;
  for (double v : values) ss += (v - st.mean) * (v - st.mean);
  st.stddev = std::sqrt(ss / (st.n - 1));
  return st;
}

MetricReport evaluate_model(const Model& m, const std::vector<WindowedSample>& windows) {
  if (windows.empty()) throw ConfigError("evaluate: no windows to score");
  MocAccumulator acc;
  std::vector<std::pair<std::vector<int>, std::vector<int>>> step_classes;
  for (const WindowedSample& w : windows) {
    if (w.feature_dim != m.cfg.feature_dim)
      throw DimensionError("evaluate: feature width of '" + w.id + "' does not match the model");
    int weak = m.cfg.conditional ? w.weak_label : -1;
    AnticipatedSequence seq =
        anticipate(m, w.observed.data(), w.observed_frames, w.horizon_fraction, weak);
    std::vector<int> pred_frames = expand_to_frames(to_segments(seq), w.horizon_frames);
    acc.add(w.horizon_labels, pred_frames);

    std::vector<int> gt_steps, pred_steps;
    for (const ActionSegment& s : w.target_segments) gt_steps.push_back(s.class_id);
    for (const ActionSegment& s : to_segments(seq)) pred_steps.push_back(s.class_id);
    step_classes.emplace_back(std::move(gt_steps), std::move(pred_steps));
  }
  MetricReport r;
  r.n_videos = static_cast<int>(windows.size());
  r.frames_scored = acc.frames();
  r.moc = acc.moc();
  r.per_step = per_step_accuracy(step_classes, m.cfg.max_steps);
  return r;
}

void write_metric_report(const MetricReport& r, const std::string& path) {
  json j;
  j["n_videos"] = r.n_videos;
  j["frames_scored"] = r.frames_scored;
  j["moc"] = r.moc;
  j["per_step_accuracy"] = r.per_step.accuracy;
  j["per_step_support"] = r.per_step.support;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open metric report for writing: " + path);
  out << j.dump(1) << "\n";
  if (!out) throw IoError("failed writing metric report: " + path);
}

MetricReport read_metric_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metric report: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  MetricReport r;
  try {
    r.n_videos = j.at("n_videos").get<int>();
    r.frames_scored = j.at("frames_scored").get<long>();
    r.moc = j.at("moc").get<double>();
    r.per_step.accuracy = j.at("per_step_accuracy").get<std::vector<double>>();
    r.per_step.support = j.at("per_step_support").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw ParseError(path + ": bad metric report: " + e.what());
  }
  return r;
}

}  // namespace densea
