#include "densea/losses.hpp"

#include <algorithm>

namespace densea {

namespace {

constexpr const char* kTermNames[] = {"label_full",      "label_weak_c1",
                                      "pseudo_class",    "pseudo_duration",
                                      "refined_supervised", "attn_reg"};

NodeId chain_add(Tape& t, NodeId acc, NodeId v) { return acc == kNoNode ? v : t.add(acc, v); }

// CE of the step's class head plus squared error of its duration against one
// supervised target
NodeId supervised_step_term(Tape& t, const Mat& dist, NodeId duration,
                            const SupervisedTarget& tgt, double floor) {
  if (tgt.class_id < 0 || tgt.class_id >= dist.cols)
    throw IndexError("loss: target class out of range");
  return t.add(cross_entropy(t, dist, tgt.class_id, floor), mse_c(t, duration, tgt.duration));
}

}  // namespace

const std::vector<std::string>& loss_term_names() {
  static const std::vector<std::string> names(std::begin(kTermNames), std::end(kTermNames));
  return names;
}

LossBreakdown batch_loss_graph(Tape& t, const std::vector<VideoLossSpec>& batch,
                               const LossOptions& opt) {
  if (batch.empty()) throw ConfigError("loss: empty batch");

  // per-term running sum and contributing-video count
  NodeId sums[6] = {kNoNode, kNoNode, kNoNode, kNoNode, kNoNode, kNoNode};
  int videos[6] = {0, 0, 0, 0, 0, 0};

  for (const VideoLossSpec& v : batch) {
    if (v.steps.empty()) throw DimensionError("loss: video without rollout steps");

    if (opt.label_full && !v.gt.empty()) {
      if (v.steps.size() > v.gt.size())
        throw DimensionError("loss: more rollout steps than supervised targets");
      NodeId acc = kNoNode;
      for (size_t m = 0; m < v.steps.size(); ++m)
        acc = chain_add(t, acc,
                        supervised_step_term(t, v.steps[m].class_dist, v.steps[m].duration,
                                             v.gt[m], opt.prob_floor));
      sums[0] = chain_add(t, sums[0], acc);
      ++videos[0];
    }

    if (opt.weak_c1 && v.weak_label >= 0) {
      if (v.weak_label >= v.steps[0].class_dist.cols)
        throw IndexError("loss: weak label out of range");
      sums[1] = chain_add(t, sums[1],
                          cross_entropy(t, v.steps[0].class_dist, v.weak_label, opt.prob_floor));
      ++videos[1];
    }

    if (opt.pseudo && !v.pseudo_targets.empty()) {
      if (v.pseudo_targets.size() != v.steps.size())
        throw DimensionError("loss: pseudo targets not aligned with the rollout");
      // the first step's class is already covered by the weak label itself;
      // classes start at step 2, durations at step 1
      NodeId cls = kNoNode;
      for (size_t m = 1; m < v.steps.size(); ++m) {
        const std::vector<double>& q = v.pseudo_targets[m].class_dist;
        if (static_cast<int>(q.size()) != v.steps[m].class_dist.cols)
          throw DimensionError("loss: pseudo target width mismatch");
        cls = chain_add(t, cls,
                        soft_cross_entropy(t, v.steps[m].class_dist, q.data(), opt.prob_floor));
      }
      if (cls != kNoNode) {
        sums[2] = chain_add(t, sums[2], cls);
        ++videos[2];
      }
      NodeId dur = kNoNode;
      for (size_t m = 0; m < v.steps.size(); ++m)
        dur = chain_add(t, dur, mse_c(t, v.steps[m].duration, v.pseudo_targets[m].duration));
      sums[3] = chain_add(t, sums[3], dur);
      ++videos[3];
    }

    if (opt.refined_supervised && !v.refined.empty()) {
      NodeId acc = kNoNode;
      if (!v.gt.empty()) {
        if (v.refined.size() > v.gt.size())
          throw DimensionError("loss: more refined steps than supervised targets");
        for (size_t m = 0; m < v.refined.size(); ++m)
          acc = chain_add(t, acc,
                          supervised_step_term(t, v.refined[m].dist, v.refined[m].duration,
                                               v.gt[m], opt.prob_floor));
      } else if (!v.refined_targets.empty()) {
        // keeps the refined class distributions consistent with a fixed
        // reference where no labels exist.  The reference is the target and the
        // refined step the prediction, so this cannot be zeroed by dragging a
        // target onto a sharpening prediction.  Durations are left out: they
        // carry no domain gap (the labeled pool spans the same duration range),
        // so their supervised anchor suffices, and a consistency pull would
        // only leak the reference's weaker duration estimates into the refiner.
        if (v.refined.size() != v.refined_targets.size())
          throw DimensionError("loss: refined steps not aligned with their targets");
        for (size_t m = 0; m < v.refined.size(); ++m) {
          const std::vector<double>& q = v.refined_targets[m].class_dist;
          if (static_cast<int>(q.size()) != v.refined[m].dist.cols)
            throw DimensionError("loss: refined target width mismatch");
          acc = chain_add(t, acc,
                          soft_cross_entropy(t, v.refined[m].dist, q.data(), opt.prob_floor));
        }
      } else {
        throw DimensionError("loss: refined steps without supervised targets");
      }
      sums[4] = chain_add(t, sums[4], acc);
      ++videos[4];
    }

    if (opt.attn_reg && !v.cond_attn.empty() && !v.steps[0].attn.empty()) {
      if (v.cond_attn.size() < v.steps.size())
        throw DimensionError("loss: conditional attention rows missing for some steps");
      NodeId acc = kNoNode;
      for (size_t m = 0; m < v.steps.size(); ++m) {
        const Mat& a = v.steps[m].attn;
        const std::vector<double>& c = v.cond_attn[m];
        if (static_cast<int>(c.size()) != a.cols)
          throw DimensionError("loss: attention row lengths differ");
        for (int f = 0; f < a.cols; ++f)
          acc = chain_add(t, acc, mse_c(t, a.id(f), c[static_cast<size_t>(f)]));
      }
      sums[5] = chain_add(t, sums[5], acc);
      ++videos[5];
    }
  }

  LossBreakdown out;
  NodeId total = kNoNode;
  for (int i = 0; i < 6; ++i) {
    TermValue tv;
    tv.name = kTermNames[i];
    tv.videos = videos[i];
    if (sums[i] != kNoNode) {
      NodeId mean = t.mul_c(sums[i], 1.0 / videos[i]);
      tv.value = t.val(mean);
      total = chain_add(t, total, mean);
    }
    out.terms.push_back(std::move(tv));
  }
  if (total == kNoNode) throw ConfigError("loss: no term had any contributing video");
  out.total = total;
  out.total_value = t.val(total);
  return out;
}

LossBreakdown loss_cond_graph(Tape& t, const std::vector<VideoLossSpec>& batch) {
  LossOptions opt;
  opt.label_full = true;
  return batch_loss_graph(t, batch, opt);
}

LossBreakdown loss_prim_graph(Tape& t, const std::vector<VideoLossSpec>& batch) {
  LossOptions opt;
  opt.label_full = true;
  opt.weak_c1 = true;
  opt.pseudo = true;
  opt.attn_reg = true;
  return batch_loss_graph(t, batch, opt);
}

LossBreakdown loss_adap_graph(Tape& t, const std::vector<VideoLossSpec>& batch) {
  LossOptions opt;
  opt.label_full = true;
  opt.weak_c1 = true;
  opt.pseudo = true;
  opt.refined_supervised = true;
  opt.attn_reg = true;
  return batch_loss_graph(t, batch, opt);
}

}  // namespace densea
